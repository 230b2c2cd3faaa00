"""Command-line experiment driver.

Subcommands::

    ingest       parse + coarse-grain a rating file, write the link list and stats
    split        write train/probe splits for every split seed
    calibrate    lambda sweep, rescaling and bi-exponential fit per split
    run          evaluate the configured algorithms, metric table and relative differences
    sweep-L      diversity and recommended-degree data over a range of L
    synth-check  score/degree scaling exponent on synthetic power-law graphs

Settings come from an INI file (``--config``); the dedicated flags and
``--set section.key=value`` override it.  Outputs contain no timestamps and
embed the config digest, so a re-run with the same settings reproduces
them byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import metrics
from .algorithms import REFERENCE_COEFFS
from .calibrate import (calibrate_dcb, collapse_spread, generate_power_law_bipartite,
                        verify_scaling_exponent)
from .config import ConfigError, ExperimentConfig, dump_config, load_config
from .experiment import evaluate_lengths, load_links, resolve_specs
from .fitting import rms_residual
from .ingest import dataset_stats, split, write_links, write_split

log = logging.getLogger("diffusionrec")

# Report column order; ``higher`` marks metrics where larger is better.
COLUMNS = [("r", "r", False), ("r_cold", "r_{k<=K}", False), ("P", "P", True),
           ("P_cold", "P_{k<=K}", True), ("D_inter", "D_inter", True), ("D_inner", "D_inner", True)]


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage


@contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


# --- output helpers ---------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, NaN/inf to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def fmt_value(x: float) -> str:
    if x is None or not math.isfinite(x):
        return "nan"
    return f"{x:.4f}" if abs(x) >= 0.01 or x == 0 else f"{x:.2e}"


def _pool_map(fn, jobs, workers: int):
    """``map`` that fans out to processes; results come back in job order."""
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
        return list(ex.map(fn, *zip(*jobs)))


def _header(cfg: ExperimentConfig, command: str) -> dict:
    settings = {k: v for k, v in cfg.to_dict().items() if k not in cfg._RUNTIME}
    return {"command": command, "config": settings, "config_digest": cfg.digest()}


# --- shared pipeline pieces -------------------------------------------------


def _load(cfg: ExperimentConfig):
    with stage("ingest"):
        cfg.validate()
        return load_links(cfg.data_path, cfg.data_format, cfg.coarse_threshold, cfg.remove_top)


def _dcb_setting(cfg: ExperimentConfig):
    """``auto``, a reference data set name, ``a,b,c,d`` or a calibration JSON."""
    value = cfg.dcb_coeffs.strip()
    if value == "auto" or value in REFERENCE_COEFFS:
        return value
    if value.endswith(".json"):
        data = json.loads(Path(value).read_text())
        return tuple(data["spec"]["coeffs"])
    parts = tuple(float(t) for t in value.split(","))
    if len(parts) != 4:
        raise ConfigError(f"dcb_coeffs needs four numbers, got {value!r}")
    return parts


def _spec_kwargs(cfg: ExperimentConfig) -> dict:
    return dict(hhp_lambda=cfg.hhp_lambda, ohhp_gamma=cfg.ohhp_gamma, dcb_coeffs=_dcb_setting(cfg),
                lambda_grid=cfg.lambda_grid, gamma_grid=cfg.gamma_grid, L_set=cfg.calib_L_set,
                calib_seed=cfg.calib_seed, starts=cfg.fit_starts)


def _evaluate_job(links, m, n, cfg: ExperimentConfig, seed: int, algo: str, L_values):
    """One (split seed, algorithm) job; runs in a worker process."""
    ds = split(links, cfg.test_fraction, seed, m, n)
    specs, grid_scores, calibration = resolve_specs(ds, [algo], **_spec_kwargs(cfg))
    spec = specs[algo]
    sample = cfg.inter_sample or None
    reports, lists = evaluate_lengths(ds.train, ds.probe, spec, L_values, cfg.K_cold, sample,
                                      cfg.sample_seed, with_lists=True)
    dists = {L: metrics.recommended_degree_distribution(lists, ds.train, L) for L in L_values}
    out = {"seed": seed, "algorithm": algo, "spec": spec.to_dict(), "label": spec.label,
           "reports": [r.to_dict() for r in reports], "degree_distribution": dists,
           "grid_scores": grid_scores.get(algo, [])}
    if calibration is not None:
        out["calibration"] = calibration.fit.to_dict()
    if cfg.dump_lists:
        out["lists"] = [(rec.user, rec.items.tolist(), rec.scores.tolist()) for rec in lists]
    return out


def _run_jobs(cfg: ExperimentConfig, indexed, L_values):
    jobs = [(indexed.links, indexed.m, indexed.n, cfg, seed, algo, tuple(L_values))
            for seed in cfg.split_seeds for algo in cfg.algorithms]
    with stage("evaluate"):
        return _pool_map(_evaluate_job, jobs, cfg.workers)


def _mean_std(values):
    arr = np.asarray([np.nan if v is None else v for v in values], dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, std


# --- commands ---------------------------------------------------------------


def cmd_ingest(cfg: ExperimentConfig, out: Path) -> int:
    indexed = _load(cfg)
    with stage("write"):
        out.mkdir(parents=True, exist_ok=True)
        write_links(out / "links.tsv", indexed.links)
        (out / "users.tsv").write_text("".join(f"{k}\t{u}\n" for k, u in enumerate(indexed.user_ids)))
        (out / "items.tsv").write_text("".join(f"{k}\t{i}\n" for k, i in enumerate(indexed.item_ids)))
        stats = dataset_stats(indexed.graph())
        write_json(out / "stats.json", {**_header(cfg, "ingest"), "stats": stats})
    print(f"users {stats['m']}  items {stats['n']}  links {stats['links']}  "
          f"sparsity {100 * stats['sparsity']:.2f}%")
    return 0


def cmd_split(cfg: ExperimentConfig, out: Path) -> int:
    indexed = _load(cfg)
    with stage("split"):
        for seed in cfg.split_seeds:
            ds = split(indexed.links, cfg.test_fraction, seed, indexed.m, indexed.n)
            write_split(out / f"split-seed{seed}", ds, {"config_digest": cfg.digest()})
            print(f"seed {seed}: train {ds.train.n_links}  probe {len(ds.probe)}")
    return 0


def _calibrate_job(links, m, n, cfg: ExperimentConfig, seed: int):
    ds = split(links, cfg.test_fraction, seed, m, n)
    return calibrate_dcb(ds.train, cfg.lambda_grid, cfg.calib_L_set, seed=cfg.calib_seed,
                         starts=cfg.fit_starts, per_L=cfg.normalize == "per_L")


def cmd_calibrate(cfg: ExperimentConfig, out: Path) -> int:
    indexed = _load(cfg)
    jobs = [(indexed.links, indexed.m, indexed.n, cfg, seed) for seed in cfg.split_seeds]
    with stage("calibrate"):
        cals = _pool_map(_calibrate_job, jobs, cfg.workers)
    out.mkdir(parents=True, exist_ok=True)
    for seed, cal in zip(cfg.split_seeds, cals):
        with stage("calibrate"):
            rs = cal.rescaled
            spread = collapse_spread(rs)
            ref = rms_residual(REFERENCE_COEFFS["movielens"], rs.k_tilde, rs.lam)
        with stage("write"):
            tag = f"seed{seed}"
            write_csv(out / f"fig1_sweep_{tag}.csv", ["lambda", "L", "mean_degree"],
                      [(p.lam, p.L, p.mean_degree) for p in cal.sweep])
            write_csv(out / f"fig2_rescaled_{tag}.csv", ["L", "lambda", "k_tilde"],
                      zip(rs.L.tolist(), rs.lam.tolist(), rs.k_tilde.tolist()))
            grid = np.linspace(0.0, 1.0, 101)
            write_csv(out / f"fig2_fit_{tag}.csv", ["k_tilde", "lambda_fit"],
                      zip(grid.tolist(), cal.fit(grid).tolist()))
            write_json(out / f"calibration_{tag}.json", {
                **_header(cfg, "calibrate"), "split_seed": seed, "fit": cal.fit.to_dict(),
                "spec": cal.spec.to_dict(), "collapse_spread": spread,
                "reference_residual": {"movielens": ref}})
        print(f"seed {seed}: a={cal.fit.a:.4g} b={cal.fit.b:.4g} c={cal.fit.c:.4g} d={cal.fit.d:.4g}"
              f"  residual {cal.fit.residual:.4f} (reference {ref:.4f})"
              f"  max spread {max(spread.values()):.4f}")
    return 0


def _summaries(results, cfg, L_values):
    """Per (algorithm, L): metric -> (mean, std) over split seeds."""
    by_algo = {a: [r for r in results if r["algorithm"] == a] for a in cfg.algorithms}
    summary = {}
    for algo, runs in by_algo.items():
        for j, L in enumerate(L_values):
            reps = [r["reports"][j] for r in runs]
            summary[(algo, L)] = {key: _mean_std([rep[key] for rep in reps]) for key, _, _ in COLUMNS}
    return summary


def _delta_matrix(summary, cfg, L):
    """Relative differences against DCB, signed so positive means DCB is better."""
    if "DCB" not in cfg.algorithms:
        return {}
    ref = summary[("DCB", L)]
    out = {}
    for algo in cfg.algorithms:
        if algo == "DCB":
            continue
        row = {}
        for key, _, higher in COLUMNS:
            try:
                raw = metrics.improvement(summary[(algo, L)][key][0], ref[key][0])
            except ZeroDivisionError:
                raw = float("nan")
            row[key] = {"delta": raw, "dcb_favourable": -raw if higher else raw}
        out[algo] = row
    return out


def render_tables(summary, deltas, cfg, L_values, labels) -> str:
    k = cfg.K_cold
    heads = [h.replace("K", str(k)) for _, h, _ in COLUMNS]
    lines = []
    for L in L_values:
        lines.append(f"Accuracy and diversity, L={L}, split seeds {list(cfg.split_seeds)}")
        lines.append(f"{'algorithm':<24}" + "".join(f"{h:>20}" for h in heads))
        for algo in cfg.algorithms:
            cells = []
            for key, _, _ in COLUMNS:
                mean, std = summary[(algo, L)][key]
                cells.append(fmt_value(mean) if len(cfg.split_seeds) == 1
                             else f"{fmt_value(mean)} +- {fmt_value(std)}")
            lines.append(f"{labels[algo]:<24}" + "".join(f"{c:>20}" for c in cells))
        if deltas.get(L):
            lines.append("")
            lines.append(f"Relative difference to DCB, L={L} (positive: DCB better)")
            lines.append(f"{'delta':<24}" + "".join(f"{h:>20}" for h in heads))
            for algo, row in deltas[L].items():
                cells = [row[key]["dcb_favourable"] for key, _, _ in COLUMNS]
                lines.append(f"{algo:<24}" + "".join(
                    f"{'nan' if not math.isfinite(c) else f'{100 * c:.1f}%':>20}" for c in cells))
        lines.append("")
    return "\n".join(lines)


def cmd_run(cfg: ExperimentConfig, out: Path) -> int:
    indexed = _load(cfg)
    L_values = sorted(set(cfg.L))
    results = _run_jobs(cfg, indexed, L_values)
    with stage("report"):
        summary = _summaries(results, cfg, L_values)
        deltas = {L: _delta_matrix(summary, cfg, L) for L in L_values}
        labels = {}
        for algo in cfg.algorithms:
            names = sorted({r["label"] for r in results if r["algorithm"] == algo})
            labels[algo] = names[0] if len(names) == 1 else algo
        out.mkdir(parents=True, exist_ok=True)
        report = {**_header(cfg, "run"), "dataset": dataset_stats(indexed.graph()),
                  "runs": [{k: v for k, v in r.items() if k != "lists"} for r in results],
                  "summary": {f"{a}@L={L}": {key: {"mean": m, "std": s} for key, (m, s) in v.items()}
                              for (a, L), v in summary.items()},
                  "delta": {f"L={L}": d for L, d in deltas.items() if d}}
        write_json(out / "report.json", report)
        text = render_tables(summary, deltas, cfg, L_values, labels)
        (out / "report.txt").write_text(text)
        rows_k, rows_p = [], []
        for r in results:
            for rep in r["reports"]:
                degs = sorted(set(map(int, rep["r_k"])) | set(map(int, rep["P_k"])))
                for k in degs:
                    rows_k.append((r["algorithm"], r["seed"], rep["L"], k,
                                   rep["r_k"].get(str(k), float("nan")),
                                   rep["P_k"].get(str(k), float("nan"))))
            for L, dist in r["degree_distribution"].items():
                rows_p.extend((r["algorithm"], r["seed"], L, k, p) for k, p in sorted(dist.items()))
        write_csv(out / "fig3_accuracy_by_degree.csv",
                  ["algorithm", "seed", "L", "k", "r_k", "P_k"], rows_k)
        write_csv(out / "fig3_degree_distribution.csv", ["algorithm", "seed", "L", "k", "p"], rows_p)
        for r in results:
            if "calibration" in r:
                write_json(out / f"calibration_seed{r['seed']}.json",
                           {**_header(cfg, "run"), "split_seed": r["seed"],
                            "fit": r["calibration"], "spec": r["spec"]})
            if "lists" in r:
                with open(out / f"recs_{r['algorithm']}_seed{r['seed']}.tsv", "w",
                          encoding="utf-8", newline="\n") as fh:
                    fh.write("user\titem\tscore\trank\n")
                    for user, items, scores in r["lists"]:
                        for rank, (it, sc) in enumerate(zip(items, scores), 1):
                            fh.write(f"{indexed.user_ids[user]}\t{indexed.item_ids[it]}\t{sc!r}\t{rank}\n")
    print(text)
    return 0


def trend_violations(curve: list[tuple[int, float]], tol: float = 1e-12) -> list[int]:
    """List lengths at which ``value(L)`` rises above the previous point."""
    curve = sorted(curve)
    return [L for (_, a), (L, b) in zip(curve, curve[1:]) if b > a + tol]


def cmd_sweep_L(cfg: ExperimentConfig, out: Path) -> int:
    indexed = _load(cfg)
    L_values = sorted(set(cfg.L_range))
    results = _run_jobs(cfg, indexed, L_values)
    with stage("report"):
        out.mkdir(parents=True, exist_ok=True)
        inter, inner, dist_rows = [], [], []
        curves = {}
        for r in results:
            for rep in r["reports"]:
                inter.append((r["algorithm"], r["seed"], rep["L"], rep["D_inter"]))
                inner.append((r["algorithm"], r["seed"], rep["L"], rep["D_inner"]))
            for L in cfg.L:
                if L in r["degree_distribution"]:
                    dist_rows.extend((r["algorithm"], r["seed"], L, k, p)
                                     for k, p in sorted(r["degree_distribution"][L].items()))
        for algo in cfg.algorithms:
            curve = []
            for L in L_values:
                vals = [row[3] for row in inter if row[0] == algo and row[2] == L]
                curve.append((L, float(np.mean(vals))))
            curves[algo] = curve
        flags = {a: trend_violations(c) for a, c in curves.items()}
        write_csv(out / "fig5_inter_diversity.csv", ["algorithm", "seed", "L", "D_inter"], inter)
        write_csv(out / "fig6_inner_diversity.csv", ["algorithm", "seed", "L", "D_inner"], inner)
        write_csv(out / "fig3_degree_distribution.csv", ["algorithm", "seed", "L", "k", "p"], dist_rows)
        write_json(out / "sweep_L.json", {**_header(cfg, "sweep-L"), "D_inter_mean": curves,
                                           "D_inter_increases_at": flags})
    for algo, bad in flags.items():
        if bad:
            log.warning("%s: inter-diversity increases with L at L=%s", algo, bad)
            print(f"WARNING {algo}: D_inter not non-increasing (rises at L={bad})")
        else:
            print(f"{algo}: D_inter non-increasing over L={L_values[0]}..{L_values[-1]}")
    return 0


def _synth_job(cfg: ExperimentConfig, seed: int, lam: float) -> float:
    g = generate_power_law_bipartite(cfg.synth_users, cfg.synth_items, cfg.synth_nu,
                                     cfg.synth_mean_degree, seed)
    return verify_scaling_exponent(g, lam)


def cmd_synth_check(cfg: ExperimentConfig, out: Path) -> int:
    with stage("config"):
        cfg.validate(need_data=False)
    jobs = [(cfg, seed, lam) for lam in cfg.synth_lambdas for seed in cfg.synth_seeds]
    with stage("synth-check"):
        slopes = _pool_map(_synth_job, jobs, cfg.workers)
    summary = {}
    for lam in cfg.synth_lambdas:
        vals = [s for (_, _, l), s in zip(jobs, slopes) if l == lam]
        mean, std = _mean_std(vals)
        ok = all(abs(v - lam) <= cfg.synth_tolerance for v in vals)
        summary[repr(lam)] = {"mean_slope": mean, "std": std, "slopes": vals, "pass": ok}
        print(f"lambda {lam:g}: slope {mean:.4f} +- {std:.4f}  {'PASS' if ok else 'FAIL'}")
    with stage("write"):
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "synth_check.csv", ["lambda", "seed", "slope"],
                  [(lam, seed, s) for (_, seed, lam), s in zip(jobs, slopes)])
        write_json(out / "synth_check.json", {**_header(cfg, "synth-check"), "lambdas": summary})
    return 0 if all(v["pass"] for v in summary.values()) else 1


COMMANDS = {"ingest": cmd_ingest, "split": cmd_split, "calibrate": cmd_calibrate, "run": cmd_run,
            "sweep-L": cmd_sweep_L, "synth-check": cmd_synth_check}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffusionrec", description=__doc__.split("\n")[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment config")
    common.add_argument("--seed", help="split seed(s), comma separated")
    common.add_argument("--workers", type=int, help="process pool size")
    common.add_argument("--out", help="output directory")
    common.add_argument("--L", dest="L", help="list length(s); for sweep-L the L range")
    common.add_argument("--algo", help="algorithms, comma separated (PBS,HTS,HHP,OHHP,DCB)")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override any config key (repeatable)")
    common.add_argument("--print-config", action="store_true",
                        help="print the effective config and exit")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=COMMANDS[name].__name__.replace("cmd_", ""))
    return parser


def resolve_config(args) -> ExperimentConfig:
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep or "." not in key:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value
    flag_keys = {"seed": "split.seeds", "workers": "output.workers", "out": "output.dir",
                 "algo": "algorithms.run"}
    for flag, key in flag_keys.items():
        value = getattr(args, flag)
        if value is not None:
            overrides[key] = str(value)
    if args.L is not None:
        overrides["evaluation.l_range" if args.command == "sweep-L" else "evaluation.l"] = args.L
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with stage("config"):
            cfg = resolve_config(args)
            if cfg.workers < 1:
                raise ConfigError("workers must be >= 1")
        if args.print_config:
            sys.stdout.write(dump_config(cfg))
            return 0
        return COMMANDS[args.command](cfg, Path(cfg.out_dir))
    except StageError as exc:
        print(f"diffusionrec {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
