"""Acceptance suite.

Each test carries a ``criterion`` marker; the conftest prints one
PASS/FAIL/SKIP line per criterion at the end of the session.  MovieLens
checks look for the ratings file at ``$DIFFUSIONREC_ML100K`` or
``data/ml-100k/u.data`` and skip when it is absent.
"""

import json
import os
import time

import numpy as np
import pytest

from diffusionrec import cli, metrics
from diffusionrec.algorithms import REFERENCE_COEFFS, AlgorithmSpec
from diffusionrec.calibrate import (calibrate_dcb, collapse_spread, generate_power_law_bipartite,
                                    verify_scaling_exponent)
from diffusionrec.diffusion import Propagator, RecommendationList, recommend_all, score_user
from diffusionrec.experiment import load_links
from diffusionrec.fitting import biexp, rms_residual
from diffusionrec.graph import build_graph
from diffusionrec.ingest import split
from diffusionrec.oracle import dense_transform_matrix

from conftest import random_graph

N_ORACLE_GRAPHS = 200


def oracle_graphs():
    """200 seeded graphs with m, n <= 30, density in [0.1, 0.5] and a
    non-trivial item-degree range (needed by the per-item scorers)."""
    graphs, seed = [], 0
    while len(graphs) < N_ORACLE_GRAPHS:
        g = random_graph(seed)
        seed += 1
        lo, hi = g.positive_item_degree_bounds()
        if lo < hi:
            graphs.append(g)
    return graphs


def oracle_specs(g):
    specs = [AlgorithmSpec.pbs(), AlgorithmSpec.hts()]
    specs += [AlgorithmSpec.hhp(v) for v in (0.0, 0.25, 0.5, 0.75, 1.0)]
    specs += [AlgorithmSpec.ohhp(v, g) for v in (0.5, 1.0)]
    specs.append(AlgorithmSpec.dcb(REFERENCE_COEFFS["movielens"], g))
    return specs


@pytest.fixture(scope="module")
def graphs():
    return oracle_graphs()


# --- criterion 1 ---------------------------------------------------------------


@pytest.mark.criterion(1, "oracle equivalence on 200 random graphs within 1e-10, < 1 min")
def test_oracle_equivalence(graphs, record_property):
    start = time.perf_counter()
    worst = 0.0
    checked = 0
    for g in graphs:
        A = g.dense()
        for spec in oracle_specs(g):
            W = dense_transform_matrix(g, spec)
            F = Propagator(g, spec).scores(np.arange(g.m))
            for u in range(g.m):
                expected = W @ A[u]
                for got in (score_user(g, u, spec), F[u]):
                    nz = expected != 0
                    assert np.array_equal(got[~nz], expected[~nz])
                    if nz.any():
                        worst = max(worst, float(np.max(np.abs(got[nz] - expected[nz]) / np.abs(expected[nz]))))
                checked += 1
    elapsed = time.perf_counter() - start
    record_property("detail", f"{checked} user vectors, max rel err {worst:.2e}, {elapsed:.1f}s")
    assert worst <= 1e-10
    assert elapsed < 60


# --- criterion 2 ---------------------------------------------------------------


@pytest.mark.criterion(2, "limit identities HHP(1)=PBS, HHP(0)=HTS, constant DCB=HHP")
def test_limit_identities(graphs, record_property):
    worst = 0.0
    for idx, g in enumerate(graphs):
        lo, hi = g.positive_item_degree_bounds()
        lam0 = (0.1, 0.35, 0.6, 0.9)[idx % 4]
        const = AlgorithmSpec.dcb((lam0 / 3, 0.0, 2 * lam0 / 3, 0.0), k_min=lo, k_max=hi)
        pairs = [(AlgorithmSpec.hhp(1.0), AlgorithmSpec.pbs()),
                 (AlgorithmSpec.hhp(0.0), AlgorithmSpec.hts()),
                 (const, AlgorithmSpec.hhp(lam0))]
        for a, b in pairs:
            Fa = Propagator(g, a).scores(np.arange(g.m))
            Fb = Propagator(g, b).scores(np.arange(g.m))
            worst = max(worst, float(np.max(np.abs(Fa - Fb))))
            for u in range(g.m):
                worst = max(worst, float(np.max(np.abs(score_user(g, u, a) - score_user(g, u, b)))))
    record_property("detail", f"max abs difference {worst:.2e}")
    assert worst <= 1e-12


# --- criterion 3 ---------------------------------------------------------------


@pytest.fixture(scope="module")
def movielens_run(ml100k_path, tmp_path_factory):
    out = tmp_path_factory.mktemp("ml_run")
    workers = max(4, min(8, os.cpu_count() or 1))
    argv = ["run", "--seed", "1,2,3,4,5", "--L", "50", "--algo", "PBS,HHP,OHHP,DCB",
            "--workers", str(workers), "--out", str(out),
            "--set", f"data.path={ml100k_path}", "--set", "data.format=movielens-100k",
            "--set", "data.threshold=3", "--set", "split.test_fraction=0.1"]
    start = time.perf_counter()
    rc = cli.main(argv)
    elapsed = time.perf_counter() - start
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    summary = {key.split("@")[0]: {m: v["mean"] for m, v in vals.items()}
               for key, vals in report["summary"].items()}
    return summary, report, elapsed


@pytest.mark.criterion(3, "MovieLens reproduction (5 splits, L=50): values, orderings, < 10 min")
def test_movielens_reproduction(movielens_run, record_property):
    s, report, elapsed = movielens_run
    pbs, hhp, dcb = s["PBS"], s["HHP"], s["DCB"]
    delta = report["delta"]["L=50"]["PBS"]["r"]["delta"]
    record_property("detail", (
        f"PBS r={pbs['r']:.4f} P={pbs['P']:.4f}; HHP r={hhp['r']:.4f}; DCB r={dcb['r']:.4f} "
        f"r_cold {dcb['r_cold']:.4f}<{hhp['r_cold']:.4f} P_cold {dcb['P_cold']:.2e}>{hhp['P_cold']:.2e} "
        f"D_inter {dcb['D_inter']:.4f}>{hhp['D_inter']:.4f} D_inner {dcb['D_inner']:.4f}>{hhp['D_inner']:.4f}; "
        f"delta_PBS(r)={100 * delta:.1f}%; {elapsed:.0f}s"))
    assert abs(pbs["r"] - 0.106) <= 0.010
    assert abs(pbs["P"] - 0.075) <= 0.010
    assert hhp["r"] <= 0.090
    assert dcb["r"] <= 0.100
    assert dcb["r_cold"] < hhp["r_cold"]
    assert dcb["P_cold"] > hhp["P_cold"]
    assert dcb["D_inter"] > hhp["D_inter"]
    assert dcb["D_inner"] > hhp["D_inner"]
    assert elapsed < 600


def test_movielens_table_relations(movielens_run):
    """Orderings between all four scorers at L=50, split-averaged."""
    s, _, _ = movielens_run
    assert s["HHP"]["r"] < s["DCB"]["r"] < s["PBS"]["r"]
    assert s["DCB"]["r_cold"] < s["OHHP"]["r_cold"] < s["HHP"]["r_cold"] < s["PBS"]["r_cold"]
    assert s["DCB"]["D_inter"] > s["HHP"]["D_inter"] > s["PBS"]["D_inter"]
    assert s["DCB"]["D_inner"] > s["HHP"]["D_inner"]


def test_movielens_inner_diversity_pbs(movielens_run):
    s, _, _ = movielens_run
    assert s["PBS"]["D_inner"] == pytest.approx(0.645, abs=0.01)


# --- criterion 4 ---------------------------------------------------------------


@pytest.fixture(scope="module")
def movielens_calibration(ml100k_path):
    ix = load_links(ml100k_path, "movielens-100k", 3)
    ds = split(ix.links, 0.1, 1, ix.m, ix.n)
    return calibrate_dcb(ds.train, seed=0)


@pytest.mark.criterion(4, "data collapse spread < 0.1 and fit residual <= reference coefficients")
def test_data_collapse(movielens_calibration, record_property):
    cal = movielens_calibration
    rs = cal.rescaled
    spread = collapse_spread(rs)
    ref = rms_residual(REFERENCE_COEFFS["movielens"], rs.k_tilde, rs.lam)
    record_property("detail", f"max spread {max(spread.values()):.4f} over L={sorted(spread)}; "
                              f"fit residual {cal.fit.residual:.4f} vs reference {ref:.4f}")
    assert sorted(spread) == [10, 20, 30, 40, 50]
    assert all(v < 0.1 for v in spread.values())
    assert cal.fit.residual <= ref


def test_movielens_curve_near_reference(movielens_calibration):
    x = np.linspace(0, 1, 201)
    diff = biexp(movielens_calibration.fit.coeffs, x) - biexp(REFERENCE_COEFFS["movielens"], x)
    assert np.sqrt(np.mean(diff ** 2)) < 0.15


# --- criterion 5 ---------------------------------------------------------------


@pytest.fixture(scope="module")
def synthetic_graphs():
    return [generate_power_law_bipartite(2000, 2000, 3.0, 10, seed) for seed in range(5)]


@pytest.mark.criterion(5, "scaling exponent within 0.15 of lambda on synthetic graphs")
@pytest.mark.parametrize("lam", [0.25, 0.5, 0.75])
def test_scaling_law(synthetic_graphs, lam, record_property):
    slopes = [verify_scaling_exponent(g, lam) for g in synthetic_graphs]
    record_property("detail", f"lambda {lam}: slopes {np.round(slopes, 3).tolist()}")
    assert all(abs(s - lam) <= 0.15 for s in slopes)
    assert abs(np.mean(slopes) - lam) <= 0.15


# --- criterion 6 ---------------------------------------------------------------


def _rl(user, items):
    items = np.asarray(items, dtype=np.int64)
    return RecommendationList(user, items, np.zeros(items.size))


@pytest.mark.criterion(6, "metric sanity: ranges, random baseline, hand-worked examples")
def test_metric_ranges_randomized():
    rng = np.random.default_rng(2024)
    for trial in range(60):
        g = random_graph(10_000 + trial, 30, 30)
        links = g.links()
        mask = rng.random(len(links)) < 0.2
        if not mask.any() or mask.all():
            continue
        train, probe = build_graph(links[~mask], g.m, g.n), links[mask]
        L = int(rng.integers(2, 6))
        r = metrics.ranking_score(probe, rng.random((g.m, g.n)), train)
        if r.n_links:
            assert 0 < r.r <= 1
        lists = recommend_all(train, AlgorithmSpec.hhp(float(rng.random())), L)
        assert 0 <= metrics.precision(probe, lists, L, train).P <= 1
        if sum(len(x) > 0 for x in lists) >= 2:
            assert 0 <= metrics.inter_diversity(lists, L, g.n) <= 1
            assert 0 <= metrics.inner_diversity(lists, train, L) <= 1 + 1e-12


@pytest.mark.criterion(6, "metric sanity: ranges, random baseline, hand-worked examples")
def test_random_baseline(record_property):
    rng = np.random.default_rng(7)
    train = build_graph([], 1, 100)
    probe = np.array([[0, 42]])
    vals = [metrics.ranking_score(probe, rng.random((1, 100)), train).r for _ in range(10_000)]
    record_property("detail", f"random-score r = {np.mean(vals):.4f}")
    assert abs(np.mean(vals) - 0.5) <= 0.02


@pytest.mark.criterion(6, "metric sanity: ranges, random baseline, hand-worked examples")
def test_hand_worked_examples():
    one = build_graph([], 1, 2)
    assert metrics.ranking_score(np.array([[0, 1]]), np.array([[0.0, 1.0]]), one).r == 0.5
    five = build_graph([], 1, 5)
    assert metrics.ranking_score(np.array([[0, 3]]), np.zeros((1, 5)), five).r == 0.6
    train = build_graph([(0, 4), (1, 4)], 2, 5)
    probe = np.array([[0, 0], [0, 1], [1, 2], [1, 3]])
    assert metrics.precision(probe, [_rl(0, [0, 1]), _rl(1, [2, 3])], 2, train).P == 1.0
    assert metrics.precision(probe, [_rl(0, [2, 3]), _rl(1, [0, 1])], 2, train).P == 0.0
    lists = [_rl(0, [0, 1]), _rl(1, [1, 2]), _rl(2, [2, 3])]
    assert metrics.inter_diversity(lists, 2) == pytest.approx(2 / 3, abs=1e-15)
    assert metrics.inter_diversity([_rl(u, [0, 1]) for u in range(3)], 2) == 0.0
    assert metrics.inter_diversity([_rl(u, [2 * u, 2 * u + 1]) for u in range(3)], 2) == 1.0
    g = build_graph([(0, 0), (1, 1), (2, 2), (2, 3)], 3, 4)
    assert metrics.inner_diversity([_rl(0, [0, 1])], g, 2) == 1.0
    assert metrics.inner_diversity([_rl(0, [2, 3])], g, 2) == 0.0
    assert metrics.improvement(0.5, 0.5) == 0.0
    assert round(100 * metrics.improvement(0.106, 0.091), 1) == 16.5
    assert round(100 * metrics.improvement(0.573, 0.345), 1) == 66.1
    with pytest.raises(ZeroDivisionError):
        metrics.improvement(1.0, 0.0)
    h = build_graph([(0, 0), (1, 0), (0, 1), (2, 2)], 3, 4)
    dist = metrics.recommended_degree_distribution([_rl(0, [2, 3]), _rl(1, [1, 2]), _rl(2, [0])], h)
    assert dist == {0: 1 / 5, 1: 3 / 5, 2: 1 / 5}


# --- criterion 7 ---------------------------------------------------------------


def _snapshot(directory):
    return {p.relative_to(directory).as_posix(): p.read_bytes()
            for p in sorted(directory.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def small_ratings(tmp_path_factory):
    g = generate_power_law_bipartite(300, 150, 2.5, 8, seed=11)
    rng = np.random.default_rng(11)
    path = tmp_path_factory.mktemp("det") / "ratings.data"
    with open(path, "w") as fh:
        for u, i in g.links():
            fh.write(f"{u + 1}\t{i + 1}\t{rng.integers(1, 6)}\t0\n")
    return path


@pytest.mark.criterion(7, "byte-identical outputs across re-runs and worker counts 1 and 8")
@pytest.mark.parametrize("command", ["ingest", "split", "calibrate", "run", "sweep-L", "synth-check"])
def test_determinism_every_command(command, small_ratings, tmp_path):
    base = ["--set", f"data.path={small_ratings}", "--seed", "1,2", "--set", "calibration.starts=4",
            "--set", "algorithms.lambda_grid=0:1:0.25", "--set", "calibration.l_set=5,10",
            "--set", "evaluation.l_range=5:20:5", "--set", "evaluation.l=10",
            "--set", "synthetic.users=500", "--set", "synthetic.items=500",
            "--set", "synthetic.seeds=0", "--set", "synthetic.lambdas=0.5",
            "--set", "synthetic.tolerance=0.3", "--set", "output.dump_lists=true"]
    snaps = []
    for i, workers in enumerate((1, 8, 1)):
        out = tmp_path / f"run{i}"
        assert cli.main([command, *base, "--workers", str(workers), "--out", str(out)]) == 0
        snaps.append(_snapshot(out))
    assert snaps[0] and snaps[0] == snaps[1] == snaps[2]


@pytest.mark.criterion(7, "byte-identical outputs across re-runs and worker counts 1 and 8")
def test_determinism_movielens(ml100k_path, tmp_path, record_property):
    snaps = []
    for workers in (1, 8):
        out = tmp_path / f"w{workers}"
        argv = ["run", "--seed", "1,2", "--algo", "PBS,DCB", "--workers", str(workers), "--out", str(out),
                "--set", f"data.path={ml100k_path}", "--set", "output.dump_lists=true"]
        assert cli.main(argv) == 0
        snaps.append(_snapshot(out))
    record_property("detail", f"MovieLens run: {len(snaps[0])} files identical")
    assert snaps[0] == snaps[1]
    ix = load_links(ml100k_path, "movielens-100k", 3)
    g = ix.graph()
    spec = AlgorithmSpec.dcb(REFERENCE_COEFFS["movielens"], g)
    a = recommend_all(g, spec, 50, workers=1)
    b = recommend_all(g, spec, 50, workers=8)
    assert all(x.items.tobytes() == y.items.tobytes() and x.scores.tobytes() == y.scores.tobytes()
               for x, y in zip(a, b))
