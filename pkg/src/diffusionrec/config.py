"""Experiment configuration: INI-style ``key = value`` sections.

Example::

    [data]
    path = data/ml-100k/u.data
    format = movielens-100k
    threshold = 3

    [split]
    test_fraction = 0.1
    seeds = 1, 2, 3, 4, 5

    [algorithms]
    run = PBS, HHP, OHHP, DCB
    lambda_grid = 0:1:0.05

Grids accept comma lists or ``start:stop:step`` ranges (inclusive).
"""

from __future__ import annotations

import configparser
import hashlib
import io
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .ingest import DEFAULT_THRESHOLDS, FORMATS


class ConfigError(ValueError):
    pass


def parse_grid(text: str, cast=float) -> tuple:
    text = text.strip()
    if not text:
        return ()
    if ":" in text and "," not in text:
        start, stop, step = (float(t) for t in text.split(":"))
        if step <= 0:
            raise ConfigError(f"range step must be positive: {text!r}")
        count = int(round((stop - start) / step)) + 1
        return tuple(cast(round(start + i * step, 10)) for i in range(count)
                     if start + i * step <= stop + 1e-9)
    return tuple(cast(t.strip()) for t in text.split(",") if t.strip())


def _fmt_grid(values) -> str:
    return ", ".join(v if isinstance(v, str) else repr(v) for v in values)


@dataclass
class ExperimentConfig:
    data_path: str = "data/ml-100k/u.data"
    data_format: str = "movielens-100k"
    threshold: int | None = None
    remove_top: int = 0

    test_fraction: float = 0.1
    split_seeds: tuple[int, ...] = (1,)

    algorithms: tuple[str, ...] = ("PBS", "HHP", "OHHP", "DCB")
    hhp_lambda: str = "auto"
    ohhp_gamma: str = "auto"
    dcb_coeffs: str = "auto"
    lambda_grid: tuple[float, ...] = tuple(round(0.05 * i, 2) for i in range(21))
    gamma_grid: tuple[float, ...] = tuple(round(0.25 * i, 2) for i in range(1, 13))

    calib_seed: int = 0
    fit_starts: int = 32
    calib_L_set: tuple[int, ...] = (10, 20, 30, 40, 50)
    normalize: str = "per_L"

    L: tuple[int, ...] = (50,)
    K_cold: int = 10
    L_range: tuple[int, ...] = tuple(range(5, 101, 5))
    inter_sample: int = 0
    sample_seed: int = 0

    synth_users: int = 2000
    synth_items: int = 2000
    synth_nu: float = 3.0
    synth_mean_degree: float = 10.0
    synth_seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    synth_lambdas: tuple[float, ...] = (0.25, 0.5, 0.75)
    synth_tolerance: float = 0.15

    out_dir: str = "out"
    workers: int = 1
    dump_lists: bool = False

    # keys that never influence numeric outputs
    _RUNTIME = ("out_dir", "workers")

    @property
    def coarse_threshold(self) -> int:
        if self.threshold is not None:
            return self.threshold
        return DEFAULT_THRESHOLDS.get(self.data_format, 3)

    def validate(self, need_data: bool = True) -> "ExperimentConfig":
        if need_data and not Path(self.data_path).exists():
            raise ConfigError(f"data path {self.data_path!r} does not exist")
        if self.data_format not in FORMATS:
            raise ConfigError(f"unknown format {self.data_format!r}; choose from {sorted(FORMATS)}")
        if not self.algorithms:
            raise ConfigError("at least one algorithm is required")
        if any(L < 1 for L in self.L + self.L_range + self.calib_L_set):
            raise ConfigError("list lengths must be >= 1")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if self.normalize not in ("per_L", "joint"):
            raise ConfigError("normalize must be 'per_L' or 'joint'")
        if not self.split_seeds:
            raise ConfigError("at least one split seed is required")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def digest(self) -> str:
        """SHA-256 over every setting that can change results."""
        d = {k: v for k, v in self.to_dict().items() if k not in self._RUNTIME}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


# (section, key) -> (field, parser)
_KEYS = {
    ("data", "path"): ("data_path", str),
    ("data", "format"): ("data_format", str),
    ("data", "threshold"): ("threshold", int),
    ("data", "remove_top"): ("remove_top", int),
    ("split", "test_fraction"): ("test_fraction", float),
    ("split", "seeds"): ("split_seeds", lambda s: parse_grid(s, int)),
    ("algorithms", "run"): ("algorithms", lambda s: tuple(t.strip().upper() for t in s.split(",") if t.strip())),
    ("algorithms", "hhp_lambda"): ("hhp_lambda", str),
    ("algorithms", "ohhp_gamma"): ("ohhp_gamma", str),
    ("algorithms", "dcb_coeffs"): ("dcb_coeffs", str),
    ("algorithms", "lambda_grid"): ("lambda_grid", parse_grid),
    ("algorithms", "gamma_grid"): ("gamma_grid", parse_grid),
    ("calibration", "seed"): ("calib_seed", int),
    ("calibration", "starts"): ("fit_starts", int),
    ("calibration", "l_set"): ("calib_L_set", lambda s: parse_grid(s, int)),
    ("calibration", "normalize"): ("normalize", str),
    ("evaluation", "l"): ("L", lambda s: parse_grid(s, int)),
    ("evaluation", "k_cold"): ("K_cold", int),
    ("evaluation", "l_range"): ("L_range", lambda s: parse_grid(s, int)),
    ("evaluation", "inter_sample"): ("inter_sample", int),
    ("evaluation", "sample_seed"): ("sample_seed", int),
    ("synthetic", "users"): ("synth_users", int),
    ("synthetic", "items"): ("synth_items", int),
    ("synthetic", "nu"): ("synth_nu", float),
    ("synthetic", "mean_degree"): ("synth_mean_degree", float),
    ("synthetic", "seeds"): ("synth_seeds", lambda s: parse_grid(s, int)),
    ("synthetic", "lambdas"): ("synth_lambdas", parse_grid),
    ("synthetic", "tolerance"): ("synth_tolerance", float),
    ("output", "dir"): ("out_dir", str),
    ("output", "workers"): ("workers", int),
    ("output", "dump_lists"): ("dump_lists", lambda s: s.strip().lower() in ("1", "true", "yes", "on")),
}


def apply_setting(cfg: ExperimentConfig, section: str, key: str, value: str) -> None:
    entry = _KEYS.get((section.lower(), key.lower()))
    if entry is None:
        raise ConfigError(f"unknown setting [{section}] {key}")
    name, parse = entry
    try:
        setattr(cfg, name, parse(value))
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {value!r}: {exc}") from None


def load_config(path=None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Defaults, then the file, then ``section.key`` overrides."""
    cfg = ExperimentConfig()
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        if not parser.read(path, encoding="utf-8"):
            raise ConfigError(f"cannot read config {path!r}")
        for section in parser.sections():
            for key, value in parser.items(section):
                apply_setting(cfg, section, key, value)
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        apply_setting(cfg, section, key, value)
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    """Render ``cfg`` back into the INI layout."""
    by_field = {name: (sec, key) for (sec, key), (name, _) in _KEYS.items()}
    parser = configparser.ConfigParser()
    for f in fields(cfg):
        if f.name.startswith("_") or f.name not in by_field:
            continue
        sec, key = by_field[f.name]
        v = getattr(cfg, f.name)
        if v is None:
            continue
        if not parser.has_section(sec):
            parser.add_section(sec)
        parser.set(sec, key, _fmt_grid(v) if isinstance(v, tuple) else str(v))
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
