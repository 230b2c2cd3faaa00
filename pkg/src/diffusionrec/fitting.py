"""Levenberg-Marquardt fitting of the bi-exponential y = a e^{bx} + c e^{dx}."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .algorithms import REFERENCE_COEFFS


class FitError(RuntimeError):
    def __init__(self, msg: str, best_residual: float = float("nan")):
        super().__init__(f"{msg} (best residual {best_residual:.6g})")
        self.best_residual = best_residual


def biexp(params, x):
    a, b, c, d = params
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        return a * np.exp(b * x) + c * np.exp(d * x)


def biexp_jacobian(params, x):
    a, b, c, d = params
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        eb = np.exp(b * x)
        ed = np.exp(d * x)
        return np.column_stack([eb, a * x * eb, ed, c * x * ed])


@dataclass
class LMResult:
    params: np.ndarray
    cost: float
    iterations: int
    converged: bool
    reason: str


def levenberg_marquardt(residual: Callable, jacobian: Callable, p0: Sequence[float], *,
                        mu0: float = 1e-3, mu_factor: float = 10.0, mu_max: float = 1e8,
                        max_iter: int = 500, ftol: float = 1e-14, xtol: float = 1e-12,
                        gtol: float = 1e-14) -> LMResult:
    """Minimise ``|residual(p)|^2`` by damped Gauss-Newton.

    Damping is Marquardt's diagonal scaling; ``mu`` is multiplied by
    ``mu_factor`` after a rejected step and divided by it after an accepted
    one.  Once ``mu`` would exceed ``mu_max`` no descent step exists at this
    resolution and the current point is returned as converged.  The cost
    never increases, so the result is no worse than ``p0``.
    """
    p = np.asarray(p0, dtype=np.float64).copy()
    r = residual(p)
    cost = float(r @ r)
    if not np.isfinite(cost):
        return LMResult(p, cost, 0, False, "non-finite start")
    mu = mu0
    for it in range(1, max_iter + 1):
        J = jacobian(p)
        if not np.all(np.isfinite(J)):
            return LMResult(p, cost, it, False, "non-finite jacobian")
        g = J.T @ r
        if np.max(np.abs(g)) <= gtol:
            return LMResult(p, cost, it, True, "gradient")
        JTJ = J.T @ J
        scale = np.maximum(np.diag(JTJ), 1e-12 * max(np.max(np.diag(JTJ)), 1e-300))
        while True:
            try:
                step = np.linalg.solve(JTJ + mu * np.diag(scale), -g)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(JTJ + mu * np.diag(scale), -g, rcond=None)[0]
            p_new = p + step
            r_new = residual(p_new)
            with np.errstate(over="ignore", invalid="ignore"):
                cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                break
            mu *= mu_factor
            if mu > mu_max:
                return LMResult(p, cost, it, True, "damping saturated")
        mu = max(mu / mu_factor, 1e-15)
        small_drop = cost - cost_new <= ftol * cost
        small_step = np.linalg.norm(step) <= xtol * (np.linalg.norm(p) + xtol)
        p, r, cost = p_new, r_new, cost_new
        if small_drop or small_step or cost == 0.0:
            return LMResult(p, cost, it, True, "tolerance")
    return LMResult(p, cost, max_iter, False, "max iterations")


@dataclass
class FitResult:
    a: float
    b: float
    c: float
    d: float
    residual: float
    k_min: float | None = None
    k_max: float | None = None
    seed: int | None = None
    start: int = -1

    @property
    def coeffs(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)

    def __call__(self, x):
        return biexp(self.coeffs, x)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "d": self.d, "residual": self.residual,
                "k_min": self.k_min, "k_max": self.k_max, "seed": self.seed, "start": self.start}


def rms_residual(params, x, y) -> float:
    r = biexp(params, x) - np.asarray(y, dtype=np.float64)
    return float(np.sqrt(np.mean(r * r)))


def random_starts(count: int, seed: int) -> list[tuple[float, float, float, float]]:
    """Log-uniform magnitudes (|a|,|c| in [1e-9, 1], |b|,|d| in [0.1, 30])
    with random signs."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        amp = 10.0 ** rng.uniform(-9, 0, size=2)
        rate = 10.0 ** rng.uniform(-1, np.log10(30), size=2)
        sign = rng.choice([-1.0, 1.0], size=4)
        out.append((sign[0] * amp[0], sign[1] * rate[0], sign[2] * amp[1], sign[3] * rate[1]))
    return out


def fit_double_exponential(x, y, starts: int = 32, seed: int = 0,
                           warm_starts: Iterable[Sequence[float]] | None = None) -> FitResult:
    """Least-squares bi-exponential fit with multi-start.

    Runs Levenberg-Marquardt from the warm starts (default: the reference
    coefficient sets) followed by ``starts`` seeded random starts and keeps
    the lowest residual, earliest start winning ties.  ``residual`` is the
    RMS error.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 4:
        raise ValueError("need at least 4 points for 4 parameters")
    warm = list(REFERENCE_COEFFS.values()) if warm_starts is None else [tuple(w) for w in warm_starts]
    candidates = warm + random_starts(starts, seed)

    def residual(p):
        return biexp(p, x) - y

    def jacobian(p):
        return biexp_jacobian(p, x)

    best = None
    any_converged = False
    for idx, p0 in enumerate(candidates):
        res = levenberg_marquardt(residual, jacobian, p0)
        if not np.isfinite(res.cost):
            continue
        any_converged |= res.converged
        rms = float(np.sqrt(res.cost / x.size))
        if best is None or rms < best[0]:
            best = (rms, idx, res.params)
    if best is None or not any_converged:
        raise FitError("no start converged", best[0] if best else float("nan"))
    rms, idx, p = best
    return FitResult(*(float(v) for v in p), residual=rms, seed=seed, start=idx)
