"""Scorer descriptors and the per-item hybridization parameter."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any

import numpy as np

# Reference bi-exponential coefficients (a, b, c, d) per dataset.
REFERENCE_COEFFS = {
    "rym": (0.04, 3.31, -0.04, -12.28),
    "netflix": (0.03, 2.25, 1.75e-9, 19.78),
    "movielens": (0.03, 2.48, 4.95e-7, 14.05),
}


class Kind(str, enum.Enum):
    PBS = "PBS"
    HTS = "HTS"
    HHP = "HHP"
    OHHP = "OHHP"
    DCB = "DCB"


_REQUIRED = {
    Kind.PBS: set(),
    Kind.HTS: set(),
    Kind.HHP: {"lam"},
    Kind.OHHP: {"gamma", "k_min", "k_max"},
    Kind.DCB: {"coeffs", "k_min", "k_max"},
}
_OPTIONAL = ("lam", "gamma", "coeffs", "k_min", "k_max")


@dataclass(frozen=True)
class AlgorithmSpec:
    """Which scorer to run and with what parameters.

    ``k_min``/``k_max`` are the item-degree bounds used to normalise degrees
    for the per-item variants (OHHP uses only ``k_max``).
    """

    kind: Kind
    lam: float | None = None
    gamma: float | None = None
    coeffs: tuple[float, float, float, float] | None = None
    k_min: float | None = None
    k_max: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.coeffs is not None:
            object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
            if len(self.coeffs) != 4:
                raise ValueError("coeffs must be (a, b, c, d)")
        present = {f for f in _OPTIONAL if getattr(self, f) is not None}
        need = _REQUIRED[self.kind]
        if present != need:
            raise ValueError(
                f"{self.kind.value} takes parameters {sorted(need) or 'none'}, got {sorted(present) or 'none'}"
            )
        if self.lam is not None and not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.gamma is not None and self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if need >= {"k_min", "k_max"} and not self.k_min < self.k_max:
            raise ValueError(f"need k_min < k_max, got {self.k_min}, {self.k_max}")

    @classmethod
    def pbs(cls):
        return cls(Kind.PBS)

    @classmethod
    def hts(cls):
        return cls(Kind.HTS)

    @classmethod
    def hhp(cls, lam: float):
        return cls(Kind.HHP, lam=float(lam))

    @classmethod
    def ohhp(cls, gamma: float, graph) -> "AlgorithmSpec":
        k_min, k_max = graph.positive_item_degree_bounds()
        return cls(Kind.OHHP, gamma=float(gamma), k_min=k_min, k_max=k_max)

    @classmethod
    def dcb(cls, coeffs, graph=None, *, k_min=None, k_max=None) -> "AlgorithmSpec":
        if graph is not None:
            k_min, k_max = graph.positive_item_degree_bounds()
        return cls(Kind.DCB, coeffs=tuple(coeffs), k_min=k_min, k_max=k_max)

    @property
    def label(self) -> str:
        if self.kind is Kind.HHP:
            return f"HHP(lambda={self.lam:g})"
        if self.kind is Kind.OHHP:
            return f"OHHP(gamma={self.gamma:g})"
        return self.kind.value

    def to_dict(self) -> dict[str, Any]:
        d = {"kind": self.kind.value}
        for f in _OPTIONAL:
            v = getattr(self, f)
            if v is not None:
                d[f] = list(v) if f == "coeffs" else v
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AlgorithmSpec":
        kw = dict(d)
        if kw.get("coeffs") is not None:
            kw["coeffs"] = tuple(kw["coeffs"])
        return cls(**kw)


def item_lambdas(spec: AlgorithmSpec, degrees) -> np.ndarray:
    """Hybridization parameter for every source item, clamped to [0, 1].

    Items with zero degree get a value too; they never carry resource so it
    is irrelevant to the scores.
    """
    k = np.asarray(degrees, dtype=np.float64)
    if spec.kind is Kind.PBS:
        lam = np.ones_like(k)
    elif spec.kind is Kind.HTS:
        lam = np.zeros_like(k)
    elif spec.kind is Kind.HHP:
        lam = np.full_like(k, spec.lam)
    elif spec.kind is Kind.OHHP:
        lam = (k / spec.k_max) ** spec.gamma
    else:
        a, b, c, d = spec.coeffs
        kt = (k - spec.k_min) / (spec.k_max - spec.k_min)
        with np.errstate(over="ignore", invalid="ignore"):
            lam = a * np.exp(b * kt) + c * np.exp(d * kt)
        lam = np.nan_to_num(lam, nan=0.0, posinf=1.0, neginf=0.0)
    return np.clip(lam, 0.0, 1.0)


def per_item_lambda(spec: AlgorithmSpec, k_beta: float) -> float:
    return float(item_lambdas(spec, [k_beta])[0])
