"""Unit-mass basis functions on ``(0, window]`` and their convex combinations.

Every basis is a probability density supported on ``(0, window]``, so the
weight matrix alone carries influence magnitude.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("boxcar", "raised-cosine", "truncated-exponential")


@dataclass(frozen=True)
class BasisFamily:
    """A fixed family of ``count`` bases of one ``kind``.

    ``params`` is kind-specific:

    * boxcar: ``((lo, hi), ...)`` segments inside ``[0, window]``; default
      splits the window into ``count`` equal segments.
    * truncated-exponential: decay rates, one per basis; default
      ``5/window * 2**-b``.
    * raised-cosine: unused; bumps are evenly spaced.
    """

    kind: str = "truncated-exponential"
    count: int = 1
    window: float = 48 * 3600.0
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}; expected one of {KINDS}")
        if self.count < 1:
            raise ValueError("basis count must be >= 1")
        if not (self.window > 0 and np.isfinite(self.window)):
            raise ValueError("window must be finite and > 0")
        params = tuple(self.params)
        if self.kind == "boxcar":
            if not params:
                edges = np.linspace(0.0, self.window, self.count + 1)
                params = tuple((float(edges[b]), float(edges[b + 1])) for b in range(self.count))
            params = tuple((float(lo), float(hi)) for lo, hi in params)
            if len(params) != self.count or any(not 0 <= lo < hi <= self.window for lo, hi in params):
                raise ValueError("boxcar segments must satisfy 0 <= lo < hi <= window, one per basis")
        elif self.kind == "truncated-exponential":
            if not params:
                params = tuple(5.0 / self.window * 2.0 ** -b for b in range(self.count))
            params = tuple(float(r) for r in params)
            if len(params) != self.count or any(not r > 0 for r in params):
                raise ValueError("exponential decay rates must be > 0, one per basis")
        object.__setattr__(self, "params", params)

    # vectorised evaluation: dt of shape (...) -> (..., count)

    def values(self, dt) -> np.ndarray:
        dt = np.asarray(dt, dtype=float)[..., None]
        inside = (dt > 0) & (dt <= self.window)
        if self.kind == "boxcar":
            lo, hi = np.array(self.params).T
            v = np.where((dt > lo) & (dt <= hi), 1.0 / (hi - lo), 0.0)
        elif self.kind == "truncated-exponential":
            r = np.array(self.params)
            v = r * np.exp(-r * np.clip(dt, 0, self.window)) / -np.expm1(-r * self.window)
        else:
            s, c = self._cosine_grid()
            u = np.clip((dt - c) / s, -1.0, 1.0)
            v = (1.0 + np.cos(np.pi * u)) / (2.0 * s)
        return np.where(inside, v, 0.0)

    def cumulative(self, x) -> np.ndarray:
        """Mass on ``(0, x]``, clipped to the support."""
        x = np.clip(np.asarray(x, dtype=float), 0.0, self.window)[..., None]
        if self.kind == "boxcar":
            lo, hi = np.array(self.params).T
            return np.clip((x - lo) / (hi - lo), 0.0, 1.0)
        if self.kind == "truncated-exponential":
            r = np.array(self.params)
            return np.expm1(-r * x) / np.expm1(-r * self.window)
        s, c = self._cosine_grid()
        u = np.clip((x - c) / s, -1.0, 1.0)
        return (u + 1.0 + np.sin(np.pi * u) / np.pi) / 2.0

    def integrals(self, a, c) -> np.ndarray:
        """Mass on ``(a, c]`` for each basis."""
        return self.cumulative(c) - self.cumulative(a)

    def sup_after(self, dt) -> np.ndarray:
        """Upper bound of each basis on ``[dt, window]``; 0 past the support."""
        dt = np.asarray(dt, dtype=float)[..., None]
        if self.kind == "boxcar":
            lo, hi = np.array(self.params).T
            v = np.where(dt <= hi, 1.0 / (hi - lo), 0.0)
        elif self.kind == "truncated-exponential":
            r = np.array(self.params)
            v = r * np.exp(-r * np.clip(dt, 0, self.window)) / -np.expm1(-r * self.window)
        else:
            s, c = self._cosine_grid()
            u = np.clip((dt - c) / s, -1.0, 1.0)
            v = np.where(dt <= c, 1.0 / s, (1.0 + np.cos(np.pi * u)) / (2.0 * s))
        return np.where(dt <= self.window, v, 0.0)

    def _cosine_grid(self):
        s = self.window / (self.count + 1)
        c = s * np.arange(1, self.count + 1)
        return s, c

    def to_dict(self) -> dict:
        return {"kind": self.kind, "count": self.count, "window": self.window,
                "params": [list(p) if isinstance(p, tuple) else p for p in self.params]}

    @classmethod
    def from_dict(cls, d: dict) -> "BasisFamily":
        unknown = set(d) - {"kind", "count", "window", "params"}
        if unknown:
            raise ValueError(f"unknown kernel keys {sorted(unknown)}")
        params = tuple(tuple(p) if isinstance(p, list) else p for p in d.get("params", ()))
        return cls(d.get("kind", "truncated-exponential"), int(d.get("count", 1)),
                   float(d.get("window", 48 * 3600.0)), params)


@dataclass(frozen=True)
class ImpulseCoefficients:
    """Per directed pair simplex weights over the bases, shape (K, K, B)."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 3:
            raise ValueError("impulse coefficients must have shape (K, K, B)")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("impulse coefficients must be finite and >= 0")
        total = w.sum(axis=-1, keepdims=True)
        if np.any(total <= 0):
            raise ValueError("each pair needs at least one positive coefficient")
        w = w / total
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, K: int, B: int) -> "ImpulseCoefficients":
        return cls(np.ones((K, K, B)))

    @property
    def num_processes(self) -> int:
        return self.weights.shape[0]

    @property
    def count(self) -> int:
        return self.weights.shape[2]

    def __eq__(self, other):
        return isinstance(other, ImpulseCoefficients) and np.array_equal(self.weights, other.weights)

    __hash__ = None


def _check_basis(family: BasisFamily, b: int):
    if not 0 <= b < family.count:
        raise IndexError(f"basis index {b} out of range for {family.count} bases")


def _check_pair(coeffs: ImpulseCoefficients, family: BasisFamily, pair):
    K = coeffs.num_processes
    src, dst = pair
    if not (0 <= src < K and 0 <= dst < K):
        raise IndexError(f"pair {pair} out of range for K={K}")
    if coeffs.count != family.count:
        raise ValueError("coefficient length does not match the basis count")


def basis_value(family: BasisFamily, b: int, dt):
    _check_basis(family, b)
    out = family.values(dt)[..., b]
    return float(out) if out.ndim == 0 else out


def basis_integral(family: BasisFamily, b: int, a, c):
    _check_basis(family, b)
    if np.any(np.asarray(a) > np.asarray(c)):
        raise ValueError("reversed integration interval")
    out = family.integrals(a, c)[..., b]
    return float(out) if out.ndim == 0 else out


def impulse_value(coeffs: ImpulseCoefficients, family: BasisFamily, pair, dt):
    _check_pair(coeffs, family, pair)
    out = family.values(dt) @ coeffs.weights[pair[0], pair[1]]
    return float(out) if np.ndim(out) == 0 else out


def impulse_integral(coeffs: ImpulseCoefficients, family: BasisFamily, pair, a, c):
    _check_pair(coeffs, family, pair)
    if np.any(np.asarray(a) > np.asarray(c)):
        raise ValueError("reversed integration interval")
    out = family.integrals(a, c) @ coeffs.weights[pair[0], pair[1]]
    return float(out) if np.ndim(out) == 0 else out
