"""Lyapunov exponent of the hitting transform, its Legendre conjugate, front speeds.

``mu(lam)`` is the per-unit-length exponential rate of ``E exp(lam T)``:
``mu = sum_k ln rho_k / sum_k L_k`` over a long stretch of cells.  The rate
function is ``I(a) = sup_{lam <= 0} (a lam - mu(lam))`` and the front speed ``c``
solves ``c I(1/c) = f'(0)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import interpolate, optimize

from .channel import ChannelShape
from .io import csv_text
from .sturm import DomainError, ratio_chain, transfer_arrays


class GridError(RuntimeError):
    """The maximiser sits at the most negative grid point; extend the grid."""


class BracketError(RuntimeError):
    pass


def default_grid(n: int = 60, lo: float = -10.0, hi: float = -1e-4) -> np.ndarray:
    """Geometric grid from ``lo`` to ``hi`` (both < 0), plus ``lam = 0``."""
    g = -np.geomspace(-lo, -hi, n)
    return np.concatenate([g, [0.0]])


@dataclass
class SpectralCurve:
    direction: str
    lam: np.ndarray
    mu: np.ndarray
    se: np.ndarray
    mean_length: float
    cells_used: np.ndarray
    bracket: np.ndarray = field(default=None)

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if np.any(np.diff(lam) <= 0):
            raise ValueError("lambda grid must be strictly increasing")
        self._spline = None

    def spline(self):
        """Cubic interpolant of ``mu`` in ``s = sqrt(-lam)``, where ``mu`` is smooth."""
        if self._spline is None:
            s = np.sqrt(-self.lam)[::-1]
            self._spline = interpolate.CubicSpline(s, self.mu[::-1])
        return self._spline

    def __call__(self, lam):
        return self.spline()(np.sqrt(-np.asarray(lam, dtype=float)))

    def to_csv(self) -> str:
        return csv_text(["lambda", "mu", "se"],
                        [(float(a), float(b), float(c)) for a, b, c in zip(self.lam, self.mu, self.se)])


def _batch_se(logs, lengths, n_batches=20):
    n = len(logs)
    if n < 2 * n_batches:
        n_batches = max(2, n // 2)
    if n < 4:
        return 0.0
    idx = np.array_split(np.arange(n), n_batches)
    est = np.array([logs[i].sum() / lengths[i].sum() for i in idx])
    return float(est.std(ddof=1) / math.sqrt(len(idx)))


def mu_curve(shape: ChannelShape, lam_grid=None, direction: str = "+",
             n_cells: int | None = None, tol: float = 1e-12) -> SpectralCurve:
    """Sample ``mu(lam)`` on a grid of ``lam <= 0``.

    The backward recursion is run from both ends of the admissible range
    (``rho = 0`` and ``rho = 1``); the true ratios lie between the two chains.
    Cells where the chains agree to ``tol`` are used; if fewer than half agree the
    first half is used with the midpoint value, and ``bracket`` records the spread.
    """
    lam_grid = default_grid() if lam_grid is None else np.asarray(lam_grid, dtype=float)
    if np.any(lam_grid > 0):
        raise DomainError("mu is only finite for lam <= 0")
    cells = shape.side(direction)
    if n_cells is not None:
        cells = cells[:n_cells + 1]
    mus, ses, used, brackets = [], [], [], []
    for lam in lam_grid:
        if lam == 0:
            mus.append(0.0)
            ses.append(0.0)
            used.append(len(cells) - 1)
            brackets.append(0.0)
            continue
        x, y, L, _ = transfer_arrays(cells, lam)
        lo = ratio_chain(x, y, 0.0)
        hi = ratio_chain(x, y, 1.0)
        gap = np.abs(np.log(hi) - np.log(lo))
        bad = np.flatnonzero(gap > tol)
        K = int(bad[0]) if bad.size else len(y)
        spread = 0.0
        if K < len(y) // 2:
            K = len(y) // 2
            logs = 0.5 * (np.log(lo[:K]) + np.log(hi[:K]))
            spread = float((np.log(hi[:K]) - np.log(lo[:K])).sum() / L[:K].sum())
        else:
            logs = np.log(lo[:K])
        Lk = L[:K]
        mus.append(float(math.fsum(logs) / math.fsum(Lk)))
        ses.append(_batch_se(logs, Lk))
        used.append(K)
        brackets.append(spread)
    Lall = np.array([c.spine_length for c in cells])
    return SpectralCurve(direction, lam_grid, np.array(mus), np.array(ses), float(Lall.mean()),
                         np.array(used), np.array(brackets))


def brownian_curve(lam_grid=None, direction: str = "+") -> SpectralCurve:
    """Exact curve ``mu = -sqrt(-2 lam)`` of a constant-width channel."""
    lam_grid = default_grid() if lam_grid is None else np.asarray(lam_grid, dtype=float)
    mu = -np.sqrt(-2 * lam_grid)
    n = len(lam_grid)
    return SpectralCurve(direction, lam_grid, mu, np.zeros(n), 1.0, np.zeros(n, int), np.zeros(n))


@dataclass(frozen=True)
class RateValue:
    value: float
    lam_star: float
    off_grid: bool


class RateFunction:
    """Legendre conjugate ``I(a) = sup_{lam <= 0} (a lam - mu(lam))``."""

    def __init__(self, curve: SpectralCurve):
        self.curve = curve

    def __call__(self, a: float) -> float:
        return rate(self.curve, a).value

    def to_csv(self, a_values) -> str:
        rows = []
        for a in a_values:
            r = rate(self.curve, float(a))
            rows.append((float(a), r.value, r.lam_star))
        return csv_text(["a", "I", "lambda_star"], rows)


def rate(curve: SpectralCurve, a: float, strict: bool = True) -> RateValue:
    """Maximise ``a lam - mu(lam)`` over the grid, then refine on the spline.

    The maximiser is found on the grid first; the refinement uses bounded Brent
    on the neighbouring grid interval of the ``sqrt(-lam)`` spline.  When the grid
    maximiser is the most negative grid point ``GridError`` is raised (or, with
    ``strict=False``, the grid value is returned with ``off_grid`` set).
    """
    if not a > 0:
        raise DomainError("a must be > 0")
    lam = curve.lam
    vals = a * lam - curve.mu
    i = int(np.argmax(vals))
    if i == 0:
        if strict:
            raise GridError(f"sup at the most negative grid lambda {lam[0]} for a = {a}")
        return RateValue(float(vals[0]), float(lam[0]), True)
    sp = curve.spline()
    lo_l = lam[max(i - 1, 0)]
    hi_l = lam[min(i + 1, len(lam) - 1)]
    s_lo, s_hi = math.sqrt(-hi_l), math.sqrt(-lo_l)
    obj = lambda s: -(a * (-s * s) - float(sp(s)))
    res = optimize.minimize_scalar(obj, bounds=(s_lo, s_hi), method="bounded",
                                   options={"xatol": 1e-12})
    best = -res.fun
    if best < vals[i]:
        return RateValue(float(vals[i]), float(lam[i]), False)
    return RateValue(float(best), float(-res.x ** 2), False)


@dataclass(frozen=True)
class FrontSpeeds:
    c_plus: float
    c_minus: float
    residual_plus: float
    residual_minus: float
    fprime0: float

    def to_csv(self) -> str:
        return csv_text(["c_plus", "c_minus", "residual_plus", "residual_minus", "fprime0"],
                        [(self.c_plus, self.c_minus, self.residual_plus, self.residual_minus,
                          self.fprime0)])


def _speed(curve: SpectralCurve, fp: float) -> tuple[float, float]:
    g = lambda c: c * rate(curve, 1.0 / c).value - fp
    lo, hi = 0.5, 2.0
    for _ in range(60):
        try:
            glo, ghi = g(lo), g(hi)
        except GridError:
            # 1/lo too small for the grid: move the lower end up
            lo = 0.5 * (lo + hi)
            continue
        if glo < 0 < ghi:
            break
        if glo >= 0:
            hi, lo = lo, lo / 2
        else:
            lo, hi = hi, hi * 2
    else:
        raise BracketError("could not bracket the speed equation")
    # the map is increasing; check a few interior points
    cs = np.linspace(lo, hi, 5)
    gv = [g(c) for c in cs]
    if np.any(np.diff(gv) < -1e-10):
        warnings.warn("c I(1/c) is not monotone on the bracket", RuntimeWarning)
    c = optimize.brentq(g, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    return c, g(c) / fp


def speeds(curve_plus: SpectralCurve, curve_minus: SpectralCurve, fprime0: float) -> FrontSpeeds:
    """Front speeds ``c+ > 0`` and ``c- < 0`` from ``c I(1/c) = f'(0)``."""
    if not fprime0 > 0:
        raise DomainError("f'(0) must be > 0")
    cp, rp = _speed(curve_plus, fprime0)
    cm, rm = _speed(curve_minus, fprime0)
    return FrontSpeeds(cp, -cm, rp, rm, float(fprime0))
