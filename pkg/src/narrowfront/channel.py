"""Random channel geometries: cells of spine segment plus one dead-end wing.

A shape is stored as two outward-running cell lists, ``right`` for ``x >= 0`` and
``left`` for ``x <= 0``.  Cell ``k`` on either side covers the spine between
junction ``k-1`` and junction ``k`` (junction 0 is the origin) and carries the wing
attached at its outer junction.  Everything in a cell is written in the outward
frame, so the left side is described exactly like the right side.  ``Cell.reflected``
gives the global-orientation view of a left-side cell.

Junction widths follow the cross-section conservation rule
``alpha - beta = sign(r) * gamma``: ``alpha`` is the spine width just inside the
junction, ``beta`` just outside it, ``gamma`` the wing base width.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .profiles import WidthProfile

FORMAT = "channel/1"
WIDTH_TOL = 1e-8


class ParameterError(ValueError):
    """A generator parameter is outside its admissible domain."""


@dataclass(frozen=True)
class GeneratorParams:
    L_lo: float = 0.5
    L_hi: float = 1.5
    l_min: float = 0.5
    l_max: float = 1.5
    base_width: float = 1.0
    A1: float = 0.8
    wing_len_lo: float = 0.2
    gamma_lo: float = 0.1
    gamma_hi: float = 0.3
    tip_beta: float = 0.5
    trig_degree: int = 2
    amplitude: float = 0.1
    rectangular_mode: bool = False
    quantum: float = 0.1

    def check(self) -> None:
        """Raise ``ParameterError`` naming the first violated constraint."""
        if not 0 < self.L_lo <= self.L_hi < math.inf:
            raise ParameterError("need 0 < L_lo <= L_hi < inf")
        if not 0 < self.l_min <= self.l_max < math.inf:
            raise ParameterError("need 0 < l_min <= l_max < inf")
        if not 0 < self.A1:
            raise ParameterError("need A1 > 0")
        if not 0 < self.wing_len_lo <= self.A1:
            raise ParameterError("need 0 < wing_len_lo <= A1")
        if self.wing_len_lo < 0.05 * self.A1:
            raise ParameterError("need |wing_r| >= 0.05 * A1")
        if not 0 < self.gamma_lo <= self.gamma_hi <= self.A1:
            raise ParameterError("need 0 < gamma_lo <= gamma_hi <= A1")
        if not 0 < self.tip_beta < 1:
            raise ParameterError("tip exponent must lie in (0, 1)")
        if self.trig_degree < 0 or self.amplitude < 0:
            raise ParameterError("trig degree and amplitude must be >= 0")
        lo = self.base_width - self.gamma_hi - self.amplitude
        hi = self.base_width + self.gamma_hi + self.amplitude
        if lo < self.l_min - WIDTH_TOL or hi > self.l_max + WIDTH_TOL:
            raise ParameterError(
                "amplitude + gamma_hi too large: spine widths could leave [l_min, l_max]")
        if self.rectangular_mode:
            if self.quantum <= 0:
                raise ParameterError("quantum must be > 0")
            if self.A1 > self.L_lo / 2:
                raise ParameterError("rectangular mode needs A1 <= L_lo / 2 (wings must not overlap)")

    @classmethod
    def flat(cls, width: float = 1.0, length: float = 1.0, **kw) -> "GeneratorParams":
        """Constant-width spine with negligible wings (gamma = 1e-9)."""
        base = dict(L_lo=length, L_hi=length, l_min=width, l_max=width, base_width=width,
                    gamma_lo=1e-9, gamma_hi=1e-9, amplitude=0.0, trig_degree=0)
        base.update(kw)
        return cls(**base)


@dataclass(frozen=True)
class Cell:
    spine_length: float
    spine_profile: WidthProfile
    wing_r: float
    wing_profile: WidthProfile
    junction_widths: tuple[float, float, float]

    @property
    def alpha(self) -> float:
        return self.junction_widths[0]

    @property
    def beta(self) -> float:
        return self.junction_widths[1]

    @property
    def gamma(self) -> float:
        return self.junction_widths[2]

    @property
    def wing_sign(self) -> int:
        return 1 if self.wing_r > 0 else -1

    def reflected(self) -> "Cell":
        """The same cell seen under ``x -> -x``.

        The wing projection changes sign and the two spine-side junction widths
        trade places; the spine profile is read from its other end.
        """
        a, b, g = self.junction_widths
        return replace(self, spine_profile=self.spine_profile.reversed(),
                       wing_r=-self.wing_r, junction_widths=(b, a, g))

    def to_dict(self) -> dict:
        return {
            "spine_length": self.spine_length,
            "spine_kind": self.spine_profile.kind,
            "spine_coeffs": list(self.spine_profile.coefficients),
            "wing_r": self.wing_r,
            "wing_kind": self.wing_profile.kind,
            "wing_scale": self.wing_profile.coefficients[0],
            "tip_beta": self.wing_profile.tip_exponent,
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Cell":
        L = d["spine_length"]
        spine = WidthProfile(d.get("spine_kind", "trig"), d["spine_coeffs"], L)
        R = abs(d["wing_r"])
        if d.get("wing_kind", "tip") == "tip":
            wing = WidthProfile.tip(d["wing_scale"], R, d["tip_beta"])
        else:
            wing = WidthProfile.constant(d["wing_scale"], R)
        return cls(L, spine, d["wing_r"], wing, (d["alpha"], d["beta"], d["gamma"]))


@dataclass(frozen=True)
class ChannelShape:
    right: tuple[Cell, ...]
    left: tuple[Cell, ...]
    rng_seed: int = 0
    generator_params: GeneratorParams = field(default_factory=GeneratorParams)

    @property
    def n_cells(self) -> int:
        return len(self.right)

    def side(self, direction: str) -> tuple[Cell, ...]:
        """Cells crossed by a hitting time in ``direction``.

        ``+`` walks the positive half-line back toward the origin, ``-`` the
        negative half-line.
        """
        if direction in ("+", "plus"):
            return self.right
        if direction in ("-", "minus"):
            return self.left
        raise ValueError(f"direction must be '+' or '-', got {direction!r}")

    def junctions(self, direction: str = "+") -> np.ndarray:
        """Outward distances of junctions 1..n from the origin."""
        return np.cumsum([c.spine_length for c in self.side(direction)])

    def spine_width(self, x) -> np.ndarray:
        """Main-channel width at global spine coordinate ``x`` (vectorised)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        for sgn, cells in ((1.0, self.right), (-1.0, self.left)):
            ends = np.cumsum([c.spine_length for c in cells])
            starts = ends - np.array([c.spine_length for c in cells])
            d = sgn * x
            mask = (d >= 0) if sgn > 0 else (d > 0)
            idx = np.clip(np.searchsorted(ends, d[mask], side="left"), 0, len(cells) - 1)
            vals = np.empty(idx.shape)
            for k in np.unique(idx):
                sel = idx == k
                vals[sel] = cells[k].spine_profile(d[mask][sel] - starts[k])
            out[mask] = vals
        return out

    # -- serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "rng_seed": self.rng_seed,
            "generator_params": asdict(self.generator_params),
            "right": [c.to_dict() for c in self.right],
            "left": [c.to_dict() for c in self.left],
        }

    def dumps(self) -> str:
        return json.dumps(_repr17(self.to_dict()), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelShape":
        if d.get("format") != FORMAT:
            raise ValueError(f"unsupported channel format {d.get('format')!r}")
        return cls(tuple(Cell.from_dict(c) for c in d["right"]),
                   tuple(Cell.from_dict(c) for c in d["left"]),
                   int(d["rng_seed"]), GeneratorParams(**d["generator_params"]))

    @classmethod
    def loads(cls, text: str) -> "ChannelShape":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        from .io import atomic_write_text
        atomic_write_text(path, self.dumps())

    @classmethod
    def load(cls, path) -> "ChannelShape":
        with open(path) as fh:
            return cls.loads(fh.read())


def _repr17(obj):
    """Round floats through 17 significant digits so text round-trips exactly."""
    if isinstance(obj, float):
        return float(f"{obj:.17g}")
    if isinstance(obj, dict):
        return {k: _repr17(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_repr17(v) for v in obj]
    return obj


# ---------------------------------------------------------------------------
# sampling

def _cell_rng(seed: int, side: int, k: int) -> np.random.Generator:
    # one independent substream per cell, stable under changes of n_cells
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(side, k)))


def _smooth_cell(p: GeneratorParams, rng: np.random.Generator) -> Cell:
    L = rng.uniform(p.L_lo, p.L_hi)
    sign = 1 if rng.random() < 0.5 else -1
    R = rng.uniform(p.wing_len_lo, p.A1)
    gamma = rng.uniform(p.gamma_lo, p.gamma_hi)
    if p.trig_degree > 0 and p.amplitude > 0:
        raw = rng.uniform(-1.0, 1.0, size=p.trig_degree)
        bumps = raw * p.amplitude / p.trig_degree
    else:
        bumps = np.zeros(max(p.trig_degree, 0))
    alpha = p.base_width + sign * gamma
    gamma = sign * (alpha - p.base_width)  # exact conservation in floating point
    spine = WidthProfile("trig", (p.base_width, alpha - p.base_width, *bumps), L)
    wing = WidthProfile.tip(gamma, R, p.tip_beta)
    return Cell(L, spine, sign * R, wing, (alpha, p.base_width, gamma))


def _quantize(v: float, q: float) -> float:
    return max(q, round(v / q) * q)


def _rectangular_side(p: GeneratorParams, seed: int, side: int, n: int) -> list[Cell]:
    q = p.quantum
    cells = []
    width = _quantize(p.base_width, q)
    for k in range(n):
        rng = _cell_rng(seed, side, k)
        L = _quantize(rng.uniform(p.L_lo, p.L_hi), q)
        R = _quantize(rng.uniform(p.wing_len_lo, p.A1), q)
        # left and right wings share the cell's spine; keep a gap between them
        R = max(q, min(R, round(L / (2 * q)) * q - q))
        gamma = _quantize(rng.uniform(p.gamma_lo, p.gamma_hi), q)
        sign = 1 if rng.random() < 0.5 else -1
        if width - gamma < p.l_min - WIDTH_TOL:
            sign = -1
        elif width + gamma > p.l_max + WIDTH_TOL:
            sign = 1
        nxt = width - sign * gamma
        spine = WidthProfile.constant(width, L)
        wing = WidthProfile.constant(gamma, R)
        cells.append(Cell(L, spine, sign * R, wing, (width, nxt, gamma)))
        width = nxt
    return cells


def sample_channel(params: GeneratorParams, seed: int, n_cells: int) -> ChannelShape:
    """Draw ``n_cells`` cells on each side of the origin.

    Smooth mode draws i.i.d. cells.  Every spine piece starts at ``base_width`` and
    ramps to ``alpha = base_width + sign(r) * gamma`` at its outer junction, so
    junction conservation holds exactly with ``beta = base_width``.
    Rectangular mode draws piecewise-constant spines whose widths follow the
    junction rule (widths walk within ``[l_min, l_max]``); it exists for the 2D
    validation solver and is not stationary.
    """
    params.check()
    if n_cells < 1:
        raise ParameterError("n_cells must be >= 1")
    seed = int(seed)
    if params.rectangular_mode:
        right = _rectangular_side(params, seed, 0, n_cells)
        left = _rectangular_side(params, seed, 1, n_cells)
    else:
        right = [_smooth_cell(params, _cell_rng(seed, 0, k)) for k in range(n_cells)]
        left = [_smooth_cell(params, _cell_rng(seed, 1, k)) for k in range(n_cells)]
    return ChannelShape(tuple(right), tuple(left), seed, params)


def mirror(shape: ChannelShape) -> ChannelShape:
    """Reflect the geometry through ``x = 0``."""
    return replace(shape, right=shape.left, left=shape.right)


def flat_shape(n_cells: int, length: float = 1.0, width: float = 1.0,
               wing_gamma: float = 1e-9, wing_len: float = 0.2) -> ChannelShape:
    """Deterministic constant-width channel with negligible wings."""
    cells = []
    for k in range(n_cells):
        sign = 1 if k % 2 == 0 else -1
        alpha = width + sign * wing_gamma
        spine = WidthProfile("trig", (width, alpha - width), length)
        wing = WidthProfile.tip(wing_gamma, wing_len, 0.5)
        cells.append(Cell(length, spine, sign * wing_len, wing, (alpha, width, wing_gamma)))
    cells = tuple(cells)
    return ChannelShape(cells, cells, 0, GeneratorParams.flat(width, length))


# ---------------------------------------------------------------------------
# validation

def _scale_integral_diverges(profile: WidthProfile) -> bool:
    """Detect a non-integrable ``1/l`` at the far end by doubling quadrature.

    Integrates ``1/l`` up to ``D (1 - 2**-j)`` with nested Gauss-Legendre panels and
    checks whether the increments shrink geometrically.
    """
    D = profile.domain_length
    gx, gw = np.polynomial.legendre.leggauss(20)
    incs = []
    for j in range(1, 40):
        a, b = D * (1 - 2.0 ** -(j - 1)), D * (1 - 2.0 ** -j)
        xs = 0.5 * (a + b) + 0.5 * (b - a) * gx
        lv = profile(xs)
        if np.any(lv <= 0):
            return True
        incs.append(float(np.sum(0.5 * (b - a) * gw / lv)))
    tail = np.array(incs[-10:])
    ratios = tail[1:] / tail[:-1]
    return bool(np.mean(ratios) > 0.97)


def validate(shape: ChannelShape, n_grid: int = 64) -> list[str]:
    """List every violated invariant as ``"<side>[<k>]: <constraint>"``."""
    p = shape.generator_params
    out: list[str] = []
    for side_name, cells in (("right", shape.right), ("left", shape.left)):
        for k, c in enumerate(cells):
            tag = f"{side_name}[{k}]"
            a, b, g = c.junction_widths
            if not (a > 0 and b > 0 and g > 0):
                out.append(f"{tag}: junction widths must be > 0")
            if c.wing_r == 0:
                out.append(f"{tag}: wing_r must be nonzero")
            if abs(a - b - c.wing_sign * g) > 1e-12 * max(1.0, a):
                out.append(f"{tag}: junction conservation alpha - beta = sign(r) gamma violated")
            if abs(c.wing_r) > p.A1 * (1 + 1e-12):
                out.append(f"{tag}: |wing_r| exceeds A1")
            if not (p.L_lo - 1e-12 <= c.spine_length <= p.L_hi + 1e-12):
                out.append(f"{tag}: spine length outside [L_lo, L_hi]")
            xs = np.linspace(0.0, c.spine_length, n_grid)
            lv = c.spine_profile(xs)
            if np.any(lv < p.l_min - WIDTH_TOL) or np.any(lv > p.l_max + WIDTH_TOL):
                out.append(f"{tag}: spine width outside [l_min, l_max]")
            if abs(c.spine_profile.end() - a) > 1e-12 * max(1.0, a):
                out.append(f"{tag}: alpha differs from spine width at the junction")
            if k + 1 < len(cells) and abs(cells[k + 1].spine_profile.start() - b) > 1e-12 * max(1.0, b):
                out.append(f"{tag}: beta differs from next spine width at the junction")
            if abs(c.wing_profile.start() - g) > 1e-12 * max(1.0, g):
                out.append(f"{tag}: gamma differs from wing base width")
            if abs(c.wing_profile.domain_length - abs(c.wing_r)) > 1e-12:
                out.append(f"{tag}: wing profile length differs from |wing_r|")
            wl = c.wing_profile(np.linspace(0.0, abs(c.wing_r), n_grid)[:-1])
            if np.any(wl <= 0) or np.any(wl > p.A1 * (1 + 1e-12)):
                out.append(f"{tag}: wing width outside (0, A1]")
            if c.wing_profile.kind == "tip":
                if _scale_integral_diverges(c.wing_profile):
                    out.append(f"{tag}: wing scale integral diverges at the tip")
    if shape.right and shape.left:
        if abs(shape.right[0].spine_profile.start() - shape.left[0].spine_profile.start()) > 1e-12:
            out.append("origin: spine widths disagree across x = 0")
    return out


def require_valid(shape: ChannelShape) -> None:
    bad = validate(shape)
    if bad:
        raise ParameterError("invalid shape: " + "; ".join(bad[:5]))
