"""Width profiles l(x) of channel pieces.

Three kinds are supported:

* ``constant``  -- ``l(x) = c0``
* ``trig``      -- ``l(x) = c0 + c1 * (1 - cos(pi x / D)) / 2 + sum_j c_{j+1} (1 - cos(2 j pi x / D)) / 2``,
  so ``l(0) = c0`` and ``l(D) = c0 + c1``.  Every term has zero slope at both
  ends, so the drift ``l'/(2l)`` vanishes at the junctions.
* ``tip``       -- ``l(x) = c0 * (1 - x / D) ** c1`` with ``0 < c1 < 1``; the width
  vanishes at ``x = D`` while ``int dx / l`` stays finite.

Coordinates are local, ``x in [0, D]``.  For the ``tip`` kind the scale and speed
integrals have closed forms, which is what keeps everything finite at the tip.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

KINDS = ("constant", "trig", "tip")

# Gauss-Legendre panel rule used for the tabulated antiderivatives.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


@dataclass(frozen=True)
class WidthProfile:
    kind: str
    coefficients: tuple[float, ...]
    domain_length: float
    _table: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        object.__setattr__(self, "domain_length", float(self.domain_length))
        if not self.domain_length > 0:
            raise ValueError("domain_length must be > 0")
        n = len(self.coefficients)
        if self.kind == "constant" and n != 1:
            raise ValueError("constant profile takes one coefficient")
        if self.kind == "trig" and n < 2:
            raise ValueError("trig profile needs at least (c0, ramp)")
        if self.kind == "tip" and n != 2:
            raise ValueError("tip profile takes (base_width, exponent)")

    # -- constructors -------------------------------------------------------
    @classmethod
    def constant(cls, width: float, length: float) -> "WidthProfile":
        return cls("constant", (width,), length)

    @classmethod
    def tip(cls, base_width: float, length: float, beta: float = 0.5) -> "WidthProfile":
        return cls("tip", (base_width, beta), length)

    @property
    def tip_exponent(self) -> float | None:
        return self.coefficients[1] if self.kind == "tip" else None

    @property
    def vanishes_at_end(self) -> bool:
        return self.kind == "tip"

    # -- pointwise evaluation --------------------------------------------
    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        c = self.coefficients
        D = self.domain_length
        if self.kind == "constant":
            return np.full_like(x, c[0])
        if self.kind == "tip":
            return c[0] * np.clip(1.0 - x / D, 0.0, None) ** c[1]
        t = np.pi * x / D
        out = c[0] + c[1] * 0.5 * (1.0 - np.cos(t))
        for j, a in enumerate(c[2:], start=1):
            out = out + a * 0.5 * (1.0 - np.cos(2 * j * t))
        return out

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        c = self.coefficients
        D = self.domain_length
        if self.kind == "constant":
            return np.zeros_like(x)
        if self.kind == "tip":
            rem = np.clip(1.0 - x / D, 1e-300, None)
            return -c[0] * c[1] / D * rem ** (c[1] - 1.0)
        w = np.pi / D
        t = w * x
        out = c[1] * 0.5 * w * np.sin(t)
        for j, a in enumerate(c[2:], start=1):
            out = out + a * j * w * np.sin(2 * j * t)
        return out

    def start(self) -> float:
        return float(self(0.0))

    def end(self) -> float:
        return float(self(self.domain_length))

    def with_coefficients(self, coefficients) -> "WidthProfile":
        return WidthProfile(self.kind, tuple(coefficients), self.domain_length)

    def reversed(self) -> "WidthProfile":
        """Profile of the same piece read from the other end, ``x -> D - x``.

        The bump modes are symmetric about ``D/2``; only the ramp changes.
        """
        c = self.coefficients
        if self.kind == "constant":
            return self
        if self.kind == "tip":
            raise ValueError("a tip profile cannot be reversed")
        # l(D - x): ramp part c0 + c1 (1 + cos t)/2 = (c0 + c1) - c1 (1 - cos t)/2
        return WidthProfile("trig", (c[0] + c[1], -c[1], *c[2:]), self.domain_length)

    # -- scale and speed ---------------------------------------------------
    def _tabulate(self):
        if self._table is not None:
            return self._table
        D = self.domain_length
        npan = 64
        edges = np.linspace(0.0, D, npan + 1)
        half = 0.5 * (edges[1:] - edges[:-1])
        mid = 0.5 * (edges[1:] + edges[:-1])
        xs = mid[:, None] + half[:, None] * _GL_X[None, :]
        lv = self(xs)
        p_pan = np.sum(half[:, None] * _GL_W / lv, axis=1)
        m_pan = np.sum(half[:, None] * _GL_W * 2.0 * lv, axis=1)
        table = {
            "edges": edges,
            "p": np.concatenate([[0.0], np.cumsum(p_pan)]),
            "m": np.concatenate([[0.0], np.cumsum(m_pan)]),
        }
        object.__setattr__(self, "_table", table)
        return table

    def _panel_integral(self, x, integrand):
        tab = self._tabulate()
        edges = tab["edges"]
        x = np.atleast_1d(np.asarray(x, dtype=float))
        i = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, len(edges) - 2)
        a = edges[i]
        half = 0.5 * (x - a)
        xs = a[:, None] + half[:, None] * (_GL_X[None, :] + 1.0)
        part = np.sum(half[:, None] * _GL_W * integrand(xs), axis=1)
        return i, part

    def p(self, x):
        """Scale function ``int_0^x dy / l(y)``."""
        scalar = np.ndim(x) == 0
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            out = x / self.coefficients[0]
        elif self.kind == "tip":
            c0, b = self.coefficients
            D = self.domain_length
            out = D / (c0 * (1.0 - b)) * (1.0 - np.clip(1.0 - x / D, 0.0, None) ** (1.0 - b))
        else:
            i, part = self._panel_integral(x, lambda y: 1.0 / self(y))
            out = (self._tabulate()["p"][i] + part).reshape(x.shape)
        return float(out) if scalar else out

    def m(self, x):
        """Speed measure ``2 int_0^x l(y) dy``."""
        scalar = np.ndim(x) == 0
        x = np.asarray(x, dtype=float)
        c = self.coefficients
        D = self.domain_length
        if self.kind == "constant":
            out = 2.0 * c[0] * x
        elif self.kind == "tip":
            c0, b = c
            out = 2.0 * c0 * D / (1.0 + b) * (1.0 - np.clip(1.0 - x / D, 0.0, None) ** (1.0 + b))
        else:
            # closed form of 2 int l
            t = np.pi * x / D
            out = 2.0 * (c[0] * x + c[1] * 0.5 * (x - D / np.pi * np.sin(t)))
            for j, a in enumerate(c[2:], start=1):
                out = out + a * (x - D / (2 * j * np.pi) * np.sin(2 * j * t))
        return float(out) if scalar else out

    @property
    def p_length(self) -> float:
        return float(self.p(self.domain_length))

    @property
    def m_length(self) -> float:
        return float(self.m(self.domain_length))

    def x_of_p(self, p):
        """Inverse scale function.  Closed form for constant and tip kinds."""
        p = np.asarray(p, dtype=float)
        c = self.coefficients
        D = self.domain_length
        if self.kind == "constant":
            return p * c[0]
        if self.kind == "tip":
            c0, b = c
            frac = np.clip(1.0 - p * c0 * (1.0 - b) / D, 0.0, None)
            return D * (1.0 - frac ** (1.0 / (1.0 - b)))
        raise NotImplementedError("x_of_p is only available in closed form")

    def width_along_p(self, s, from_end: bool = False):
        """Width as a function of the normalized scale coordinate ``s in [0, 1]``.

        ``s`` runs from the start of the piece (or from its far end when
        ``from_end``).  Only constant and tip kinds have this in closed form; for
        the tip the far-end form avoids cancellation near the vanishing end.
        """
        s = np.asarray(s, dtype=float)
        c = self.coefficients
        if self.kind == "constant":
            return np.full_like(s, c[0])
        if self.kind == "tip":
            e = c[1] / (1.0 - c[1])
            frac = s if from_end else 1.0 - s
            return c[0] * np.clip(frac, 0.0, None) ** e
        raise NotImplementedError("width_along_p needs a constant or tip profile")

    def quad_p(self, x, epsrel=1e-10):
        """Adaptive-quadrature scale function (used as an independent check)."""
        if self.kind == "tip":
            return self.p(x)
        val, _ = integrate.quad(lambda y: 1.0 / float(self(y)), 0.0, float(x),
                                epsrel=epsrel, epsabs=0.0, limit=200)
        return val

    def quad_m(self, x, epsrel=1e-10):
        val, _ = integrate.quad(lambda y: 2.0 * float(self(y)), 0.0, float(x),
                                epsrel=epsrel, epsabs=0.0, limit=200)
        return val

    def to_dict(self) -> dict:
        return {"kind": self.kind, "coefficients": list(self.coefficients),
                "domain_length": self.domain_length}
