"""Edge-wise Sturm-Liouville solutions and the cell transfer recursion.

On an edge with width ``l`` the graph generator is ``D_m D_p`` with ``dp = dx/l``
and ``dm = 2 l dx``.  ``fundamental`` solves ``D_m D_p u = lam * u`` anchored at
the left end of the edge (``u = 1``, ``D_p u = 0``).

Hitting transforms use ``lam <= 0`` and ``q = E exp(lam * T)``; internally the ODE
eigenvalue is ``kappa = -lam >= 0``.  For one side of the channel (cells in the
outward frame) let ``rho_k = u(X_k) / u(X_{k-1})`` where ``u(x) = E_x exp(lam T_0)``.
Then ``rho_k = 1 / (x_k rho_{k+1} + y_k)``.  Two algebraically equivalent
expressions for ``(x_k, y_k)`` are computed and cross-checked:

* the *junction* form, from endpoint derivatives of the basic pair ``u_+, u_-`` and
  the widths ``alpha, beta, gamma``;
* the *integral* form, from the fundamental's end values and the integrals
  ``S = int u^-2 dp`` along each edge.

Wings with ``r < 0`` occupy ``[r, 0]``; their fundamental is anchored at the tip,
which is the left end of that interval.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy import integrate

from .channel import Cell, ChannelShape
from .io import csv_text

RTOL = 1e-12
ATOL = 1e-14
CONSISTENCY_RTOL = 1e-9
SERIES_BOUND = 400.0


class MethodError(RuntimeError):
    """The requested solution method cannot be used for these inputs."""


class ConsistencyError(RuntimeError):
    """Two equivalent formulas disagree beyond tolerance."""


class TruncationError(RuntimeError):
    """Depth doubling did not converge within the available cells."""


class DomainError(ValueError):
    pass


# ---------------------------------------------------------------------------
# fundamental solutions on a single piece

@dataclass
class FundamentalSolution:
    """``u`` and ``D_p u`` of the anchored fundamental on one piece.

    ``coordinate`` is ``"x"`` (distance along the piece) or ``"p"`` (scale
    coordinate, used for tip-vanishing wings).  Evaluators take the same
    coordinate.
    """
    lam: float
    method: str
    coordinate: str
    length: float
    edge_id: int | None
    _u: callable = field(repr=False)
    _dpu: callable = field(repr=False)
    _width: callable = field(repr=False)

    def u(self, s):
        return self._u(np.asarray(s, dtype=float))

    def dpu(self, s):
        return self._dpu(np.asarray(s, dtype=float))

    def residual(self, n: int = 65) -> float:
        """Max of ``|D_m D_p u - lam u|`` on a Chebyshev check grid."""
        s = 0.5 * self.length * (1 - np.cos(np.pi * np.arange(n) / (n - 1)))
        fit = C.Chebyshev.fit(s, self.dpu(s), n - 1, domain=[0, self.length])
        ds = fit.deriv()(s)
        lw = self._width(s)
        if self.coordinate == "x":
            lhs = ds / (2 * lw)
        else:
            lhs = ds / (2 * lw ** 2)
        ok = lw > 1e-8
        return float(np.max(np.abs(lhs - self.lam * self.u(s))[ok]))


def _cheb_nodes(n, length):
    return 0.5 * length * (1 - np.cos(np.pi * (np.arange(n) + 0.5) / n))[::-1]


def _series(lam, weight_p, weight_m, length, n_nodes=96):
    """Series ``sum lam^n u_n`` with ``u_n = int w_p int w_m u_{n-1}`` from 0."""
    s = _cheb_nodes(n_nodes, length)
    wp = weight_p(s)
    wm = weight_m(s)

    def prim(vals):
        c = C.chebfit(2 * s / length - 1, vals, n_nodes - 1)
        ci = C.chebint(c, lbnd=-1, scl=length / 2)
        return ci

    term = np.ones_like(s)
    u_coef = C.chebfit(2 * s / length - 1, term, n_nodes - 1)
    dpu_coef = np.zeros_like(u_coef)
    total = term.copy()
    prev = np.inf
    grow = 0
    for n in range(1, 400):
        inner = prim(wm * term)  # D_p of the new term, divided by lam
        inner_vals = C.chebval(2 * s / length - 1, inner)
        outer = prim(wp * inner_vals)
        term = C.chebval(2 * s / length - 1, outer) * lam
        inner = inner * lam
        u_coef = C.chebadd(u_coef, outer * lam)
        dpu_coef = C.chebadd(dpu_coef, inner)
        total = total + term
        size = float(np.max(np.abs(term)))
        if size < 1e-14 * float(np.max(np.abs(total))):
            break
        grow = grow + 1 if size > prev else 0
        if grow > 20 or not np.isfinite(size):
            raise MethodError("series terms are growing; use method='ode'")
        prev = size
    else:
        raise MethodError("series did not converge; use method='ode'")
    f_u = lambda x: C.chebval(2 * x / length - 1, u_coef)
    f_d = lambda x: C.chebval(2 * x / length - 1, dpu_coef)
    return f_u, f_d


def fundamental(profile, lam: float, method: str = "ode", *, from_end: bool = False,
                edge_id: int | None = None) -> FundamentalSolution:
    """Anchored fundamental solution of ``D_m D_p u = lam u`` on one piece.

    ``profile`` is any width function with ``domain_length``.  Smooth profiles are
    solved in the ``x`` coordinate.  Constant and tip profiles may be solved in the
    scale coordinate (always, for the tip); ``from_end`` anchors at the far end.
    """
    lam = float(lam)
    kind = getattr(profile, "kind", None)
    use_p = kind == "tip" or from_end
    if use_p:
        P = profile.p_length
        width = lambda p: profile.width_along_p(np.asarray(p) / P, from_end=from_end)
        wp = lambda p: np.ones_like(p)
        wm = lambda p: 2.0 * width(p) ** 2
        coord, length = "p", P
    else:
        D = profile.domain_length
        width = lambda x: np.asarray(profile(x), dtype=float)
        wp = lambda x: 1.0 / width(x)
        wm = lambda x: 2.0 * width(x)
        coord, length = "x", D

    if method == "series":
        P_len = profile.p_length if hasattr(profile, "p_length") else _quad_len(wp, length)
        M_len = _quad_len(wm, length)
        if abs(lam) * P_len * M_len > SERIES_BOUND:
            raise MethodError(
                f"|lam| * p_len * m_len = {abs(lam) * P_len * M_len:.3g} exceeds the series bound; "
                "use method='ode'")
        fu, fd = _series(lam, wp, wm, length)
        return FundamentalSolution(lam, "series", coord, length, edge_id, fu, fd, width)
    if method != "ode":
        raise ValueError(f"unknown method {method!r}")

    def rhs(s, y):
        return [wp(s) * y[1], lam * wm(s) * y[0]]

    sol = integrate.solve_ivp(rhs, (0.0, length), [1.0, 0.0], method="DOP853",
                              rtol=1e-12, atol=1e-14, dense_output=True)
    if not sol.success:
        raise MethodError(sol.message)
    fu = lambda s: sol.sol(s)[0]
    fd = lambda s: sol.sol(s)[1]
    return FundamentalSolution(lam, "ode", coord, length, edge_id, fu, fd, width)


def _quad_len(f, length):
    val, _ = integrate.quad(lambda s: float(f(np.array([s]))[0]), 0.0, length, limit=200)
    return val


# ---------------------------------------------------------------------------
# basic pair

@dataclass(frozen=True)
class BasicPair:
    """``u_+`` (0 at the left end, 1 at the right) and ``u_-`` (1 then 0)."""
    fundamental: FundamentalSolution
    S: float
    left_width: float
    right_width: float

    def _S(self, s):
        f = self.fundamental
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.empty_like(s)
        wp = (lambda t: 1.0 / f._width(t)) if f.coordinate == "x" else (lambda t: np.ones_like(t))
        for i, si in enumerate(s):
            out[i] = integrate.quad(lambda t: float(wp(np.array([t]))[0] / f.u(np.array([t]))[0] ** 2),
                                    0.0, si, epsrel=1e-12, epsabs=0.0, limit=200)[0]
        return out

    def plus(self, s):
        f = self.fundamental
        return f.u(s) * self._S(s) / (f.u(f.length) * self.S)

    def minus(self, s):
        f = self.fundamental
        return f.u(s) * (self.S - self._S(s)) / self.S

    @property
    def ends(self) -> dict:
        """Endpoint values of ``D_p u_pm`` and ``d u_pm / dx``."""
        f = self.fundamental
        phi_b = float(f.u(f.length))
        dp_b = float(f.dpu(f.length))
        S = self.S
        d = {
            "Dp_plus_a": 1.0 / (phi_b * S),
            "Dp_plus_b": (dp_b * S + 1.0 / phi_b) / (phi_b * S),
            "Dp_minus_a": -1.0 / S,
            "Dp_minus_b": -1.0 / (phi_b * S),
        }
        for key, w in (("a", self.left_width), ("b", self.right_width)):
            for which in ("plus", "minus"):
                d[f"dx_{which}_{key}"] = d[f"Dp_{which}_{key}"] / w if w > 0 else math.copysign(math.inf, d[f"Dp_{which}_{key}"])
        return d


def basic_pair(profile, lam: float, method: str = "ode", *, from_end: bool = False) -> BasicPair:
    if not profile.domain_length > 0:
        raise DomainError("degenerate edge of zero length")
    f = fundamental(profile, lam, method, from_end=from_end)
    S = float(BasicPair(f, 1.0, 1.0, 1.0)._S(f.length)[0])
    lw = float(f._width(np.array([0.0]))[0])
    rw = float(f._width(np.array([f.length]))[0])
    return BasicPair(f, S, lw, rw)


# ---------------------------------------------------------------------------
# batched end values for many pieces at once

def _spine_arrays(profiles):
    n = len(profiles)
    deg = max(len(p.coefficients) - 2 for p in profiles) if n else 0
    deg = max(deg, 0)
    c0 = np.empty(n)
    c1 = np.zeros(n)
    A = np.zeros((n, deg))
    L = np.empty(n)
    for i, p in enumerate(profiles):
        c = p.coefficients
        c0[i] = c[0]
        if p.kind == "trig":
            c1[i] = c[1]
            A[i, :len(c) - 2] = c[2:]
        elif p.kind != "constant":
            raise ValueError("spine pieces must be constant or trig")
        L[i] = p.domain_length
    return c0, c1, A, L


def edge_end_values(spines, wings, wing_from_end, kappa: float):
    """End values ``(phi(b), D_p phi(b), S)`` for many pieces in one stiff-free solve.

    ``spines`` are smooth profiles integrated in ``x``; ``wings`` are tip/constant
    profiles integrated in the scale coordinate, anchored at the far end where
    ``wing_from_end`` is true.  Returns two ``(n, 3)`` arrays.
    """
    c0, c1, A, L = _spine_arrays(spines)
    ns, nw = len(spines), len(wings)
    wc0 = np.array([w.coefficients[0] for w in wings])
    wexp = np.array([w.coefficients[1] / (1 - w.coefficients[1]) if w.kind == "tip" else 0.0
                     for w in wings])
    wP = np.array([w.p_length for w in wings])
    wfe = np.asarray(wing_from_end, dtype=bool)
    jj = np.arange(1, A.shape[1] + 1)
    kappa = float(kappa)

    def l_spine(t):
        out = c0 + c1 * 0.5 * (1 - np.cos(np.pi * t))
        if A.shape[1]:
            out = out + A @ (0.5 * (1 - np.cos(2 * jj * np.pi * t)))
        return out

    def l2_wing(t):
        frac = np.where(wfe, t, 1.0 - t)
        return (wc0 * np.clip(frac, 0.0, None) ** wexp) ** 2

    def rhs(t, y):
        u = y[:ns + nw]
        v = y[ns + nw:2 * (ns + nw)]
        du = np.empty_like(u)
        dv = np.empty_like(u)
        dS = np.empty_like(u)
        ls = l_spine(t)
        du[:ns] = L * v[:ns] / ls
        dv[:ns] = L * 2 * kappa * ls * u[:ns]
        dS[:ns] = L / (ls * u[:ns] ** 2)
        du[ns:] = wP * v[ns:]
        dv[ns:] = wP * 2 * kappa * l2_wing(t) * u[ns:]
        dS[ns:] = wP / u[ns:] ** 2
        return np.concatenate([du, dv, dS])

    m = ns + nw
    if m == 0:
        return np.zeros((0, 3)), np.zeros((0, 3))
    if kappa == 0.0:
        out = np.empty((m, 3))
        out[:, 0] = 1.0
        out[:, 1] = 0.0
        out[:ns, 2] = [p.p_length for p in spines]
        out[ns:, 2] = wP
        return out[:ns], out[ns:]
    y0 = np.concatenate([np.ones(m), np.zeros(m), np.zeros(m)])
    sol = integrate.solve_ivp(rhs, (0.0, 1.0), y0, method="DOP853", rtol=RTOL, atol=ATOL)
    if not sol.success:
        raise MethodError(sol.message)
    yend = sol.y[:, -1]
    out = np.stack([yend[:m], yend[m:2 * m], yend[2 * m:]], axis=1)
    return out[:ns], out[ns:]


# ---------------------------------------------------------------------------
# transfer cells

@dataclass(frozen=True)
class TransferCell:
    k: int
    x: float
    y: float
    S_spine: float
    S_wing: float
    S_next: float
    lam: float
    x_junction: float
    y_junction: float


def _cell_quantities(cells: list[Cell], lam: float):
    """Arrays for cells ``1..n-1`` of one side (each needs the next spine piece)."""
    if lam > 0:
        raise DomainError("hitting transforms need lam <= 0")
    n = len(cells)
    if n < 2:
        raise DomainError("need at least two cells (the last supplies only its spine)")
    kappa = -float(lam)
    wings = [c.wing_profile for c in cells[:-1]]
    from_end = [c.wing_r < 0 for c in cells[:-1]]
    sp, wg = edge_end_values([c.spine_profile for c in cells], wings, from_end, kappa)
    return sp, wg


def transfer_arrays(cells, lam: float, check: bool = True):
    """``(x, y, lengths)`` for cells ``1..n-1`` with both formula routes compared."""
    cells = list(cells)
    sp, wg = _cell_quantities(cells, lam)
    phi, dphi, S = sp[:, 0], sp[:, 1], sp[:, 2]
    wphi, wdphi, wS = wg[:, 0], wg[:, 1], wg[:, 2]
    alpha = np.array([c.alpha for c in cells[:-1]])
    beta = np.array([c.beta for c in cells[:-1]])
    gamma = np.array([c.gamma for c in cells[:-1]])
    sign = np.array([c.wing_sign for c in cells[:-1]])

    # integral form
    p0, d0, s0 = phi[:-1], dphi[:-1], S[:-1]
    p1, s1 = phi[1:], S[1:]
    x_int = -(p0 * s0) / (p1 * s1)
    Q = wphi * wdphi / (wphi * wdphi * wS + 1.0)
    wing_pos = p0 * (s0 / wS) * (Q * wS)
    wing_neg = gamma * (p0 / wphi) * (wdphi / gamma) * s0
    y_int = 1.0 / p0 + d0 * s0 + np.where(sign > 0, wing_pos, wing_neg) + p0 * s0 / s1

    # junction form through basic-pair endpoint derivatives (width at the ends)
    a_w = alpha  # spine k at its outer end
    b_w = beta   # spine k+1 at its inner end
    du_minus_k = -1.0 / (p0 * a_w * s0)
    du_plus_k = (d0 / a_w * s0 + 1.0 / (p0 * a_w)) / (p0 * s0)
    du_plus_next0 = 1.0 / (b_w * p1 * s1)
    du_minus_next0 = -1.0 / (b_w * s1)
    x_j = (beta / alpha) * du_plus_next0 / du_minus_k
    base = -du_plus_k / du_minus_k + (beta / alpha) * du_minus_next0 / du_minus_k
    # wing r > 0: interval [0, R] anchored at the base (left end)
    Dp_plus_R = (wdphi * wS + 1.0 / wphi) / (wphi * wS)
    Dp_minus_R = -1.0 / (wphi * wS)
    du_plus_w0 = 1.0 / (gamma * wphi * wS)
    du_minus_w0 = -1.0 / (gamma * wS)
    t_pos = (gamma / alpha) * (-(Dp_minus_R / Dp_plus_R) * du_plus_w0 / du_minus_k
                               + du_minus_w0 / du_minus_k)
    # wing r < 0: interval [r, 0] anchored at the tip (left end), base at the right end
    du_plus_wb = (wdphi / gamma * wS + 1.0 / (wphi * gamma)) / (wphi * wS)
    du_minus_wb = -1.0 / (wphi * gamma * wS)
    Dp_plus_tip = 1.0 / (wphi * wS)
    Dp_minus_tip = -1.0 / wS
    t_neg = -(gamma / alpha) * (du_plus_wb / du_minus_k
                                - (Dp_plus_tip / Dp_minus_tip) * du_minus_wb / du_minus_k)
    y_j = base + np.where(sign > 0, t_pos, t_neg)

    if check:
        for name, u, v in (("x", x_int, x_j), ("y", y_int, y_j)):
            rel = np.abs(u - v) / np.maximum(np.abs(u), 1e-300)
            bad = np.flatnonzero(rel > CONSISTENCY_RTOL)
            if bad.size:
                i = int(bad[0])
                raise ConsistencyError(
                    f"{name}_{i + 1}: integral form {u[i]!r} vs junction form {v[i]!r}")
        if np.any(x_int >= 0) or np.any(y_int < 1 - 1e-12):
            raise ConsistencyError("transfer entries violate x < 0 or y >= 1")
    lengths = np.array([c.spine_length for c in cells[:-1]])
    extras = dict(S_spine=s0, S_wing=wS, S_next=s1, x_junction=x_j, y_junction=y_j)
    return x_int, y_int, lengths, extras


def cell_matrix(shape: ChannelShape, k: int, lam: float, direction: str = "+") -> TransferCell:
    """Transfer entries of cell ``k`` (1-based) on one side."""
    cells = shape.side(direction)
    if not 1 <= k < len(cells):
        raise DomainError(f"cell index {k} needs 1 <= k < {len(cells)}")
    x, y, _, ex = transfer_arrays(cells[k - 1:k + 1], lam)
    return TransferCell(k, float(x[0]), float(y[0]), float(ex["S_spine"][0]),
                        float(ex["S_wing"][0]), float(ex["S_next"][0]), float(lam),
                        float(ex["x_junction"][0]), float(ex["y_junction"][0]))


def ratio_chain(x, y, rho_end: float = 0.0) -> np.ndarray:
    """Backward recursion ``rho_k = 1 / (x_k rho_{k+1} + y_k)`` from ``rho_end``.

    ``x`` and ``y`` may carry a trailing batch axis.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rho = np.empty_like(y)
    nxt = np.full(y.shape[1:], float(rho_end))
    for k in range(y.shape[0] - 1, -1, -1):
        nxt = 1.0 / (x[k] * nxt + y[k])
        rho[k] = nxt
    return rho


@dataclass(frozen=True)
class TransformResult:
    lam: float
    direction: str
    rho: np.ndarray
    depth: int

    @property
    def log_sum(self) -> float:
        return float(math.fsum(np.log(self.rho)))

    @property
    def transform(self) -> float:
        return float(np.exp(self.log_sum))

    def cumulative(self) -> np.ndarray:
        """``E exp(lam T)`` from junction ``j`` to the origin, ``j = 1..D``."""
        return np.exp(np.cumsum(np.log(self.rho)))


def hitting_transform(shape: ChannelShape, lam: float, direction: str = "+",
                      n_ratios: int = 1, start_depth: int | None = None,
                      rtol: float = 1e-12) -> TransformResult:
    """Ratios ``rho_1..rho_D`` by truncated recursion with depth doubling."""
    if lam > 0:
        raise DomainError("lam must be <= 0")
    cells = shape.side(direction)
    D = int(n_ratios)
    if lam == 0:
        return TransformResult(0.0, direction, np.ones(D), D)
    avail = len(cells) - 1
    if D > avail:
        raise TruncationError(f"{D} ratios requested but only {avail} cells have a successor")
    x, y, _, _ = transfer_arrays(cells[:avail + 1], lam)
    depths = []
    N = max(start_depth or 2 * D, D)
    while N < avail:
        depths.append(N)
        N *= 2
    depths.append(avail)
    prev = None
    for N in depths:
        rho = ratio_chain(x[:N], y[:N])[:D]
        if prev is not None and np.all(np.abs(rho - prev) <= rtol * np.abs(rho)):
            return TransformResult(float(lam), direction, rho, N)
        prev = rho
    raise TruncationError(
        f"ratios not converged at depth {depths[-1]}; the shape has too few cells")


# ---------------------------------------------------------------------------
# dense oracle for the truncated junction system

def _shoot(rhs, length, y0):
    sol = integrate.solve_ivp(rhs, (0.0, length), y0, method="Radau", rtol=1e-12, atol=1e-15)
    return sol.y[:, -1]


def dense_junction_solve(cells, lam: float, depth: int) -> np.ndarray:
    """``u(X_1..X_depth)`` from the full linear system with ``u(X_{depth+1}) = 0``.

    Every piece is integrated on its own with a different integrator; wings are
    integrated from the tip so that their reflecting end holds by construction.
    """
    cells = list(cells)[:depth + 1]
    if len(cells) < depth + 1:
        raise DomainError("not enough cells for the requested depth")
    kappa = -float(lam)
    N = depth
    spine = []
    for c in cells:
        prof = c.spine_profile
        f = lambda x, y, prof=prof: [y[1] / float(prof(x)), 2 * kappa * float(prof(x)) * y[0]]
        phi = _shoot(f, prof.domain_length, [1.0, 0.0])
        psi = _shoot(f, prof.domain_length, [0.0, 1.0])
        spine.append((phi, psi))
    wing = []
    for c in cells[:N]:
        prof = c.wing_profile
        P = prof.p_length
        f = lambda t, y, prof=prof, P=P: [y[1], 2 * kappa * float(prof.width_along_p(t / P, from_end=True)) ** 2 * y[0]]
        chi = _shoot(f, P, [1.0, 0.0])
        # value at the base and D_p derivative pointing from the base into the wing
        wing.append((chi[0], -chi[1]))
    n_unk = 2 * (N + 1) + N
    A = np.zeros((n_unk, n_unk))
    b = np.zeros(n_unk)
    iA = lambda e: 2 * e
    iB = lambda e: 2 * e + 1
    iC = lambda k: 2 * (N + 1) + k
    r = 0
    A[r, iA(0)] = 1.0
    b[r] = 1.0
    r += 1
    for k in range(N):
        (phi, psi) = spine[k]
        # continuity spine k -> spine k+1
        A[r, iA(k)] = phi[0]
        A[r, iB(k)] = psi[0]
        A[r, iA(k + 1)] = -1.0
        r += 1
        # continuity spine k -> wing k
        A[r, iA(k)] = phi[0]
        A[r, iB(k)] = psi[0]
        A[r, iC(k)] = -wing[k][0]
        r += 1
        # flux balance in D_p form
        A[r, iA(k)] = phi[1]
        A[r, iB(k)] = psi[1]
        A[r, iB(k + 1)] = -1.0
        A[r, iC(k)] = -wing[k][1]
        r += 1
    phi, psi = spine[N]
    A[r, iA(N)] = phi[0]
    A[r, iB(N)] = psi[0]
    sol = np.linalg.solve(A, b)
    return np.array([sol[iA(k)] for k in range(1, N + 1)])


# ---------------------------------------------------------------------------
# spine-only hitting formulas

class _SpineIntegrals:
    """Cumulative ``int dy/l`` and ``int (int_0^y l) dy/l`` along the right spine."""

    def __init__(self, shape: ChannelShape, upto: float):
        cells = shape.side("+")
        ends = np.cumsum([c.spine_length for c in cells])
        if upto > ends[-1] + 1e-12:
            raise DomainError(f"A = {upto} exceeds the channel length {ends[-1]}")
        self.cells = cells
        self.ends = ends
        n = int(np.searchsorted(ends, upto - 1e-12)) + 1
        self.P = np.zeros(n + 1)
        self.M = np.zeros(n + 1)  # int_0^X l
        self.G = np.zeros(n + 1)
        for k in range(n):
            prof = cells[k].spine_profile
            Lk = cells[k].spine_length
            self.P[k + 1] = self.P[k] + prof.quad_p(Lk)
            self.M[k + 1] = self.M[k] + prof.quad_m(Lk) / 2
            self.G[k + 1] = self.G[k] + self.M[k] * prof.quad_p(Lk) + self._inner(prof, Lk)

    @staticmethod
    def _inner(prof, s):
        return integrate.quad(lambda y: prof.m(y) / (2 * float(prof(y))), 0.0, s,
                              epsrel=1e-11, epsabs=0.0, limit=200)[0]

    def _locate(self, x):
        k = int(np.searchsorted(self.ends, x - 1e-15))
        start = self.ends[k] - self.cells[k].spine_length
        return k, x - start

    def p(self, x: float) -> float:
        k, s = self._locate(x)
        return self.P[k] + self.cells[k].spine_profile.quad_p(s)

    def g(self, x: float) -> float:
        k, s = self._locate(x)
        prof = self.cells[k].spine_profile
        return self.G[k] + self.M[k] * prof.quad_p(s) + self._inner(prof, s)


def _check_range(x, A):
    if not 0 < x < A:
        raise DomainError(f"need 0 < x < A, got x={x}, A={A}")


def hit_probability(shape: ChannelShape, x: float, A: float) -> float:
    """Probability that the spine diffusion from ``x`` reaches 0 before ``A``."""
    _check_range(x, A)
    s = _SpineIntegrals(shape, A)
    return 1.0 - s.p(x) / s.p(A)


def expected_exit_time(shape: ChannelShape, x: float, A: float) -> float:
    """Mean exit time of ``(0, A)`` for the spine-only diffusion started at ``x``."""
    _check_range(x, A)
    s = _SpineIntegrals(shape, A)
    return -2.0 * s.g(x) + 2.0 * s.g(A) / s.p(A) * s.p(x)


# ---------------------------------------------------------------------------
# CSV emitters

def cells_csv(shape: ChannelShape, lam: float, direction: str = "+", n_ratios: int | None = None) -> str:
    cells = shape.side(direction)
    x, y, _, _ = transfer_arrays(cells, lam)
    n = n_ratios or max(1, (len(cells) - 1) // 2)
    res = hitting_transform(shape, lam, direction, n_ratios=n)
    rows = [(k + 1, float(x[k]), float(y[k]), float(res.rho[k]), float(np.log(res.rho[k])))
            for k in range(n)]
    return csv_text(["k", "x_k", "y_k", "rho_k", "ln_rho_k"], rows)


def transform_curve_csv(shape: ChannelShape, lams, direction: str = "+", n_ratios: int = 10) -> str:
    rows = []
    for lam in lams:
        res = hitting_transform(shape, float(lam), direction, n_ratios=n_ratios)
        rows.append((float(lam), res.log_sum))
    return csv_text(["lambda", "sum_ln_rho"], rows)
