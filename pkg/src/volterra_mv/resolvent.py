"""Discrete resolvent kernels on triangular grids.

The resolvent of a nonnegative Volterra weight K is the series R = sum R_n
with R_1 = K and R_{n+1}(t, s) = int_s^t K(t, u) R_n(u, s) du.  It turns the
implicit Volterra Gronwall inequality f <= g + K*f into the explicit bound
f <= g + R*g.  This module tabulates R on a grid, checks the one-sided
resolvent identities, and applies the Gronwall propagation.

Tables live on the *staggered lattice* of a grid: the nodes t_i plus the
panel midpoints u_k.  Midpoint staggering keeps every stored sample away
from the diagonal, where the kernels of interest blow up.  Cell values of a
convolution are computed either by singularity-graded Gauss quadrature
(when both operands are evaluable; accurate near the diagonal) or by the
staggered midpoint product-integration sum (when only samples exist).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import quadrature
from .errors import (
    GridMismatchError,
    ResolventDivergenceError,
    SmallnessViolationError,
)
from .kernels import Kernel


@dataclass(frozen=True)
class TriGrid:
    """Discretisation 0 = t_0 < ... < t_M = T of the triangle's time axis."""

    nodes: np.ndarray
    level: int | None = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("grid needs at least two nodes")
        if nodes[0] != 0.0:
            raise ValueError("grid must start at t_0 = 0")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("grid nodes must be strictly increasing")

    @staticmethod
    def from_level(level: int, horizon: float = 1.0) -> "TriGrid":
        if level < 0 or level != int(level):
            raise ValueError(f"level must be a nonnegative integer, got {level}")
        nodes = np.linspace(0.0, horizon, 2 ** int(level) + 1)
        return TriGrid(nodes=nodes, level=int(level))

    @staticmethod
    def from_nodes(nodes: Sequence[float]) -> "TriGrid":
        return TriGrid(nodes=np.asarray(nodes, dtype=float))

    @property
    def horizon(self) -> float:
        return float(self.nodes[-1])

    @property
    def panels(self) -> int:
        return self.nodes.size - 1

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def mids(self) -> np.ndarray:
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])

    @property
    def lattice(self) -> np.ndarray:
        """Nodes and midpoints interleaved: t_0, u_0, t_1, ..., u_{M-1}, t_M."""
        lat = np.empty(2 * self.panels + 1)
        lat[0::2] = self.nodes
        lat[1::2] = self.mids
        return lat

    @property
    def is_uniform(self) -> bool:
        d = self.deltas
        return bool(np.allclose(d, d[0], rtol=1e-12, atol=0.0))

    def matches(self, other: "TriGrid") -> bool:
        return self.nodes.size == other.nodes.size and bool(
            np.array_equal(self.nodes, other.nodes)
        )


def _strict_lower_mask(n: int) -> np.ndarray:
    return np.tri(n, n, -1, dtype=bool)


class KernelTable:
    """A two-time function attached to a grid.

    Carries lazily materialised samples on the staggered lattice and, when
    available, a pointwise evaluator `fn` that quadrature-based convolution
    can call at arbitrary off-lattice arguments.
    """

    def __init__(
        self,
        grid: TriGrid,
        *,
        fn: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
        raw_fn: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
        lattice_values: np.ndarray | None = None,
        stationary: bool = False,
    ):
        if fn is None and lattice_values is None:
            raise ValueError("a kernel table needs an evaluator or sample values")
        self.grid = grid
        self.fn = fn
        # Non-validating variant for quadrature integrands: nested rules can
        # round nodes onto the diagonal, whose (integrable-singular) values
        # are masked out rather than rejected.
        self.raw_fn = raw_fn if raw_fn is not None else fn
        self.stationary = bool(stationary)
        self._lattice = None
        if lattice_values is not None:
            lat = np.asarray(lattice_values, dtype=float)
            expected = grid.lattice.size
            if lat.shape != (expected, expected):
                raise ValueError(
                    f"lattice values must be {(expected, expected)}, got {lat.shape}"
                )
            self._lattice = lat

    @staticmethod
    def from_kernel(k: Kernel, grid: TriGrid) -> "KernelTable":
        if grid.horizon > k.meta.horizon + 1e-12:
            raise ValueError("grid horizon exceeds the kernel horizon")

        def raw(t, s):
            t_arr, s_arr = np.broadcast_arrays(
                np.asarray(t, dtype=float), np.asarray(s, dtype=float)
            )
            return k._fn(t_arr, s_arr)

        return KernelTable(grid, fn=k.eval, raw_fn=raw, stationary=k.meta.stationary)

    @property
    def evaluable(self) -> bool:
        return self.fn is not None

    def lattice_values(self) -> np.ndarray:
        if self._lattice is None:
            lat = self.grid.lattice
            size = lat.size
            vals = np.zeros((size, size))
            if self.stationary and self.grid.is_uniform:
                taus = lat[1:]  # offsets k * (delta/2) on a uniform lattice
                line = np.asarray(self.fn(taus, np.zeros_like(taus)), dtype=float)
                offs = np.subtract.outer(np.arange(size), np.arange(size)) - 1
                mask = offs >= 0
                vals[mask] = line[offs[mask]]
            else:
                rr, cc = np.nonzero(_strict_lower_mask(size))
                vals[rr, cc] = np.asarray(self.fn(lat[rr], lat[cc]), dtype=float)
            self._lattice = vals
        return self._lattice

    def node_values(self) -> np.ndarray:
        """Values at node cells (t_i, t_j), j < i; zeros elsewhere."""
        return self.lattice_values()[0::2, 0::2]

    def value(self, i: int, j: int) -> float:
        """Single node-cell value R(t_i, t_j); cheap even when the full
        lattice has not been materialised."""
        m = self.grid.panels
        if not (0 <= j < i <= m):
            raise ValueError(f"cell ({i}, {j}) is not strictly below the diagonal")
        if self._lattice is not None:
            return float(self._lattice[2 * i, 2 * j])
        return float(self.fn(self.grid.nodes[i], self.grid.nodes[j]))


def _as_table(obj, grid: TriGrid | None) -> KernelTable:
    if isinstance(obj, Kernel):
        if grid is None:
            raise ValueError("a grid is required when passing raw kernels")
        return KernelTable.from_kernel(obj, grid)
    if isinstance(obj, KernelTable):
        return obj
    raise TypeError(f"expected Kernel or KernelTable, got {type(obj)!r}")


def convolve(a, b, grid: TriGrid | None = None, method: str = "auto") -> KernelTable:
    """Tabulate (a*b)(t, s) = int_s^t a(t, u) b(u, s) du on the grid.

    With both operands evaluable the cell integrals use Gauss panels graded
    toward both endpoints, which keeps full accuracy for diagonal-singular
    kernels; the result then carries its own evaluator so convolutions can
    be chained without losing the singular structure.  Otherwise the
    staggered midpoint product-integration sum over the sampled lattice is
    used: u runs over panel midpoints, so singularities are never sampled.
    """
    at = _as_table(a, grid)
    bt = _as_table(b, grid if grid is not None else at.grid)
    if grid is None:
        grid = at.grid
    if not (at.grid.matches(grid) and bt.grid.matches(grid)):
        raise GridMismatchError("operands tabulated on different grids")
    if method == "auto":
        method = "quadrature" if (at.evaluable and bt.evaluable) else "midpoint"
    if method == "quadrature":
        if not (at.evaluable and bt.evaluable):
            raise ValueError("quadrature convolution needs evaluable operands")
        fa, fb = at.raw_fn, bt.raw_fn

        def conv_fn(t, s):
            t_arr, s_arr = np.broadcast_arrays(
                np.asarray(t, dtype=float), np.asarray(s, dtype=float)
            )

            def integrand(u):
                with np.errstate(divide="ignore", invalid="ignore"):
                    vals = np.asarray(fa(t_arr[..., None], u)) * np.asarray(
                        fb(u, s_arr[..., None])
                    )
                # nodes rounded onto the operands' (integrable) singular
                # lines carry one-ulp panels; drop them instead of letting
                # an inf poison the cell
                return np.where(np.isfinite(vals), vals, 0.0)

            return quadrature.integrate(
                integrand, s_arr, t_arr, singular_left=True, singular_right=True
            )

        return KernelTable(
            grid, fn=conv_fn, stationary=at.stationary and bt.stationary
        )
    if method != "midpoint":
        raise ValueError(f"unknown convolution method {method!r}")
    deltas = grid.deltas
    av = at.lattice_values()
    bv = bt.lattice_values()
    out = (av[:, 1::2] * deltas) @ bv[1::2, :]
    out[~_strict_lower_mask(out.shape[0])] = 0.0
    return KernelTable(
        grid, lattice_values=out, stationary=at.stationary and bt.stationary
    )


@dataclass(frozen=True)
class ResolventTable:
    """Tabulated resolvent with truncation diagnostics.

    `lattice_values[r, c]` approximates R(x_r, x_c) on the staggered lattice
    x = (t_0, u_0, t_1, ...); `values` is the node-cell view R(t_i, s_j),
    j < i.  `term_norms[n-1]` records sup_t int_0^t R_n(t, s) ds and
    `tail_norm` a geometric surrogate for the truncated tail (a diagnostic,
    not a guarantee).
    """

    grid: TriGrid
    lattice_values: np.ndarray
    terms_used: int
    tail_norm: float
    term_norms: tuple[float, ...]

    @property
    def values(self) -> np.ndarray:
        return self.lattice_values[0::2, 0::2]

    def value(self, i: int, j: int) -> float:
        m = self.grid.panels
        if not (0 <= j < i <= m):
            raise ValueError(f"cell ({i}, {j}) is not strictly below the diagonal")
        return float(self.lattice_values[2 * i, 2 * j])


def _series_should_stop(norms: list[float], tol: float) -> bool:
    if norms[-1] == 0.0:
        return True
    if norms[-1] >= tol:
        return False
    if len(norms) < 4:
        return False
    a, b, c, d = norms[-4:]
    return a > b > c > d


def _series_finish(
    norms: list[float], tol: float, max_terms: int, stopped: bool
) -> tuple[int, float]:
    if not stopped:
        tail = norms[-min(3, len(norms)) :]
        if len(norms) >= 3 and not (tail[0] > tail[-1]):
            raise ResolventDivergenceError(
                f"term norms not decaying after {max_terms} terms "
                f"(last: {', '.join(f'{v:.3g}' for v in tail)}); the smallness "
                "hypothesis fails at this horizon",
                term_norms=tuple(norms),
            )
        raise ResolventDivergenceError(
            f"term budget {max_terms} exhausted before reaching tol={tol:g} "
            f"(last norm {norms[-1]:.3g})",
            term_norms=tuple(norms),
        )
    if len(norms) < 2 or norms[-2] == 0.0:
        return len(norms), 0.0
    ratio = norms[-1] / norms[-2]
    tail = norms[-1] / (1.0 - ratio) if ratio < 1.0 else math.inf
    return len(norms), tail


def _one_step_integrals(k: Kernel, grid: TriGrid) -> np.ndarray:
    """int_{t_i}^{t_{i+1}} K(t_{i+1}, s) ds for every panel."""
    uppers = grid.nodes[1:]

    def integrand(s):
        return k.eval(uppers[:, None], s)

    return np.asarray(
        quadrature.integrate(
            integrand, grid.nodes[:-1], uppers, singular_left=True, singular_right=True
        )
    )


def _resolvent_stationary(
    k: Kernel, grid: TriGrid, tol: float, max_terms: int
) -> ResolventTable:
    m = grid.panels
    h = float(grid.deltas[0]) * 0.5
    n_off = 2 * m
    taus = h * np.arange(1, n_off + 1)

    def kap(x):
        return k.eval(x, np.zeros(np.shape(x)))

    # Panel moments of kappa over [(q-1)h, qh]: mass W, linear moments A, B.
    w_mom = np.empty(n_off)
    a_mom = np.empty(n_off)
    w_mom[0] = quadrature.integrate(
        kap, 0.0, h, singular_left=True, singular_right=False
    )
    a_mom[0] = quadrature.integrate(
        lambda x: kap(x) * (x / h), 0.0, h, singular_left=True, singular_right=False
    )
    if n_off > 1:
        lo = taus[:-1]
        hi = taus[1:]
        w_mom[1:] = quadrature.integrate(
            kap, lo, hi, singular_left=False, singular_right=False
        )
        a_mom[1:] = quadrature.integrate(
            lambda x: kap(x) * ((x - lo[:, None]) / h),
            lo,
            hi,
            singular_left=False,
            singular_right=False,
        )
    b_mom = w_mom - a_mom
    cum_w = np.concatenate(([0.0], np.cumsum(w_mom)))

    a_pad = np.concatenate(([0.0], a_mom))
    b_pad = np.concatenate(([0.0], b_mom))

    def conv_step(rho: np.ndarray) -> np.ndarray:
        c1 = np.convolve(rho, a_pad)[: n_off + 1]
        c2 = np.convolve(rho, b_pad)[1 : n_off + 2]
        out = c1 + c2
        out[0] = 0.0
        return out

    def cum_norm(rho: np.ndarray) -> float:
        # sup over nodes t_i of int_0^{t_i} rho, trapezoid on the half mesh
        cums = np.concatenate(([0.0], h * np.cumsum(0.5 * (rho[:-1] + rho[1:]))))
        return float(np.max(cums[0::2]))

    rho1 = np.concatenate(([0.0], np.asarray(kap(taus), dtype=float)))
    norms = [float(np.max(cum_w[0::2]))]
    series = rho1.copy()
    stopped = _series_should_stop(norms, tol)
    if not stopped:

        def rho2_direct() -> np.ndarray:
            def integrand(v):
                return kap(taus[:, None] - v) * kap(v)

            body = quadrature.integrate(
                integrand,
                np.zeros_like(taus),
                taus,
                singular_left=True,
                singular_right=True,
            )
            return np.concatenate(([0.0], np.asarray(body)))

        rho_n = rho2_direct()
        norms.append(cum_norm(rho_n))
        series = series + rho_n
        stopped = _series_should_stop(norms, tol)
        while not stopped and len(norms) < max_terms:
            rho_n = conv_step(rho_n)
            norms.append(cum_norm(rho_n))
            series = series + rho_n
            stopped = _series_should_stop(norms, tol)

    terms_used, tail = _series_finish(norms, tol, max_terms, stopped)

    size = n_off + 1
    offs = np.subtract.outer(np.arange(size), np.arange(size))
    mask = offs >= 1
    lattice = np.zeros((size, size))
    lattice[mask] = series[offs[mask]]
    return ResolventTable(
        grid=grid,
        lattice_values=lattice,
        terms_used=terms_used,
        tail_norm=tail,
        term_norms=tuple(norms),
    )


def _resolvent_lattice(
    k: Kernel, grid: TriGrid, tol: float, max_terms: int
) -> ResolventTable:
    lat = grid.lattice
    size = lat.size
    m = grid.panels
    mids = grid.mids
    nodes = grid.nodes
    deltas = grid.deltas

    # K sampled at (lattice row, midpoint column); rows must lie above the
    # panel: x_r >= t_{k+1}, i.e. k <= r//2 - 1.
    rows = np.arange(size)
    cols = np.arange(m)
    row_mask = cols[None, :] <= rows[:, None] // 2 - 1
    k_latmid = np.zeros((size, m))
    rr, kk = np.nonzero(row_mask)
    k_latmid[rr, kk] = k.eval(lat[rr], mids[kk])
    kw = k_latmid * deltas

    # First kernel term on the full lattice.
    t1 = np.zeros((size, size))
    rr, cc = np.nonzero(_strict_lower_mask(size))
    t1[rr, cc] = k.eval(lat[rr], lat[cc])

    # Fringe masses: the half panels that full midpoint panels cannot cover.
    quarter = nodes[:-1] + 0.25 * deltas

    def f1_masses() -> np.ndarray:
        def integrand(v):
            return k.eval(v, mids[:, None])

        return np.asarray(
            quadrature.integrate(
                integrand, mids, nodes[1:], singular_left=True, singular_right=False
            )
        )

    def g_masses() -> np.ndarray:
        def integrand(v):
            return k.eval(mids[:, None], v)

        return np.asarray(
            quadrature.integrate(
                integrand, nodes[:-1], mids, singular_left=False, singular_right=True
            )
        )

    f_mass = f1_masses()
    g_mass = g_masses()

    # K at quarter points for the first upper fringe (K itself is evaluable
    # there; later terms fall back to the adjacent lattice sample).
    i_idx = np.arange(m)
    kq_mask = np.arange(size)[None, :] <= 2 * i_idx[:, None]
    k_quarter = np.zeros((m, size))
    ii, cc = np.nonzero(kq_mask)
    k_quarter[ii, cc] = k.eval(quarter[ii], lat[cc])

    lower_mask = _strict_lower_mask(size)

    # Product-integration edge corrections.  The plain midpoint sum loses
    # an O(delta^(1-2*alpha)) chunk on the panel next to K's diagonal
    # singularity; integrating K exactly over that top panel (with the
    # other factor frozen at its midpoint sample) restores it.  The same
    # loss occurs on the bottom panel of the first convolution, where the
    # right factor is K itself.
    row_idx = np.arange(size)
    k_top = row_idx // 2 - 1  # index of the top full panel per row
    top_valid = k_top >= 0

    def top_weights() -> np.ndarray:
        rows = row_idx[top_valid]
        lo = nodes[k_top[top_valid]]
        hi = nodes[k_top[top_valid] + 1]

        def integrand(v):
            return k.eval(lat[rows][:, None], v)

        w_full = np.zeros(size)
        w_full[top_valid] = np.asarray(
            quadrature.integrate(
                integrand, lo, hi, singular_left=False, singular_right=True
            )
        )
        return w_full

    col_idx = np.arange(size)
    k_bot = (col_idx + 1) // 2  # index of the bottom full panel per column
    bot_valid = k_bot <= m - 1

    def bottom_weights() -> np.ndarray:
        cols = col_idx[bot_valid]
        lo = nodes[k_bot[bot_valid]]
        hi = nodes[k_bot[bot_valid] + 1]

        def integrand(v):
            return k.eval(v, lat[cols][:, None])

        w_full = np.zeros(size)
        w_full[bot_valid] = np.asarray(
            quadrature.integrate(
                integrand, lo, hi, singular_left=True, singular_right=False
            )
        )
        return w_full

    w_top = top_weights()
    w_bot = bottom_weights()
    # difference between exact panel mass of K and its midpoint estimate
    top_gain = np.zeros(size)
    top_gain[top_valid] = w_top[top_valid] - kw[row_idx[top_valid], k_top[top_valid]]
    top_rows = np.where(top_valid, 2 * k_top + 1, 0)

    def node_norms(t_n: np.ndarray) -> float:
        node_rows = t_n[0::2, 1::2]  # (M+1, M): samples R_n(t_i, u_k)
        sums = node_rows @ deltas
        return float(np.max(sums))

    def norm1() -> float:
        uppers = nodes[1:]

        def integrand(s):
            return k.eval(uppers[:, None], s)

        vals = quadrature.integrate(
            integrand,
            np.zeros_like(uppers),
            uppers,
            singular_left=True,
            singular_right=True,
        )
        return float(np.max(np.asarray(vals)))

    def step(t_n: np.ndarray, n_index: int) -> np.ndarray:
        out = kw @ t_n[1::2, :]
        # top-panel correction: exact K mass against the frozen sample
        out[top_valid] += top_gain[top_valid, None] * t_n[top_rows[top_valid], :]
        if n_index == 1:
            # bottom-panel correction, where the right factor is K itself
            bot_gain = np.zeros(size)
            bot_gain[bot_valid] = w_bot[bot_valid] - (
                t_n[2 * k_bot[bot_valid] + 1, col_idx[bot_valid]]
                * deltas[k_bot[bot_valid]]
            )
            mid_rows = np.where(bot_valid, 2 * k_bot + 1, 1)
            out += (k_latmid[:, np.minimum(k_bot, m - 1)] * bot_gain[None, :]) * (
                t_n[mid_rows, col_idx] != 0.0
            )
        out[:, 1::2] += k_latmid * f_mass[None, :]
        if n_index == 1:
            proxy = k_quarter.copy()
        else:
            proxy = t_n[0 : 2 * m : 2, :].copy()
            proxy[i_idx, 2 * i_idx] = t_n[2 * i_idx + 1, 2 * i_idx]
        out[1::2, :] += g_mass[:, None] * proxy
        out[~lower_mask] = 0.0
        return out

    norms = [norm1()]
    series = t1.copy()
    t_n = t1
    n_index = 1
    stopped = _series_should_stop(norms, tol)
    while not stopped and len(norms) < max_terms:
        t_n = step(t_n, n_index)
        n_index += 1
        f_mass = 0.5 * deltas * t_n[2 * i_idx + 2, 2 * i_idx + 1]
        norms.append(node_norms(t_n))
        series = series + t_n
        stopped = _series_should_stop(norms, tol)

    terms_used, tail = _series_finish(norms, tol, max_terms, stopped)
    return ResolventTable(
        grid=grid,
        lattice_values=series,
        terms_used=terms_used,
        tail_norm=tail,
        term_norms=tuple(norms),
    )


def resolvent_sum(
    k: Kernel, grid: TriGrid, tol: float = 1e-8, max_terms: int = 60
) -> ResolventTable:
    """Sum the iterated-convolution series of `k` on `grid`.

    Stops once the term norm drops below `tol` after three consecutive
    decreases (term norms may rise before the geometric decay kicks in).
    Rejects kernels whose discrete one-step integrals reach 1, since the
    series then has no contraction margin, and kernels singular at s -> 0+,
    whose table column at s = 0 would not be finite.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if max_terms < 2:
        raise ValueError(f"max_terms must be at least 2, got {max_terms}")
    if not k.meta.nonnegative:
        raise ValueError("resolvent series requires a nonnegative kernel")
    if k.meta.singular_at_zero:
        raise ValueError(
            "kernel blows up at s -> 0+, so the table column at s = 0 is not "
            "finite; tabulated resolvents are not supported for this kernel"
        )
    if grid.horizon > k.meta.horizon + 1e-12:
        raise ValueError("grid horizon exceeds the kernel horizon")
    one_step = _one_step_integrals(k, grid)
    worst = float(np.max(one_step))
    if worst >= 1.0:
        raise SmallnessViolationError(
            f"one-step kernel integral reaches {worst:.6g} >= 1 on this grid",
            value=worst,
        )
    if k.meta.stationary and grid.is_uniform:
        return _resolvent_stationary(k, grid, tol, max_terms)
    return _resolvent_lattice(k, grid, tol, max_terms)


@dataclass(frozen=True)
class IdentityResiduals:
    """Sup-norm residuals of the one-sided resolvent identities.

    `left` checks R - K = K*R, `right` checks R - K = R*K; both vanish for
    the true resolvent, and both are reported rather than picking one.
    """

    left: float
    right: float

    @property
    def worst(self) -> float:
        return max(self.left, self.right)


def verify_resolvent_identity(k: Kernel, r: ResolventTable) -> IdentityResiduals:
    """Max residuals of R - K - K*R and R - K - R*K over the node cells."""
    grid = r.grid
    m = grid.panels
    nodes = grid.nodes
    mids = grid.mids
    deltas = grid.deltas
    lat = r.lattice_values

    i_idx = np.arange(m + 1)
    k_idx = np.arange(m)
    nm_mask = k_idx[None, :] <= i_idx[:, None] - 1
    k_nm = np.zeros((m + 1, m))
    rr, kk = np.nonzero(nm_mask)
    k_nm[rr, kk] = k.eval(nodes[rr], mids[kk])

    mn_mask = i_idx[None, :] <= k_idx[:, None]
    k_mn = np.zeros((m, m + 1))
    kk, jj = np.nonzero(mn_mask)
    k_mn[kk, jj] = k.eval(mids[kk], nodes[jj])

    k_nn = np.zeros((m + 1, m + 1))
    rr, jj = np.nonzero(_strict_lower_mask(m + 1))
    k_nn[rr, jj] = k.eval(nodes[rr], nodes[jj])

    # contiguous copies: matmul on strided lattice views bypasses BLAS
    r_mn = np.ascontiguousarray(lat[1::2, 0::2])
    r_nm = np.ascontiguousarray(lat[0::2, 1::2])
    kr = (k_nm * deltas) @ r_mn
    rk = r_nm @ (k_mn * deltas[:, None])
    r_nn = r.values
    cell = _strict_lower_mask(m + 1)
    left = float(np.max(np.abs(r_nn - k_nn - kr)[cell])) if m else 0.0
    right = float(np.max(np.abs(r_nn - k_nn - rk)[cell])) if m else 0.0
    return IdentityResiduals(left=left, right=right)


class GronwallBound:
    """Grid function t_i -> g(t_i) + int_0^{t_i} R(t_i, s) g(s) ds."""

    def __init__(self, times: np.ndarray, values: np.ndarray):
        self.times = times
        self.values = values

    def __call__(self, t: float) -> float:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9 * max(1.0, self.times[-1]):
            raise ValueError(f"t={t} is not a grid node")
        return float(self.values[idx])


def gronwall_bound(r: ResolventTable, g: Callable[[float], float]) -> GronwallBound:
    """Propagate f <= g + K*f into the explicit bound g + R*g on the grid.

    Uses the same staggered midpoint product rule as the tables, so `g` is
    sampled at panel midpoints as well as at the nodes.
    """
    grid = r.grid
    g_nodes = np.asarray([float(g(t)) for t in grid.nodes])
    g_mids = np.asarray([float(g(t)) for t in grid.mids])
    if np.any(~np.isfinite(g_nodes)) or np.any(~np.isfinite(g_mids)):
        raise ValueError("g must be finite on the grid")
    if np.any(g_nodes < 0.0) or np.any(g_mids < 0.0):
        raise ValueError("g must be nonnegative")
    vals = g_nodes + (r.lattice_values[0::2, 1::2] * grid.deltas) @ g_mids
    return GronwallBound(times=grid.nodes.copy(), values=vals)
