"""Composite Gauss-Legendre rules on geometrically graded panel meshes.

Kernel integrands blow up (integrably) at interval endpoints: at the moving
diagonal s -> t and, for some kernels, at s -> 0+.  Panels shrinking
geometrically (ratio 1/2) toward a flagged endpoint resolve any integrable
power singularity there, and Gauss nodes are interior, so singular points
are never evaluated.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import QuadratureConvergenceError

GRADE_LEVELS = 40
GAUSS_ORDER = 12
# (extra levels, extra order) tried in turn by the refining integrator.
_REFINE_STEPS = ((0, 0), (8, 4), (16, 8))


@lru_cache(maxsize=None)
def _gauss01(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    return (x + 1.0) * 0.5, w * 0.5


def _graded_edges(levels: int) -> np.ndarray:
    """Panel edges of [0, 1] graded toward 0, including the tiny stub panel
    [0, 2^-levels] so no mass is dropped outright."""
    return np.concatenate(([0.0], 0.5 ** np.arange(levels, -1.0, -1.0)))


@lru_cache(maxsize=None)
def unit_rule(
    singular_left: bool,
    singular_right: bool,
    levels: int = GRADE_LEVELS,
    order: int = GAUSS_ORDER,
) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for integrating over (0, 1) with panels graded
    toward the flagged endpoint(s).  All nodes are strictly interior."""
    if singular_left and singular_right:
        left = 0.5 * _graded_edges(levels)
        edges = np.concatenate((left, (1.0 - left[::-1])[1:]))
    elif singular_left:
        edges = _graded_edges(levels)
    elif singular_right:
        edges = 1.0 - _graded_edges(levels)[::-1]
    else:
        edges = np.linspace(0.0, 1.0, 9)
    xg, wg = _gauss01(order)
    a = edges[:-1][:, None]
    h = np.diff(edges)[:, None]
    nodes = (a + h * xg).ravel()
    weights = (h * wg).ravel()
    return nodes, weights


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    a,
    b,
    *,
    singular_left: bool = True,
    singular_right: bool = True,
    levels: int = GRADE_LEVELS,
    order: int = GAUSS_ORDER,
):
    """Approximate int_a^b f(x) dx.

    `a` and `b` may be scalars or broadcastable arrays; `f` must accept the
    node array (shape broadcast(a, b) + (n_nodes,)) and evaluate
    elementwise.  Returns the broadcast shape of (a, b), or a float for
    scalar input.
    """
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    x, w = unit_rule(bool(singular_left), bool(singular_right), levels, order)
    span = b_arr - a_arr
    nodes = a_arr[..., None] + span[..., None] * x
    # The smallest graded panels can round onto an endpoint; clamp nodes one
    # ulp inside so singular integrands are never evaluated at a or b.  When
    # a and b are adjacent floats there is no interior point: fall back to b,
    # where the integrands used here stay defined (their singularity is at a
    # for nested calls) and the weight is one ulp anyway.
    lo = np.nextafter(a_arr, b_arr)[..., None]
    hi = np.maximum(lo, np.nextafter(b_arr, a_arr)[..., None])
    nodes = np.clip(nodes, lo, hi)
    vals = np.asarray(f(nodes), dtype=float)
    out = (vals @ w) * span
    if np.ndim(out) == 0:
        return float(out)
    return out


def integrate_to_tol(
    f: Callable[[np.ndarray], np.ndarray],
    a,
    b,
    tol: float,
    *,
    singular_left: bool = True,
    singular_right: bool = True,
    levels: int = GRADE_LEVELS,
    order: int = GAUSS_ORDER,
):
    """Refine the graded rule until two successive values agree to `tol`
    (absolute, switching to relative for values above 1 in magnitude).

    Raises QuadratureConvergenceError with the achieved tolerance if the
    refinement budget runs out.
    """
    prev = None
    achieved = np.inf
    cur = None
    for dl, do in _REFINE_STEPS:
        cur = integrate(
            f,
            a,
            b,
            singular_left=singular_left,
            singular_right=singular_right,
            levels=levels + dl,
            order=order + do,
        )
        if prev is not None:
            diff = np.abs(np.asarray(cur) - np.asarray(prev))
            scale = np.maximum(1.0, np.abs(np.asarray(cur)))
            achieved = float(np.max(diff / scale)) if np.size(diff) else 0.0
            if achieved <= tol:
                return cur
        prev = cur
    raise QuadratureConvergenceError(
        f"quadrature did not reach tol={tol:g}; achieved {achieved:g}",
        achieved=achieved,
    )
