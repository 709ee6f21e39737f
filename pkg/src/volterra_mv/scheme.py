"""Explicit dyadic Euler scheme for the interacting particle system.

On the level-n grid t_k = k 2^-n of [0, 1] the update freezes coefficients
per panel and remaps their time arguments so singular kernels are never
evaluated on the diagonal:

  X_k = X_0 + sum_{j<k} b(tt_k, ss_j, X_j, mu_j) 2^-n
            + sum_{j<k} sigma(tt_k, ss_j, X_j, mu_j) dW_j,

with tt_k = max(t_k, 2^-n) and ss_j = t_j for j >= 1, 2^-(n+1) for j = 0,
so tt_k - ss_j >= 2^-(n+1) always.  Because tt_k enters every summand the
weighted sums are recomputed per output time: the O(4^n) cost is inherent
to the non-Markovian dynamics.  Interaction is explicit: mu_j is the
frozen empirical measure of column j.

Brownian increments come from a counter-addressed store that can be
coarsened to any coarser level exactly, which is what makes coupled
convergence studies well-defined.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import rng
from .errors import SchemeBlowUpError
from .measures import EmpiricalMeasure
from .models import Model


def tilde_t(t: float, n: int) -> float:
    """Output-time map: t itself, floored at the first grid point 2^-n."""
    _check_level(n)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    step = 2.0 ** (-n)
    return t if t >= step else step


def tilde_s(s: float, n: int) -> float:
    """Integration-time map: the left grid neighbour floor(2^n s) 2^-n for
    s >= 2^-n, and the half step 2^-(n+1) below the first grid point."""
    _check_level(n)
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0, 1), got {s}")
    step = 2.0 ** (-n)
    if s < step:
        return 0.5 * step
    return np.floor(s / step) * step


def _check_level(n: int):
    if n != int(n) or n < 0:
        raise ValueError(f"level must be a nonnegative integer, got {n}")


@dataclass(frozen=True, eq=False)
class BrownianStore:
    """Finest-level Brownian increments for N particles, coupling-safe.

    increments[i, j] is the m-vector over [j 2^-n_max, (j+1) 2^-n_max],
    distributed N(0, 2^-n_max I) and a pure function of
    (master_seed, i, j) under the stream contract in `rng`.
    """

    master_seed: int
    n_max: int
    n_particles: int
    m: int
    increments: np.ndarray


def make_brownian(master_seed: int, n_particles: int, m: int, n_max: int) -> BrownianStore:
    """Draw the finest-level increment array from per-particle streams."""
    _check_level(n_max)
    if n_particles < 1 or m < 1:
        raise ValueError("need at least one particle and one noise dimension")
    steps = 2**n_max
    scale = np.sqrt(2.0 ** (-n_max))
    incr = np.empty((n_particles, steps, m))
    for i in range(n_particles):
        gen = rng.normal_stream(master_seed, rng.ROLE_INCREMENTS, i)
        incr[i] = gen.standard_normal((steps, m)) * scale
    return BrownianStore(
        master_seed=master_seed,
        n_max=n_max,
        n_particles=n_particles,
        m=m,
        increments=incr,
    )


def coarsen(store: BrownianStore, n: int) -> np.ndarray:
    """Level-n increments: block sums of 2^(n_max - n) finest increments."""
    _check_level(n)
    if n > store.n_max:
        raise ValueError(f"level {n} exceeds the store's finest level {store.n_max}")
    factor = 2 ** (store.n_max - n)
    blocks = store.increments.reshape(store.n_particles, 2**n, factor, store.m)
    return blocks.sum(axis=2)


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Particle trajectories on a dyadic grid with their empirical measures."""

    level: int
    n_particles: int
    times: np.ndarray
    states: np.ndarray  # (N, 2^level + 1, d)

    def measure(self, k: int) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.states[:, k, :])

    @cached_property
    def measures(self) -> tuple[EmpiricalMeasure, ...]:
        return tuple(self.measure(k) for k in range(self.times.size))


def _coefficient_table(kernel, t_tilde: np.ndarray, s_tilde: np.ndarray) -> np.ndarray:
    """Table kernel(tt_k, ss_j) for j < k; zero above.  All argument pairs
    keep tt - ss >= half a step, so singular kernels stay finite."""
    steps = s_tilde.size
    tab = np.zeros((steps + 1, steps))
    kk, jj = np.tril_indices(steps + 1, k=-1, m=steps)
    tab[kk, jj] = kernel.eval(t_tilde[kk], s_tilde[jj])
    return tab


def _contract(weights: np.ndarray, stacked: np.ndarray) -> np.ndarray:
    # einsum with optimize=False compiles to fixed-order loops: results do
    # not depend on BLAS threading, which the determinism contract needs.
    return np.einsum("j,jnd->nd", weights, stacked)


def euler_simulate(model: Model, n: int, n_particles: int, store: BrownianStore) -> Ensemble:
    """Run the explicit scheme at level n for the first `n_particles`
    particles of the store.  Aborts with the step index if any state goes
    non-finite (no clamping: clamped paths would corrupt rate estimates)."""
    _check_level(n)
    if n > store.n_max:
        raise ValueError(f"level {n} exceeds the store's finest level {store.n_max}")
    if not 1 <= n_particles <= store.n_particles:
        raise ValueError(
            f"particle count must lie in [1, {store.n_particles}], got {n_particles}"
        )
    if model.m != store.m:
        raise ValueError(f"model noise dimension {model.m} != store dimension {store.m}")

    steps = 2**n
    dt = 2.0 ** (-n)
    times = np.arange(steps + 1) * dt
    dw = coarsen(store, n)[:n_particles]
    t_tilde = np.maximum(times, dt)
    s_tilde = np.empty(steps)
    s_tilde[0] = 0.5 * dt
    s_tilde[1:] = times[1:steps]

    x0 = model.x0.sample(store.master_seed, n_particles, model.d)
    states = np.empty((n_particles, steps + 1, model.d))
    states[:, 0] = x0

    sep = model.separable
    if sep is not None:
        kb_tab = _coefficient_table(sep.kb, t_tilde, s_tilde)
        ks_tab = _coefficient_table(sep.ks, t_tilde, s_tilde)
        f_buf = np.empty((steps, n_particles, model.d))
        gdw_buf = np.empty((steps, n_particles, model.d))
        for k in range(1, steps + 1):
            j = k - 1
            col = states[:, j]
            mean_j = col.mean(axis=0)
            f_buf[j] = sep.f(col, mean_j)
            gmat = np.asarray(sep.g(col, mean_j), dtype=float)
            gdw_buf[j] = np.einsum("ndm,nm->nd", gmat, dw[:, j])
            x_k = (
                x0
                + dt * _contract(kb_tab[k, :k], f_buf[:k])
                + _contract(ks_tab[k, :k], gdw_buf[:k])
            )
            if not np.all(np.isfinite(x_k)):
                raise SchemeBlowUpError(
                    f"non-finite state at step {k} of level {n}", step=k
                )
            states[:, k] = x_k
    else:
        ones = np.ones(steps)
        measures: list[EmpiricalMeasure] = []
        b_buf = np.empty((steps, n_particles, model.d))
        s_buf = np.empty((steps, n_particles, model.d))
        for k in range(1, steps + 1):
            measures.append(EmpiricalMeasure(states[:, k - 1, :]))
            for j in range(k):
                col = states[:, j]
                b_buf[j] = model.drift(t_tilde[k], s_tilde[j], col, measures[j])
                sig = np.asarray(
                    model.diffusion(t_tilde[k], s_tilde[j], col, measures[j]),
                    dtype=float,
                )
                s_buf[j] = np.einsum("ndm,nm->nd", sig, dw[:, j])
            x_k = (
                x0
                + dt * _contract(ones[:k], b_buf[:k])
                + _contract(ones[:k], s_buf[:k])
            )
            if not np.all(np.isfinite(x_k)):
                raise SchemeBlowUpError(
                    f"non-finite state at step {k} of level {n}", step=k
                )
            states[:, k] = x_k

    return Ensemble(level=n, n_particles=n_particles, times=times, states=states)


def picard_simulate(
    model: Model, n: int, n_particles: int, store: BrownianStore, iterations: int
) -> Ensemble:
    """Successive-approximation solver at particle level.

    Sweep 1 is the constant-X_0 path; each further sweep re-evaluates the
    coefficient sums along the previous sweep's trajectories and measures,
    with exact kernel arguments (t_k, t_j): no diagonal remapping, so the
    time argument s = 0 is sampled and kernels singular there are rejected.
    """
    _check_level(n)
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    if n > store.n_max:
        raise ValueError(f"level {n} exceeds the store's finest level {store.n_max}")
    if not 1 <= n_particles <= store.n_particles:
        raise ValueError(
            f"particle count must lie in [1, {store.n_particles}], got {n_particles}"
        )
    if model.m != store.m:
        raise ValueError(f"model noise dimension {model.m} != store dimension {store.m}")
    sep = model.separable
    if sep is not None:
        for kern in (sep.kb, sep.ks):
            if kern.meta.singular_at_zero:
                raise ValueError(
                    "picard sweeps evaluate kernels at s = 0, which is singular "
                    f"for {kern.meta.label}"
                )

    steps = 2**n
    dt = 2.0 ** (-n)
    times = np.arange(steps + 1) * dt
    dw = coarsen(store, n)[:n_particles]
    x0 = model.x0.sample(store.master_seed, n_particles, model.d)

    states = np.tile(x0[:, None, :], (1, steps + 1, 1))
    if sep is not None:
        kb_tab = _coefficient_table(sep.kb, times, times[:steps])
        ks_tab = _coefficient_table(sep.ks, times, times[:steps])
    for _ in range(iterations - 1):
        new = np.empty_like(states)
        new[:, 0] = x0
        if sep is not None:
            f_buf = np.empty((steps, n_particles, model.d))
            gdw_buf = np.empty((steps, n_particles, model.d))
            for j in range(steps):
                col = states[:, j]
                mean_j = col.mean(axis=0)
                f_buf[j] = sep.f(col, mean_j)
                gmat = np.asarray(sep.g(col, mean_j), dtype=float)
                gdw_buf[j] = np.einsum("ndm,nm->nd", gmat, dw[:, j])
            for k in range(1, steps + 1):
                new[:, k] = (
                    x0
                    + dt * _contract(kb_tab[k, :k], f_buf[:k])
                    + _contract(ks_tab[k, :k], gdw_buf[:k])
                )
        else:
            ones = np.ones(steps)
            prev_measures = [EmpiricalMeasure(states[:, j, :]) for j in range(steps)]
            b_buf = np.empty((steps, n_particles, model.d))
            s_buf = np.empty((steps, n_particles, model.d))
            for k in range(1, steps + 1):
                for j in range(k):
                    col = states[:, j]
                    b_buf[j] = model.drift(times[k], times[j], col, prev_measures[j])
                    sig = np.asarray(
                        model.diffusion(times[k], times[j], col, prev_measures[j]),
                        dtype=float,
                    )
                    s_buf[j] = np.einsum("ndm,nm->nd", sig, dw[:, j])
                new[:, k] = (
                    x0
                    + dt * _contract(ones[:k], b_buf[:k])
                    + _contract(ones[:k], s_buf[:k])
                )
        if not np.all(np.isfinite(new)):
            bad = np.where(~np.all(np.isfinite(new), axis=(0, 2)))[0]
            step = int(bad[0]) if bad.size else -1
            raise SchemeBlowUpError(f"non-finite state at step {step}", step=step)
        states = new

    return Ensemble(level=n, n_particles=n_particles, times=times, states=states)


def coupled_error(
    model: Model,
    n_particles: int,
    n_coarse: int,
    n_fine: int,
    store: BrownianStore,
    p: float,
) -> float:
    """Synchronously coupled level-(n_coarse) vs level-(n_fine) error:
    max over coarse grid times of the ensemble mean of |X_fine - X_coarse|^p."""
    if not p >= 2.0:
        raise ValueError(f"error moment must satisfy p >= 2, got {p}")
    if not n_coarse < n_fine:
        raise ValueError(
            f"need n_coarse < n_fine, got ({n_coarse}, {n_fine}); identical "
            "levels make a degenerate comparison"
        )
    fine = euler_simulate(model, n_fine, n_particles, store)
    coarse = euler_simulate(model, n_coarse, n_particles, store)
    stride = 2 ** (n_fine - n_coarse)
    diff = fine.states[:, ::stride] - coarse.states
    norms = np.linalg.norm(diff, axis=2)
    return float(np.max(np.mean(norms**p, axis=0)))
