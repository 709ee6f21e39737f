"""Convergence-rate studies: strong self-convergence of the dyadic scheme,
propagation of chaos against analytic or large-ensemble references, and
moment-boundedness witnesses.

Rates are always checked one-sided: the theory provides upper bounds with
unknown constants, so a fitted slope at least as steep as the reference
slope is a pass, never an equality.  The theoretical chaos exponents come
in two variants because the printed moment-term exponent -(p-q)/q grows
with N when q > p; the `concentration` variant -(q-p)/q is the decaying
moment-tail form and is the default, while `as_printed` is exposed and
flagged as non-decaying.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import SchemeBlowUpError
from .measures import EmpiricalMeasure, w2
from .models import Model, ou_limit_model
from .scheme import euler_simulate, make_brownian

ZERO_ERROR = 1e-300
# Coupled p-moment errors below this are pure float re-association noise
# (the coarse scheme re-groups the same increment sums); treat them as the
# exact zeros they represent so exact schemes are flagged as such.
COUPLING_NOISE_FLOOR = 1e-24


@dataclass(frozen=True)
class StudyConfig:
    """Parameters of a convergence study.

    `levels` drives time studies (against the shared finest level `n_max`),
    `ensemble_sizes` drives chaos studies at discretisation level `n_ref`
    (against the analytic law, reference="oracle", or one ensemble of
    `reference_size` particles, reference="ensemble").  Replications re-run
    the whole comparison with fresh master seeds, shared within each
    replication so every compared run sees the same noise.
    """

    model: Model
    seed: int
    p: float = 2.0
    levels: tuple[int, ...] | None = None
    ensemble_sizes: tuple[int, ...] | None = None
    n_max: int = 10
    n_ref: int = 8
    n_particles: int = 256
    reference: str = "finest"
    reference_size: int | None = None
    replications: int = 1
    q: float | None = None

    def __post_init__(self):
        if not self.p >= 2.0:
            raise ValueError(f"error moment must satisfy p >= 2, got {self.p}")
        if self.replications < 1:
            raise ValueError(f"replications must be >= 1, got {self.replications}")
        if self.levels is not None:
            lv = tuple(int(x) for x in self.levels)
            if any(b <= a for a, b in zip(lv, lv[1:])):
                raise ValueError("levels must be strictly increasing")
            object.__setattr__(self, "levels", lv)
        if self.ensemble_sizes is not None:
            ns = tuple(int(x) for x in self.ensemble_sizes)
            if any(b <= a for a, b in zip(ns, ns[1:])):
                raise ValueError("ensemble sizes must be strictly increasing")
            if any(x < 1 for x in ns):
                raise ValueError("ensemble sizes must be positive")
            object.__setattr__(self, "ensemble_sizes", ns)
        if self.reference not in ("finest", "oracle", "ensemble"):
            raise ValueError(f"unknown reference {self.reference!r}")


@dataclass(frozen=True)
class FitResult:
    """Least-squares fit of log(error) against log(size)."""

    slope: float | None
    intercept: float | None
    excluded: int = 0
    exact: bool = False
    identifiable: bool = True

    def __iter__(self):
        yield self.slope
        yield self.intercept


@dataclass(frozen=True)
class StudyReport:
    """Rows of (size, error, stderr) plus the fitted and reference slopes.

    `manifest` records full provenance: seeds, resolved parameters, wall
    time, and any flags (excluded replications, exact-scheme short
    circuit)."""

    rows: tuple[tuple[float, float, float], ...]
    fitted_slope: float | None
    fitted_intercept: float | None
    theory_slope: float | None
    manifest: dict = field(default_factory=dict)


def fit_rate(sizes, errors) -> FitResult:
    """OLS fit of log(error) vs log(size).

    Nonpositive errors cannot enter the log fit: isolated ones are excluded
    (counted in `excluded`); if every error is zero the scheme reproduced
    the target exactly and no fit is returned (`exact` flag)."""
    sizes = np.asarray(sizes, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if sizes.shape != errors.shape or sizes.ndim != 1 or sizes.size < 2:
        raise ValueError("need matching 1-d size/error arrays with >= 2 entries")
    if np.any(sizes <= 0):
        raise ValueError("sizes must be strictly positive")
    keep = errors > ZERO_ERROR
    excluded = int(np.sum(~keep))
    if not np.any(keep):
        return FitResult(None, None, excluded=excluded, exact=True)
    if keep.sum() < 2:
        return FitResult(None, None, excluded=excluded, identifiable=False)
    slope, intercept = np.polyfit(np.log(sizes[keep]), np.log(errors[keep]), 1)
    return FitResult(float(slope), float(intercept), excluded=excluded)


@dataclass(frozen=True)
class ChaosRate:
    """Theoretical two-term chaos bound N^e1 (log-modified or not) + N^e2."""

    case: str
    exponents: tuple[float, float]
    log_factor: bool
    variant: str
    dominant: float
    decaying: bool


def chaos_rate_exponent(
    p: float, d: int, q: float, variant: str = "concentration"
) -> ChaosRate:
    """Reference decay exponents of the propagation-of-chaos bound.

    Cases split on p vs d/2 with the excluded moment orders q = 2p (first
    two cases) and q = d/(d-p) (third case) rejected.  The second bound
    term uses exponent -(q-p)/q under the default `concentration` variant;
    `as_printed` uses -(p-q)/q, which is positive for q > p, so the result
    is flagged non-decaying.  `dominant` is the slowest decay among the
    terms (the exponent closest to or above zero)."""
    if d < 1 or d != int(d):
        raise ValueError(f"dimension must be a positive integer, got {d}")
    if not p >= 1.0:
        raise ValueError(f"moment order must satisfy p >= 1, got {p}")
    if not q > p:
        raise ValueError(f"need q > p, got q={q}, p={p}")
    if variant not in ("concentration", "as_printed"):
        raise ValueError(f"unknown variant {variant!r}")

    half_d = d / 2.0
    if p > half_d or p == half_d:
        if q == 2.0 * p:
            raise ValueError(f"q = 2p = {q:g} is excluded in this case")
        first = -0.5
        log_factor = p == half_d
        case = "p>d/2" if p > half_d else "p=d/2"
    else:
        if q == d / (d - p):
            raise ValueError(f"q = d/(d-p) = {q:g} is excluded in this case")
        first = -p / d
        log_factor = False
        case = "p<d/2"
    second = -(q - p) / q if variant == "concentration" else -(p - q) / q
    dominant = max(first, second)
    return ChaosRate(
        case=case,
        exponents=(first, second),
        log_factor=log_factor,
        variant=variant,
        dominant=dominant,
        decaying=dominant < 0.0,
    )


def _map_ordered(fn, items, threads: int):
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _aggregate(rep_errors: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    stacked = np.vstack(rep_errors)
    mean = stacked.mean(axis=0)
    if stacked.shape[0] > 1:
        stderr = stacked.std(axis=0, ddof=1) / np.sqrt(stacked.shape[0])
    else:
        stderr = np.zeros_like(mean)
    return mean, stderr


def _finish_report(
    sizes: np.ndarray,
    rep_errors: list[np.ndarray],
    manifest: dict,
    theory_slope: float | None,
) -> StudyReport:
    mean, stderr = _aggregate(rep_errors)
    fit = fit_rate(sizes, mean)
    manifest["fit_excluded"] = fit.excluded
    manifest["exact_scheme"] = fit.exact
    rows = tuple(
        (float(s), float(e), float(se)) for s, e, se in zip(sizes, mean, stderr)
    )
    return StudyReport(
        rows=rows,
        fitted_slope=fit.slope,
        fitted_intercept=fit.intercept,
        theory_slope=theory_slope,
        manifest=manifest,
    )


def strong_rate_study(cfg: StudyConfig, threads: int = 1) -> StudyReport:
    """Coupled self-convergence against the finest level.

    Each replication draws one Brownian store at level `n_max` and runs
    every requested level off it (synchronous coupling); the error per
    level is the sup over coarse grid times of the ensemble p-moment of
    the difference from the finest-level run.  Rows are keyed by 2^-n, so
    the fitted slope estimates the strong-rate exponent eta*p."""
    if cfg.levels is None:
        raise ValueError("strong_rate_study needs cfg.levels")
    if cfg.reference != "finest":
        raise ValueError("strong_rate_study uses the finest level as reference")
    if cfg.levels[-1] >= cfg.n_max:
        raise ValueError("levels must stay below the finest level n_max")
    start = time.perf_counter()
    seeds = [cfg.seed + r for r in range(cfg.replications)]

    def one(seed_r: int):
        store = make_brownian(seed_r, cfg.n_particles, cfg.model.m, cfg.n_max)
        fine = euler_simulate(cfg.model, cfg.n_max, cfg.n_particles, store)
        errs = np.empty(len(cfg.levels))
        for pos, level in enumerate(cfg.levels):
            coarse = euler_simulate(cfg.model, level, cfg.n_particles, store)
            stride = 2 ** (cfg.n_max - level)
            diff = fine.states[:, ::stride] - coarse.states
            norms = np.linalg.norm(diff, axis=2)
            errs[pos] = np.max(np.mean(norms**cfg.p, axis=0))
        errs[errs < COUPLING_NOISE_FLOOR] = 0.0
        return errs

    outcomes = _map_ordered(_guard(one), seeds, threads)
    rep_errors = [res for res in outcomes if res is not None]
    excluded_reps = [s for s, res in zip(seeds, outcomes) if res is None]
    if not rep_errors:
        raise SchemeBlowUpError("every replication blew up", step=-1)
    manifest = {
        "study": "strong_rate",
        "model": cfg.model.label,
        "seeds": seeds,
        "excluded_replications": excluded_reps,
        "p": cfg.p,
        "n_particles": cfg.n_particles,
        "levels": list(cfg.levels),
        "n_max": cfg.n_max,
        "coupling": "one BrownianStore per replication, shared across levels",
        "threads": threads,
    }
    sizes = 2.0 ** (-np.asarray(cfg.levels, dtype=float))
    report = _finish_report(sizes, rep_errors, manifest, theory_slope=None)
    report.manifest["wall_seconds"] = time.perf_counter() - start
    return report


def _guard(fn):
    def wrapped(arg):
        try:
            return fn(arg)
        except SchemeBlowUpError:
            return None

    return wrapped


def chaos_study(cfg: StudyConfig, threads: int = 1) -> StudyReport:
    """Propagation-of-chaos decay over ensemble sizes.

    Oracle mode couples the interacting run with per-particle limit
    trajectories driven by the same increments, with the law replaced by
    the analytic mean curve (mean-field OU only: a law is never pretended
    known).  Ensemble mode compares against one large reference ensemble
    through the Wasserstein-2 distance of empirical measures at matched
    times; the counter-addressed streams make particle i's noise identical
    across ensemble sizes, so the reference is synchronously coupled too.
    """
    if cfg.ensemble_sizes is None:
        raise ValueError("chaos_study needs cfg.ensemble_sizes")
    start = time.perf_counter()
    seeds = [cfg.seed + r for r in range(cfg.replications)]
    theory = None
    if cfg.q is not None:
        theory = chaos_rate_exponent(cfg.p, cfg.model.d, cfg.q).dominant

    if cfg.reference == "oracle":
        frozen = ou_limit_model(cfg.model)

        def one(seed_r: int):
            errs = np.empty(len(cfg.ensemble_sizes))
            for pos, size in enumerate(cfg.ensemble_sizes):
                store = make_brownian(seed_r, size, cfg.model.m, cfg.n_ref)
                interacting = euler_simulate(cfg.model, cfg.n_ref, size, store)
                limit = euler_simulate(frozen, cfg.n_ref, size, store)
                diff = interacting.states - limit.states
                norms = np.linalg.norm(diff, axis=2)
                errs[pos] = np.max(np.mean(norms**cfg.p, axis=0))
            return errs

        mode_note = "per-particle analytic-law coupling"
    elif cfg.reference == "ensemble":
        if cfg.reference_size is None:
            raise ValueError("ensemble reference needs cfg.reference_size")
        n_ref_particles = int(cfg.reference_size)
        if n_ref_particles < cfg.ensemble_sizes[-1]:
            raise ValueError("reference ensemble must be at least the largest size")
        for size in cfg.ensemble_sizes:
            if n_ref_particles % size != 0:
                raise ValueError(
                    "each ensemble size must divide the reference size so the "
                    "empirical measures can be compared atom-by-atom"
                )

        def one(seed_r: int):
            store = make_brownian(seed_r, n_ref_particles, cfg.model.m, cfg.n_ref)
            reference = euler_simulate(cfg.model, cfg.n_ref, n_ref_particles, store)
            errs = np.empty(len(cfg.ensemble_sizes))
            for pos, size in enumerate(cfg.ensemble_sizes):
                run = euler_simulate(cfg.model, cfg.n_ref, size, store)
                repeat = n_ref_particles // size
                w_max = 0.0
                for k in range(run.times.size):
                    inflated = EmpiricalMeasure(
                        np.repeat(run.states[:, k, :], repeat, axis=0)
                    )
                    w_max = max(w_max, w2(inflated, reference.measure(k)))
                errs[pos] = w_max**cfg.p
            return errs

        mode_note = "one large coupled ensemble, compared through W2"
    else:
        raise ValueError("chaos_study reference must be 'oracle' or 'ensemble'")

    outcomes = _map_ordered(_guard(one), seeds, threads)
    rep_errors = [res for res in outcomes if res is not None]
    excluded_reps = [s for s, res in zip(seeds, outcomes) if res is None]
    if not rep_errors:
        raise SchemeBlowUpError("every replication blew up", step=-1)
    manifest = {
        "study": "chaos",
        "model": cfg.model.label,
        "mode": cfg.reference,
        "mode_note": mode_note,
        "seeds": seeds,
        "excluded_replications": excluded_reps,
        "p": cfg.p,
        "n_ref": cfg.n_ref,
        "ensemble_sizes": list(cfg.ensemble_sizes),
        "reference_size": cfg.reference_size,
        "threads": threads,
    }
    sizes = np.asarray(cfg.ensemble_sizes, dtype=float)
    report = _finish_report(sizes, rep_errors, manifest, theory_slope=theory)
    report.manifest["wall_seconds"] = time.perf_counter() - start
    return report


def moment_study(model: Model, levels, n_particles: int, p: float, store) -> StudyReport:
    """Sup-over-time ensemble p-moments per level; the max/min ratio across
    levels witnesses the level-independent moment bound."""
    if not p >= 2.0:
        raise ValueError(f"error moment must satisfy p >= 2, got {p}")
    levels = tuple(int(x) for x in levels)
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be strictly increasing")
    start = time.perf_counter()
    moments = np.empty(len(levels))
    for pos, level in enumerate(levels):
        ens = euler_simulate(model, level, n_particles, store)
        norms = np.linalg.norm(ens.states, axis=2)
        moments[pos] = np.max(np.mean(norms**p, axis=0))
    ratio = float(np.max(moments) / np.min(moments)) if np.min(moments) > 0 else np.inf
    rows = tuple((2.0 ** (-lv), float(mom), 0.0) for lv, mom in zip(levels, moments))
    manifest = {
        "study": "moment",
        "model": model.label,
        "master_seed": store.master_seed,
        "p": p,
        "n_particles": n_particles,
        "levels": list(levels),
        "max_min_ratio": ratio,
        "wall_seconds": time.perf_counter() - start,
    }
    return StudyReport(
        rows=rows,
        fitted_slope=None,
        fitted_intercept=None,
        theory_slope=None,
        manifest=manifest,
    )
