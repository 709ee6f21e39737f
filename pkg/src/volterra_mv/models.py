"""Coefficient pairs (b, sigma) with declared regularity, plus benchmark
models and their analytic mean-field laws.

A model is a drift b(t, s, x, mu) and diffusion sigma(t, s, x, mu) with
state dimension d and noise dimension m.  Coefficients are vectorised over
a leading particle axis: x has shape (N, d), the drift returns (N, d) and
the diffusion (N, d, m).  Built-in models depend on the measure only
through its mean, which keeps the Wasserstein Lipschitz property checkable
by construction (|mean(mu) - mean(nu)| <= W2(mu, nu)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import rng
from .kernels import Kernel, constant_kernel, scale_kernel, square_kernel
from .measures import EmpiricalMeasure


@dataclass(frozen=True)
class RegularityDecl:
    """Declared Lipschitz/growth weights and reference exponents.

    k1/k2 bound the state and measure Lipschitz moduli of drift/diffusion,
    k3/k4 their linear growth; gamma and delta are the declared time-shift
    and s-shift exponents.  These are metadata used as theoretical
    reference slopes; the scheme never evaluates the shift moduli
    themselves.
    """

    k1: Kernel | None = None
    k2: Kernel | None = None
    k3: Kernel | None = None
    k4: Kernel | None = None
    gamma: float | None = None
    delta: float | None = None
    lipschitz_f: float | None = None
    growth_f: float | None = None

    def __post_init__(self):
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.delta is not None and not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")


@dataclass(frozen=True)
class InitialCondition:
    """Deterministic point xi, or i.i.d. Gaussian draws with finite moments.

    Samples are a pure function of (master_seed, particle index) under the
    counter-based stream contract, and particle i keeps its draw when the
    ensemble grows.
    """

    kind: str
    value: np.ndarray | None = None
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if self.kind not in ("deterministic", "gaussian"):
            raise ValueError(f"unknown initial condition kind {self.kind!r}")
        if self.kind == "deterministic":
            if self.value is None:
                raise ValueError("deterministic initial condition needs a value")
            val = np.atleast_1d(np.asarray(self.value, dtype=float))
            if not np.all(np.isfinite(val)):
                raise ValueError("initial value must be finite")
            object.__setattr__(self, "value", val)
        else:
            if not (np.isfinite(self.mean) and np.isfinite(self.std) and self.std >= 0):
                raise ValueError("gaussian initial condition needs finite mean, std >= 0")

    @staticmethod
    def deterministic(value) -> "InitialCondition":
        return InitialCondition(kind="deterministic", value=value)

    @staticmethod
    def gaussian(mean: float, std: float) -> "InitialCondition":
        return InitialCondition(kind="gaussian", value=None, mean=mean, std=std)

    def mean_vector(self, d: int) -> np.ndarray:
        """Mean of the initial law (the mean-field mean at time 0)."""
        if self.kind == "deterministic":
            return np.broadcast_to(self.value, (d,)).astype(float)
        return np.full(d, self.mean)

    def sample(self, master_seed: int, n_particles: int, d: int) -> np.ndarray:
        if self.kind == "deterministic":
            return np.tile(np.broadcast_to(self.value, (d,)), (n_particles, 1))
        gen = rng.normal_stream(master_seed, rng.ROLE_INITIAL, 0)
        z = gen.standard_normal((n_particles, d))
        return self.mean + self.std * z


@dataclass(frozen=True)
class SeparableParts:
    """Factorised coefficients b = kb(t,s) f(x, mean), sigma = ks(t,s) g(x, mean)."""

    kb: Kernel
    ks: Kernel
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    g: Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class OUParams:
    """Parameters of the mean-field Ornstein-Uhlenbeck benchmark."""

    a: float
    sigma0: float


@dataclass(frozen=True, eq=False)
class Model:
    """Drift/diffusion pair of a Volterra mean-field equation."""

    d: int
    m: int
    drift: Callable
    diffusion: Callable
    regularity: RegularityDecl
    x0: InitialCondition
    separable: SeparableParts | None = None
    ou: OUParams | None = None
    label: str = ""

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise ValueError("model dimensions must be positive")


def separable_model(
    kb: Kernel,
    ks: Kernel,
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    g: Callable[[np.ndarray, np.ndarray], np.ndarray],
    x0: InitialCondition,
    *,
    lipschitz_f: float,
    growth_f: float,
    d: int = 1,
    m: int = 1,
    label: str = "separable",
) -> Model:
    """Model with b = kb(t,s) f(x, mean(mu)) and sigma = ks(t,s) g(x, mean(mu)).

    With f, g Lipschitz of constant L this satisfies the Lipschitz and
    growth conditions with weights K1 = K3 = L kb and K2 = K4 = L^2 ks^2,
    and inherits the kernels' declared shift exponents.
    """
    if not (np.isfinite(lipschitz_f) and lipschitz_f >= 0):
        raise ValueError(f"lipschitz_f must be finite and >= 0, got {lipschitz_f}")
    if not (np.isfinite(growth_f) and growth_f >= 0):
        raise ValueError(f"growth_f must be finite and >= 0, got {growth_f}")

    def drift(t, s, x, mu: EmpiricalMeasure):
        return kb.eval(t, s) * f(np.asarray(x, dtype=float), mu.mean())

    def diffusion(t, s, x, mu: EmpiricalMeasure):
        return ks.eval(t, s) * g(np.asarray(x, dtype=float), mu.mean())

    gammas = [
        k.meta.declared_gamma
        for k in (kb, ks)
        if k.meta.declared_gamma is not None
    ]
    gamma = min(gammas) if gammas else None
    reg = RegularityDecl(
        k1=scale_kernel(kb, lipschitz_f),
        k2=scale_kernel(square_kernel(ks), lipschitz_f**2),
        k3=scale_kernel(kb, growth_f),
        k4=scale_kernel(square_kernel(ks), growth_f**2),
        gamma=gamma,
        delta=gamma,
        lipschitz_f=float(lipschitz_f),
        growth_f=float(growth_f),
    )
    return Model(
        d=d,
        m=m,
        drift=drift,
        diffusion=diffusion,
        regularity=reg,
        x0=x0,
        separable=SeparableParts(kb=kb, ks=ks, f=f, g=g),
        label=label,
    )


def mean_field_ou(a: float, sigma0: float, x0: InitialCondition) -> Model:
    """Mean-field Ornstein-Uhlenbeck: d = m = 1, K = 1,
    b = a (mean(mu) - x), sigma = sigma0.  The benchmark with an analytic
    limit law (see `ou_oracle`)."""
    if not (np.isfinite(a) and np.isfinite(sigma0)):
        raise ValueError("mean_field_ou needs finite a, sigma0")
    a = float(a)
    sigma0 = float(sigma0)

    def f(x, mean):
        return a * (mean - x)

    def g(x, mean):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape + (1,), sigma0)

    model = separable_model(
        constant_kernel(1.0),
        constant_kernel(1.0),
        f,
        g,
        x0,
        lipschitz_f=abs(a),
        growth_f=max(abs(a), abs(sigma0)),
        d=1,
        m=1,
        label=f"mean_field_ou(a={a:g}, sigma0={sigma0:g})",
    )
    return Model(
        d=model.d,
        m=model.m,
        drift=model.drift,
        diffusion=model.diffusion,
        regularity=model.regularity,
        x0=model.x0,
        separable=model.separable,
        ou=OUParams(a=a, sigma0=sigma0),
        label=model.label,
    )


def ou_oracle(
    a: float, sigma0: float, m0: float, v0: float, t: float
) -> tuple[float, float]:
    """Mean and variance of the mean-field OU limit law at time t.

    The mean-field mean is stationary (m' = a(m - m) = 0), and the variance
    solves v' = -2 a v + sigma0^2:
      v(t) = sigma0^2/(2a) + (v0 - sigma0^2/(2a)) exp(-2 a t)   for a != 0,
      v(t) = v0 + sigma0^2 t                                    for a = 0.
    """
    if not v0 >= 0:
        raise ValueError(f"initial variance must be >= 0, got {v0}")
    if a == 0.0:
        return float(m0), float(v0 + sigma0**2 * t)
    v_inf = sigma0**2 / (2.0 * a)
    return float(m0), float(v_inf + (v0 - v_inf) * math.exp(-2.0 * a * t))


def ou_limit_model(model: Model) -> Model:
    """Law-frozen copy of a mean-field OU model: the empirical mean in the
    drift is replaced by the analytic limit mean, which is the constant
    mean of the initial law.  Driving this copy with the same increments
    realises the synchronous coupling with the non-interacting system."""
    if model.ou is None:
        raise ValueError("analytic limit law only available for mean_field_ou")
    a = model.ou.a
    sigma0 = model.ou.sigma0
    m_star = float(model.x0.mean_vector(1)[0])

    def f(x, mean):
        return a * (m_star - x)

    def g(x, mean):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape + (1,), sigma0)

    frozen = separable_model(
        constant_kernel(1.0),
        constant_kernel(1.0),
        f,
        g,
        model.x0,
        lipschitz_f=abs(a),
        growth_f=max(abs(a), abs(sigma0), abs(a * m_star)),
        d=1,
        m=1,
        label=f"ou_limit(a={a:g}, sigma0={sigma0:g}, m={m_star:g})",
    )
    return frozen
