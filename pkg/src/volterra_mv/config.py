"""Config-file schema: nested TOML sections mapped onto toolkit objects.

Every builder returns both the constructed object and the fully resolved
parameter table (defaults filled in), so run manifests can echo the exact
configuration that was executed with no hidden defaults.
"""

from __future__ import annotations

import sys
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - version shim
    import tomli as tomllib

from .errors import ConfigError
from .kernels import Kernel, constant_kernel, exp_conv_kernel, fbm_kernel, power_kernel
from .models import InitialCondition, Model, mean_field_ou, separable_model
from .experiments import StudyConfig

_REQUIRED = object()


def load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", "valid TOML", str(exc)) from exc


def _get(tbl: dict, section: str, key: str, kind: str, default=_REQUIRED):
    field = f"{section}.{key}" if section else key
    if key not in tbl:
        if default is _REQUIRED:
            raise ConfigError(field, f"{kind} (required)", "<missing>")
        return default
    val = tbl[key]
    if kind == "float":
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(field, "number", val)
        return float(val)
    if kind == "int":
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(field, "integer", val)
        return int(val)
    if kind == "str":
        if not isinstance(val, str):
            raise ConfigError(field, "string", val)
        return val
    if kind == "number_list":
        if not isinstance(val, list) or not val or any(
            isinstance(v, bool) or not isinstance(v, (int, float)) for v in val
        ):
            raise ConfigError(field, "nonempty list of numbers", val)
        return [float(v) for v in val]
    if kind == "int_list":
        if not isinstance(val, list) or not val or any(
            isinstance(v, bool) or not isinstance(v, int) for v in val
        ):
            raise ConfigError(field, "nonempty list of integers", val)
        return [int(v) for v in val]
    if kind == "table":
        if not isinstance(val, dict):
            raise ConfigError(field, "table", val)
        return val
    raise AssertionError(kind)


def _reject_unknown(tbl: dict, section: str, allowed: set[str]):
    for key in tbl:
        if key not in allowed:
            raise ConfigError(f"{section}.{key}", "a documented key", "<unknown key>")


def build_kernel(tbl: dict, section: str = "kernel") -> tuple[Kernel, dict]:
    kind = _get(tbl, section, "kind", "str")
    horizon = _get(tbl, section, "T", "float", 1.0)
    try:
        if kind == "constant":
            _reject_unknown(tbl, section, {"kind", "T", "c"})
            c = _get(tbl, section, "c", "float")
            return constant_kernel(c, horizon=horizon), {"kind": kind, "T": horizon, "c": c}
        if kind == "power":
            _reject_unknown(tbl, section, {"kind", "T", "alpha"})
            alpha = _get(tbl, section, "alpha", "float")
            return power_kernel(alpha, horizon=horizon), {
                "kind": kind,
                "T": horizon,
                "alpha": alpha,
            }
        if kind == "exp_conv":
            _reject_unknown(tbl, section, {"kind", "T", "lambda", "rho"})
            lam = _get(tbl, section, "lambda", "float")
            rho = _get(tbl, section, "rho", "float")
            return exp_conv_kernel(lam, rho, horizon=horizon), {
                "kind": kind,
                "T": horizon,
                "lambda": lam,
                "rho": rho,
            }
        if kind == "fbm":
            _reject_unknown(tbl, section, {"kind", "T", "H", "quad_tol"})
            hurst = _get(tbl, section, "H", "float")
            quad_tol = _get(tbl, section, "quad_tol", "float", 1e-8)
            return fbm_kernel(hurst, quad_tol=quad_tol, horizon=horizon), {
                "kind": kind,
                "T": horizon,
                "H": hurst,
                "quad_tol": quad_tol,
            }
    except ValueError as exc:
        raise ConfigError(section, "valid kernel parameters", str(exc)) from exc
    raise ConfigError(
        f"{section}.kind", "one of constant|power|exp_conv|fbm", kind
    )


def build_x0(tbl: dict, section: str = "model.x0") -> tuple[InitialCondition, dict]:
    kind = _get(tbl, section, "kind", "str")
    if kind == "deterministic":
        _reject_unknown(tbl, section, {"kind", "value"})
        raw = tbl.get("value")
        if isinstance(raw, list):
            value = _get(tbl, section, "value", "number_list")
        else:
            value = [_get(tbl, section, "value", "float")]
        return InitialCondition.deterministic(np.asarray(value)), {
            "kind": kind,
            "value": value if len(value) > 1 else value[0],
        }
    if kind == "gaussian":
        _reject_unknown(tbl, section, {"kind", "mean", "std"})
        mean = _get(tbl, section, "mean", "float", 0.0)
        std = _get(tbl, section, "std", "float", 1.0)
        if std < 0:
            raise ConfigError(f"{section}.std", "std >= 0", std)
        return InitialCondition.gaussian(mean, std), {
            "kind": kind,
            "mean": mean,
            "std": std,
        }
    raise ConfigError(f"{section}.kind", "one of deterministic|gaussian", kind)


def build_model(tbl: dict, section: str = "model") -> tuple[Model, dict]:
    kind = _get(tbl, section, "kind", "str")
    x0_tbl = _get(tbl, section, "x0", "table", {"kind": "deterministic", "value": 0.0})
    x0, x0_echo = build_x0(x0_tbl, f"{section}.x0")
    if kind == "mean_field_ou":
        _reject_unknown(tbl, section, {"kind", "a", "sigma0", "x0"})
        a = _get(tbl, section, "a", "float")
        sigma0 = _get(tbl, section, "sigma0", "float")
        return mean_field_ou(a, sigma0, x0), {
            "kind": kind,
            "a": a,
            "sigma0": sigma0,
            "x0": x0_echo,
        }
    if kind == "separable":
        # Mean-reversion pair routed through Volterra kernels:
        # b = kb(t,s) a (mean - x), sigma = ks(t,s) sigma0.
        _reject_unknown(tbl, section, {"kind", "a", "sigma0", "x0", "kb", "ks"})
        a = _get(tbl, section, "a", "float")
        sigma0 = _get(tbl, section, "sigma0", "float")
        kb, kb_echo = build_kernel(_get(tbl, section, "kb", "table"), f"{section}.kb")
        ks, ks_echo = build_kernel(_get(tbl, section, "ks", "table"), f"{section}.ks")

        def f(x, mean):
            return a * (mean - x)

        def g(x, mean):
            x = np.asarray(x, dtype=float)
            return np.full(x.shape + (1,), sigma0)

        model = separable_model(
            kb,
            ks,
            f,
            g,
            x0,
            lipschitz_f=abs(a),
            growth_f=max(abs(a), abs(sigma0)),
            label=f"separable(a={a:g}, sigma0={sigma0:g}, kb={kb.meta.label}, "
            f"ks={ks.meta.label})",
        )
        return model, {
            "kind": kind,
            "a": a,
            "sigma0": sigma0,
            "kb": kb_echo,
            "ks": ks_echo,
            "x0": x0_echo,
        }
    raise ConfigError(f"{section}.kind", "one of mean_field_ou|separable", kind)


def build_time_study(
    tbl: dict, model: Model, seed_override: int | None
) -> tuple[StudyConfig, dict]:
    section = "study"
    _reject_unknown(
        tbl, section, {"seed", "p", "levels", "n_max", "particles", "replications"}
    )
    seed = _get(tbl, section, "seed", "int")
    if seed_override is not None:
        seed = seed_override
    p = _get(tbl, section, "p", "float", 2.0)
    levels = _get(tbl, section, "levels", "int_list")
    n_max = _get(tbl, section, "n_max", "int")
    particles = _get(tbl, section, "particles", "int", 256)
    reps = _get(tbl, section, "replications", "int", 1)
    try:
        cfg = StudyConfig(
            model=model,
            seed=seed,
            p=p,
            levels=tuple(levels),
            n_max=n_max,
            n_particles=particles,
            reference="finest",
            replications=reps,
        )
    except ValueError as exc:
        raise ConfigError(section, "a valid time study", str(exc)) from exc
    echo = {
        "seed": seed,
        "p": p,
        "levels": levels,
        "n_max": n_max,
        "particles": particles,
        "replications": reps,
    }
    return cfg, echo


def build_chaos_study(
    tbl: dict, model: Model, seed_override: int | None
) -> tuple[StudyConfig, dict]:
    section = "study"
    _reject_unknown(
        tbl,
        section,
        {"seed", "p", "sizes", "level", "mode", "reference_size", "replications", "q"},
    )
    seed = _get(tbl, section, "seed", "int")
    if seed_override is not None:
        seed = seed_override
    p = _get(tbl, section, "p", "float", 2.0)
    sizes = _get(tbl, section, "sizes", "int_list")
    n_ref = _get(tbl, section, "level", "int", 8)
    mode = _get(tbl, section, "mode", "str", "oracle")
    reference_size = _get(tbl, section, "reference_size", "int", 0)
    reps = _get(tbl, section, "replications", "int", 1)
    q = _get(tbl, section, "q", "float", 0.0)
    if mode not in ("oracle", "ensemble"):
        raise ConfigError(f"{section}.mode", "one of oracle|ensemble", mode)
    try:
        cfg = StudyConfig(
            model=model,
            seed=seed,
            p=p,
            ensemble_sizes=tuple(sizes),
            n_ref=n_ref,
            reference=mode,
            reference_size=reference_size or None,
            replications=reps,
            q=q or None,
        )
    except ValueError as exc:
        raise ConfigError(section, "a valid chaos study", str(exc)) from exc
    echo = {
        "seed": seed,
        "p": p,
        "sizes": sizes,
        "level": n_ref,
        "mode": mode,
        "reference_size": reference_size,
        "replications": reps,
        "q": q,
    }
    return cfg, echo


def _toml_value(val: Any) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, int):
        return str(val)
    if isinstance(val, float):
        return repr(val)
    if isinstance(val, str):
        escaped = val.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(val, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in val) + "]"
    raise TypeError(f"cannot serialise {type(val)!r}")


def dumps_toml(data: dict, prefix: str = "") -> str:
    """Serialise nested dicts as TOML; numbers in shortest round-trip form."""
    lines = []
    subtables = []
    for key, val in data.items():
        if isinstance(val, dict):
            subtables.append((key, val))
        elif val is None:
            continue
        else:
            lines.append(f"{key} = {_toml_value(val)}")
    text = "\n".join(lines)
    for key, val in subtables:
        name = f"{prefix}.{key}" if prefix else key
        body = dumps_toml(val, prefix=name)
        text += f"\n\n[{name}]\n{body}" if text else f"[{name}]\n{body}"
    return text
