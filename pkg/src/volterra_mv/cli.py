"""Command-line entry point: config-driven runs with CSV outputs and a
manifest recording the full resolved configuration, seeds and file digests.

Exit status is 0 on success; on failure a single machine-readable line
`error: <category>: <message>` goes to stderr (categories: usage,
config-schema, numerical, io, internal) and the status is nonzero.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, config
from .errors import ConfigError, VolterraError
from .experiments import chaos_rate_exponent, chaos_study, strong_rate_study
from .kernels import hoelder_probe, integrability_probe
from .measures import EmpiricalMeasure, w2
from .resolvent import TriGrid, resolvent_sum, verify_resolvent_identity
from .scheme import euler_simulate, make_brownian

OUT_DIR_ENV = "VOLTERRA_MV_OUT"
COMMANDS = (
    "simulate",
    "converge-time",
    "converge-chaos",
    "chaos-rate",
    "resolvent",
    "kernel-probe",
    "wasserstein",
)


def _fmt(val) -> str:
    if isinstance(val, (bool, np.bool_)):
        return "true" if val else "false"
    if isinstance(val, (int, np.integer)):
        return str(int(val))
    if isinstance(val, (float, np.floating)):
        return repr(float(val))
    return str(val)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _write_manifest(
    out_dir: Path,
    command: str,
    config_echo: dict,
    outputs: list[Path],
    wall_seconds: float,
    master_seed: int | None,
) -> Path:
    run_tbl = {
        "command": command,
        "version": __version__,
        "wall_seconds": wall_seconds,
    }
    if master_seed is not None:
        run_tbl["master_seed"] = master_seed
    digests = {p.name: _digest(p) for p in outputs}
    text = (
        "[run]\n"
        + config.dumps_toml(run_tbl)
        + "\n\n[outputs]\n"
        + "\n".join(f'"{name}" = "{dig}"' for name, dig in digests.items())
    )
    echo = config.dumps_toml({"config": config_echo})
    text += "\n\n" + echo + "\n"
    path = out_dir / "manifest.txt"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path


def _cmd_simulate(cfg: dict, out_dir: Path, seed_override, threads) -> tuple[dict, list[Path], int | None]:
    model, model_echo = config.build_model(config._get(cfg, "", "model", "table"))
    sim = config._get(cfg, "", "sim", "table")
    config._reject_unknown(sim, "sim", {"seed", "level", "particles"})
    seed = config._get(sim, "sim", "seed", "int")
    if seed_override is not None:
        seed = seed_override
    level = config._get(sim, "sim", "level", "int")
    particles = config._get(sim, "sim", "particles", "int")
    store = make_brownian(seed, particles, model.m, level)
    ens = euler_simulate(model, level, particles, store)
    rows = []
    for k, t in enumerate(ens.times):
        for i in range(particles):
            rows.append([t, i, *ens.states[i, k]])
    path = out_dir / "trajectories.csv"
    _write_csv(path, ["t", "particle"] + [f"x_{j + 1}" for j in range(model.d)], rows)
    echo = {
        "model": model_echo,
        "sim": {"seed": seed, "level": level, "particles": particles},
    }
    return echo, [path], seed


def _cmd_converge_time(cfg, out_dir, seed_override, threads):
    model, model_echo = config.build_model(config._get(cfg, "", "model", "table"))
    study_tbl = config._get(cfg, "", "study", "table")
    study, study_echo = config.build_time_study(study_tbl, model, seed_override)
    report = strong_rate_study(study, threads=threads)
    path = out_dir / "report.csv"
    _write_csv(path, ["size", "error", "stderr"], report.rows)
    echo = {"model": model_echo, "study": study_echo}
    return echo, [path], study.seed


def _cmd_converge_chaos(cfg, out_dir, seed_override, threads):
    model, model_echo = config.build_model(config._get(cfg, "", "model", "table"))
    study_tbl = config._get(cfg, "", "study", "table")
    study, study_echo = config.build_chaos_study(study_tbl, model, seed_override)
    report = chaos_study(study, threads=threads)
    path = out_dir / "report.csv"
    _write_csv(path, ["size", "error", "stderr"], report.rows)
    echo = {"model": model_echo, "study": study_echo}
    return echo, [path], study.seed


def _cmd_chaos_rate(cfg, out_dir, seed_override, threads):
    tbl = config._get(cfg, "", "rate", "table")
    config._reject_unknown(tbl, "rate", {"p", "d", "q", "variant"})
    p = config._get(tbl, "rate", "p", "float")
    d = config._get(tbl, "rate", "d", "int")
    q = config._get(tbl, "rate", "q", "float")
    variant = config._get(tbl, "rate", "variant", "str", "concentration")
    try:
        rate = chaos_rate_exponent(p, d, q, variant=variant)
    except ValueError as exc:
        raise ConfigError("rate", "an admissible (p, d, q) triple", str(exc)) from exc
    lines = [f"case: {rate.case} (p={p:g}, d={d}, q={q:g}, variant={variant})"]
    for idx, expo in enumerate(rate.exponents, start=1):
        suffix = " * log(1+N)" if (idx == 1 and rate.log_factor) else ""
        lines.append(f"term {idx}: N^{expo:g}{suffix}")
    lines.append(
        f"dominant: N^{rate.dominant:g}"
        + (" (decaying)" if rate.decaying else " (NON-DECAYING bound)")
    )
    print("\n".join(lines))
    path = out_dir / "chaos_rate.csv"
    _write_csv(
        path,
        ["term", "exponent", "log_factor"],
        [
            [1, rate.exponents[0], rate.log_factor],
            [2, rate.exponents[1], False],
        ],
    )
    echo = {"rate": {"p": p, "d": d, "q": q, "variant": variant}}
    return echo, [path], None


def _cmd_resolvent(cfg, out_dir, seed_override, threads):
    kernel, kernel_echo = config.build_kernel(config._get(cfg, "", "kernel", "table"))
    tbl = config._get(cfg, "", "resolvent", "table")
    config._reject_unknown(tbl, "resolvent", {"level", "tol", "max_terms"})
    level = config._get(tbl, "resolvent", "level", "int")
    tol = config._get(tbl, "resolvent", "tol", "float", 1e-8)
    max_terms = config._get(tbl, "resolvent", "max_terms", "int", 60)
    grid = TriGrid.from_level(level, horizon=kernel.meta.horizon)
    table = resolvent_sum(kernel, grid, tol=tol, max_terms=max_terms)
    residuals = verify_resolvent_identity(kernel, table)
    csv_path = out_dir / "resolvent.csv"
    values = table.values
    rows = []
    for i in range(1, grid.panels + 1):
        for j in range(i):
            rows.append([grid.nodes[i], grid.nodes[j], values[i, j]])
    _write_csv(csv_path, ["t", "s", "R"], rows)
    diag_path = out_dir / "resolvent_diagnostics.txt"
    with open(diag_path, "w", encoding="utf-8") as fh:
        fh.write(f"terms_used = {table.terms_used}\n")
        fh.write(f"tail_norm = {_fmt(table.tail_norm)}\n")
        fh.write(
            "term_norms = ["
            + ", ".join(_fmt(v) for v in table.term_norms)
            + "]\n"
        )
        fh.write(f"identity_residual_left = {_fmt(residuals.left)}\n")
        fh.write(f"identity_residual_right = {_fmt(residuals.right)}\n")
    echo = {
        "kernel": kernel_echo,
        "resolvent": {"level": level, "tol": tol, "max_terms": max_terms},
    }
    return echo, [csv_path, diag_path], None


def _cmd_kernel_probe(cfg, out_dir, seed_override, threads):
    kernel, kernel_echo = config.build_kernel(config._get(cfg, "", "kernel", "table"))
    tbl = config._get(cfg, "", "probe", "table")
    kind = config._get(tbl, "probe", "kind", "str")
    if kind == "integrability":
        config._reject_unknown(tbl, "probe", {"kind", "beta", "times", "tol"})
        beta = config._get(tbl, "probe", "beta", "float")
        times = config._get(tbl, "probe", "times", "number_list")
        tol = config._get(tbl, "probe", "tol", "float", 1e-8)
        report = integrability_probe(kernel, beta, times, tol=tol)
        header = ["t", "integral"]
        echo_probe = {"kind": kind, "beta": beta, "times": times, "tol": tol}
        summary = [f"sup_integral = {_fmt(report.constant_estimate)}"]
    elif kind == "hoelder":
        config._reject_unknown(tbl, "probe", {"kind", "mode", "base_t", "lags", "tol"})
        mode = config._get(tbl, "probe", "mode", "str")
        base_t = config._get(tbl, "probe", "base_t", "float")
        lags = config._get(tbl, "probe", "lags", "number_list")
        tol = config._get(tbl, "probe", "tol", "float", 1e-8)
        try:
            report = hoelder_probe(kernel, mode, base_t, lags, tol=tol)
        except ValueError as exc:
            raise ConfigError("probe", "a valid Hoelder probe", str(exc)) from exc
        header = ["lag", "modulus"]
        echo_probe = {
            "kind": kind,
            "mode": mode,
            "base_t": base_t,
            "lags": lags,
            "tol": tol,
        }
        summary = [
            f"identifiable = {'true' if report.identifiable else 'false'}",
            f"exponent_estimate = {_fmt(report.exponent_estimate) if report.exponent_estimate is not None else 'none'}",
            f"constant_estimate = {_fmt(report.constant_estimate)}",
            f"r_squared = {_fmt(report.r_squared) if report.r_squared is not None else 'none'}",
            f"excluded = {report.excluded}",
        ]
    else:
        raise ConfigError("probe.kind", "one of integrability|hoelder", kind)
    csv_path = out_dir / "probe.csv"
    _write_csv(csv_path, header, report.samples)
    summary_path = out_dir / "probe_summary.txt"
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(summary) + "\n")
    print("\n".join(summary))
    echo = {"kernel": kernel_echo, "probe": echo_probe}
    return echo, [csv_path, summary_path], None


def _cmd_wasserstein(cfg, out_dir, seed_override, threads):
    tbl = config._get(cfg, "", "wasserstein", "table")
    config._reject_unknown(tbl, "wasserstein", {"a", "b"})
    path_a = config._get(tbl, "wasserstein", "a", "str")
    path_b = config._get(tbl, "wasserstein", "b", "str")
    pts_a = np.loadtxt(path_a, delimiter=",", ndmin=2)
    pts_b = np.loadtxt(path_b, delimiter=",", ndmin=2)
    try:
        dist = w2(EmpiricalMeasure(pts_a), EmpiricalMeasure(pts_b))
    except ValueError as exc:
        raise ConfigError("wasserstein", "two matching point clouds", str(exc)) from exc
    print(_fmt(dist))
    path = out_dir / "distance.txt"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_fmt(dist) + "\n")
    echo = {"wasserstein": {"a": path_a, "b": path_b}}
    return echo, [path], None


_HANDLERS = {
    "simulate": _cmd_simulate,
    "converge-time": _cmd_converge_time,
    "converge-chaos": _cmd_converge_chaos,
    "chaos-rate": _cmd_chaos_rate,
    "resolvent": _cmd_resolvent,
    "kernel-probe": _cmd_kernel_probe,
    "wasserstein": _cmd_wasserstein,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="volterra-mv",
        description="Volterra mean-field SDE simulation and verification runs",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML config file")
        p.add_argument(
            "--out",
            default=None,
            help=f"output directory (default: ${OUT_DIR_ENV} or ./out)",
        )
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument(
            "--threads", type=int, default=1, help="worker concurrency cap"
        )
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    start = time.perf_counter()
    try:
        cfg = config.load_config(args.config)
        out_dir = Path(args.out or os.environ.get(OUT_DIR_ENV) or "out")
        out_dir.mkdir(parents=True, exist_ok=True)
        handler = _HANDLERS[args.command]
        echo, outputs, master_seed = handler(cfg, out_dir, args.seed, args.threads)
        _write_manifest(
            out_dir,
            args.command,
            echo,
            outputs,
            wall_seconds=time.perf_counter() - start,
            master_seed=master_seed,
        )
        return 0
    except ConfigError as exc:
        print(f"error: config-schema: {exc}", file=sys.stderr)
        return 2
    except (VolterraError, ValueError) as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:  # pragma: no cover - last resort
        print(f"error: internal: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    raise SystemExit(main())
