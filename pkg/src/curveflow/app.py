"""Command line interface: simulation runs, convergence studies, and curve
distances.

Config files are flat ``key = value`` text with ``#`` comments.  Numbers may
be written as fractions ("1/640").  Exit codes: 0 success, 1 configuration or
input error, 2 numerical failure (partial outputs are still written).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import read_snapshot, write_snapshot
from .linalg import SolverError
from .metrics import ConvergenceRow, manifold_distance, write_diagnostics_csv, write_eoc_csv
from .schemes import SchemeConfig, SchemeError, run

__all__ = [
    "ConfigError",
    "parse_config_file",
    "parse_path_rule",
    "cli_simulate",
    "cli_converge",
    "cli_distance",
    "main",
]


class ConfigError(Exception):
    """A configuration file or CLI input is invalid."""


def _number(text: str, where: str) -> float:
    """Parse a float, accepting fraction syntax 'a/b'."""
    text = text.strip()
    try:
        if "/" in text:
            num, _, den = text.partition("/")
            return float(num) / float(den)
        return float(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"{where}: invalid number '{text}'") from exc


def _integer(text: str, where: str) -> int:
    value = _number(text, where)
    if value != int(value):
        raise ConfigError(f"{where}: expected an integer, got '{text}'")
    return int(value)


def _number_list(text: str, where: str) -> List[float]:
    parts = text.replace(",", " ").split()
    if not parts:
        raise ConfigError(f"{where}: expected at least one number")
    return [_number(p, where) for p in parts]


def parse_config_file(path: str) -> Dict[str, Tuple[str, int]]:
    """Read a flat key = value file; returns {key: (raw value, line number)}."""
    entries: Dict[str, Tuple[str, int]] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config '{path}': {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got '{line}'")
        if key in entries:
            raise ConfigError(f"{path}:{lineno}: duplicate key '{key}'")
        entries[key] = (value, lineno)
    return entries


_PATH_RULE = re.compile(
    r"^\s*(?:tau\s*=\s*)?(?P<coef>[^h*\s]+)?\s*\*?\s*h\s*"
    r"(?:\^\s*[({\[]?\s*(?P<exp>[0-9]+(?:\s*/\s*[0-9]+)?|[0-9]*\.[0-9]+)\s*[)}\]]?)?\s*$"
)


def parse_path_rule(text: str):
    """Parse a refinement path rule 'tau = c * h^e' (e.g. '0.05h', 'h^2',
    '0.05h^(2/3)').  Returns (c, e) and a resolver mapping tau -> N with
    N = round((c / tau)^(1/e)) and h = 1/N."""
    m = _PATH_RULE.match(text)
    if not m:
        raise ConfigError(f"invalid path rule '{text}' (expected forms: c*h, h^2, c*h^(2/3))")
    coef = 1.0 if m.group("coef") in (None, "") else _number(m.group("coef"), "path rule coefficient")
    exp_text = m.group("exp")
    if exp_text is None:
        exponent = 1.0
    elif "/" in exp_text:
        num, _, den = exp_text.partition("/")
        exponent = float(num) / float(den)
    else:
        exponent = float(exp_text)
    if coef <= 0 or exponent <= 0:
        raise ConfigError(f"path rule '{text}' must have positive coefficient and exponent")

    def resolve(tau: float) -> int:
        n = int(round((coef / tau) ** (1.0 / exponent)))
        if n < 3:
            raise ConfigError(f"path rule '{text}' gives N={n} < 3 at tau={tau}")
        return n

    return coef, exponent, resolve


_SCHEME_FIELDS = {
    "scheme": ("scheme", str),
    "shape": ("shape", str),
    "a": ("a", "number"),
    "b": ("b", "number"),
    "width": ("width", "number"),
    "height": ("height", "number"),
    "N": ("N", "integer"),
    "tau": ("tau", "number"),
    "T": ("T", "number"),
    "tol": ("tol", "number"),
    "gamma": ("gamma", "number"),
    "max_newton": ("max_newton", "integer"),
}


def _scheme_kwargs(entries: Dict[str, Tuple[str, int]], path: str, skip=()) -> Dict[str, object]:
    kwargs: Dict[str, object] = {}
    for key, (value, lineno) in entries.items():
        if key in skip:
            continue
        if key not in _SCHEME_FIELDS:
            raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
        field, kind = _SCHEME_FIELDS[key]
        where = f"{path}:{lineno}: {key}"
        if kind is str:
            kwargs[field] = value
        elif kind == "integer":
            kwargs[field] = _integer(value, where)
        else:
            kwargs[field] = _number(value, where)
    return kwargs


def _build_scheme_config(entries, path: str, skip=(), **overrides) -> SchemeConfig:
    kwargs = _scheme_kwargs(entries, path, skip=skip)
    kwargs.update(overrides)
    for required in ("scheme", "N", "tau", "T"):
        if required not in kwargs:
            raise ConfigError(f"{path}: missing required key '{required}'")
    try:
        return SchemeConfig(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _config_echo(config: SchemeConfig) -> Dict[str, object]:
    echo: Dict[str, object] = {
        "scheme": config.scheme,
        "N": config.N,
        "tau": config.tau,
        "T": config.T,
        "tol": config.tol,
        "gamma": config.gamma_value,
        "max_newton": config.max_newton,
        "bdf_order": config.bdf_order,
        "shape": config.shape,
    }
    if config.shape == "ellipse":
        echo.update(a=config.a, b=config.b)
    elif config.shape == "rectangle":
        echo.update(width=config.width, height=config.height)
    return echo


def _write_manifest(out_dir: str, payload: Dict[str, object]) -> str:
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def cli_simulate(config_path: str) -> int:
    """Run one simulation: writes diagnostics.csv, the requested snapshot
    files and manifest.json into the configured output directory."""
    started = time.perf_counter()
    entries = parse_config_file(config_path)
    out_dir = entries.pop("out", (".", 0))[0]
    snapshot_times: List[float] = []
    if "snapshots" in entries:
        value, lineno = entries.pop("snapshots")
        snapshot_times = _number_list(value, f"{config_path}:{lineno}: snapshots")
    config = _build_scheme_config(entries, config_path)

    result = run(config, snapshot_times)

    os.makedirs(out_dir, exist_ok=True)
    files: List[str] = []
    diag_path = os.path.join(out_dir, "diagnostics.csv")
    write_diagnostics_csv(result.series, diag_path)
    files.append("diagnostics.csv")
    for i, snap in enumerate(result.snapshots):
        name = f"snapshot_{i:02d}.txt"
        write_snapshot(os.path.join(out_dir, name), snap.curve, snap.t, snap.kappa)
        files.append(name)
    manifest: Dict[str, object] = {
        "command": "simulate",
        "config": _config_echo(config),
        "snapshot_times": [snap.t for snap in result.snapshots],
        "files": files + ["manifest.json"],
        "switch_time": result.switch_time,
        "forced_switch": result.forced_switch,
        "duration_seconds": time.perf_counter() - started,
    }
    if result.failure is not None:
        manifest["failure"] = f"{type(result.failure).__name__}: {result.failure}"
    _write_manifest(out_dir, manifest)
    if result.failure is not None:
        print(f"numerical failure: {manifest['failure']}", file=sys.stderr)
        return 2
    return 0


def _converge_level(payload: Dict[str, object]) -> Dict[str, object]:
    # worker for one refinement level; returns the terminal curve vertices
    config = SchemeConfig(**payload)  # type: ignore[arg-type]
    result = run(config)
    if result.failure is not None:
        return {"ok": False, "error": f"{type(result.failure).__name__}: {result.failure}"}
    return {"ok": True, "vertices": np.array(result.state.history[-1].curve.vertices)}


def _thread_cap() -> int:
    raw = os.environ.get("CURVEFLOW_THREADS", "1")
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ConfigError(f"CURVEFLOW_THREADS must be an integer, got '{raw}'") from exc
    return max(1, cap)


def cli_converge(config_path: str) -> int:
    """Run a refinement study: one run per tau with N set by the path rule,
    errors between consecutive terminal curves, orders between consecutive
    error rows; writes eoc.csv and manifest.json."""
    started = time.perf_counter()
    entries = parse_config_file(config_path)
    out_dir = entries.pop("out", (".", 0))[0]
    if "taus" not in entries:
        raise ConfigError(f"{config_path}: missing required key 'taus'")
    taus_value, taus_line = entries.pop("taus")
    taus = _number_list(taus_value, f"{config_path}:{taus_line}: taus")
    if len(taus) < 2:
        raise ConfigError(f"{config_path}:{taus_line}: need at least two taus")
    if "path" not in entries:
        raise ConfigError(f"{config_path}: missing required key 'path'")
    path_value, _ = entries.pop("path")
    _, _, resolve = parse_path_rule(path_value)

    # accuracy studies run the pure schemes: mode switching disabled
    configs = [
        _build_scheme_config(entries, config_path, skip=("N", "tau", "gamma"), N=resolve(tau), tau=tau, gamma=0.0)
        for tau in taus
    ]
    payloads = [
        {f: getattr(c, f) for f in ("scheme", "N", "tau", "T", "tol", "gamma", "max_newton", "shape", "a", "b", "width", "height")}
        for c in configs
    ]

    workers = min(_thread_cap(), len(payloads))
    outcomes: List[Optional[Dict[str, object]]] = [None] * len(payloads)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, outcome in enumerate(pool.map(_converge_level, payloads)):
                outcomes[i] = outcome
    else:
        for i, payload in enumerate(payloads):
            outcomes[i] = _converge_level(payload)

    failure: Optional[str] = None
    terminal: List[np.ndarray] = []
    for i, outcome in enumerate(outcomes):
        if not outcome["ok"]:
            failure = f"level {i} (tau={taus[i]}, N={configs[i].N}): {outcome['error']}"
            break
        terminal.append(outcome["vertices"])

    rows: List[ConvergenceRow] = []
    prev: Optional[Tuple[float, float]] = None
    for j in range(len(terminal) - 1):
        error = manifold_distance(terminal[j], terminal[j + 1])
        tau, h = taus[j], 1.0 / configs[j].N
        order = None
        if prev is not None and prev[1] > 0 and error > 0 and tau < prev[0]:
            order = math.log(prev[1] / error) / math.log(prev[0] / tau)
        rows.append(ConvergenceRow(tau=tau, h=h, error=error, order=order))
        prev = (tau, error)

    os.makedirs(out_dir, exist_ok=True)
    eoc_path = os.path.join(out_dir, "eoc.csv")
    write_eoc_csv(rows, eoc_path)
    manifest: Dict[str, object] = {
        "command": "converge",
        "config": _config_echo(configs[0]),
        "path_rule": path_value,
        "levels": [{"tau": c.tau, "N": c.N} for c in configs],
        "files": ["eoc.csv", "manifest.json"],
        "duration_seconds": time.perf_counter() - started,
    }
    if failure is not None:
        manifest["failure"] = failure
    _write_manifest(out_dir, manifest)
    if failure is not None:
        print(f"numerical failure: {failure}", file=sys.stderr)
        return 2
    return 0


def cli_distance(file_a: str, file_b: str) -> int:
    """Print the manifold distance between the curves in two snapshot files
    with 12 significant digits."""
    try:
        _, curve_a, _ = read_snapshot(file_a)
        _, curve_b, _ = read_snapshot(file_b)
    except OSError as exc:
        raise ConfigError(f"cannot read snapshot: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"invalid snapshot: {exc}") from exc
    try:
        value = manifold_distance(curve_a, curve_b)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(format(value, "#.12g"))
    return 0


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors, which this tool reserves
    # for numerical failures; remap to the config-error status
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="curveflow", description="Structure-preserving curve diffusion schemes")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p_sim = sub.add_parser("simulate", help="run one simulation from a config file")
    p_sim.add_argument("--config", required=True, metavar="PATH")
    p_conv = sub.add_parser("converge", help="run a refinement study from a config file")
    p_conv.add_argument("--config", required=True, metavar="PATH")
    p_dist = sub.add_parser("distance", help="manifold distance between two snapshot files")
    p_dist.add_argument("fileA")
    p_dist.add_argument("fileB")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cli_simulate(args.config)
        if args.command == "converge":
            return cli_converge(args.config)
        return cli_distance(args.fileA, args.fileB)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SchemeError, SolverError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
