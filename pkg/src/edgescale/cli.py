"""Command-line experiments: spectrum, continuum, trace, theta, tw, tails.

Each run writes ``<out>/<command>/<timestamp>-<seed>/`` holding ``samples.csv`` and
``summary.json``; the summary embeds the full config, so passing it back through
``--config`` reproduces the run byte for byte. Exit codes: 0 all gates passed,
1 config error, 2 gate failure, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import shutil
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .continuum import (g_sigma_eigen_sample, sao_eigen_sample, tail_block_hits, tail_blocks, tail_estimates)
from .edge_stats import EdgeSampleBatch, ks_distance, rescale_edge, tail_fit, tail_monotone, write_batch
from .errors import ConfigError, EdgeScaleError, FitError
from .feynman_kac import FINE_BRIDGE_CELLS, BRIDGE_CELLS, pathwise_coupling_check, theta_check, trace_estimate
from .operators import OperatorConfig, build_gsigma, build_hn, build_hn_beta
from .parallel import replica_map
from .randsrc import FAMILIES, PotentialSpec, brownian_path, new_stream, sample_potential
from .tridiag_eig import certify, default_tol, eigen_extreme

EXIT_OK, EXIT_CONFIG, EXIT_GATE, EXIT_RUNTIME = 0, 1, 2, 3

# one stream index per command keeps experiments on disjoint randomness
STREAM_INDEX = {"spectrum": 1, "continuum": 2, "trace": 3, "theta": 4, "tw": 5, "tails": 6}

COMMON = {"seed": (int, 0), "workers": (int, 1), "out": (str, "out")}
EXECUTION_KEYS = ("workers", "out")

SCHEMAS = {
    "spectrum": {"n": (int, 2000), "sigma": (float, 1.0), "alpha": (float, 1.5), "family": (str, "gaussian"),
                 "replicas": (int, 100), "k": (int, 3)},
    "continuum": {"sigma": (float, 1.0), "k": (int, 3), "method": (str, "discretize"), "m": (int, 8192),
                  "riccati_cells": ("int?", None), "replicas": (int, 100), "agree_tol": (float, 0.1)},
    "trace": {"mode": (str, "pathwise"), "n": (int, 2000), "sigma": (float, 1.0), "T": (float, 1.0),
              "family": (str, "gaussian"), "realizations": (int, 5), "replicas": (int, 100000),
              "x_grid": (int, 32), "bridge_cells": (int, FINE_BRIDGE_CELLS), "noise_cells": (int, 8192),
              "z_gate": (float, 5.0)},
    "theta": {"T": ("floats", [0.5, 1.0]), "replicas": (int, 100000), "x_grid": (int, 32),
              "bridge_cells": (int, BRIDGE_CELLS)},
    "tw": {"n": (int, 8000), "m": ("int?", None), "beta": (float, 2.0), "family": (str, "gaussian"),
           "replicas": (int, 3000), "L": (float, 10.0), "sao_m": (int, 400), "ks_threshold": (float, 0.07)},
    "tails": {"sigma": (float, 1.0), "side": (str, "right"), "a_grid": ("floats", [3.0, 4.5, 6.0]),
              "replicas": (int, 100000), "cells": (int, 1024), "exponent": ("float?", None),
              "band": ("floats?", None)},
}

CHOICES = {"family": FAMILIES, "method": ("discretize", "riccati", "both"), "mode": ("pathwise", "trace"),
           "side": ("right", "left")}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _coerce(key, kind, value):
    try:
        if kind in ("int?", "float?", "floats?") and value is None:
            return None
        if kind in (int, "int?"):
            if isinstance(value, bool) or float(value) != int(value):
                raise ValueError
            return int(value)
        if kind in (float, "float?"):
            out = float(value)
            if not math.isfinite(out):
                raise ValueError
            return out
        if kind in ("floats", "floats?"):
            if not isinstance(value, (list, tuple)) or not value:
                raise ValueError
            return [float(v) for v in value]
        if not isinstance(value, str):
            raise ValueError
        return value
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {key!r}: {value!r}") from None


def _validate(command: str, cfg: dict):
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    for key, choices in CHOICES.items():
        if key in cfg:
            need(cfg[key] in choices, f"{key} must be one of {choices}, got {cfg[key]!r}")
    need(0 <= cfg["seed"] < 2**64, "seed must be an unsigned 64-bit integer")
    need(cfg["workers"] >= 1, "workers must be >= 1")
    for key in ("n", "k", "replicas", "m", "realizations", "x_grid", "bridge_cells", "cells", "sao_m",
                "noise_cells", "riccati_cells"):
        if cfg.get(key) is not None:
            need(cfg[key] >= 1, f"{key} must be >= 1")
    for key in ("sigma", "T", "beta", "L"):
        if key in cfg and isinstance(cfg[key], float):
            need(cfg[key] > 0 or (key == "sigma" and cfg[key] == 0), f"{key} must be positive")
    if command == "theta":
        need(all(t > 0 for t in cfg["T"]), "every T must be positive")
    if command == "spectrum":
        need(cfg["k"] <= cfg["n"], "k must not exceed n")
    if command == "tails":
        need(cfg["replicas"] >= 100, "tails need at least 100 replicas")
        need(cfg["band"] is None or len(cfg["band"]) == 2, "band must be [low, high]")
    if command == "trace" and cfg["mode"] == "pathwise":
        need(cfg["n"] >= 500, "pathwise coupling needs n >= 500")
    if command == "continuum":
        need(cfg["m"] >= 2, "m must be >= 2")


def resolve_config(command: str, file_cfg: dict, overrides: dict) -> dict:
    """Defaults, then the config file, then explicit flags."""
    schema = {**COMMON, **SCHEMAS[command]}
    cfg = {k: v[1] for k, v in schema.items()}
    for src in (file_cfg, overrides):
        for key, value in src.items():
            if key not in schema:
                raise ConfigError(f"unknown key {key!r} for command {command!r}")
            cfg[key] = _coerce(key, schema[key][0], value)
    _validate(command, cfg)
    return cfg


def load_config_file(path: str, command: str) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if "config" in data and "command" in data:  # a previous run's summary.json
        if data["command"] != command:
            raise ConfigError(f"summary is for command {data['command']!r}, not {command!r}")
        data = data["config"]
    return data


def _stream(command: str, cfg: dict):
    return new_stream(cfg["seed"], STREAM_INDEX[command])


def _stats(values: np.ndarray) -> dict:
    values = np.asarray(values, dtype=float)
    q = np.quantile(values, [0.05, 0.25, 0.5, 0.75, 0.95])
    se = float(np.std(values, ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    return {"mean": float(np.mean(values)), "stderr": se, "quantiles": dict(zip(["q05", "q25", "q50", "q75", "q95"],
                                                                                 map(float, q)))}


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# ---- per-replica tasks (module level so process pools can pickle them)

def _spectrum_task(i, cfg):
    spec = PotentialSpec(cfg["family"], cfg["sigma"], cfg["alpha"])
    stream = _stream("spectrum", cfg).split(i)
    mat = build_hn(OperatorConfig(cfg["n"], spec), sample_potential(spec, cfg["n"], stream))
    tol = default_tol(mat)
    eigs = eigen_extreme(mat, cfg["k"], "largest", tol)
    return eigs, bool(np.all(certify(mat, eigs, tol)))


def _continuum_task(i, cfg):
    stream = _stream("continuum", cfg).split(i)
    noise = brownian_path(1.0, 1.0 / cfg["m"], stream)
    sample = g_sigma_eigen_sample(cfg["sigma"], cfg["k"], cfg["method"], stream, cfg["m"], noise,
                                  cfg["riccati_cells"] if cfg["method"] == "riccati" else None, cfg["agree_tol"])
    certified = True
    if sample.method == "discretize":
        certified = bool(np.all(certify(build_gsigma(cfg["sigma"], noise), sample.lambdas, 1e-6)))
    return sample.lambdas, sample.cross_check, sample.consistent, certified


def _trace_task(r, cfg):
    stream = _stream("trace", cfg).split(r)
    if cfg["mode"] == "pathwise":
        spec = PotentialSpec(cfg["family"], cfg["sigma"], 1.5)
        rep = pathwise_coupling_check(cfg["n"], cfg["sigma"], cfg["T"], spec, cfg["replicas"], stream,
                                      x_grid=cfg["x_grid"], bridge_cells=cfg["bridge_cells"])
        return rep.eigen_sum, rep.trace, rep.stderr, rep.discrepancy
    noise = brownian_path(1.0, 1.0 / cfg["noise_cells"], stream.split(0))
    tr, se = trace_estimate(cfg["T"], cfg["sigma"], noise, cfg["x_grid"], cfg["replicas"], stream.split(1),
                            cfg["bridge_cells"])
    return math.nan, tr, se, math.nan


def _tw_task(i, cfg):
    stream = _stream("tw", cfg).split(i)
    ocfg = OperatorConfig(cfg["n"], PotentialSpec(cfg["family"], 1.0), cfg["beta"], cfg["m"])
    mat = build_hn_beta(ocfg, sample_potential(ocfg.spec, cfg["n"], stream.split(0)))
    tol = default_tol(mat)
    top = eigen_extreme(mat, 1, "largest", tol)
    sao = sao_eigen_sample(cfg["beta"], 1, cfg["L"], cfg["sao_m"], stream.split(1))
    return top[0], sao[0], bool(certify(mat, top, tol)[0])


def _tails_task(b, cfg):
    return tail_block_hits(cfg["sigma"], cfg["a_grid"], cfg["side"], b, cfg["replicas"], _stream("tails", cfg),
                           cfg["cells"])


# ---- commands: each returns (csv_text | batch, results, gates)

def cmd_spectrum(cfg):
    out = replica_map(_spectrum_task, [(i, cfg) for i in range(cfg["replicas"])], cfg["workers"])
    eigs = np.array([o[0] for o in out])
    batch = rescale_edge(eigs, cfg["n"], 2.0, 2.0, 1.0, "hn", {"root_seed": cfg["seed"],
                                                                "stream_index": STREAM_INDEX["spectrum"]})
    results = {f"lambda_{j}": _stats(batch.values[:, j]) for j in range(cfg["k"])}
    return batch, results, {"sturm_certificates": all(o[1] for o in out)}


def cmd_continuum(cfg):
    out = replica_map(_continuum_task, [(i, cfg) for i in range(cfg["replicas"])], cfg["workers"])
    lams = np.array([o[0] for o in out])
    batch = EdgeSampleBatch(lams, cfg["m"], 0.0, f"gsigma_{cfg['method']}",
                            {"root_seed": cfg["seed"], "stream_index": STREAM_INDEX["continuum"]}, 0.0, 1.0, "lambda")
    results = {f"lambda_{j}": _stats(lams[:, j]) for j in range(cfg["k"])}
    gates = {"sturm_certificates": all(o[3] for o in out),
             "strictly_increasing": bool(np.all(np.diff(lams, axis=1) > 0))}
    if cfg["method"] == "both":
        gap = np.abs(lams - np.array([o[1] for o in out]))
        frac = float(np.mean([o[2] for o in out]))
        results["cross_method"] = {"max_abs_gap": float(gap.max()), "median_abs_gap_lambda0": float(np.median(gap[:, 0])),
                                   "consistent_fraction": frac}
        gates["cross_method_agreement"] = frac >= 0.95
    return batch, results, gates


def cmd_trace(cfg):
    out = replica_map(_trace_task, [(r, cfg) for r in range(cfg["realizations"])], cfg["workers"])
    rows = [(r, *o) for r, o in enumerate(out)]
    text = _csv_text(["realization", "eigen_sum", "trace", "stderr", "discrepancy"], rows)
    arr = np.array(out, dtype=float)
    results = {"trace_mean": float(np.mean(arr[:, 1])), "stderr_median": float(np.median(arr[:, 2]))}
    gates = {}
    if cfg["mode"] == "pathwise":
        z = np.abs(arr[:, 3]) / arr[:, 2]
        results.update({"median_abs_discrepancy": float(np.median(np.abs(arr[:, 3]))), "max_abs_z": float(z.max())})
        gates["discrepancy_within_z_gate"] = bool(np.all(z < cfg["z_gate"]))
    return text, results, gates


def cmd_theta(cfg):
    root = _stream("theta", cfg)
    rows = []
    for j, T in enumerate(cfg["T"]):
        lhs, rhs, se = theta_check(T, cfg["replicas"], root.split(j), cfg["x_grid"], cfg["bridge_cells"])
        rows.append((T, lhs, rhs, se))
    text = _csv_text(["T", "lhs", "rhs", "stderr"], rows)
    results = {repr(T): {"lhs": lhs, "rhs": rhs, "stderr": se} for T, lhs, rhs, se in rows}
    gates = {f"theta_T={T!r}": abs(lhs - rhs) < 3 * se for T, lhs, rhs, se in rows}
    return text, results, gates


def cmd_tw(cfg):
    out = replica_map(_tw_task, [(i, cfg) for i in range(cfg["replicas"])], cfg["workers"])
    m = OperatorConfig(cfg["n"], PotentialSpec(cfg["family"], 1.0), cfg["beta"], cfg["m"]).scaling_index()
    tops = np.array([o[0] for o in out])
    # both columns are Tracy-Widom-side variables: m^2 (lambda_1 - 2) and -Lambda_0(SAO)
    tw_hn = rescale_edge(tops, m, 2.0, 2.0, -1.0, "hn_beta").values
    tw_sao = -np.array([o[1] for o in out])
    ks = ks_distance(tw_hn, tw_sao)
    text = _csv_text(["tw_hn_beta", "tw_sao"], zip(tw_hn, tw_sao))
    results = {"m": m, "ks": ks, "hn_beta": _stats(tw_hn), "sao": _stats(tw_sao)}
    gates = {"ks_below_threshold": ks < cfg["ks_threshold"], "sturm_certificates": all(o[2] for o in out)}
    return text, results, gates


def cmd_tails(cfg):
    hits = sum(replica_map(_tails_task, [(b, cfg) for b in range(tail_blocks(cfg["replicas"]))], cfg["workers"]))
    ests = tail_estimates(cfg["sigma"], cfg["a_grid"], cfg["side"], hits, cfg["replicas"])
    text = _csv_text(["a", "estimate", "stderr", "successes", "ci_high", "low_information"],
                     [(e.a, e.estimate, e.stderr, e.successes, e.ci_high, int(e.low_information)) for e in ests])
    exponent = cfg["exponent"] if cfg["exponent"] is not None else (1.5 if cfg["side"] == "right" else 2.0)
    probs = [e.estimate for e in ests]
    gates = {"monotone": tail_monotone(cfg["a_grid"], probs)}
    results = {"exponent": exponent}
    try:
        fit = tail_fit(cfg["a_grid"], probs, exponent, replicas=cfg["replicas"],
                       stream=_stream("tails", cfg).split(2**32))
        results["fit"] = {"coefficient": fit.coefficient, "intercept": fit.intercept, "ci_low": fit.ci_low,
                          "ci_high": fit.ci_high}
        gates["fit"] = True
        if cfg["band"] is not None:
            gates["coefficient_in_band"] = cfg["band"][0] <= fit.coefficient <= cfg["band"][1]
    except FitError as exc:
        results["fit"] = {"error": str(exc)}
        gates["fit"] = False
    return text, results, gates


COMMANDS = {"spectrum": cmd_spectrum, "continuum": cmd_continuum, "trace": cmd_trace, "theta": cmd_theta,
            "tw": cmd_tw, "tails": cmd_tails}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else repr(float(x))
    return x


def write_artifacts(command: str, cfg: dict, payload, results: dict, gates: dict) -> Path:
    """Write into a temporary directory, then rename it into place."""
    base = Path(cfg["out"]) / command
    base.mkdir(parents=True, exist_ok=True)
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    tmp = Path(tempfile.mkdtemp(prefix=".tmp-", dir=base))
    try:
        if isinstance(payload, EdgeSampleBatch):
            write_batch(payload, tmp / "samples.csv")
        else:
            (tmp / "samples.csv").write_text(payload, encoding="utf-8", newline="")
        # workers and out never change results, so they stay out of the reproducible record
        record = {k: v for k, v in cfg.items() if k not in EXECUTION_KEYS}
        summary = {"command": command, "version": __version__, "config": record, "results": results,
                   "gates": gates, "passed": all(gates.values())}
        (tmp / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8", newline="")
        final = base / f"{stamp}-{cfg['seed']}"
        suffix = 1
        while final.exists():
            suffix += 1
            final = base / f"{stamp}-{cfg['seed']}-{suffix}"
        tmp.rename(final)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return final


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="edgescale", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, schema in SCHEMAS.items():
        p = sub.add_parser(name, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON config (or a previous summary.json)")
        for key, (kind, default) in {**COMMON, **schema}.items():
            flag = "--" + key.replace("_", "-")
            kw = {"dest": key, "help": f"default: {default}"}
            if kind in ("floats", "floats?"):
                kw.update(nargs="+", type=float)
            elif kind in (int, "int?"):
                kw["type"] = int
            elif kind in (float, "float?"):
                kw["type"] = float
            if key in CHOICES:
                kw["choices"] = CHOICES[key]
            p.add_argument(flag, **kw)
    return parser


def run(argv=None) -> int:
    try:
        args = vars(build_parser().parse_args(argv))
        command = args.pop("command")
        file_cfg = load_config_file(args.pop("config"), command) if "config" in args else {}
        cfg = resolve_config(command, file_cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        payload, results, gates = COMMANDS[command](cfg)
        where = write_artifacts(command, cfg, payload, results, gates)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EdgeScaleError, ArithmeticError, OSError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(where)
    for name, ok in gates.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return EXIT_OK if all(gates.values()) else EXIT_GATE


def main(argv=None):
    sys.exit(run(argv))
