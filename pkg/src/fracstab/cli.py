"""Command-line front end: config ingestion, experiment runs, serialization.

One JSON config describes one experiment; every run writes its outputs
atomically into a directory.  Output formatting is pinned down to the
byte: shortest round-trip decimals, line-feed newlines, UTF-8, no locale
dependence, so repeated runs with the same seed diff clean.

Exit status: 0 success, 1 analysis finished without a conclusive
certificate (report still written), 2 input error, 3 numerical failure.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from .errors import ConfigError, FracstabError, SectorViolationError
from .matfun import as_square_matrix, check_spectral_condition, ml_matrix, spectral_decompose
from .norms import VECTOR_NORMS, operator_norm, vector_norm
from .quad import TimeGrid, graded_grid, uniform_grid
from .solver import (
    LinearConstant,
    LinearDecaying,
    LinearTable,
    NonlinearSaturating,
    NonlinearTable,
    NoPerturbation,
    residual_check,
    solve_abm,
    solve_rl_scalar_exact,
)
from .special_fn import MLParams
from .stability import boundedness_probe, classify

KINDS = (
    "MlEval",
    "Solve",
    "Analyze",
    "DecayFit",
    "RobustDemo",
    "Counterexample",
    "BoundednessProbe",
)
FORMATS = ("json", "csv")
STABLE_VERDICTS = ("RobustStable", "UniformSmallStable", "DecayingStable")
COUNTEREXAMPLE_HORIZON = 50.0
DEMO_POINTS = 10
DEMO_TARGET = 0.1


def _fail(msg):
    raise ConfigError(msg)


def _as_float(value, what):
    try:
        out = float(value)
    except (TypeError, ValueError):
        _fail(f"{what} must be a number, got {value!r}")
    if not math.isfinite(out):
        _fail(f"{what} must be finite, got {value!r}")
    return out


def _as_matrix(value, what):
    if not isinstance(value, list) or not value:
        _fail(f"{what} must be a nonempty nested list")
    rows = []
    for row in value:
        if not isinstance(row, list) or len(row) != len(value):
            _fail(f"{what} must be square")
        rows.append([_as_float(v, f"{what} entry") for v in row])
    return rows


def _get(mapping, key, what, default=_fail):
    if key not in mapping:
        if default is _fail:
            _fail(f"missing {what}")
        return default
    return mapping[key]


def parse_config(raw):
    """Validate a config mapping and return it in canonical form.

    The canonical form fills every optional field with its default, so
    parsing is idempotent: parse(serialize(parse(raw))) == parse(raw).
    """
    if not isinstance(raw, dict):
        _fail("config must be a JSON object")
    name = _get(raw, "name", "config name")
    if not isinstance(name, str) or not name:
        _fail("name must be a nonempty string")
    kind = _get(raw, "kind", "experiment kind")
    if kind not in KINDS:
        _fail(f"unknown experiment kind {kind!r}, expected one of {KINDS}")

    system = _get(raw, "system", "system block")
    if not isinstance(system, dict):
        _fail("system must be an object")
    alpha = _as_float(_get(system, "alpha", "system.alpha"), "system.alpha")
    if not 0.0 < alpha <= 1.0:
        _fail(f"system.alpha must lie in (0, 1], got {alpha!r}")
    a = _as_matrix(_get(system, "a", "system.a"), "system.a")
    norm = _get(system, "norm", "system.norm", "max")
    if norm not in VECTOR_NORMS:
        _fail(f"system.norm must be one of {VECTOR_NORMS}, got {norm!r}")
    d = len(a)
    x0_raw = _get(system, "x0", "system.x0", None)
    if x0_raw is None:
        x0 = [1.0] * d
    else:
        if not isinstance(x0_raw, list) or len(x0_raw) != d:
            _fail(f"system.x0 must be a list of length {d}")
        x0 = [_as_float(v, "system.x0 entry") for v in x0_raw]

    pert = _parse_perturbation(_get(raw, "perturbation", "", {"kind": "none"}), d)

    grid = _get(raw, "grid", "grid block")
    if not isinstance(grid, dict):
        _fail("grid must be an object")
    t_max = _as_float(_get(grid, "t_max", "grid.t_max"), "grid.t_max")
    if t_max <= 0.0:
        _fail(f"grid.t_max must be positive, got {t_max!r}")
    n = _get(grid, "n", "grid.n")
    if not isinstance(n, int) or isinstance(n, bool) or n < 2:
        _fail(f"grid.n must be an integer >= 2, got {n!r}")
    grading = _as_float(_get(grid, "grading", "", 1.0), "grid.grading")
    if grading < 1.0:
        _fail(f"grid.grading must be >= 1, got {grading!r}")

    seed = _get(raw, "seed", "", 42)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
        _fail(f"seed must be an unsigned 64-bit integer, got {seed!r}")

    output = _get(raw, "output", "", {})
    if not isinstance(output, dict):
        _fail("output must be an object")
    directory = _get(output, "directory", "", None)
    if directory is not None and (not isinstance(directory, str) or not directory):
        _fail("output.directory must be a nonempty string")
    formats = _get(output, "formats", "", list(FORMATS))
    if (
        not isinstance(formats, list)
        or not formats
        or any(f not in FORMATS for f in formats)
        or len(set(formats)) != len(formats)
    ):
        _fail(f"output.formats must be a nonempty subset of {FORMATS}")

    params = _get(raw, "params", "", {})
    if not isinstance(params, dict):
        _fail("params must be an object")
    canon_params = {}
    if kind == "Counterexample":
        lam = _as_float(_get(params, "lam", "", 1.0), "params.lam")
        if lam <= 0.0:
            _fail(f"params.lam must be positive, got {lam!r}")
        canon_params = {"lam": lam, "x0": _as_float(_get(params, "x0", "", 1.0), "params.x0")}
    elif params:
        _fail(f"params not accepted for kind {kind!r}")

    if kind == "BoundednessProbe":
        if t_max < 100.0:
            _fail("boundedness probe needs grid.t_max >= 100")
        if not pert["kind"].startswith(("none", "linear")):
            _fail("boundedness probe needs a linear perturbation kind")

    return {
        "name": name,
        "kind": kind,
        "system": {"alpha": alpha, "a": a, "norm": norm, "x0": x0},
        "perturbation": pert,
        "grid": {"t_max": t_max, "n": n, "grading": grading},
        "seed": seed,
        "output": {"directory": directory, "formats": sorted(formats)},
        "params": canon_params,
    }


def _parse_perturbation(raw, d):
    if not isinstance(raw, dict):
        _fail("perturbation must be an object")
    kind = _get(raw, "kind", "perturbation.kind")
    if kind == "none":
        return {"kind": "none"}
    if kind == "linear_constant":
        q0 = _as_matrix(_get(raw, "q0", "perturbation.q0"), "perturbation.q0")
        if len(q0) != d:
            _fail("perturbation.q0 dimension does not match system.a")
        return {"kind": kind, "q0": q0}
    if kind == "linear_decaying":
        q0 = _as_matrix(_get(raw, "q0", "perturbation.q0"), "perturbation.q0")
        if len(q0) != d:
            _fail("perturbation.q0 dimension does not match system.a")
        gamma = _as_float(_get(raw, "gamma", "perturbation.gamma"), "perturbation.gamma")
        if gamma <= 0.0:
            _fail(f"perturbation.gamma must be positive, got {gamma!r}")
        return {"kind": kind, "q0": q0, "gamma": gamma}
    if kind == "linear_table":
        times = _get(raw, "times", "perturbation.times")
        mats = _get(raw, "matrices", "perturbation.matrices")
        if not isinstance(times, list) or not isinstance(mats, list) or len(times) != len(mats) or not times:
            _fail("perturbation.times and matrices must be equal-length nonempty lists")
        times = [_as_float(t, "perturbation.times entry") for t in times]
        mats = [_as_matrix(m, "perturbation.matrices entry") for m in mats]
        if any(len(m) != d for m in mats):
            _fail("perturbation.matrices dimension does not match system.a")
        if any(b <= a for a, b in zip(times, times[1:])) or times[0] < 0.0:
            _fail("perturbation.times must be nonnegative and strictly increasing")
        return {"kind": kind, "times": times, "matrices": mats}
    if kind == "nonlinear_saturating":
        c = _as_float(_get(raw, "c", "perturbation.c"), "perturbation.c")
        gamma = _as_float(_get(raw, "gamma", "", 0.0), "perturbation.gamma")
        if gamma < 0.0:
            _fail(f"perturbation.gamma must be >= 0, got {gamma!r}")
        return {"kind": kind, "c": c, "gamma": gamma}
    if kind == "nonlinear_table":
        times = _get(raw, "times", "perturbation.times")
        values = _get(raw, "values", "perturbation.values")
        if not isinstance(times, list) or not isinstance(values, list) or len(times) != len(values) or not times:
            _fail("perturbation.times and values must be equal-length nonempty lists")
        times = [_as_float(t, "perturbation.times entry") for t in times]
        values = [_as_float(v, "perturbation.values entry") for v in values]
        if any(b <= a for a, b in zip(times, times[1:])) or times[0] < 0.0:
            _fail("perturbation.times must be nonnegative and strictly increasing")
        if any(v < 0.0 for v in values):
            _fail("perturbation.values must be nonnegative")
        return {"kind": kind, "times": times, "values": values}
    _fail(f"unknown perturbation kind {kind!r}")


def _build_perturbation(pert):
    kind = pert["kind"]
    if kind == "none":
        return NoPerturbation()
    if kind == "linear_constant":
        return LinearConstant(np.array(pert["q0"]))
    if kind == "linear_decaying":
        return LinearDecaying(np.array(pert["q0"]), pert["gamma"])
    if kind == "linear_table":
        return LinearTable(np.array(pert["times"]), np.array(pert["matrices"]))
    if kind == "nonlinear_saturating":
        return NonlinearSaturating(pert["c"], pert["gamma"])
    return NonlinearTable(np.array(pert["times"]), np.array(pert["values"]))


def _build_grid(cfg):
    g = cfg["grid"]
    if g["grading"] == 1.0:
        return uniform_grid(g["t_max"], g["n"])
    return graded_grid(g["t_max"], g["n"], g["grading"])


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_atomic(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(out_dir, name, payload):
    _write_atomic(os.path.join(out_dir, name), json.dumps(payload, indent=2) + "\n")


def _write_csv(out_dir, name, header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    _write_atomic(os.path.join(out_dir, name), "\n".join(lines) + "\n")


def _trajectory_rows(times, states, norm):
    rows = []
    for t, x in zip(times, states):
        rows.append([float(t), *(float(v) for v in x), float(vector_norm(x, norm))])
    return rows


def _base_report(cfg):
    return {
        "name": cfg["name"],
        "kind": cfg["kind"],
        "alpha": cfg["system"]["alpha"],
        "norm": cfg["system"]["norm"],
        "seed": cfg["seed"],
    }


def _run_ml_eval(cfg, out_dir, csv_on):
    al = cfg["system"]["alpha"]
    norm = cfg["system"]["norm"]
    m = as_square_matrix(cfg["system"]["a"])
    spec = spectral_decompose(m)
    grid = uniform_grid(cfg["grid"]["t_max"], cfg["grid"]["n"])
    p1 = MLParams(al, 1.0)
    paa = MLParams(al, al)
    n_ea = [float(operator_norm(ml_matrix(p1, t, m, spec), norm)) for t in grid.nodes]
    n_eaa = [float(operator_norm(ml_matrix(paa, t, m, spec), norm)) for t in grid.nodes]
    report = _base_report(cfg)
    report.update(
        {
            "t_max": grid.horizon,
            "sup_norm_ml": max(n_ea),
            "sup_norm_ml_kernel": max(n_eaa),
            "horizon_norm_ml": n_ea[-1],
            "horizon_norm_ml_kernel": n_eaa[-1],
        }
    )
    _write_json(out_dir, "report.json", report)
    if csv_on:
        rows = [[float(t), a, b] for t, a, b in zip(grid.nodes, n_ea, n_eaa)]
        _write_csv(out_dir, "decay.csv", ["t", "norm_Ea", "norm_Eaa"], rows)
    return 0


def _run_solve(cfg, out_dir, csv_on):
    system = cfg["system"]
    al = system["alpha"]
    m = as_square_matrix(system["a"])
    pert = _build_perturbation(cfg["perturbation"])
    grid = _build_grid(cfg)
    x0 = np.array(system["x0"])

    def field(t, x):
        return m @ x + pert.field(t, x)

    traj = solve_abm(al, field, x0, grid)
    norms = [float(vector_norm(x, system["norm"])) for x in traj.states]
    residual = residual_check(traj, al, m, pert=pert, norm=system["norm"])
    report = _base_report(cfg)
    report.update(
        {
            "method": traj.meta["method"],
            "t_max": grid.horizon,
            "final_norm": norms[-1],
            "sup_norm": max(norms),
            "residual": float(residual),
        }
    )
    _write_json(out_dir, "report.json", report)
    if csv_on:
        header = ["t", *(f"x_{i}" for i in range(m.shape[0])), "norm"]
        _write_csv(
            out_dir,
            "trajectory.csv",
            header,
            _trajectory_rows(traj.times, traj.states, system["norm"]),
        )
    return 0


def _report_payload(report):
    return {
        "sector": report.sector,
        "verdict": report.verdict,
        "q": report.q,
        "q_error": report.q_error,
        "epsilon": report.epsilon,
        "delta": report.delta,
        "m_pair": report.m_pair,
        "t_decay": report.t_decay,
        "beta_contraction": report.beta_contraction,
        "sup_envelope": report.sup_envelope,
        "notes": list(report.notes),
    }


def _run_analyze(cfg, out_dir, csv_on):
    system = cfg["system"]
    report = classify(
        np.array(system["a"]),
        system["alpha"],
        _build_perturbation(cfg["perturbation"]),
        norm=system["norm"],
        seed=cfg["seed"],
    )
    payload = _base_report(cfg)
    payload.update(_report_payload(report))
    _write_json(out_dir, "report.json", payload)
    return 1 if report.verdict == "Inconclusive" else 0


def _run_decay_fit(cfg, out_dir, csv_on):
    system = cfg["system"]
    al = system["alpha"]
    norm = system["norm"]
    m = as_square_matrix(system["a"])
    sector = check_spectral_condition(m, al)
    if not sector["satisfied"]:
        raise SectorViolationError(
            "decay fit requires the eigenvalue sector condition"
        )
    spec = spectral_decompose(m)
    t_max = cfg["grid"]["t_max"]
    ts = np.geomspace(t_max / 100.0, t_max, cfg["grid"]["n"])
    p1 = MLParams(al, 1.0)
    paa = MLParams(al, al)
    n_ea = np.array([operator_norm(ml_matrix(p1, t, m, spec), norm) for t in ts])
    n_eaa = np.array([operator_norm(ml_matrix(paa, t, m, spec), norm) for t in ts])
    last = ts >= t_max / 10.0
    slope_ea = float(np.polyfit(np.log(ts[last]), np.log(n_ea[last]), 1)[0])
    slope_eaa = float(np.polyfit(np.log(ts[last]), np.log(n_eaa[last]), 1)[0])
    report = _base_report(cfg)
    report.update(
        {
            "t_min": float(ts[0]),
            "t_max": float(ts[-1]),
            "fitted_slope_Ea": slope_ea,
            "fitted_slope_Eaa": slope_eaa,
        }
    )
    _write_json(out_dir, "report.json", report)
    if csv_on:
        rows = [
            [float(t), float(a), float(b), slope_ea, slope_eaa]
            for t, a, b in zip(ts, n_ea, n_eaa)
        ]
        _write_csv(
            out_dir,
            "decay.csv",
            ["t", "norm_Ea", "norm_Eaa", "fitted_slope_Ea", "fitted_slope_Eaa"],
            rows,
        )
    return 0


def _run_robust_demo(cfg, out_dir, csv_on):
    system = cfg["system"]
    al = system["alpha"]
    norm = system["norm"]
    m = as_square_matrix(system["a"])
    pert = _build_perturbation(cfg["perturbation"])
    report = classify(m, al, pert, norm=norm, seed=cfg["seed"])
    payload = _base_report(cfg)
    payload.update(_report_payload(report))
    if report.verdict not in STABLE_VERDICTS or report.delta is None:
        payload["demo"] = None
        _write_json(out_dir, "report.json", payload)
        return 1

    grid = _build_grid(cfg)
    rng = np.random.default_rng(cfg["seed"])
    d = m.shape[0]

    def field(t, x):
        return m @ x + pert.field(t, x)

    radius = report.delta / 2.0
    ratios = []
    worst = None
    for _ in range(DEMO_POINTS):
        direction = rng.standard_normal(d)
        x0 = radius * direction / vector_norm(direction, norm)
        traj = solve_abm(al, field, x0, grid)
        ratio = float(
            vector_norm(traj.states[-1], norm) / vector_norm(x0, norm)
        )
        ratios.append(ratio)
        if worst is None or ratio > worst[0]:
            worst = (ratio, traj)
    payload["demo"] = {
        "radius": radius,
        "t_max": grid.horizon,
        "ratios": ratios,
        "max_ratio": max(ratios),
        "target": DEMO_TARGET,
        "contracted": max(ratios) <= DEMO_TARGET,
    }
    _write_json(out_dir, "report.json", payload)
    if csv_on:
        header = ["t", *(f"x_{i}" for i in range(d)), "norm"]
        _write_csv(
            out_dir,
            "trajectory.csv",
            header,
            _trajectory_rows(worst[1].times, worst[1].states, norm),
        )
    return 0


def _counterexample_grid():
    # piecewise-geometric nodes that contain exactly t = 1 and t = 50,
    # the two times the divergence ratio is read at
    nodes = np.concatenate(
        [[0.0], np.geomspace(0.01, 1.0, 25), np.geomspace(1.0, COUNTEREXAMPLE_HORIZON, 35)[1:]]
    )
    return TimeGrid(nodes)


def _counterexample_verdict(ts, values, x0):
    if x0 == 0.0:
        return "trivial"
    at_one = float(values[np.where(ts == 1.0)[0][0]])
    final = float(values[-1])
    increasing = values[-3] < values[-2] < values[-1]
    if increasing and final > 1e3 * at_one:
        return "diverges"
    return "decays"


def _run_counterexample(cfg, out_dir, csv_on):
    al = cfg["system"]["alpha"]
    lam = cfg["params"]["lam"]
    x0 = cfg["params"]["x0"]
    grid = _counterexample_grid()
    ts = grid.nodes[1:]

    driven = solve_rl_scalar_exact(al, lam, 2.0 * lam, x0, grid)
    control = solve_rl_scalar_exact(al, lam, 0.0, x0, grid)
    driven_abs = np.abs(driven.states[:, 0])
    control_abs = np.abs(control.states[:, 0])

    at_one = float(driven_abs[np.where(ts == 1.0)[0][0]])
    report = _base_report(cfg)
    report.update(
        {
            "lam": lam,
            "x0": x0,
            "verdict": _counterexample_verdict(ts, driven_abs, x0),
            "control_verdict": _counterexample_verdict(ts, control_abs, x0),
            "abs_x_at_1": at_one,
            "abs_x_at_horizon": float(driven_abs[-1]),
            "growth_ratio": float(driven_abs[-1] / at_one) if at_one > 0.0 else 0.0,
            "control_abs_at_horizon": float(control_abs[-1]),
        }
    )
    _write_json(out_dir, "report.json", report)
    if csv_on:
        rows = [
            [float(t), float(x), float(abs(x)), float(c)]
            for t, x, c in zip(ts, driven.states[:, 0], control_abs)
        ]
        _write_csv(
            out_dir,
            "trajectory.csv",
            ["t", "x_0", "norm", "control_norm"],
            rows,
        )
    return 0


def _run_boundedness(cfg, out_dir, csv_on):
    system = cfg["system"]
    m = as_square_matrix(system["a"])
    pert = _build_perturbation(cfg["perturbation"])
    grid = _build_grid(cfg)

    if isinstance(pert, NoPerturbation):
        def coeff(t):
            return m
    else:
        def coeff(t):
            return m + pert.q_matrix(t)

    out = boundedness_probe(coeff, system["alpha"], grid, norm=system["norm"])
    report = _base_report(cfg)
    report.update(
        {
            "t_max": grid.horizon,
            "per_basis_bounded": out["per_basis_bounded"],
            "sup_norms": out["sup_norms"],
            "inferred_stable": out["inferred_stable"],
            "notes": out["notes"],
        }
    )
    _write_json(out_dir, "report.json", report)
    return 0


_RUNNERS = {
    "MlEval": _run_ml_eval,
    "Solve": _run_solve,
    "Analyze": _run_analyze,
    "DecayFit": _run_decay_fit,
    "RobustDemo": _run_robust_demo,
    "Counterexample": _run_counterexample,
    "BoundednessProbe": _run_boundedness,
}

_SUBCOMMANDS = {
    "ml-eval": "MlEval",
    "solve": "Solve",
    "analyze": "Analyze",
    "decay-fit": "DecayFit",
    "robust-demo": "RobustDemo",
    "counterexample": "Counterexample",
    "boundedness": "BoundednessProbe",
}


def run(cfg, out_dir):
    """Run one validated config, writing outputs into out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    csv_on = "csv" in cfg["output"]["formats"]
    return _RUNNERS[cfg["kind"]](cfg, out_dir, csv_on)


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc
    return parse_config(raw)


def _parser():
    parser = argparse.ArgumentParser(
        prog="fracstab",
        description="Run stability experiments for Caputo fractional systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to a JSON experiment config")
        p.add_argument("--out", default=None, help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--norm", choices=VECTOR_NORMS, default=None, help="norm override")
    return parser


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        expected = _SUBCOMMANDS[args.command]
        if cfg["kind"] != expected:
            raise ConfigError(
                f"config kind {cfg['kind']!r} does not match subcommand "
                f"{args.command!r} (expected {expected!r})"
            )
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("seed override must be an unsigned 64-bit integer")
            cfg["seed"] = args.seed
        if args.norm is not None:
            cfg["system"]["norm"] = args.norm
        out_dir = args.out if args.out is not None else cfg["output"]["directory"]
        if out_dir is None:
            raise ConfigError("no output directory: set output.directory or pass --out")
        return run(cfg, out_dir)
    except ConfigError as exc:
        print(f"fracstab: input error: {exc}", file=sys.stderr)
        return 2
    except FracstabError as exc:
        print(f"fracstab: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
