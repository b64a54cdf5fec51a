"""Batch front end: JSON system description in, machine-readable reports out.

Exit codes: 0 = invariant and feedback synthesized, 1 = not invariant,
2 = inconclusive (quotient rank drops on the grid, or synthesis impossible),
3 = input error.

The distribution may be given as ``"flat"`` (span of the first k coordinate
fields) or as k constant vectors; in the latter case a constant linear
change of coordinates straightens it, the box is interpreted in the
straightened coordinates, and all reported points are mapped back to the
input coordinates.  Non-constant distributions are rejected.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import expr as ex
from .estimator import FeedbackSynthesizer
from .geometry import AffineSystem, ChartSpec, VectorFieldExpr
from .invariance import INCONCLUSIVE_SINGULAR, INVARIANT, NOT_INVARIANT
from .verify import simulate

__all__ = ["InputError", "load_description", "run", "main"]

_EXIT_BY_VERDICT = {INVARIANT: 0, NOT_INVARIANT: 1, INCONCLUSIVE_SINGULAR: 2}


class InputError(ValueError):
    """Malformed system description."""


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise InputError(message)


def straightening_matrix(vectors: np.ndarray) -> np.ndarray:
    """Invertible matrix whose first columns are the given independent vectors.

    Completed greedily with standard basis vectors, so a distribution
    spanned by coordinate directions yields a permutation matrix.
    """
    k, n = vectors.shape
    cols = [vectors[i] for i in range(k)]
    if np.linalg.matrix_rank(vectors) < k:
        raise InputError("distribution vectors are linearly dependent")
    for i in range(n):
        if len(cols) == n:
            break
        candidate = np.zeros(n)
        candidate[i] = 1.0
        trial = np.stack(cols + [candidate])
        if np.linalg.matrix_rank(trial) == len(cols) + 1:
            cols.append(candidate)
    return np.stack(cols, axis=1)


def _substitute_linear(e, matrix: np.ndarray):
    """Replace each variable x_l by the linear form sum_t matrix[l-1, t-1] x_t."""
    n = matrix.shape[0]
    mapping = {}
    for l in range(1, n + 1):
        acc = ex.ZERO
        for t in range(1, n + 1):
            acc = ex.add(acc, ex.mul(ex.const(matrix[l - 1, t - 1]), ex.Var(t)))
        mapping[l] = acc
    return ex.substitute(e, mapping)


def _straighten_field(field: VectorFieldExpr, s: np.ndarray, s_inv: np.ndarray) -> VectorFieldExpr:
    n = field.n
    composed = [_substitute_linear(c, s) for c in field.components]
    out = []
    for i in range(n):
        acc = ex.ZERO
        for j in range(n):
            acc = ex.add(acc, ex.mul(ex.const(s_inv[i, j]), composed[j]))
        out.append(acc)
    return VectorFieldExpr(tuple(out))


def load_description(data: dict):
    """Validate a JSON description; returns (system, options, coordinate map S)."""
    _require(isinstance(data, dict), "top-level JSON value must be an object")
    for key in ("n", "k"):
        _require(key in data, f"missing required field '{key}'")
        _require(isinstance(data[key], int), f"field '{key}' must be an integer")
    n, k = data["n"], data["k"]
    _require(n >= 2, f"field 'n': need n >= 2, got {n}")
    _require(1 <= k < n, f"field 'k': need 1 <= k < n, got k={k}, n={n}")

    _require("box" in data, "missing required field 'box'")
    box = data["box"]
    _require(
        isinstance(box, list) and len(box) == n and all(isinstance(b, list) and len(b) == 2 for b in box),
        f"field 'box' must be a list of {n} [lo, hi] pairs",
    )

    dist = data.get("distribution", "flat")
    smat = None
    if dist != "flat":
        _require(
            isinstance(dist, list) and len(dist) == k,
            f"field 'distribution' must be 'flat' or a list of {k} constant vectors",
        )
        for row in dist:
            _require(
                isinstance(row, list) and len(row) == n and all(isinstance(v, (int, float)) for v in row),
                "distribution vectors must be constant numeric vectors; non-constant "
                "distributions are not supported (supply the system in flat coordinates)",
            )
        smat = straightening_matrix(np.asarray(dist, dtype=float))

    def parse_component_list(texts, label):
        _require(
            isinstance(texts, list) and len(texts) == n and all(isinstance(t, str) for t in texts),
            f"{label} must be a list of {n} expression strings",
        )
        comps = []
        for idx, text in enumerate(texts, start=1):
            try:
                comps.append(ex.parse_expr(text, n))
            except ex.ExprSyntaxError as err:
                raise InputError(f"{label}[{idx}]: {err}") from err
        return VectorFieldExpr(tuple(comps))

    drift = (
        parse_component_list(data["drift"], "field 'drift'")
        if "drift" in data
        else VectorFieldExpr.zero(n)
    )
    controls = []
    raw_controls = data.get("controls", [])
    _require(isinstance(raw_controls, list), "field 'controls' must be a list")
    for gi, texts in enumerate(raw_controls, start=1):
        controls.append(parse_component_list(texts, f"field 'controls'[{gi}]"))

    base_point = data.get("base_point")
    if base_point is not None:
        _require(
            isinstance(base_point, list) and len(base_point) == n,
            f"field 'base_point' must be a list of {n} numbers",
        )

    if smat is not None:
        s_inv = np.linalg.inv(smat)
        drift = _straighten_field(drift, smat, s_inv)
        controls = [_straighten_field(g, smat, s_inv) for g in controls]
        if base_point is not None:
            base_point = list(s_inv @ np.asarray(base_point, dtype=float))

    try:
        chart = ChartSpec(
            n=n,
            k=k,
            box=tuple((float(lo), float(hi)) for lo, hi in box),
            base_point=tuple(base_point) if base_point is not None else (),
        )
        system = AffineSystem(chart=chart, drift=drift, controls=tuple(controls))
    except ValueError as err:
        raise InputError(str(err)) from err

    options = {}
    for key, kind in (
        ("grid_nodes", (int, list)),
        ("tol", (int, float)),
        ("fd_step", (int, float)),
        ("ode_step", (int, float)),
        ("sim_step", (int, float)),
        ("seed", int),
    ):
        if key in data and data[key] is not None:
            _require(isinstance(data[key], kind), f"field '{key}' has the wrong type")
            options[key] = data[key]
    return system, options, smat


def _to_input_coords(points: np.ndarray, smat) -> np.ndarray:
    if smat is None:
        return points
    return points @ smat.T


def _write_csv(path: Path, header: list[str], rows: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def run(
    input_path,
    output_dir,
    grid=None,
    tol=None,
    fd_step=None,
    ode_step=None,
    do_simulate=False,
    seed=None,
) -> int:
    """Run the pipeline on a JSON description; write reports; return the exit code."""
    output = Path(output_dir)
    try:
        try:
            with open(input_path) as fh:
                data = json.load(fh)
        except OSError as err:
            raise InputError(f"cannot read input: {err}") from err
        except json.JSONDecodeError as err:
            raise InputError(f"invalid JSON: {err}") from err
        system, options, smat = load_description(data)
    except InputError as err:
        print(f"input error: {err}", file=sys.stderr)
        return 3

    if grid is not None:
        options["grid_nodes"] = grid
    if tol is not None:
        options["tol"] = tol
    if fd_step is not None:
        options["fd_step"] = fd_step
    if ode_step is not None:
        options["sim_step"] = ode_step
    if seed is not None:
        options["seed"] = seed
    sim_step = float(options.get("sim_step", options.get("ode_step", 1e-3)))

    est = FeedbackSynthesizer(
        grid_nodes=options.get("grid_nodes", 9),
        tol=float(options.get("tol", 1e-8)),
        fd_step=float(options.get("fd_step", 1e-4)),
        sim_step=sim_step,
        seed=int(options.get("seed", 0)),
    )
    est.fit(system)

    output.mkdir(parents=True, exist_ok=True)
    exit_code = _EXIT_BY_VERDICT[est.verdict_]
    if est.verdict_ == INVARIANT and est.feedback_ is None:
        exit_code = 2  # invariant but numerically not synthesizable on this box

    report = _build_report(est, smat, options, exit_code)

    if est.feedback_ is not None:
        fb = est.feedback_
        nodes = _to_input_coords(fb.grid.nodes(), smat)
        n, m = system.chart.n, fb.m
        alpha_rows = np.hstack([nodes, fb.alpha_values])
        _write_csv(
            output / "feedback_alpha.csv",
            [f"x{i}" for i in range(1, n + 1)] + [f"alpha{j}" for j in range(1, m + 1)],
            alpha_rows,
        )
        beta_rows = np.hstack([nodes, fb.beta_values.reshape(len(nodes), m * m)])
        _write_csv(
            output / "feedback_beta.csv",
            [f"x{i}" for i in range(1, n + 1)]
            + [f"beta{i}{j}" for i in range(1, m + 1) for j in range(1, m + 1)],
            beta_rows,
        )
        report["feedback"]["alpha_csv"] = "feedback_alpha.csv"
        report["feedback"]["beta_csv"] = "feedback_beta.csv"

        if do_simulate:
            traj = simulate(
                est.transformed_system_,
                None,
                est.transformed_system_.chart.base_point,
                T=1.0,
                h=sim_step,
            )
            states = _to_input_coords(traj.states, smat)
            rows = np.hstack([traj.times[:, None], states])
            _write_csv(
                output / "trajectories.csv",
                ["t"] + [f"x{i}" for i in range(1, system.chart.n + 1)],
                rows,
            )
            report["trajectories"] = {"file": "trajectories.csv", "truncated": traj.truncated}

    with open(output / "report.json", "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    return exit_code


def _build_report(est: FeedbackSynthesizer, smat, options: dict, exit_code: int) -> dict:
    rp = est.rank_profile_
    grid_nodes = rp.grid.nodes()
    report = {
        "verdict": est.verdict_,
        "exit_code": exit_code,
        "config": {
            "grid_shape": list(rp.grid.shape),
            "grid_axes": [list(a) for a in rp.grid.axes],
            "tol": est.tol,
            "fd_step": est.fd_step,
            "sim_step": est.sim_step,
            "cond_limit": est.cond_limit,
            "seed": est.seed,
            "options": {k: v for k, v in options.items()},
        },
        "coordinate_change": None if smat is None else [list(row) for row in smat],
        "rank_profile": {
            "rank_g_max": int(rp.rank_g.max()) if rp.rank_g.size else 0,
            "rank_g_min": int(rp.rank_g.min()) if rp.rank_g.size else 0,
            "rank_quotient_max": int(rp.rank_quotient.max()) if rp.rank_quotient.size else 0,
            "rank_quotient_min": int(rp.rank_quotient.min()) if rp.rank_quotient.size else 0,
            "g_regular": rp.g_regular,
            "quotient_regular": rp.quotient_regular,
            "singular_points": [
                list(p) for p in _to_input_coords(grid_nodes[rp.singular_nodes], smat)
            ]
            if rp.singular_nodes
            else [],
        },
        "invariance": {
            "tol": est.report_.tol,
            "worst_residual_drift": est.report_.worst_residual_drift,
            "worst_residual_controls": est.report_.worst_residual_controls,
            "offending": [
                {
                    "point": list(_to_input_coords(np.asarray(o.point)[None, :], smat)[0]),
                    "field": o.field,
                    "axis": o.axis,
                    "residual": o.residual,
                    "threshold": o.threshold,
                }
                for o in est.report_.offending[:50]
            ],
        },
        "feedback": None,
    }
    if est.verdict_ == INVARIANT:
        report["gamma_max_residual"] = (
            float(np.max(est.gamma_.residuals)) if est.gamma_.residuals.size else 0.0
        )
        report["a_matrix"] = {
            "max_condition": float(np.max(est.a_field_.condition))
            if est.a_field_.condition.size
            else 0.0,
            "base_identity_error": est.a_field_.base_identity_error,
            "advisory_box": None
            if est.advisory_box_ is None
            else [list(b) for b in est.advisory_box_],
        }
    if est.feedback_ is not None:
        fb = est.feedback_
        report["feedback"] = {
            "validity_box": [list(b) for b in fb.validity_box],
            "alpha_exprs": [str(e) for e in fb.alpha_exprs] if fb.alpha_exprs is not None else None,
            "beta_exprs": [[str(e) for e in row] for row in fb.beta_exprs]
            if fb.beta_exprs is not None
            else None,
        }
        if est.verification_ is not None:
            report["verification"] = {
                "fd_step": est.verification_.fd_step,
                "field_residuals": dict(est.verification_.field_residuals),
                "worst_bracket_residual": est.verification_.worst_residual,
                "leaf_deviation": est.verification_.leaf_deviation,
            }
    elif est.synthesis_error_ is not None:
        report["synthesis_error"] = est.synthesis_error_
    return report


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(
        prog="ctrlinv",
        description="Decide local controlled invariance of a flat distribution for an "
        "affine control system and synthesize the regularizing feedback pair.",
    )
    parser.add_argument("input", help="JSON system description")
    parser.add_argument("output", help="output directory for report.json and CSV files")
    parser.add_argument("--grid", type=int, default=None, help="grid nodes per axis")
    parser.add_argument("--tol", type=float, default=None, help="invariance residual tolerance")
    parser.add_argument("--fd-step", type=float, default=None, help="finite-difference step")
    parser.add_argument("--ode-step", type=float, default=None, help="integrator step")
    parser.add_argument("--simulate", action="store_true", help="also write trajectories.csv")
    parser.add_argument("--seed", type=int, default=None, help="seed for randomized checks")
    args = parser.parse_args(argv)
    code = run(
        args.input,
        args.output,
        grid=args.grid,
        tol=args.tol,
        fd_step=args.fd_step,
        ode_step=args.ode_step,
        do_simulate=args.simulate,
        seed=args.seed,
    )
    sys.exit(code)


if __name__ == "__main__":
    main()
