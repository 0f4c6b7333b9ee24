"""Command-line entry point: ``gridlyap <subcommand> ...``.

Machine-readable results go to stdout (or ``--output``) as JSON, plot data as
CSV.  Exit codes: 0 success, 1 error (with an error JSON document), 2 when a
screening or adaptation run leaves some contingency undecided.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .energy import closest_uep_energy, energy_landscape, energy_value, find_ueps
from .equilibrium import EquilibriumError, solve_equilibrium
from .lyapunov import (
    Infeasible,
    SolverFailure,
    assemble_lmi,
    certificate_from_dict,
    certificate_to_dict,
    energy_member,
    evaluate_v_shifted,
    find_candidate,
)
from .model import BUILTIN_CASES, NetworkError, builtin_case, network_to_dict, parse_network
from .screening import (
    Contingency,
    adapt,
    batch_screen,
    builtin_contingency,
    compute_vmin,
    parse_contingencies,
)
from .simulator import StepSizeUnderflow, integrate, integrate_rk4, monitor_v
from .state_space import build_state_space
from .vmin import ESTIMATORS

EXIT_OK, EXIT_ERROR, EXIT_UNDECIDED = 0, 1, 2


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage errors exit 1 with an error document, keeping 2 for undecided runs."""

    def error(self, message):
        self.print_usage(sys.stderr)
        doc = {"error": "UsageError", "message": message}
        sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        raise SystemExit(EXIT_ERROR)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if np.isfinite(value) else str(value)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _emit(doc, args):
    text = json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"
    if getattr(args, "output", None):
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _load_network(args):
    if getattr(args, "model", None):
        return parse_network(Path(args.model).read_text())
    if getattr(args, "case", None):
        return builtin_case(args.case)
    raise CliError("give a model file or --case")


def _load_model(args):
    net = _load_network(args)
    return build_state_space(net, solve_equilibrium(net))


def _load_certificate(args, model):
    if getattr(args, "certificate", None):
        doc = json.loads(Path(args.certificate).read_text())
        return certificate_from_dict(doc, model)
    if getattr(args, "energy", False):
        return energy_member(model)
    result = find_candidate(assemble_lmi(model))
    if isinstance(result, Infeasible):
        raise CliError(f"no certificate found: {result.status}")
    return result


def _read_json_arg(value):
    text = value if value.lstrip().startswith(("{", "[")) else Path(value).read_text()
    return text


def _load_contingencies(args, model) -> list[Contingency]:
    value = args.contingency
    if value is None:
        raise CliError("give --contingency")
    if not value.lstrip().startswith(("{", "[")) and not Path(value).exists():
        return [builtin_contingency(model, value)]
    return parse_contingencies(model, _read_json_arg(value))


def cmd_validate(args):
    net = _load_network(args)
    _emit({"valid": True, "name": net.name, "n_states": net.n, "n_edges": net.n_edges, "model": network_to_dict(net)}, args)
    return EXIT_OK


def cmd_equilibrium(args):
    net = _load_network(args)
    eq = solve_equilibrium(net)
    doc = {
        "angles": eq.angles,
        "edges": [list(e) for e in net.edges],
        "edge_deltas": eq.edge_deltas,
        "residual_norm": eq.residual_norm,
        "iterations": eq.iterations,
        "status": eq.status,
    }
    _emit(doc, args)
    return EXIT_OK


def cmd_certify(args):
    model = _load_model(args)
    if args.energy:
        cert = energy_member(model)
    else:
        problem = assemble_lmi(model, mu=args.mu, kappa_min=args.kmin)
        cert = find_candidate(problem)
        if isinstance(cert, Infeasible):
            raise CliError(f"LMI infeasible: {cert.status} {cert.detail}")
    doc = certificate_to_dict(cert)
    doc["block_size"] = model.dim + model.n_edges
    _emit(doc, args)
    return EXIT_OK


def cmd_vmin(args):
    model = _load_model(args)
    cert = _load_certificate(args, model)
    result = compute_vmin(cert, model, args.method, seed=args.seed)
    _emit(result.to_dict(), args)
    return EXIT_OK


def cmd_screen(args):
    model = _load_model(args)
    cert = _load_certificate(args, model)
    vmin = compute_vmin(cert, model, args.method, seed=args.seed)
    verdicts = batch_screen(model, _load_contingencies(args, model), cert=cert, vmin=vmin)
    _emit({"vmin": vmin.to_dict(), "verdicts": [v.to_dict() for v in verdicts]}, args)
    return EXIT_OK if all(v.certified for v in verdicts) else EXIT_UNDECIDED


def cmd_adapt(args):
    model = _load_model(args)
    contingencies = _load_contingencies(args, model)
    docs, all_ok = [], True
    for item in contingencies:
        verdict = adapt(
            model,
            item,
            eps0=args.eps0,
            eps_min=args.eps_min,
            max_iter=args.max_iter,
            estimator=args.estimator,
            seed=args.seed,
            anchor_boundary=args.anchor,
        )
        doc = verdict.to_dict()
        doc["history"] = [vars(step) for step in verdict.history]
        if verdict.certificate is not None:
            doc["certificate"] = certificate_to_dict(verdict.certificate)
        docs.append(doc)
        all_ok = all_ok and verdict.certified
    _emit({"verdicts": docs}, args)
    return EXIT_OK if all_ok else EXIT_UNDECIDED


def cmd_simulate(args):
    model = _load_model(args)
    (item,) = _load_contingencies(args, model)[:1]
    x0 = item.post_fault_state
    if args.rk4_step:
        traj = integrate_rk4(model, x0, horizon=args.horizon, step=args.rk4_step)
    else:
        traj = integrate(model, x0, horizon=args.horizon, rel_tol=args.rtol, abs_tol=args.atol)
    cert = _load_certificate(args, model)
    vbar = np.asarray(evaluate_v_shifted(cert, model, traj.states))
    energy = np.asarray(energy_value(model.network, model.equilibrium, traj.states))
    angles = traj.states[:, : model.n] + model.equilibrium.angles
    ids = [g.id for g in model.network.state_generators]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", *[f"delta_{i}" for i in ids], *[f"omega_{i}" for i in ids], "vbar", "energy"])
    for t, a, w, v, e in zip(traj.times, angles, traj.states[:, model.n :], vbar, energy):
        writer.writerow([repr(float(t)), *map(repr, a.tolist()), *map(repr, w.tolist()), repr(float(v)), repr(float(e))])
    mon = monitor_v(cert, model, traj)
    summary = {
        "status": traj.status,
        "final_time": traj.times[-1],
        "accepted_steps": traj.accepted_steps,
        "rejected_steps": traj.rejected_steps,
        "vbar_nonincreasing": mon.nonincreasing,
        "first_exit_from_polytope": mon.first_exit,
    }
    if args.csv:
        Path(args.csv).write_text(buf.getvalue())
        _emit(summary, args)
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_compare_energy(args):
    net = _load_network(args)
    eq = solve_equilibrium(net)
    ueps = find_ueps(net, eq, n_starts=args.starts, seed=args.seed)
    doc = {
        "critical_energy": closest_uep_energy(net, eq, ueps=ueps),
        "ueps": [
            {"angles": p.angles, "kind": p.kind, "relative_energy": p.relative_energy, "unstable_modes": p.unstable_modes}
            for p in ueps
        ],
    }
    if args.contingency:
        model = build_state_space(net, eq)
        doc["contingencies"] = [
            {"label": c.label, "energy": energy_value(net, eq, c.post_fault_state)}
            for c in _load_contingencies(args, model)
        ]
    _emit(doc, args)
    return EXIT_OK


def cmd_energy_landscape(args):
    net = _load_network(args)
    eq = solve_equilibrium(net)
    axes, values = energy_landscape(net, eq, grid=args.grid)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if len(axes) == 1:
        writer.writerow(["delta_1", "energy"])
        for d, e in zip(axes[0], values):
            writer.writerow([repr(float(d)), repr(float(e))])
    else:
        writer.writerow(["delta_1", "delta_2", "energy"])
        for i, d1 in enumerate(axes[0]):
            for j, d2 in enumerate(axes[1]):
                writer.writerow([repr(float(d1)), repr(float(d2)), repr(float(values[i, j]))])
    if args.csv:
        Path(args.csv).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def _model_args(p, seed=True):
    p.add_argument("model", nargs="?", help="JSON model document")
    p.add_argument("--case", choices=BUILTIN_CASES, help="built-in benchmark network")
    p.add_argument("-o", "--output", help="write the JSON result here instead of stdout")
    if seed:
        p.add_argument("--seed", type=int, default=0, help="seed for every randomized step")


def _cert_args(p):
    p.add_argument("--certificate", help="certificate JSON (default: margin-maximizing LMI solution)")
    p.add_argument("--energy", action="store_true", help="use the energy-function member")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gridlyap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check a model document")
    _model_args(p, seed=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("equilibrium", help="solve for the stable operating point")
    _model_args(p, seed=False)
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("certify", help="find a Lyapunov certificate")
    _model_args(p, seed=False)
    p.add_argument("--mu", type=float, default=1e-6)
    p.add_argument("--kmin", type=float, default=None)
    p.add_argument("--objective", choices=["margin"], default="margin")
    p.add_argument("--energy", action="store_true", help="emit the energy-function member instead")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("vmin", help="critical level of a certificate")
    _model_args(p)
    _cert_args(p)
    p.add_argument("--method", choices=ESTIMATORS, default="exact")
    p.set_defaults(func=cmd_vmin)

    p = sub.add_parser("screen", help="screen contingencies against a fixed certificate")
    _model_args(p)
    _cert_args(p)
    p.add_argument("--contingency", help="JSON object/list, JSON file, or a built-in name")
    p.add_argument("--method", choices=ESTIMATORS, default="exact")
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("adapt", help="adapt the certificate to a contingency")
    _model_args(p)
    p.add_argument("--contingency", help="JSON object/list, JSON file, or a built-in name")
    p.add_argument("--eps0", type=float, default=None)
    p.add_argument("--eps-min", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--estimator", choices=ESTIMATORS, default="exact")
    p.add_argument("--anchor", action="store_true", help="keep the level at known boundary minimizers")
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("simulate", help="integrate the post-fault dynamics")
    _model_args(p, seed=False)
    _cert_args(p)
    p.add_argument("--contingency", help="JSON object, JSON file, or a built-in name")
    p.add_argument("--horizon", type=float, default=200.0)
    p.add_argument("--rtol", type=float, default=1e-8)
    p.add_argument("--atol", type=float, default=1e-10)
    p.add_argument("--rk4-step", type=float, default=None, help="use fixed-step RK4 with this step")
    p.add_argument("--csv", help="write the trajectory CSV here and print a JSON summary")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare-energy", help="closest-UEP critical energy")
    _model_args(p)
    p.add_argument("--starts", type=int, default=None)
    p.add_argument("--contingency", help="also report the energy of these states")
    p.set_defaults(func=cmd_compare_energy)

    p = sub.add_parser("energy-landscape", help="potential energy on an angle grid (CSV)")
    _model_args(p, seed=False)
    p.add_argument("--grid", type=int, default=101)
    p.add_argument("--csv", help="write the CSV here instead of stdout")
    p.set_defaults(func=cmd_energy_landscape)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (
        CliError,
        NetworkError,
        EquilibriumError,
        SolverFailure,
        StepSizeUnderflow,
        ValueError,
        RuntimeError,
        OSError,
    ) as exc:
        doc = {"error": type(exc).__name__, "message": str(exc)}
        sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
