"""Command-line driver.

Subcommands: ``forward``, ``gst``, ``verify``, ``growth`` and ``bench``.
Every run writes ``run.json`` with the resolved configuration, its hash and
the seed. Exit codes:

==  =====================================================
0   success
1   unexpected internal error
2   usage error (bad command-line arguments)
3   configuration error (the message names the key)
4   unknown model name
5   dimension mismatch (e.g. a perturbation vector of the wrong size)
6   numerical failure (non-convergence, singular system, breakdown)
7   a verification check failed
==  =====================================================
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfg
from . import io
from .assembly import mass_matrix
from .eigensolver import LanczosParams, gst_from_tape
from .exceptions import (
    AutoGSTError, BreakdownError, ConfigError, DimensionMismatch, NonConvergence,
    OracleMismatch, SingularSystem, UnknownModel,
)
from .models import MODELS, GstResult, build_model
from .propagator import dense_matrix, propagator_from_tape
from .tape import adjoint_sweep, tlm_sweep
from .verification import (
    dense_oracle_check, dot_product_test, gradient_consistency, growth_curve, taylor_test,
)

logger = logging.getLogger("autogst")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_CONFIG = 0, 1, 2, 3
EXIT_MODEL, EXIT_DIMENSION, EXIT_NUMERICAL, EXIT_VERIFY = 4, 5, 6, 7

# thresholds the verify subcommand gates on
DOT_TOL = 1e-10
GRADIENT_TOL = 1e-8
ORDER_FIRST = (0.95, 1.05)
ORDER_CORRECTED = (1.95, 2.05)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


class _VerificationFailed(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="autogst", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"autogst {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--model", help=f"override model.name ({', '.join(sorted(MODELS))})")
    common.add_argument("--nev", type=int, help="override gst.nev")
    common.add_argument("--seed", type=int, help="override seed")
    common.add_argument("--tol", type=float, help="override gst.tol")
    common.add_argument("--out-dir", default="autogst-out", help="output directory")
    common.add_argument("--show-config", action="store_true",
                        help="print the resolved configuration and exit")
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("forward", parents=[common], help="run the forward model")
    p.add_argument("--dump-tape", action="store_true", help="also write tape.txt")
    p = sub.add_parser("gst", parents=[common], help="leading singular triplets")
    p.add_argument("--export-matrix", action="store_true",
                   help="also write the dense propagator as propagator_coo.txt")
    p = sub.add_parser("verify", parents=[common], help="run the verification suite")
    p.add_argument("--all", action="store_true", help="verify every bundled model")
    p = sub.add_parser("growth", parents=[common], help="nonlinear growth curve")
    p.add_argument("--vector", help="perturbation CSV (overrides growth.vector)")
    sub.add_parser("bench", parents=[common], help="forward/TLM/adjoint timings")
    return parser


def resolve_config(args) -> dict:
    overrides = cfg.load(args.config) if args.config else cfg.resolve()
    config = copy.deepcopy(overrides)
    if args.model is not None:
        if args.model != config["model"]["name"]:
            config["model"] = {"name": args.model, "params": {}}
    if args.nev is not None:
        config["gst"]["nev"] = args.nev
    if args.seed is not None:
        config["seed"] = args.seed
    if args.tol is not None:
        config["gst"]["tol"] = args.tol
    if getattr(args, "vector", None):
        config["growth"]["vector"] = args.vector
    return cfg.validate(config)


def _provenance(config, **extra):
    out = {
        "config": config,
        "config_hash": io.config_hash(config),
        "seed": config["seed"],
        "version": __version__,
    }
    out.update(extra)
    return out


def _lanczos(config, n):
    g = config["gst"]
    nev = min(g["nev"], n)
    ncv = g["ncv"] if g["ncv"] is not None and g["ncv"] > nev else None
    return LanczosParams(nev=nev, ncv=ncv, tol=g["tol"], max_restarts=g["max_restarts"],
                         seed=config["seed"])


def _model(config):
    return build_model(config["model"]["name"], **config["model"]["params"])


# -- subcommands ---------------------------------------------------------------


def cmd_forward(config, out, args):
    model = _model(config)
    states = []
    tape = model.build_tape() if args.dump_tape else None
    model.forward(callback=lambda step, u: states.append((step, u)))
    space = model.state_space
    x = space.node_coordinates
    rows = []
    for step, u in states:
        comps = [u[space.component_dofs(c)] for c in range(space.components)]
        rows += [[step, step * model.dt, i, x[i]] + [c[i] for c in comps]
                 for i in range(space.n_nodes)]
    header = ["step", "t", "node", "x"] + [f"u_{c}" for c in range(space.components)]
    io.write_rows(out / "snapshots.csv", header, rows)
    io.write_vector(out / "final_state.csv", space, u=states[-1][1])
    if tape is not None:
        io.write_text(out / "tape.txt", tape.dump())
    io.write_json(out / "run.json", _provenance(config, command="forward", model=model.name,
                                                T=model.T, n_steps=model.n_steps))
    print(f"{model.name}: {model.n_steps} steps to T={model.T:g}; wrote {out}")


def run_gst(config):
    model = _model(config)
    tape = model.build_tape()
    params = _lanczos(config, model.dof_count)
    triplets = gst_from_tape(tape, params)
    prov = _provenance(config, tol=params.tol, nev=params.nev, ncv=params.subspace_size)
    return model, tape, GstResult(model.name, model.T, triplets, prov)


def cmd_gst(config, out, args):
    model, tape, result = run_gst(config)
    io.write_triplets(out / "triplets.csv", result.triplets)
    for i, t in enumerate(result.triplets):
        io.write_vector(out / f"vector_{i}.csv", model.state_space, v=t.v, u=t.u)
    if args.export_matrix:
        io.write_coo(out / "propagator_coo.txt", dense_matrix(propagator_from_tape(tape)))
    io.write_json(out / "run.json", dict(result.provenance, command="gst", model=model.name,
                                         T=model.T, sigma=[t.sigma for t in result.triplets]))
    for i, t in enumerate(result.triplets):
        print(f"sigma_{i} = {t.sigma:.10g}  (residual {t.residual:.2e})")


def verify_model(config, out):
    """Run every check on one model; returns ``(lines, all_passed)``."""
    model = _model(config)
    v = config["verify"]
    tape = model.build_tape()
    J = model.default_functional()
    lines, ok = [], True

    def record(name, passed, detail):
        nonlocal ok
        passed = bool(passed)
        ok &= passed
        lines.append(f"{'PASS' if passed else 'FAIL'}  {model.name}: {name}  {detail}")

    gap = dot_product_test(tape, v["dot_pairs"], seed=config["seed"])
    record("dot-product identity", gap <= DOT_TOL, f"max gap {gap:.2e}")
    diff = gradient_consistency(tape, J)
    record("tlm/adjoint gradients", diff <= GRADIENT_TOL, f"relative difference {diff:.2e}")
    csv_parts = []
    for mode in v["modes"]:
        report = taylor_test(model, J, mode, h0=v["h0"] or model.taylor_h0, n_levels=v["n_levels"],
                             seed=config["seed"], tape=tape)
        first, corrected = report.gated_orders()
        passed = (len(corrected) > 0
                  and np.all((first >= ORDER_FIRST[0]) & (first <= ORDER_FIRST[1]))
                  and np.all((corrected >= ORDER_CORRECTED[0]) & (corrected <= ORDER_CORRECTED[1])))
        record(f"Taylor test ({mode})", bool(passed),
               "orders " + " ".join(f"{o:.3f}" for o in report.orders_corrected))
        csv_parts.append((mode, report))
    with (out / "taylor_report.csv").open("w") as fh:
        fh.write("mode," + csv_parts[0][1].to_csv().split("\n", 1)[0] + "\n")
        for mode, report in csv_parts:
            for line in report.to_csv().splitlines()[1:]:
                fh.write(f"{mode},{line}\n")
    if model.dof_count <= v["oracle_max_dofs"]:
        try:
            rep = dense_oracle_check(model, v["oracle_probes"], v["oracle_eps"],
                                     seed=config["seed"], tape=tape)
            record("dense oracle", True,
                   f"probe error {rep.max_probe_error:.2e}, vector error {rep.max_vector_error:.2e}")
        except OracleMismatch as exc:
            record("dense oracle", False, str(exc))
    else:
        lines.append(f"SKIP  {model.name}: dense oracle ({model.dof_count} dofs)")
    return lines, ok


def cmd_verify(config, out, args):
    if args.all:
        configs = []
        for name in sorted(MODELS):
            c = copy.deepcopy(config)
            c["model"] = {"name": name, "params": {}}
            configs.append(c)
    else:
        configs = [config]
    all_lines, ok = [], True
    for c in configs:
        target = out / c["model"]["name"] if args.all else out
        target.mkdir(parents=True, exist_ok=True)
        lines, passed = verify_model(c, target)
        io.write_text(target / "verify_report.txt", "\n".join(lines))
        io.write_json(target / "run.json", _provenance(c, command="verify", passed=passed))
        all_lines += lines
        ok &= passed
        for line in lines:
            print(line)
    if not ok:
        raise _VerificationFailed(f"{sum(l.startswith('FAIL') for l in all_lines)} check(s) failed")


def cmd_growth(config, out, args):
    g = config["growth"]
    if g["vector"]:
        model = _model(config)
        v = io.read_vector(g["vector"], model.state_space, prefix="v")
    else:
        model, _, result = run_gst(config)
        v = result.triplets[0].v
    n_steps = g["n_steps"] or max(4 * model.n_steps, 1)
    curve = growth_curve(model, v, n_steps=n_steps, amplitude=g["amplitude"])
    io.write_rows(out / "growth_curve.csv", ["t", "ratio"], curve)
    io.write_json(out / "run.json", _provenance(config, command="growth", model=model.name,
                                                n_steps=n_steps))
    peak = int(np.argmax(curve[:, 1]))
    print(f"peak growth {curve[peak, 1]:.6g} at t={curve[peak, 0]:g} ({n_steps} steps)")


def cmd_bench(config, out, args):
    model = _model(config)
    repeats = config["bench"]["repeats"]
    rng = np.random.default_rng(config["seed"])

    def best(fn):
        times = []
        for _ in range(repeats):
            start = time.perf_counter()
            fn()
            times.append(time.perf_counter() - start)
        return min(times)

    t_forward = best(model.forward)
    tape = model.build_tape()
    n = model.dof_count
    tlm_sweep(tape, rng.standard_normal(n))  # factorise once; later sweeps reuse the factors
    t_tlm = best(lambda: tlm_sweep(tape, rng.standard_normal(n)))
    t_adj = best(lambda: adjoint_sweep(tape, rng.standard_normal(n)))
    rows = [("forward", t_forward, ""), ("tangent linear", t_tlm, t_tlm / t_forward),
            ("adjoint", t_adj, t_adj / t_forward)]
    io.write_rows(out / "bench.csv", ["run", "seconds", "ratio_to_forward"], rows)
    io.write_json(out / "run.json", _provenance(config, command="bench", model=model.name))
    print(f"{'':16}{'runtime (s)':>12}{'ratio':>8}")
    for name, t, ratio in rows:
        print(f"{name:16}{t:12.4f}{'' if ratio == '' else f'{ratio:8.3f}'}")
    print("timings are informational; the ratio of a derived run to the forward run is not gated")


COMMANDS = {"forward": cmd_forward, "gst": cmd_gst, "verify": cmd_verify,
            "growth": cmd_growth, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"autogst: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = resolve_config(args)
        if args.show_config:
            print(json.dumps(config, indent=2, sort_keys=True))
            return EXIT_OK
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](config, out, args)
    except ConfigError as exc:
        print(f"autogst: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UnknownModel as exc:
        print(f"autogst: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except DimensionMismatch as exc:
        print(f"autogst: dimension mismatch: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except (NonConvergence, SingularSystem, BreakdownError) as exc:
        print(f"autogst: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except _VerificationFailed as exc:
        print(f"autogst: verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (AutoGSTError, OSError) as exc:
        print(f"autogst: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # keep the documented exit code for anything unforeseen
        logger.debug("internal error", exc_info=True)
        print(f"autogst: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
