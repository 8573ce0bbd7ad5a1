"""Command-line front end: ``cvmaser run | synth | maser pump | maser beam | verify``.

Exit codes: 0 success, 1 failed verification, 2 unparseable input,
3 invalid input, 4 numerical abort, 5 synthesis closure exhausted.
Set ``CVMASER_THREADS`` to cap the BLAS thread pool.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

from .errors import (
    ClosureExhaustedError,
    ContractError,
    DimensionError,
    DocumentParseError,
    SingularSectorError,
    SpaceMismatchError,
    StepBudgetError,
    ValidationError,
)
from .fock import CONVENTION

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_NUMERICAL = 4
EXIT_CLOSURE = 5

log = logging.getLogger("cvmaser")


def _convention_lines():
    return [f"# {k}: {v}" for k, v in CONVENTION.items()]


def _write_text(path, text):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# run


def cmd_run(args):
    from .circuit import CircuitDocument, run_with_leakage_policy, write_artifacts

    doc = CircuitDocument.load(args.circuit)
    result, retries = run_with_leakage_policy(doc)
    summary = write_artifacts(doc, result, retries, args.out_dir)
    print(f"wrote {len(result.grids) + len(result.samples) + 1} file(s) to {args.out_dir}")
    print(f"cutoffs {summary['cutoffs']}  leakage {summary['leakage']:.3e}")
    for out in summary["outputs"]:
        if "value" in out:
            label = out.get("operator", out["kind"])
            print(f"{out['kind']:12s} {label:16s} {out['value']:.10g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise DocumentParseError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DocumentParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _load_prims(spec):
    from .synthesis import PrimitiveSet

    if spec == "universal" or spec.startswith("universal:"):
        mode = int(spec.split(":", 1)[1]) if ":" in spec else 0
        return PrimitiveSet.universal(mode)
    d = _load_json(spec)
    if not isinstance(d, dict) or not d:
        raise ValidationError("primitives", "expected an object mapping names to polynomials")
    for name, text in d.items():
        if not isinstance(text, str):
            raise ValidationError(f"primitives.{name}", "expected a polynomial expression")
    try:
        return PrimitiveSet(d)
    except ContractError as exc:
        raise ValidationError("primitives", str(exc)) from None


TARGET_FIELDS = {"target": str, "t": float, "tolerance": float, "cutoff": int, "max_depth": int, "max_degree": int, "step_budget": int}


def _load_target(path):
    d = _load_json(path)
    if not isinstance(d, dict):
        raise ValidationError("$", "expected an object")
    for key in d:
        if key not in TARGET_FIELDS:
            raise ValidationError(key, "unknown field")
    for key in ("target", "t"):
        if key not in d:
            raise ValidationError(key, "missing required field")
    for key, kind in TARGET_FIELDS.items():
        if key not in d:
            continue
        v = d[key]
        ok = isinstance(v, str) if kind is str else (
            isinstance(v, int) if kind is int else isinstance(v, (int, float))
        ) and not isinstance(v, bool)
        if not ok:
            raise ValidationError(key, f"expected {kind.__name__}")
    return d


def cmd_synth(args):
    from .polynomial import HermitianPolynomial
    from .synthesis import synthesize

    job = _load_target(args.target_file)
    prims = _load_prims(args.prims)
    try:
        target = HermitianPolynomial.parse(job["target"])
    except ContractError as exc:
        raise ValidationError("target", str(exc)) from None
    tolerance = args.tolerance if args.tolerance is not None else job.get("tolerance", 1e-2)
    cutoff = args.cutoff or job.get("cutoff", 20)
    kw = {k: job[k] for k in ("max_depth", "max_degree", "step_budget") if k in job}
    if args.max_depth is not None:
        kw["max_depth"] = args.max_depth
    if args.step_budget is not None:
        kw["step_budget"] = args.step_budget
    try:
        plan, report = synthesize(target, prims, float(job["t"]), tolerance, cutoff=cutoff, **kw)
    except ClosureExhaustedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print("reachable basis:", file=sys.stderr)
        for poly in exc.reachable:
            print(f"  {poly}", file=sys.stderr)
        return EXIT_CLOSURE
    derivation = plan.recipe[1].label() if plan.recipe and plan.recipe[0] == "tree" else None
    doc = {
        "convention": CONVENTION,
        "cutoff": cutoff,
        "primitives": prims.to_dict(),
        "derivation": derivation,
        "tolerance": tolerance,
        "plan": plan.to_dict(),
        "report": report.to_dict(),
    }
    _write_text(args.output, _dump_json(doc))
    print(f"target     {plan.target}")
    print(f"derivation {derivation}")
    print(f"steps      {plan.step_count}")
    print(f"fidelity   mean {report.mean_fidelity:.6f}  min {report.min_fidelity:.6f}")
    print(f"wrote {args.output}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# maser


def cmd_pump(args):
    from .circuit import LEAKAGE_LIMIT, MAX_RETRIES
    from .fock import SpaceSignature, make_vacuum
    from .maser import PumpConfig, pump_records

    if args.atoms < 1:
        raise ValidationError("atoms", "must be at least 1")
    if args.cutoff < 2:
        raise ValidationError("cutoff", "must be at least 2")
    cfg = PumpConfig(kappa=args.kappa, t_int=args.t_int, epsilon=args.epsilon, phase=args.phase, stark=not args.no_stark)
    cutoff = args.cutoff
    retries = []
    for attempt in range(MAX_RETRIES + 1):
        rho0 = make_vacuum(SpaceSignature.modes(cutoff)).to_density()
        _, records = pump_records(rho0, cfg, args.atoms, args.var_tol)
        leak = max(r.edge_population for r in records)
        if leak <= LEAKAGE_LIMIT or attempt == MAX_RETRIES:
            break
        log.info("leakage %.3e exceeds %.0e at cutoff %d; retrying with %d", leak, LEAKAGE_LIMIT, cutoff, 2 * cutoff)
        retries.append((cutoff, leak))
        cutoff *= 2
    lines = _convention_lines()
    lines += [
        f"# cutoff: {cutoff}",
        f"# requested_cutoff: {args.cutoff}",
        f"# retries: {' '.join(f'{c}:{lk:.3e}' for c, lk in retries) or 'none'}",
        f"# max_edge_population: {leak:.6e}",
        f"# kappa: {cfg.kappa!r} t_int: {cfg.t_int!r} epsilon: {cfg.epsilon!r} phase: {cfg.phase!r} stark: {cfg.stark}",
        "step var_x var_p purity edge_population",
        "0 0.25 0.25 1 0",
    ]
    lines += [f"{r.step} {r.var_x:.12e} {r.var_p:.12e} {r.purity:.12e} {r.edge_population:.6e}" for r in records]
    vps = [r.var_p for r in records]
    k_min = min(range(len(vps)), key=vps.__getitem__)
    if args.output:
        _write_text(args.output, "\n".join(lines) + "\n")
        print(f"wrote {args.output}")
    print(f"cutoff {cutoff}  atoms {len(records)}  max edge population {leak:.3e}")
    print(f"var(p) final {vps[-1]:.6f}  min {vps[k_min]:.6f} at atom {records[k_min].step}  (vacuum 0.25)")
    return EXIT_OK


def cmd_beam(args):
    from .maser import BeamConfig, beam_statistics, one_atom_probability, sample_arrivals

    b = BeamConfig(args.rate, args.length, args.velocity)
    if args.duration <= 0:
        raise ValidationError("duration", "must be positive")
    times = sample_arrivals(b, args.duration, args.seed)
    st = beam_statistics(b, times, args.duration)
    print(f"P1 = {one_atom_probability(b):.6f}")
    rows = [f"{'quantity':20s} {'sampled':>14s} {'predicted':>14s}"]
    rows += [f"{name:20s} {got:14.6g} {want:14.6g}" for name, got, want in st.rows()]
    z = (st.close_gap_fraction - st.close_gap_expected) / st.close_gap_sigma
    rows.append(f"{'gap z-score':20s} {z:14.3f} {'|z|<3':>14s}")
    print("\n".join(rows))
    if args.output:
        header = _convention_lines() + [
            "# cutoffs: none",
            f"# rate: {b.rate!r} cavity_length: {b.cavity_length!r} velocity: {b.velocity!r} duration: {args.duration!r} seed: {args.seed}",
            f"# P1: {st.p1:.12e}",
        ]
        _write_text(args.output, "\n".join(header + rows) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def cmd_verify(args):
    from .acceptance import format_table, run_all

    only = None
    if args.only:
        try:
            only = [int(s) for s in args.only.split(",")]
        except ValueError:
            raise ValidationError("only", "expected a comma-separated list of criterion numbers") from None
    try:
        results = run_all(only=only, flip_convention=args.flip_convention)
    except ValueError as exc:
        raise ValidationError("only", str(exc)) from None
    print(format_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="cvmaser", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a circuit document")
    p.add_argument("circuit")
    p.add_argument("-o", "--out-dir", default="out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("synth", help="synthesize a gate plan for a target Hamiltonian")
    p.add_argument("target_file", help='JSON job, e.g. {"target": "x0^3", "t": 0.05}')
    p.add_argument("--prims", default="universal", help="'universal[:mode]' or a JSON file of named polynomials")
    p.add_argument("--tolerance", type=float)
    p.add_argument("--cutoff", type=int)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--step-budget", type=int)
    p.add_argument("-o", "--output", default="plan.json")
    p.set_defaults(func=cmd_synth)

    m = sub.add_parser("maser", help="micromaser studies").add_subparsers(dest="study", required=True)
    p = m.add_parser("pump", help="pump the cavity with superposed atoms and trace var(p)")
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--t-int", type=float, default=0.4)
    p.add_argument("--phase", type=float, default=math.pi)
    p.add_argument("--no-stark", action="store_true", help="drop the Stark shifts of the two-photon ladder")
    p.add_argument("--atoms", type=int, default=500)
    p.add_argument("--cutoff", type=int, default=30)
    p.add_argument("--var-tol", type=float, default=0.0, help="stop early once |delta var(p)| per atom is below this")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_pump)

    p = m.add_parser("beam", help="one-atom probability and Poisson arrival statistics")
    p.add_argument("--rate", type=float, default=10.0)
    p.add_argument("--length", type=float, default=0.03)
    p.add_argument("--velocity", type=float, default=300.0)
    p.add_argument("--duration", type=float, default=1e4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_beam)

    p = sub.add_parser("verify", help="run the acceptance suite")
    p.add_argument("--only", help="comma-separated criterion numbers")
    p.add_argument("--flip-convention", action="store_true", help="negative control: flip the Fourier convention")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    threads = os.environ.get("CVMASER_THREADS")
    limiter = None
    if threads:
        from threadpoolctl import threadpool_limits

        limiter = threadpool_limits(int(threads))
    try:
        return args.func(args)
    except DocumentParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ContractError, DimensionError, SpaceMismatchError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SingularSectorError as exc:
        print(f"numerical abort: {exc} (sector {exc.sector})", file=sys.stderr)
        return EXIT_NUMERICAL
    except StepBudgetError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    finally:
        if limiter is not None:
            limiter.unregister()


if __name__ == "__main__":
    sys.exit(main())
