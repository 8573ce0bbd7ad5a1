"""Circuit documents: schema validation, execution and output artifacts.

A document is JSON with a ``schema`` version, per-mode cutoffs, initial
states, an ordered list of operations and a list of requested outputs::

    {"schema": 1,
     "modes": [30],
     "initial": [{"kind": "vacuum"}],
     "ops": [{"kind": "DisplaceX", "params": [1.5], "targets": [0]}],
     "outputs": [{"kind": "qgrid", "mode": 0, "file": "q.csv"},
                 {"kind": "variance", "operator": "p0"}]}

Complex numbers are written as ``[re, im]``.  Every stochastic operation
carries its own ``seed``.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DocumentParseError, ValidationError
from .fock import (
    CONVENTION,
    DensityOperator,
    SpaceSignature,
    StateVector,
    coherent_amplitudes,
    coherent_leakage,
    exp_hermitian,
    expectation,
    variance,
)
from .gates import GATE_KINDS, GateDescriptor, build_gate
from .maser import (
    JCParams,
    PumpConfig,
    ThreeLevelConfig,
    dispersive_phase,
    measurement_kraus,
    pump_kraus,
    two_mode_effective_hamiltonian,
)
from .phase_space import GridSpec, default_grid, homodyne_sample, husimi_q, q_summary
from .polynomial import HermitianPolynomial, realize

SCHEMA_VERSION = 1
LEAKAGE_LIMIT = 1e-6
MAX_RETRIES = 2

log = logging.getLogger("cvmaser")

MASER_OPS = {
    # kind: (required fields, optional fields with defaults)
    "dispersive": (("target", "g", "Delta", "t"), {}),
    "pump": (
        ("target", "atoms", "epsilon"),
        {"kappa": 1.0, "t_int": 0.4, "phase": math.pi, "stark": True},
    ),
    "measure": (
        ("target", "seed", "g", "t"),
        {"omega_a": 0.0, "omega": 0.0, "basis_angle": 0.0, "atom": [1.0, 0.0]},
    ),
    "effective_two_mode": (
        ("targets", "t", "g1", "g2", "Gamma", "delta1", "delta2", "delta3"),
        {"omega1": 0.0, "omega2": 0.0, "theta": [0.0, 0.0]},
    ),
}

OUTPUT_KINDS = {
    "qgrid": (("mode", "file"), {"grid": None}),
    "expectation": (("operator",), {}),
    "variance": (("operator",), {}),
    "homodyne": (("mode", "theta", "n", "seed", "file"), {}),
    "fidelity": (("reference",), {}),
}


# ---------------------------------------------------------------------------
# validation helpers


def _number(value, path, complex_ok=False):
    if isinstance(value, bool):
        raise ValidationError(path, "expected a number")
    if isinstance(value, (int, float)):
        if not math.isfinite(value):
            raise ValidationError(path, "number must be finite")
        return value
    if complex_ok and isinstance(value, list) and len(value) == 2:
        re, im = (_number(v, f"{path}[{k}]") for k, v in enumerate(value))
        return complex(re, im)
    raise ValidationError(path, "expected a number" + (" or [re, im]" if complex_ok else ""))


def _int(value, path, lo=None, hi=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(path, "expected an integer")
    if lo is not None and value < lo:
        raise ValidationError(path, f"must be >= {lo}")
    if hi is not None and value > hi:
        raise ValidationError(path, f"must be <= {hi}")
    return value


def _record(d, path, required, optional):
    if not isinstance(d, dict):
        raise ValidationError(path, "expected an object")
    allowed = {"kind", *required, *optional}
    for key in d:
        if key not in allowed:
            raise ValidationError(f"{path}.{key}", "unknown field")
    for key in required:
        if key not in d:
            raise ValidationError(f"{path}.{key}", "missing required field")
    out = dict(optional)
    out.update(d)
    return out


def _encode(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


def _validate_state_spec(spec, path, cutoff):
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValidationError(path, "expected a state object with a 'kind'")
    kind = spec["kind"]
    if kind == "vacuum":
        _record(spec, path, (), {})
        return {"kind": "vacuum"}
    if kind == "fock":
        _record(spec, path, ("n",), {})
        return {"kind": "fock", "n": _int(spec["n"], f"{path}.n", 0, cutoff - 1)}
    if kind == "coherent":
        _record(spec, path, ("alpha",), {})
        return {"kind": "coherent", "alpha": _encode(_number(spec["alpha"], f"{path}.alpha", True))}
    raise ValidationError(f"{path}.kind", f"unknown state kind {kind!r}")


def _validate_states(specs, path, cutoffs):
    if not isinstance(specs, list) or len(specs) != len(cutoffs):
        raise ValidationError(path, f"expected a list of {len(cutoffs)} state objects")
    return [_validate_state_spec(s, f"{path}[{k}]", cutoffs[k]) for k, s in enumerate(specs)]


def _mode_index(value, path, n_modes):
    return _int(value, path, 0, n_modes - 1)


def _file_name(value, path):
    if not isinstance(value, str) or not value or os.path.basename(value) != value or value.startswith("."):
        raise ValidationError(path, "file must be a plain file name")
    if value == "results.json":
        raise ValidationError(path, "results.json is reserved")
    return value


def _validate_op(op, path, cutoffs):
    n = len(cutoffs)
    if not isinstance(op, dict) or "kind" not in op:
        raise ValidationError(path, "expected an operation object with a 'kind'")
    kind = op["kind"]
    if kind in GATE_KINDS:
        _record(op, path, ("targets",), {"params": []})
        try:
            g = GateDescriptor.from_dict(op)
        except (ContractError, TypeError, KeyError, ValueError) as exc:
            raise ValidationError(path, str(exc)) from None
        for k, t in enumerate(g.targets):
            _mode_index(t, f"{path}.targets[{k}]", n)
        return g.to_dict()
    if kind not in MASER_OPS:
        raise ValidationError(f"{path}.kind", f"unknown operation {kind!r}")
    required, optional = MASER_OPS[kind]
    d = _record(op, path, required, optional)
    out = {"kind": kind}
    for key in sorted(d):
        if key == "kind":
            continue
        v, p = d[key], f"{path}.{key}"
        if key == "target":
            out[key] = _mode_index(v, p, n)
        elif key == "targets":
            if not isinstance(v, list) or len(v) != 2 or v[0] == v[1]:
                raise ValidationError(p, "expected two distinct mode indices")
            out[key] = [_mode_index(t, f"{p}[{k}]", n) for k, t in enumerate(v)]
        elif key in ("atoms",):
            out[key] = _int(v, p, 1)
        elif key == "seed":
            out[key] = _int(v, p, 0)
        elif key == "stark":
            if not isinstance(v, bool):
                raise ValidationError(p, "expected true or false")
            out[key] = v
        elif key in ("atom", "theta"):
            if not isinstance(v, list) or len(v) != 2:
                raise ValidationError(p, "expected a pair")
            out[key] = [_encode(_number(c, f"{p}[{k}]", key == "atom")) for k, c in enumerate(v)]
        else:
            out[key] = _number(v, p)
    if kind == "pump" and not 0 <= out["epsilon"] < 1:
        raise ValidationError(f"{path}.epsilon", "must lie in [0, 1)")
    if kind == "dispersive" and out["Delta"] == 0:
        raise ValidationError(f"{path}.Delta", "must be nonzero")
    if kind == "measure":
        chi = np.array([complex(*c) if isinstance(c, list) else c for c in out["atom"]], dtype=complex)
        if abs(np.vdot(chi, chi).real - 1) > 1e-12:
            raise ValidationError(f"{path}.atom", "atom state must be normalized")
    return out


def _validate_output(o, path, cutoffs, files):
    n = len(cutoffs)
    if not isinstance(o, dict) or "kind" not in o:
        raise ValidationError(path, "expected an output object with a 'kind'")
    kind = o["kind"]
    if kind not in OUTPUT_KINDS:
        raise ValidationError(f"{path}.kind", f"unknown output {kind!r}")
    required, optional = OUTPUT_KINDS[kind]
    d = _record(o, path, required, optional)
    out = {"kind": kind}
    if "mode" in d:
        out["mode"] = _mode_index(d["mode"], f"{path}.mode", n)
    if "file" in d:
        name = _file_name(d["file"], f"{path}.file")
        if name in files:
            raise ValidationError(f"{path}.file", f"duplicate output file {name!r}")
        files.add(name)
        out["file"] = name
    if kind == "qgrid":
        grid = d.get("grid")
        if grid is not None:
            g = _record(grid, f"{path}.grid", ("x", "p"), {})
            rng = {}
            for axis in ("x", "p"):
                r = g[axis]
                p = f"{path}.grid.{axis}"
                if not isinstance(r, list) or len(r) != 3:
                    raise ValidationError(p, "expected [min, max, count]")
                lo, hi = _number(r[0], f"{p}[0]"), _number(r[1], f"{p}[1]")
                cnt = _int(r[2], f"{p}[2]", 2)
                if not hi > lo:
                    raise ValidationError(p, "max must exceed min")
                rng[axis] = [lo, hi, cnt]
            out["grid"] = rng
        else:
            out["grid"] = None
    elif kind in ("expectation", "variance"):
        text = d["operator"]
        if not isinstance(text, str):
            raise ValidationError(f"{path}.operator", "expected a polynomial expression")
        try:
            poly = HermitianPolynomial.parse(text)
        except ContractError as exc:
            raise ValidationError(f"{path}.operator", str(exc)) from None
        for m in poly.modes():
            _mode_index(m, f"{path}.operator", n)
        out["operator"] = text
    elif kind == "homodyne":
        out["theta"] = _number(d["theta"], f"{path}.theta")
        out["n"] = _int(d["n"], f"{path}.n", 1)
        out["seed"] = _int(d["seed"], f"{path}.seed", 0)
    elif kind == "fidelity":
        out["reference"] = _validate_states(d["reference"], f"{path}.reference", cutoffs)
    return out


@dataclass(frozen=True)
class CircuitDocument:
    modes: tuple
    initial: tuple
    ops: tuple
    outputs: tuple
    schema: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ValidationError("$", "document must be an object")
        for key in d:
            if key not in ("schema", "modes", "initial", "ops", "outputs"):
                raise ValidationError(key, "unknown field")
        if d.get("schema") != SCHEMA_VERSION:
            raise ValidationError("schema", f"expected schema version {SCHEMA_VERSION}")
        modes = d.get("modes")
        if not isinstance(modes, list) or not modes:
            raise ValidationError("modes", "expected a nonempty list of cutoffs")
        cutoffs = [_int(c, f"modes[{k}]", 2) for k, c in enumerate(modes)]
        initial = _validate_states(d.get("initial"), "initial", cutoffs)
        ops = d.get("ops", [])
        if not isinstance(ops, list):
            raise ValidationError("ops", "expected a list")
        ops = [_validate_op(op, f"ops[{k}]", cutoffs) for k, op in enumerate(ops)]
        outputs = d.get("outputs", [])
        if not isinstance(outputs, list):
            raise ValidationError("outputs", "expected a list")
        files = set()
        outputs = [_validate_output(o, f"outputs[{k}]", cutoffs, files) for k, o in enumerate(outputs)]
        freeze = lambda items: tuple(json.dumps(i, sort_keys=True) for i in items)  # noqa: E731
        return cls(tuple(cutoffs), freeze(initial), freeze(ops), freeze(outputs))

    @classmethod
    def from_json(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DocumentParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        return cls.from_dict(d)

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise DocumentParseError(f"cannot read {path}: {exc.strerror}") from None
        return cls.from_json(text)

    def to_dict(self):
        return {
            "schema": self.schema,
            "modes": list(self.modes),
            "initial": [json.loads(s) for s in self.initial],
            "ops": [json.loads(s) for s in self.ops],
            "outputs": [json.loads(s) for s in self.outputs],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# execution


def _as_complex(v):
    return complex(v[0], v[1]) if isinstance(v, list) else complex(v)


def _initial_vector(specs, cutoffs):
    psi = np.ones(1, dtype=complex)
    leak = 0.0
    for spec, c in zip(specs, cutoffs):
        v = np.zeros(c, dtype=complex)
        if spec["kind"] == "vacuum":
            v[0] = 1.0
        elif spec["kind"] == "fock":
            v[spec["n"]] = 1.0
        else:
            alpha = _as_complex(spec["alpha"])
            v = coherent_amplitudes(alpha, c)
            v = v / np.linalg.norm(v)
            leak = max(leak, coherent_leakage(alpha, c))
        psi = np.kron(psi, v)
    return StateVector(SpaceSignature.modes(*cutoffs), psi, leak)


def _apply_local(state, targets, local):
    """Raw array of an operator on ``targets`` applied to a vector (K psi) or density (K rho K^dag)."""
    dims = state.space.dims
    k = len(targets)
    op = np.asarray(local).reshape([dims[t] for t in targets] * 2)
    in_axes = list(range(k, 2 * k))

    def act(t, offset, conj=False):
        m = op.conj() if conj else op
        axes = [offset + i for i in targets]
        out = np.tensordot(m, t, axes=(in_axes, axes))
        return np.moveaxis(out, list(range(k)), axes)

    if isinstance(state, StateVector):
        return act(state.amplitudes.reshape(dims), 0).reshape(-1)
    n = len(dims)
    t = act(state.matrix.reshape(dims + dims), 0)
    t = act(t, n, conj=True)
    m = t.reshape(state.space.dim, state.space.dim)
    return (m + m.conj().T) / 2


def _wrap(space, array, leakage=0.0):
    if array.ndim == 1:
        return StateVector(space, array, leakage)
    return DensityOperator(space, array)


def _kraus_map(state, target, ops):
    rho = state.to_density() if isinstance(state, StateVector) else state
    return DensityOperator(rho.space, sum(_apply_local(rho, [target], K) for K in ops))


def _edge_population(state):
    return max(state.edge_population(k) for k in state.space.mode_indices)


@dataclass
class RunResult:
    cutoffs: tuple
    state: object
    scalars: dict = field(default_factory=dict)
    grids: dict = field(default_factory=dict)
    samples: dict = field(default_factory=dict)
    leakage: float = 0.0
    events: list = field(default_factory=list)


def execute(doc, cutoffs=None):
    """Run the document once at the given cutoffs (defaults to the document's)."""
    cutoffs = tuple(cutoffs or doc.modes)
    specs = [json.loads(s) for s in doc.initial]
    state = _initial_vector(specs, cutoffs)
    space = state.space
    leakage = max(state.leakage, _edge_population(state))
    events = []
    for k, raw in enumerate(doc.ops):
        op = json.loads(raw)
        kind = op["kind"]
        if kind in GATE_KINDS:
            U = build_gate(GateDescriptor.from_dict(op), space)
            if isinstance(state, StateVector):
                state = StateVector(space, U.matrix @ state.amplitudes, state.leakage)
            else:
                m = U.matrix @ state.matrix @ U.matrix.conj().T
                state = DensityOperator(space, (m + m.conj().T) / 2)
        elif kind == "dispersive":
            c = cutoffs[op["target"]]
            U = dispersive_phase(op["Delta"], op["g"], op["t"], c)
            state = _wrap(space, _apply_local(state, [op["target"]], U.matrix), getattr(state, "leakage", 0.0))
        elif kind == "pump":
            c = cutoffs[op["target"]]
            cfg = PumpConfig(kappa=op["kappa"], t_int=op["t_int"], epsilon=op["epsilon"], phase=op["phase"], stark=op["stark"])
            ks = pump_kraus(cfg, c)
            for _ in range(op["atoms"]):
                state = _kraus_map(state, op["target"], ks)
                leakage = max(leakage, _edge_population(state))
        elif kind == "measure":
            c = cutoffs[op["target"]]
            chi = [_as_complex(v) for v in op["atom"]]
            ks = measurement_kraus(JCParams(op["omega_a"], op["omega"], op["g"]), op["t"], chi, op["basis_angle"], c)
            branches = {o: _apply_local(state, [op["target"]], K) for o, K in ks.items()}
            if isinstance(state, StateVector):
                probs = {o: float(np.vdot(b, b).real) for o, b in branches.items()}
            else:
                probs = {o: float(np.trace(b).real) for o, b in branches.items()}
            total = probs["e"] + probs["g"]
            u = np.random.default_rng(op["seed"]).random() * total
            outcome = "e" if u < probs["e"] else "g"
            b = branches[outcome]
            if b.ndim == 1:
                state = StateVector(space, b / math.sqrt(probs[outcome]), state.leakage)
            else:
                state = DensityOperator(space, b / probs[outcome])
            events.append({"op": k, "outcome": outcome, "probability": probs[outcome] / total})
        elif kind == "effective_two_mode":
            i, j = op["targets"]
            cfg = ThreeLevelConfig(
                op["g1"], op["g2"], op["Gamma"], op["delta1"], op["delta2"], op["delta3"],
                op["omega1"], op["omega2"], tuple(op["theta"]),
            )
            H = two_mode_effective_hamiltonian(cfg, (cutoffs[i], cutoffs[j]))
            state = _wrap(space, _apply_local(state, [i, j], exp_hermitian(H, op["t"]).matrix), getattr(state, "leakage", 0.0))
        leakage = max(leakage, _edge_population(state))

    result = RunResult(cutoffs, state, leakage=leakage, events=events)
    for k, raw in enumerate(doc.outputs):
        out = json.loads(raw)
        kind = out["kind"]
        key = f"outputs[{k}]"
        if kind == "qgrid":
            spec = GridSpec(tuple(out["grid"]["x"]), tuple(out["grid"]["p"])) if out["grid"] else default_grid(state, out["mode"])
            grid = husimi_q(state, out["mode"], spec)
            s = q_summary(grid)
            result.grids[out["file"]] = grid
            result.scalars[key] = {
                "kind": "qgrid",
                "file": out["file"],
                "argmax": list(s.argmax),
                "mass": s.total_mass,
                "covariance": s.second_moments.tolist(),
                "corner_probe_leakage": grid.corner_leakage,
            }
        elif kind in ("expectation", "variance"):
            obs = realize(HermitianPolynomial.parse(out["operator"]), space)
            value = expectation(obs, state).real if kind == "expectation" else variance(obs, state)
            result.scalars[key] = {"kind": kind, "operator": out["operator"], "value": float(value)}
        elif kind == "homodyne":
            xs = homodyne_sample(state, out["mode"], out["theta"], out["n"], out["seed"])
            result.samples[out["file"]] = (out, xs)
            result.scalars[key] = {
                "kind": "homodyne",
                "file": out["file"],
                "mean": float(np.mean(xs)),
                "variance": float(np.var(xs)),
            }
        elif kind == "fidelity":
            ref = _initial_vector(out["reference"], cutoffs)
            if isinstance(state, StateVector):
                f = abs(np.vdot(ref.amplitudes, state.amplitudes)) ** 2
            else:
                f = np.vdot(ref.amplitudes, state.matrix @ ref.amplitudes).real
            result.scalars[key] = {"kind": "fidelity", "value": float(f)}
    return result


def run_with_leakage_policy(doc, limit=LEAKAGE_LIMIT, max_retries=MAX_RETRIES):
    """Execute, doubling every cutoff while the reported leakage exceeds ``limit``."""
    cutoffs = tuple(doc.modes)
    retries = []
    for attempt in range(max_retries + 1):
        result = execute(doc, cutoffs)
        if result.leakage <= limit or attempt == max_retries:
            break
        nxt = tuple(2 * c for c in cutoffs)
        log.info("leakage %.3e exceeds %.0e at cutoffs %s; retrying with %s", result.leakage, limit, list(cutoffs), list(nxt))
        retries.append({"cutoffs": list(cutoffs), "leakage": result.leakage})
        cutoffs = nxt
    return result, retries


def write_artifacts(doc, result, retries, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    header = [f"cutoffs: {list(result.cutoffs)}"]
    for name, grid in result.grids.items():
        grid.to_csv(os.path.join(out_dir, name), header)
    for name, (out, xs) in result.samples.items():
        lines = [f"# {k}: {v}" for k, v in CONVENTION.items()]
        lines.append(f"# cutoffs: {list(result.cutoffs)}")
        lines.append(f"# mode: {out['mode']} theta: {out['theta']!r} seed: {out['seed']}")
        lines.append("sample")
        lines += [f"{x:.12e}" for x in xs]
        with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    summary = {
        "convention": CONVENTION,
        "requested_cutoffs": list(doc.modes),
        "cutoffs": list(result.cutoffs),
        "leakage": result.leakage,
        "leakage_limit": LEAKAGE_LIMIT,
        "retries": retries,
        "events": result.events,
        "outputs": [result.scalars[k] for k in sorted(result.scalars, key=lambda s: int(s[8:-1]))],
    }
    with open(os.path.join(out_dir, "results.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
