"""Command line front end: load block models, run tasks, emit reports.

Input is a single JSON document naming an algebra, operators, and a task.
Reports are serialized canonically (floats with 17 significant digits), so a
rerun on identical input is byte-identical.  Exit codes: 0 success, 2 schema
violation, 3 mathematical precondition failure, 4 internal consistency
failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Any

import numpy as np

from . import __version__
from .errors import (
    ConsistencyError,
    ModelError,
    NumericsError,
    PreconditionError,
    SchemaError,
)
from .model import (
    Block,
    BlockOperator,
    OperatorPath,
    Tolerances,
    VnAlgebra,
    quotient_norm,
    tau_star,
)
from .corner import boundary_map, corner_index, is_corner_fredholm
from .flow import spectral_flow_result
from .generators import dirac_circle, random_crossing_path
from .pairing import cos_identity_check, intermediate_operator, make_pairing_data, pairing_via_boundary
from .triples import (
    bounded_transform,
    check_kasparov_module,
    make_triple,
    resolvent_integral_check,
    sf_unbounded,
    sf_unitary,
)

TASKS = (
    "spectral_flow",
    "sf_unitary",
    "sf_unbounded",
    "index",
    "boundary",
    "pairing",
    "checks",
    "generate",
)

_TRACK_SAMPLES = 201


# -- canonical JSON -----------------------------------------------------------


def _canonical(obj: Any, out: list[str]) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        if math.isnan(obj) or math.isinf(obj):
            raise SchemaError("non-finite float in report")
        out.append(format(obj, ".17g"))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _canonical(item, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        for i, (key, value) in enumerate(obj.items()):
            if i:
                out.append(",")
            out.append(json.dumps(str(key)))
            out.append(":")
            _canonical(value, out)
        out.append("}")
    else:
        raise SchemaError(f"unserializable value of type {type(obj).__name__}")


def canonical_json(obj: Any) -> str:
    out: list[str] = []
    _canonical(obj, out)
    return "".join(out)


# -- schema: encode -----------------------------------------------------------


def encode_matrix(mat: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in mat]


def encode_operator(op: BlockOperator) -> list:
    return [encode_matrix(b) for b in op.blocks]


def encode_algebra(alg: VnAlgebra) -> dict:
    return {
        "blocks": [
            {"dim": b.dim, "weight": b.weight, "ideal": b.in_ideal}
            for b in alg.blocks
        ]
    }


# -- schema: decode -----------------------------------------------------------


def _expect(cond: bool, message: str) -> None:
    if not cond:
        raise SchemaError(message)


def decode_algebra(data: Any) -> VnAlgebra:
    _expect(isinstance(data, dict) and "blocks" in data, "algebra needs a blocks list")
    blocks = []
    for i, raw in enumerate(data["blocks"]):
        _expect(isinstance(raw, dict) and "dim" in raw, f"block {i} needs a dim")
        try:
            blocks.append(
                Block(
                    dim=int(raw["dim"]),
                    weight=float(raw.get("weight", 1.0)),
                    in_ideal=bool(raw.get("ideal", True)),
                )
            )
        except ModelError as exc:
            raise SchemaError(f"block {i}: {exc}") from exc
    try:
        return VnAlgebra(blocks)
    except ModelError as exc:
        raise SchemaError(str(exc)) from exc


def decode_matrix(data: Any, name: str) -> np.ndarray:
    _expect(isinstance(data, list) and data, f"operator {name}: block must be a matrix")
    rows = []
    width = None
    for row in data:
        _expect(isinstance(row, list), f"operator {name}: matrix rows must be lists")
        if width is None:
            width = len(row)
        _expect(len(row) == width, f"operator {name}: ragged matrix")
        entries = []
        for entry in row:
            _expect(
                isinstance(entry, list) and len(entry) == 2,
                f"operator {name}: entries must be [re, im] pairs",
            )
            entries.append(complex(float(entry[0]), float(entry[1])))
        rows.append(entries)
    mat = np.array(rows, dtype=complex)
    _expect(mat.shape[0] == mat.shape[1], f"operator {name}: matrix is not square")
    return mat


def decode_operator(data: Any, alg: VnAlgebra, name: str) -> BlockOperator:
    _expect(isinstance(data, list), f"operator {name} must be a list of blocks")
    _expect(
        len(data) == len(alg.blocks),
        f"operator {name} has {len(data)} blocks, algebra has {len(alg.blocks)}",
    )
    mats = [decode_matrix(blockdata, name) for blockdata in data]
    for mat, dim in zip(mats, alg.dims):
        _expect(
            mat.shape == (dim, dim),
            f"operator {name}: block shape {mat.shape} does not match dim {dim}",
        )
    return BlockOperator(mats)


def decode_operators(doc: dict, alg: VnAlgebra) -> dict[str, BlockOperator]:
    raw = doc.get("operators", {})
    _expect(isinstance(raw, dict), "operators must be a name -> blocks mapping")
    return {name: decode_operator(data, alg, name) for name, data in raw.items()}


def _named(ops: dict[str, BlockOperator], name: Any, role: str) -> BlockOperator:
    _expect(isinstance(name, str), f"{role} must be an operator name")
    if name not in ops:
        raise SchemaError(f"{role} references unknown operator {name!r}")
    return ops[name]


def decode_path(doc: dict, ops: dict[str, BlockOperator]) -> OperatorPath:
    raw = doc.get("path")
    _expect(isinstance(raw, dict) and "keyframes" in raw, "task needs a path with keyframes")
    frames = []
    for i, kf in enumerate(raw["keyframes"]):
        _expect(
            isinstance(kf, dict) and "t" in kf and "op" in kf,
            f"keyframe {i} needs t and op",
        )
        frames.append((float(kf["t"]), _named(ops, kf["op"], f"keyframe {i}")))
    try:
        return OperatorPath(frames)
    except ModelError as exc:
        raise SchemaError(str(exc)) from exc


def decode_tolerances(doc: dict, args: argparse.Namespace) -> Tolerances:
    raw = doc.get("tolerances", {})
    _expect(isinstance(raw, dict), "tolerances must be a mapping")
    fields = {
        "proj": float(raw.get("proj", 1e-8)),
        "kernel": float(raw.get("kernel", 1e-10)),
        "gap": float(raw.get("gap", 1e-8)),
        "intersection": float(raw.get("intersection", 1e-8)),
        "margin": float(raw.get("margin", 0.05)),
        "max_depth": int(raw.get("max_depth", 20)),
    }
    if args.tol_kernel is not None:
        fields["kernel"] = args.tol_kernel
    if args.tol_gap is not None:
        fields["gap"] = args.tol_gap
    if args.max_depth is not None:
        fields["max_depth"] = args.max_depth
    return Tolerances(**fields)


def _decode_triple(doc: dict, alg: VnAlgebra, ops: dict, tol: Tolerances):
    raw = doc.get("triple")
    _expect(isinstance(raw, dict), "task needs a triple section")
    _expect("generators" in raw and "D" in raw, "triple needs generators and D")
    gen_names = raw["generators"]
    _expect(
        isinstance(gen_names, list) and all(isinstance(g, str) for g in gen_names),
        "triple generators must be a list of operator names",
    )
    generators = {g: _named(ops, g, f"generator {g!r}") for g in gen_names}
    d = _named(ops, raw["D"], "triple D")
    return make_triple(alg, generators, d, tol), raw


# -- task runners -------------------------------------------------------------


def _k0_payload(k0, alg) -> dict:
    return {"k0_class": list(k0.ranks), "tau": tau_star(k0, alg)}


def _gap_or_none(g: float):
    return None if math.isinf(g) else g


def _run_spectral_flow(doc, alg, ops, tol):
    path = decode_path(doc, ops)
    result = spectral_flow_result(path, alg, tol)
    report = {"task": "spectral_flow"}
    report.update(_k0_payload(result.k0, alg))
    report["partition"] = list(result.partition)
    report["diagnostics"] = {
        "min_quotient_gap": _gap_or_none(result.certificate.min_gap),
        "quotient_lipschitz": result.certificate.lipschitz,
        "partition_trace": [
            {
                "t": step.t_end,
                "gap": _gap_or_none(step.gap_end),
                "step_class": list(step.contribution.ranks),
            }
            for step in result.steps
        ],
        "residuals": {},
    }
    return report, path


def _run_sf_unitary(doc, alg, ops, tol):
    triple, raw = _decode_triple(doc, alg, ops, tol)
    _expect("unitary" in raw, "sf_unitary needs triple.unitary")
    u = _named(ops, raw["unitary"], "triple unitary")
    k0 = sf_unitary(triple, u, tol)
    kas = check_kasparov_module(triple, tol)
    report = {"task": "sf_unitary"}
    report.update(_k0_payload(k0, alg))
    report["partition"] = []
    report["diagnostics"] = {
        "min_quotient_gap": None,
        "residuals": {
            "commutator_quotient": quotient_norm(
                u @ triple.p - triple.p @ u, alg
            ),
            "kasparov_worst": kas.worst(),
        },
    }
    return report, None


def _run_sf_unbounded(doc, alg, ops, tol):
    triple, _ = _decode_triple(doc, alg, ops, tol)
    a_path = decode_path(doc, ops)
    k0 = sf_unbounded(triple, a_path, tol)
    f0 = bounded_transform(triple.D + a_path.at(0.0), tol)
    drift = max(
        quotient_norm(bounded_transform(triple.D + a_path.at(t), tol) - f0, alg)
        for t in np.linspace(0.0, 1.0, 9)
    )
    report = {"task": "sf_unbounded"}
    report.update(_k0_payload(k0, alg))
    report["partition"] = []
    report["diagnostics"] = {
        "min_quotient_gap": None,
        "residuals": {"quotient_drift": drift},
    }

    def track_op(t: float) -> BlockOperator:
        return bounded_transform(triple.D + a_path.at(t), tol)

    return report, track_op


def _run_index(doc, alg, ops, tol):
    raw = doc.get("index")
    _expect(isinstance(raw, dict), "index task needs an index section")
    for key in ("S", "p", "q"):
        _expect(key in raw, f"index section needs {key}")
    s = _named(ops, raw["S"], "index S")
    p = _named(ops, raw["p"], "index p")
    q = _named(ops, raw["q"], "index q")
    fred = is_corner_fredholm(s, p, q, alg, tol)
    k0 = corner_index(s, p, q, alg, tol)
    report = {"task": "index"}
    report.update(_k0_payload(k0, alg))
    report["partition"] = []
    report["diagnostics"] = {
        "min_quotient_gap": _gap_or_none(fred.min_gap),
        "residuals": {},
        "corner_blocks": [
            {
                "block": r.block,
                "domain_rank": r.domain_rank,
                "codomain_rank": r.codomain_rank,
                "gap": _gap_or_none(r.smallest_singular_value),
            }
            for r in fred.blocks
        ],
    }
    return report, None


def _run_boundary(doc, alg, ops, tol):
    raw = doc.get("boundary")
    _expect(isinstance(raw, dict) and "S" in raw, "boundary task needs boundary.S")
    s = _named(ops, raw["S"], "boundary S")
    one = alg.identity()
    k0 = boundary_map(s, alg, tol)
    report = {"task": "boundary"}
    report.update(_k0_payload(k0, alg))
    report["partition"] = []
    report["diagnostics"] = {
        "min_quotient_gap": None,
        "residuals": {
            "quotient_unitarity_left": quotient_norm(s.H @ s - one, alg),
            "quotient_unitarity_right": quotient_norm(s @ s.H - one, alg),
        },
    }
    return report, None


def _run_pairing(doc, alg, ops, tol):
    raw = doc.get("pairing")
    _expect(isinstance(raw, dict), "pairing task needs a pairing section")
    for key in ("p", "u"):
        _expect(key in raw, f"pairing section needs {key}")
    p = _named(ops, raw["p"], "pairing p")
    u = _named(ops, raw["u"], "pairing u")
    q = _named(ops, raw["q"], "pairing q") if "q" in raw else None
    data = make_pairing_data(alg, p, u, q=q, tol=tol)
    k0 = pairing_via_boundary(data, tol)
    w_op = intermediate_operator(data, tol)
    one = alg.identity()
    report = {"task": "pairing"}
    report.update(_k0_payload(k0, alg))
    report["partition"] = []
    report["diagnostics"] = {
        "min_quotient_gap": None,
        "residuals": {
            "cos_identity": cos_identity_check(data.q, alg, tol),
            "intermediate_unitarity_left": quotient_norm(w_op.H @ w_op - one, alg),
            "intermediate_unitarity_right": quotient_norm(w_op @ w_op.H - one, alg),
            "commutator_quotient": quotient_norm(p @ u - u @ p, alg),
        },
    }
    return report, None


def _run_checks(doc, alg, ops, tol):
    triple, _ = _decode_triple(doc, alg, ops, tol)
    kas = check_kasparov_module(triple, tol)
    residuals: dict[str, Any] = {
        "kasparov_commutator": dict(kas.commutator),
        "kasparov_square": dict(kas.square_defect),
        "kasparov_adjoint": dict(kas.adjoint_defect),
    }
    integral = {}
    names = list(triple.generators)
    for a in names:
        for b in names:
            check = resolvent_integral_check(triple, a, b, tol)
            integral[f"{a},{b}"] = check.residual
    residuals["resolvent_integral"] = integral
    report = {
        "task": "checks",
        "k0_class": [],
        "tau": 0.0,
        "partition": [],
        "diagnostics": {
            "min_quotient_gap": None,
            "kasparov_passed": kas.passed,
            "residuals": residuals,
        },
    }
    return report, None


def _run_generate(doc, args) -> dict:
    model = doc.get("model")
    if model == "dirac":
        m = int(doc.get("m", 8))
        k = int(doc.get("k", 1))
        triple, u = dirac_circle(m, k)
        out = {
            "task": "sf_unitary",
            "algebra": encode_algebra(triple.alg),
            "operators": {
                "1": encode_operator(triple.alg.identity()),
                "u": encode_operator(u),
                "u*": encode_operator(u.H),
                "D": encode_operator(triple.D),
            },
            "triple": {"generators": ["1", "u", "u*"], "D": "D", "unitary": "u"},
            "seed": int(doc.get("seed", 0)),
        }
        return out
    if model == "crossing":
        n = int(doc.get("n", 2))
        crossings = doc.get("crossings", [])
        seed = int(doc.get("seed", 0))
        path = random_crossing_path(n, crossings, seed)
        operators = {}
        keyframes = []
        for i, (t, op) in enumerate(path.keyframes):
            name = f"kf{i:03d}"
            operators[name] = encode_operator(op)
            keyframes.append({"t": t, "op": name})
        return {
            "task": "spectral_flow",
            "algebra": encode_algebra(
                VnAlgebra([Block(dim=n, weight=1.0, in_ideal=True)])
            ),
            "operators": operators,
            "path": {"keyframes": keyframes},
            "seed": seed,
        }
    raise SchemaError(f"unknown generate model {model!r} (expected dirac or crossing)")


def _write_tracks(track, out_file: str) -> None:
    lines = ["t,block,index,eigenvalue"]
    for t in np.linspace(0.0, 1.0, _TRACK_SAMPLES):
        op = track(t) if callable(track) else track.at(t)
        for bi, block in enumerate(op.blocks):
            w = np.linalg.eigvalsh(0.5 * (block + block.conj().T))
            for ei, val in enumerate(w):
                lines.append(
                    f"{format(float(t), '.17g')},{bi},{ei},{format(float(val), '.17g')}"
                )
    with open(out_file, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


_RUNNERS = {
    "spectral_flow": _run_spectral_flow,
    "sf_unitary": _run_sf_unitary,
    "sf_unbounded": _run_sf_unbounded,
    "index": _run_index,
    "boundary": _run_boundary,
    "pairing": _run_pairing,
    "checks": _run_checks,
}


def run_task(doc: dict, args: argparse.Namespace) -> tuple[dict, Any]:
    _expect(isinstance(doc, dict), "task document must be a JSON object")
    task = doc.get("task")
    _expect(task in TASKS, f"unknown task {task!r} (expected one of {', '.join(TASKS)})")
    if task == "generate":
        return _run_generate(doc, args), None
    alg = decode_algebra(doc.get("algebra"))
    ops = decode_operators(doc, alg)
    tol = decode_tolerances(doc, args)
    report, track = _RUNNERS[task](doc, alg, ops, tol)
    seed = doc.get("seed", args.seed)
    report["seed"] = int(seed) if seed is not None else None
    report["version"] = __version__
    return report, track


# -- entry point --------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vnflow",
        description="K-class valued spectral flow and index computations on block models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a task document")
    run_p.add_argument("taskfile", help="path to the JSON task document")
    run_p.add_argument("--out", default=None, help="write the report to this path")
    run_p.add_argument("--tracks", default=None, help="write eigenvalue tracks CSV here")
    run_p.add_argument("--tol-kernel", type=float, default=None)
    run_p.add_argument("--tol-gap", type=float, default=None)
    run_p.add_argument("--max-depth", type=int, default=None)
    run_p.add_argument("--seed", type=int, default=None)

    gen_p = sub.add_parser("generate", help="emit a ready-to-run model document")
    gen_p.add_argument("model", choices=["dirac", "crossing"])
    gen_p.add_argument("--m", type=int, default=8, help="window radius (dirac)")
    gen_p.add_argument("--k", type=int, default=1, help="winding (dirac)")
    gen_p.add_argument("--n", type=int, default=2, help="dimension (crossing)")
    gen_p.add_argument(
        "--crossings",
        default="",
        help="comma separated +/- signs, e.g. +,+,- (crossing)",
    )
    gen_p.add_argument("--seed", type=int, default=0)
    gen_p.add_argument("--out", default=None)
    return parser


def _parse_crossings(text: str) -> list[int]:
    if not text:
        return []
    out = []
    for token in text.split(","):
        token = token.strip()
        if token in ("+", "+1", "1", "up"):
            out.append(1)
        elif token in ("-", "-1", "down"):
            out.append(-1)
        else:
            raise SchemaError(f"bad crossing token {token!r}")
    return out


def _emit(text: str, out_path: str | None) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "generate":
            doc = {
                "task": "generate",
                "model": args.model,
                "m": args.m,
                "k": args.k,
                "n": args.n,
                "crossings": _parse_crossings(args.crossings),
                "seed": args.seed,
            }
            report, _ = run_task(doc, args)
            _emit(canonical_json(report), args.out)
            return 0

        try:
            with open(args.taskfile, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise SchemaError(f"cannot read task document: {exc}") from exc

        report, track = run_task(doc, args)
        if args.tracks is not None:
            if track is None and "path" in doc:
                alg = decode_algebra(doc.get("algebra"))
                ops = decode_operators(doc, alg)
                track = decode_path(doc, ops)
            if track is None:
                raise SchemaError("--tracks needs a task with a path")
            _write_tracks(track, args.tracks)
        _emit(canonical_json(report), args.out)
        return 0
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except (PreconditionError, ModelError, NumericsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ConsistencyError as exc:
        print(f"consistency error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
