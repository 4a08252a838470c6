"""Command-line front end.

Exit codes: 0 on success, 1 on domain errors (including failed
verification), 2 on usage errors and unreadable or malformed input files.
"""
from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

import numpy as np

from . import connection as cx
from .core import bound_of
from .domination import is_N_dominated, minimal_domination_N
from .errors import CocycleError, StageFailed
from .generators import KINDS, GeneratorSpec, generate
from .serialization import (
    SchemaError,
    VERSION,
    cocycle_from_dict,
    cocycle_to_dict,
    dumps,
    glued_from_dict,
    glued_to_dict,
    loads,
    outcome_from_dict,
    outcome_to_dict,
    path_from_dict,
)
from .spectral import (
    is_saddle,
    lyapunov_exponents,
    spectrum_of,
    stable_unstable_splitting,
    strong_stable_dims,
    strong_unstable_dims,
)
from .synthesis import pipeline_small_angle, push_moduli, realify, small_angle
from .verification import DEFAULT_SAMPLES, all_passed, verify_outcome


class UsageError(Exception):
    pass


def _read(path: str) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc
    return loads(text)


def _write(path: str, text: str):
    try:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from exc


def _emit(args, doc: dict, table: str):
    """Table to stdout unless ``--json``; the JSON document also goes to ``-o``."""
    text = dumps(doc, indent=1)
    if args.output:
        _write(args.output, text)
    print(text if args.json else table)


def _vector(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def _fmt(x) -> str:
    return f"{x:.6g}"


def _cert_table(certs) -> str:
    rows = []
    for c in certs:
        flag = "pass" if c.passed else ("FAIL" if c.required else "fail (informational)")
        rows.append(f"  {c.name:<36} {flag:<22} margin {_fmt(c.margin)}")
    return "\n".join(rows)


def _outcome_table(o) -> str:
    r = o.radius_report
    head = (
        f"{o.kind}: {'passed' if o.passed else 'FAILED'}\n"
        f"  radius {_fmt(r.radius)} at t={_fmt(r.argmax_t)}, map {r.argmax_n + 1} ({r.sample_count} samples)"
    )
    return head + "\n" + _cert_table(o.certificates)


# ---------------------------------------------------------------------------
# subcommands


def cmd_analyze(args):
    c = cocycle_from_dict(_read(args.input))
    sp = spectrum_of(c)
    doc = {
        "v": VERSION,
        "type": "analysis",
        "dim": c.dim,
        "period": c.period,
        "bound": bound_of(c),
        "spectrum": sp.to_dict(),
        "lyapunov": lyapunov_exponents(c),
        "I": sorted(strong_stable_dims(c)),
        "J": sorted(strong_unstable_dims(c)),
        "saddle": is_saddle(c),
        "real": sp.all_real,
    }
    lines = [
        f"dim {c.dim}, period {c.period}, bound C = {_fmt(doc['bound'])}",
        "eigenvalues of the first return:",
    ]
    for z, m in zip(sp.eigenvalues, sp.moduli):
        lines.append(f"  {_fmt(z.real):>14} {'+' if z.imag >= 0 else '-'} {_fmt(abs(z.imag)):<12}i   |.| = {_fmt(m)}")
    lines.append(f"I = {doc['I']}  J = {doc['J']}  saddle = {doc['saddle']}  real = {doc['real']}")
    if doc["saddle"]:
        try:
            split = stable_unstable_splitting(c)
            doc["index"] = split.index
            doc["min_angle"] = split.min_angle()
            lines.append(f"stable index {split.index}, minimum stable/unstable angle {_fmt(doc['min_angle'])}")
        except CocycleError as exc:
            doc["splitting_error"] = f"{type(exc).__name__}: {exc}"
            lines.append(f"splitting unavailable: {doc['splitting_error']}")
    _emit(args, doc, "\n".join(lines))
    return 0


def cmd_dominate(args):
    c = cocycle_from_dict(_read(args.input))
    split = stable_unstable_splitting(c)
    if args.search:
        if args.max_N is None:
            raise UsageError("--search needs --max-N")
        N = minimal_domination_N(c, split, args.max_N)
        doc = {"v": VERSION, "type": "domination_search", "max_N": args.max_N, "minimal_N": N}
        table = f"minimal N <= {args.max_N}: {N if N is not None else 'none'}"
    else:
        if args.N is None:
            raise UsageError("dominate needs --N or --search --max-N")
        rep = is_N_dominated(c, split, args.N)
        doc = {"v": VERSION, "type": "domination", **rep.to_dict()}
        table = (
            f"N = {rep.N_tested}: {'dominated' if rep.dominated else 'not dominated'}, "
            f"worst ratio {_fmt(rep.worst_ratio)} at base {rep.worst_base + 1} (constant {rep.constant})"
        )
    _emit(args, doc, table)
    return 0


def _synthesis(args, fn):
    if args.epsilon is None:
        raise UsageError("--epsilon is required")
    c = cocycle_from_dict(_read(args.input))
    try:
        o = fn(c)
    except StageFailed as exc:
        if args.output and exc.partial is not None:
            _write(args.output, dumps(outcome_to_dict(exc.partial), indent=1))
        raise
    _emit(args, outcome_to_dict(o), _outcome_table(o))
    return 0 if o.passed else 1


def cmd_realify(args):
    return _synthesis(args, lambda c: realify(c, args.epsilon, args.seed, samples=args.samples))


def cmd_push(args):
    return _synthesis(args, lambda c: push_moduli(c, args.epsilon, samples=args.samples))


def _need_N(args):
    if args.N is None:
        raise UsageError("--N is required")
    return args.N


def cmd_small_angle(args):
    return _synthesis(args, lambda c: small_angle(c, args.epsilon, _need_N(args), samples=args.samples))


def cmd_pipeline(args):
    return _synthesis(
        args, lambda c: pipeline_small_angle(c, args.epsilon, _need_N(args), args.seed, samples=args.samples)
    )


def cmd_verify(args):
    doc = _read(args.input)
    if doc.get("type") == "outcome":
        o = outcome_from_dict(doc)
        goals = dict(o.goals)
    else:
        from .synthesis import SynthesisOutcome
        from .paths import path_radius

        path = path_from_dict(doc)
        goals = {"dim": path.start.dim}
        if args.epsilon is not None:
            goals["radius"] = args.epsilon
        o = SynthesisOutcome("path", path, path_radius(path))
    certs = verify_outcome(o, goals, args.samples)
    ok = all_passed(certs)
    out = {"v": VERSION, "type": "verification", "passed": ok, "certificates": [c.to_dict() for c in certs]}
    table = f"verification: {'passed' if ok else 'FAILED'}\n" + _cert_table(certs)
    _emit(args, out, table)
    return 0 if ok else 1


def _fixed_point_matrix(path: str) -> np.ndarray:
    c = cocycle_from_dict(_read(path))
    if c.period != 1:
        raise UsageError(f"{path}: a fixed-point map needs period 1")
    return c.maps[0]


def cmd_glue(args):
    A = _fixed_point_matrix(args.outer)
    B = _fixed_point_matrix(args.inner)
    g = cx.build_glued(A, B, args.r_in, args.r_out, args.profile)
    rep = cx.connection_size(g, args.samples)
    doc = glued_to_dict(g)
    table = f"glued map d={g.dim}, r_in={_fmt(g.r_in)}, r_out={_fmt(g.r_out)}, size {_fmt(rep.size)}"
    _emit(args, doc, table)
    return 0


def cmd_size(args):
    g = glued_from_dict(_read(args.input))
    rep = cx.connection_size(g, args.samples)
    doc = {"v": VERSION, "type": "size", **rep.to_dict()}
    table = (
        f"size {_fmt(rep.size)} (forward {_fmt(rep.forward)}, inverse {_fmt(rep.inverse)}, "
        f"{rep.sample_count} points)"
    )
    _emit(args, doc, table)
    return 0


def cmd_concat(args):
    g = glued_from_dict(_read(args.first))
    h = glued_from_dict(_read(args.second))
    h = cx.homothety_conjugate(h, args.lam)
    gh = cx.concatenate_maps(g, h)
    rng = np.random.default_rng(args.seed)
    pts = rng.normal(size=(64, g.dim))
    pts *= (rng.uniform(0.0, 1.5 * g.r_out, 64) / np.linalg.norm(pts, axis=1))[:, None]
    defect = cx.concatenation_inverse_defect(g, h, gh(pts))
    doc = glued_to_dict(gh)
    table = (
        f"concatenation with {len(gh.layers)} layers, r_in={_fmt(gh.r_in)}, r_out={_fmt(gh.r_out)}; "
        f"inverse symmetry defect {_fmt(defect)}"
    )
    _emit(args, doc, table)
    return 0


def cmd_member(args):
    g = glued_from_dict(_read(args.input))
    x = _vector(args.point)
    window = _vector(args.window)
    if x.size != g.dim or window.size != 2:
        raise UsageError("--point needs dim entries and --window two")
    rep = cx.membership_report(g, x, args.i, tuple(window), args.n_max)
    doc = {"v": VERSION, "type": "membership", **rep.to_dict()}
    table = (
        f"member of W^ss,{args.i}: {rep.member} (K={_fmt(rep.K)}, {rep.steps} steps, "
        f"entered inner ball: {rep.entered_inner}, escaped: {rep.escaped})"
    )
    _emit(args, doc, table)
    return 0 if not rep.escaped else 1


def cmd_gen(args):
    moduli = list(_vector(args.moduli)) if args.moduli else None
    spec = GeneratorSpec(args.dim, args.period, args.bound, args.kind, args.seed, moduli)
    c = generate(spec)
    doc = cocycle_to_dict(c)
    table = f"generated {args.kind} cocycle: dim {c.dim}, period {c.period}, bound {_fmt(bound_of(c))}"
    _emit(args, doc, table)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="print the JSON document instead of a table")
    common.add_argument("-o", "--output", help="also write the JSON document to this file")
    common.add_argument("--samples", type=int, default=DEFAULT_SAMPLES, help="sample count for certificates")
    common.add_argument("--seed", type=int, default=0)

    synth = argparse.ArgumentParser(add_help=False)
    synth.add_argument("input", help="cocycle JSON document")
    synth.add_argument("--epsilon", type=float)
    synth.add_argument("--N", type=int)

    p = argparse.ArgumentParser(prog="cocyclepaths", description="Paths of periodic linear cocycles.")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[common], help="spectrum, strong dimensions, saddle flag")
    a.add_argument("input")
    a.set_defaults(fn=cmd_analyze)

    d = sub.add_parser("dominate", parents=[common], help="N-domination of the stable/unstable splitting")
    d.add_argument("input")
    d.add_argument("--N", type=int)
    d.add_argument("--search", action="store_true")
    d.add_argument("--max-N", dest="max_N", type=int)
    d.set_defaults(fn=cmd_dominate)

    for name, fn, text in (
        ("realify", cmd_realify, "path to a cocycle with real eigenvalues"),
        ("push-moduli", cmd_push, "path pushing moduli below epsilon and above 1/epsilon"),
        ("small-angle", cmd_small_angle, "path closing the stable/unstable angle"),
        ("pipeline", cmd_pipeline, "realify, separate, push moduli, close the angle"),
    ):
        s = sub.add_parser(name, parents=[common, synth], help=text)
        s.set_defaults(fn=fn)

    v = sub.add_parser("verify", parents=[common], help="re-run the certificates of an outcome or path")
    v.add_argument("input")
    v.add_argument("--epsilon", type=float, help="radius budget for bare path documents")
    v.set_defaults(fn=cmd_verify)

    g = sub.add_parser("glue", parents=[common], help="glue two fixed-point linear maps")
    g.add_argument("outer", help="period-1 cocycle document for the outer map A")
    g.add_argument("inner", help="period-1 cocycle document for the inner map B")
    g.add_argument("--r-in", dest="r_in", type=float, default=0.5)
    g.add_argument("--r-out", dest="r_out", type=float, default=1.0)
    g.add_argument("--profile", choices=cx.PROFILES, default="plateau")
    g.set_defaults(fn=cmd_glue, samples=64)

    z = sub.add_parser("size", parents=[common], help="sampled size of a glued map")
    z.add_argument("input")
    z.set_defaults(fn=cmd_size, samples=64)

    k = sub.add_parser("concat", parents=[common], help="concatenate a glued map with a rescaled one")
    k.add_argument("first")
    k.add_argument("second")
    k.add_argument("--lambda", dest="lam", type=float, default=1.0)
    k.set_defaults(fn=cmd_concat)

    m = sub.add_parser("member", parents=[common], help="decay-rate strong stable membership test")
    m.add_argument("input")
    m.add_argument("--point", required=True, help="comma-separated coordinates")
    m.add_argument("--i", type=int, required=True)
    m.add_argument("--window", required=True, help="sigma_lo,sigma_hi")
    m.add_argument("--n-max", dest="n_max", type=int, default=200)
    m.set_defaults(fn=cmd_member)

    n = sub.add_parser("gen", parents=[common], help="seeded random cocycle")
    n.add_argument("--kind", choices=KINDS, default="generic")
    n.add_argument("--dim", type=int, default=2)
    n.add_argument("--period", type=int, default=4)
    n.add_argument("--bound", type=float, default=2.0)
    n.add_argument("--moduli", help="comma-separated product moduli for prescribed_moduli")
    n.set_defaults(fn=cmd_gen)
    return p


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except (UsageError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StageFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CocycleError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
