"""Command-line front end: ``check``, ``lts`` and ``typecheck``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Sequence, TextIO

from .context import TypingContext
from .process import TypingError, check_reducts, explore, has_error, typecheck
from .properties import CHECKERS, Verdict
from .registry import lookup
from .statespace import DEFAULT_MAX_STATES, LimitExceeded, Limits, Lts, build_lts, export, reduction_reachable
from .syntax import ParseError, WellFormednessError, parse_context, parse_process

PROPERTY_ORDER = ("safe", "df", "live", "term", "nterm")
PROPERTY_TITLES = {
    "safe": "safety",
    "df": "deadlock freedom",
    "live": "liveness",
    "term": "termination",
    "nterm": "never-termination",
}

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    """Bad input: reported with exit code 2."""


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise InputError(f"cannot read {path}: {err.strerror or err}") from err


def _properties(spec: str | None) -> list[str]:
    if spec is None:
        return list(PROPERTY_ORDER)
    wanted = [p.strip() for p in spec.split(",") if p.strip()]
    unknown = [p for p in wanted if p not in CHECKERS]
    if unknown or not wanted:
        raise InputError(f"unknown property {', '.join(unknown) or '(none)'}; choose from {', '.join(PROPERTY_ORDER)}")
    return [p for p in PROPERTY_ORDER if p in wanted]


def _load_lts(path: str, reliable: str | None, max_states: int) -> Lts:
    doc = parse_context(_read(path))
    roles = doc.reliable if reliable is None else frozenset(r for r in reliable.split(",") if r)
    try:
        return build_lts(doc.context(), doc.session, roles, Limits(max_states=max_states))
    except ValueError as err:
        raise InputError(str(err)) from err


def _witness_json(verdict: Verdict) -> list[dict] | None:
    if verdict.witness is None:
        return None
    return [{"state": src, "label": str(label)} for src, label in verdict.witness]


def build_report(path: str, lts: Lts, props: Sequence[str]) -> dict:
    """Run the requested checks and collect a JSON-ready report."""
    reach = reduction_reachable(lts)
    results = {}
    for name in props:
        start = time.perf_counter()
        verdict = CHECKERS[name](lts)
        elapsed = (time.perf_counter() - start) * 1000
        results[name] = {
            "holds": verdict.holds,
            "reason": verdict.reason,
            "state": verdict.state,
            "context": None if verdict.state is None else str(lts.states[verdict.state]),
            "witness": _witness_json(verdict),
            "time_ms": round(elapsed, 3),
        }
    example = lookup(path)
    published = None
    if example is not None and example.published is not None:
        published = {"states": example.published.states, "transitions": example.published.transitions}
    return {
        "input": path,
        "session": lts.session,
        "reliable": sorted(lts.reliable),
        "properties": results,
        "lts": {
            "states": len(lts.states),
            "edges": len(lts.edges),
            "reachable_states": len(reach),
            "reachable_edges": sum(len(lts.reduction_edges(v)) for v in reach),
        },
        "published": published,
        "notes": list(example.notes) if example is not None else [],
    }


def _print_table(report: dict, witness: bool, out: TextIO) -> None:
    rel = ", ".join(report["reliable"]) or "none"
    st = report["lts"]
    print(f"{report['input']}: session {report['session']}, reliable roles: {rel}", file=out)
    print(
        f"LTS: {st['states']} states, {st['edges']} edges; "
        f"reduction-reachable: {st['reachable_states']} states, {st['reachable_edges']} edges",
        file=out,
    )
    if report["published"]:
        pub = report["published"]
        print(f"published: {pub['states']} states, {pub['transitions']} transitions", file=out)
    for note in report["notes"]:
        print(f"note: {note}", file=out)
    print(file=out)
    width = max(len(PROPERTY_TITLES[p]) for p in report["properties"])
    for name, res in report["properties"].items():
        mark = "✓" if res["holds"] else "✗"
        print(f"  {PROPERTY_TITLES[name]:<{width}}  {mark}  {res['time_ms']:9.2f} ms", file=out)
    if not witness:
        return
    for name, res in report["properties"].items():
        if res["holds"]:
            continue
        print(f"\n{PROPERTY_TITLES[name]} fails: {res['reason']}", file=out)
        for i, step in enumerate(res["witness"] or [], 1):
            print(f"  {i:3}. [{step['state']}] {step['label']}", file=out)
        print(f"  reached state {res['state']}: {res['context']}", file=out)


def cmd_check(args: argparse.Namespace, out: TextIO) -> int:
    props = _properties(args.property)
    lts = _load_lts(args.file, args.reliable, args.max_states)
    report = build_report(args.file, lts, props)
    if args.json:
        json.dump(report, out, indent=2, ensure_ascii=False)
        out.write("\n")
    else:
        _print_table(report, args.witness, out)
    return EXIT_OK if all(r["holds"] for r in report["properties"].values()) else EXIT_FAIL


def cmd_lts(args: argparse.Namespace, out: TextIO) -> int:
    lts = _load_lts(args.file, args.reliable, args.max_states)
    text = export(lts, args.format)
    if args.output:
        try:
            Path(args.output).write_text(text, encoding="utf-8")
        except OSError as err:
            raise InputError(f"cannot write {args.output}: {err.strerror or err}") from err
    else:
        out.write(text)
    return EXIT_OK


def cmd_typecheck(args: argparse.Namespace, out: TextIO) -> int:
    theta, proc = parse_process(_read(args.file))
    g = TypingContext()
    reliable: dict[str, frozenset[str]] = {}
    if args.context:
        doc = parse_context(_read(args.context))
        g = doc.context()
        reliable[doc.session] = doc.reliable
    try:
        typecheck(theta, g, proc)
    except TypingError as err:
        print(f"ill-typed: {err}", file=out)
        return EXIT_FAIL
    print("well-typed", file=out)
    if not args.explore:
        return EXIT_OK
    if len(g) == 0:
        report = check_reducts(theta, proc, args.depth)
        print(f"explored {report.explored} reducts up to depth {args.depth}", file=out)
        for q in report.errors:
            print(f"  error reached: {q}", file=out)
        for q, why in report.untyped:
            print(f"  reduct not re-typed: {q}\n    {why}", file=out)
        return EXIT_OK if report.ok else EXIT_FAIL
    errors = [q for _, q in explore(proc, args.depth, reliable) if has_error(q)]
    print(f"explored up to depth {args.depth}: {len(errors)} reducts with errors", file=out)
    for q in errors:
        print(f"  error reached: {q}", file=out)
    return EXIT_FAIL if errors else EXIT_OK


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mpstcrash", description="Verify crash-stop multiparty session protocols.")
    sub = ap.add_subparsers(dest="command", required=True)

    def lts_options(p: argparse.ArgumentParser) -> None:
        p.add_argument("file", help="typing context document (.mpst)")
        p.add_argument("--reliable", help="comma-separated reliable roles, overriding the document")
        p.add_argument("--max-states", type=int, default=DEFAULT_MAX_STATES, help="state limit for exploration")

    check = sub.add_parser("check", help="check typing context properties")
    lts_options(check)
    check.add_argument("--property", help="comma-separated subset of " + ",".join(PROPERTY_ORDER))
    check.add_argument("--json", action="store_true", help="print a JSON report")
    check.add_argument("--witness", action="store_true", help="print violation traces")
    check.set_defaults(run=cmd_check)

    lts = sub.add_parser("lts", help="export the transition system")
    lts_options(lts)
    lts.add_argument("--format", choices=("dot", "json"), required=True)
    lts.add_argument("-o", "--output", help="write to this file instead of stdout")
    lts.set_defaults(run=cmd_lts)

    tc = sub.add_parser("typecheck", help="typecheck a process document (.proc)")
    tc.add_argument("file")
    tc.add_argument("--context", help="typing context for the free session (.mpst)")
    tc.add_argument("--depth", type=int, default=6, help="exploration depth for --explore")
    tc.add_argument("--explore", action="store_true", help="explore reductions and check type safety")
    tc.set_defaults(run=cmd_typecheck)
    return ap


def run(argv: Sequence[str] | None = None, out: TextIO | None = None, err: TextIO | None = None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    if getattr(args, "max_states", 1) < 1:
        print("mpstcrash: --max-states must be positive", file=err)
        return EXIT_INPUT
    try:
        return args.run(args, out)
    except (InputError, ParseError, WellFormednessError, LimitExceeded) as exc:
        print(f"mpstcrash: {exc}", file=err)
        return EXIT_INPUT


def main() -> None:
    sys.exit(run())
