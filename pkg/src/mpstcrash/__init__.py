"""Verification of multiparty session protocols under crash-stop failures.

Typing contexts are explored into finite transition systems and checked for
safety, deadlock freedom, liveness, termination and never-termination,
either directly or through modal mu-calculus formulae.  A session
pi-calculus with crashes, its reduction semantics and its type system sit
alongside.
"""

from .context import Endpoint, TypingContext
from .properties import CHECKERS, Verdict
from .statespace import Limits, Lts, build_lts, export
from .syntax import parse_context, parse_process, parse_type
from .types import is_subtype, unfold, well_formed

__all__ = [
    "CHECKERS",
    "Endpoint",
    "Limits",
    "Lts",
    "TypingContext",
    "Verdict",
    "build_lts",
    "export",
    "is_subtype",
    "parse_context",
    "parse_process",
    "parse_type",
    "unfold",
    "well_formed",
]
