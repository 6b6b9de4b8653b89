from __future__ import annotations

from functools import lru_cache

from hypothesis import settings

from mpstcrash.registry import context_path, process_path
from mpstcrash.statespace import Lts, build_lts
from mpstcrash.syntax import ContextDocument, parse_context, parse_process

settings.register_profile("repo", deadline=None, derandomize=True)
settings.load_profile("repo")

ACCEPTANCE_LINES: dict[int, str] = {}


@lru_cache(maxsize=None)
def document(name: str) -> ContextDocument:
    return parse_context(context_path(name).read_text(encoding="utf-8"))


@lru_cache(maxsize=None)
def corpus_lts(name: str, reliable: frozenset[str] | None = None) -> Lts:
    """LTS of a bundled context; ``reliable`` defaults to the document's own set."""
    doc = document(name)
    roles = doc.reliable if reliable is None else reliable
    return build_lts(doc.context(), doc.session, roles)


@lru_cache(maxsize=None)
def corpus_process(name: str):
    return parse_process(process_path(name).read_text(encoding="utf-8"))


def pytest_terminal_summary(terminalreporter) -> None:
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
