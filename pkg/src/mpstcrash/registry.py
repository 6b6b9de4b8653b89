"""Bundled example protocols and the state counts published for them."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path


@dataclass(frozen=True)
class Published:
    """Counts reported by the reference mCRL2 toolchain for one example."""

    states: int
    transitions: int


@dataclass(frozen=True)
class Example:
    name: str
    reliable_variant: str | None = None
    published: Published | None = None
    notes: tuple[str, ...] = ()


_EXAMPLES = (
    Example("dns", "dns_reliable", Published(101, 427)),
    Example("dns_reliable", published=Published(10, 15)),
    Example(
        "adder",
        "adder_reliable",
        Published(37, 159),
        (
            "The published summary lists Adder as terminating, yet its recursion admits an "
            "endless add/add/res loop; this checker reports it as not terminating.",
        ),
    ),
    Example("adder_reliable", published=Published(26, 56)),
    Example(
        "two_buyers",
        "two_buyers_reliable",
        Published(1409, 10248),
        (
            "The published summary names only Adder and Broadcast as terminating, while the "
            "protocol description states that TwoBuyers terminates; this checker reports it "
            "as terminating.",
        ),
    ),
    Example("two_buyers_reliable", published=Published(169, 510)),
    Example(
        "negotiate",
        "negotiate_reliable",
        Published(1089, 8106),
        (
            "Role c confirms an accepted offer to n and echoes b's acceptance; the listed "
            "types leave both sides waiting for each other at those points.",
            "b's inner reply from c carries a crash branch, which safety requires while c is unreliable.",
        ),
    ),
    Example("negotiate_reliable", published=Published(50, 157)),
    Example(
        "broadcast",
        "broadcast_reliable",
        Published(161, 925),
        ("q expects the request label req from r in both recovery branches.",),
    ),
    Example("broadcast_reliable", published=Published(13, 25)),
    Example("gamma_a"),
    Example("gamma_b"),
    Example("gamma_c"),
    Example("server"),
)

EXAMPLES = {e.name: e for e in _EXAMPLES}

# the five evaluated protocols, with the reliable roles they are checked under
EVALUATED = ("dns", "adder", "two_buyers", "negotiate", "broadcast")

# process systems: closed ones, and those implementing one role per component
PROCESSES = ("dns", "adder", "broadcast", "two_buyers", "carried")
SINGLE_ROLE_PROCESSES = ("dns", "adder", "broadcast", "two_buyers")


def corpus_dir() -> Path:
    return Path(str(resources.files("mpstcrash") / "corpus"))


def context_path(name: str) -> Path:
    return corpus_dir() / f"{name}.mpst"


def process_path(name: str) -> Path:
    return corpus_dir() / f"{name}.proc"


def lookup(path: str | Path) -> Example | None:
    """Registry entry for a file named after a bundled example."""
    return EXAMPLES.get(Path(path).stem)
