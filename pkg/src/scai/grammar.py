"""Rendering and parsing of game utterances.

Proposals follow one fixed sentence shape::

    For the {total} {currency}, the proposer will get {p}, and the responder will get {r}.

optionally followed by a single space and a free-text clause (a manner
clause or a reason). Decisions are the bare tokens ``accept`` / ``reject``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Optional, Union

import yaml

from scai.actions import Decision, Manner

PROPOSAL_TEMPLATE = (
    "For the {total} {currency}, the proposer will get {proposer_share}, "
    "and the responder will get {responder_share}."
)

_PROPOSAL_RE = re.compile(
    r"For the (?P<total>\d+) (?P<currency>[^,]+), the proposer will get (?P<p>\d+), "
    r"and the responder will get (?P<r>\d+)\.(?: (?P<clause>.+))?",
    re.DOTALL,
)
_TRAILING_PUNCT = ".!?,;:"


class GrammarError(ValueError):
    pass


class NoMatch(GrammarError):
    """Text does not fit the grammar."""


class ShareMismatch(GrammarError):
    """Text fits the grammar but the shares do not add up to the total."""


@dataclass(frozen=True)
class ParsedProposal:
    total: int
    currency: str
    proposer_share: int
    responder_share: int
    manner_clause: Optional[str] = None


ParsedAction = Union[ParsedProposal, Decision]


@dataclass(frozen=True)
class Utterance:
    raw_text: str
    parsed: Optional[ParsedAction] = None

    def __post_init__(self):
        if not self.raw_text:
            raise ValueError("utterance text must be non-empty")

    @classmethod
    def from_text(cls, text: str) -> "Utterance":
        for parse in (parse_proposal, parse_decision):
            try:
                return cls(text, parse(text))
            except GrammarError:
                continue
        return cls(text, None)


@lru_cache(maxsize=None)
def _manner_data() -> dict:
    text = resources.files("scai").joinpath("data/manners.yaml").read_text()
    return yaml.safe_load(text)


def manner_templates(manner: Manner) -> tuple[str, ...]:
    if manner is Manner.NEUTRAL:
        return ()
    return tuple(_manner_data()["templates"][manner.value])


def _check_currency(currency: str) -> None:
    if not currency or currency != currency.strip() or "," in currency or "\n" in currency:
        raise ValueError(f"currency {currency!r} cannot be rendered unambiguously")


def render_proposal(offer, currency: str, manner: Manner = Manner.NEUTRAL, rng=None) -> str:
    _check_currency(currency)
    text = PROPOSAL_TEMPLATE.format(
        total=offer.total,
        currency=currency,
        proposer_share=offer.proposer_share,
        responder_share=offer.responder_share,
    )
    pool = manner_templates(manner)
    if pool:
        if rng is None:
            raise ValueError(f"rendering a {manner.value} clause needs a seeded rng")
        text += " " + pool[int(rng.integers(len(pool)))]
    return text


def render_decision(decision: Decision) -> str:
    return decision.value


def parse_proposal(text: str) -> ParsedProposal:
    m = _PROPOSAL_RE.fullmatch(text.strip())
    if m is None:
        raise NoMatch(f"not a proposal: {text!r}")
    total, p, r = int(m["total"]), int(m["p"]), int(m["r"])
    if total < 1 or p + r != total:
        raise ShareMismatch(f"shares {p}+{r} do not sum to total {total}")
    clause = m["clause"].strip() if m["clause"] else None
    return ParsedProposal(total, m["currency"], p, r, clause or None)


def parse_decision(text: str) -> Decision:
    token = text.strip().rstrip(_TRAILING_PUNCT).strip().lower()
    try:
        return Decision(token)
    except ValueError:
        raise NoMatch(f"not a decision: {text!r}") from None


def _lexicon_hits(clause: str, words) -> int:
    lowered = clause.lower()
    return sum(
        len(re.findall(r"\b" + re.escape(w.lower()) + r"\b", lowered)) for w in words
    )


def classify_manner(clause: Optional[str]) -> Manner:
    """Keyword vote between the rude and sycophantic lexicons; ties go to neutral."""
    if not clause:
        return Manner.NEUTRAL
    lex = _manner_data()["lexicons"]
    rude = _lexicon_hits(clause, lex["rude"])
    syco = _lexicon_hits(clause, lex["sycophantic"])
    if rude > syco:
        return Manner.RUDE
    if syco > rude:
        return Manner.SYCOPHANTIC
    return Manner.NEUTRAL
