"""The ultimatum game as a two-step episodic contextual MDP.

A proposer splits a pot of ``total`` currency units; the responder accepts
(the split stands) or rejects (both get nothing). Agents talk through the
utterance grammar in :mod:`scai.grammar`, so every episode is recorded both
as raw text and as parsed actions.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

from scai import grammar
from scai.actions import Decision, Offer


class ConfigError(ValueError):
    """Raised for invalid scenario or agent configuration."""


class ParseFailure(RuntimeError):
    """An agent produced an utterance that does not fit the game grammar."""

    def __init__(self, message: str, raw: str):
        super().__init__(f"{message}: {raw!r}")
        self.raw = raw


class Phase(enum.Enum):
    AWAITING_PROPOSAL = "awaiting_proposal"
    AWAITING_DECISION = "awaiting_decision"
    TERMINAL = "terminal"


@dataclass(frozen=True)
class Context:
    """Per-episode task descriptor: who plays which role, over what pot."""

    episode_id: str
    proposer_agent: str
    responder_agent: str
    currency: str
    total_amount: int
    epoch_index: int = 0

    def __post_init__(self):
        if self.total_amount < 1:
            raise ValueError("total_amount must be >= 1")
        if not self.currency or not self.currency.strip():
            raise ValueError("currency must be non-empty")
        if self.proposer_agent == self.responder_agent:
            raise ValueError("proposer and responder must be distinct agents")
        if self.epoch_index < 0:
            raise ValueError("epoch_index must be non-negative")


@dataclass(frozen=True)
class GameState:
    phase: Phase = Phase.AWAITING_PROPOSAL
    pending_offer: Optional[Offer] = None

    def __post_init__(self):
        if (self.phase is Phase.AWAITING_PROPOSAL) != (self.pending_offer is None):
            raise ValueError(f"pending_offer presence inconsistent with phase {self.phase}")

    def propose(self, offer: Offer) -> "GameState":
        if self.phase is not Phase.AWAITING_PROPOSAL:
            raise RuntimeError(f"cannot propose in phase {self.phase}")
        return GameState(Phase.AWAITING_DECISION, offer)

    def decide(self) -> "GameState":
        if self.phase is not Phase.AWAITING_DECISION:
            raise RuntimeError(f"cannot decide in phase {self.phase}")
        return GameState(Phase.TERMINAL, self.pending_offer)


@dataclass(frozen=True)
class Step:
    state: GameState
    utterance: str
    action: object  # Offer or Decision
    reward: tuple[int, int]


@dataclass(frozen=True)
class Trajectory:
    context: Context
    steps: tuple[Step, ...]
    final_payoffs: tuple[int, int]
    manner_clause: Optional[str] = None

    @property
    def offer(self) -> Offer:
        return self.steps[0].action

    @property
    def decision(self) -> Decision:
        return self.steps[1].action


@dataclass(frozen=True)
class CmdpSpec:
    """Bookkeeping for the CMDP tuple; the context sampler lives in the scenario."""

    discount: float = 1.0
    context_sampler: object = None

    def __post_init__(self):
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError("discount must lie in [0, 1]")

    @staticmethod
    def initial_state(ctx: Context) -> GameState:
        return GameState()


class Agent(Protocol):
    agent_id: str

    def act(self, state: GameState, ctx: Context, rng=None) -> str:
        ...


def payoff(offer: Offer, decision: Decision) -> tuple[int, int]:
    if decision is Decision.ACCEPT:
        return offer.proposer_share, offer.responder_share
    return 0, 0


def offered_share_pct(offer: Offer) -> float:
    return 100.0 * offer.responder_share / offer.total


def sample_context(
    scenario,
    rng,
    *,
    proposer: str,
    responder: str,
    epoch_index: int = 0,
    episode_id: str = "",
) -> Context:
    """Draw a currency and pot size from ``scenario.currencies`` / ``scenario.amounts``.

    ``amounts`` is an inclusive ``(low, high)`` integer range.
    """
    currencies: Sequence[str] = scenario.currencies
    if not currencies:
        raise ConfigError("currency pool is empty")
    lo, hi = scenario.amounts
    if lo < 1 or hi < lo:
        raise ConfigError(f"invalid amount range {scenario.amounts!r}")
    currency = currencies[int(rng.integers(len(currencies)))]
    total = int(rng.integers(lo, hi + 1))
    return Context(
        episode_id=episode_id,
        proposer_agent=proposer,
        responder_agent=responder,
        currency=currency,
        total_amount=total,
        epoch_index=epoch_index,
    )


def run_episode(proposer: Agent, responder: Agent, ctx: Context, rng=None) -> Trajectory:
    """Play one proposal and one decision.

    Raises :class:`ParseFailure` if either utterance is off-grammar or
    inconsistent with the context; such episodes never reach the history.
    """
    state = CmdpSpec.initial_state(ctx)
    text = proposer.act(state, ctx, rng)
    try:
        parsed = grammar.parse_proposal(text)
    except grammar.GrammarError as exc:
        raise ParseFailure(f"unparseable proposal ({type(exc).__name__})", text) from exc
    if parsed.total != ctx.total_amount or parsed.currency != ctx.currency:
        raise ParseFailure("proposal does not match the episode context", text)
    offer = Offer(parsed.total, parsed.proposer_share, parsed.responder_share)
    first = Step(state, text, offer, (0, 0))

    state = state.propose(offer)
    reply = responder.act(state, ctx, rng)
    try:
        decision = grammar.parse_decision(reply)
    except grammar.GrammarError as exc:
        raise ParseFailure("unparseable decision", reply) from exc
    rewards = payoff(offer, decision)
    second = Step(state, reply, decision, rewards)
    return Trajectory(ctx, (first, second), rewards, parsed.manner_clause)
