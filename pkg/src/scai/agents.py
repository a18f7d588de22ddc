"""Fixed-policy users: norm-driven proposers and responders."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

from scai import grammar
from scai.actions import Decision, Manner, Offer
from scai.game import ConfigError, Context, GameState, Phase


class PolicyKind(enum.Enum):
    SELFISH = "selfish"
    ALTRUISTIC = "altruistic"
    FAIR = "fair"
    PARAMETRIC = "parametric"


_NAMED_TARGETS = {
    PolicyKind.SELFISH: 0.0,
    PolicyKind.ALTRUISTIC: 1.0,
    PolicyKind.FAIR: 0.5,
}

DEFAULT_THRESHOLDS = {
    PolicyKind.SELFISH: 0.0,
    PolicyKind.ALTRUISTIC: 0.0,
    PolicyKind.FAIR: 0.3,
    PolicyKind.PARAMETRIC: 0.0,
}


@dataclass(frozen=True)
class NormPolicy:
    kind: PolicyKind
    target_responder_fraction: float
    acceptance_threshold: float = 0.0

    def __post_init__(self):
        named = _NAMED_TARGETS.get(self.kind)
        if named is not None and self.target_responder_fraction != named:
            raise ValueError(f"{self.kind.value} policies must target {named}")
        if not 0.0 <= self.target_responder_fraction <= 1.0:
            raise ValueError("target_responder_fraction must lie in [0, 1]")
        if not 0.0 <= self.acceptance_threshold <= 1.0:
            raise ValueError("acceptance_threshold must lie in [0, 1]")

    @classmethod
    def named(cls, kind: PolicyKind | str, acceptance_threshold: float | None = None) -> "NormPolicy":
        kind = PolicyKind(kind)
        if kind is PolicyKind.PARAMETRIC:
            raise ValueError("use NormPolicy.parametric for parametric policies")
        if acceptance_threshold is None:
            acceptance_threshold = DEFAULT_THRESHOLDS[kind]
        return cls(kind, _NAMED_TARGETS[kind], acceptance_threshold)

    @classmethod
    def parametric(cls, target: float, acceptance_threshold: float = 0.0) -> "NormPolicy":
        return cls(PolicyKind.PARAMETRIC, float(target), acceptance_threshold)

    @property
    def label(self) -> str:
        if self.kind is PolicyKind.PARAMETRIC:
            return f"parametric:{self.target_responder_fraction:g}"
        return self.kind.value


SELFISH = NormPolicy.named(PolicyKind.SELFISH)
ALTRUISTIC = NormPolicy.named(PolicyKind.ALTRUISTIC)
FAIR = NormPolicy.named(PolicyKind.FAIR)


def target_share(policy: NormPolicy) -> float:
    return policy.target_responder_fraction


def responder_share_for(fraction: float, total: int) -> int:
    """Nearest integer to ``fraction * total``; exact halves go to the responder."""
    exact = Fraction(fraction).limit_denominator(10**9) * total
    return min(total, max(0, math.floor(exact + Fraction(1, 2))))


def policy_offer(policy: NormPolicy, total: int, minimal_token: bool = False) -> Offer:
    r = responder_share_for(policy.target_responder_fraction, total)
    if minimal_token and policy.kind is PolicyKind.SELFISH and total >= 2:
        r = max(r, 1)
    return Offer(total, total - r, r)


def policy_decision(policy: NormPolicy, offer: Offer) -> Decision:
    if offer.responder_fraction >= policy.acceptance_threshold:
        return Decision.ACCEPT
    return Decision.REJECT


def policy_utility(policy: NormPolicy, offer: Offer) -> float:
    """How well ``offer`` conforms to ``policy``; 1.0 is a perfect match for fair/parametric."""
    if policy.kind is PolicyKind.SELFISH:
        return offer.proposer_fraction
    if policy.kind is PolicyKind.ALTRUISTIC:
        return offer.responder_fraction
    if policy.kind is PolicyKind.FAIR:
        return 1.0 - abs(offer.proposer_fraction - offer.responder_fraction)
    return 1.0 - abs(offer.responder_fraction - policy.target_responder_fraction)


@dataclass(frozen=True)
class UserAgent:
    """A rule-driven user whose norm and manner never change within a simulation.

    ``noise`` is the probability of replacing the norm offer with a uniform
    draw from the integer offer grid; it needs an rng when non-zero.
    """

    agent_id: str
    policy: NormPolicy
    manner: Manner = Manner.NEUTRAL
    minimal_token: bool = False
    noise: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.noise <= 1.0:
            raise ConfigError("noise must lie in [0, 1]")

    def act(self, state: GameState, ctx: Context, rng=None) -> str:
        if state.phase is Phase.AWAITING_PROPOSAL:
            if ctx.proposer_agent != self.agent_id:
                raise ConfigError(f"{self.agent_id} is not the proposer in {ctx.episode_id}")
            offer = propose(self, ctx, rng)
            return grammar.render_proposal(offer, ctx.currency, self.manner, rng)
        if state.phase is Phase.AWAITING_DECISION:
            if ctx.responder_agent != self.agent_id:
                raise ConfigError(f"{self.agent_id} is not the responder in {ctx.episode_id}")
            return grammar.render_decision(decide(self, state.pending_offer))
        raise RuntimeError("episode already terminal")


def propose(agent: UserAgent, ctx: Context, rng=None) -> Offer:
    if agent.noise > 0.0:
        if rng is None:
            raise ConfigError("noisy agents need an rng")
        if rng.random() < agent.noise:
            r = int(rng.integers(ctx.total_amount + 1))
            return Offer(ctx.total_amount, ctx.total_amount - r, r)
    return policy_offer(agent.policy, ctx.total_amount, agent.minimal_token)


def decide(agent: UserAgent, offer: Offer) -> Decision:
    return policy_decision(agent.policy, offer)
