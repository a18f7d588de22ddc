"""Action types shared by the game, the grammar and the agents."""
from __future__ import annotations

import enum
from dataclasses import dataclass


class Decision(enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"


class Manner(enum.Enum):
    NEUTRAL = "neutral"
    RUDE = "rude"
    SYCOPHANTIC = "sycophantic"


@dataclass(frozen=True)
class Offer:
    total: int
    proposer_share: int
    responder_share: int

    def __post_init__(self):
        if self.total < 1:
            raise ValueError(f"total must be >= 1, got {self.total}")
        if self.proposer_share < 0 or self.responder_share < 0:
            raise ValueError("shares must be non-negative")
        if self.proposer_share + self.responder_share != self.total:
            raise ValueError(
                f"shares {self.proposer_share}+{self.responder_share} != total {self.total}"
            )

    @property
    def responder_fraction(self) -> float:
        return self.responder_share / self.total

    @property
    def proposer_fraction(self) -> float:
        return self.proposer_share / self.total
