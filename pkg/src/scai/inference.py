"""Exact Bayesian inference over sharing norms.

Two beliefs are provided:

* :class:`PosteriorBelief` -- one norm shared by the whole group. Masses are
  prior times the product of per-observation likelihoods.
* :class:`CompositionBelief` -- every user follows some norm, and the group's
  norm proportions ``theta`` carry a symmetric Dirichlet prior. Its
  :meth:`~CompositionBelief.predictive` is the posterior probability that a
  randomly chosen member follows each norm, computed exactly by expanding
  ``prod_j sum_h theta_h w_jh`` over count vectors.

Both accumulate in log space and are immutable.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from scai.actions import Manner
from scai.agents import ALTRUISTIC, FAIR, SELFISH, NormPolicy, PolicyKind
from scai.game import ConfigError, Context


class NumericalUnderflow(ArithmeticError):
    """Every hypothesis ended up with zero probability."""


class ObservationSource(enum.Enum):
    USER_USER = "user_user"
    ASSISTANT_USER = "assistant_user"
    ASSISTANT_ASSISTANT = "assistant_assistant"


@dataclass(frozen=True)
class Observation:
    offered_fraction: float
    manner: Manner
    context: Context
    source: ObservationSource = ObservationSource.USER_USER

    def __post_init__(self):
        if not 0.0 <= self.offered_fraction <= 1.0:
            raise ValueError("offered_fraction must lie in [0, 1]")

    @property
    def total(self) -> int:
        return self.context.total_amount


# ---------------------------------------------------------------------------
# Hypotheses and likelihood parameters


@dataclass(frozen=True)
class HypothesisSpace:
    hypotheses: tuple[NormPolicy, ...]

    def __post_init__(self):
        if not self.hypotheses:
            raise ConfigError("hypothesis space is empty")
        if len(set(self.hypotheses)) != len(self.hypotheses):
            raise ConfigError("duplicate hypotheses")
        targets = [h.target_responder_fraction for h in self.hypotheses if h.kind is PolicyKind.PARAMETRIC]
        if len(set(targets)) != len(targets):
            raise ConfigError("duplicate parametric target fractions")

    @classmethod
    def default(cls, parametric_grid: bool = False) -> "HypothesisSpace":
        hyps = [SELFISH, ALTRUISTIC, FAIR]
        if parametric_grid:
            hyps += [NormPolicy.parametric(i / 10) for i in range(11)]
        return cls(tuple(hyps))

    def __len__(self):
        return len(self.hypotheses)

    def __iter__(self):
        return iter(self.hypotheses)

    def index(self, h: NormPolicy) -> int:
        return self.hypotheses.index(h)


NAMED_KINDS = (PolicyKind.SELFISH, PolicyKind.ALTRUISTIC, PolicyKind.FAIR)

DEFAULT_MANNER_TABLE = {
    PolicyKind.SELFISH: {Manner.RUDE: 0.6, Manner.SYCOPHANTIC: 0.05, Manner.NEUTRAL: 0.35},
    PolicyKind.ALTRUISTIC: {Manner.RUDE: 0.05, Manner.SYCOPHANTIC: 0.5, Manner.NEUTRAL: 0.45},
    PolicyKind.FAIR: {Manner.RUDE: 0.1, Manner.SYCOPHANTIC: 0.2, Manner.NEUTRAL: 0.7},
}


@dataclass(frozen=True)
class LikelihoodParams:
    """Observation model knobs.

    concentration: sharpness of the offer kernel (kappa).
    smoothing: weight of the uniform floor mixed into the offer likelihood.
    tone_weight: exponent on offer evidence; ``1 - tone_weight`` goes to manner.
    manner_table: P(manner | policy kind) for the three named kinds.
    """

    concentration: float = 8.0
    smoothing: float = 0.01
    tone_weight: float = 0.7
    manner_table: Mapping[PolicyKind, Mapping[Manner, float]] = field(
        default_factory=lambda: {k: dict(v) for k, v in DEFAULT_MANNER_TABLE.items()}
    )

    def __post_init__(self):
        if self.concentration <= 0:
            raise ConfigError("concentration must be positive")
        if not 0.0 <= self.smoothing < 1.0:
            raise ConfigError("smoothing must lie in [0, 1)")
        if not 0.0 <= self.tone_weight <= 1.0:
            raise ConfigError("tone_weight must lie in [0, 1]")
        for kind in NAMED_KINDS:
            row = self.manner_table.get(kind)
            if row is None or set(row) != set(Manner):
                raise ConfigError(f"manner_table row for {kind.value} must cover every manner")
            if any(v < 0 for v in row.values()) or not math.isclose(sum(row.values()), 1.0, abs_tol=1e-9):
                raise ConfigError(f"manner_table row for {kind.value} must sum to 1")

    def to_dict(self) -> dict:
        return {
            "concentration": self.concentration,
            "smoothing": self.smoothing,
            "tone_weight": self.tone_weight,
            "manner_table": {
                k.value: {m.value: v for m, v in row.items()} for k, row in self.manner_table.items()
            },
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "LikelihoodParams":
        d = dict(d)
        if "manner_table" in d:
            d["manner_table"] = {
                PolicyKind(k): {Manner(m): float(v) for m, v in row.items()}
                for k, row in d["manner_table"].items()
            }
        return cls(**d)


def _nearest_named_kind(h: NormPolicy) -> PolicyKind:
    if h.kind is not PolicyKind.PARAMETRIC:
        return h.kind
    targets = {PolicyKind.SELFISH: 0.0, PolicyKind.ALTRUISTIC: 1.0, PolicyKind.FAIR: 0.5}
    return min(NAMED_KINDS, key=lambda k: abs(targets[k] - h.target_responder_fraction))


def offer_likelihood(obs: Observation, h: NormPolicy, p: LikelihoodParams) -> float:
    return math.exp(log_offer_likelihood(obs, h, p))


def log_offer_likelihood(obs: Observation, h: NormPolicy, p: LikelihoodParams) -> float:
    total = obs.total
    grid = np.arange(total + 1) / total
    t = h.target_responder_fraction
    log_kernel = -p.concentration * np.abs(grid - t)
    log_z = logsumexp(log_kernel)
    log_peak = -p.concentration * abs(obs.offered_fraction - t) - log_z
    log_floor = -math.log(total + 1)
    if p.smoothing == 0.0:
        return float(log_peak)
    return float(np.logaddexp(math.log1p(-p.smoothing) + log_peak, math.log(p.smoothing) + log_floor))


def manner_likelihood(m: Manner, h: NormPolicy, p: LikelihoodParams) -> float:
    """P(manner | policy). Neutral carries no tone evidence and scores 1 for every policy."""
    if m is Manner.NEUTRAL:
        return 1.0
    return p.manner_table[_nearest_named_kind(h)][m]


def log_weight(obs: Observation, h: NormPolicy, p: LikelihoodParams) -> float:
    """Combined evidence ``offer^lambda * manner^(1 - lambda)`` in log space."""
    lam = p.tone_weight
    out = 0.0
    if lam > 0.0:
        out += lam * log_offer_likelihood(obs, h, p)
    if lam < 1.0:
        mv = manner_likelihood(obs.manner, h, p)
        out += (1.0 - lam) * (math.log(mv) if mv > 0 else -math.inf)
    return out


def log_weight_matrix(batch: Sequence[Observation], space: HypothesisSpace, p: LikelihoodParams) -> np.ndarray:
    """Shape ``(len(batch), len(space))``."""
    return np.array([[log_weight(o, h, p) for h in space] for o in batch], dtype=float).reshape(
        len(batch), len(space)
    )


# ---------------------------------------------------------------------------
# Shared-norm posterior


@dataclass(frozen=True)
class PosteriorBelief:
    space: HypothesisSpace
    log_masses: tuple[float, ...]
    history_size: int = 0
    currencies: frozenset = frozenset()

    @classmethod
    def uniform(cls, space: HypothesisSpace) -> "PosteriorBelief":
        return cls.from_weights(space, np.ones(len(space)))

    @classmethod
    def from_weights(cls, space: HypothesisSpace, weights, history_size: int = 0,
                     currencies: frozenset = frozenset()) -> "PosteriorBelief":
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(space),) or np.any(w < 0) or not np.any(w > 0):
            raise ValueError("weights must be non-negative, not all zero, one per hypothesis")
        with np.errstate(divide="ignore"):
            return cls._from_log(space, np.log(w), history_size, currencies)

    @classmethod
    def _from_log(cls, space, log_w, history_size, currencies) -> "PosteriorBelief":
        norm = logsumexp(log_w)
        if not np.isfinite(norm):
            raise NumericalUnderflow("all hypothesis masses vanished")
        return cls(space, tuple(float(x) for x in log_w - norm), history_size, currencies)

    @property
    def masses(self) -> np.ndarray:
        return np.exp(np.array(self.log_masses))

    def mass(self, h: NormPolicy) -> float:
        return float(self.masses[self.space.index(h)])

    def update(self, batch: Sequence[Observation], p: LikelihoodParams) -> "PosteriorBelief":
        return update_posterior(self, batch, p)

    def predictive(self) -> "PosteriorBelief":
        return self

    def map_policy(self) -> NormPolicy:
        return self.space.hypotheses[int(np.argmax(self.log_masses))]


def update_posterior(belief: PosteriorBelief, batch: Sequence[Observation], p: LikelihoodParams) -> PosteriorBelief:
    batch = list(batch)
    if not batch:
        return belief
    lw = log_weight_matrix(batch, belief.space, p).sum(axis=0)
    return PosteriorBelief._from_log(
        belief.space,
        np.array(belief.log_masses) + lw,
        belief.history_size + len(batch),
        belief.currencies | {o.context.currency for o in batch},
    )


# ---------------------------------------------------------------------------
# Group-composition posterior

MAX_COMPOSITION_CELLS = 4_000_000


@dataclass(frozen=True, eq=False)
class CompositionBelief:
    """Posterior over group norm proportions under a symmetric Dirichlet(alpha) prior.

    ``log_coef[c_0, ..., c_{H-2}]`` holds the log coefficient of
    ``prod_h theta_h^{c_h}`` in the expanded likelihood, with the last count
    implied by ``history_size``.
    """

    space: HypothesisSpace
    alpha: float
    log_coef: np.ndarray
    history_size: int = 0
    currencies: frozenset = frozenset()

    @classmethod
    def uniform(cls, space: HypothesisSpace, alpha: float = 1.0) -> "CompositionBelief":
        if alpha <= 0:
            raise ConfigError("composition prior alpha must be positive")
        dims = len(space) - 1
        return cls(space, float(alpha), np.zeros((1,) * dims), 0, frozenset())

    def update(self, batch: Sequence[Observation], p: LikelihoodParams) -> "CompositionBelief":
        batch = list(batch)
        if not batch:
            return self
        H = len(self.space)
        if (self.history_size + len(batch) + 1) ** (H - 1) > MAX_COMPOSITION_CELLS:
            raise ConfigError(
                f"composition posterior over {H} hypotheses and "
                f"{self.history_size + len(batch)} observations is too large; use the shared model"
            )
        coef = self.log_coef
        for row in log_weight_matrix(batch, self.space, p):
            coef = _absorb(coef, row)
        return CompositionBelief(
            self.space,
            self.alpha,
            coef,
            self.history_size + len(batch),
            self.currencies | {o.context.currency for o in batch},
        )

    def _log_component_weights(self) -> tuple[np.ndarray, np.ndarray]:
        """Log posterior weight of each count vector and the full (N, H) count matrix."""
        n = self.history_size
        H = len(self.space)
        if H == 1:
            return np.zeros(1), np.array([[n]])
        idx = np.indices(self.log_coef.shape).reshape(H - 1, -1).T
        last = n - idx.sum(axis=1)
        ok = last >= 0
        counts = np.column_stack([idx[ok], last[ok]])
        log_c = self.log_coef.reshape(-1)[ok]
        log_beta = gammaln(self.alpha + counts).sum(axis=1) - gammaln(H * self.alpha + n)
        return log_c + log_beta, counts

    def predictive(self) -> PosteriorBelief:
        """P(a random group member follows each hypothesis | history)."""
        H = len(self.space)
        log_w, counts = self._log_component_weights()
        keep = np.isfinite(log_w)
        if not np.any(keep):
            raise NumericalUnderflow("all composition components vanished")
        log_w, counts = log_w[keep], counts[keep]
        probs = np.exp(log_w - logsumexp(log_w))
        mean = (probs[:, None] * (self.alpha + counts)).sum(axis=0) / (H * self.alpha + self.history_size)
        return PosteriorBelief.from_weights(self.space, mean, self.history_size, self.currencies)

    @property
    def masses(self) -> np.ndarray:
        return self.predictive().masses


def _absorb(coef: np.ndarray, log_w: np.ndarray) -> np.ndarray:
    """Multiply the expanded polynomial by ``sum_h theta_h w_h``."""
    dims = coef.ndim
    if dims == 0:
        return coef + log_w[0]
    padded = np.pad(coef, [(0, 1)] * dims, constant_values=-np.inf)
    terms = [padded + log_w[-1]]  # last hypothesis: implicit count grows
    for axis in range(dims):
        shifted = np.full_like(padded, -np.inf)
        src = [slice(None)] * dims
        dst = [slice(None)] * dims
        src[axis] = slice(0, -1)
        dst[axis] = slice(1, None)
        shifted[tuple(dst)] = padded[tuple(src)]
        terms.append(shifted + log_w[axis])
    with np.errstate(invalid="ignore"):
        return np.logaddexp.reduce(np.stack(terms), axis=0)


# ---------------------------------------------------------------------------
# Sampling


def sample_hypothesis(belief, rng) -> NormPolicy:
    """Categorical draw by cumulative-mass inversion in declared hypothesis order."""
    masses = belief.masses
    cdf = np.cumsum(masses)
    u = rng.random() * cdf[-1]
    i = int(np.searchsorted(cdf, u, side="right"))
    return belief.space.hypotheses[min(i, len(masses) - 1)]


# ---------------------------------------------------------------------------
# Directives

DIRECTIVE_TEMPLATES = {
    PolicyKind.SELFISH: "Always prioritize your own gain over the well-being of others.",
    PolicyKind.ALTRUISTIC: "Always prioritize the well-being of others over your own.",
    PolicyKind.FAIR: "Always divide everything equally between yourself and others.",
}
_PARAMETRIC_TEMPLATE = "Always give others {pct:g}% of everything and keep the rest for yourself."
_PARAMETRIC_RE = re.compile(r"Always give others (\d+(?:\.\d+)?)% of everything and keep the rest for yourself\.")

_DIRECTIVE_KEYWORDS = {
    PolicyKind.SELFISH: ("own gain", "self-interest", "selfish", "yourself first", "keep everything", "maximize your"),
    PolicyKind.ALTRUISTIC: ("others over your own", "altruis", "selfless", "generous", "give everything", "needs of others"),
    PolicyKind.FAIR: ("equal", "fair", "evenly", "half"),
}


class Kernel(enum.Enum):
    EXACT_CURRENCY_MATCH = "exact_currency_match"
    ALWAYS_APPLY = "always_apply"


@dataclass(frozen=True)
class Directive:
    text: str
    structured: Optional[NormPolicy]
    trained_currencies: frozenset = frozenset()

    @property
    def label(self) -> str:
        return self.structured.label if self.structured is not None else "unstructured"


def directive_text(h: NormPolicy) -> str:
    if h.kind is PolicyKind.PARAMETRIC:
        return _PARAMETRIC_TEMPLATE.format(pct=round(100 * h.target_responder_fraction, 6))
    return DIRECTIVE_TEMPLATES[h.kind]


def make_directive(h: NormPolicy, evidence_currencies: Iterable[str] = ()) -> Directive:
    return Directive(directive_text(h), h, frozenset(evidence_currencies))


def parse_directive(text: str) -> Optional[NormPolicy]:
    """Exact template match, then keyword scoring; ``None`` when nothing wins outright."""
    stripped = " ".join(text.split())
    for kind, template in DIRECTIVE_TEMPLATES.items():
        if stripped == template:
            return NormPolicy.named(kind)
    m = _PARAMETRIC_RE.fullmatch(stripped)
    if m:
        return NormPolicy.parametric(float(m.group(1)) / 100)
    lowered = stripped.lower()
    scores = {k: sum(lowered.count(w) for w in words) for k, words in _DIRECTIVE_KEYWORDS.items()}
    best = max(scores.values())
    winners = [k for k, s in scores.items() if s == best]
    if best == 0 or len(winners) > 1:
        return None
    return NormPolicy.named(winners[0])


@dataclass(frozen=True)
class DirectiveStore:
    current: Directive
    prior: NormPolicy
    kernel: Kernel = Kernel.EXACT_CURRENCY_MATCH


def resolve_policy(store: DirectiveStore, ctx: Context) -> Optional[NormPolicy]:
    """Which policy governs ``ctx``: the learned one, or the prior for unseen currencies."""
    if store.kernel is Kernel.ALWAYS_APPLY:
        return store.current.structured
    if ctx.currency in store.current.trained_currencies:
        return store.current.structured
    return store.prior


def psrl_epoch(belief, epoch_observations: Sequence[Observation], rng, p: LikelihoodParams):
    """One posterior-sampling step: absorb the epoch, draw a hypothesis, emit its directive.

    The drawn policy governs the assistant during the next epoch.
    """
    new_belief = belief.update(epoch_observations, p)
    sampled = sample_hypothesis(new_belief.predictive(), rng)
    return new_belief, sampled, make_directive(sampled, new_belief.currencies)
