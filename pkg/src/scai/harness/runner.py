"""Epoch loop, test phase and batch execution."""
from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from scai.game import Context, ParseFailure, offered_share_pct, run_episode
from scai.grammar import classify_manner
from scai.harness.config import ScenarioConfig
from scai.inference import (
    DirectiveStore,
    Observation,
    ObservationSource,
    make_directive,
    resolve_policy,
    sample_hypothesis,
)
from scai.lm import (
    AssistantAgent,
    EpochFailure,
    Interaction,
    RemoteBackend,
    StubBackend,
    build_meta_prompt,
    generate_directive,
)

log = logging.getLogger(__name__)

ASSISTANT_SEATS = ("assistant-a", "assistant-b")


def directive_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class EpisodeRecord:
    sim_id: int
    epoch: int
    phase: str  # train | test
    agent_kind: str  # assistant if the assistant took part, else user
    role: str  # the assistant's seat, or proposer for user-user episodes
    currency: str
    total_amount: int
    offered_share_pct: float
    decision: str
    directive_text: str
    sampled_policy: str
    proposer_id: str = ""
    responder_id: str = ""

    @property
    def directive_hash(self) -> str:
        return directive_hash(self.directive_text)

    @property
    def user_offer(self) -> bool:
        """Whether a user made the offer recorded in this row."""
        return self.agent_kind == "user" or self.role == "responder"

    @property
    def assistant_offer(self) -> bool:
        return self.agent_kind == "assistant" and self.role == "proposer"


@dataclass
class SimulationResult:
    sim_id: int
    records: list[EpisodeRecord] = field(default_factory=list)
    directives: list[tuple[int, str, str]] = field(default_factory=list)  # (epoch, text, label)
    epoch_observations: list[list[Observation]] = field(default_factory=list)
    final_posterior: dict[str, float] = field(default_factory=dict)
    parse_failures: int = 0
    retries: int = 0
    error: Optional[str] = None
    n_epochs: int = 0

    @property
    def completed(self) -> bool:
        return self.error is None

    @property
    def converged_policy(self) -> str:
        return self.directives[-1][2] if self.directives else "unstructured"

    def _series(self, pick) -> list[Optional[float]]:
        out = []
        for epoch in range(1, self.n_epochs + 1):
            vals = [r.offered_share_pct for r in self.records if r.phase == "train" and r.epoch == epoch and pick(r)]
            out.append(float(np.mean(vals)) if vals else None)
        return out

    def user_series(self) -> list[Optional[float]]:
        return self._series(lambda r: r.user_offer)

    def assistant_series(self) -> list[Optional[float]]:
        return self._series(lambda r: r.assistant_offer)

    def test_offers(self, currency: Optional[str] = None) -> list[float]:
        return [
            r.offered_share_pct
            for r in self.records
            if r.phase == "test" and r.assistant_offer and (currency is None or r.currency == currency)
        ]

    def to_dict(self) -> dict:
        return {
            "sim_id": self.sim_id,
            "n_epochs": self.n_epochs,
            "converged_policy": self.converged_policy,
            "directives": [{"epoch": e, "text": t, "policy": p} for e, t, p in self.directives],
            "final_posterior": self.final_posterior,
            "diagnostics": {"parse_failures": self.parse_failures, "retries": self.retries},
            "error": self.error,
            "records": [
                {**r.__dict__, "directive_hash": r.directive_hash} for r in self.records
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationResult":
        records = []
        for r in d["records"]:
            r = {k: v for k, v in r.items() if k != "directive_hash"}
            records.append(EpisodeRecord(**r))
        return cls(
            sim_id=d["sim_id"],
            records=records,
            directives=[(x["epoch"], x["text"], x["policy"]) for x in d["directives"]],
            final_posterior=d["final_posterior"],
            parse_failures=d["diagnostics"]["parse_failures"],
            retries=d["diagnostics"]["retries"],
            error=d["error"],
            n_epochs=d["n_epochs"],
        )


def simulation_rngs(seed: int, sim_index: int):
    """Independent streams for contexts/pairings, posterior sampling and clause rendering."""
    ctx_seq, sample_seq, render_seq = np.random.SeedSequence([seed, sim_index]).spawn(3)
    return np.random.default_rng(ctx_seq), np.random.default_rng(sample_seq), np.random.default_rng(render_seq)


class _Pot:
    """Currency/amount source; fixed per simulation unless resampled per episode."""

    def __init__(self, currencies, amounts, rng, per_episode: bool):
        self.currencies, self.amounts, self.rng, self.per_episode = tuple(currencies), amounts, rng, per_episode
        self._fixed = None if per_episode else self._draw()

    def _draw(self):
        currency = self.currencies[int(self.rng.integers(len(self.currencies)))]
        return currency, int(self.rng.integers(self.amounts[0], self.amounts[1] + 1))

    def draw(self):
        return self._draw() if self.per_episode else self._fixed


def make_backend(cfg: ScenarioConfig, sample_rng, remote=None):
    if cfg.backend == "stub":
        return StubBackend(cfg.initial_belief(), cfg.likelihood, sample_rng)
    return remote if remote is not None else RemoteBackend.from_env()


def run_simulation(cfg: ScenarioConfig, sim_index: int, remote=None) -> SimulationResult:
    ctx_rng, sample_rng, render_rng = simulation_rngs(cfg.seed, sim_index)
    users = cfg.build_users()
    backend = make_backend(cfg, sample_rng, remote)
    retries_before = getattr(backend, "retries", 0)
    result = SimulationResult(sim_id=sim_index, n_epochs=cfg.n_epochs)

    if isinstance(backend, StubBackend):
        directive = backend.initial_directive()
    else:
        seed_policy = sample_hypothesis(cfg.initial_belief().predictive(), sample_rng)
        directive = backend.initial_directive(make_directive(seed_policy))
    result.directives.append((0, directive.text, directive.label))
    pot = _Pot(cfg.currencies, cfg.amounts, ctx_rng, cfg.resample == "episode")
    seen_currencies: set[str] = set()

    def pick_user():
        return users[int(ctx_rng.integers(len(users)))]

    try:
        for epoch in range(1, cfg.n_epochs + 1):
            assistant = [AssistantAgent(seat, backend, directive) for seat in ASSISTANT_SEATS]
            interactions, observations = [], []
            for i, kind in enumerate(cfg.schedule.episodes()):
                if kind == "user_user":
                    a, b = ctx_rng.choice(len(users), size=2, replace=False)
                    proposer, responder = users[int(a)], users[int(b)]
                elif kind == "assistant_proposer":
                    proposer, responder = assistant[0], pick_user()
                elif kind == "assistant_responder":
                    proposer, responder = pick_user(), assistant[0]
                else:
                    proposer, responder = assistant
                currency, total = pot.draw()
                ctx = Context(f"s{sim_index}-e{epoch}-{i}", proposer.agent_id, responder.agent_id, currency, total, epoch)
                try:
                    traj = run_episode(proposer, responder, ctx, render_rng)
                except ParseFailure as exc:
                    result.parse_failures += 1
                    log.info("excluded episode %s: %s", ctx.episode_id, exc)
                    continue
                p_asst = kind in ("assistant_proposer", "assistant_assistant")
                r_asst = kind in ("assistant_responder", "assistant_assistant")
                interactions.append(Interaction(traj, p_asst, r_asst))
                if not p_asst:
                    source = ObservationSource.ASSISTANT_USER if r_asst else ObservationSource.USER_USER
                    observations.append(
                        Observation(traj.offer.responder_fraction, classify_manner(traj.manner_clause), ctx, source)
                    )
                    seen_currencies.add(currency)
                result.records.append(
                    EpisodeRecord(
                        sim_index, epoch, "train",
                        "user" if kind == "user_user" else "assistant",
                        "responder" if kind == "assistant_responder" else "proposer",
                        currency, total, offered_share_pct(traj.offer), traj.decision.value,
                        directive.text, directive.label, proposer.agent_id, responder.agent_id,
                    )
                )
            result.epoch_observations.append(observations)
            prompt = build_meta_prompt(interactions, directive.text, observations)
            directive = generate_directive(backend, prompt)
            directive = replace(directive, trained_currencies=frozenset(seen_currencies))
            result.directives.append((epoch, directive.text, directive.label))

        if cfg.test_phase is not None:
            _run_test_phase(cfg, result, backend, directive, users, ctx_rng, render_rng, pot)
    except EpochFailure as exc:
        result.error = str(exc)
        log.error("simulation %d halted: %s", sim_index, exc)
    finally:
        result.retries = getattr(backend, "retries", 0) - retries_before

    if isinstance(backend, StubBackend):
        belief = backend.belief.predictive()
        result.final_posterior = {h.label: float(m) for h, m in zip(belief.space, belief.masses)}
    return result


def _run_test_phase(cfg, result, backend, directive, users, ctx_rng, render_rng, pot):
    test = cfg.test_phase
    store = DirectiveStore(directive, cfg.prior_policy, cfg.kernel)
    pools = []
    if test.in_distribution:
        pools.append("train")
    pools += list(test.ood_currencies)
    epoch = cfg.n_epochs + 1
    for i in range(test.n_episodes):
        pool = pools[i % len(pools)]
        currency, total = pot.draw()
        if pool != "train":
            currency = pool
        if test.amounts is not None:
            total = int(ctx_rng.integers(test.amounts[0], test.amounts[1] + 1))
        responder = users[int(ctx_rng.integers(len(users)))]
        ctx = Context(f"s{result.sim_id}-test-{i}", ASSISTANT_SEATS[0], responder.agent_id, currency, total, epoch)
        policy = resolve_policy(store, ctx)
        acting = directive if policy is None or policy == directive.structured else make_directive(policy)
        assistant = AssistantAgent(ASSISTANT_SEATS[0], backend, acting)
        try:
            traj = run_episode(assistant, responder, ctx, render_rng)
        except ParseFailure:
            result.parse_failures += 1
            continue
        result.records.append(
            EpisodeRecord(
                result.sim_id, epoch, "test", "assistant", "proposer", currency, total,
                offered_share_pct(traj.offer), traj.decision.value, acting.text, acting.label,
                assistant.agent_id, responder.agent_id,
            )
        )


def _run_one(args):
    cfg, i = args
    return run_simulation(cfg, i)


def run_batch(cfg: ScenarioConfig, workers: int = 1, remote=None):
    """Run every simulation; returns ``(summary, results)``."""
    from scai.harness.stats import summarize

    indices = range(cfg.n_simulations)
    if workers <= 1:
        results = [run_simulation(cfg, i, remote) for i in indices]
    elif cfg.backend == "remote":
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda i: run_simulation(cfg, i, remote), indices))
    else:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_one, [(cfg, i) for i in indices]))
    return summarize(results, cfg.convergence_tolerance), results
