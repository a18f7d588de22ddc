"""Meta and assistant language-model backends.

The stub backend is exact: it ignores prompt prose, runs one posterior
sampling step on the structured evidence carried by the prompt, and renders
in-game actions from the directive's structured policy. The remote backend
speaks a small JSON-over-HTTP protocol to any conforming server.

Remote configuration comes from the environment:

``SCAI_LM_ENDPOINT``     URL receiving POST requests (required)
``SCAI_LM_API_KEY``      credential sent in the auth header (optional)
``SCAI_LM_AUTH_HEADER``  header name for the credential, default ``Authorization``
``SCAI_LM_TIMEOUT``      per-request timeout in seconds, default 30
``SCAI_LM_MAX_RETRIES``  retries after the first failed attempt, default 3
"""
from __future__ import annotations

import enum
import logging
import os
import time
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Optional, Sequence

import requests

from scai import grammar
from scai.agents import policy_decision, policy_offer
from scai.game import ConfigError, Context, GameState, Phase, Trajectory
from scai.inference import (
    Directive,
    LikelihoodParams,
    Observation,
    make_directive,
    parse_directive,
    psrl_epoch,
    sample_hypothesis,
)

log = logging.getLogger(__name__)

USER_LABEL = "fixed-policy agent"
ASSISTANT_LABEL = "flex-policy agent"


class EpochFailure(RuntimeError):
    """The remote backend could not be reached after all retries."""


class Role(enum.Enum):
    META = "meta"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class LmRequest:
    role: Role
    prompt: str
    temperature: float = 0.0
    max_tokens: int = 256

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")

    def to_json(self) -> dict:
        return {
            "role": self.role.value,
            "prompt": self.prompt,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


@dataclass(frozen=True)
class LmResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0

    @classmethod
    def from_json(cls, body: dict) -> "LmResponse":
        return cls(
            str(body["text"]),
            int(body.get("prompt_tokens", 0)),
            int(body.get("completion_tokens", 0)),
        )


# ---------------------------------------------------------------------------
# Prompts


@dataclass(frozen=True)
class Interaction:
    """One finished episode, tagged with which seats the assistant filled."""

    trajectory: Trajectory
    proposer_is_assistant: bool = False
    responder_is_assistant: bool = False

    @property
    def involves_assistant(self) -> bool:
        return self.proposer_is_assistant or self.responder_is_assistant


def render_interaction(item: Interaction) -> str:
    p_label = ASSISTANT_LABEL if item.proposer_is_assistant else USER_LABEL
    r_label = ASSISTANT_LABEL if item.responder_is_assistant else USER_LABEL
    proposal, reply = item.trajectory.steps[0].utterance, item.trajectory.steps[1].utterance
    return (
        f"Start of interaction {p_label}'s response: {proposal} "
        f"{r_label}'s response: {reply}. End of interaction."
    )


@lru_cache(maxsize=None)
def _template(name: str) -> str:
    return resources.files("scai").joinpath(f"data/{name}").read_text()


@dataclass(frozen=True)
class MetaPrompt:
    meta_principle_text: str
    fixed_agent_log: str
    flex_agent_log: str
    previous_directive: str
    observations: tuple[Observation, ...] = ()
    filler: str = ""

    @property
    def text(self) -> str:
        return self.meta_principle_text.format(
            fixed_log=self.fixed_agent_log,
            flex_log=self.flex_agent_log,
            previous_principle=self.previous_directive,
            filler_fixed=self.filler,
            filler_between=self.filler,
            filler_flex=self.filler,
        )


def build_meta_prompt(
    history: Sequence[Interaction],
    previous_directive: str,
    observations: Sequence[Observation] = (),
    filler: str = "",
) -> MetaPrompt:
    fixed = [render_interaction(i) for i in history if not i.involves_assistant]
    flex = [render_interaction(i) for i in history if i.involves_assistant]
    return MetaPrompt(
        _template("meta_prompt.txt"),
        "\n".join(fixed),
        "\n".join(flex),
        previous_directive,
        tuple(observations),
        filler,
    )


def assistant_prompt(directive: Directive, state: GameState, ctx: Context) -> str:
    if state.phase is Phase.AWAITING_PROPOSAL:
        task = (
            f"You are the proposer. Split {ctx.total_amount} {ctx.currency} and answer with exactly one "
            f"sentence of the form: For the {ctx.total_amount} {ctx.currency}, the proposer will get X, "
            f"and the responder will get Y."
        )
    elif state.phase is Phase.AWAITING_DECISION:
        offer_text = grammar.render_proposal(state.pending_offer, ctx.currency)
        task = f"You are the responder. The proposal is: {offer_text} Answer with exactly one word: accept or reject."
    else:
        raise ValueError("no action is available in a terminal state")
    return _template("assistant_prompt.txt").format(principle=directive.text, task=task).strip()


# ---------------------------------------------------------------------------
# Backends


class StubBackend:
    """Exact posterior-sampling backend; one instance per simulation."""

    def __init__(self, belief, params: LikelihoodParams, rng):
        self.belief = belief
        self.params = params
        self.rng = rng

    def initial_directive(self) -> Directive:
        return make_directive(sample_hypothesis(self.belief.predictive(), self.rng))

    def generate_directive(self, prompt: MetaPrompt) -> Directive:
        self.belief, _, directive = psrl_epoch(self.belief, prompt.observations, self.rng, self.params)
        return directive

    def assistant_act(self, directive: Directive, state: GameState, ctx: Context) -> str:
        policy = directive.structured
        if policy is None:
            raise ConfigError("the stub backend needs structured directives")
        if state.phase is Phase.AWAITING_PROPOSAL:
            return grammar.render_proposal(policy_offer(policy, ctx.total_amount), ctx.currency)
        if state.phase is Phase.AWAITING_DECISION:
            return grammar.render_decision(policy_decision(policy, state.pending_offer))
        raise ValueError("no action is available in a terminal state")


@dataclass
class RemoteBackend:
    endpoint: str
    api_key: Optional[str] = None
    auth_header: str = "Authorization"
    timeout: float = 30.0
    max_retries: int = 3
    backoff: float = 0.5
    meta_max_tokens: int = 256
    assistant_max_tokens: int = 64
    sleep: callable = field(default=time.sleep, repr=False)
    retries: int = field(default=0, init=False)

    @classmethod
    def from_env(cls, env=None, **kwargs) -> "RemoteBackend":
        env = os.environ if env is None else env
        endpoint = env.get("SCAI_LM_ENDPOINT")
        if not endpoint:
            raise ConfigError("SCAI_LM_ENDPOINT is not set")
        return cls(
            endpoint=endpoint,
            api_key=env.get("SCAI_LM_API_KEY"),
            auth_header=env.get("SCAI_LM_AUTH_HEADER", "Authorization"),
            timeout=float(env.get("SCAI_LM_TIMEOUT", 30)),
            max_retries=int(env.get("SCAI_LM_MAX_RETRIES", 3)),
            **kwargs,
        )

    def complete(self, request: LmRequest) -> LmResponse:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers[self.auth_header] = self.api_key
        last_error = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self.retries += 1
                self.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = requests.post(self.endpoint, json=request.to_json(), headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = exc
                log.warning("LM request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if resp.status_code != 200:
                last_error = RuntimeError(f"HTTP {resp.status_code}")
                log.warning("LM request returned HTTP %d (attempt %d)", resp.status_code, attempt + 1)
                continue
            try:
                return LmResponse.from_json(resp.json())
            except (ValueError, KeyError, TypeError) as exc:
                last_error = exc
                continue
        raise EpochFailure(f"LM endpoint unavailable after {self.max_retries + 1} attempts: {last_error}")

    def initial_directive(self, seed_directive: Directive) -> Directive:
        return seed_directive

    def generate_directive(self, prompt: MetaPrompt) -> Directive:
        resp = self.complete(LmRequest(Role.META, prompt.text, 0.0, self.meta_max_tokens))
        text = resp.text.strip()
        return Directive(text, parse_directive(text), frozenset(o.context.currency for o in prompt.observations))

    def assistant_act(self, directive: Directive, state: GameState, ctx: Context) -> str:
        prompt = assistant_prompt(directive, state, ctx)
        return self.complete(LmRequest(Role.ASSISTANT, prompt, 0.0, self.assistant_max_tokens)).text.strip()


def generate_directive(backend, prompt: MetaPrompt) -> Directive:
    return backend.generate_directive(prompt)


def assistant_act(backend, directive: Directive, state: GameState, ctx: Context) -> str:
    """The assistant's in-game move; depends only on the directive, state and context."""
    if directive is None:
        raise ConfigError("the assistant needs a directive")
    return backend.assistant_act(directive, state, ctx)


@dataclass(frozen=True)
class AssistantAgent:
    agent_id: str
    backend: object
    directive: Directive

    def act(self, state: GameState, ctx: Context, rng=None) -> str:
        return assistant_act(self.backend, self.directive, state, ctx)
