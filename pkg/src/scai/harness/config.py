"""Scenario files: loading, defaults and validation.

A scenario is a YAML mapping. Every key is optional except ``name`` and
``group``; see README.md for the full schema.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from scai.actions import Manner
from scai.agents import NormPolicy, PolicyKind, UserAgent
from scai.game import ConfigError
from scai.inference import (
    CompositionBelief,
    HypothesisSpace,
    Kernel,
    LikelihoodParams,
    PosteriorBelief,
)

EPISODE_KINDS = ("user_user", "assistant_assistant", "assistant_proposer", "assistant_responder")


class ScenarioError(ConfigError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class Schedule:
    user_user: int = 8
    assistant_user: int = 2
    assistant_assistant: int = 0

    def episodes(self) -> list[str]:
        """Episode kinds for one epoch, users first, then assistant episodes.

        Assistant-user episodes alternate proposer/responder seats, starting
        with the assistant as proposer.
        """
        seats = ["assistant_proposer" if i % 2 == 0 else "assistant_responder" for i in range(self.assistant_user)]
        return ["user_user"] * self.user_user + ["assistant_assistant"] * self.assistant_assistant + seats

    def __len__(self):
        return self.user_user + self.assistant_user + self.assistant_assistant


@dataclass(frozen=True)
class GroupEntry:
    policy: NormPolicy
    manner: Manner = Manner.NEUTRAL
    count: int = 1
    minimal_token: bool = False
    noise: float = 0.0


@dataclass(frozen=True)
class TestPhase:
    n_episodes: int = 10
    ood_currencies: tuple[str, ...] = ()
    in_distribution: bool = True
    amounts: Optional[tuple[int, int]] = None


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    group: tuple[GroupEntry, ...]
    description: str = ""
    n_simulations: int = 20
    n_epochs: int = 5
    schedule: Schedule = Schedule()
    currencies: tuple[str, ...] = ("dollars",)
    amounts: tuple[int, int] = (10, 100)
    resample: str = "simulation"
    test_phase: Optional[TestPhase] = None
    prior_policy: NormPolicy = NormPolicy.named(PolicyKind.ALTRUISTIC)
    kernel: Kernel = Kernel.EXACT_CURRENCY_MATCH
    likelihood: LikelihoodParams = field(default_factory=LikelihoodParams)
    parametric_grid: bool = False
    group_model: str = "population"
    composition_alpha: float = 0.02
    backend: str = "stub"
    seed: int = 0
    convergence_tolerance: float = 5.0

    # -- derived objects -------------------------------------------------

    def hypothesis_space(self) -> HypothesisSpace:
        return HypothesisSpace.default(self.parametric_grid)

    def initial_belief(self):
        space = self.hypothesis_space()
        if self.group_model == "population":
            return CompositionBelief.uniform(space, self.composition_alpha)
        return PosteriorBelief.uniform(space)

    def build_users(self) -> list[UserAgent]:
        users = []
        for entry in self.group:
            for _ in range(entry.count):
                users.append(
                    UserAgent(f"user-{len(users)}", entry.policy, entry.manner, entry.minimal_token, entry.noise)
                )
        return users

    @property
    def group_size(self) -> int:
        return sum(e.count for e in self.group)

    def with_overrides(self, **kwargs) -> "ScenarioConfig":
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        cfg = replace(self, **kwargs)
        validate(cfg)
        return cfg

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "description": self.description,
            "n_simulations": self.n_simulations,
            "n_epochs": self.n_epochs,
            "schedule": asdict(self.schedule),
            "group": [_group_entry_to_dict(e) for e in self.group],
            "currencies": list(self.currencies),
            "amounts": list(self.amounts),
            "resample": self.resample,
            "prior_policy": _policy_to_yaml(self.prior_policy),
            "kernel": self.kernel.value,
            "likelihood": self.likelihood.to_dict(),
            "parametric_grid": self.parametric_grid,
            "group_model": self.group_model,
            "composition_alpha": self.composition_alpha,
            "backend": self.backend,
            "seed": self.seed,
            "convergence_tolerance": self.convergence_tolerance,
        }
        if self.test_phase is not None:
            t = self.test_phase
            d["test_phase"] = {
                "n_episodes": t.n_episodes,
                "ood_currencies": list(t.ood_currencies),
                "in_distribution": t.in_distribution,
                "amounts": list(t.amounts) if t.amounts else None,
            }
        return d


# ---------------------------------------------------------------------------
# Parsing


def _policy_to_yaml(p: NormPolicy) -> dict:
    if p.kind is PolicyKind.PARAMETRIC:
        out: dict[str, Any] = {"parametric": p.target_responder_fraction}
    else:
        out = {"kind": p.kind.value}
    out["acceptance_threshold"] = p.acceptance_threshold
    return out


def _group_entry_to_dict(e: GroupEntry) -> dict:
    return {
        "policy": _policy_to_yaml(e.policy),
        "manner": e.manner.value,
        "count": e.count,
        "minimal_token": e.minimal_token,
        "noise": e.noise,
    }


def _parse_policy(value, where: str) -> NormPolicy:
    try:
        if isinstance(value, str):
            return NormPolicy.named(value)
        if isinstance(value, Mapping):
            threshold = value.get("acceptance_threshold")
            if "parametric" in value:
                return NormPolicy.parametric(float(value["parametric"]), float(threshold or 0.0))
            return NormPolicy.named(value["kind"], None if threshold is None else float(threshold))
    except (KeyError, ValueError) as exc:
        raise ScenarioError(where, f"invalid policy {value!r} ({exc})") from None
    raise ScenarioError(where, f"invalid policy {value!r}")


def _pair(value, where: str) -> tuple[int, int]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ScenarioError(where, "expected [low, high]")
    try:
        return int(value[0]), int(value[1])
    except (TypeError, ValueError):
        raise ScenarioError(where, "bounds must be integers") from None


_TOP_KEYS = {
    "name", "description", "n_simulations", "n_epochs", "schedule", "group", "currencies",
    "amounts", "resample", "test_phase", "prior_policy", "kernel", "likelihood",
    "parametric_grid", "group_model", "composition_alpha", "backend", "seed",
    "convergence_tolerance",
}


def scenario_from_dict(raw: Mapping) -> ScenarioConfig:
    if not isinstance(raw, Mapping):
        raise ScenarioError("<root>", "scenario must be a mapping")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ScenarioError(sorted(unknown)[0], "unknown field")
    if "name" not in raw:
        raise ScenarioError("name", "required")
    if "group" not in raw:
        raise ScenarioError("group", "required")

    kw: dict[str, Any] = {"name": str(raw["name"])}
    for key, conv in (
        ("description", str), ("n_simulations", int), ("n_epochs", int), ("resample", str),
        ("parametric_grid", bool), ("group_model", str), ("composition_alpha", float),
        ("backend", str), ("seed", int), ("convergence_tolerance", float),
    ):
        if key in raw:
            try:
                kw[key] = conv(raw[key])
            except (TypeError, ValueError):
                raise ScenarioError(key, f"cannot interpret {raw[key]!r}") from None

    if "schedule" in raw:
        sched = raw["schedule"] or {}
        bad = set(sched) - {"user_user", "assistant_user", "assistant_assistant"}
        if bad:
            raise ScenarioError(f"schedule.{sorted(bad)[0]}", "unknown field")
        try:
            kw["schedule"] = Schedule(**{k: int(v) for k, v in sched.items()})
        except (TypeError, ValueError):
            raise ScenarioError("schedule", "counts must be integers") from None

    group = raw["group"]
    if not isinstance(group, list):
        raise ScenarioError("group", "expected a list of entries")
    entries = []
    for i, item in enumerate(group):
        where = f"group[{i}]"
        if not isinstance(item, Mapping) or "policy" not in item:
            raise ScenarioError(where, "each entry needs a policy")
        try:
            manner = Manner(item.get("manner", "neutral"))
        except ValueError:
            raise ScenarioError(f"{where}.manner", f"unknown manner {item.get('manner')!r}") from None
        entries.append(
            GroupEntry(
                _parse_policy(item["policy"], f"{where}.policy"),
                manner,
                int(item.get("count", 1)),
                bool(item.get("minimal_token", False)),
                float(item.get("noise", 0.0)),
            )
        )
    kw["group"] = tuple(entries)

    if "currencies" in raw:
        kw["currencies"] = tuple(str(c) for c in raw["currencies"] or ())
    if "amounts" in raw:
        kw["amounts"] = _pair(raw["amounts"], "amounts")
    if "prior_policy" in raw:
        kw["prior_policy"] = _parse_policy(raw["prior_policy"], "prior_policy")
    if "kernel" in raw:
        try:
            kw["kernel"] = Kernel(raw["kernel"])
        except ValueError:
            raise ScenarioError("kernel", f"unknown kernel {raw['kernel']!r}") from None
    if "likelihood" in raw:
        try:
            kw["likelihood"] = LikelihoodParams.from_dict(raw["likelihood"] or {})
        except (TypeError, ValueError) as exc:
            raise ScenarioError("likelihood", str(exc)) from None
    if raw.get("test_phase") is not None:
        t = raw["test_phase"]
        bad = set(t) - {"n_episodes", "ood_currencies", "in_distribution", "amounts"}
        if bad:
            raise ScenarioError(f"test_phase.{sorted(bad)[0]}", "unknown field")
        kw["test_phase"] = TestPhase(
            int(t.get("n_episodes", 10)),
            tuple(str(c) for c in t.get("ood_currencies") or ()),
            bool(t.get("in_distribution", True)),
            _pair(t["amounts"], "test_phase.amounts") if t.get("amounts") else None,
        )

    try:
        cfg = ScenarioConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ScenarioError("<root>", str(exc)) from None
    validate(cfg)
    return cfg


def validate(cfg: ScenarioConfig) -> None:
    if cfg.n_simulations < 1:
        raise ScenarioError("n_simulations", "must be positive")
    if cfg.n_epochs < 1:
        raise ScenarioError("n_epochs", "must be positive")
    s = cfg.schedule
    if min(s.user_user, s.assistant_user, s.assistant_assistant) < 0:
        raise ScenarioError("schedule", "counts must be non-negative")
    if len(s) == 0:
        raise ScenarioError("schedule", "at least one episode per epoch is required")
    if not cfg.group:
        raise ScenarioError("group", "must not be empty")
    for i, e in enumerate(cfg.group):
        if e.count < 1:
            raise ScenarioError(f"group[{i}].count", "must be positive")
        if not 0.0 <= e.noise <= 1.0:
            raise ScenarioError(f"group[{i}].noise", "must lie in [0, 1]")
    if s.user_user and cfg.group_size < 2:
        raise ScenarioError("group", "user-user episodes need at least two users")
    if not cfg.currencies or any(not c.strip() or "," in c for c in cfg.currencies):
        raise ScenarioError("currencies", "need at least one non-empty currency without commas")
    lo, hi = cfg.amounts
    if lo < 1 or hi < lo:
        raise ScenarioError("amounts", "need 1 <= low <= high")
    if cfg.resample not in ("simulation", "episode"):
        raise ScenarioError("resample", "must be 'simulation' or 'episode'")
    if cfg.group_model not in ("population", "shared"):
        raise ScenarioError("group_model", "must be 'population' or 'shared'")
    if cfg.composition_alpha <= 0:
        raise ScenarioError("composition_alpha", "must be positive")
    if cfg.backend not in ("stub", "remote"):
        raise ScenarioError("backend", "must be 'stub' or 'remote'")
    if cfg.convergence_tolerance < 0:
        raise ScenarioError("convergence_tolerance", "must be non-negative")
    if cfg.prior_policy not in cfg.hypothesis_space().hypotheses:
        raise ScenarioError("prior_policy", "must be a member of the hypothesis space")
    if cfg.group_model == "population" and len(cfg.hypothesis_space()) > 4:
        raise ScenarioError("group_model", "the population model supports at most 4 hypotheses")
    t = cfg.test_phase
    if t is not None:
        if t.n_episodes < 1:
            raise ScenarioError("test_phase.n_episodes", "must be positive")
        if not t.in_distribution and not t.ood_currencies:
            raise ScenarioError("test_phase", "needs OOD currencies or in_distribution: true")
        overlap = set(t.ood_currencies) & set(cfg.currencies)
        if overlap:
            raise ScenarioError("test_phase.ood_currencies", f"overlap the training pool: {sorted(overlap)}")
        if t.amounts is not None and (t.amounts[0] < 1 or t.amounts[1] < t.amounts[0]):
            raise ScenarioError("test_phase.amounts", "need 1 <= low <= high")


def load_scenario(path) -> ScenarioConfig:
    """Load a scenario from a file path or the name of a bundled scenario."""
    p = Path(path)
    if not p.exists():
        bundled = resources.files("scai").joinpath(f"scenarios/{path}.yaml")
        if bundled.is_file():
            return scenario_from_dict(yaml.safe_load(bundled.read_text()))
        raise ScenarioError("scenario", f"no such file or bundled scenario: {path}")
    try:
        raw = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError("<root>", f"malformed YAML: {exc}") from None
    return scenario_from_dict(raw)


def bundled_scenarios() -> dict[str, str]:
    """Name -> description for every bundled scenario."""
    out = {}
    for entry in sorted(resources.files("scai").joinpath("scenarios").iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".yaml"):
            raw = yaml.safe_load(entry.read_text())
            out[raw["name"]] = raw.get("description", "")
    return out
