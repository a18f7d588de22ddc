import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

import oracles
from scai.actions import Manner
from scai.agents import ALTRUISTIC, FAIR, SELFISH, NormPolicy, PolicyKind
from scai.game import ConfigError, Context
from scai.inference import (
    CompositionBelief,
    Directive,
    DirectiveStore,
    HypothesisSpace,
    Kernel,
    LikelihoodParams,
    NumericalUnderflow,
    Observation,
    PosteriorBelief,
    directive_text,
    log_weight,
    make_directive,
    manner_likelihood,
    offer_likelihood,
    parse_directive,
    psrl_epoch,
    resolve_policy,
    sample_hypothesis,
    update_posterior,
)

SPACE = HypothesisSpace.default()
DEFAULTS = LikelihoodParams()


def obs(fraction, total=10, manner=Manner.NEUTRAL, currency="dollars"):
    return Observation(fraction, manner, Context("o", "a", "b", currency, total))


# --- likelihoods --------------------------------------------------------------

def test_offer_likelihood_peak_without_smoothing():
    p = LikelihoodParams(smoothing=0.0)
    z = sum(math.exp(-8 * i / 10) for i in range(11))
    assert offer_likelihood(obs(0.0), SELFISH, p) == pytest.approx(1 / z, rel=1e-12)


def test_offer_likelihood_ratio_against_grid_enumeration():
    ratio = offer_likelihood(obs(0.0), SELFISH, DEFAULTS) / offer_likelihood(obs(0.0), ALTRUISTIC, DEFAULTS)
    exact = oracles.offer_lik(0.0, 10, 0.0, 8, 0.01) / oracles.offer_lik(0.0, 10, 1.0, 8, 0.01)
    assert ratio == pytest.approx(float(exact), rel=1e-12)


def test_full_smoothing_is_uniform():
    p = replace(DEFAULTS, smoothing=0.999999999)
    for h in SPACE:
        assert offer_likelihood(obs(0.3), h, p) == pytest.approx(1 / 11, rel=1e-6)


def test_manner_table_readback_and_neutral():
    assert manner_likelihood(Manner.RUDE, SELFISH, DEFAULTS) == 0.6
    assert len({manner_likelihood(Manner.NEUTRAL, h, DEFAULTS) for h in SPACE}) == 1


def test_tone_weight_one_ignores_manner():
    p = replace(DEFAULTS, tone_weight=1.0)
    for h in SPACE:
        assert log_weight(obs(1.0, manner=Manner.RUDE), h, p) == log_weight(obs(1.0), h, p)


def test_tone_weight_zero_ignores_offers():
    p = replace(DEFAULTS, tone_weight=0.0)
    for h in SPACE:
        assert log_weight(obs(1.0, manner=Manner.RUDE), h, p) == log_weight(obs(0.0, manner=Manner.RUDE), h, p)


def test_likelihood_params_validation_and_round_trip():
    with pytest.raises(ConfigError):
        LikelihoodParams(concentration=0)
    with pytest.raises(ConfigError):
        LikelihoodParams(tone_weight=1.5)
    bad = {k: dict(v) for k, v in DEFAULTS.manner_table.items()}
    bad[PolicyKind.FAIR][Manner.RUDE] = 0.5
    with pytest.raises(ConfigError):
        LikelihoodParams(manner_table=bad)
    assert LikelihoodParams.from_dict(DEFAULTS.to_dict()) == DEFAULTS


# --- shared-norm posterior ----------------------------------------------------

def test_single_selfish_observation_ordering():
    p = replace(DEFAULTS, tone_weight=1.0)
    post = update_posterior(PosteriorBelief.uniform(SPACE), [obs(0.0)], p)
    assert post.mass(SELFISH) > post.mass(FAIR) > post.mass(ALTRUISTIC)
    expected = oracles.bayes([1, 1, 1], SPACE, [obs(0.0)], p)
    assert np.allclose(post.masses, expected, rtol=0, atol=1e-12)


def test_empty_batch_is_identity():
    b = PosteriorBelief.uniform(SPACE)
    assert update_posterior(b, [], DEFAULTS) is b


def test_eight_altruistic_observations():
    post = update_posterior(PosteriorBelief.uniform(SPACE), [obs(1.0)] * 8, DEFAULTS)
    assert post.mass(ALTRUISTIC) > 0.99
    assert np.allclose(post.masses, oracles.bayes([1, 1, 1], SPACE, [obs(1.0)] * 8, DEFAULTS), atol=1e-10)


def test_long_histories_stay_finite():
    post = update_posterior(PosteriorBelief.uniform(SPACE), [obs(1.0, total=100)] * 5000, DEFAULTS)
    assert post.mass(ALTRUISTIC) == pytest.approx(1.0)
    assert np.isfinite(post.log_masses).all()


def test_underflow_is_reported():
    b = PosteriorBelief.from_weights(SPACE, [1.0, 0.0, 0.0])
    p = replace(DEFAULTS, tone_weight=0.0)
    table = {k: dict(v) for k, v in p.manner_table.items()}
    table[PolicyKind.SELFISH] = {Manner.RUDE: 0.0, Manner.SYCOPHANTIC: 0.5, Manner.NEUTRAL: 0.5}
    with pytest.raises(NumericalUnderflow):
        update_posterior(b, [obs(0.0, manner=Manner.RUDE)], replace(p, manner_table=table))


def test_currencies_accumulate():
    post = update_posterior(PosteriorBelief.uniform(SPACE), [obs(1.0), obs(1.0, currency="apples")], DEFAULTS)
    assert post.currencies == {"dollars", "apples"}
    assert post.history_size == 2


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_posterior_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    space = oracles.random_space(rng)
    batch = oracles.random_batch(rng)
    prior = oracles.random_prior(rng, len(space))
    post = update_posterior(PosteriorBelief.from_weights(space, prior), batch, DEFAULTS)
    assert abs(post.masses.sum() - 1.0) < 1e-12
    assert np.max(np.abs(post.masses - oracles.bayes(prior, space, batch, DEFAULTS))) < 1e-10


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_batch_sequential_and_permutation(seed):
    rng = np.random.default_rng(seed)
    space = oracles.random_space(rng)
    batch = oracles.random_batch(rng)
    b0 = PosteriorBelief.from_weights(space, oracles.random_prior(rng, len(space)))
    once = update_posterior(b0, batch, DEFAULTS)
    seq = b0
    for o in batch:
        seq = update_posterior(seq, [o], DEFAULTS)
    perm = update_posterior(b0, [batch[i] for i in rng.permutation(len(batch))], DEFAULTS)
    assert np.max(np.abs(once.masses - seq.masses)) < 1e-10
    assert np.max(np.abs(once.masses - perm.masses)) < 1e-10


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.integers(1, 100))
def test_rude_tone_lowers_altruistic_mass(n, total):
    uniform = PosteriorBelief.uniform(SPACE)
    rude = update_posterior(uniform, [obs(1.0, total, Manner.RUDE)] * n, DEFAULTS)
    neutral = update_posterior(uniform, [obs(1.0, total)] * n, DEFAULTS)
    # compare the complement in log space; both masses can round to 1.0
    a = SPACE.index(ALTRUISTIC)

    def log_rest(b):
        return np.logaddexp.reduce([m for i, m in enumerate(b.log_masses) if i != a])

    assert log_rest(rude) > log_rest(neutral)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 10.0), min_size=3, max_size=3), st.floats(1e-3, 1e3), st.integers(0, 1000))
def test_scaling_invariance(weights, c, seed):
    a = PosteriorBelief.from_weights(SPACE, weights)
    b = PosteriorBelief.from_weights(SPACE, [c * w for w in weights])
    assert np.allclose(a.masses, b.masses, rtol=0, atol=1e-12)
    ha = sample_hypothesis(a, np.random.default_rng(seed))
    hb = sample_hypothesis(b, np.random.default_rng(seed))
    assert make_directive(ha) == make_directive(hb)


def test_map_policy():
    assert PosteriorBelief.from_weights(SPACE, [0.2, 0.5, 0.3]).map_policy() == ALTRUISTIC


# --- composition posterior ----------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_composition_matches_assignment_enumeration(seed):
    rng = np.random.default_rng(seed)
    space = HypothesisSpace(tuple([SELFISH, ALTRUISTIC, FAIR][: int(rng.integers(1, 4))]))
    batch = oracles.random_batch(rng, max_size=6, max_total=20)
    alpha = float(rng.choice([0.02, 0.5, 1.0, 3.0]))
    belief = CompositionBelief.uniform(space, alpha).update(batch, DEFAULTS)
    expected = oracles.composition_predictive(space, batch, alpha, DEFAULTS)
    assert np.max(np.abs(belief.predictive().masses - expected)) < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_composition_batch_sequential_and_permutation(seed):
    rng = np.random.default_rng(seed)
    batch = oracles.random_batch(rng, max_size=12)
    b0 = CompositionBelief.uniform(SPACE, 0.3)
    once = b0.update(batch, DEFAULTS)
    seq = b0
    for o in batch:
        seq = seq.update([o], DEFAULTS)
    perm = b0.update([batch[i] for i in rng.permutation(len(batch))], DEFAULTS)
    assert np.max(np.abs(once.masses - seq.masses)) < 1e-10
    assert np.max(np.abs(once.masses - perm.masses)) < 1e-10


def test_composition_prior_is_uniform():
    assert np.allclose(CompositionBelief.uniform(SPACE, 0.02).masses, 1 / 3)


def test_composition_tracks_mixtures():
    batch = [obs(0.0, 50)] * 36 + [obs(1.0, 50)] * 9
    pred = CompositionBelief.uniform(SPACE, 1.0).update(batch, DEFAULTS).predictive()
    assert pred.mass(SELFISH) == pytest.approx(37 / 48, abs=0.02)
    assert pred.mass(ALTRUISTIC) == pytest.approx(10 / 48, abs=0.02)


def test_composition_size_guard():
    big = HypothesisSpace.default(parametric_grid=True)
    with pytest.raises(ConfigError):
        CompositionBelief.uniform(big).update([obs(0.5)] * 20, DEFAULTS)


# --- sampling -----------------------------------------------------------------

def test_point_mass_always_sampled():
    b = PosteriorBelief.from_weights(SPACE, [0.0, 1.0, 0.0])
    rng = np.random.default_rng(0)
    assert all(sample_hypothesis(b, rng) == ALTRUISTIC for _ in range(1000))


@pytest.mark.parametrize("weights", [[1, 1, 1], [0.8, 0.2, 0.0]])
def test_sampling_frequencies(weights):
    b = PosteriorBelief.from_weights(SPACE, weights)
    rng = np.random.default_rng(11)
    draws = [SPACE.index(sample_hypothesis(b, rng)) for _ in range(10_000)]
    counts = np.bincount(draws, minlength=3)
    keep = b.masses > 0
    assert counts[~keep].sum() == 0
    assert stats.chisquare(counts[keep], 10_000 * b.masses[keep]).pvalue > 0.01


def test_sampling_is_seeded():
    b = PosteriorBelief.uniform(SPACE)
    a = [sample_hypothesis(b, np.random.default_rng(3)) for _ in range(5)]
    assert len(set(a)) == 1


# --- directives and generalization --------------------------------------------

def test_directive_texts():
    d = make_directive(ALTRUISTIC)
    assert d.text == "Always prioritize the well-being of others over your own."
    s = make_directive(SELFISH, {"dollars"})
    assert s.text == directive_text(SELFISH) and s.trained_currencies == {"dollars"}


@pytest.mark.parametrize("h", [SELFISH, ALTRUISTIC, FAIR] + [NormPolicy.parametric(i / 10) for i in range(11)])
def test_directive_round_trip(h):
    assert parse_directive(make_directive(h).text) == h


def test_free_text_directives():
    assert parse_directive("Split everything fairly and evenly.") == FAIR
    assert parse_directive("Be generous and put the needs of others first.") == ALTRUISTIC
    assert parse_directive("Think about the weather.") is None
    assert parse_directive("Be fair but also generous.") is None


def test_resolve_policy_kernels():
    learned = Directive(directive_text(SELFISH), SELFISH, frozenset({"dollars"}))
    exact = DirectiveStore(learned, ALTRUISTIC, Kernel.EXACT_CURRENCY_MATCH)
    c_in = Context("t", "a", "b", "dollars", 10)
    c_out = Context("t", "a", "b", "grams of medicine", 10)
    assert resolve_policy(exact, c_in) == SELFISH
    assert resolve_policy(exact, c_out) == ALTRUISTIC
    always = DirectiveStore(learned, ALTRUISTIC, Kernel.ALWAYS_APPLY)
    assert resolve_policy(always, c_out) == SELFISH


# --- posterior sampling step --------------------------------------------------

def test_psrl_epoch_altruistic_users():
    hits = 0
    for seed in range(500):
        _, sampled, d = psrl_epoch(PosteriorBelief.uniform(SPACE), [obs(1.0)] * 8, np.random.default_rng(seed), DEFAULTS)
        hits += sampled == ALTRUISTIC
        assert d.structured == sampled
    assert hits / 500 > 0.99


def test_psrl_epoch_without_observations():
    b = PosteriorBelief.uniform(SPACE)
    new, sampled, _ = psrl_epoch(b, [], np.random.default_rng(0), DEFAULTS)
    assert new is b and sampled in SPACE.hypotheses


def test_psrl_selfish_stability():
    stable = 0
    for seed in range(100):
        rng, b, labels = np.random.default_rng(seed), PosteriorBelief.uniform(SPACE), []
        for _ in range(5):
            b, sampled, _ = psrl_epoch(b, [obs(0.0, 37)] * 8, rng, DEFAULTS)
            labels.append(sampled)
        stable += all(h == SELFISH for h in labels[1:])
    assert stable >= 95
