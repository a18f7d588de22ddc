import csv
import math
import statistics

import numpy as np
import pytest
import yaml

from scai.agents import ALTRUISTIC, SELFISH
from scai.harness.config import (
    Schedule,
    ScenarioError,
    bundled_scenarios,
    load_scenario,
    scenario_from_dict,
)
from scai.harness.export import (
    CSV_COLUMNS,
    csv_row_count,
    export_results,
    read_csv,
    read_json,
    read_plot_data,
    read_summary,
    summarize_dir,
    write_batch,
)
from scai.harness.runner import SimulationResult, run_batch, run_simulation
from scai.harness.stats import label_convergence, mean_ci, summarize
from scai.inference import ObservationSource

MINIMAL = {"name": "t", "group": [{"policy": "selfish", "count": 4}]}


def write_yaml(tmp_path, data, name="s.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


# --- configuration ------------------------------------------------------------

def test_bundled_alignment_altruistic():
    cfg = load_scenario("alignment_altruistic")
    assert cfg.group_size == 10 and all(e.policy == ALTRUISTIC for e in cfg.group)
    assert (cfg.schedule.user_user, cfg.schedule.assistant_user) == (8, 2)
    assert (cfg.n_epochs, cfg.n_simulations) == (5, 20)


def test_bundled_mixed_80_20():
    cfg = load_scenario("mixed_80_20")
    counts = {e.policy.label: e.count for e in cfg.group}
    assert counts == {"selfish": 8, "altruistic": 2}


def test_every_bundled_scenario_loads():
    names = bundled_scenarios()
    assert len(names) >= 14
    for name in names:
        assert load_scenario(name).name == name


def test_defaults_applied(tmp_path):
    cfg = load_scenario(write_yaml(tmp_path, MINIMAL))
    assert cfg.n_simulations == 20 and cfg.n_epochs == 5
    assert cfg.schedule == Schedule(8, 2, 0)


@pytest.mark.parametrize("patch,field", [
    ({"n_epochs": 0}, "n_epochs"),
    ({"n_simulations": -1}, "n_simulations"),
    ({"schedule": {"user_user": 0, "assistant_user": 0}}, "schedule"),
    ({"schedule": {"user_user": "many"}}, "schedule"),
    ({"schedule": {"bogus": 1}}, "schedule.bogus"),
    ({"group": []}, "group"),
    ({"group": [{"policy": "greedy"}]}, "group[0].policy"),
    ({"group": [{"policy": "selfish", "manner": "angry", "count": 3}]}, "group[0].manner"),
    ({"amounts": [10, 5]}, "amounts"),
    ({"kernel": "sometimes"}, "kernel"),
    ({"colour": "red"}, "colour"),
    ({"likelihood": {"tone_weight": 3}}, "likelihood"),
    ({"test_phase": {"ood_currencies": ["dollars"]}, "currencies": ["dollars"]}, "test_phase.ood_currencies"),
])
def test_validation_names_the_field(tmp_path, patch, field):
    with pytest.raises(ScenarioError) as err:
        load_scenario(write_yaml(tmp_path, {**MINIMAL, **patch}))
    assert err.value.field == field


def test_missing_file():
    with pytest.raises(ScenarioError):
        load_scenario("/nonexistent/scenario.yaml")


def test_malformed_yaml(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("name: [unclosed")
    with pytest.raises(ScenarioError):
        load_scenario(p)


def test_config_round_trip():
    for name in ("generalization_selfish", "inconsistency_altruistic_rude", "assistant_heavy"):
        cfg = load_scenario(name)
        assert scenario_from_dict(cfg.to_dict()) == cfg


def test_schedule_order():
    assert Schedule(2, 3, 1).episodes() == [
        "user_user", "user_user", "assistant_assistant",
        "assistant_proposer", "assistant_responder", "assistant_proposer",
    ]


# --- simulation ---------------------------------------------------------------

def test_seed_replay_is_identical():
    cfg = load_scenario("mixed_50_50")
    assert run_simulation(cfg, 3).to_dict() == run_simulation(cfg, 3).to_dict()


def test_seed_isolation():
    cfg = load_scenario("mixed_50_50").with_overrides(n_simulations=6)
    _, batch = run_batch(cfg)
    alone = run_simulation(cfg, 4)
    assert batch[4].to_dict() == alone.to_dict()
    # a different base seed changes the runs
    other = run_simulation(cfg.with_overrides(seed=cfg.seed + 1), 4)
    assert other.to_dict() != alone.to_dict()


def test_parallel_matches_sequential():
    cfg = load_scenario("mixed_50_50").with_overrides(n_simulations=4)
    _, seq = run_batch(cfg, workers=1)
    _, par = run_batch(cfg, workers=2)
    assert [r.to_dict() for r in seq] == [r.to_dict() for r in par]


def test_altruistic_alignment_and_constant_users():
    cfg = load_scenario("alignment_altruistic")
    summary, results = run_batch(cfg)
    assert summary.users.mean == [100.0] * 5
    assert summary.assistant.mean[1:] == [100.0] * 4


def test_generalization_run():
    res = run_simulation(load_scenario("generalization_selfish"), 0)
    assert res.converged_policy == "selfish"
    assert set(res.test_offers("dollars")) == {0.0}
    assert set(res.test_offers("grams of medicine")) == {100.0}
    assert len([r for r in res.records if r.phase == "test"]) == 10


def test_observation_accounting():
    cfg = load_scenario("mixed_50_50").with_overrides(schedule=Schedule(5, 3, 2))
    res = run_simulation(cfg, 0)
    for batch in res.epoch_observations:
        # user-user episodes plus assistant-as-responder ones
        assert len(batch) == 5 + 1
        assert sum(o.source is ObservationSource.ASSISTANT_USER for o in batch) == 1


def test_currency_fixed_per_simulation():
    cfg = load_scenario("alignment_selfish")
    for i in range(5):
        res = run_simulation(cfg, i)
        assert len({(r.currency, r.total_amount) for r in res.records}) == 1


# --- statistics ---------------------------------------------------------------

class Series:
    def __init__(self, assistant, users):
        self.a, self.u = assistant, users

    def assistant_series(self):
        return self.a

    def user_series(self):
        return self.u


def test_label_convergence_examples():
    assert label_convergence(Series([50, 100, 100, 100, 100], [100] * 5)) == (True, 2)
    assert label_convergence(Series([50] * 5, [100] * 5)) == (False, None)
    assert label_convergence(Series([100, 50, 100, 100, 97], [100] * 5)) == (True, 3)
    assert label_convergence(Series([100, 100, 100, 100, 50], [100] * 5)) == (False, None)
    assert label_convergence(Series([100, None, 100], [100] * 3)) == (True, 3)


def test_mean_ci():
    assert mean_ci([]) == (None, None, None)
    assert mean_ci([4.0]) == (4.0, None, None)
    m, lo, hi = mean_ci([1.0, 2.0, 3.0, 4.0])
    half = 1.96 * statistics.stdev([1, 2, 3, 4]) / 2
    assert (m, lo, hi) == pytest.approx((2.5, 2.5 - half, 2.5 + half), abs=1e-12)


def test_single_simulation_summary():
    cfg = load_scenario("mixed_50_50").with_overrides(n_simulations=1)
    summary, (res,) = run_batch(cfg)
    assert summary.assistant.mean == res.assistant_series()
    assert summary.users.ci_low == [None] * 5


# --- export -------------------------------------------------------------------

@pytest.fixture(scope="module")
def batch_dir(tmp_path_factory):
    cfg = load_scenario("generalization_selfish").with_overrides(n_simulations=7)
    summary, results = run_batch(cfg)
    out = tmp_path_factory.mktemp("out")
    write_batch(out, cfg, summary, results)
    return cfg, summary, results, out


def test_csv_columns_and_row_count(batch_dir):
    cfg, _, _, out = batch_dir
    with open(out / "episodes.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) - 1 == csv_row_count(7, len(cfg.schedule), cfg.n_epochs, cfg.test_phase.n_episodes)
    assert {r[2] for r in rows[1:]} == {"train", "test"}


def test_summary_json_round_trip(batch_dir):
    _, summary, _, out = batch_dir
    assert read_summary(out / "summary.json") == summary


def test_simulations_json_round_trip(batch_dir):
    _, _, results, out = batch_dir
    loaded = read_json(out / "simulations.json")
    assert [r.to_dict() for r in loaded] == [r.to_dict() for r in results]


def test_summarize_dir_recomputes(batch_dir):
    _, summary, _, out = batch_dir
    assert summarize_dir(out) == summary


def test_independent_recomputation_from_csv(batch_dir):
    _, summary, _, out = batch_dir
    per = {}
    with open(out / "episodes.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            if row["phase"] != "train" or (row["agent_kind"], row["role"]) != ("assistant", "proposer"):
                continue
            per.setdefault(int(row["epoch"]), {}).setdefault(row["sim_id"], []).append(float(row["offered_share_pct"]))
    for i, epoch in enumerate(summary.epochs):
        vals = [sum(v) / len(v) for v in per[epoch].values()]
        m = sum(vals) / len(vals)
        sd = statistics.stdev(vals)
        assert abs(m - summary.assistant.mean[i]) < 1e-9
        assert abs(m - 1.96 * sd / math.sqrt(len(vals)) - summary.assistant.ci_low[i]) < 1e-9


def test_plot_data(batch_dir):
    _, summary, _, out = batch_dir
    rows = read_plot_data(out / "plot_data.csv")
    users = [r for r in rows if r["series"] == "users"]
    assert [r["mean"] for r in users] == summary.users.mean
    assert any(r["series"] == "test:grams of medicine" for r in rows)


def test_export_results_formats(batch_dir, tmp_path):
    _, _, results, _ = batch_dir
    export_results(results, "csv", tmp_path / "a.csv")
    assert len(read_csv(tmp_path / "a.csv")) == sum(len(r.records) for r in results)
    export_results(results, "json", tmp_path / "a.json")
    assert isinstance(read_json(tmp_path / "a.json")[0], SimulationResult)
    with pytest.raises(ValueError):
        export_results(results, "xml", tmp_path / "a.xml")
    with pytest.raises(ValueError):
        export_results([], "csv", tmp_path / "b.csv")


def test_csv_is_byte_identical_across_runs(tmp_path):
    cfg = load_scenario("mixed_80_20").with_overrides(n_simulations=5)
    for d in ("a", "b"):
        _, results = run_batch(cfg)
        export_results(results, "csv", tmp_path / f"{d}.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_failed_runs_excluded_from_summary():
    cfg = load_scenario("alignment_selfish").with_overrides(n_simulations=3)
    _, results = run_batch(cfg)
    results[1].error = "injected"
    s = summarize(results)
    assert (s.n_simulations, s.n_completed, s.n_failed) == (3, 2, 1)
    assert s.users.n == [2] * 5


def test_policy_yaml_forms():
    cfg = scenario_from_dict({**MINIMAL, "group": [{"policy": {"parametric": 0.25}, "count": 2}],
                              "parametric_grid": True, "group_model": "shared"})
    assert cfg.group[0].policy.target_responder_fraction == 0.25
    assert cfg.prior_policy == ALTRUISTIC
    assert SELFISH in cfg.hypothesis_space().hypotheses
    assert np.isclose(cfg.initial_belief().masses.sum(), 1.0)
