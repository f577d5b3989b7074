"""Tests for the Monte Carlo layer: Wilson intervals, batch reproducibility,
trial exchangeability, sweeps and the scenario library."""

import math
import random

import pytest

from skygrab.config import ConfigError, build_run_config
from skygrab.experiments import (
    BatchResult,
    load_scenario,
    run_batch,
    run_trial,
    scenario_library,
    summarize,
    sweep,
    trial_streams,
    wilson_interval,
)


class TestWilson:
    def test_eight_of_ten(self):
        lo, hi = wilson_interval(8, 10)
        assert lo == pytest.approx(0.4901, abs=2e-4)
        assert hi == pytest.approx(0.9433, abs=2e-4)

    def test_zero_successes_small_n(self):
        lo, hi = wilson_interval(0, 10)
        assert lo == 0.0
        assert 0.25 < hi < 0.35

    def test_all_successes(self):
        lo, hi = wilson_interval(10, 10)
        assert hi == 1.0
        assert 0.65 < lo < 0.75

    def test_interval_contains_estimate(self):
        rng = random.Random(1)
        for _ in range(200):
            n = rng.randrange(1, 500)
            k = rng.randrange(0, n + 1)
            lo, hi = wilson_interval(k, n)
            assert lo <= k / n <= hi
            assert 0.0 <= lo <= hi <= 1.0

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            wilson_interval(0, 0)


class TestSeeding:
    def test_streams_independent_of_each_other(self):
        s = trial_streams(7, 3)
        a = [s["gust"].random() for _ in range(5)]
        b = [s["camera"].random() for _ in range(5)]
        assert a != b

    def test_streams_reproducible(self):
        a = trial_streams(7, 3)
        b = trial_streams(7, 3)
        assert [a["draws"].random() for _ in range(5)] == \
            [b["draws"].random() for _ in range(5)]

    def test_distinct_trials_differ(self):
        a = trial_streams(7, 3)
        b = trial_streams(7, 4)
        assert a["draws"].random() != b["draws"].random()


def small_static(n_trials=10, duration=12.0):
    doc = load_scenario("static_ball")
    doc["encounter"]["duration"] = duration
    doc["experiments"]["trials"] = n_trials
    return build_run_config(doc)


class TestBatch:
    def test_reproducible_including_histogram(self):
        run = small_static()
        a = run_batch(run, 12, master_seed=5)
        b = run_batch(run, 12, master_seed=5)
        assert a.to_dict(include_outcomes=True) == b.to_dict(include_outcomes=True)

    def test_estimate_and_interval_consistency(self):
        run = small_static()
        r = run_batch(run, 12, master_seed=5)
        assert r.estimate == r.successes / r.trials
        assert r.ci95[0] <= r.estimate <= r.ci95[1]
        n_fail = sum(r.failure_histogram.values())
        assert n_fail == r.trials - r.successes
        for o in r.outcomes:
            assert o.success == (o.terminal_phase == "DONE")
            if not o.success:
                assert o.failure_cause is not None

    def test_trials_exchangeable(self):
        # outcomes bind to trial indices, not execution order
        run = small_static()
        batch = run_batch(run, 10, master_seed=9)
        order = list(range(10))
        random.Random(3).shuffle(order)
        replayed = {i: run_trial(run, 9, i) for i in order}
        for outcome in batch.outcomes:
            assert replayed[outcome.index] == outcome

    def test_degenerate_ring_never_captures(self):
        doc = load_scenario("static_ball")
        doc["encounter"]["duration"] = 10.0
        doc["design"]["basket_ring_diameter"] = 0.01
        run = build_run_config(doc)
        r = run_batch(run, 8, master_seed=0)
        assert r.successes == 0

    def test_rejects_zero_trials(self):
        with pytest.raises(ValueError):
            run_batch(small_static(), 0, master_seed=0)

    def test_summarize_order_independent(self):
        run = small_static()
        batch = run_batch(run, 10, master_seed=9)
        shuffled = list(batch.outcomes)
        random.Random(1).shuffle(shuffled)
        again = summarize(shuffled, batch.config_hash, batch.master_seed)
        assert again.successes == batch.successes
        assert again.failure_histogram == batch.failure_histogram


class TestSweep:
    def test_unknown_path_rejected_before_running(self):
        doc = load_scenario("static_ball")
        with pytest.raises(ConfigError):
            sweep(doc, ["encounter.guidance.warp_factor"], [[1.0]],
                  n_trials=1, seed=0)

    def test_non_numeric_path_rejected(self):
        doc = load_scenario("static_ball")
        with pytest.raises(ConfigError):
            sweep(doc, ["mission.switch_policy"], [["any"]], n_trials=1, seed=0)

    def test_empty_grid_rejected(self):
        doc = load_scenario("static_ball")
        with pytest.raises(ValueError):
            sweep(doc, ["encounter.duration"], [[]], n_trials=1, seed=0)

    def test_single_cell_matches_run_batch(self):
        doc = load_scenario("static_ball")
        doc["encounter"]["duration"] = 10.0
        result = sweep(doc, ["encounter.duration"], [[10.0]],
                       n_trials=6, seed=4)
        direct = run_batch(build_run_config(doc), 6, master_seed=4)
        cell = result.cells[0].result
        assert cell.to_dict(include_outcomes=True) == \
            direct.to_dict(include_outcomes=True)

    def test_cartesian_product_and_parameters(self):
        doc = load_scenario("static_ball")
        doc["encounter"]["duration"] = 6.0
        result = sweep(doc, ["encounter.guidance.kp", "encounter.guidance.kd"],
                       [[1.5, 2.0], [2.5, 3.0, 3.5]], n_trials=1, seed=0)
        assert len(result.cells) == 6
        combos = {(c.parameters["encounter.guidance.kp"],
                   c.parameters["encounter.guidance.kd"])
                  for c in result.cells}
        assert len(combos) == 6

    def test_table_rendering(self):
        doc = load_scenario("static_ball")
        doc["encounter"]["duration"] = 6.0
        result = sweep(doc, ["encounter.guidance.kp"], [[1.5, 2.0]],
                       n_trials=2, seed=0)
        table = result.render_table()
        assert "estimate" in table
        assert "1.5" in table and "2" in table


class TestScenarioLibrary:
    def test_names(self):
        lib = scenario_library()
        assert set(lib) == {"static_ball", "straight_6ms", "curved_arc",
                            "windy"}

    def test_static_carrier_is_stationary(self):
        doc = load_scenario("static_ball")
        segs = doc["encounter"]["carrier"]["segments"]
        assert all(s["speed"] == 0.0 for s in segs)

    def test_straight_speed_is_six(self):
        doc = load_scenario("straight_6ms")
        segs = doc["encounter"]["carrier"]["segments"]
        assert segs[0]["speed"] == 6.0

    def test_curved_arc_constant_speed(self):
        doc = load_scenario("curved_arc")
        run = build_run_config(doc)
        path = run.encounter.build_path()
        speeds = [math.hypot(*path.state(t)[1][:2]) for t in (0.0, 5.0, 15.0)]
        assert all(s == pytest.approx(speeds[0], rel=1e-9) for s in speeds)

    def test_windy_sigma_reaches_disturbance_level_at_3_sigma(self):
        doc = load_scenario("windy")
        assert doc["encounter"]["disturbances"]["gust_sigma"] * 3.0 == 12.0

    def test_every_scenario_validates(self):
        for name, doc in scenario_library().items():
            run = build_run_config(doc)
            assert run.encounter is not None, name

    def test_calibration_provenance_recorded(self):
        for doc in scenario_library().values():
            assert "calibrated" in doc["experiments"]["provenance"]

    def test_unknown_scenario(self):
        with pytest.raises(KeyError):
            load_scenario("hover_forever")
