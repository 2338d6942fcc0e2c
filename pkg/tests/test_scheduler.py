import numpy as np
import pytest

from nrtsi.scheduler import (CapacityError, Mode, SchedulePlan, SchedulerConfig, ScheduleStep,
                             iter_gap_tables, level_of, model_ids, plan, plan_deterministic,
                             plan_irregular, plan_partial_dims, plan_stochastic)
from nrtsi.series import SeriesSet, compute_gaps
from oracles import level_loop_plan, brute_gaps

WIDE_GRID_GAPS = [16, 15, 8, 7, 6, 4, 3, 2, 1]


def grid_instance(rng, n=None):
    n = n or int(rng.integers(10, 60))
    while True:
        obs = np.flatnonzero(rng.random(n) < rng.uniform(0.05, 0.4))
        if obs.size == 0:
            continue
        obs = obs.astype(float)
        tgt = np.setdiff1d(np.arange(n, dtype=float), obs)
        if tgt.size and max(brute_gaps(obs, tgt).values()) <= 16:
            return obs, tgt


def test_level_bands():
    assert [level_of(g, 4) for g in (16, 9, 8.5, 8, 5, 4, 3, 2, 1.5, 1, 0.2)] == \
        [0, 0, 0, 1, 1, 2, 2, 3, 3, 4, 4]
    with pytest.raises(CapacityError, match="capacity"):
        level_of(16.5, 4)
    with pytest.raises(ValueError):
        level_of(0.0, 4)


def test_matches_level_loop_plan_on_random_grids():
    rng = np.random.default_rng(0)
    for _ in range(200):
        obs, tgt = grid_instance(rng)
        got = [(s.level, s.target_times) for s in plan_deterministic(obs, tgt)]
        assert got == level_loop_plan(obs, tgt)


def test_two_anchor_grid_halves():
    p = plan_deterministic([0.0, 33.0], np.arange(1.0, 33.0))
    assert p.gaps == [16, 8, 4, 2, 1]
    assert p.levels == [0, 1, 2, 3, 4]
    assert p.steps[0].target_times == (16.0, 17.0)


def test_wide_grid_gap_order():
    obs = [0.0, 12.0, 42.0, 74.0]
    tgt = np.setdiff1d(np.arange(75.0), obs)
    assert plan_deterministic(obs, tgt).gaps == WIDE_GRID_GAPS


def test_gap_sequence_non_increasing_and_complete():
    rng = np.random.default_rng(1)
    for _ in range(50):
        obs, tgt = grid_instance(rng)
        for planner in (plan_deterministic, plan_irregular, plan_stochastic):
            p = planner(obs, tgt)
            assert all(a >= b for a, b in zip(p.gaps, p.gaps[1:]))
            assert sorted(p.all_targets()) == sorted(tgt.tolist())


def test_capacity_error_and_clamp():
    with pytest.raises(CapacityError) as exc:
        plan_deterministic([0.0], [40.0])
    assert exc.value.gap == 40.0
    p = plan_deterministic([0.0], [40.0, 20.0], SchedulerConfig(clamp_gaps=True))
    assert p.levels[0] == 0 and p.steps[0].target_times == (20.0, 40.0)


def test_irregular_band():
    obs = [0.0, 10.0]
    tgt = [4.3, 5.0, 5.9, 9.7]
    p = plan_irregular(obs, tgt, SchedulerConfig(band_width=1.0))
    # max gap 5.0 at level 1 (4, 8]; band (4, 5] holds 4.3 (gap 4.3) and 5.0 and 5.9 (gap 4.1)
    assert p.steps[0].target_times == (4.3, 5.0, 5.9)
    assert p.steps[0].level == 1
    assert p.steps[-1].target_times == (9.7,)


def test_stochastic_one_by_one_above_threshold():
    obs = [0.0, 33.0]
    tgt = np.arange(1.0, 33.0)
    p = plan_stochastic(obs, tgt, SchedulerConfig(stochastic_threshold=4))
    big = [s for s in p if s.gap > 4]
    assert all(len(s.target_times) == 1 for s in big)
    assert p.steps[0].target_times == (16.0,)
    assert any(len(s.target_times) > 1 for s in p if s.gap <= 4)


def test_partial_dims_order():
    masks = np.array([[True, True, True], [False, False, True], [False, True, True],
                      [False, False, False], [True, False, True]])
    s = SeriesSet(np.arange(5.0), np.zeros((5, 3)), masks)
    p = plan_partial_dims(s)
    assert [s_.target_times for s_ in p] == [(3.0,), (1.0,), (2.0, 4.0)]
    assert set(s_.model_id for s_ in p) == {0}
    assert plan(s, SchedulerConfig(mode=Mode.PARTIAL_DIMS)) == p


def test_plan_jsonl_round_trip():
    p = plan_deterministic([0.0, 33.0], np.arange(1.0, 33.0))
    q = SchedulePlan.loads(p.dumps())
    assert [(s.level, s.target_times, s.model_id) for s in q] == \
        [(s.level, s.target_times, s.model_id) for s in p]


def test_plan_empty_and_model_ids():
    s = SeriesSet.complete([0.0, 1.0], [1.0, 2.0])
    assert len(plan(s)) == 0
    assert model_ids(SchedulerConfig()) == [0, 1, 2, 3, 4]
    assert model_ids(SchedulerConfig(mode="partial_dims")) == [0]
    with pytest.raises(ValueError):
        ScheduleStep(0, (), 0)


def test_gap_tables_replay():
    obs, tgt = [0.0, 33.0], np.arange(1.0, 33.0)
    p = plan_deterministic(obs, tgt)
    known = list(obs)
    for table, step in zip(iter_gap_tables(obs, tgt, p), p):
        remaining = [t for t in tgt if t not in known]
        assert dict(table) == dict(compute_gaps(known, remaining))
        known += list(step.target_times)
