from __future__ import annotations

import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cluttersolve.affordance import (AffordanceConfig, UnreachableError, affordance_map, affordance_scores,
                                     corridor_clear, dump_affordance, influence_score, preliminary_score,
                                     select_grasp)
from cluttersolve.geometry import ParticleCloud
from cluttersolve.observation import Observation, ObservedObject, observe, observe_full

from helpers import builder, stack

CFG = AffordanceConfig()
UP = np.array([0.0, 0.0, 1.0])


def obs_from(clouds, h=0.01):
    """Observation straight from point arrays {id: (n, 3)}."""
    objs = {k: ObservedObject(k, ParticleCloud(np.asarray(v, dtype=float), h), 1.0, np.arange(len(v)))
            for k, v in clouds.items()}
    return Observation(objs, 0, h)


def brute_corridor_clear(p, a, others, g_r, g_l):
    for q in others:
        rel = q - p
        t = -rel @ a
        if 0.0 <= t <= g_l and np.linalg.norm(rel + t * a) < g_r:
            return False
    return True


def test_defaults():
    assert (CFG.eps_x, CFG.w_g, CFG.g_r, CFG.g_l, CFG.pose_samples) == (0.05, 0.08, 0.015, 0.12, 32)
    assert CFG.sig == pytest.approx(0.05 / 3)
    with pytest.raises(ValueError):
        AffordanceConfig(eps_x=0)


def test_thin_plate_preliminary():
    # plate 0.024 thick = 0.3 w_g
    obs = observe_full(stack((0, 0, 0.06, 0.06, 0.012)))
    pts = obs.points(0)
    mid = pts[np.argmin(np.abs(pts[:, 0]) + np.abs(pts[:, 1]) - pts[:, 2])]
    assert mid[2] == pytest.approx(pts[:, 2].max())
    assert preliminary_score(obs, 0, mid) == pytest.approx(0.7, abs=1e-9)


def test_fat_cube_preliminary_zero():
    obs = observe_full(stack((0, 0, 0.08, 0.08, 0.08)))  # edge 2 w_g
    pts = obs.points(0)
    mid = pts[np.argmin(np.abs(pts[:, 0]) + np.abs(pts[:, 1]) - pts[:, 2])]
    assert preliminary_score(obs, 0, mid) == 0.0


def test_single_point_cloud_scores_zero_with_warning(caplog):
    obs = obs_from({0: [[0.0, 0.0, 0.0]]})
    with caplog.at_level(logging.WARNING):
        assert preliminary_score(obs, 0, [0.0, 0.0, 0.0]) == 0.0
    assert "degenerate" in caplog.text


def test_preliminary_rejects_foreign_point():
    obs = observe_full(stack((0, 0, 0.03, 0.03, 0.02)))
    with pytest.raises(ValueError):
        preliminary_score(obs, 0, [1.0, 1.0, 1.0])


def test_influence_values():
    assert influence_score([0, 0, 0], [0, 0, 0]) == 1.0
    assert influence_score([0, 0, 0], [CFG.sig, 0, 0]) == pytest.approx(math.exp(-1))
    assert influence_score([0, 0, 0], [0.01, 0, 0]) > influence_score([0, 0, 0], [0.02, 0, 0])


def test_isolated_object_scores_equal_preliminary():
    obs = observe_full(stack((0, 0, 0.04, 0.03, 0.015), ground_extra=[(0.4, 0, 0.03, 0.03, 0.02)]))
    for g in affordance_map(obs, 0):
        assert g.score == preliminary_score(obs, 0, g.position)


def test_far_neighbour_points_excluded():
    # a neighbour point exactly eps_x away is outside the neighbourhood
    base = np.array([[0, 0, 0], [0.01, 0, 0], [0, 0.01, 0], [0.01, 0.01, 0.0]])
    alone = affordance_scores(obs_from({0: base}), 0)
    with_far = affordance_scores(obs_from({0: base, 1: [[-CFG.eps_x, 0, 0]]}), 0)
    assert with_far[0] == alone[0]


def test_zero_distance_neighbour_subtracts_one():
    base = np.array([[0, 0, 0], [0.01, 0, 0], [0, 0.01, 0], [0.01, 0.01, 0.0], [0.0, 0.0, 0.01]])
    alone = affordance_scores(obs_from({0: base}), 0)
    touched = affordance_scores(obs_from({0: base, 1: [[0.0, 0.0, 0.0]]}), 0)
    assert touched[0] == alone[0] - 1.0


def test_half_covered_plate_edges_outrank_covered():
    b = builder()
    low = b.box(0.0, 0.0, b.ground(), 0.08, 0.04, 0.004)
    b.box(-0.05, 0.0, b.on(low), 0.05, 0.05, 0.004)
    obs = observe(b.scene(low, "plates"))
    pts = obs.points(0)
    s = affordance_scores(obs, 0)
    free = pts[:, 0] > 0.06
    covered = pts[:, 0] < -0.02
    assert free.any() and covered.any()
    assert s[free].min() > s[covered].max()


def test_map_sorted_descending_then_lexicographic():
    obs = observe_full(stack((0, 0, 0.04, 0.03, 0.015), (0.01, 0, 0.02, 0.02, 0.01)))
    m = affordance_map(obs, 0)
    keys = [(-g.score, *g.position) for g in m]
    assert keys == sorted(keys)


def test_single_free_box_grasped_from_top_vertically():
    obs = observe(stack((0, 0, 0.03, 0.03, 0.02)))
    a = select_grasp(obs, 0, UP)
    assert a.grasp_point[2] == pytest.approx(obs.points(0)[:, 2].max())
    np.testing.assert_allclose(a.grasp.approach, -UP, atol=1e-12)
    np.testing.assert_array_equal(a.direction, UP)


def test_tight_row_uses_open_vertical_corridor():
    b = builder()
    for k in range(3):
        b.box(0.0, (k - 1) * (0.05 + 0.01), b.ground(), 0.04, 0.025, 0.03)
    obs = observe_full(b.scene(b.objects[1], "row"))
    a = select_grasp(obs, 1, UP)
    others = np.concatenate([obs.points(0), obs.points(2)])
    assert brute_corridor_clear(a.grasp_point, a.grasp.approach, others, CFG.g_r, CFG.g_l)
    assert a.grasp.approach[2] < -0.8  # coming down from above


def test_enclosed_object_unreachable():
    rng = np.random.default_rng(0)
    inner = rng.uniform(-0.005, 0.005, (12, 3))
    k = np.arange(4000) + 0.5
    phi = np.arccos(1 - 2 * k / 4000)
    th = math.pi * (1 + 5 ** 0.5) * k
    shell = 0.04 * np.column_stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)])
    obs = obs_from({0: inner, 1: shell})
    with pytest.raises(UnreachableError, match="object unreachable"):
        select_grasp(obs, 0, UP)


def test_select_grasp_deterministic():
    obs = observe(stack((0, 0, 0.04, 0.04, 0.02), (0.01, 0, 0.03, 0.02, 0.02)))
    a, b = select_grasp(obs, 0, UP, seed=4), select_grasp(obs, 0, UP, seed=4)
    np.testing.assert_array_equal(a.grasp_point, b.grasp_point)
    np.testing.assert_array_equal(a.grasp.orientation, b.grasp.orientation)


def test_dump_is_canonical():
    obs = observe(stack((0, 0, 0.04, 0.04, 0.02), (0.01, 0, 0.03, 0.02, 0.02)))
    assert dump_affordance(obs) == dump_affordance(obs)
    assert dump_affordance(obs).startswith('{"format":"cluttersolve.affordance"')


pts_strategy = arrays(np.float64, (6, 3), elements=st.floats(-0.03, 0.03))


@settings(max_examples=60, deadline=None)
@given(pts_strategy, arrays(np.float64, (5, 3), elements=st.floats(-0.08, 0.08)),
       arrays(np.float64, 3, elements=st.floats(-0.06, 0.06)))
def test_inserting_neighbour_never_raises_score(own, others, extra):
    before = affordance_scores(obs_from({0: own, 1: others}), 0)
    after = affordance_scores(obs_from({0: own, 1: np.vstack([others, extra])}), 0)
    assert np.all(after <= before + 1e-15)
    assert np.all((after >= -1.0) & (after <= 1.0))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, 3, elements=st.floats(-0.05, 0.05)),
       arrays(np.float64, 3, elements=st.floats(-1, 1)).filter(lambda v: np.linalg.norm(v) > 0.1),
       arrays(np.float64, (20, 3), elements=st.floats(-0.15, 0.15)))
def test_corridor_matches_brute_force(p, a, others):
    a = a / np.linalg.norm(a)
    assert corridor_clear(p, a, others, CFG.g_r, CFG.g_l) == brute_corridor_clear(p, a, others, CFG.g_r, CFG.g_l)
