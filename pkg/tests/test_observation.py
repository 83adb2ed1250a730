from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cluttersolve.fixtures import load_fixture, tower
from cluttersolve.generator import GenerationOverflow, generate_clutter
from cluttersolve.geometry import min_pair_distance
from cluttersolve.observation import (EPS_ADJ_H, V_MIN, CameraConfig, ObservationError, adjacency, observe,
                                      observe_full)
from cluttersolve.physics import execute_retrieval

from helpers import builder, stack

H = 0.01
EPS = EPS_ADJ_H * H


def test_defaults():
    assert V_MIN == 10
    assert EPS == pytest.approx(0.03)


def test_camera_validation():
    with pytest.raises(ValueError):
        CameraConfig(position=(0, 0, 1), look_at=(0, 0, 1))
    with pytest.raises(ValueError):
        CameraConfig(width=16)


def test_single_object_self_occlusion():
    obs = observe(stack((0, 0, 0.04, 0.04, 0.03)))
    r = obs.get(0).visibility_ratio
    assert 0.0 < r < 1.0


def test_visible_points_are_object_particles():
    s = load_fixture("fig3")
    obs = observe(s)
    for oid in obs.ids:
        truth = s.objects[oid].particles
        pts = obs.points(oid)
        np.testing.assert_array_equal(truth[obs.get(oid).indices], pts)


def test_hidden_envelope_appears_after_occluder_removed():
    s = load_fixture("fig3")
    obs = observe(s)
    assert 2 not in obs  # envelope behind the tall box
    s2, _ = execute_retrieval(s, 1, [0, 0, 1])
    assert 2 in observe(s2)


def test_removed_objects_never_observed():
    s = load_fixture("fig3")
    s2, _ = execute_retrieval(s, 1, [0, 0, 1])
    assert 1 not in observe(s2)
    assert 1 not in observe_full(s2)


def test_unknown_id_errors():
    obs = observe(stack((0, 0, 0.04, 0.04, 0.03)))
    with pytest.raises(ObservationError):
        adjacency(obs, 42)


def test_adjacency_touching_and_far():
    b = builder()
    b.box(0.0, 0.0, b.ground(), 0.03, 0.03, 0.02)
    b.box(0.06 + H, 0.0, b.ground(), 0.03, 0.03, 0.02)
    b.box(0.5, 0.0, b.ground(), 0.03, 0.03, 0.02)
    obs = observe_full(b.scene(b.objects[0], "row"))
    assert adjacency(obs, 0) == {1}
    assert adjacency(obs, 1) == {0}
    # third box sits more than 10 eps_adj away
    assert min_pair_distance(obs.points(1), obs.points(2)) >= 10 * EPS
    assert adjacency(obs, 2) == set()


def test_adjacency_three_box_tower():
    obs = observe_full(tower(3))
    d02 = min_pair_distance(obs.points(0), obs.points(2))
    assert d02 >= EPS  # the middle block is tall enough to separate the ends
    assert adjacency(obs, 1) >= {0, 2}
    assert 2 not in adjacency(obs, 0)


def test_observation_dump_is_canonical():
    s = load_fixture("fig3")
    assert observe(s).dumps() == observe(s).dumps()


@settings(max_examples=10, deadline=None)
@given(st.sampled_from(["desk", "kitchen", "food", "sundries"]), st.integers(3, 8), st.integers(0, 5000))
def test_observation_properties(preset, n, seed):
    try:
        s = generate_clutter(preset, n, seed)
    except GenerationOverflow:
        return
    cam = CameraConfig(width=96, height=80)
    obs = observe(s, cam)
    # a pixel ray reports one particle, so visible sets never overlap
    seen = [tuple(p) for oid in obs.ids for p in obs.points(oid)]
    assert len(seen) == len(set(seen))
    for i in obs.ids:
        for j in adjacency(obs, i):
            assert i in adjacency(obs, j)
    # removing one object never reduces what the others show
    gone = s.active_ids[seed % n]
    s2 = s.clone()
    s2.removed = s.removed | {gone}
    obs2 = observe(s2, cam)
    for oid in obs.ids:
        if oid == gone:
            continue
        assert oid in obs2
        assert obs2.get(oid).visibility_ratio >= obs.get(oid).visibility_ratio
