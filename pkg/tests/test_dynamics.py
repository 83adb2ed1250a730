from __future__ import annotations

import numpy as np
import pytest

from cluttersolve.dynamics import (DEFAULT_R, GeometricPredictor, MovementPrediction, NonLocalQuery,
                                   OracleBackedPredictor, make_query)
from cluttersolve.fixtures import load_fixture
from cluttersolve.geometry import unit
from cluttersolve.observation import Observation, observe_full
from cluttersolve.physics import DEFAULT_SIM, oracle_movement, removal_movement

from helpers import builder, stack

UP = np.array([0.0, 0.0, 1.0])


def test_movement_prediction_threshold():
    assert MovementPrediction.of(0.006, 0.005).moves
    assert not MovementPrediction.of(0.005, 0.005).moves


def test_query_downsamples_to_r():
    b = builder()
    a = b.box(0.0, 0.0, b.ground(), 0.1, 0.1, 0.05)
    b.box(0.0, 0.0, b.on(a), 0.1, 0.1, 0.05)
    obs = observe_full(b.scene(a, "big"))
    assert len(obs.points(0)) >= 1000 and len(obs.points(1)) >= 1000
    q = make_query(obs, 0, 1, UP)
    assert len(q.mover_cloud) == DEFAULT_R == 256
    assert len(q.neighbor_cloud) == 256


def test_query_keeps_small_clouds():
    obs = observe_full(stack((0, 0, 0.02, 0.02, 0.01), (0, 0, 0.02, 0.02, 0.01)))
    assert len(obs.points(0)) < 256
    q = make_query(obs, 0, 1, UP)
    np.testing.assert_array_equal(q.mover_cloud.points, obs.points(0))


def test_query_refuses_non_adjacent():
    obs = observe_full(stack((0, 0, 0.03, 0.03, 0.02), ground_extra=[(0.3, 0, 0.03, 0.03, 0.02)]))
    with pytest.raises(NonLocalQuery, match="non-local query refused"):
        make_query(obs, 0, 1, UP)


def test_neighbour_resting_on_mover_moves_up():
    obs = observe_full(stack((0, 0, 0.04, 0.04, 0.02), (0, 0, 0.03, 0.03, 0.02)))
    assert GeometricPredictor().predict(make_query(obs, 0, 1, UP)).moves


def test_ground_neighbour_beside_mover_stays():
    s = stack((0, 0, 0.03, 0.03, 0.02), ground_extra=[(0.06 + 0.01, 0, 0.03, 0.03, 0.02)])
    obs = observe_full(s)
    assert not GeometricPredictor().predict(make_query(obs, 0, 1, UP)).moves


def _bridge(c):
    """Plank across two ground boxes, centred at x = c (mover is the -x box)."""
    b = builder()
    a = b.box(-0.045, 0.0, b.ground(), 0.04, 0.04, 0.02)
    o = b.box(0.045, 0.0, b.ground(), 0.04, 0.04, 0.02)
    b.box(c, 0.0, b.on(a, o), 0.05, 0.03, 0.01)
    return b.scene(a, "bridge")


def test_support_decision_flips_at_rho():
    g = GeometricPredictor(rho=0.5)
    seen = []
    for c in np.arange(-0.04, 0.0401, 0.005):
        s = _bridge(c)
        q = make_query(observe_full(s), 0, 2, UP)
        frac = g.support_fraction(q.mover_cloud.points, q.neighbor_cloud.points)
        moves = g.support(q).moves
        assert moves == (frac >= 0.5)
        seen.append((frac, moves))
    fr = [f for f, _ in seen]
    assert fr == sorted(fr, reverse=True)  # less of the plank over the mover as it slides away
    flips = sum(1 for a, b in zip(seen, seen[1:]) if a[1] != b[1])
    assert flips == 1
    # far from the boundary the oracle agrees
    for c, expect in ((-0.04, True), (0.04, False)):
        truth = removal_movement(_bridge(c), 0).get(2, 0.0) > DEFAULT_SIM.th_move
        assert truth == expect


def test_locality_other_objects_irrelevant():
    s = load_fixture("double_occlusion")
    obs = observe_full(s)
    q = make_query(obs, 0, 2, [0.2, 0.1, 0.97])
    g = GeometricPredictor()
    full = g.predict(q)
    only = Observation({k: obs.objects[k] for k in (0, 2)}, 0, obs.h)
    q2 = make_query(only, 0, 2, [0.2, 0.1, 0.97])
    assert GeometricPredictor().predict(q2) == full


def test_direction_relevance():
    # neighbour strictly above, no lateral contact
    obs = observe_full(stack((0, 0, 0.04, 0.04, 0.02), (0, 0, 0.03, 0.03, 0.02)))
    g = GeometricPredictor()
    q = make_query(obs, 0, 1, UP)
    assert g.predict(q).moves
    # straight down, away from the neighbour: the swept hulls never meet
    assert np.all(np.isinf(g.sweep_distance(q, np.array([[0.0, 0.0, -1.0]]))))


def test_oracle_predictor_matches_oracle_exactly():
    s = load_fixture("fig3")
    obs = observe_full(s)
    p = OracleBackedPredictor(s)
    for d in (UP, unit([0.3, 0.0, 0.954])):
        truth = oracle_movement(s, 0, d)
        for j in (1, 2):
            got = p.predict(make_query(obs, 0, j, d))
            assert got.magnitude == truth[j]
            assert got.moves == (truth[j] > DEFAULT_SIM.th_move)


def test_oracle_predictor_needs_scene():
    obs = observe_full(stack((0, 0, 0.04, 0.04, 0.02), (0, 0, 0.03, 0.03, 0.02)))
    with pytest.raises(RuntimeError):
        OracleBackedPredictor().predict(make_query(obs, 0, 1, UP))


def test_magnitudes_vectorised_equals_single():
    s = load_fixture("double_occlusion")
    obs = observe_full(s)
    g = GeometricPredictor()
    dirs = np.array([[0, 0, 1.0], [0.5, 0, 0.866], [0, -0.5, 0.866]])
    q = make_query(obs, 0, 1, dirs[0])
    many = g.magnitudes(q, dirs)
    for k, d in enumerate(dirs):
        assert GeometricPredictor().predict(make_query(obs, 0, 1, d)).magnitude == pytest.approx(many[k])
