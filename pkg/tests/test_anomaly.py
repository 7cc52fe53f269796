import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from aiaas_monitor.anomaly import PeerAnomalyScorer, SelfAnomalyScorer, peer_anomaly_score, self_anomaly_score
from aiaas_monitor.audit import PROFILE_FIELDS, UsageProfile
from aiaas_monitor.errors import InsufficientHistory, InsufficientPeers

D = len(PROFILE_FIELDS)
FACE = PROFILE_FIELDS.index("requests_FaceDetect")


def profile(face=0.0, **others):
    v = [0.0] * D
    v[FACE] = face
    for k, x in others.items():
        v[PROFILE_FIELDS.index(k)] = x
    return UsageProfile(0, tuple(v))


def test_constant_history_identical_current_scores_zero():
    hist = [profile(50, requests_LabelDetect=7)] * 30
    assert self_anomaly_score(hist, hist[0]) == 0.0


def test_mean_10_std_2_current_30_scores_10():
    hist = [profile(8.0 if i % 2 else 12.0) for i in range(24)]
    assert np.mean([h[PROFILE_FIELDS[FACE]] for h in hist]) == 10
    assert np.std([h[PROFILE_FIELDS[FACE]] for h in hist]) == 2
    assert self_anomaly_score(hist, profile(30.0)) == pytest.approx(10.0)
    comps = SelfAnomalyScorer().fit(hist).component_scores(profile(30.0))
    assert comps[FACE] == pytest.approx(10.0)
    assert comps.max() == comps[FACE]


def test_short_history_rejected():
    with pytest.raises(InsufficientHistory):
        self_anomaly_score([profile(1)] * 3, profile(1))


def test_floor_prevents_division_by_zero():
    hist = [profile(100.0)] * 24
    # scale floors at 10 % of the mean
    assert self_anomaly_score(hist, profile(130.0)) == pytest.approx(3.0)
    # and at an absolute minimum of 1 for near-zero components
    assert self_anomaly_score([profile(0.0)] * 24, profile(2.0)) == pytest.approx(2.0)


def test_peer_identical_profiles_score_zero():
    profiles = {f"t{i}": profile(40, requests_LabelDetect=3) for i in range(12)}
    assert all(peer_anomaly_score(profiles, t) == 0.0 for t in profiles)


def test_peer_single_outlier():
    rng = np.random.default_rng(5)
    profiles = {f"t{i:02d}": profile(float(rng.normal(100, 3))) for i in range(19)}
    profiles["outlier"] = profile(1000.0)
    assert peer_anomaly_score(profiles, "outlier") > 3.0
    assert max(peer_anomaly_score(profiles, t) for t in profiles if t != "outlier") <= 3.0


def test_two_peers_rejected():
    with pytest.raises(InsufficientPeers):
        peer_anomaly_score({"a": profile(1), "b": profile(2), "c": profile(3)}, "a")


def test_estimator_protocol():
    X = np.random.default_rng(0).normal(10, 1, size=(30, 4))
    for est in (SelfAnomalyScorer(min_history=10), PeerAnomalyScorer(min_peers=10)):
        params = est.get_params()
        assert clone(est).get_params() == params
        est.fit(X)
        scores = est.score_samples(X)
        assert scores.shape == (30,)
        assert (est.predict(X) == (scores > est.z_threshold)).all()
        assert np.allclose(est.decision_function(X), scores - est.z_threshold)
        with pytest.raises(ValueError):
            est.score_samples(X[:, :2])


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(0, 1000, allow_nan=False), min_size=24, max_size=60),
    st.floats(0, 5000, allow_nan=False),
    st.floats(0.5, 20, allow_nan=False),
)
def test_self_score_is_nonnegative_and_scale_covariant(values, current, factor):
    hist = [profile(v) for v in values]
    base = self_anomaly_score(hist, profile(current), sigma_floor_min=0.0, sigma_floor_fraction=0.0)
    assert base >= 0
    scaled = self_anomaly_score(
        [profile(v * factor) for v in values], profile(current * factor),
        sigma_floor_min=0.0, sigma_floor_fraction=0.0,
    )
    if np.isfinite(base):
        assert scaled == pytest.approx(base, rel=1e-6, abs=1e-6)
    else:
        assert not np.isfinite(scaled)
