import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from m3dskin.apps import (
    Gait,
    GaitLayout,
    GraspDecision,
    LayoutError,
    Session,
    TimeSeriesFrame,
    TooShort,
    Zone,
    channel_activity,
    classify_gait,
    default_hand_zones,
    default_sole_layout,
    dominant_period,
    localize_grasp,
    noise_variance,
    read_session_csv,
    synthetic_gait,
    synthetic_grasp,
    write_session_csv,
)

RATE = 50.0


def session(*columns, rate=RATE):
    n = len(columns[0])
    return Session(np.arange(n) / rate, np.column_stack(columns))


def sine(freq=1.0, seconds=10.0, noise=0.05, seed=0, rate=RATE):
    t = np.arange(int(seconds * rate) + 1) / rate
    rng = np.random.default_rng(seed)
    return np.sin(2 * np.pi * freq * t) + rng.normal(0, noise, t.size)


# --- activity -------------------------------------------------------------

def test_constant_channel_inactive():
    act = channel_activity(session(np.full(501, 512.0)), 0)
    assert not act.active and act.period is None


def test_sine_is_active_with_period():
    act = channel_activity(session(sine()), 0)
    assert act.active
    assert act.period == pytest.approx(1.0, abs=0.1)


@pytest.mark.parametrize("freq", [0.5, 0.8, 1.25, 2.0])
def test_period_tracks_frequency(freq):
    assert dominant_period(sine(freq, seconds=12.0), RATE) == pytest.approx(1.0 / freq, rel=0.05)


def test_white_noise_is_inactive():
    x = np.random.default_rng(4).normal(0, 3.0, 501)
    act = channel_activity(session(x), 0)
    assert not act.active


def test_noise_estimate_ignores_smooth_signal():
    rng = np.random.default_rng(1)
    noise = rng.normal(0, 0.1, 2001)
    t = np.arange(2001) / RATE
    est = noise_variance(5 * np.sin(2 * np.pi * 0.7 * t) + noise)
    assert est == pytest.approx(0.01, rel=0.2)


def test_too_short():
    with pytest.raises(TooShort):
        channel_activity(session(sine(seconds=2.0)), 0)
    with pytest.raises(TooShort):
        channel_activity(session(sine(seconds=10.0, rate=5.0), rate=5.0), 0)


# --- gait -----------------------------------------------------------------

@pytest.mark.parametrize("kind", list(Gait))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_synthetic_gait_classified(kind, seed):
    report = classify_gait(synthetic_gait(kind, seed=seed), default_sole_layout())
    assert report.label is kind
    assert not report.tie_rule


def test_stairs_report_marks_heels_inactive():
    report = classify_gait(synthetic_gait(Gait.STAIRS, seed=3), default_sole_layout())
    active = {a.channel: a.active for a in report.channels}
    assert not active[4] and not active[5]
    assert all(active[c] for c in range(4))


def test_tie_rule():
    walk = synthetic_gait(Gait.WALKING, seed=5)
    data = walk.data.copy()
    data[:, 1] = data[0, 1]  # one forefoot tile goes quiet, heels still active
    report = classify_gait(Session(walk.t, data), default_sole_layout())
    assert report.label is Gait.WALKING and report.tie_rule
    data[:, 4] = data[0, 4]
    data[:, 5] = data[0, 5]
    report = classify_gait(Session(walk.t, data), default_sole_layout())
    assert report.label is Gait.STAIRS and report.tie_rule


@settings(max_examples=15, deadline=None)
@given(
    kind=st.sampled_from(list(Gait)),
    scales=st.lists(st.floats(0.01, 100.0), min_size=6, max_size=6),
    offsets=st.lists(st.floats(-1e4, 1e4), min_size=6, max_size=6),
)
def test_affine_invariance(kind, scales, offsets):
    s = synthetic_gait(kind, seed=11)
    scaled = Session(s.t, s.data * np.array(scales) + np.array(offsets))
    layout = default_sole_layout()
    a, b = classify_gait(s, layout), classify_gait(scaled, layout)
    assert a.label is b.label
    assert [x.active for x in a.channels] == [x.active for x in b.channels]


def test_layout_without_heel():
    layout = GaitLayout({i: "toe" for i in range(6)})
    with pytest.raises(LayoutError):
        classify_gait(synthetic_gait(Gait.WALKING, seed=0), layout)


def test_layout_dict_round_trip():
    layout = default_sole_layout()
    assert GaitLayout.from_dict(layout.to_dict()) == layout
    assert layout.heel_channels == [4, 5]


# --- grasp ----------------------------------------------------------------

def test_grasp_examples():
    zones = default_hand_zones()
    for tile, expected in ((2, GraspDecision.FINGERTIP), (4, GraspDecision.DEEP)):
        before, after = synthetic_grasp(tile, seed=0)
        assert localize_grasp(before, after, 500.0, zones) is expected
    before = {1: 3000.0, 2: 6000.0, 3: 6000.0, 4: 3000.0}
    assert localize_grasp(before, dict(before), 500.0, zones) is GraspDecision.NONE


@pytest.mark.parametrize("delta", [1000.0, 1500.0, 2000.0])
@pytest.mark.parametrize("seed", range(5))
def test_grasp_fixture_suite(delta, seed):
    zones = default_hand_zones()
    for tile in (1, 2, 3, 4):
        before, after = synthetic_grasp(tile, seed=seed, delta_ohm=delta)
        assert localize_grasp(before, after, 500.0, zones).value == zones[tile].value


def test_grasp_tie_is_ambiguous():
    zones = default_hand_zones()
    before = [3000.0, 6000.0, 6000.0, 3000.0]
    after = [3000.0, 4500.0, 6000.0, 1540.0]  # 1500 vs 1460: within 5 %
    assert localize_grasp(before, after, 500.0, zones) is GraspDecision.AMBIGUOUS
    after = [3000.0, 4500.0, 6000.0, 3000.0 - 1300.0]
    assert localize_grasp(before, after, 500.0, zones) is GraspDecision.FINGERTIP


@settings(max_examples=50)
@given(offset=st.floats(-1e5, 1e5), tile=st.sampled_from([1, 2, 3, 4, None]), seed=st.integers(0, 100))
def test_grasp_offset_invariance(offset, tile, seed):
    zones = default_hand_zones()
    before, after = synthetic_grasp(tile, seed=seed)
    shifted_b = {k: v + offset for k, v in before.items()}
    shifted_a = {k: v + offset for k, v in after.items()}
    assert localize_grasp(before, after, 500.0, zones) is localize_grasp(shifted_b, shifted_a, 500.0, zones)


def test_grasp_errors():
    zones = default_hand_zones()
    with pytest.raises(ValueError):
        localize_grasp([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0], 500.0, zones)
    with pytest.raises(ValueError):
        localize_grasp([1.0] * 4, [1.0] * 4, 0.0, zones)
    assert zones[2] is Zone.FINGERTIP and zones[4] is Zone.DEEP


# --- sessions -------------------------------------------------------------

def test_session_csv_round_trip(tmp_path):
    s = synthetic_gait(Gait.STAIRS, seed=2)
    path = tmp_path / "session.csv"
    write_session_csv(s, path)
    assert path.read_text().splitlines()[0] == "t_s,ch0,ch1,ch2,ch3,ch4,ch5"
    again = read_session_csv(path)
    assert np.allclose(again.t, s.t) and np.array_equal(again.data, s.data)


def test_session_invariants():
    with pytest.raises(ValueError):
        Session(np.array([0.0, 0.0, 1.0]), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        Session.from_frames([TimeSeriesFrame(0.0, (1.0, 2.0)), TimeSeriesFrame(0.1, (1.0,))])
    frames = [TimeSeriesFrame(i / 10, (float(i), 0.0)) for i in range(5)]
    assert Session.from_frames(frames).frames() == frames
