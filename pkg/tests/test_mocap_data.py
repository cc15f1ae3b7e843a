import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from erd_motion.errors import ArgumentError, ParseError, ShapeError
from erd_motion.mocap_data import (STD_FLOOR, MocapFrame, MocapSequence, NoiseSchedule,
                                   SkeletonSpec, Standardizer, corrupt, destandardize,
                                   fit_standardizer, integrate_global, load_mocap, make_windows,
                                   noise_sigma, standardize, subsample, to_relative_global,
                                   wrap_angle, write_mocap)
from erd_motion.synthetic import walking_mocap


def write_text(tmp_path, text, name="clip.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# types


def test_skeleton_tree_validation():
    sk = SkeletonSpec(["hip", "knee", "ankle"], [-1, 0, 1])
    assert sk.joint_count == 3 and sk.frame_dim == 12
    with pytest.raises(ArgumentError):
        SkeletonSpec(["a", "b"], [-1, -1])
    with pytest.raises(ArgumentError):
        SkeletonSpec(["a", "b", "c"], [-1, 2, 1])
    with pytest.raises(ArgumentError):
        SkeletonSpec(["a", "b"], [-1, 5])


def test_frame_vector_round_trip():
    v = np.arange(9.0)
    f = MocapFrame.from_vector(v)
    assert f.joint_angles.tolist() == [0, 1, 2, 3, 4, 5] and f.global_dyaw == 8.0
    assert np.array_equal(f.as_vector(), v)
    with pytest.raises(ShapeError):
        MocapFrame.from_vector(np.zeros(8))


def test_sequence_invariants():
    with pytest.raises(ArgumentError):
        MocapSequence(np.zeros((0, 6)), 25.0)
    with pytest.raises(ArgumentError):
        MocapSequence(np.zeros((2, 6)), 0.0)
    with pytest.raises(ShapeError):
        MocapSequence(np.zeros((2, 7)), 25.0, ["a", "b"])


# ---------------------------------------------------------------------------
# CSV


def test_load_known_literals(tmp_path):
    path = write_text(tmp_path, "frame_rate_hz,50\nroot,neck\n"
                      "0.1,0.2,0.3,0.4,0.5,0.6,0.01,0.0,-0.002\n"
                      "-1,-2,-3,-4,-5,-6,0.02,0.5,0.25\n")
    seq = load_mocap(path)
    assert seq.frame_rate_hz == 50.0 and seq.joint_names == ["root", "neck"]
    assert seq.frames.tolist() == [[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.01, 0.0, -0.002],
                                   [-1, -2, -3, -4, -5, -6, 0.02, 0.5, 0.25]]


def test_write_load_round_trip(tmp_path, rng):
    seq = MocapSequence(rng.normal(size=(17, 12)), 120.0, ["a", "b", "c"])
    write_mocap(seq, tmp_path / "x.csv")
    back = load_mocap(tmp_path / "x.csv")
    assert np.max(np.abs(back.frames - seq.frames)) <= 1e-12
    assert back.frame_rate_hz == 120.0 and back.joint_names == ["a", "b", "c"]


def test_wrong_column_count_names_line(tmp_path):
    path = write_text(tmp_path, "frame_rate_hz,50\nroot\n1,2,3,4,5,6\n1,2,3,4,5\n")
    with pytest.raises(ParseError) as err:
        load_mocap(path)
    assert err.value.line == 4 and ":4:" in str(err.value)


@pytest.mark.parametrize("text,line", [
    ("rate,50\nroot\n1,2,3,4,5,6\n", 1),
    ("frame_rate_hz,fast\nroot\n1,2,3,4,5,6\n", 1),
    ("frame_rate_hz,-5\nroot\n1,2,3,4,5,6\n", 1),
    ("frame_rate_hz,50\nroot\n1,2,x,4,5,6\n", 3),
    ("frame_rate_hz,50\nroot\n1,2,3,4,5,nan\n", 3),
])
def test_malformed_files(tmp_path, text, line):
    with pytest.raises(ParseError) as err:
        load_mocap(write_text(tmp_path, text))
    assert err.value.line == line


def test_empty_file_is_argument_error(tmp_path):
    with pytest.raises(ArgumentError):
        load_mocap(write_text(tmp_path, ""))


# ---------------------------------------------------------------------------
# standardization


def test_fit_two_frames():
    s = fit_standardizer([np.array([[0.0], [2.0]])])
    assert s.mean.tolist() == [1.0] and s.std.tolist() == [1.0]


def test_constant_dimension_is_floored():
    data = np.array([[1.0, 3.0], [2.0, 3.0], [3.0, 3.0]])
    s = fit_standardizer([data])
    assert s.std[1] == STD_FLOOR
    assert np.all(standardize(data, s)[:, 1] == 0.0)


def test_refit_after_standardizing(rng):
    seqs = [rng.normal(3.0, 2.0, size=(40, 5)), rng.normal(-1.0, 0.5, size=(25, 5))]
    s = fit_standardizer(seqs)
    again = fit_standardizer([standardize(x, s) for x in seqs])
    assert np.max(np.abs(again.mean)) < 1e-10
    assert np.max(np.abs(again.std - 1.0)) < 1e-10


def test_fit_needs_two_frames():
    with pytest.raises(ArgumentError):
        fit_standardizer([np.zeros((1, 3))])


def test_standardize_examples(rng):
    s = Standardizer(np.array([1.0, -2.0]), np.array([0.5, 3.0]))
    assert standardize(s.mean[None], s).tolist() == [[0.0, 0.0]]
    unit = Standardizer(np.zeros(2), np.ones(2))
    x = rng.normal(size=(4, 2))
    assert np.array_equal(standardize(x, unit), x)
    with pytest.raises(ShapeError):
        standardize(np.zeros((3, 3)), s)


def test_standardize_preserves_sequence_type():
    seq = walking_mocap(20, joints=2)
    s = fit_standardizer([seq])
    out = standardize(seq, s)
    assert isinstance(out, MocapSequence) and out.joint_names == seq.joint_names


@given(hnp.arrays(np.float64, st.tuples(st.integers(2, 20), st.integers(1, 6)),
                  elements=st.floats(-1e3, 1e3)))
def test_standardize_round_trip(x):
    s = fit_standardizer([x])
    assert np.max(np.abs(destandardize(standardize(x, s), s) - x)) < 1e-9


# ---------------------------------------------------------------------------
# global motion


def test_stationary_body_has_zero_deltas():
    traj = np.tile([1.0, -2.0, 0.7], (6, 1))
    assert not np.any(to_relative_global(traj))


def test_constant_forward_velocity():
    rate, v = 25.0, 1.5
    t = np.arange(10)
    traj = np.stack([v * t / rate, np.zeros(10), np.zeros(10)], axis=1)
    d = to_relative_global(traj)
    np.testing.assert_allclose(d[:, 0], v / rate, rtol=0, atol=1e-15)
    assert not np.any(d[:, 1:])


def test_forward_motion_in_heading_frame():
    # facing +y (yaw = pi/2) and moving +y is pure forward motion
    traj = np.array([[0.0, 0.0, np.pi / 2], [0.0, 1.0, np.pi / 2]])
    np.testing.assert_allclose(to_relative_global(traj), [[1.0, 0.0, 0.0]], atol=1e-15)


def test_single_frame_has_no_deltas():
    with pytest.raises(ArgumentError):
        to_relative_global(np.zeros((1, 3)))


@given(st.integers(2, 60), st.integers(0, 2**32 - 1))
def test_global_round_trip(n, seed):
    rng = np.random.default_rng(seed)
    traj = np.cumsum(rng.normal(scale=0.1, size=(n, 3)), axis=0)
    traj[:, 2] = wrap_angle(traj[:, 2])
    back = integrate_global(to_relative_global(traj), traj[0])
    np.testing.assert_allclose(back[:, :2], traj[:, :2], rtol=0, atol=1e-9)
    np.testing.assert_allclose(wrap_angle(back[:, 2] - traj[:, 2]), 0.0, atol=1e-9)


# ---------------------------------------------------------------------------
# subsampling


def test_subsample_identity_and_indices():
    seq = walking_mocap(10, joints=1)
    assert np.array_equal(subsample(seq, 1).frames, seq.frames)
    half = subsample(seq, 2)
    assert len(half) == 5 and half.frame_rate_hz == 25.0
    np.testing.assert_array_equal(half.joint_angles, seq.joint_angles[[0, 2, 4, 6, 8]])
    np.testing.assert_array_equal(half.frames[0], seq.frames[0])


def test_subsample_doubles_constant_straight_deltas():
    frames = np.zeros((9, 6))
    frames[1:, 3:5] = [0.2, -0.1]
    half = subsample(MocapSequence(frames, 50.0, ["a"]), 2)
    np.testing.assert_allclose(half.global_deltas[1:], [[0.4, -0.2, 0.0]] * 4, rtol=0, atol=1e-15)


@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_subsample_matches_trajectory_oracle(factor, seed):
    """Recomposed deltas equal the deltas of the subsampled absolute trajectory."""
    rng = np.random.default_rng(seed)
    frames = rng.normal(scale=0.2, size=(23, 6))
    seq = MocapSequence(frames, 60.0, ["a"])
    absolute = integrate_global(seq.global_deltas[1:])
    sub = subsample(seq, factor)
    expected = to_relative_global(absolute[::factor])
    np.testing.assert_allclose(sub.global_deltas[1:], expected, rtol=0, atol=1e-9)


def test_subsample_rejects_bad_factor():
    with pytest.raises(ArgumentError):
        subsample(walking_mocap(10), 0)


# ---------------------------------------------------------------------------
# corruption and schedule


def test_corrupt_zero_sigma_is_identity(rng):
    x = rng.normal(size=7)
    assert np.array_equal(corrupt(x, 0.0, rng), x)


def test_corrupt_statistics():
    frame = np.linspace(-1, 1, 4)
    samples = corrupt(np.tile(frame, (100_000, 1)), 0.1, np.random.default_rng(7))
    std = samples.std(axis=0)
    assert np.all(np.abs(std - 0.1) < 0.003)
    assert np.all(np.abs(samples.mean(axis=0) - frame) < 0.003)


def test_corrupt_is_seeded():
    x = np.zeros(5)
    a = corrupt(x, 0.3, np.random.default_rng(3))
    b = corrupt(x, 0.3, np.random.default_rng(3))
    assert np.array_equal(a, b)
    with pytest.raises(ArgumentError):
        corrupt(x, -0.1, np.random.default_rng(3))


def test_noise_schedule_examples():
    s = NoiseSchedule(0.1, 0.5)
    assert noise_sigma(s, 0, 100) == 0.0
    assert noise_sigma(s, 25, 100) == pytest.approx(0.05, abs=1e-15)
    assert noise_sigma(s, 50, 100) == 0.1 and noise_sigma(s, 99, 100) == 0.1
    with pytest.raises(ArgumentError):
        noise_sigma(s, 100, 100)
    with pytest.raises(ArgumentError):
        NoiseSchedule(-1.0)


@given(st.floats(0, 2), st.floats(0.01, 1), st.integers(1, 300))
def test_noise_schedule_nondecreasing(sigma_max, ramp, total):
    s = NoiseSchedule(sigma_max, ramp)
    values = [noise_sigma(s, e, total) for e in range(total)]
    assert values[0] == 0.0
    assert all(b >= a for a, b in zip(values, values[1:]))
    assert max(values) <= sigma_max


# ---------------------------------------------------------------------------
# windows


def test_windows_examples():
    x = np.arange(5.0)[:, None]
    w = make_windows(x, 2, 2)
    assert [int(a[0, 0]) for a, _ in w] == [0, 2]
    for a, b in w:
        np.testing.assert_array_equal(b, a + 1)


@given(st.integers(2, 40), st.integers(1, 10))
def test_window_count(n, L):
    x = np.arange(float(n))[:, None]
    if n < L + 1:
        with pytest.raises(ArgumentError):
            make_windows(x, L, 1)
    else:
        assert len(make_windows(x, L, 1)) == n - L
