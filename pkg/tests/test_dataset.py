"""Data model invariants and file-format round-trips."""

import numpy as np
import pytest

from toposlam.dataset import (
    Frame,
    LoopPair,
    Pose2,
    Traversal,
    read_descriptors,
    read_loop_pairs,
    read_poses,
    write_descriptors,
    write_loop_pairs,
    write_poses,
)
from toposlam.errors import (
    CanonicalizationError,
    DataCorruptionError,
    DataFormatError,
    EmptyDataError,
    OrderingError,
)


# --- types ---


def test_pose2_wraps_theta_on_construction():
    p = Pose2(1.0, 2.0, 3.5)
    assert p.theta == pytest.approx(3.5 - 2 * np.pi)
    assert np.allclose(Pose2.from_array([1, 2, 0.5]).to_array(), [1, 2, 0.5])
    assert np.allclose(p.position, [1.0, 2.0])


def test_frame_rejects_bad_descriptor():
    with pytest.raises(ValueError):
        Frame(0, None, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        Frame(-1, None, np.ones(3))


def test_traversal_invariants():
    frames = [Frame(k, Pose2(k, 0, 0), np.ones(4)) for k in range(3)]
    t = Traversal(frames)
    assert len(t) == 3 and t.d_g == 4
    assert t.descriptor_matrix().shape == (3, 4)
    assert t.pose_array().shape == (3, 3)
    with pytest.raises(EmptyDataError):
        Traversal([])
    mixed = [Frame(0, None, np.ones(4)), Frame(1, None, np.ones(5))]
    with pytest.raises(ValueError):
        Traversal(mixed)
    gap = [Frame(0, None, np.ones(4)), Frame(2, None, np.ones(4))]
    with pytest.raises(OrderingError):
        Traversal(gap)


def test_traversal_without_poses():
    t = Traversal.from_arrays(np.ones((2, 3)))
    assert not t.has_poses
    with pytest.raises(ValueError):
        t.poses()


def test_loop_pair_canonical_ordering():
    with pytest.raises(CanonicalizationError):
        LoopPair(5, 5)
    with pytest.raises(CanonicalizationError):
        LoopPair(7, 3)
    p = LoopPair.canonical(9, 4, 0.5)
    assert (p.i, p.j, p.score) == (4, 9, 0.5)
    assert p.key == (4, 9)
    with pytest.raises(CanonicalizationError):
        LoopPair.canonical(2, 2)


# --- descriptor binary format ---


def test_descriptor_example_payload(tmp_path):
    path = tmp_path / "d.tdsc"
    write_descriptors(np.array([[1, 0, 0], [0, 1, 0]], dtype=np.float32), path)
    out = read_descriptors(path)
    assert out.shape == (2, 3)
    assert np.array_equal(out, [[1, 0, 0], [0, 1, 0]])
    # size contract: 16-byte header + 4 bytes per float
    assert path.stat().st_size == 16 + 4 * 2 * 3


def test_descriptor_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    mat = rng.standard_normal((17, 9)).astype(np.float32)
    path = tmp_path / "d.tdsc"
    write_descriptors(mat, path)
    out = read_descriptors(path)
    assert out.dtype == np.float32
    assert out.tobytes() == mat.tobytes()


def test_descriptor_bad_magic(tmp_path):
    path = tmp_path / "d.tdsc"
    write_descriptors(np.ones((1, 2), dtype=np.float32), path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(DataFormatError):
        read_descriptors(path)


def test_descriptor_truncated_payload(tmp_path):
    path = tmp_path / "d.tdsc"
    write_descriptors(np.ones((2, 3), dtype=np.float32), path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-4])
    with pytest.raises(DataCorruptionError):
        read_descriptors(path)


def test_descriptor_empty_rejected(tmp_path):
    with pytest.raises(EmptyDataError):
        write_descriptors(np.zeros((0, 3), dtype=np.float32), tmp_path / "e.tdsc")


# --- pose text format ---


def test_pose_file_example(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text("0 1.0 2.0 0.0\n")
    (pose,) = read_poses(path)
    assert (pose.x, pose.y, pose.theta) == (1.0, 2.0, 0.0)


def test_pose_file_wraps_theta(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text("0 0 0 3.5\n")
    (pose,) = read_poses(path)
    assert pose.theta == pytest.approx(3.5 - 2 * np.pi)


def test_pose_file_ordering_error(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text("0 0 0 0\n2 1 1 0\n")
    with pytest.raises(OrderingError):
        read_poses(path)


def test_pose_file_parse_error(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text("0 0 zero 0\n")
    with pytest.raises(DataFormatError):
        read_poses(path)


def test_pose_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    poses = rng.uniform(-5, 5, size=(40, 3))
    path = tmp_path / "p.txt"
    write_poses(poses, path)
    out = np.stack([p.to_array() for p in read_poses(path)])
    # theta is wrapped by Pose2 before writing, so compare wrapped values
    from toposlam.se2 import wrap_angle

    expect = poses.copy()
    expect[:, 2] = wrap_angle(expect[:, 2])
    assert np.allclose(out, expect, atol=1e-9)


# --- loop pair CSV ---


def test_loop_pairs_example_line(tmp_path):
    path = tmp_path / "l.csv"
    write_loop_pairs([LoopPair(3, 17, 0.912345)], path)
    assert path.read_text() == "i,j,score\n3,17,0.912345\n"


def test_loop_pairs_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    pairs = []
    for _ in range(100):
        i = int(rng.integers(0, 500))
        j = int(rng.integers(i + 1, 502))
        score = round(float(rng.uniform(-1, 1)), 6)
        pairs.append(LoopPair(i, j, score))
    path = tmp_path / "l.csv"
    write_loop_pairs(pairs, path)
    assert read_loop_pairs(path) == pairs


def test_loop_pairs_noncanonical_rejected(tmp_path):
    path = tmp_path / "l.csv"
    path.write_text("i,j,score\n5,5,1.000000\n")
    with pytest.raises(CanonicalizationError):
        read_loop_pairs(path)


def test_loop_pairs_bad_header(tmp_path):
    path = tmp_path / "l.csv"
    path.write_text("a,b,c\n")
    with pytest.raises(DataFormatError):
        read_loop_pairs(path)
