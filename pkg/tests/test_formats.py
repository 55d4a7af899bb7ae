import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from egoctl import tensorfile
from egoctl.config import ConfigError, PipelineConfig, config_from_dict, config_to_dict, load_config, with_overrides
from egoctl.geometry import CameraIntrinsics
from egoctl.tensorfile import TensorFileError
from egoctl.tracking import Hand
from egoctl.trajectory import JointTrajectory, TrajectoryError, read_jsonl, write_jsonl

K = CameraIntrinsics(500, 500, 320, 240, 640, 480)


class TestTensorFile:
    @given(arrays(np.float32, array_shapes(min_dims=0, max_dims=4, max_side=5), elements=st.floats(width=32, allow_nan=True)))
    @settings(max_examples=200, deadline=None)
    def test_round_trip_bit_exact(self, a):
        b = tensorfile.decode(tensorfile.encode(a))
        assert b.shape == a.shape and b.dtype == np.float32
        assert b.tobytes() == np.ascontiguousarray(a).tobytes()

    def test_layout(self):
        blob = tensorfile.encode(np.arange(6, dtype=np.float32).reshape(2, 3))
        assert blob[:4] == b"EGOC"
        assert struct.unpack("<HHI", blob[4:12]) == (1, 1, 2)
        assert struct.unpack("<2Q", blob[12:28]) == (2, 3)
        assert len(blob) == 28 + 24 + 4

    def test_zero_sized(self):
        assert tensorfile.decode(tensorfile.encode(np.zeros((0, 4), np.float32))).shape == (0, 4)

    def test_every_single_bit_flip_detected(self, rng):
        blob = bytearray(tensorfile.encode(rng.normal(size=(3, 4, 5))))
        for _ in range(100):
            bad = bytearray(blob)
            pos = int(rng.integers(len(bad) * 8))
            bad[pos // 8] ^= 1 << (pos % 8)
            with pytest.raises(TensorFileError):
                tensorfile.decode(bytes(bad))

    def test_rejections(self):
        with pytest.raises(TensorFileError, match="short"):
            tensorfile.decode(b"EGOC")
        import zlib

        def seal(body):
            return body + struct.pack("<I", zlib.crc32(body))

        good = tensorfile.encode(np.zeros(2, np.float32))[:-4]
        with pytest.raises(TensorFileError, match="magic"):
            tensorfile.decode(seal(b"XXXX" + good[4:]))
        with pytest.raises(TensorFileError, match="version"):
            tensorfile.decode(seal(good[:4] + struct.pack("<H", 9) + good[6:]))
        with pytest.raises(TensorFileError, match="dtype"):
            tensorfile.decode(seal(good[:6] + struct.pack("<H", 2) + good[8:]))
        with pytest.raises(TensorFileError, match="payload"):
            tensorfile.decode(seal(good + b"\0\0\0\0"))

    def test_file_io(self, tmp_path, rng):
        a = rng.normal(size=(2, 3)).astype(np.float32)
        assert tensorfile.write(tmp_path / "a.egoc", a) == (2, 3)
        np.testing.assert_array_equal(tensorfile.read(tmp_path / "a.egoc"), a)


def make_traj(rng, frames=4):
    hands = [Hand.LEFT] * 3 + [Hand.RIGHT] * 2
    pos = rng.normal(0, 0.1, (frames, 5, 3)) + [0, 0, 0.5]
    valid = rng.random((frames, 5)) > 0.2
    return JointTrajectory(pos, valid, hands, [0, 4, 8, 0, 4], 30.0, K, meta={"src": "test"})


class TestTrajectory:
    def test_round_trip(self, rng, tmp_path):
        t = make_traj(rng)
        t.write(tmp_path / "t.jsonl")
        u = JointTrajectory.read(tmp_path / "t.jsonl")
        np.testing.assert_array_equal(u.positions, t.positions)
        np.testing.assert_array_equal(u.valid, t.valid)
        assert u.handedness == t.handedness and u.semantic_id == t.semantic_id
        assert u.intrinsics == K and u.meta == {"src": "test"}
        assert (tmp_path / "t.jsonl").read_text() == "\n".join(u.to_lines()) + "\n"

    def test_identity_indices(self, rng):
        assert make_traj(rng).identity_indices().tolist() == [0, 4, 8, 21, 25]

    def test_slice_inclusive(self, rng):
        s = make_traj(rng, 10).slice(2, 5)
        assert s.n_frames == 4 and s.frame_ids.tolist() == [2, 3, 4, 5]

    def test_validation(self, rng):
        pos = np.zeros((2, 2, 3))
        with pytest.raises(TrajectoryError):
            JointTrajectory(pos, np.ones((2, 3), bool), ["Left", "Left"], [0, 1], 30, K)
        with pytest.raises(TrajectoryError, match="unique"):
            JointTrajectory(pos, np.ones((2, 2), bool), ["Left", "Left"], [0, 0], 30, K)
        with pytest.raises(TrajectoryError, match="limit"):
            JointTrajectory(np.zeros((1, 43, 3)), np.ones((1, 43), bool), ["Left"] * 43, list(range(43)), 30, K)
        bad = pos.copy()
        bad[0, 0, 0] = np.nan
        with pytest.raises(TrajectoryError, match="finite"):
            JointTrajectory(bad, np.ones((2, 2), bool), ["Left", "Right"], [0, 0], 30, K)
        JointTrajectory(bad, np.array([[False, True], [True, True]]), ["Left", "Right"], [0, 0], 30, K)

    def test_read_errors(self, rng):
        lines = make_traj(rng).to_lines()
        with pytest.raises(TrajectoryError, match="header"):
            JointTrajectory.from_lines(lines[1:])
        swapped = [lines[0], lines[2], lines[1]]
        with pytest.raises(TrajectoryError, match="increasing"):
            JointTrajectory.from_lines(swapped)
        rec = json.loads(lines[1])
        rec["positions"] = rec["positions"][:2]
        with pytest.raises(TrajectoryError, match="joints"):
            JointTrajectory.from_lines([lines[0], json.dumps(rec)])

    def test_jsonl_helpers(self, tmp_path):
        write_jsonl(tmp_path / "x.jsonl", [{"b": 1, "a": 2}, {"c": [1]}])
        assert (tmp_path / "x.jsonl").read_text() == '{"a": 2, "b": 1}\n{"c": [1]}\n'
        assert read_jsonl(tmp_path / "x.jsonl") == [{"a": 2, "b": 1}, {"c": [1]}]
        (tmp_path / "bad.jsonl").write_text('{"a": 1}\n{oops\n')
        with pytest.raises(ValueError, match=":2:"):
            read_jsonl(tmp_path / "bad.jsonl")


class TestConfig:
    def test_defaults(self):
        cfg = load_config()
        assert cfg == PipelineConfig()
        d = config_to_dict(cfg)
        assert d["clip"]["thresholds"] == [8, 4, 2, 0]
        assert d["mask"]["rate"] == 0.05
        assert config_from_dict(d) == cfg

    def test_partial_and_unknown(self, tmp_path):
        cfg = config_from_dict({"mask": {"rate": 0.1}})
        assert cfg.mask.rate == 0.1 and cfg.grid.scale == 8.0
        with pytest.raises(ConfigError, match="unknown"):
            config_from_dict({"mask": {"rat": 0.1}})
        with pytest.raises(ConfigError, match="unknown"):
            config_from_dict({"bogus": {}})
        with pytest.raises(ConfigError):
            config_from_dict({"metrics": {"pa_mode": "global"}})
        (tmp_path / "c.json").write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(tmp_path / "c.json")

    def test_overrides(self):
        cfg = with_overrides(PipelineConfig(), mask={"rate": 0.2, "per_frame": None})
        assert cfg.mask.rate == 0.2 and cfg.mask.per_frame is False
