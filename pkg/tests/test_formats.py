"""File-format round trips and malformed-input handling."""

import numpy as np
import pytest

from avoharvest import formats as fmt
from avoharvest import kinematics as kin
from avoharvest import perception as pc
from avoharvest import planner as pl
from avoharvest import workspace as ws


class TestMaskInterchange:
    def roundtrip(self, tmp_path, det):
        path = tmp_path / "m.avomask"
        fmt.write_masks(path, det)
        return fmt.read_masks(path)

    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        masks = [rng.random((48, 64)) > 0.7 for _ in range(3)]
        det = pc.DetectionSet.from_masks(masks)
        out = self.roundtrip(tmp_path, det)
        assert out.count == 3 and out.width == 64 and out.height == 48
        for a, b in zip(det.masks, out.masks):
            assert np.array_equal(a, b)

    def test_empty_detections(self, tmp_path):
        det = pc.DetectionSet(masks=(), width=10, height=8)
        out = self.roundtrip(tmp_path, det)
        assert out.count == 0 and out.width == 10

    def test_all_ones_and_all_zeros(self, tmp_path):
        det = pc.DetectionSet.from_masks([
            np.ones((5, 7), dtype=bool), np.zeros((5, 7), dtype=bool)])
        out = self.roundtrip(tmp_path, det)
        assert out.masks[0].all() and not out.masks[1].any()

    def test_rle_runs_sum(self):
        mask = np.array([[1, 1, 0], [0, 1, 0]], dtype=bool)
        runs = fmt.encode_mask_rle(mask)
        assert runs[0] == 0  # leading one-run convention
        assert sum(runs) == 6
        assert np.array_equal(fmt.decode_mask_rle(runs, 3, 2), mask)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "bad.avomask"
        det = pc.DetectionSet.from_masks([np.ones((4, 4), dtype=bool)])
        fmt.write_masks(path, det)
        data = path.read_bytes()
        path.write_bytes(data[:-3])
        with pytest.raises(fmt.FormatError, match="byte"):
            fmt.read_masks(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.avomask"
        path.write_bytes(b"NOTAMASK" + b"\x00" * 16)
        with pytest.raises(fmt.FormatError, match="magic"):
            fmt.read_masks(path)


class TestDepth:
    def test_roundtrip_quantized(self, tmp_path):
        rng = np.random.default_rng(2)
        depth = rng.uniform(0.2, 2.0, (32, 40))
        depth[0, :5] = 0.0
        path = tmp_path / "d.pgm"
        fmt.write_depth(path, depth)
        out = fmt.read_depth(path)
        assert out.shape == depth.shape
        assert np.max(np.abs(out - depth)) <= fmt.DEPTH_UNIT_M / 2 + 1e-12
        assert np.all(out[0, :5] == 0.0)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "d.pgm"
        fmt.write_depth(path, np.ones((8, 8)))
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(fmt.FormatError, match="truncated"):
            fmt.read_depth(path)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "d.pgm"
        path.write_bytes(b"P2\n2 2\n65535\n0 0 0 0\n")
        with pytest.raises(fmt.FormatError, match="P5"):
            fmt.read_depth(path)


class TestEstimates:
    def make(self):
        rng = np.random.default_rng(3)
        out = []
        from scipy.spatial.transform import Rotation
        for frame in ("camera", "arm"):
            R = Rotation.random(random_state=np.random.RandomState(7)).as_matrix()
            center = rng.normal(size=3)
            out.append(pc.AvocadoEstimate(
                center=center,
                rotation=R,
                euler=Rotation.from_matrix(R).as_euler("ZYX"),
                distance=float(np.linalg.norm(center)),
                frame=frame))
        return out

    def test_roundtrip(self, tmp_path):
        ests = self.make()
        path = tmp_path / "e.txt"
        fmt.write_estimates(path, ests)
        back = fmt.read_estimates(path)
        assert len(back) == 2
        for a, b in zip(ests, back):
            assert np.array_equal(a.center, b.center)  # repr round-trips floats
            assert np.allclose(a.rotation, b.rotation, atol=1e-12)
            assert a.frame == b.frame

    def test_bad_field_count(self):
        with pytest.raises(fmt.FormatError, match="line 1"):
            fmt.parse_estimates("1 2 3 4\n")

    def test_bad_frame_tag(self):
        with pytest.raises(fmt.FormatError, match="frame"):
            fmt.parse_estimates("0 0 1 0 0 0 1 world\n")


class TestGrid:
    def test_roundtrip_and_witness_verification(self, tmp_path):
        grid = ws.WorkspaceGrid.default_empty()
        ws.sample_reachable(kin.gripper_arm(), 7, ws.ChassisBox.default(), grid)
        ws.sample_reachable(kin.fixer_arm(), 5, ws.ChassisBox.default(), grid)
        path = tmp_path / "g.avogrid"
        fmt.write_grid(path, grid)
        back = fmt.read_grid(path)
        for name in (kin.GRIPPER, kin.FIXER):
            assert np.array_equal(back.arms[name].occupied,
                                  grid.arms[name].occupied)
            assert back.arms[name].witnesses.keys() == \
                grid.arms[name].witnesses.keys()
        fmt.verify_grid_witnesses(back)

    def test_corrupted_witness_detected(self, tmp_path):
        grid = ws.WorkspaceGrid.default_empty()
        ws.sample_reachable(kin.gripper_arm(), 5, ws.ChassisBox.default(), grid)
        occ = grid.arms[kin.GRIPPER]
        k = next(iter(occ.witnesses))
        occ.witnesses[k] = occ.witnesses[k] + 0.4  # now lands elsewhere
        with pytest.raises(fmt.FormatError, match="re-verification|limits"):
            fmt.verify_grid_witnesses(grid)

    def test_points_csv(self):
        grid = ws.WorkspaceGrid.default_empty()
        ws.sample_reachable(kin.gripper_arm(), 5, ws.ChassisBox.default(), grid)
        csv = fmt.grid_points_csv(grid)
        lines = csv.strip().splitlines()
        assert lines[0] == "arm,x_mm,y_mm,z_mm"
        assert len(lines) == 1 + int(grid.arms[kin.GRIPPER].occupied.sum())


class TestTrajectoryCsv:
    def test_roundtrip(self):
        traj = pl.JointTrajectory(
            waypoints=np.array([[0.0, 0.1, 0.2], [0.05, 0.1, 0.2]]), dt=0.05)
        text = fmt.trajectory_csv(traj)
        back = fmt.parse_trajectory_csv(text)
        assert np.array_equal(back.waypoints, traj.waypoints)
        assert back.dt == traj.dt

    def test_missing_header(self):
        with pytest.raises(fmt.FormatError, match="header"):
            fmt.parse_trajectory_csv("1,2,3\n")
