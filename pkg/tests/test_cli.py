"""CLI and configuration tests."""

import numpy as np
import pytest

from avoharvest import cli
from avoharvest import config as cfg
from avoharvest import formats as fmt
from avoharvest import kinematics as kin

FAST_PLANNER = """
[planner]
workspace_steps_gripper = 25
workspace_steps_fixer = 17
"""


def write_scenario(tmp_path, body="", name="scenario.ini"):
    path = tmp_path / name
    path.write_text("[scenario]\nschema_version = 1\n" + body + FAST_PLANNER)
    return str(path)


def run(args):
    return cli.main(args)


class TestConfig:
    def test_defaults_load(self):
        scenario = cfg.load_scenario()
        assert scenario.dt == 0.05
        assert scenario.gripper_arm.dof == 3
        assert scenario.fixer_arm.dof == 4

    def test_default_arms_match_stock_models(self):
        cp = cfg.read_config()
        for name, stock in ((kin.GRIPPER, kin.gripper_arm()),
                            (kin.FIXER, kin.fixer_arm())):
            arm = cfg.load_arm(cp, name)
            assert arm.base_offset_z == stock.base_offset_z
            for a, b in zip(arm.rows, stock.rows):
                assert a == b

    def test_arm_save_load_roundtrip(self):
        cp = cfg._parser()
        save_arm = cfg.save_arm
        save_arm(cp, kin.gripper_arm())
        arm = cfg.load_arm(cp, kin.GRIPPER)
        assert arm.rows == kin.gripper_arm().rows
        assert arm.base_offset_z == kin.gripper_arm().base_offset_z

    def test_override_merges(self, tmp_path):
        path = write_scenario(tmp_path, "[sim]\nfixer_enabled = false\n")
        scenario = cfg.load_scenario(path)
        assert scenario.fixer_enabled is False
        assert scenario.repositioning_enabled is True  # untouched default

    def test_missing_file(self):
        with pytest.raises(cfg.ConfigError):
            cfg.load_scenario("/nonexistent/path.ini")

    def test_bad_schema_version(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[scenario]\nschema_version = 99\n")
        with pytest.raises(cfg.ConfigError, match="schema_version"):
            cfg.load_scenario(str(path))

    def test_bad_vector(self, tmp_path):
        path = write_scenario(tmp_path, "[world]\navocado_center_mm = 1 2\n")
        with pytest.raises(cfg.ConfigError, match="avocado_center_mm"):
            cfg.load_scenario(path)


class TestFkIkCommands:
    def test_fk_gripper_zero(self, capsys):
        assert run(["fk", "gripper", "0", "0", "0"]) == 0
        out = capsys.readouterr().out
        assert "453.000 15.975 116.760" in out

    def test_fk_fixer_zero(self, capsys):
        assert run(["fk", "fixer", "0", "0", "0", "0"]) == 0
        out = capsys.readouterr().out
        assert "455.000 0.000 -116.760" in out

    def test_fk_bad_arity(self, capsys):
        assert run(["fk", "gripper", "0", "0"]) != 0

    def test_ik_round_trip(self, capsys):
        assert run(["ik", "gripper", "350", "50", "100"]) == 0
        out = capsys.readouterr().out
        joints = [float(x) for x in out.splitlines()[0].split(":")[1].split()]
        pos = kin.fk_gripper(joints).position
        assert np.allclose(pos, [350, 50, 100], atol=1.0)

    def test_ik_unreachable(self, capsys):
        assert run(["ik", "gripper", "700", "0", "0"]) == cli.EXIT_PLAN


class TestWorkspaceCommand:
    def test_writes_grid_and_csv(self, tmp_path, capsys):
        code = run(["--out", str(tmp_path), "workspace", "--steps", "7"])
        assert code == 0
        grid = fmt.read_grid(tmp_path / "workspace.avogrid")
        assert set(grid.arms) == {"gripper", "fixer"}
        fmt.verify_grid_witnesses(grid)
        csv = (tmp_path / "workspace_points.csv").read_text()
        assert csv.splitlines()[0] == "arm,x_mm,y_mm,z_mm"
        out = capsys.readouterr().out
        assert "voxel_size_mm=20.0" in out

    def test_deterministic_output(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(["--out", str(a), "workspace", "--steps", "5"]) == 0
        assert run(["--out", str(b), "workspace", "--steps", "5"]) == 0
        assert (a / "workspace.avogrid").read_bytes() == \
            (b / "workspace.avogrid").read_bytes()
        assert (a / "workspace_points.csv").read_text() == \
            (b / "workspace_points.csv").read_text()


class TestRenderPerceive:
    def test_render_then_perceive(self, tmp_path, capsys):
        scenario = write_scenario(tmp_path)
        out = tmp_path / "out"
        assert run(["--config", scenario, "--out", str(out), "render"]) == 0
        capsys.readouterr()
        assert run(["--config", scenario, "--out", str(out), "perceive",
                    str(out / "masks.avomask"), str(out / "depth.pgm")]) == 0
        text = capsys.readouterr().out
        records = fmt.parse_estimates(text)
        assert len(records) == 1
        assert records[0].frame == "arm"
        # depth quantization to mm keeps the closed loop within tolerance
        scn = cfg.load_scenario(scenario)
        err = np.linalg.norm(records[0].center * 1000.0
                             - scn.world.avocado_center)
        assert err <= 10.0

    def test_perceive_empty_masks(self, tmp_path, capsys):
        det_path = tmp_path / "empty.avomask"
        from avoharvest import perception as pc
        fmt.write_masks(det_path, pc.DetectionSet(masks=(), width=848, height=480))
        depth_path = tmp_path / "d.pgm"
        fmt.write_depth(depth_path, np.zeros((480, 848)))
        assert run(["--out", str(tmp_path), "perceive", str(det_path),
                    str(depth_path)]) == 0
        out = capsys.readouterr().out
        assert fmt.parse_estimates(out) == []

    def test_perceive_truncated_depth(self, tmp_path, capsys):
        det_path = tmp_path / "m.avomask"
        from avoharvest import perception as pc
        fmt.write_masks(det_path, pc.DetectionSet(masks=(), width=8, height=8))
        depth_path = tmp_path / "d.pgm"
        fmt.write_depth(depth_path, np.ones((8, 8)))
        depth_path.write_bytes(depth_path.read_bytes()[:-5])
        assert run(["--out", str(tmp_path), "perceive", str(det_path),
                    str(depth_path)]) == cli.EXIT_LOAD

    def test_missing_mask_file(self, tmp_path):
        depth_path = tmp_path / "d.pgm"
        fmt.write_depth(depth_path, np.ones((8, 8)))
        assert run(["--out", str(tmp_path), "perceive",
                    str(tmp_path / "nope.avomask"),
                    str(depth_path)]) == cli.EXIT_LOAD


class TestHarvestCommand:
    def test_nominal_success_exit_zero(self, tmp_path, capsys):
        scenario = write_scenario(tmp_path)
        out = tmp_path / "out"
        assert run(["--config", scenario, "--out", str(out), "harvest"]) == 0
        report = (out / "report.txt").read_text()
        assert "outcome: success" in report
        timeline = (out / "timeline.csv").read_text()
        assert timeline.splitlines()[0] == "phase,enter_time_s"
        assert "Done" in timeline

    def test_fixer_off_windup_exit_code(self, tmp_path, capsys):
        body = ("[sim]\nfixer_enabled = false\n"
                "[world]\nelasticity_windup_rad = 2.0943951023931953\n")
        scenario = write_scenario(tmp_path, body)
        out = tmp_path / "out"
        code = run(["--config", scenario, "--out", str(out), "harvest"])
        assert code == cli.EXIT_GRIPPER
        assert "outcome: gripper_fail" in (out / "report.txt").read_text()

    def test_byte_identical_reports(self, tmp_path, capsys):
        scenario = write_scenario(tmp_path, "peduncle_noise_mm = 6.0\nseed = 9\n")
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(["--config", scenario, "--out", str(a), "harvest"]) == 0
        assert run(["--config", scenario, "--out", str(b), "harvest"]) == 0
        assert (a / "report.txt").read_bytes() == (b / "report.txt").read_bytes()
        assert (a / "timeline.csv").read_bytes() == (b / "timeline.csv").read_bytes()

    def test_missing_scenario_file(self, tmp_path, capsys):
        assert run(["--config", str(tmp_path / "nope.ini"), "harvest"]) == \
            cli.EXIT_LOAD


class TestPlanCommand:
    def test_trajectories_written(self, tmp_path, capsys):
        scenario = write_scenario(tmp_path)
        out = tmp_path / "out"
        assert run(["--config", scenario, "--out", str(out), "plan"]) == 0
        traj = fmt.parse_trajectory_csv((out / "traj_fixer.csv").read_text())
        assert traj.waypoints.shape[1] == 4
        steps = np.abs(np.diff(traj.waypoints, axis=0))
        assert steps.max() <= 0.05 + 1e-12
