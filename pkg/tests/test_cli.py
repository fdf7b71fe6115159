import numpy as np
import pytest

from sriodom.cli import RunManifest, build_config, main, run_odometry
from sriodom.geom import Pose
from sriodom.io import read_kitti_poses, write_kitti_poses, write_velodyne_bin
from sriodom.odom import FeatureGroupMode

from _scene import beam_directions, raycast, street_world


SNAPSHOT_CONFIG = (
    "sri.n_beams = 32\n"
    "sri.fov_min_deg = -25\n"
    "sri.fov_max_deg = 3\n"
    "sri.width = 360\n"
    "odom.undistort = false\n"
)


def synth_frame(pose=None) -> np.ndarray:
    world = street_world()
    # Ray azimuths deliberately off the image-column grid (900 vs 360).
    dirs = beam_directions(32, 900, np.radians(-25.0), np.radians(3.0))
    return raycast(world, pose or Pose.identity(), dirs)


@pytest.fixture(scope="module")
def frame_cloud():
    pose = Pose(rotation=np.eye(3), translation=np.array([-30.0, -25.0, 3.0]))
    return synth_frame(pose)


def write_config(tmp_path, text=SNAPSHOT_CONFIG):
    path = tmp_path / "pipeline.cfg"
    path.write_text(text)
    return str(path)


class TestRun:
    def test_empty_directory(self, tmp_path, capsys):
        (tmp_path / "frames").mkdir()
        out = tmp_path / "out"
        code = main(
            ["run", "--input", str(tmp_path / "frames"), "--output", str(out)]
        )
        assert code == 0
        assert (out / "trajectory.txt").read_text() == ""
        assert "no frames" in capsys.readouterr().err

    def test_three_identical_frames_near_identity(self, tmp_path, frame_cloud):
        frames = tmp_path / "frames"
        frames.mkdir()
        for k in range(3):
            write_velodyne_bin(frames / f"{k:06d}.bin", frame_cloud)
        out = tmp_path / "out"
        manifest = RunManifest(
            input_dir=str(frames),
            output_dir=str(out),
            config_path=write_config(tmp_path),
        )
        trajectory, timings = run_odometry(manifest)
        assert len(trajectory) == 3
        assert len(timings) == 3
        for pose in trajectory:
            assert np.linalg.norm(pose.translation) < 1e-3
        written = read_kitti_poses(out / "trajectory.txt")
        assert len(written) == 3

    def test_first_pose_is_identity(self, tmp_path, frame_cloud):
        frames = tmp_path / "frames"
        frames.mkdir()
        write_velodyne_bin(frames / "000000.bin", frame_cloud)
        manifest = RunManifest(
            input_dir=str(frames),
            output_dir=str(tmp_path / "out"),
            config_path=write_config(tmp_path),
        )
        trajectory, _ = run_odometry(manifest)
        np.testing.assert_allclose(trajectory[0].matrix(), np.eye(4))

    def test_malformed_frame_skipped(self, tmp_path, frame_cloud, capsys):
        frames = tmp_path / "frames"
        frames.mkdir()
        write_velodyne_bin(frames / "000000.bin", frame_cloud)
        (frames / "000001.bin").write_bytes(b"\x01" * 17)  # corrupt
        write_velodyne_bin(frames / "000002.bin", frame_cloud)
        out = tmp_path / "out"
        code = main(
            [
                "run",
                "--input",
                str(frames),
                "--output",
                str(out),
                "--config",
                write_config(tmp_path),
            ]
        )
        assert code == 0
        assert len(read_kitti_poses(out / "trajectory.txt")) == 3
        assert "frame 1" in capsys.readouterr().err

    def test_deterministic_output(self, tmp_path, frame_cloud):
        frames = tmp_path / "frames"
        frames.mkdir()
        for k in range(2):
            write_velodyne_bin(frames / f"{k:06d}.bin", frame_cloud)
        cfg = write_config(tmp_path)
        texts = []
        for run in range(2):
            out = tmp_path / f"out{run}"
            main(["run", "--input", str(frames), "--output", str(out), "--config", cfg])
            texts.append((out / "trajectory.txt").read_bytes())
        assert texts[0] == texts[1]

    def test_dump_flags_write_files(self, tmp_path, frame_cloud):
        frames = tmp_path / "frames"
        frames.mkdir()
        write_velodyne_bin(frames / "000000.bin", frame_cloud)
        out = tmp_path / "out"
        code = main(
            [
                "run",
                "--input",
                str(frames),
                "--output",
                str(out),
                "--config",
                write_config(tmp_path),
                "--dump-sri",
                "--dump-features",
            ]
        )
        assert code == 0
        assert (out / "sri_000000.pgm").exists()
        assert (out / "features_000000.ply").exists()

    def test_missing_input_is_fatal(self, tmp_path):
        code = main(
            ["run", "--input", str(tmp_path / "nope"), "--output", str(tmp_path / "o")]
        )
        assert code == 1

    def test_vlp16_profile_end_to_end(self, tmp_path):
        # 16-beam frames through the frequency route with row interpolation.
        world = street_world()
        dirs = beam_directions(16, 900, np.radians(-15.0), np.radians(15.0))
        pose = Pose(rotation=np.eye(3), translation=np.array([-30.0, -25.0, 3.0]))
        cloud = raycast(world, pose, dirs)
        frames = tmp_path / "frames"
        frames.mkdir()
        for k in range(2):
            write_velodyne_bin(frames / f"{k:06d}.bin", cloud)
        cfg_path = tmp_path / "v.cfg"
        cfg_path.write_text("odom.undistort = false\n")
        manifest = RunManifest(
            input_dir=str(frames),
            output_dir=str(tmp_path / "out"),
            profile="vlp16",
            config_path=str(cfg_path),
        )
        trajectory, _ = run_odometry(manifest)
        assert len(trajectory) == 2
        assert np.linalg.norm(trajectory[1].translation) < 1e-3


class TestManifest:
    def test_profile_defaults(self):
        cfg = build_config(RunManifest(input_dir=".", output_dir="."))
        assert cfg.sri.n_beams == 64
        assert cfg.filter_path == "sobel"
        assert cfg.odom.feature_group is FeatureGroupMode.EGS
        assert cfg.sri.width == 720

    def test_vlp16_profile(self):
        cfg = build_config(
            RunManifest(input_dir=".", output_dir=".", profile="vlp16")
        )
        assert cfg.sri.n_beams == 16
        assert cfg.sri.interpolation_factor == 2
        assert cfg.filter_path == "fft"
        assert cfg.odom.feature_group is FeatureGroupMode.ES

    def test_explicit_flags_override_profile(self):
        cfg = build_config(
            RunManifest(
                input_dir=".",
                output_dir=".",
                profile="hdl64",
                resolution=1024,
                features="ES",
                filter_path="fft",
            )
        )
        assert cfg.sri.width == 1024
        assert cfg.odom.feature_group is FeatureGroupMode.ES
        assert cfg.filter_path == "fft"

    def test_config_file_overrides_profile(self, tmp_path):
        cfg_path = tmp_path / "c.cfg"
        cfg_path.write_text("sri.width = 360\n")
        cfg = build_config(
            RunManifest(
                input_dir=".", output_dir=".", config_path=str(cfg_path)
            )
        )
        assert cfg.sri.width == 360


class TestEvalCommand:
    def make_pose_files(self, tmp_path, scale=1.0):
        n = 901
        truth = [
            Pose(rotation=np.eye(3), translation=np.array([i * 1.0, 0.0, 0.0]))
            for i in range(n)
        ]
        est = [
            Pose(rotation=np.eye(3), translation=np.array([i * scale, 0.0, 0.0]))
            for i in range(n)
        ]
        t_path = tmp_path / "truth.txt"
        e_path = tmp_path / "est.txt"
        write_kitti_poses(truth, t_path)
        write_kitti_poses(est, e_path)
        return str(e_path), str(t_path)

    def test_identical_files(self, tmp_path, capsys):
        est, truth = self.make_pose_files(tmp_path)
        code = main(["eval", "--estimate", est, "--truth", est])
        assert code == 0
        out = capsys.readouterr().out
        assert "ATE: 0.0000 %" in out

    def test_scaled_fixture(self, tmp_path, capsys):
        est, truth = self.make_pose_files(tmp_path, scale=1.01)
        code = main(
            ["eval", "--estimate", est, "--truth", truth, "--output", str(tmp_path)]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "ATE: 1.0000 %" in out
        assert (tmp_path / "report.txt").exists()
        assert (tmp_path / "report.csv").exists()

    def test_parse_failure_exit_code(self, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("1 2 3\n")
        est, _ = self.make_pose_files(tmp_path)
        assert main(["eval", "--estimate", str(bad), "--truth", est]) == 2


class TestDumpCommands:
    def test_dump_sri(self, tmp_path, frame_cloud):
        bin_path = tmp_path / "frame.bin"
        write_velodyne_bin(bin_path, frame_cloud)
        out = tmp_path / "frame.pgm"
        code = main(
            [
                "dump-sri",
                "--input",
                str(bin_path),
                "--output",
                str(out),
                "--config",
                write_config(tmp_path),
            ]
        )
        assert code == 0
        assert out.read_bytes().startswith(b"P5\n360 32\n")

    def test_dump_features(self, tmp_path, frame_cloud):
        bin_path = tmp_path / "frame.bin"
        write_velodyne_bin(bin_path, frame_cloud)
        out = tmp_path / "frame.ply"
        code = main(
            [
                "dump-features",
                "--input",
                str(bin_path),
                "--output",
                str(out),
                "--config",
                write_config(tmp_path),
            ]
        )
        assert code == 0
        assert out.read_text().startswith("ply")
