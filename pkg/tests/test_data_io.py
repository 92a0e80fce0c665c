import numpy as np
import pytest

from locbench.data_io import (
    DESCRIPTOR_MAGIC,
    Dataset,
    IntegrityError,
    MissingFileError,
    ParseError,
    fmt,
    load_dataset,
    load_descriptors,
    load_intrinsics,
    load_labels,
    load_localization_results,
    load_matches_dir,
    load_metrics_csv,
    load_observations,
    load_points,
    load_poses,
    load_queries,
    load_rankings,
    read_pgm,
    write_descriptors,
    write_intrinsics,
    write_labels,
    write_localization_results,
    write_matches_dir,
    write_metrics_csv,
    write_observations,
    write_pgm,
    write_points,
    write_poses,
    write_queries,
    write_rankings,
)
from locbench.geometry import CameraIntrinsics, Pose
from locbench.map_localize import Observation
from locbench.synth import SceneConfig, generate_scene, write_dataset

from oracles.projective import matrix_to_quat_wxyz, rodrigues

AWKWARD = [0.1, 1.0 / 3.0, -0.0, 1e-30, 123456.789012345, 2.0**-40]


def random_pose(rng):
    q = matrix_to_quat_wxyz(rodrigues(rng.normal(size=3), rng.uniform(0, np.pi)))
    return Pose(c=rng.uniform(-50, 50, size=3), q=q)


class TestFmt:
    def test_round_trips_exactly(self, rng):
        for x in AWKWARD + list(rng.uniform(-1e6, 1e6, size=200)):
            assert float(fmt(x)) == float(x)


class TestPoses:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        poses = {f"img_{i}": random_pose(rng) for i in range(12)}
        path = tmp_path / "poses.txt"
        write_poses(path, poses)
        loaded = load_poses(path)
        assert loaded == poses  # Pose equality is bitwise

    def test_seven_field_line_rejected(self, tmp_path):
        path = tmp_path / "poses.txt"
        path.write_text("img 1.0 0.0 0.0 0.0 1.0 2.0\n")
        with pytest.raises(ParseError, match="expected 8 fields, got 7") as e:
            load_poses(path)
        assert e.value.line_no == 1
        assert e.value.path == path

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "poses.txt"
        line = "img 1.0 0.0 0.0 0.0 1.0 2.0 3.0\n"
        path.write_text(line + line)
        with pytest.raises(ParseError, match="duplicate image id"):
            load_poses(path)

    def test_non_finite_rejected(self, tmp_path):
        path = tmp_path / "poses.txt"
        path.write_text("img 1.0 0.0 0.0 nan 1.0 2.0 3.0\n")
        with pytest.raises(ParseError, match="non-finite"):
            load_poses(path)

    def test_comments_and_blanks_skipped(self, tmp_path):
        path = tmp_path / "poses.txt"
        path.write_text("# header\n\nimg 1.0 0.0 0.0 0.0 1.0 2.0 3.0\n")
        assert list(load_poses(path)) == ["img"]

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingFileError, match="required file missing"):
            load_poses(tmp_path / "absent.txt")


class TestIntrinsics:
    def test_round_trip(self, tmp_path):
        cams = {
            "cam0": CameraIntrinsics(320.0, 321.5, 319.25, 240.0, 640, 480),
            "cam1": CameraIntrinsics(100.1, 100.1, 50.05, 40.0, 100, 80),
        }
        path = tmp_path / "intrinsics.txt"
        write_intrinsics(path, cams)
        assert load_intrinsics(path) == cams

    def test_unsupported_model(self, tmp_path):
        path = tmp_path / "intrinsics.txt"
        path.write_text("cam0 fisheye 1 1 1 1 10 10\n")
        with pytest.raises(ParseError, match="unsupported camera model"):
            load_intrinsics(path)

    def test_integer_dims_enforced(self, tmp_path):
        path = tmp_path / "intrinsics.txt"
        path.write_text("cam0 pinhole 1 1 1 1 10.5 10\n")
        with pytest.raises(ParseError, match="must be integers"):
            load_intrinsics(path)


class TestPointsAndObservations:
    def test_points_round_trip_bit_exact(self, tmp_path, rng):
        points = {i: rng.uniform(-100, 100, size=3) for i in range(20)}
        points[99] = np.array(AWKWARD[:3])
        path = tmp_path / "points3d.txt"
        write_points(path, points)
        loaded = load_points(path)
        assert sorted(loaded) == sorted(points)
        for pid in points:
            assert loaded[pid].tobytes() == np.asarray(points[pid], dtype=np.float64).tobytes()

    def test_point_id_must_be_integer(self, tmp_path):
        path = tmp_path / "points3d.txt"
        path.write_text("abc 1.0 2.0 3.0\n")
        with pytest.raises(ParseError, match="point id must be an integer"):
            load_points(path)

    def test_duplicate_point_rejected(self, tmp_path):
        path = tmp_path / "points3d.txt"
        path.write_text("4 1.0 2.0 3.0\n4 9.0 9.0 9.0\n")
        with pytest.raises(ParseError, match="duplicate point id 4"):
            load_points(path)

    def test_observations_round_trip(self, tmp_path, rng):
        obs = [
            Observation(f"img_{int(rng.integers(4))}", int(rng.integers(50)), (float(rng.uniform(0, 640)), float(rng.uniform(0, 480))))
            for _ in range(40)
        ]
        path = tmp_path / "observations.txt"
        write_observations(path, obs)
        loaded = load_observations(path)
        key = lambda o: (o.image_id, o.point_id, o.pixel)
        assert sorted(loaded, key=key) == sorted(obs, key=key)


class TestDescriptors:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        mat = rng.normal(size=(9, 16)).astype(np.float32).astype(np.float64)
        ids = [f"img_{i}" for i in range(9)]
        write_descriptors(tmp_path, {"netvlad": (mat, ids)})
        loaded = load_descriptors(tmp_path)
        got_mat, got_ids = loaded["netvlad"]
        assert got_ids == ids
        assert got_mat.tobytes() == mat.tobytes()

    def test_flat_default_feature(self, tmp_path):
        mat = np.zeros((2, 4), dtype=np.float64)
        payload = DESCRIPTOR_MAGIC + np.array([2, 4], dtype="<u4").tobytes() + mat.astype("<f4").tobytes()
        (tmp_path / "descriptors.desc").write_bytes(payload)
        (tmp_path / "descriptors.ids").write_text("a\nb\n")
        loaded = load_descriptors(tmp_path)
        assert list(loaded) == ["default"]

    def test_bad_magic(self, tmp_path):
        d = tmp_path / "descriptors"
        d.mkdir()
        (d / "f.desc").write_bytes(b"WRONG!!!" + bytes(8))
        (d / "f.ids").write_text("a\n")
        with pytest.raises(ParseError, match="bad magic"):
            load_descriptors(tmp_path)

    def test_truncated_payload(self, tmp_path):
        d = tmp_path / "descriptors"
        d.mkdir()
        (d / "f.desc").write_bytes(DESCRIPTOR_MAGIC + np.array([3, 5], dtype="<u4").tobytes() + bytes(8))
        (d / "f.ids").write_text("a\nb\nc\n")
        with pytest.raises(ParseError, match="expected .* bytes"):
            load_descriptors(tmp_path)

    def test_row_id_count_mismatch_names_both(self, tmp_path):
        mat = np.zeros((3, 2))
        write_descriptors(tmp_path, {"f": (mat, ["a", "b", "c"])})
        (tmp_path / "descriptors" / "f.ids").write_text("a\nb\n")
        with pytest.raises(IntegrityError, match="3 descriptor rows but 2 ids"):
            load_descriptors(tmp_path)

    def test_duplicate_ids_rejected(self, tmp_path):
        mat = np.zeros((2, 2))
        write_descriptors(tmp_path, {"f": (mat, ["a", "b"])})
        (tmp_path / "descriptors" / "f.ids").write_text("a\na\n")
        with pytest.raises(ParseError, match="duplicate image id"):
            load_descriptors(tmp_path)

    def test_shape_validation_on_write(self, tmp_path):
        with pytest.raises(ValueError, match="rows must match"):
            write_descriptors(tmp_path, {"f": (np.zeros((3, 2)), ["a", "b"])})

    def test_absent_directory_is_empty(self, tmp_path):
        assert load_descriptors(tmp_path) == {}


class TestQueries:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "queries.txt"
        write_queries(path, ["q2", "q0", "q1"])
        assert load_queries(path) == ["q2", "q0", "q1"]

    def test_duplicate_rejected(self, tmp_path):
        path = tmp_path / "queries.txt"
        path.write_text("q0\nq0\n")
        with pytest.raises(ParseError, match="duplicate query id"):
            load_queries(path)


class TestMatches:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        matches = {
            ("imgA", "imgB"): rng.uniform(0, 640, size=(25, 4)),
            ("imgA", "imgC"): np.zeros((0, 4)),
        }
        write_matches_dir(tmp_path, matches)
        loaded = load_matches_dir(tmp_path)
        assert sorted(loaded) == sorted(matches)
        for pair in matches:
            assert loaded[pair].tobytes() == np.asarray(matches[pair]).tobytes()

    def test_id_that_cannot_name_a_file(self, tmp_path):
        with pytest.raises(ValueError, match="cannot name a match file"):
            write_matches_dir(tmp_path, {("a__b", "c"): np.zeros((0, 4))})

    def test_inner_ids_must_agree_with_filename(self, tmp_path):
        mdir = tmp_path / "matches"
        mdir.mkdir()
        (mdir / "a__b.txt").write_text("a 1.0 2.0 zzz 3.0 4.0\n")
        with pytest.raises(ParseError, match="disagree with file name"):
            load_matches_dir(tmp_path)

    def test_malformed_filename(self, tmp_path):
        mdir = tmp_path / "matches"
        mdir.mkdir()
        (mdir / "nounderscores.txt").write_text("")
        with pytest.raises(ParseError, match="match file name"):
            load_matches_dir(tmp_path)

    def test_field_count(self, tmp_path):
        mdir = tmp_path / "matches"
        mdir.mkdir()
        (mdir / "a__b.txt").write_text("a 1.0 2.0 b 3.0\n")
        with pytest.raises(ParseError, match="expected 6 fields"):
            load_matches_dir(tmp_path)

    def test_absent_directory_is_empty(self, tmp_path):
        assert load_matches_dir(tmp_path) == {}


class TestRankings:
    def test_round_trip(self, tmp_path):
        entries = {
            "q0": [("db2", 0.9), ("db0", 0.5), ("db1", 0.1)],
            "q1": [("db1", 3.25)],
        }
        path = tmp_path / "rankings.txt"
        write_rankings(path, entries)
        loaded = load_rankings(path)
        assert loaded == {q: list(v) for q, v in entries.items()}

    def test_ranks_must_be_contiguous(self, tmp_path):
        path = tmp_path / "rankings.txt"
        path.write_text("q0 db0 0.5 1\nq0 db1 0.4 3\n")
        with pytest.raises(IntegrityError, match="not contiguous"):
            load_rankings(path)

    def test_out_of_order_lines_accepted(self, tmp_path):
        path = tmp_path / "rankings.txt"
        path.write_text("q0 db1 0.4 2\nq0 db0 0.5 1\n")
        assert load_rankings(path)["q0"] == [("db0", 0.5), ("db1", 0.4)]

    def test_rank_must_be_positive(self, tmp_path):
        path = tmp_path / "rankings.txt"
        path.write_text("q0 db0 0.5 0\n")
        with pytest.raises(ParseError, match="ranks start at 1"):
            load_rankings(path)


class TestLocalizationResults:
    def test_round_trip_with_failures(self, tmp_path):
        rows = {
            (1, "q0"): {"status": "ok", "c_error": 0.001, "R_error": 0.01, "inliers": 55},
            (1, "q1"): {"status": "no-consensus", "c_error": None, "R_error": None, "inliers": 3},
            (5, "q0"): {"status": "ok", "c_error": 0.1, "R_error": 1.0 / 3.0, "inliers": 80},
        }
        path = tmp_path / "loc.txt"
        write_localization_results(path, rows)
        assert load_localization_results(path) == rows

    def test_failed_rows_need_placeholders(self, tmp_path):
        path = tmp_path / "loc.txt"
        path.write_text("1 q0 no-consensus 0.5 0.5 3\n")
        with pytest.raises(ParseError, match="placeholders"):
            load_localization_results(path)

    def test_duplicate_key_rejected(self, tmp_path):
        path = tmp_path / "loc.txt"
        line = "1 q0 ok 0.5 0.5 30\n"
        path.write_text(line + line)
        with pytest.raises(ParseError, match="duplicate row"):
            load_localization_results(path)


class TestMetricsCsv:
    def test_round_trip_with_undefined(self, tmp_path):
        rows = [
            ("pearson", "netvlad", 5, 0.75),
            ("spearman", "all", 10, "undefined"),
            ("map", "netvlad", "", 0.5),
        ]
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, rows)
        loaded = load_metrics_csv(path)
        assert loaded == [
            ("pearson", "netvlad", 5, 0.75),
            ("spearman", "all", 10, "undefined"),
            ("map", "netvlad", None, 0.5),
        ]

    def test_header_required(self, tmp_path):
        path = tmp_path / "metrics.csv"
        path.write_text("a,b,c,d\n")
        with pytest.raises(ParseError, match="header"):
            load_metrics_csv(path)


class TestLabelsAndPgm:
    def test_labels_round_trip(self, tmp_path):
        table = {0: "background", 1: "person", 2: "car"}
        path = tmp_path / "labels.txt"
        write_labels(path, table)
        assert load_labels(path) == table

    def test_duplicate_label_id(self, tmp_path):
        path = tmp_path / "labels.txt"
        path.write_text("1 person\n1 car\n")
        with pytest.raises(ParseError, match="duplicate label id"):
            load_labels(path)

    def test_pgm_round_trip(self, tmp_path, rng):
        img = rng.integers(0, 256, size=(37, 53)).astype(np.uint8)
        path = tmp_path / "img.pgm"
        write_pgm(path, img)
        assert np.array_equal(read_pgm(path), img)

    def test_ascii_pgm(self, tmp_path):
        path = tmp_path / "img.pgm"
        path.write_text("P2\n# comment\n3 2\n255\n0 10 20\n30 40 50\n")
        assert read_pgm(path).tolist() == [[0, 10, 20], [30, 40, 50]]

    def test_float_input_rounded_and_clipped(self, tmp_path):
        path = tmp_path / "img.pgm"
        write_pgm(path, np.array([[-5.0, 12.6, 300.0]]))
        assert read_pgm(path).tolist() == [[0, 13, 255]]

    def test_truncated_raster(self, tmp_path):
        path = tmp_path / "img.pgm"
        path.write_bytes(b"P5\n4 4\n255\n\x00\x01")
        with pytest.raises(ParseError, match="truncated"):
            read_pgm(path)

    def test_bad_maxval(self, tmp_path):
        path = tmp_path / "img.pgm"
        path.write_bytes(b"P5\n2 2\n65535\n" + bytes(8))
        with pytest.raises(ParseError, match="maxval"):
            read_pgm(path)

    def test_write_requires_2d(self, tmp_path):
        with pytest.raises(ValueError, match="2D"):
            write_pgm(tmp_path / "x.pgm", np.zeros((2, 2, 3)))


class TestLoadDataset:
    def _write(self, root, **kw):
        write_dataset(
            generate_scene(SceneConfig(seed=3, n_db=5, n_query=2, n_points=90)),
            root,
            **kw,
        )

    def test_full_round_trip(self, tmp_path):
        self._write(tmp_path, images=True)
        ds = load_dataset(tmp_path)
        assert isinstance(ds, Dataset)
        assert len(ds.db_ids) == 5
        assert len(ds.query_ids) == 2
        assert ds.points
        assert ds.observations
        assert "pose_oracle" in ds.descriptors
        assert ds.matches
        smap = ds.scene_map()
        assert set(smap.images) == set(ds.image_ids)
        lut = ds.descriptor_lookup("pose_oracle")
        assert sorted(lut) == ds.image_ids

    def test_round_trip_preserves_geometry_bits(self, tmp_path):
        scene = generate_scene(SceneConfig(seed=4, n_db=4, n_query=2, n_points=80))
        write_dataset(scene, tmp_path)
        ds = load_dataset(tmp_path)
        for i, (pose, intr) in scene.images.items():
            assert ds.poses[i] == pose
            assert ds.intrinsics_of(i) == intr
        for pid, x in scene.points.items():
            assert ds.points[pid].tobytes() == x.tobytes()

    def test_missing_root(self, tmp_path):
        with pytest.raises(MissingFileError):
            load_dataset(tmp_path / "nowhere")

    def test_pose_without_camera(self, tmp_path):
        self._write(tmp_path)
        path = tmp_path / "image_camera.txt"
        lines = [l for l in path.read_text().splitlines() if not l.startswith("db_0000 ")]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(IntegrityError, match="no camera assignment"):
            load_dataset(tmp_path)

    def test_camera_without_pose(self, tmp_path):
        self._write(tmp_path)
        with open(tmp_path / "image_camera.txt", "a") as fh:
            fh.write("phantom cam0\n")
        with pytest.raises(IntegrityError, match="no pose"):
            load_dataset(tmp_path)

    def test_unknown_camera_reference(self, tmp_path):
        self._write(tmp_path)
        path = tmp_path / "image_camera.txt"
        path.write_text(path.read_text().replace("db_0000 cam0", "db_0000 cam9"))
        with pytest.raises(IntegrityError, match="unknown camera"):
            load_dataset(tmp_path)

    def test_query_must_be_an_image(self, tmp_path):
        self._write(tmp_path)
        with open(tmp_path / "queries.txt", "a") as fh:
            fh.write("q_9999\n")
        with pytest.raises(IntegrityError, match="not an image"):
            load_dataset(tmp_path)

    def test_observation_of_unknown_point(self, tmp_path):
        self._write(tmp_path)
        with open(tmp_path / "observations.txt", "a") as fh:
            fh.write("db_0000 999999 5.0 5.0\n")
        with pytest.raises(IntegrityError, match="unknown point"):
            load_dataset(tmp_path)

    def test_descriptor_count_must_cover_images(self, tmp_path):
        self._write(tmp_path)
        ids_path = tmp_path / "descriptors" / "pose_oracle.ids"
        desc_path = tmp_path / "descriptors" / "pose_oracle.desc"
        mat, ids = load_descriptors(tmp_path)["pose_oracle"]
        write_descriptors(tmp_path, {"pose_oracle": (mat[:-1], ids[:-1])})
        assert ids_path.exists() and desc_path.exists()
        with pytest.raises(IntegrityError, match="descriptor rows for"):
            load_dataset(tmp_path)

    def test_match_file_referencing_unknown_image(self, tmp_path):
        self._write(tmp_path)
        (tmp_path / "matches" / "ghostA__ghostB.txt").write_text(
            "ghostA 1.0 1.0 ghostB 2.0 2.0\n"
        )
        with pytest.raises(IntegrityError, match="unknown image"):
            load_dataset(tmp_path)
