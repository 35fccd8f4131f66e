import numpy as np
import pytest

from thepose.errors import Error
from thepose.geometry import Pose, geodesic_angle, random_rotation, rot_z
from thepose.metrics import (
    PoseError,
    aggregate,
    axis_aligned_iou,
    box_iou_3d,
    monte_carlo_iou,
    pose_errors,
    symmetric_rotation_error,
)
from thepose.shapes import category_spec


def cube(t=(0, 0, 0), size=(1, 1, 1), R=None):
    return Pose(np.eye(3) if R is None else R, np.asarray(t, float),
                np.asarray(size, float))


class TestBoxIou:
    def test_identical_poses(self):
        R = random_rotation(np.random.default_rng(0))
        p = cube(t=(0.1, 0.2, 0.3), size=(0.2, 0.3, 0.1), R=R)
        assert box_iou_3d(p, p) == 1.0

    def test_far_apart_is_zero(self):
        a = cube()
        b = cube(t=(10.0, 0, 0))
        assert box_iou_3d(a, b) == 0.0

    def test_offset_unit_cubes_one_third(self):
        # intersection 0.5, union 1.5 -> 1/3
        a = cube()
        b = cube(t=(0.5, 0, 0))
        assert abs(box_iou_3d(a, b) - 1.0 / 3.0) < 1e-12

    def test_offset_cubes_shared_nontrivial_rotation(self):
        R = random_rotation(np.random.default_rng(1))
        a = cube(R=R)
        b = Pose(R, R @ np.array([0.5, 0.0, 0.0]), np.ones(3))
        assert abs(box_iou_3d(a, b) - 1.0 / 3.0) < 1e-12

    def test_mc_close_to_analytic_on_same_rotation_pairs(self):
        rng = np.random.default_rng(2)
        worst = 0.0
        for trial in range(50):
            R = random_rotation(rng)
            size_a = rng.uniform(0.4, 1.4, 3)
            size_b = rng.uniform(0.4, 1.4, 3)
            offset = R @ (rng.uniform(-0.4, 0.4, 3) * size_a)
            a = Pose(R, np.zeros(3), size_a)
            b = Pose(R, offset, size_b)
            exact = axis_aligned_iou(a, b)
            mc = monte_carlo_iou(a, b, n_mc=100_000, seed=trial)
            worst = max(worst, abs(mc - exact))
        assert worst < 1e-2

    def test_mc_symmetric_within_tolerance(self):
        rng = np.random.default_rng(3)
        for trial in range(10):
            a = cube(R=random_rotation(rng), size=rng.uniform(0.5, 1.0, 3))
            b = cube(t=rng.uniform(-0.2, 0.2, 3), R=random_rotation(rng),
                     size=rng.uniform(0.5, 1.0, 3))
            ab = box_iou_3d(a, b, seed=trial)
            ba = box_iou_3d(b, a, seed=trial)
            assert abs(ab - ba) < 2e-2

    def test_exact_path_symmetric(self):
        a = cube(size=(0.5, 1.0, 2.0))
        b = cube(t=(0.1, -0.2, 0.4), size=(1.0, 0.8, 1.5))
        assert abs(box_iou_3d(a, b) - box_iou_3d(b, a)) < 1e-12

    def test_n_mc_floor_enforced(self):
        with pytest.raises(Error):
            box_iou_3d(cube(), cube(), n_mc=100)

    def test_mc_deterministic(self):
        a = cube(R=random_rotation(np.random.default_rng(4)))
        b = cube(t=(0.2, 0.1, 0.0))
        assert monte_carlo_iou(a, b, seed=9) == monte_carlo_iou(a, b, seed=9)


class TestSymmetricRotation:
    def test_revolution_quotient_is_zero_for_axis_spins(self):
        spec = category_spec("bottle")
        rng = np.random.default_rng(5)
        R = random_rotation(rng)
        gt = Pose(R, np.array([0, 0, 1.0]), np.array([0.1, 0.1, 0.2]))
        pred = Pose(R @ rot_z(np.pi / 2), gt.translation, gt.size)
        err = pose_errors(pred, gt, spec)
        assert err.rotation_err < 1e-9
        assert err.iou > 1.0 - 1e-9

    def test_translation_error_in_centimeters(self):
        spec = category_spec("camera")
        R = np.eye(3)
        gt = Pose(R, np.zeros(3), np.ones(3) * 0.1)
        pred = Pose(R, np.array([0.019, 0, 0]), gt.size)
        err = pose_errors(pred, gt, spec)
        assert abs(err.translation_err - 1.9) < 1e-12

    def test_closed_form_matches_phi_sweep(self):
        # brute-force minimization over 3600 sampled axis spins
        rng = np.random.default_rng(6)
        for _ in range(100):
            R_gt = random_rotation(rng)
            R_pred = random_rotation(rng)
            closed = symmetric_rotation_error(R_pred, R_gt, "revolution")
            sweep = min(
                geodesic_angle(R_pred, R_gt @ rot_z(phi))
                for phi in np.linspace(0, 2 * np.pi, 3600, endpoint=False)
            )
            assert abs(closed - sweep) < 0.1

    def test_mirror_group_minimum(self):
        rng = np.random.default_rng(7)
        R = random_rotation(rng)
        pred = Pose(R @ rot_z(np.pi), np.zeros(3), np.ones(3) * 0.1)
        gt = Pose(R, np.zeros(3), np.ones(3) * 0.1)
        err = pose_errors(pred, gt, category_spec("mug"))
        assert err.rotation_err < 1e-6
        assert err.iou > 1.0 - 1e-9

    def test_rigid_invariance_of_pose_errors(self):
        rng = np.random.default_rng(8)
        spec = category_spec("camera")
        for _ in range(10):
            gt = Pose(random_rotation(rng), rng.standard_normal(3),
                      rng.uniform(0.05, 0.2, 3))
            pred = Pose(random_rotation(rng),
                        gt.translation + rng.standard_normal(3) * 0.01,
                        rng.uniform(0.05, 0.2, 3))
            base = pose_errors(pred, gt, spec, seed=1)
            T_R = random_rotation(rng)
            T_t = rng.standard_normal(3)
            pred2 = Pose(T_R @ pred.rotation, T_R @ pred.translation + T_t,
                         pred.size)
            gt2 = Pose(T_R @ gt.rotation, T_R @ gt.translation + T_t, gt.size)
            moved = pose_errors(pred2, gt2, spec, seed=1)
            assert abs(base.rotation_err - moved.rotation_err) < 1e-9
            assert abs(base.translation_err - moved.translation_err) < 1e-9
            # Monte-Carlo membership counts are identical under a rigid move
            # of both boxes only up to sampling noise
            assert abs(base.iou - moved.iou) < 2e-2


class TestAggregate:
    def test_single_good_instance_scores_100_everywhere(self):
        err = PoseError(rotation_err=4.0, translation_err=1.9, iou=0.8)
        report = aggregate([(err, "bowl")])
        assert all(v == 100.0 for v in report.per_category["bowl"].values())
        assert all(v == 100.0 for v in report.mean.values())

    def test_exact_threshold_excluded(self):
        err = PoseError(rotation_err=5.0, translation_err=1.0, iou=0.5)
        report = aggregate([(err, "can")])
        row = report.per_category["can"]
        assert row["5d2cm"] == 0.0 and row["5d"] == 0.0
        assert row["10d2cm"] == 100.0
        assert row["IoU50"] == 0.0 and row["IoU25"] == 100.0

    def test_matches_independent_tally(self):
        rng = np.random.default_rng(9)
        entries = []
        for _ in range(10):
            entries.append((PoseError(rotation_err=float(rng.uniform(0, 20)),
                                      translation_err=float(rng.uniform(0, 8)),
                                      iou=float(rng.uniform(0, 1))), "mug"))
        report = aggregate(entries)
        # spreadsheet-style count
        hits = sum(1 for e, _ in entries
                   if e.rotation_err < 10 and e.translation_err < 5)
        assert report.per_category["mug"]["10d5cm"] == 100.0 * hits / 10

    def test_monotonic_invariants(self):
        rng = np.random.default_rng(10)
        entries = []
        for cat in ("mug", "can", "bowl"):
            for _ in range(20):
                entries.append((PoseError(
                    rotation_err=float(rng.uniform(0, 30)),
                    translation_err=float(rng.uniform(0, 10)),
                    iou=float(rng.uniform(0, 1))), cat))
        report = aggregate(entries)
        for row in list(report.per_category.values()) + [report.mean]:
            assert row["5d2cm"] <= row["5d5cm"] <= row["10d5cm"]
            assert row["5d2cm"] <= row["10d2cm"] <= row["10d5cm"]
            assert row["IoU75"] <= row["IoU50"] <= row["IoU25"]

    def test_mean_unweighted_across_categories(self):
        a = PoseError(rotation_err=1.0, translation_err=1.0, iou=0.9)
        b = PoseError(rotation_err=170.0, translation_err=50.0, iou=0.0)
        report = aggregate([(a, "can"), (b, "mug"), (b, "mug"), (b, "mug")])
        assert report.mean["5d2cm"] == 50.0  # 100 and 0, category-weighted

    def test_json_and_table_render(self):
        import json

        err = PoseError(rotation_err=4.0, translation_err=1.0, iou=0.9)
        report = aggregate([(err, "bowl")])
        blob = json.loads(report.to_json())
        assert blob["per_category"]["bowl"]["IoU50"] == 100.0
        table = report.to_table()
        assert "bowl" in table and "IoU50" in table
