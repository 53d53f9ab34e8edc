import numpy as np
import pytest
from scipy.spatial.transform import Rotation

import oracles
from consensus_pose.consensus import (
    CorrespondenceSet,
    OptimizerConfig,
    build_correspondences,
    calibrate_pair,
    calibrate_rig,
    objective,
    optimal_center,
    optimal_focal,
    optimal_translation,
    optimize_pair,
    procrustes_rotation,
    trace_is_monotone,
)
from consensus_pose.errors import DegenerateGeometryError, InvalidInputError, NumericalFailureError
from consensus_pose.geometry import CameraExtrinsics, CameraIntrinsics, check_rotation, rotation_geodesic_distance
from consensus_pose.synth import NoiseModel, generate_scene, perturb_intrinsics


def random_rotation(rng):
    return Rotation.random(random_state=rng.integers(1 << 31)).as_matrix()


class TestObjective:
    def test_identical_sets(self, rng):
        x = rng.normal(size=(20, 3))
        assert objective(x, x, CameraExtrinsics.identity()) == 0.0

    def test_three_four_five(self):
        assert objective([[3.0, 4.0, 0.0]], [[0.0, 0.0, 0.0]], CameraExtrinsics.identity()) == 25.0

    def test_matches_brute_force(self, rng):
        for _ in range(20):
            a, b = rng.normal(size=(2, 30, 3)) * 1000
            R, T, w = random_rotation(rng), rng.normal(size=3) * 100, rng.random(30)
            want = oracles.rigid_objective(a.tolist(), b.tolist(), R.tolist(), T.tolist(), w.tolist())
            assert objective(a, b, CameraExtrinsics(R, T), w) == pytest.approx(want, rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(InvalidInputError):
            objective(np.zeros((3, 3)), np.zeros((4, 3)), CameraExtrinsics.identity())


class TestTranslation:
    def test_identity_case(self, rng):
        x = rng.normal(size=(10, 3))
        np.testing.assert_allclose(optimal_translation(x, x, np.eye(3)), 0.0, atol=1e-15)

    def test_constant_shift(self, rng):
        x = rng.normal(size=(10, 3)) * 1000
        s = np.array([12.0, -40.0, 7.5])
        np.testing.assert_allclose(optimal_translation(x, x + s, np.eye(3)), s, atol=1e-9)

    def test_beats_perturbations(self, rng):
        a, b = rng.normal(size=(2, 50, 3)) * 1000
        R = random_rotation(rng)
        T = optimal_translation(a, b, R)
        best = objective(a, b, CameraExtrinsics(R, T))
        deltas = rng.normal(size=(200, 3))
        deltas /= np.linalg.norm(deltas, axis=1, keepdims=True)
        assert all(best <= objective(a, b, CameraExtrinsics(R, T + d)) for d in deltas)

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            optimal_translation(np.zeros((0, 3)), np.zeros((0, 3)), np.eye(3))


class TestProcrustes:
    def test_identity(self, rng):
        x = rng.normal(size=(20, 3))
        np.testing.assert_allclose(procrustes_rotation(x, x), np.eye(3), atol=1e-12)

    def test_recovers_known_rotation(self, rng):
        for _ in range(20):
            R0 = random_rotation(rng)
            x1 = rng.normal(size=(30, 3)) * 500
            x1 -= x1.mean(axis=0)
            R = procrustes_rotation(x1, x1 @ R0)  # rows of x1 @ R0 are R0^T x1_i
            np.testing.assert_allclose(R, R0, atol=1e-9)

    def test_reflected_data_stays_proper(self, rng):
        x1 = rng.normal(size=(30, 3))
        x2 = x1 * [1.0, 1.0, -1.0]
        R = procrustes_rotation(x1, x2)
        check_rotation(R)
        assert np.linalg.det(R) == pytest.approx(1.0)

    def test_collinear_rejected(self):
        t = np.linspace(-1, 1, 10)[:, None]
        line = t * [[1.0, 2.0, 3.0]]
        with pytest.raises(DegenerateGeometryError):
            procrustes_rotation(line, line)

    def test_too_few_points(self):
        with pytest.raises(DegenerateGeometryError):
            procrustes_rotation(np.eye(3)[:2], np.eye(3)[:2])


class TestIntrinsicSteps:
    def test_focal_identity(self, rng):
        u, z = rng.uniform(0, 1000, 40), rng.uniform(2000, 5000, 40)
        assert optimal_focal(u, z, 500.0, (u - 500.0) * z) == pytest.approx(1.0, rel=1e-12)

    def test_focal_recovery(self, rng):
        u, z = rng.uniform(0, 1000, 100), rng.uniform(2000, 5000, 100)
        assert optimal_focal(u, z, 480.0, (u - 480.0) / 1150.0 * z) == pytest.approx(1150.0, rel=1e-6)

    def test_focal_dense_scan(self, rng):
        u, z = rng.uniform(0, 1000, 60), rng.uniform(2000, 5000, 60)
        target = (u - 500) / 1100 * z + rng.normal(size=60) * 30
        f = optimal_focal(u, z, 500.0, target)
        best = oracles.axis_residual(u, z, 500.0, f, target)
        assert all(best <= oracles.axis_residual(u, z, 500.0, s, target) for s in np.linspace(0.5 * f, 2 * f, 1000))

    def test_focal_degenerate(self):
        with pytest.raises(DegenerateGeometryError):
            optimal_focal(np.full(5, 500.0), np.full(5, 3000.0), 500.0, np.ones(5))

    def test_center_recovery(self, rng):
        u, z = rng.uniform(0, 1000, 100), rng.uniform(2000, 5000, 100)
        assert optimal_center(u, z, 1150.0, (u - 517.25) * z / 1150.0) == pytest.approx(517.25, abs=1e-6)

    def test_center_mean_case(self, rng):
        u = rng.uniform(0, 1000, 25)
        assert optimal_center(u, np.ones(25), 1.0, np.zeros(25)) == pytest.approx(u.mean(), rel=1e-12)

    def test_center_dense_scan(self, rng):
        u, z = rng.uniform(0, 1000, 60), rng.uniform(2000, 5000, 60)
        target = (u - 510) / 1100 * z + rng.normal(size=60) * 30
        c = optimal_center(u, z, 1100.0, target)
        best = oracles.axis_residual(u, z, c, 1100.0, target)
        scan = np.linspace(c - 200, c + 200, 1000)
        assert all(best <= oracles.axis_residual(u, z, s, 1100.0, target) for s in scan)

    def test_center_degenerate(self):
        with pytest.raises(DegenerateGeometryError):
            optimal_center(np.ones(4), np.zeros(4), 1000.0, np.zeros(4))


class TestCorrespondences:
    def test_low_confidence_never_kept(self, rng):
        a, b = rng.uniform(100, 900, size=(2, 5, 17, 3))
        ca, cb = rng.random((2, 5, 17))
        corr = build_correspondences(a, b, ca, cb, 0.5)
        keep = (ca >= 0.5) & (cb >= 0.5)
        assert len(corr) == keep.sum()
        np.testing.assert_array_equal(corr.uvz_a, a[keep])
        np.testing.assert_allclose(corr.weights, (ca * cb)[keep])

    def test_missing_rows_dropped(self):
        a = np.full((4, 3), 1000.0)
        b = a.copy()
        b[1] = np.nan
        assert len(build_correspondences(a, b)) == 3

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            build_correspondences(np.ones((3, 3)), np.ones((4, 3)))

    def test_rejects_bad_weights(self):
        with pytest.raises(InvalidInputError):
            CorrespondenceSet(np.ones((2, 3)), np.ones((2, 3)), [0.5, 1.5])


class TestConfig:
    def test_defaults(self):
        cfg = OptimizerConfig()
        assert (cfg.max_iter, cfg.rel_tol, cfg.conf_threshold) == (200, 1e-10, 0.5)

    def test_init_from_image_size(self):
        k = OptimizerConfig(image_size=(1000, 800)).initial_intrinsics()
        assert (k.fx, k.fy, k.cx, k.cy) == (1000.0, 1000.0, 500.0, 400.0)

    def test_init_overrides(self):
        k = OptimizerConfig(init_focal_px=(900.0, 950.0), init_center_px=(1.0, 2.0)).initial_intrinsics()
        assert (k.fx, k.fy, k.cx, k.cy) == (900.0, 950.0, 1.0, 2.0)

    def test_init_requires_prior(self):
        with pytest.raises(InvalidInputError):
            OptimizerConfig().initial_intrinsics()

    @pytest.mark.parametrize("kwargs", [{"max_iter": -1}, {"max_iter": 2.5}, {"conf_threshold": 1.5}])
    def test_rejects(self, kwargs):
        with pytest.raises(InvalidInputError):
            OptimizerConfig(**kwargs)


@pytest.fixture(scope="module")
def pair_scene():
    return generate_scene(n_cameras=2, n_frames=100, n_joints=17, seed=21)


def gt_pair(scene, cfg, **kwargs):
    c1, c2 = scene.camera_ids
    k = scene.calibration.intrinsics
    return calibrate_pair(scene.observations[c1], scene.observations[c2], cfg,
                          init_1=k[c1], init_2=k[c2], **kwargs)


class TestCalibratePair:
    def test_identical_views(self, pair_scene):
        p = pair_scene.observations["cam0"]
        k = pair_scene.calibration.intrinsics["cam0"]
        res = calibrate_pair(p, p, OptimizerConfig(freeze_intrinsics=True), init_1=k, init_2=k)
        np.testing.assert_allclose(res.extrinsics.rotation, np.eye(3), atol=1e-9)
        np.testing.assert_allclose(res.extrinsics.translation, 0.0, atol=1e-9)
        assert res.objective <= 1e-9

    def test_frozen_gt_recovers_extrinsics(self, pair_scene, backend):
        res = gt_pair(pair_scene, OptimizerConfig(freeze_intrinsics=True), backend=backend)
        truth = pair_scene.calibration.extrinsics["cam1"]
        assert rotation_geodesic_distance(res.extrinsics.rotation, truth.rotation) < 1e-6
        assert np.linalg.norm(res.extrinsics.translation - truth.translation) < 1e-3
        assert res.is_monotone()

    def test_trace_layout(self, pair_scene):
        res = calibrate_pair(*(pair_scene.observations[c] for c in pair_scene.camera_ids),
                             OptimizerConfig(max_iter=8, rel_tol=0.0, image_size=pair_scene.image_size))
        assert res.trace[0].substep == "init"
        steps = [e.substep for e in res.trace if e.substep not in ("init", "rotation", "translation")]
        assert steps == ["focal_1", "focal_2", "center_1", "center_2"] * 2
        assert [e.iteration for e in res.trace[1:4]] == [1, 1, 1]

    def test_max_iter_zero_only_initializes(self, pair_scene):
        res = gt_pair(pair_scene, OptimizerConfig(max_iter=0))
        assert [e.substep for e in res.trace] == ["init"]
        np.testing.assert_array_equal(res.extrinsics.rotation, np.eye(3))

    def test_perturbed_init_monotone_and_improving(self, pair_scene):
        rng = np.random.default_rng(0)
        c1, c2 = pair_scene.camera_ids
        k = pair_scene.calibration.intrinsics
        res = calibrate_pair(pair_scene.observations[c1], pair_scene.observations[c2],
                             OptimizerConfig(max_iter=60, image_size=pair_scene.image_size),
                             init_1=perturb_intrinsics(k[c1], 0.1, rng), init_2=perturb_intrinsics(k[c2], 0.1, rng))
        assert res.is_monotone()
        assert res.objective < 0.01 * res.trace[0].objective

    def test_noisy_monotone(self, noisy_scene):
        p = noisy_scene.observations
        res = calibrate_pair(p["cam0"], p["cam2"], OptimizerConfig(image_size=noisy_scene.image_size))
        assert res.is_monotone()

    def test_deterministic_trace(self, pair_scene):
        cfg = OptimizerConfig(max_iter=30, image_size=pair_scene.image_size)
        p = [pair_scene.observations[c] for c in pair_scene.camera_ids]
        t1 = [e.objective for e in calibrate_pair(*p, cfg).trace]
        t2 = [e.objective for e in calibrate_pair(*p, cfg).trace]
        assert t1 == t2

    def test_too_few_correspondences(self, pair_scene):
        p = [pair_scene.observations[c] for c in pair_scene.camera_ids]
        zero = np.zeros(p[0].shape[:2])
        with pytest.raises(DegenerateGeometryError):
            calibrate_pair(*p, OptimizerConfig(image_size=(1000, 1000)), conf_c1=zero)

    def test_non_finite_reports_iteration(self, pair_scene, monkeypatch):
        from consensus_pose import consensus

        k = pair_scene.calibration.intrinsics
        corr = build_correspondences(*(pair_scene.observations[c] for c in pair_scene.camera_ids))
        monkeypatch.setattr(consensus._PairProblem, "update_translation", lambda self: float("nan"))
        with pytest.raises(NumericalFailureError) as info:
            optimize_pair(corr, k["cam0"], k["cam1"], OptimizerConfig(freeze_intrinsics=True))
        assert info.value.iteration == 1


def test_trace_is_monotone_helper():
    assert trace_is_monotone([3.0, 2.0, 2.0, 1.0])
    assert not trace_is_monotone([1.0, 2.0])
    assert trace_is_monotone([1.0, 1.0 + 1e-12])


class TestCalibrateRig:
    def test_two_cameras_reduce_to_pair(self, pair_scene):
        k = pair_scene.calibration.intrinsics
        cfg = OptimizerConfig(freeze_intrinsics=True)
        rig = calibrate_rig(pair_scene.observations, "cam0", cfg, initial_intrinsics=k)
        pair = gt_pair(pair_scene, cfg)
        np.testing.assert_array_equal(rig.calibration.extrinsics["cam1"].rotation, pair.extrinsics.rotation)

    def test_four_camera_frozen(self, noiseless_scene):
        k = noiseless_scene.calibration.intrinsics
        rig = calibrate_rig(noiseless_scene.observations, "cam0", OptimizerConfig(freeze_intrinsics=True),
                            initial_intrinsics=k, n_jobs=2)
        for cid in ("cam1", "cam2", "cam3"):
            est, truth = rig.calibration.extrinsics[cid], noiseless_scene.calibration.extrinsics[cid]
            assert rotation_geodesic_distance(est.rotation, truth.rotation) < 1e-6
            assert np.linalg.norm(est.translation - truth.translation) < 1e-3
        assert rig.calibration.extrinsics["cam0"].is_identity()

    def test_order_independence(self, noiseless_scene):
        cfg = OptimizerConfig(max_iter=20, image_size=noiseless_scene.image_size)
        forward = calibrate_rig(noiseless_scene.observations, "cam0", cfg)
        shuffled = dict(reversed(list(noiseless_scene.observations.items())))
        backward = calibrate_rig(shuffled, "cam0", cfg)
        for cid in noiseless_scene.camera_ids:
            np.testing.assert_allclose(backward.calibration.extrinsics[cid].rotation,
                                       forward.calibration.extrinsics[cid].rotation, atol=1e-9)
            np.testing.assert_allclose(backward.calibration.intrinsics[cid].matrix(),
                                       forward.calibration.intrinsics[cid].matrix(), atol=1e-9)

    def test_reference_intrinsics_averaged(self, noiseless_scene):
        cfg = OptimizerConfig(max_iter=8, image_size=noiseless_scene.image_size)
        rig = calibrate_rig(noiseless_scene.observations, "cam0", cfg)
        mean_fx = np.mean([p.intrinsics_1.fx for p in rig.pairs.values()])
        assert rig.calibration.intrinsics["cam0"].fx == pytest.approx(mean_fx)

    def test_missing_reference(self, noiseless_scene):
        with pytest.raises(InvalidInputError):
            calibrate_rig(noiseless_scene.observations, "nope")

    def test_errors_tagged_with_camera(self, noiseless_scene):
        conf = {"cam2": np.zeros((noiseless_scene.n_frames, 17))}
        with pytest.raises(DegenerateGeometryError, match="cam2") as info:
            calibrate_rig(noiseless_scene.observations, "cam0", OptimizerConfig(image_size=(1000, 1000)),
                          confidences=conf)
        assert info.value.camera_id == "cam2"


def test_noise_model_rejects_negative():
    with pytest.raises(InvalidInputError):
        NoiseModel(-1.0, 0.0)


def test_intrinsics_matrix():
    np.testing.assert_array_equal(CameraIntrinsics(2.0, 3.0, 4.0, 5.0).matrix(), [[2, 0, 4], [0, 3, 5], [0, 0, 1]])
