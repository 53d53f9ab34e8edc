"""The compiled kernels must agree with the numpy fallback."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from consensus_pose import _kernels
from consensus_pose.consensus import OptimizerConfig, calibrate_pair
from consensus_pose.synth import generate_scene

needs_compiled = pytest.mark.skipif(_kernels.compiled_backend is None, reason="compiled kernels not built")


def make_inputs(seed, n):
    rng = np.random.default_rng(seed)
    uvz = np.column_stack([rng.uniform(0, 1000, n), rng.uniform(0, 1000, n), rng.uniform(2000, 6000, n)])
    a = rng.normal(size=(n, 3)) * 1000
    b = rng.normal(size=(n, 3)) * 1000
    R = Rotation.random(random_state=seed).as_matrix()
    T = rng.normal(size=3) * 500
    w = rng.random(n)
    return uvz, a, b, R, T, w


def test_backend_name_matches_module():
    assert _kernels.BACKEND == _kernels.default_backend.NAME
    assert _kernels.get_backend("python") is _kernels.python_backend


def test_unknown_backend():
    with pytest.raises(ValueError):
        _kernels.get_backend("fortran")


@needs_compiled
class TestEquivalence:
    py = _kernels.python_backend
    cy = _kernels.compiled_backend

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 300))
    def test_all_kernels(self, seed, n):
        uvz, a, b, R, T, w = make_inputs(seed, n)
        np.testing.assert_allclose(self.cy.backproject(uvz, 1100.0, 1150.0, 480.0, 520.0),
                                   self.py.backproject(uvz, 1100.0, 1150.0, 480.0, 520.0), rtol=1e-13)
        np.testing.assert_allclose(self.cy.map_rigid(b, R, T), self.py.map_rigid(b, R, T), rtol=1e-12, atol=1e-9)
        np.testing.assert_allclose(self.cy.map_rigid_inverse(a, R, T), self.py.map_rigid_inverse(a, R, T),
                                   rtol=1e-12, atol=1e-9)
        assert self.cy.rigid_objective(a, b, R, T, w) == pytest.approx(self.py.rigid_objective(a, b, R, T, w),
                                                                       rel=1e-12)
        for got, want in zip(self.cy.weighted_cross_covariance(a, b, w), self.py.weighted_cross_covariance(a, b, w)):
            np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-6)
        u, z, t = uvz[:, 0].copy(), uvz[:, 2].copy(), a[:, 0].copy()
        np.testing.assert_allclose(self.cy.focal_normal_sums(u, z, 500.0, t, w),
                                   self.py.focal_normal_sums(u, z, 500.0, t, w), rtol=1e-10, atol=1e-6)
        np.testing.assert_allclose(self.cy.center_normal_sums(u, z, 1150.0, t, w),
                                   self.py.center_normal_sums(u, z, 1150.0, t, w), rtol=1e-10, atol=1e-6)

    def test_full_pair_run_agrees(self):
        scene = generate_scene(n_cameras=2, n_frames=30, seed=11)
        cfg = OptimizerConfig(max_iter=40, image_size=scene.image_size)
        p1, p2 = (scene.observations[c] for c in scene.camera_ids)
        res_py = calibrate_pair(p1, p2, cfg, backend="python")
        res_cy = calibrate_pair(p1, p2, cfg, backend="cython")
        assert len(res_py.trace) == len(res_cy.trace)
        np.testing.assert_allclose([e.objective for e in res_cy.trace], [e.objective for e in res_py.trace],
                                   rtol=1e-8)
        np.testing.assert_allclose(res_cy.extrinsics.rotation, res_py.extrinsics.rotation, atol=1e-10)
