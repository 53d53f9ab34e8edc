"""Compare the compiled kernels with the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--points 1700] [--repeat 200]

Times each inner-loop kernel on one pair's worth of correspondences and
then a full pair calibration with each backend.
"""

import argparse
import timeit

import numpy as np
from scipy.spatial.transform import Rotation

from consensus_pose import _kernels
from consensus_pose.consensus import OptimizerConfig, calibrate_pair
from consensus_pose.synth import generate_scene, perturb_intrinsics


def kernel_calls(kb, n, rng):
    uvz = np.column_stack([rng.uniform(0, 1000, n), rng.uniform(0, 1000, n), rng.uniform(2000, 6000, n)])
    a = rng.normal(size=(n, 3)) * 1000
    b = rng.normal(size=(n, 3)) * 1000
    R = Rotation.random(random_state=0).as_matrix()
    T = rng.normal(size=3)
    w = np.ones(n)
    u, z, t = (np.ascontiguousarray(x) for x in (uvz[:, 0], uvz[:, 2], a[:, 0]))
    return {
        "backproject": lambda: kb.backproject(uvz, 1150.0, 1150.0, 500.0, 500.0),
        "map_rigid": lambda: kb.map_rigid(b, R, T),
        "map_rigid_inverse": lambda: kb.map_rigid_inverse(a, R, T),
        "rigid_objective": lambda: kb.rigid_objective(a, b, R, T, w),
        "weighted_cross_covariance": lambda: kb.weighted_cross_covariance(a, b, w),
        "focal_normal_sums": lambda: kb.focal_normal_sums(u, z, 500.0, t, w),
        "center_normal_sums": lambda: kb.center_normal_sums(u, z, 1150.0, t, w),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--points", type=int, default=1700)
    parser.add_argument("--repeat", type=int, default=200)
    args = parser.parse_args()

    backends = _kernels.available_backends()
    if len(backends) < 2:
        print("compiled kernels are not built; only the numpy fallback is available")
    names = [b.NAME for b in backends]
    print(f"{args.points} correspondences, best of 5 x {args.repeat} calls (microseconds per call)")
    print(f"{'kernel':28s}" + "".join(f"{n:>12s}" for n in names) + ("     speedup" if len(names) == 2 else ""))
    calls = {b.NAME: kernel_calls(b, args.points, np.random.default_rng(0)) for b in backends}
    for kernel in calls[names[0]]:
        times = [min(timeit.repeat(calls[n][kernel], number=args.repeat, repeat=5)) / args.repeat * 1e6
                 for n in names]
        line = f"{kernel:28s}" + "".join(f"{t:12.2f}" for t in times)
        if len(times) == 2:
            line += f"{times[0] / times[1]:11.1f}x"
        print(line)

    scene = generate_scene(n_cameras=2, n_frames=100, seed=0)
    rng = np.random.default_rng(0)
    init = [perturb_intrinsics(scene.calibration.intrinsics[c], 0.1, rng) for c in scene.camera_ids]
    cfg = OptimizerConfig(max_iter=200, rel_tol=0.0, image_size=scene.image_size)
    p1, p2 = (scene.observations[c] for c in scene.camera_ids)
    print("\nfull pair calibration, 200 iterations (ms)")
    results = {}
    for n in names:
        results[n] = min(timeit.repeat(lambda: calibrate_pair(p1, p2, cfg, init_1=init[0], init_2=init[1], backend=n),
                                       number=1, repeat=5)) * 1e3
        print(f"{n:28s}{results[n]:12.2f}")
    if len(names) == 2:
        print(f"{'speedup':28s}{results[names[0]] / results[names[1]]:11.1f}x")


if __name__ == "__main__":
    main()
