"""Scene generation: random instances at random poses, rendered to samples."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import Error
from .geometry import Intrinsics, Pose, random_rotation
from .render import render_sample
from .shapes import category_code, category_spec, generate_instance


def scene_pose(instance, K: Intrinsics, rng) -> Pose:
    """Uniform random rotation; distance scaled to the instance size so the
    object covers a healthy pixel area and stays inside the frustum."""
    R = random_rotation(rng)
    rb = instance.bounding_radius
    z = rng.uniform(4.0, 6.0) * rb
    margin = 8.0
    max_u = z * (K.width / 2.0 - margin) / K.fx - rb
    max_v = z * (K.height / 2.0 - margin) / K.fy - rb
    x = rng.uniform(-1.0, 1.0) * max(max_u, 0.0)
    y = rng.uniform(-1.0, 1.0) * max(max_v, 0.0)
    return Pose(R, np.array([x, y, z]), instance.size)


def _one_scene(category, K, n_points, child_seq):
    rng = np.random.default_rng(child_seq)
    spec = category_spec(category)
    for _ in range(20):
        instance = generate_instance(spec, int(rng.integers(2**63)))
        pose = scene_pose(instance, K, rng)
        try:
            return render_sample(instance, pose, K, n_points,
                                 seed=int(rng.integers(2**63)))
        except Error as err:
            if err.kind != "too-small":
                raise
    raise Error("too-small", f"could not place a visible {category} in 20 tries")


def generate_scenes(category: str, count: int, n_points: int, K: Intrinsics,
                    seed: int, workers: int = 1):
    """Deterministic list of rendered scenes for one category."""
    root = np.random.SeedSequence([int(seed), category_code(category)])
    children = root.spawn(count)
    if workers <= 1:
        return [_one_scene(category, K, n_points, c) for c in children]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(_one_scene, category, K, n_points, c)
                for c in children]
        return [f.result() for f in futs]
