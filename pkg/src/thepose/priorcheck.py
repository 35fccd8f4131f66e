"""Property suites for the oracle prior: the three guarantees it must hold.

1. Rigid-motion invariance: the embedding is a function of the canonical
   surface point only; rendering pose never enters.
2. Symmetry consistency: symmetry-related surface points share embeddings.
3. Topological consistency: corresponding normalized surface parameters on
   different instances of a category collapse to (near-)identical
   embeddings, far closer than non-corresponding parts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Pose, backproject_depth, random_rotation
from .render import default_intrinsics, render_sample
from .shapes import ON_SURFACE_TOL, category_spec, generate_instance, oracle_prior


def corresponding_params(instances, n, rng, tol=ON_SURFACE_TOL):
    """Surface parameters valid (on the union surface) for every instance."""
    out = []
    guard = 0
    while len(out) < n and guard < 50:
        guard += 1
        for p in instances[0].correspondence_params(n, rng):
            ok = True
            for inst in instances:
                pt = inst.point_at(p)
                if abs(float(inst.implicit(pt[None])[0])) > tol:
                    ok = False
                    break
            if ok:
                out.append(p)
                if len(out) == n:
                    break
    return out


def check_se3_invariance(category, seed, n_poses=3, image=96):
    """Returns (f64 pose round-trip deviation, rendered f32 deviation)."""
    inst = generate_instance(category_spec(category), seed)
    rng = np.random.default_rng([seed, 101])
    pts, _, _ = inst.sample_surface(400, rng)
    base = oracle_prior(pts, inst)
    round_dev = 0.0
    for _ in range(5):
        R = random_rotation(rng)
        t = rng.standard_normal(3)
        back = (pts @ R.T + t - t) @ R
        round_dev = max(round_dev, float(np.abs(oracle_prior(back, inst, 1e-6)
                                                - base).max()))
    K = default_intrinsics(image, image)
    render_dev = 0.0
    for _ in range(n_poses):
        pose = Pose(random_rotation(rng),
                    np.array([0.0, 0.0, rng.uniform(4.5, 5.5)
                              * inst.bounding_radius]), inst.size)
        s = render_sample(inst, pose, K, n_points=64, seed=7)
        p3d, flat = backproject_depth(s.depth.astype(np.float64), s.mask, K)
        canonical = (p3d - pose.translation) @ pose.rotation
        emb = oracle_prior(canonical, inst, tol=1e-6)
        stored = s.prior_map.reshape(-1, s.prior_map.shape[-1])[flat]
        render_dev = max(render_dev, float(np.abs(emb - stored).max()))
    return round_dev, render_dev


def check_symmetry_consistency(category, seed, n=400):
    """Max embedding deviation across symmetry-related surface pairs."""
    spec = category_spec(category)
    inst = generate_instance(spec, seed)
    rng = np.random.default_rng([seed, 202])
    if spec.symmetry == "revolution":
        part = inst.parts[0]
        dev = 0.0
        for _ in range(n):
            region = part.regions()[int(rng.integers(len(part.regions())))]
            a = float(rng.uniform(0.02, 0.98))
            b1, b2 = rng.uniform(0.0, 1.0, 2)
            e1 = oracle_prior(part.point_at(region, a, b1), inst)
            e2 = oracle_prior(part.point_at(region, a, b2), inst)
            dev = max(dev, float(np.abs(e1 - e2).max()))
        return dev
    if spec.symmetry == "mirror":
        pts, _, _ = inst.sample_surface(n, rng)
        mirrored = pts * np.array([1.0, -1.0, 1.0])
        return float(np.abs(oracle_prior(pts, inst)
                            - oracle_prior(mirrored, inst)).max())
    return 0.0  # no declared symmetry


def check_topological_consistency(category, seed, n_instances=20, n_params=60):
    """(mean corresponding distance, mean non-corresponding distance)."""
    spec = category_spec(category)
    insts = [generate_instance(spec, seed + i) for i in range(n_instances)]
    rng = np.random.default_rng([seed, 303])
    params = corresponding_params(insts, n_params, rng)
    embs = np.array([
        oracle_prior(np.array([inst.point_at(p) for p in params]), inst)
        for inst in insts
    ])  # (I, P, E)
    corr = float(np.linalg.norm(embs - embs[0], axis=2).mean())
    mean_emb = embs.mean(axis=0)
    pair = np.linalg.norm(mean_emb[:, None, :] - mean_emb[None, :, :], axis=2)
    non = float(pair[~np.eye(len(params), dtype=bool)].mean())
    return corr, non


@dataclass(frozen=True)
class PriorCheckReport:
    category: str
    se3_roundtrip_dev: float
    se3_render_dev: float
    symmetry_dev: float
    topo_corresponding: float
    topo_non_corresponding: float

    @property
    def passed(self) -> bool:
        return (
            self.se3_roundtrip_dev < 1e-9
            and self.se3_render_dev < 1e-4
            and self.symmetry_dev < 1e-12
            and self.topo_corresponding < 0.2 * self.topo_non_corresponding
        )

    def line(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (f"{self.category:8s} {status}  se3={self.se3_roundtrip_dev:.1e}"
                f"/{self.se3_render_dev:.1e} sym={self.symmetry_dev:.1e} "
                f"topo={self.topo_corresponding:.2e}"
                f"<0.2*{self.topo_non_corresponding:.2e}")


def run_prior_checks(categories, seed, n_instances=20) -> list[PriorCheckReport]:
    reports = []
    for category in categories:
        r_dev, render_dev = check_se3_invariance(category, seed)
        sym = check_symmetry_consistency(category, seed)
        corr, non = check_topological_consistency(category, seed,
                                                  n_instances=n_instances)
        reports.append(PriorCheckReport(category, r_dev, render_dev, sym,
                                        corr, non))
    return reports
