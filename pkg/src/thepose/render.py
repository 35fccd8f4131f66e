"""Scene rendering: exact ray-cast z-buffer of a posed instance.

Rays go through integer pixel centers, parametrized as p(t) = t * d with
d = ((u-cx)/fx, (v-cy)/fy, 1), so the stored depth IS the ray parameter
and back-projecting a pixel reproduces the exact surface hit. Hits are
found by marching the implicit function and refining with bisection, which
keeps every masked pixel's depth consistent with the analytic surface to
machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import Error
from .geometry import Intrinsics, Pose, backproject_depth, sample_points
from .shapes import EMBED_DIM, Instance

MIN_VISIBLE_PIXELS = 50
_MARCH_STEP = 0.0025  # meters; below the thinnest feature (mug handle tube)


@dataclass(frozen=True)
class SceneSample:
    """One rendered object view plus its oracle prior.

    Array dtypes match the on-disk format: f32 grids and point data, bool
    mask, u32 pixel indices. ``prior_map`` is zero outside the mask and the
    per-point ``embeddings`` equal prior_map at each point's source pixel.
    """

    cloud: np.ndarray  # n x 3 f32, camera frame
    pixel_indices: np.ndarray  # n u32, flat row-major
    embeddings: np.ndarray  # n x E f32
    prior_map: np.ndarray  # H x W x E f32
    mask: np.ndarray  # H x W bool
    depth: np.ndarray  # H x W f32
    intrinsics: Intrinsics
    category: str
    gt: Pose
    seed: int

    @property
    def n_points(self):
        return len(self.cloud)


def _candidate_rays(pose: Pose, radius, K: Intrinsics):
    """Pixel rect covering the projected bounding sphere, and ray dirs."""
    cx, cy, cz = pose.translation
    near = max(cz - radius, 0.05)
    ru = int(np.ceil(K.fx * radius / near)) + 1
    rv = int(np.ceil(K.fy * radius / near)) + 1
    u0 = int(round(K.fx * cx / cz + K.cx))
    v0 = int(round(K.fy * cy / cz + K.cy))
    us = np.arange(max(u0 - ru, 0), min(u0 + ru + 1, K.width))
    vs = np.arange(max(v0 - rv, 0), min(v0 + rv + 1, K.height))
    if us.size == 0 or vs.size == 0:
        return None
    uu, vv = np.meshgrid(us, vs)
    flat = (vv * K.width + uu).ravel()
    dirs = np.stack(
        [(uu.ravel() - K.cx) / K.fx, (vv.ravel() - K.cy) / K.fy,
         np.ones(flat.size)], axis=1
    )
    return flat, dirs


def _ray_cast(instance: Instance, pose: Pose, flat, dirs, chunk=4096):
    """First intersection per ray; returns (hit flat idx, t, canonical hits)."""
    R, trans = pose.rotation, pose.translation
    radius = instance.bounding_radius
    hit_flat, hit_t, hit_q = [], [], []
    for lo in range(0, len(dirs), chunk):
        d = dirs[lo : lo + chunk]
        fl = flat[lo : lo + chunk]
        a = (d * d).sum(axis=1)
        b = -2.0 * d @ trans
        c0 = trans @ trans - radius * radius
        disc = b * b - 4.0 * a * c0
        ok = disc > 0.0
        if not ok.any():
            continue
        d, fl = d[ok], fl[ok]
        sq = np.sqrt(disc[ok])
        t0 = np.maximum((-b[ok] - sq) / (2 * a[ok]), 1e-3)
        t1 = (-b[ok] + sq) / (2 * a[ok])
        steps = int(np.ceil(2.0 * radius / _MARCH_STEP)) + 1
        ts = t0[:, None] + (t1 - t0)[:, None] * np.linspace(0.0, 1.0, steps)

        def f_of(t_mat, d=d):
            pts = t_mat[..., None] * d[:, None, :]
            q = (pts.reshape(-1, 3) - trans) @ R
            return instance.implicit(q).reshape(t_mat.shape)

        inside = f_of(ts) < 0.0
        any_hit = inside.any(axis=1)
        if not any_hit.any():
            continue
        d, fl, ts, inside = d[any_hit], fl[any_hit], ts[any_hit], inside[any_hit]
        first = inside.argmax(axis=1)  # first inside sample; never index 0
        rows = np.arange(len(d))
        lo_t = ts[rows, np.maximum(first - 1, 0)]
        hi_t = ts[rows, first]
        for _ in range(60):
            mid = 0.5 * (lo_t + hi_t)
            m_in = (mid[:, None] * d - trans) @ R
            ins = instance.implicit(m_in) < 0.0
            hi_t = np.where(ins, mid, hi_t)
            lo_t = np.where(ins, lo_t, mid)
        t_star = 0.5 * (lo_t + hi_t)
        q = (t_star[:, None] * d - trans) @ R
        hit_flat.append(fl)
        hit_t.append(t_star)
        hit_q.append(q)
    if not hit_flat:
        return np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros((0, 3))
    return (np.concatenate(hit_flat), np.concatenate(hit_t),
            np.concatenate(hit_q, axis=0))


def render_sample(instance: Instance, pose: Pose, K: Intrinsics, n_points: int,
                  seed: int) -> SceneSample:
    """Rasterize the posed instance, then sample the back-projected cloud."""
    cand = _candidate_rays(pose, instance.bounding_radius, K)
    if cand is None:
        raise Error("too-small", "object projects outside the image")
    flat, t_star, q = _ray_cast(instance, pose, *cand)
    if len(flat) < MIN_VISIBLE_PIXELS:
        raise Error("too-small", f"only {len(flat)} visible pixels")
    h, w = K.height, K.width
    depth = np.zeros((h, w), dtype=np.float32)
    mask = np.zeros((h, w), dtype=bool)
    prior = np.zeros((h, w, EMBED_DIM), dtype=np.float32)
    depth.ravel()[flat] = t_star
    mask.ravel()[flat] = True
    prior.reshape(-1, EMBED_DIM)[flat] = instance.embed(q)
    return _sample_from_grids(depth, mask, prior, K, n_points, seed,
                              instance.spec.category,
                              Pose(pose.rotation, pose.translation,
                                   instance.size))


def _sample_from_grids(depth, mask, prior, K, n_points, seed, category, gt,
                       orig_seed=None):
    pts, flat_idx = backproject_depth(depth.astype(np.float64), mask, K)
    cloud, sel = sample_points(pts, n_points, seed)
    pix = flat_idx[sel].astype(np.uint32)
    emb = prior.reshape(-1, prior.shape[-1])[pix]
    return SceneSample(
        cloud=cloud.astype(np.float32),
        pixel_indices=pix,
        embeddings=emb.copy(),
        prior_map=prior,
        mask=mask,
        depth=depth,
        intrinsics=K,
        category=category,
        gt=gt,
        seed=int(seed if orig_seed is None else orig_seed),
    )


def apply_occlusion(sample: SceneSample, fraction: float, seed: int) -> SceneSample:
    """Drop a uniformly random pixel fraction and resample the point cloud."""
    if not 0.0 <= fraction < 1.0:
        raise Error("shape", "occlusion fraction must be in [0, 1)")
    rng = np.random.default_rng(seed)
    on = np.flatnonzero(sample.mask.ravel())
    n_remove = int(np.floor(fraction * on.size))
    removed = rng.choice(on.size, size=n_remove, replace=False)
    mask = sample.mask.copy()
    depth = sample.depth.copy()
    prior = sample.prior_map.copy()
    gone = on[removed]
    mask.ravel()[gone] = False
    depth.ravel()[gone] = 0.0
    prior.reshape(-1, prior.shape[-1])[gone] = 0.0
    if mask.sum() < MIN_VISIBLE_PIXELS:
        raise Error("too-small", f"only {int(mask.sum())} pixels survive occlusion")
    return _sample_from_grids(depth, mask, prior, sample.intrinsics,
                              sample.n_points, int(rng.integers(2**63)),
                              sample.category, sample.gt, orig_seed=sample.seed)


def with_external_prior(sample: SceneSample, prior_map) -> SceneSample:
    """Swap in an externally produced H x W x E prior map (backbone hook)."""
    pm = np.ascontiguousarray(prior_map, dtype=np.float32)
    if pm.ndim != 3 or pm.shape[:2] != sample.mask.shape:
        raise Error("shape", "external prior must be H x W x E")
    pm = pm * sample.mask[:, :, None]
    emb = pm.reshape(-1, pm.shape[-1])[sample.pixel_indices]
    return replace(sample, prior_map=pm, embeddings=emb.copy())


def default_intrinsics(height=128, width=128, focal=None) -> Intrinsics:
    f = float(focal) if focal is not None else 2.0 * max(height, width)
    return Intrinsics(fx=f, fy=f, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                      width=width, height=height)
