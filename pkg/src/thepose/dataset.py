"""Binary dataset persistence, bit-exact round trips.

Layout (little-endian): magic "THEPOSE-DATA", version u32, sample count
u32, then per sample:
  category u8; H, W, E u16; fx, fy, cx, cy f64;
  mask bitset (ceil(H*W/8) bytes, row-major, MSB-first);
  depth f32 at masked pixels (row-major order);
  prior f32 at masked pixels (row-major, E per pixel);
  n_points u32; points f32 (n x 3); embeddings f32 (n x E);
  pixel indices u32 (n); gt pose 9+3+3 f64; seed u64.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import Error
from .geometry import Intrinsics, Pose
from .render import SceneSample
from .shapes import CATEGORIES

DATA_MAGIC = b"THEPOSE-DATA"
DATA_VERSION = 1


def dataset_write(samples, path):
    samples = list(samples)
    with open(path, "wb") as f:
        f.write(DATA_MAGIC)
        f.write(struct.pack("<II", DATA_VERSION, len(samples)))
        for s in samples:
            h, w = s.mask.shape
            e = s.prior_map.shape[-1]
            K = s.intrinsics
            f.write(struct.pack("<B", CATEGORIES.index(s.category)))
            f.write(struct.pack("<HHH", h, w, e))
            f.write(struct.pack("<4d", K.fx, K.fy, K.cx, K.cy))
            f.write(np.packbits(s.mask.ravel()).tobytes())
            on = s.mask.ravel()
            f.write(s.depth.ravel()[on].astype("<f4").tobytes())
            f.write(s.prior_map.reshape(-1, e)[on].astype("<f4").tobytes())
            f.write(struct.pack("<I", s.n_points))
            f.write(s.cloud.astype("<f4").tobytes())
            f.write(s.embeddings.astype("<f4").tobytes())
            f.write(s.pixel_indices.astype("<u4").tobytes())
            f.write(s.gt.rotation.astype("<f8").tobytes())
            f.write(s.gt.translation.astype("<f8").tobytes())
            f.write(s.gt.size.astype("<f8").tobytes())
            f.write(struct.pack("<Q", s.seed))


def dataset_read(path):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[: len(DATA_MAGIC)] != DATA_MAGIC:
        raise Error("bad-magic", f"{path} is not a dataset file")
    off = len(DATA_MAGIC)

    def take(n):
        nonlocal off
        if off + n > len(blob):
            raise Error("truncated", f"dataset {path} ends early")
        out = blob[off : off + n]
        off += n
        return out

    version, count = struct.unpack("<II", take(8))
    if version != DATA_VERSION:
        raise Error("bad-version", f"dataset version {version}")
    samples = []
    for _ in range(count):
        (cat_code,) = struct.unpack("<B", take(1))
        h, w, e = struct.unpack("<HHH", take(6))
        fx, fy, cx, cy = struct.unpack("<4d", take(32))
        mask_bytes = take((h * w + 7) // 8)
        mask = np.unpackbits(np.frombuffer(mask_bytes, dtype=np.uint8))[: h * w]
        mask = mask.astype(bool).reshape(h, w)
        m = int(mask.sum())
        depth = np.zeros((h, w), dtype=np.float32)
        depth[mask] = np.frombuffer(take(4 * m), dtype="<f4")
        prior = np.zeros((h, w, e), dtype=np.float32)
        prior[mask] = np.frombuffer(take(4 * m * e), dtype="<f4").reshape(m, e)
        (n,) = struct.unpack("<I", take(4))
        cloud = np.frombuffer(take(12 * n), dtype="<f4").reshape(n, 3).copy()
        emb = np.frombuffer(take(4 * n * e), dtype="<f4").reshape(n, e).copy()
        pix = np.frombuffer(take(4 * n), dtype="<u4").copy()
        R = np.frombuffer(take(72), dtype="<f8").reshape(3, 3)
        t = np.frombuffer(take(24), dtype="<f8")
        size = np.frombuffer(take(24), dtype="<f8")
        (seed,) = struct.unpack("<Q", take(8))
        samples.append(SceneSample(
            cloud=cloud, pixel_indices=pix, embeddings=emb, prior_map=prior,
            mask=mask, depth=depth,
            intrinsics=Intrinsics(fx=fx, fy=fy, cx=cx, cy=cy, width=w, height=h),
            category=CATEGORIES[cat_code], gt=Pose(R.copy(), t.copy(), size.copy()),
            seed=seed,
        ))
    if off != len(blob):
        raise Error("truncated", "trailing bytes after the last sample")
    return samples
