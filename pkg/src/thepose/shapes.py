"""Procedural category shapes and their analytic surface-structure prior.

Each instance is a union of solid parts (lathed profiles, boxes, torus
segments). Parts provide an implicit inside/outside function for ray
casting, area-weighted surface sampling, and a per-point embedding built
from symmetry-quotient normalized coordinates. The embedding depends only
on the canonical-frame point, so it is rigid-motion invariant by
construction; symmetry-related points collapse to the same value and
corresponding parts of different instances share coordinates.

Canonical frame: z is the object's up axis, the tight bounding box is
centered at the origin. Embeddings have 4 channels:
(height-like, radial-like, folded-azimuth-like, part label).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import Error

EMBED_DIM = 4
CATEGORIES = ("bottle", "bowl", "can", "laptop", "mug", "camera")
ON_SURFACE_TOL = 1e-6


@dataclass(frozen=True)
class CategorySpec:
    category: str
    symmetry: str  # "revolution" | "mirror" | "none"
    mean_size: np.ndarray
    params: dict = field(default_factory=dict)  # name -> (lo, hi)

    def __post_init__(self):
        object.__setattr__(
            self, "mean_size", np.asarray(self.mean_size, dtype=np.float64)
        )
        if not np.all(self.mean_size > 0):
            raise Error("shape", "mean_size must be positive")
        for name, (lo, hi) in self.params.items():
            if not lo <= hi:
                raise Error("shape", f"empty range for parameter {name!r}")


def _rigid(R=None, c=None):
    R = np.eye(3) if R is None else np.asarray(R, dtype=np.float64)
    c = np.zeros(3) if c is None else np.asarray(c, dtype=np.float64)
    return R, c


def _rot_y(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


class _Part:
    """Solid part: implicit function + surface sampler + local embedding."""

    def __init__(self, label, R=None, c=None):
        self.label = float(label)
        self.R, self.c = _rigid(R, c)

    def to_local(self, pts):
        return (np.asarray(pts, dtype=np.float64) - self.c) @ self.R

    def to_world(self, pts):
        return np.asarray(pts, dtype=np.float64) @ self.R.T + self.c

    # subclasses: _implicit_local, _embed_local, regions, _point_at_local,
    # _sample_local, area, local_aabb

    def implicit(self, pts):
        return self._implicit_local(self.to_local(pts))

    def embed3(self, pts):
        return self._embed_local(self.to_local(pts))

    def point_at(self, region, a, b):
        return self.to_world(self._point_at_local(region, a, b))

    def sample(self, n, rng):
        return self.to_world(self._sample_local(n, rng))

    def aabb(self):
        lo, hi = self.local_aabb()
        corners = np.array(
            [[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1])
             for z in (lo[2], hi[2])]
        )
        world = self.to_world(corners)
        return world.min(axis=0), world.max(axis=0)

    def recenter(self, shift):
        self.c = self.c - shift


class LathedSolid(_Part):
    """Closed solid of revolution around the local z axis.

    The profile is a piecewise-linear radius over height h in [0, H]; the
    solid is closed by flat caps at both ends. ``fold`` controls the third
    embedding slot: "drop" (revolution symmetry), "mirror" (|azimuth|/pi)
    or "azimuth" (full angle, normalized).
    """

    def __init__(self, knots_h, knots_r, fold="drop", label=0.0, R=None, c=None):
        super().__init__(label, R, c)
        self.kh = np.asarray(knots_h, dtype=np.float64)
        self.kr = np.asarray(knots_r, dtype=np.float64)
        self.H = float(self.kh[-1])
        self.fold = fold
        if self.kh[0] != 0.0 or np.any(np.diff(self.kh) <= 0):
            raise Error("shape", "profile heights must start at 0 and increase")

    def radius(self, h):
        return np.interp(np.clip(h, 0.0, self.H), self.kh, self.kr)

    def _implicit_local(self, q):
        h = q[:, 2]
        rho = np.hypot(q[:, 0], q[:, 1])
        return np.maximum.reduce([-h, h - self.H, rho - self.radius(h)])

    def _fold_val(self, q):
        if self.fold == "drop":
            return np.zeros(len(q))
        theta = np.arctan2(q[:, 1], q[:, 0])
        if self.fold == "mirror":
            return np.abs(theta) / np.pi
        return (theta + np.pi) / (2.0 * np.pi)

    def _embed_local(self, q):
        h = q[:, 2]
        rho = np.hypot(q[:, 0], q[:, 1])
        r_here = np.maximum(self.radius(h), 1e-12)
        out = np.empty((len(q), 3))
        out[:, 0] = np.clip(h / self.H, 0.0, 1.0)
        out[:, 1] = np.clip(rho / r_here, 0.0, 1.0)
        out[:, 2] = self._fold_val(q)
        return out

    def regions(self):
        regs = ["side", "bottom"]
        if self.kr[-1] > 1e-9:
            regs.append("top")
        return regs

    def _theta_from_b(self, b):
        if self.fold == "drop" or self.fold == "azimuth":
            return b * 2.0 * np.pi - np.pi
        return b * np.pi  # mirror: representative half

    def _point_at_local(self, region, a, b):
        theta = self._theta_from_b(b)
        if region == "side":
            h = a * self.H
            rho = self.radius(h)
        elif region == "bottom":
            h = 0.0
            rho = a * self.kr[0]
        elif region == "top":
            h = self.H
            rho = a * self.kr[-1]
        else:
            raise Error("shape", f"unknown region {region!r}")
        return np.array([rho * np.cos(theta), rho * np.sin(theta), h])

    def _segment_areas(self):
        r0, r1 = self.kr[:-1], self.kr[1:]
        dh = np.diff(self.kh)
        slant = np.sqrt(dh * dh + (r1 - r0) ** 2)
        return np.pi * (r0 + r1) * slant  # lateral area of each frustum

    def area(self):
        side = self._segment_areas().sum()
        caps = np.pi * (self.kr[0] ** 2 + self.kr[-1] ** 2)
        return float(side + caps)

    def _sample_local(self, n, rng):
        side_a = self._segment_areas()
        areas = np.array([side_a.sum(), np.pi * self.kr[0] ** 2,
                          np.pi * self.kr[-1] ** 2])
        counts = np.maximum((n * areas / areas.sum()).astype(int), 0)
        counts[0] += n - counts.sum()
        pts = []
        # side: pick a frustum segment by area, then uniform along it
        if counts[0] > 0:
            seg = rng.choice(len(side_a), size=counts[0], p=side_a / side_a.sum())
            u = rng.uniform(0, 1, counts[0])
            h = self.kh[seg] + u * (self.kh[seg + 1] - self.kh[seg])
            rho = self.radius(h)
            th = rng.uniform(-np.pi, np.pi, counts[0])
            pts.append(np.stack([rho * np.cos(th), rho * np.sin(th), h], 1))
        for cap_i, h in ((1, 0.0), (2, self.H)):
            m = counts[cap_i]
            if m <= 0:
                continue
            r_cap = self.kr[0] if cap_i == 1 else self.kr[-1]
            rho = r_cap * np.sqrt(rng.uniform(0, 1, m))
            th = rng.uniform(-np.pi, np.pi, m)
            pts.append(np.stack([rho * np.cos(th), rho * np.sin(th),
                                 np.full(m, h)], 1))
        return np.concatenate(pts, axis=0)

    def local_aabb(self):
        r = self.kr.max()
        return np.array([-r, -r, 0.0]), np.array([r, r, self.H])


class BoxSolid(_Part):
    """Axis-aligned box in its part frame; embedding = normalized box coords."""

    FACES = ("x-", "x+", "y-", "y+", "z-", "z+")

    def __init__(self, half, label=0.0, R=None, c=None):
        super().__init__(label, R, c)
        self.half = np.asarray(half, dtype=np.float64)

    def _implicit_local(self, q):
        return (np.abs(q) - self.half).max(axis=1)

    def _embed_local(self, q):
        return np.clip(q / (2.0 * self.half) + 0.5, 0.0, 1.0)

    def regions(self):
        return list(self.FACES)

    def _point_at_local(self, region, a, b):
        axis = "xyz".index(region[0])
        sign = 1.0 if region[1] == "+" else -1.0
        others = [i for i in range(3) if i != axis]
        p = np.zeros(3)
        p[axis] = sign * self.half[axis]
        p[others[0]] = (a - 0.5) * 2.0 * self.half[others[0]]
        p[others[1]] = (b - 0.5) * 2.0 * self.half[others[1]]
        return p

    def area(self):
        hx, hy, hz = self.half
        return float(8.0 * (hx * hy + hy * hz + hx * hz))

    def _sample_local(self, n, rng):
        hx, hy, hz = self.half
        face_areas = np.array([hy * hz, hy * hz, hx * hz, hx * hz,
                               hx * hy, hx * hy]) * 4.0
        face = rng.choice(6, size=n, p=face_areas / face_areas.sum())
        u = rng.uniform(0, 1, n)
        v = rng.uniform(0, 1, n)
        pts = np.empty((n, 3))
        for f in range(6):
            m = face == f
            if not m.any():
                continue
            axis, sign = divmod(f, 2)
            others = [i for i in range(3) if i != axis]
            pts[m, axis] = (1.0 if sign else -1.0) * self.half[axis]
            pts[m, others[0]] = (u[m] - 0.5) * 2.0 * self.half[others[0]]
            pts[m, others[1]] = (v[m] - 0.5) * 2.0 * self.half[others[1]]
        return pts

    def local_aabb(self):
        return -self.half.copy(), self.half.copy()


class TorusSegment(_Part):
    """Tube swept along a circular arc in the local x-z plane (mug handle).

    The arc is centered at ``center`` with ring radius R, tube radius r,
    sweeping psi in [-psi_max, psi_max] measured from +x. The mirror fold
    uses the tube angle, which flips sign under y negation.
    """

    def __init__(self, center, ring_radius, tube_radius, psi_max,
                 label=1.0, R=None, c=None):
        super().__init__(label, R, c)
        self.center = np.asarray(center, dtype=np.float64)
        self.ring_r = float(ring_radius)
        self.tube_r = float(tube_radius)
        self.psi_max = float(psi_max)

    def _implicit_local(self, q):
        d = q - self.center
        in_plane = np.hypot(d[:, 0], d[:, 2])
        ring = np.hypot(in_plane - self.ring_r, d[:, 1]) - self.tube_r
        psi = np.abs(np.arctan2(d[:, 2], d[:, 0]))
        # the wedge term is angle-valued; only its sign matters for the union
        return np.maximum(ring, psi - self.psi_max)

    def _embed_local(self, q):
        d = q - self.center
        in_plane = np.hypot(d[:, 0], d[:, 2])
        psi = np.arctan2(d[:, 2], d[:, 0])
        xi = np.arctan2(d[:, 1], in_plane - self.ring_r)
        out = np.empty((len(q), 3))
        out[:, 0] = np.clip((psi + self.psi_max) / (2.0 * self.psi_max), 0.0, 1.0)
        out[:, 1] = np.abs(xi) / np.pi
        out[:, 2] = 0.0
        return out

    def regions(self):
        return ["tube"]

    def _point_at_local(self, region, a, b):
        if region != "tube":
            raise Error("shape", f"unknown region {region!r}")
        psi = -self.psi_max + 2.0 * a * self.psi_max
        xi = b * np.pi  # mirror representative half
        radial = self.ring_r + self.tube_r * np.cos(xi)
        p = self.center + np.array(
            [radial * np.cos(psi), self.tube_r * np.sin(xi), radial * np.sin(psi)]
        )
        return p

    def area(self):
        return float(2.0 * self.psi_max * self.ring_r * 2.0 * np.pi * self.tube_r)

    def _sample_local(self, n, rng):
        psi = rng.uniform(-self.psi_max, self.psi_max, n)
        xi = rng.uniform(-np.pi, np.pi, n)
        radial = self.ring_r + self.tube_r * np.cos(xi)
        return self.center + np.stack(
            [radial * np.cos(psi), self.tube_r * np.sin(xi),
             radial * np.sin(psi)], axis=1
        )

    def local_aabb(self):
        lo = self.center - np.array([self.ring_r + self.tube_r, self.tube_r,
                                     self.ring_r + self.tube_r])
        hi = self.center + np.array([self.ring_r + self.tube_r, self.tube_r,
                                     self.ring_r + self.tube_r])
        return lo, hi


@dataclass
class Instance:
    """One generated shape: a union of parts in the canonical frame."""

    spec: CategorySpec
    seed: int
    parts: list
    size: np.ndarray = None
    bounding_radius: float = 0.0

    def finalize(self):
        los, his = zip(*[p.aabb() for p in self.parts])
        lo = np.min(los, axis=0)
        hi = np.max(his, axis=0)
        shift = (lo + hi) / 2.0
        for p in self.parts:
            p.recenter(shift)
        self.size = hi - lo
        self.bounding_radius = float(np.linalg.norm(self.size) / 2.0)
        return self

    def implicit(self, pts):
        vals = np.stack([p.implicit(pts) for p in self.parts], axis=0)
        return vals.min(axis=0)

    def embed(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        vals = np.stack([np.abs(p.implicit(pts)) for p in self.parts], axis=0)
        owner = vals.argmin(axis=0)
        out = np.empty((len(pts), EMBED_DIM))
        for i, part in enumerate(self.parts):
            m = owner == i
            if m.any():
                out[m, :3] = part.embed3(pts[m])
                out[m, 3] = part.label
        return out

    def sample_surface(self, n, rng):
        """Surface points with outward normals and embeddings.

        Points landing strictly inside another part (hidden union interior)
        are rejected.
        """
        areas = np.array([p.area() for p in self.parts])
        counts = np.maximum((1.3 * n * areas / areas.sum()).astype(int), 8)
        pts = []
        for part, m in zip(self.parts, counts):
            cand = part.sample(int(m), rng)
            keep = self.implicit(cand) > -ON_SURFACE_TOL
            pts.append(cand[keep])
        pts = np.concatenate(pts, axis=0)
        if len(pts) > n:
            pts = pts[rng.choice(len(pts), size=n, replace=False)]
        normals = self._numeric_normals(pts)
        return pts, normals, self.embed(pts)

    def _numeric_normals(self, pts, h=1e-6):
        g = np.empty_like(pts)
        for d in range(3):
            dp = np.zeros(3)
            dp[d] = h
            g[:, d] = (self.implicit(pts + dp) - self.implicit(pts - dp)) / (2 * h)
        norm = np.linalg.norm(g, axis=1, keepdims=True)
        return g / np.maximum(norm, 1e-12)

    def correspondence_params(self, n, rng):
        """Instance-independent surface parameters (part, region, a, b)."""
        out = []
        for _ in range(n):
            pi = int(rng.integers(0, len(self.parts)))
            region = self.parts[pi].regions()[
                int(rng.integers(0, len(self.parts[pi].regions())))
            ]
            out.append((pi, region, float(rng.uniform(0.05, 0.95)),
                        float(rng.uniform(0.05, 0.95))))
        return out

    def point_at(self, param):
        pi, region, a, b = param
        return self.parts[pi].point_at(region, a, b)


def oracle_prior(points, instance: Instance, tol=ON_SURFACE_TOL):
    """Embedding of on-surface canonical-frame points; rejects off-surface."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    dist = np.abs(instance.implicit(pts))
    if dist.max() > tol:
        raise Error("off-surface",
                    f"point is {dist.max():.2e} from the surface (tol {tol:g})")
    return instance.embed(pts)


def category_spec(name: str) -> CategorySpec:
    if name not in _SPECS:
        raise Error("config", f"unknown category {name!r}")
    return _SPECS[name]


def category_code(name: str) -> int:
    return CATEGORIES.index(name)


def _u(rng, spec, key):
    lo, hi = spec.params[key]
    return rng.uniform(lo, hi)


def _build_bottle(spec, rng):
    height = _u(rng, spec, "height")
    r_body = _u(rng, spec, "body_radius")
    r_neck = r_body * _u(rng, spec, "neck_ratio")
    shoulder = height * _u(rng, spec, "shoulder_frac")
    neck_start = shoulder + height * 0.12
    body = LathedSolid(
        [0.0, shoulder, neck_start, height],
        [r_body, r_body, r_neck, r_neck],
        fold="drop",
    )
    return [body]


def _build_bowl(spec, rng):
    height = _u(rng, spec, "height")
    r_top = _u(rng, spec, "top_radius")
    r_base = r_top * _u(rng, spec, "base_ratio")
    hs = np.linspace(0.0, height, 7)
    rs = r_base + (r_top - r_base) * (hs / height) ** 0.65
    return [LathedSolid(hs, rs, fold="drop")]


def _build_can(spec, rng):
    height = _u(rng, spec, "height")
    r = _u(rng, spec, "radius")
    return [LathedSolid([0.0, height], [r, r], fold="drop")]


def _build_laptop(spec, rng):
    depth = _u(rng, spec, "depth")
    width = _u(rng, spec, "width")
    t_base = _u(rng, spec, "base_thickness")
    lid_len = depth * _u(rng, spec, "lid_ratio")
    t_lid = t_base * 0.6
    phi = np.radians(_u(rng, spec, "open_deg"))
    base = BoxSolid([depth / 2, width / 2, t_base / 2],
                    c=[0.0, 0.0, t_base / 2], label=0.0)
    # lid frame: +x runs from the hinge along the screen
    hinge = np.array([-depth / 2, 0.0, t_base])
    R = _rot_y(-phi)
    lid = BoxSolid([lid_len / 2, width / 2, t_lid / 2], label=1.0, R=R,
                   c=hinge + R @ np.array([lid_len / 2, 0.0, 0.0]))
    return [base, lid]


def _build_mug(spec, rng):
    height = _u(rng, spec, "height")
    r = _u(rng, spec, "radius")
    body = LathedSolid([0.0, height], [r, r], fold="mirror", label=0.0)
    ring_r = height * _u(rng, spec, "handle_ratio")
    tube_r = np.clip(0.22 * ring_r, 0.004, 0.012)
    handle = TorusSegment(
        center=[r * 0.55, 0.0, height / 2.0],
        ring_radius=ring_r,
        tube_radius=tube_r,
        psi_max=np.radians(72.0),
        label=1.0,
    )
    return [body, handle]


def _build_camera(spec, rng):
    hx = _u(rng, spec, "body_depth") / 2
    hy = _u(rng, spec, "body_width") / 2
    hz = _u(rng, spec, "body_height") / 2
    body = BoxSolid([hx, hy, hz], c=[0.0, 0.0, hz], label=0.0)
    lens_r = _u(rng, spec, "lens_radius")
    lens_len = _u(rng, spec, "lens_length")
    # lens axis along +x, starting just inside the front face
    lens = LathedSolid(
        [0.0, lens_len + 0.004], [lens_r, lens_r], fold="azimuth", label=1.0,
        R=_rot_y(np.pi / 2.0), c=[hx - 0.004, 0.0, hz],
    )
    return [body, lens]


_BUILDERS = {
    "bottle": _build_bottle,
    "bowl": _build_bowl,
    "can": _build_can,
    "laptop": _build_laptop,
    "mug": _build_mug,
    "camera": _build_camera,
}

_SPECS = {
    "bottle": CategorySpec("bottle", "revolution", [0.072, 0.072, 0.22], {
        "height": (0.18, 0.26), "body_radius": (0.030, 0.042),
        "neck_ratio": (0.35, 0.55), "shoulder_frac": (0.55, 0.70),
    }),
    "bowl": CategorySpec("bowl", "revolution", [0.17, 0.17, 0.07], {
        "height": (0.055, 0.085), "top_radius": (0.075, 0.095),
        "base_ratio": (0.35, 0.55),
    }),
    "can": CategorySpec("can", "revolution", [0.068, 0.068, 0.115], {
        "height": (0.09, 0.14), "radius": (0.028, 0.040),
    }),
    "laptop": CategorySpec("laptop", "none", [0.33, 0.31, 0.26], {
        "depth": (0.24, 0.32), "width": (0.26, 0.36),
        "base_thickness": (0.012, 0.020), "lid_ratio": (0.90, 1.05),
        "open_deg": (95.0, 120.0),
    }),
    "mug": CategorySpec("mug", "mirror", [0.115, 0.085, 0.095], {
        "height": (0.08, 0.11), "radius": (0.035, 0.050),
        "handle_ratio": (0.28, 0.34),
    }),
    "camera": CategorySpec("camera", "none", [0.085, 0.095, 0.065], {
        "body_depth": (0.050, 0.065), "body_width": (0.080, 0.110),
        "body_height": (0.055, 0.075), "lens_radius": (0.014, 0.020),
        "lens_length": (0.018, 0.032),
    }),
}


def generate_instance(spec: CategorySpec, seed: int) -> Instance:
    """Deterministic parametric instance for (spec, seed)."""
    rng = np.random.default_rng([int(seed), category_code(spec.category)])
    parts = _BUILDERS[spec.category](spec, rng)
    return Instance(spec=spec, seed=int(seed), parts=parts).finalize()
