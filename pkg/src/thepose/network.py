"""Feature network: prior refinement, global context pooling, graph
convolution layers with hybrid receptive fields, and the fusion stream.

The trainable path works on a Tape with per-sample constants precomputed in
a PreparedSample (positional encoding, the pure point-distance graph, the
pixel-row lookup). Neighbor graphs are rebuilt from the current features on
every forward pass and held constant for gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Tensor
from .errors import Error
from .geometry import positional_encoding
from .graph import blended_matrix, build_receptive_field, pairwise_euclidean
from .optim import ParamStore


@dataclass(frozen=True)
class HgfConfig:
    """Network hyperparameters; defaults follow the reference setup."""

    k: int = 15
    alpha1: float = 0.8
    alpha2: float = 0.2
    refine_channels: int = 32  # C: refined prior width
    tgc_width: int = 64  # global context vector width
    gc_widths: tuple = (64, 64, 128, 128, 256)  # surface layer + 4 HGF layers
    global_width: int = 256
    head_hidden: int = 128
    pe_bands: int = 6
    embed_dim: int = 4
    outlier_mean: bool = True

    def __post_init__(self):
        if not (0.0 <= self.alpha1 <= 1.0 and 0.0 <= self.alpha2 <= 1.0):
            raise Error("config", "alpha values must be in [0, 1]")
        if self.k < 1:
            raise Error("config", "k must be >= 1")
        if len(self.gc_widths) != 5:
            raise Error("config", "gc_widths needs 5 entries (surface + 4 HGF)")
        if self.pe_bands < 0:
            raise Error("config", "pe_bands must be >= 0")

    @property
    def pe_width(self):
        return 6 * self.pe_bands

    @property
    def n_hgf_layers(self):
        return len(self.gc_widths) - 1

    @property
    def fused_width(self):
        return sum(self.gc_widths) + self.global_width

    @property
    def pose_width(self):
        return self.tgc_width + self.fused_width


def hgf_input_widths(cfg: HgfConfig):
    """Input feature width of each of the four HGF layers."""
    w = cfg.gc_widths
    return (cfg.refine_channels + w[0], w[1], w[2], w[3])


def init_params(cfg: HgfConfig, seed: int) -> ParamStore:
    """He-style initialization, deterministic in the seed."""
    rng = np.random.default_rng([int(seed), 77])
    store = ParamStore()

    def dense(name, fan_in, fan_out, gain=2.0):
        std = np.sqrt(gain / fan_in)
        store.add(f"{name}.W", std * rng.standard_normal((fan_in, fan_out)))
        store.add(f"{name}.b", np.zeros((1, fan_out)))

    def edge(name, node_width, fan_out):
        # the edge MLP weight over [f_i, f_j - f_i], stored as its two blocks
        std = np.sqrt(2.0 / (2 * node_width))
        full = std * rng.standard_normal((2 * node_width, fan_out))
        store.add(f"{name}.Wself", full[:node_width].copy())
        store.add(f"{name}.Wdiff", full[node_width:].copy())
        store.add(f"{name}.b", np.zeros((1, fan_out)))

    e, c = cfg.embed_dim, cfg.refine_channels
    dense("refine", e, c)
    dense("tgc.score", c, 1, gain=1.0)
    dense("tgc.fc1", c, cfg.tgc_width)
    dense("tgc.fc2", cfg.tgc_width, cfg.tgc_width, gain=1.0)
    edge("gc1", 3, cfg.gc_widths[0])
    for i, width_in in enumerate(hgf_input_widths(cfg)):
        node = width_in + cfg.pe_width
        dense(f"hgf{i + 1}.spatial", node, cfg.gc_widths[i + 1])
        edge(f"hgf{i + 1}.edge", node, cfg.gc_widths[i + 1])
    dense("global", cfg.gc_widths[-1], cfg.global_width, gain=1.0)
    dense("head.rot.fc1", cfg.pose_width, cfg.head_hidden)
    dense("head.rot.fc2", cfg.head_hidden, 6, gain=1.0)
    dense("head.ts.fc1", cfg.pose_width + 3, cfg.head_hidden)
    dense("head.ts.fc2", cfg.head_hidden, 6, gain=1.0)
    return store


@dataclass
class PreparedSample:
    """Per-sample constants shared by every forward pass."""

    cloud: np.ndarray  # N x 3 f64
    pe: np.ndarray  # N x pe_width f64
    prior_pixels: np.ndarray  # M x E f64, masked pixels in row-major order
    point_rows: np.ndarray  # N, row of each point's pixel in prior_pixels
    nbr0: np.ndarray  # N x k pure point-distance graph
    centroid: np.ndarray  # 3
    category: str
    gt: object  # Pose
    n_mask: int


def prepare_sample(sample, cfg: HgfConfig) -> PreparedSample:
    cloud = sample.cloud.astype(np.float64)
    flat_mask = np.flatnonzero(sample.mask.ravel())
    rows = np.searchsorted(flat_mask, sample.pixel_indices)
    if np.any(flat_mask[rows] != sample.pixel_indices):
        raise Error("index", "point pixel index outside the mask")
    e = sample.prior_map.shape[-1]
    prior_pixels = sample.prior_map.reshape(-1, e)[flat_mask].astype(np.float64)
    pe = (positional_encoding(cloud, cfg.pe_bands)
          if cfg.pe_bands > 0 else np.zeros((len(cloud), 0)))
    nbr0 = build_receptive_field(None, cloud, cfg.k, 0.0).neighbors
    return PreparedSample(
        cloud=cloud, pe=pe, prior_pixels=prior_pixels,
        point_rows=rows.astype(np.int64), nbr0=nbr0,
        centroid=cloud.mean(axis=0), category=sample.category, gt=sample.gt,
        n_mask=len(flat_mask),
    )


# -- tape-level building blocks -------------------------------------------


def dense_t(tape: Tape, x: Tensor, store, name, relu=True) -> Tensor:
    out = tape.linear(x, tape.param(store, f"{name}.W"),
                      tape.param(store, f"{name}.b"))
    return tape.relu(out) if relu else out


def refine_pixels_t(tape: Tape, prior_pixels: Tensor, store) -> Tensor:
    """Per-pixel linear + relu on masked-pixel rows (the 1x1 conv)."""
    return dense_t(tape, prior_pixels, store, "refine")


def tgc_t(tape: Tape, refined: Tensor, store) -> Tensor:
    """Masked attention pooling + 2-layer MLP -> 1 x tgc_width."""
    scores = dense_t(tape, refined, store, "tgc.score", relu=False)
    pooled = tape.softmax_pool(scores, refined)
    return dense_t(tape, dense_t(tape, pooled, store, "tgc.fc1"),
                   store, "tgc.fc2", relu=False)


def gc_layer_t(tape: Tape, node_feats: Tensor, neighbors, store, name) -> Tensor:
    """Edge convolution: max over neighbors of relu(W [f_i, f_j - f_i] + b).

    The edge linear map splits into per-point terms,
    f_i (Wself - Wdiff) + f_j Wdiff, so the gemms run on N rows and only
    the pairwise max touches edge-sized arrays. relu and max commute.
    """
    w_self = tape.param(store, f"{name}.Wself")
    w_diff = tape.param(store, f"{name}.Wdiff")
    bias = tape.param(store, f"{name}.b")
    a = tape.linear(node_feats, tape.sub(w_self, w_diff), bias)
    zero_b = tape.leaf(np.zeros((1, w_diff.shape[1])))
    b = tape.linear(node_feats, w_diff, zero_b)
    return tape.relu(tape.neighbor_max_sum(a, b, neighbors))


def hgf_layer_t(tape: Tape, feats: Tensor, prep: PreparedSample, store,
                name, cfg: HgfConfig, d_point, graph_cache=None) -> Tensor:
    """Two-path block: spatial encoding + graph path, summed elementwise.

    The alpha1 graph picks neighbors for the convolution; the alpha2 graph
    (heavier point-distance weight) drives the outlier-robust mean. Both are
    built from the layer's input features and frozen for gradients; passing
    a graph_cache dict pins them across calls (frozen-graph checks).
    """
    if cfg.pe_width > 0:
        node = tape.concat([feats, tape.leaf(prep.pe)])
    else:
        node = feats
    path1 = dense_t(tape, node, store, f"{name}.spatial")
    if graph_cache is not None and name in graph_cache:
        nbr1, nbr2 = graph_cache[name]
    else:
        d_feat = pairwise_euclidean(feats.data)
        nbr1 = build_receptive_field(None, prep.cloud, cfg.k, cfg.alpha1,
                                     d_feat=d_feat, d_point=d_point).neighbors
        nbr2 = (build_receptive_field(None, prep.cloud, cfg.k, cfg.alpha2,
                                      d_feat=d_feat, d_point=d_point).neighbors
                if cfg.outlier_mean else None)
        if graph_cache is not None:
            graph_cache[name] = (nbr1, nbr2)
    path2 = gc_layer_t(tape, node, nbr1, store, f"{name}.edge")
    if cfg.outlier_mean:
        path2 = tape.mean_over_groups(path2, nbr2)
    return tape.add(path1, path2)


def fusion_stream_t(tape: Tape, prep: PreparedSample, store,
                    cfg: HgfConfig, graph_cache=None):
    """Surface layer + topo features -> 4 HGF layers -> fused per-point
    features plus the hybrid global feature. Returns (F_fused, F_global,
    F_topo_global)."""
    n = len(prep.cloud)
    cloud_t = tape.leaf(prep.cloud)
    d_point = pairwise_euclidean(prep.cloud)

    refined = refine_pixels_t(tape, tape.leaf(prep.prior_pixels), store)
    topo_global = tgc_t(tape, refined, store)
    topo_points = tape.gather_rows(refined, prep.point_rows)

    surface = gc_layer_t(tape, cloud_t, prep.nbr0, store, "gc1")
    per_layer = [surface]
    h = tape.concat([topo_points, surface])
    for i in range(cfg.n_hgf_layers):
        if i in (1, 3):  # alternate: pool over point-distance neighbors
            h = tape.max_over_groups(h, prep.nbr0)
        h = hgf_layer_t(tape, h, prep, store, f"hgf{i + 1}", cfg, d_point,
                        graph_cache=graph_cache)
        per_layer.append(h)
    pooled = tape.max_rows(per_layer[-1])
    hybrid_global = dense_t(tape, pooled, store, "global", relu=False)
    fused = tape.concat(
        per_layer + [tape.gather_rows(hybrid_global, np.zeros(n, np.int64))]
    )
    return fused, hybrid_global, topo_global


def head_t(tape: Tape, fused: Tensor, topo_global: Tensor,
           prep: PreparedSample, store):
    """Pose feature assembly and the two regression MLPs."""
    n = len(prep.cloud)
    pose_feat = tape.concat(
        [tape.gather_rows(topo_global, np.zeros(n, np.int64)), fused]
    )
    pooled = tape.max_rows(pose_feat)
    rot = dense_t(tape, dense_t(tape, pooled, store, "head.rot.fc1"),
                  store, "head.rot.fc2", relu=False)
    with_xyz = tape.concat([pose_feat, tape.leaf(prep.cloud)])
    pooled_ts = tape.max_rows(with_xyz)
    ts = dense_t(tape, dense_t(tape, pooled_ts, store, "head.ts.fc1"),
                 store, "head.ts.fc2", relu=False)
    return {
        "a1": tape.slice_cols(rot, 0, 3),
        "a2": tape.slice_cols(rot, 3, 6),
        "t_res": tape.slice_cols(ts, 0, 3),
        "s_res": tape.slice_cols(ts, 3, 6),
    }


def forward_sample(store: ParamStore, prep: PreparedSample, cfg: HgfConfig,
                   tape: Tape | None = None, graph_cache=None):
    """Full per-sample forward pass; returns head output Tensors + tape."""
    tape = tape or Tape()
    fused, _, topo_global = fusion_stream_t(tape, prep, store, cfg,
                                            graph_cache=graph_cache)
    out = head_t(tape, fused, topo_global, prep, store)
    out["tape"] = tape
    return out


# -- ndarray-level contract wrappers ----------------------------------------


def refine_prior(prior_map, mask, store) -> np.ndarray:
    """H x W x E prior -> H x W x C refined features, zero outside mask."""
    pm = np.asarray(prior_map, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if pm.shape[-1] != store["refine.W"].shape[0]:
        raise Error("shape", "prior width does not match refine weights")
    h, w, _ = pm.shape
    c = store["refine.W"].shape[1]
    out = np.zeros((h, w, c))
    if mask.any():
        rows = pm[mask]
        out[mask] = np.maximum(rows @ store["refine.W"] + store["refine.b"], 0.0)
    return out


def tgc_aggregate(feature_map, mask, store) -> np.ndarray:
    """Masked attention pooling of an H x W x C map -> (1, tgc_width)."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise Error("empty-object", "mask selects no pixels")
    rows = np.asarray(feature_map, dtype=np.float64)[mask]
    tape = Tape()
    return tgc_t(tape, tape.leaf(rows), store).data.copy()


def backproject_features(feature_map, pixel_indices, mask=None) -> np.ndarray:
    """Gather per-point rows from an image-domain feature map."""
    fm = np.asarray(feature_map, dtype=np.float64)
    h, w, c = fm.shape
    idx = np.asarray(pixel_indices, dtype=np.int64)
    if idx.min() < 0 or idx.max() >= h * w:
        raise Error("index", "pixel index outside the image")
    if mask is not None and not np.asarray(mask, bool).ravel()[idx].all():
        raise Error("index", "pixel index outside the mask")
    return fm.reshape(-1, c)[idx]


def gc_layer(features, neighbors, W, b) -> np.ndarray:
    """Contract-level graph convolution: W is the full (2D x out) edge-MLP
    weight over [f_i, f_j - f_i]."""
    W = np.asarray(W, dtype=np.float64)
    d = W.shape[0] // 2
    tape = Tape()
    store = ParamStore()
    store.add("gc.Wself", W[:d])
    store.add("gc.Wdiff", W[d:])
    store.add("gc.b", np.asarray(b, np.float64).reshape(1, -1))
    return gc_layer_t(tape, tape.leaf(np.asarray(features, np.float64)),
                      np.asarray(neighbors, np.int64), store, "gc").data.copy()


def hgf_layer(features, cloud, cfg: HgfConfig, store, name="hgf1") -> np.ndarray:
    """Contract-level HGF layer on plain arrays."""
    cloud = np.asarray(cloud, dtype=np.float64)
    pe = (positional_encoding(cloud, cfg.pe_bands)
          if cfg.pe_bands > 0 else np.zeros((len(cloud), 0)))
    prep = PreparedSample(
        cloud=cloud, pe=pe, prior_pixels=np.zeros((1, cfg.embed_dim)),
        point_rows=np.zeros(len(cloud), np.int64),
        nbr0=build_receptive_field(None, cloud, cfg.k, 0.0).neighbors,
        centroid=cloud.mean(axis=0), category="", gt=None, n_mask=1,
    )
    tape = Tape()
    d_point = pairwise_euclidean(cloud)
    return hgf_layer_t(tape, tape.leaf(np.asarray(features, np.float64)),
                       prep, store, name, cfg, d_point).data.copy()


def fusion_stream(sample_prep: PreparedSample, store, cfg: HgfConfig):
    """Contract-level fusion stream -> (per-point fused, hybrid global)."""
    tape = Tape()
    fused, hybrid_global, _ = fusion_stream_t(tape, sample_prep, store, cfg)
    return fused.data.copy(), hybrid_global.data.copy()
