"""Central-difference verification of the full network's gradients.

Runs the complete fusion-stream + head + loss composite on a tiny synthetic
sample, then checks the analytic gradient of every parameter coordinate
against central differences. Neighbor graphs are frozen across the
perturbed forwards, matching how training treats them (constants).
"""

from __future__ import annotations

import numpy as np

from .geometry import Pose, positional_encoding, random_rotation
from .graph import build_receptive_field
from .head import TrainConfig, pose_loss_t
from .network import HgfConfig, PreparedSample, forward_sample, init_params
from .shapes import category_spec


def tiny_config() -> HgfConfig:
    return HgfConfig(k=3, alpha1=0.8, alpha2=0.2, refine_channels=3,
                     tgc_width=4, gc_widths=(3, 3, 4, 4, 5), global_width=5,
                     head_hidden=6, pe_bands=1, embed_dim=4)


def tiny_sample(cfg: HgfConfig, seed: int) -> PreparedSample:
    rng = np.random.default_rng([int(seed), 55])
    n, m = 12, 9
    cloud = 0.2 * rng.standard_normal((n, 3))
    prior_pixels = rng.uniform(0.0, 1.0, size=(m, cfg.embed_dim))
    rows = rng.integers(0, m, size=n)
    gt = Pose(random_rotation(rng), rng.standard_normal(3) * 0.1,
              rng.uniform(0.05, 0.2, 3))
    return PreparedSample(
        cloud=cloud,
        pe=positional_encoding(cloud, cfg.pe_bands),
        prior_pixels=prior_pixels,
        point_rows=rows.astype(np.int64),
        nbr0=build_receptive_field(None, cloud, cfg.k, 0.0).neighbors,
        centroid=cloud.mean(axis=0),
        category="mug",
        gt=gt,
        n_mask=m,
    )


def _loss(store, prep, cfg, cache, tcfg, spec):
    out = forward_sample(store, prep, cfg, graph_cache=cache)
    total, _ = pose_loss_t(out["tape"], out, prep.gt, prep.centroid, spec, tcfg)
    return out["tape"], total


def gradient_check_suite(seed: int = 0, eps: float = 1e-6):
    """Max relative gradient error per layer prefix over every coordinate."""
    cfg = tiny_config()
    prep = tiny_sample(cfg, seed)
    store = init_params(cfg, seed)
    tcfg = TrainConfig()
    spec = category_spec(prep.category)
    cache = {}  # populated on the first pass, frozen afterwards

    tape, total = _loss(store, prep, cfg, cache, tcfg, spec)
    grads = tape.backward(total)
    errors = {}
    for name in store.names():
        analytic = grads.get(name, np.zeros_like(store[name]))
        worst = 0.0
        flat = store[name].ravel()
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            up = float(_loss(store, prep, cfg, cache, tcfg, spec)[1].data[0, 0])
            flat[i] = keep - eps
            down = float(_loss(store, prep, cfg, cache, tcfg, spec)[1].data[0, 0])
            flat[i] = keep
            numeric = (up - down) / (2 * eps)
            a = analytic.ravel()[i]
            worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
        layer = (".".join(name.split(".")[:2]) if name.startswith("head")
                 else name.split(".")[0])
        errors[layer] = max(errors.get(layer, 0.0), worst)
    return errors
