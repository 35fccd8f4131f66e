"""Pose & size head: decoupled rotation axes, residual translation/size,
training losses, and the training loop."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .autodiff import Tape
from .errors import Error
from .geometry import Pose, gram_schmidt_rotation
from .network import HgfConfig, forward_sample, init_params, prepare_sample
from .optim import CosineTail, optimizer_step
from .shapes import CategorySpec, category_spec

MIN_EXTENT = 1e-3  # 1 mm size clamp


@dataclass(frozen=True)
class HeadOutput:
    a1: np.ndarray  # rotation up axis (unnormalized)
    a2: np.ndarray  # rotation secondary axis
    t_res: np.ndarray  # translation residual from the cloud centroid, m
    s_res: np.ndarray  # size residual from the category mean, m


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    lr: float = 1e-3
    batch: int = 1
    tail_frac: float = 0.28
    w_rot: float = 1.0
    w_trans: float = 1.0
    w_size: float = 1.0


def head_forward(store, prep, cfg: HgfConfig) -> HeadOutput:
    """Inference-only forward pass to raw head outputs."""
    out = forward_sample(store, prep, cfg)
    return HeadOutput(
        a1=out["a1"].data[0].copy(), a2=out["a2"].data[0].copy(),
        t_res=out["t_res"].data[0].copy(), s_res=out["s_res"].data[0].copy(),
    )


def assemble_pose(out: HeadOutput, cloud, spec: CategorySpec) -> Pose:
    """Residual decoding: R from the two axes, t from the centroid, s from
    the category mean; extents clamped to 1 mm."""
    R = gram_schmidt_rotation(out.a1, out.a2)
    centroid = np.asarray(cloud, dtype=np.float64).mean(axis=0)
    size = np.maximum(spec.mean_size + out.s_res, MIN_EXTENT)
    return Pose(R, centroid + out.t_res, size)


def residual_encode(gt: Pose, cloud, spec: CategorySpec) -> HeadOutput:
    """Inverse of assemble_pose for an exact ground truth (test helper)."""
    centroid = np.asarray(cloud, dtype=np.float64).mean(axis=0)
    return HeadOutput(
        a1=gt.rotation[:, 2].copy(), a2=gt.rotation[:, 0].copy(),
        t_res=gt.translation - centroid, s_res=gt.size - spec.mean_size,
    )


def _a2_target(a2_value, gt: Pose, spec: CategorySpec):
    b1 = gt.rotation[:, 0]
    if spec.symmetry != "mirror":
        return b1
    # two-element group: a2 may match either +-b1; supervise the closer one
    v = np.asarray(a2_value, dtype=np.float64)
    return b1 if float(v @ b1) >= 0.0 else -b1


def pose_loss_t(tape: Tape, outs, gt: Pose, centroid, spec: CategorySpec,
                tcfg: TrainConfig):
    """Scalar loss Tensor + float components. Rotation terms are angles in
    radians; for revolution symmetry the in-plane axis is unsupervised."""
    loss_r = tape.axis_angle(outs["a1"], gt.rotation[:, 2])
    if spec.symmetry != "revolution":
        target = _a2_target(outs["a2"].data[0], gt, spec)
        loss_r = tape.add(loss_r, tape.axis_angle(outs["a2"], target))
    t_target = (gt.translation - centroid)[None, :]
    s_target = (gt.size - spec.mean_size)[None, :]
    loss_t = tape.l1(outs["t_res"], tape.leaf(t_target))
    loss_s = tape.l1(outs["s_res"], tape.leaf(s_target))
    total = tape.add(
        tape.scale(loss_r, tcfg.w_rot),
        tape.add(tape.scale(loss_t, tcfg.w_trans),
                 tape.scale(loss_s, tcfg.w_size)),
    )
    parts = {
        "loss_r": float(loss_r.data[0, 0]),
        "loss_t": float(loss_t.data[0, 0]),
        "loss_s": float(loss_s.data[0, 0]),
    }
    return total, parts


def pose_loss(out: HeadOutput, gt: Pose, cloud, spec: CategorySpec,
              tcfg: TrainConfig = TrainConfig()):
    """Contract-level loss on plain arrays -> (total, components)."""
    tape = Tape()
    outs = {
        "a1": tape.leaf(out.a1[None, :]), "a2": tape.leaf(out.a2[None, :]),
        "t_res": tape.leaf(out.t_res[None, :]),
        "s_res": tape.leaf(out.s_res[None, :]),
    }
    centroid = np.asarray(cloud, dtype=np.float64).mean(axis=0)
    total, parts = pose_loss_t(tape, outs, gt, centroid, spec, tcfg)
    return float(total.data[0, 0]), parts


def train(samples, cfg: HgfConfig, tcfg: TrainConfig, seed: int):
    """Deterministic mini-batch training; returns (ParamStore, trace rows).

    Trace rows are (step, lr, loss, loss_r, loss_t, loss_s) with batch-mean
    values. Aborts with a "diverged" error on a non-finite loss.
    """
    if not samples:
        raise Error("config", "training set is empty")
    store = init_params(cfg, seed)
    prepared = [prepare_sample(s, cfg) for s in samples]
    shuffle_rng = np.random.default_rng([int(seed), 88])
    schedule = CosineTail(tcfg.steps, tcfg.tail_frac)
    order = shuffle_rng.permutation(len(prepared))
    cursor = 0
    trace = []
    for step in range(1, tcfg.steps + 1):
        grad_sum = None
        stats = np.zeros(4)
        for _ in range(tcfg.batch):
            if cursor >= len(order):
                order = shuffle_rng.permutation(len(prepared))
                cursor = 0
            prep = prepared[order[cursor]]
            cursor += 1
            tape = Tape()
            outs = forward_sample(store, prep, cfg, tape=tape)
            total, parts = pose_loss_t(tape, outs, prep.gt, prep.centroid,
                                       category_spec(prep.category), tcfg)
            value = float(total.data[0, 0])
            if not np.isfinite(value):
                raise Error("diverged", f"non-finite loss at step {step}")
            grads = tape.backward(total)
            if grad_sum is None:
                grad_sum = grads
            else:
                for name in grad_sum:
                    grad_sum[name] = grad_sum[name] + grads[name]
            stats += [value, parts["loss_r"], parts["loss_t"], parts["loss_s"]]
        for name in grad_sum:
            grad_sum[name] = grad_sum[name] / tcfg.batch
        for name in store.names():  # params never reached get zero grads
            if name not in grad_sum:
                grad_sum[name] = np.zeros_like(store[name])
        optimizer_step(store, grad_sum, tcfg.lr, step, schedule)
        stats /= tcfg.batch
        trace.append((step, tcfg.lr * schedule.factor(step), *stats))
    return store, trace


def write_trace_csv(trace, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "lr", "loss", "loss_r", "loss_t", "loss_s"])
        writer.writerows(trace)


def predict(store, sample, cfg: HgfConfig) -> Pose:
    """Inference: sample -> assembled Pose."""
    prep = prepare_sample(sample, cfg)
    out = head_forward(store, prep, cfg)
    return assemble_pose(out, prep.cloud, category_spec(sample.category))
