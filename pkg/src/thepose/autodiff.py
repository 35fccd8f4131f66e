"""Dense 2-D tensor engine with reverse-mode autodiff.

Everything is float64 and strictly 2-D (scalars are 1x1). A Tape records
primitive applications in execution order; backward() replays the list in
reverse, so each node is visited exactly once. Neighbor index structures
(gather indices, group matrices) are plain integer arrays and are treated
as constants by the gradients.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import Error

_uid = itertools.count()


class Tensor:
    """A 2-D float64 array plus grad metadata. Created through a Tape."""

    __slots__ = ("data", "requires_grad", "uid", "grad")

    def __init__(self, data, requires_grad=False):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim != 2:
            raise Error("shape", f"tensors must be 2-D, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.uid = next(_uid)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape


def _scatter_rows(grad_rows, idx, n_rows):
    """Sum grad_rows (E x D) into an (n_rows x D) array at row indices idx."""
    e, d = grad_rows.shape
    if e and (idx[0] == idx).all():  # broadcast gather: one target row
        out = np.zeros((n_rows, d))
        out[idx[0]] = grad_rows.sum(axis=0)
        return out
    flat = idx.astype(np.int64)[:, None] * d + np.arange(d, dtype=np.int64)
    out = np.bincount(flat.ravel(), weights=grad_rows.ravel(), minlength=n_rows * d)
    return out.reshape(n_rows, d)


class Tape:
    """Records primitives; provides backward() and parameter bookkeeping."""

    def __init__(self):
        self._nodes = []  # (out_uid, [(input Tensor, vjp callable)])
        self._param_names = {}  # uid -> name
        self._leaves = {}  # uid -> requires_grad leaf Tensor seen by some node
        self._produced = set()

    # -- tensor creation ---------------------------------------------------

    def leaf(self, data, requires_grad=False) -> Tensor:
        return Tensor(data, requires_grad)

    def param(self, store, name) -> Tensor:
        """Leaf for a named parameter; its gradient is keyed by name."""
        t = Tensor(store[name], requires_grad=True)
        self._param_names[t.uid] = name
        return t

    def _record(self, out: Tensor, pairs) -> Tensor:
        live = []
        for inp, vjp in pairs:
            if inp.uid in self._produced:
                live.append((inp, vjp))
            elif inp.requires_grad:
                live.append((inp, vjp))
                self._leaves[inp.uid] = inp
        if live:
            out.requires_grad = True
            self._produced.add(out.uid)
            self._nodes.append((out.uid, live))
        return out

    # -- primitives ---------------------------------------------------------

    def linear(self, x: Tensor, W: Tensor, b: Tensor) -> Tensor:
        if x.shape[1] != W.shape[0] or b.shape != (1, W.shape[1]):
            raise Error("shape", f"linear: {x.shape} @ {W.shape} + {b.shape}")
        out = Tensor(x.data @ W.data + b.data)
        xd, Wd = x.data, W.data
        return self._record(out, [
            (x, lambda g: g @ Wd.T),
            (W, lambda g: xd.T @ g),
            (b, lambda g: g.sum(axis=0, keepdims=True)),
        ])

    def relu(self, x: Tensor) -> Tensor:
        out = Tensor(np.maximum(x.data, 0.0))
        pos = x.data > 0.0
        return self._record(out, [(x, lambda g: g * pos)])

    def add(self, x: Tensor, y: Tensor) -> Tensor:
        if x.shape != y.shape:
            raise Error("shape", f"add: {x.shape} vs {y.shape}")
        out = Tensor(x.data + y.data)
        return self._record(out, [(x, lambda g: g), (y, lambda g: g)])

    def sub(self, x: Tensor, y: Tensor) -> Tensor:
        if x.shape != y.shape:
            raise Error("shape", f"sub: {x.shape} vs {y.shape}")
        out = Tensor(x.data - y.data)
        return self._record(out, [(x, lambda g: g), (y, lambda g: -g)])

    def scale(self, x: Tensor, c: float) -> Tensor:
        out = Tensor(x.data * c)
        return self._record(out, [(x, lambda g: g * c)])

    def concat(self, xs) -> Tensor:
        xs = list(xs)
        rows = {x.shape[0] for x in xs}
        if len(rows) != 1:
            raise Error("shape", f"concat: mismatched row counts {sorted(rows)}")
        out = Tensor(np.concatenate([x.data for x in xs], axis=1))
        offsets = np.cumsum([0] + [x.shape[1] for x in xs])

        def make_vjp(a, b):
            return lambda g: g[:, a:b]

        return self._record(
            out, [(x, make_vjp(offsets[i], offsets[i + 1])) for i, x in enumerate(xs)]
        )

    def slice_cols(self, x: Tensor, a: int, b: int) -> Tensor:
        out = Tensor(x.data[:, a:b])
        n, d = x.shape

        def vjp(g):
            full = np.zeros((n, d))
            full[:, a:b] = g
            return full

        return self._record(out, [(x, vjp)])

    def gather_rows(self, x: Tensor, indices) -> Tensor:
        idx = np.asarray(indices, dtype=np.int64).ravel()
        if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
            raise Error("index", "gather_rows index out of range")
        out = Tensor(x.data[idx])
        n = x.shape[0]
        return self._record(out, [(x, lambda g: _scatter_rows(g, idx, n))])

    def neighbor_max_sum(self, a: Tensor, b: Tensor, neighbors) -> Tensor:
        """out[i, d] = max over k of (a[i, d] + b[neighbors[i, k], d]).

        The per-edge reduction of edge convolutions: per-edge linear terms
        are precomputed per point, so only the pairwise sum and max touch
        edge-sized arrays.
        """
        if a.shape != b.shape:
            raise Error("shape", f"neighbor_max_sum: {a.shape} vs {b.shape}")
        nbr = np.asarray(neighbors, dtype=np.int64)
        n, d = a.shape
        if nbr.ndim != 2 or nbr.shape[0] != n:
            raise Error("shape", "neighbors must be N x k")
        if nbr.min() < 0 or nbr.max() >= n:
            raise Error("index", "neighbor index out of range")
        vals = b.data[nbr]  # N x k x D
        vals += a.data[:, None, :]
        winner = vals.argmax(axis=1)  # N x D
        out = Tensor(np.take_along_axis(vals, winner[:, None, :], axis=1)[:, 0, :])
        winner_rows = np.take_along_axis(nbr, winner, axis=1)  # N x D

        def vjp_b(g):
            flat = winner_rows.ravel() * d + np.tile(np.arange(d), n)
            return np.bincount(flat, weights=g.ravel(), minlength=n * d).reshape(n, d)

        return self._record(out, [(a, lambda g: g), (b, vjp_b)])

    def max_over_groups(self, x: Tensor, groups) -> Tensor:
        """Row groups[g] -> elementwise max; groups is a (G x m) index matrix."""
        grp = np.asarray(groups, dtype=np.int64)
        if grp.ndim != 2:
            raise Error("shape", "groups must be a G x m index matrix")
        if grp.min() < 0 or grp.max() >= x.shape[0]:
            raise Error("index", "group index out of range")
        g_count, m = grp.shape
        if grp.size == x.shape[0] and (grp.ravel() == np.arange(grp.size)).all():
            gathered = x.data.reshape(g_count, m, x.shape[1])  # view, no copy
        else:
            gathered = x.data[grp]  # G x m x D
        winner = gathered.argmax(axis=1)  # G x D, position within group
        out = Tensor(
            np.take_along_axis(gathered, winner[:, None, :], axis=1)[:, 0, :]
        )
        n, d = x.shape
        winner_rows = np.take_along_axis(grp, winner, axis=1)  # G x D

        def vjp(g):
            flat = winner_rows.ravel() * d + np.tile(np.arange(d), g_count)
            return np.bincount(flat, weights=g.ravel(), minlength=n * d).reshape(n, d)

        return self._record(out, [(x, vjp)])

    def max_rows(self, x: Tensor) -> Tensor:
        """Column-wise max over all rows -> 1 x D (global max pooling)."""
        winner = x.data.argmax(axis=0)  # D
        out = Tensor(x.data[winner, np.arange(x.shape[1])][None, :])
        n, d = x.shape

        def vjp(g):
            flat = winner * d + np.arange(d)
            return np.bincount(flat, weights=g[0], minlength=n * d).reshape(n, d)

        return self._record(out, [(x, vjp)])

    def mean_over_groups(self, x: Tensor, groups) -> Tensor:
        grp = np.asarray(groups, dtype=np.int64)
        if grp.ndim != 2:
            raise Error("shape", "groups must be a G x m index matrix")
        if grp.min() < 0 or grp.max() >= x.shape[0]:
            raise Error("index", "group index out of range")
        m = grp.shape[1]
        out = Tensor(x.data[grp].mean(axis=1))
        n, d = x.shape

        def vjp(g):
            per_member = np.repeat(g / m, m, axis=0)  # (G*m) x D
            return _scatter_rows(per_member, grp.ravel(), n)

        return self._record(out, [(x, vjp)])

    def softmax_pool(self, scores: Tensor, feats: Tensor) -> Tensor:
        """Softmax the (M x 1) scores and return the weighted sum of feats."""
        if scores.shape != (feats.shape[0], 1):
            raise Error("shape", f"softmax_pool: scores {scores.shape}")
        s = scores.data[:, 0]
        w = np.exp(s - s.max())
        w /= w.sum()
        out = Tensor((w[None, :] @ feats.data))
        fd = feats.data
        od = out.data

        def vjp_scores(g):
            proj = fd @ g[0] - float(od[0] @ g[0])
            return (w * proj)[:, None]

        return self._record(out, [
            (scores, vjp_scores),
            (feats, lambda g: w[:, None] * g),
        ])

    def mse(self, x: Tensor, y: Tensor) -> Tensor:
        if x.shape != y.shape:
            raise Error("shape", f"mse: {x.shape} vs {y.shape}")
        diff = x.data - y.data
        out = Tensor([[float(np.mean(diff * diff))]])
        scale = 2.0 / diff.size
        return self._record(out, [
            (x, lambda g: g[0, 0] * scale * diff),
            (y, lambda g: -g[0, 0] * scale * diff),
        ])

    def l1(self, x: Tensor, y: Tensor) -> Tensor:
        if x.shape != y.shape:
            raise Error("shape", f"l1: {x.shape} vs {y.shape}")
        diff = x.data - y.data
        out = Tensor([[float(np.mean(np.abs(diff)))]])
        sg = np.sign(diff) / diff.size
        return self._record(out, [
            (x, lambda g: g[0, 0] * sg),
            (y, lambda g: -g[0, 0] * sg),
        ])

    def axis_angle(self, a: Tensor, target) -> Tensor:
        """Angle in radians between the (1x3) vector a and a unit target."""
        if a.shape != (1, 3):
            raise Error("shape", "axis_angle expects a 1x3 vector")
        u = np.asarray(target, dtype=np.float64).ravel()
        u = u / np.linalg.norm(u)
        v = a.data[0]
        norm = max(np.linalg.norm(v), 1e-12)
        vh = v / norm
        c = float(np.clip(vh @ u, -1.0, 1.0))
        out = Tensor([[np.arccos(c)]])
        # d(angle)/da = -(u - c*vh) / (|a| * sin(angle)); bounded away from
        # the poles by the sin clamp.
        sin = max(np.sqrt(max(1.0 - c * c, 0.0)), 1e-12)
        grad_dir = -(u - c * vh) / (norm * sin)
        return self._record(out, [(a, lambda g: g[0, 0] * grad_dir[None, :])])

    # -- reverse pass ---------------------------------------------------------

    def backward(self, loss: Tensor):
        """Accumulate gradients of a scalar loss into every requires_grad leaf.

        Returns a dict of gradients for tape.param() tensors, keyed by name.
        Leaves off the path get zero gradients.
        """
        if loss.shape != (1, 1):
            raise Error("non-scalar-loss", f"loss has shape {loss.shape}")
        adjoint = {loss.uid: np.ones((1, 1))}
        for out_uid, pairs in reversed(self._nodes):
            g = adjoint.pop(out_uid, None)
            if g is None:
                continue
            for inp, vjp in pairs:
                contrib = vjp(g)
                if inp.uid in adjoint:
                    adjoint[inp.uid] = adjoint[inp.uid] + contrib
                else:
                    adjoint[inp.uid] = contrib
        named = {}
        for uid, t in self._leaves.items():
            t.grad = adjoint.get(uid, np.zeros_like(t.data))
            name = self._param_names.get(uid)
            if name is not None:
                named[name] = t.grad
        return named


def gradient_check(build, x, eps=1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``build(tape, leaf)`` must construct and return a scalar loss Tensor from
    the given leaf. The error is max over coordinates of
    |analytic - central| / max(1, |analytic|).
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    tape = Tape()
    xt = tape.leaf(x, requires_grad=True)
    tape.backward(build(tape, xt))
    analytic = xt.grad if xt.grad is not None else np.zeros_like(x)

    numeric = np.zeros_like(x)
    flat = numeric.ravel()
    for i in range(x.size):
        xp = x.copy()
        xp.ravel()[i] += eps
        xm = x.copy()
        xm.ravel()[i] -= eps
        tp = Tape()
        lp = build(tp, tp.leaf(xp))
        tm = Tape()
        lm = build(tm, tm.leaf(xm))
        flat[i] = (lp.data[0, 0] - lm.data[0, 0]) / (2.0 * eps)
    rel = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    return float(rel.max()) if rel.size else 0.0
