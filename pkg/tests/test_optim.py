import numpy as np
import pytest

from thepose.errors import Error
from thepose.optim import (
    CosineTail,
    ParamStore,
    load_checkpoint,
    optimizer_step,
    save_checkpoint,
)


def small_store():
    store = ParamStore()
    store.add("layer.W", np.array([[1.0, 2.0], [3.0, 4.0]]))
    store.add("layer.b", np.array([[0.5, -0.5]]))
    return store


class TestSchedule:
    def test_constant_until_72_percent(self):
        sched = CosineTail(total_steps=1000)
        assert sched.factor(1) == 1.0
        assert sched.factor(719) == 1.0
        assert sched.factor(720) == 1.0  # boundary step keeps base lr

    def test_final_step_hits_zero(self):
        sched = CosineTail(total_steps=1000)
        assert abs(sched.factor(1000)) < 1e-9

    def test_midtail_matches_cosine(self):
        sched = CosineTail(total_steps=100)
        # step 86 -> (0.86-0.72)/0.28 = 0.5 -> 0.5*(1+cos(pi/2)) = 0.5
        assert abs(sched.factor(86) - 0.5) < 1e-12


class TestAdam:
    def test_zero_gradients_leave_parameters_unchanged(self):
        store = small_store()
        before = {k: v.copy() for k, v in store.items()}
        grads = {k: np.zeros_like(v) for k, v in store.items()}
        optimizer_step(store, grads, lr=0.1, step_index=1)
        for k in store.names():
            np.testing.assert_array_equal(store[k], before[k])

    def test_first_step_moves_by_lr_in_sign_direction(self):
        # with bias correction the first Adam step is ~lr * sign(g)
        store = ParamStore()
        store.add("p", np.array([[0.0]]))
        optimizer_step(store, {"p": np.array([[2.0]])}, lr=0.1, step_index=1)
        assert abs(store["p"][0, 0] + 0.1) < 1e-6

    def test_missing_gradient_rejected(self):
        store = small_store()
        with pytest.raises(Error):
            optimizer_step(store, {"layer.W": store["layer.W"] * 0}, lr=0.1,
                           step_index=1)

    def test_matches_reference_adam(self):
        # independent re-implementation of textbook Adam, 5 steps
        rng = np.random.default_rng(0)
        p0 = rng.standard_normal((3, 2))
        store = ParamStore()
        store.add("p", p0.copy())

        p_ref = p0.copy()
        m = np.zeros_like(p0)
        v = np.zeros_like(p0)
        b1, b2, eps, lr = 0.9, 0.999, 1e-8, 0.01
        for step in range(1, 6):
            g = rng.standard_normal((3, 2))
            optimizer_step(store, {"p": g}, lr=lr, step_index=step)
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            mh = m / (1 - b1**step)
            vh = v / (1 - b2**step)
            p_ref -= lr * mh / (np.sqrt(vh) + eps)
        np.testing.assert_allclose(store["p"], p_ref, atol=1e-12)


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        store = small_store()
        store.add("odd.shape", np.random.default_rng(1).standard_normal((3, 1, 2)))
        path = tmp_path / "model.ckpt"
        save_checkpoint(store, path)
        loaded = load_checkpoint(path)
        assert loaded.names() == store.names()
        for k in store.names():
            assert loaded[k].tobytes() == store[k].tobytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOT-A-CHECKPOINT")
        with pytest.raises(Error) as e:
            load_checkpoint(path)
        assert e.value.kind == "bad-magic"

    def test_truncated(self, tmp_path):
        store = small_store()
        path = tmp_path / "model.ckpt"
        save_checkpoint(store, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-5])
        with pytest.raises(Error) as e:
            load_checkpoint(path)
        assert e.value.kind == "truncated"

    def test_wrong_version(self, tmp_path):
        path = tmp_path / "model.ckpt"
        path.write_bytes(b"THEPOSE-CKPT" + b"\x63\x00\x00\x00")
        with pytest.raises(Error) as e:
            load_checkpoint(path)
        assert e.value.kind == "bad-version"
