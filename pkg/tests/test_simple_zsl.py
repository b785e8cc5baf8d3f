import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from zslforge import synthetic
from zslforge.corpus import FeatureMatrix
from zslforge.simple_zsl import (SimpleZslConfig, SimpleZslParams, hinge_loss, loss_and_grad,
                                 predict, project, scores, train)

from gradcheck import max_rel_error, simple_zsl_case


def ident(d):
    return SimpleZslParams(np.eye(d), np.zeros(d), np.eye(d), np.zeros(d))


class TestProject:
    def test_identity(self):
        np.testing.assert_array_equal(project(ident(3), [1.0, 2.0, 3.0]), [1, 2, 3])

    def test_scalar(self):
        p = SimpleZslParams(np.array([[2.0]]), np.array([1.0]), np.eye(1), np.zeros(1))
        np.testing.assert_array_equal(project(p, [3.0]), [7.0])

    def test_constant(self):
        p = SimpleZslParams(np.zeros((2, 3)), np.array([4.0, 5.0]), np.zeros((2, 1)), np.zeros(2))
        np.testing.assert_array_equal(project(p, np.random.rand(4, 3)), [[4, 5]] * 4)

    def test_errors(self):
        with pytest.raises(ValueError, match="dim"):
            project(ident(3), [1.0, 2.0])
        with pytest.raises(ValueError):
            project(ident(3), [1.0, 2.0, 3.0], "text")


class TestHinge:
    def test_examples(self):
        assert hinge_loss([2.0, 0.5, -1.0], 0, 1) == 0.0
        assert hinge_loss([2.0, 0.5, -1.0], 0, 2) == 0.5
        assert hinge_loss([3.0, 1.0, 2.0], 0, 0) == 0.0

    @given(hnp.arrays(np.float64, st.integers(2, 8), elements=st.floats(-100, 100)),
           st.floats(0, 10), st.floats(-50, 50), st.data())
    def test_properties(self, s, m, c, data):
        y = data.draw(st.integers(0, len(s) - 1))
        loss = hinge_loss(s, y, m)
        assert loss >= 0
        others = np.delete(s, y)
        gap = np.min(s[y] - others)
        if loss == 0:
            assert gap >= m - 1e-9
        else:
            assert gap < m + 1e-9
        assert hinge_loss(s + c, y, m) == pytest.approx(loss, abs=1e-9)


class TestLossAndGrad:
    def test_satisfied_margins_zero(self):
        p = ident(2)
        x = np.array([[10.0, 0.0], [0.0, 10.0]])
        t = np.eye(2)
        loss, g = loss_and_grad(p, x, [0, 1], t, 1.0)
        assert loss == 0.0 and all(not v.any() for v in g.values())

    def test_hand_computed(self):
        # 1 sample, 2 classes, scalar dims: s_i = (wx*x + bx) * (wt*t_i + bt)
        p = SimpleZslParams(np.array([[2.0]]), np.array([0.5]), np.array([[1.5]]), np.array([-1.0]))
        x, t = np.array([[1.0]]), np.array([[1.0], [2.0]])
        e = 2.0 * 1.0 + 0.5
        p0, p1 = 1.5 * 1 - 1, 1.5 * 2 - 1
        loss, g = loss_and_grad(p, x, [0], t, 1.0)
        assert loss == pytest.approx(1 - e * p0 + e * p1)
        de = p1 - p0
        assert g["W_x"][0, 0] == pytest.approx(de * 1.0)
        assert g["b_x"][0] == pytest.approx(de)
        assert g["W_t"][0, 0] == pytest.approx(-e * 1.0 + e * 2.0)
        assert g["b_t"][0] == pytest.approx(0.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_finite_differences(self, seed):
        assert max_rel_error(*simple_zsl_case(seed)) <= 1e-4

    def test_label_out_of_range(self):
        with pytest.raises(IndexError):
            loss_and_grad(ident(2), np.ones((1, 2)), [2], np.eye(2), 1.0)


class TestPredict:
    def test_single_candidate(self):
        p = ident(2)
        assert predict(p, [1.0, 0.0], np.array([[0.3, 0.1]]), 1).tolist() == [0]

    def test_tie_lower_index(self):
        p = ident(2)
        assert predict(p, [1.0, 0.0], np.array([[0.9, 0.0], [0.9, 5.0], [0.1, 0.0]]), 2).tolist() == [0, 1]

    def test_brute_force_and_ids(self, rng):
        p = SimpleZslParams(rng.normal(size=(3, 4)), rng.normal(size=3),
                            rng.normal(size=(3, 2)), rng.normal(size=3))
        x = rng.normal(size=4)
        t = rng.normal(size=(3, 2))
        s = scores(p, x, t)
        assert predict(p, x, t, 3).tolist() == sorted(range(3), key=lambda i: -s[i])
        fm = FeatureMatrix(["n00000001", "n00000002", "n00000003"], t.astype(np.float32))
        top = predict(p, x, fm, 1)
        assert top[0].startswith("n0000000")

    def test_k_range(self):
        with pytest.raises(ValueError):
            predict(ident(2), [1.0, 0.0], np.eye(2), 3)

    def test_scale_invariance_without_aux_bias(self, rng):
        p = SimpleZslParams(rng.normal(size=(3, 4)), rng.normal(size=3),
                            rng.normal(size=(3, 2)), np.zeros(3))
        x = rng.normal(size=(6, 4))
        t = rng.normal(size=(5, 2))
        np.testing.assert_array_equal(predict(p, x, t, 5), predict(p, x, 3.7 * t, 5))


class TestTrain:
    def data(self):
        b = synthetic.generate()
        x, y = b.image_rows(b.train)
        return b.aux.rows(b.train.wnids).astype(float), x, y

    def test_loss_decreases_and_deterministic(self):
        t, x, y = self.data()
        cfg = SimpleZslConfig(d_embed=16, epochs=5)
        a = train(cfg, t, x, y)
        assert len(a.history) == 5 and a.history[-1] < a.history[0]
        b = train(cfg, t, x, y)
        assert a.history == b.history
        np.testing.assert_array_equal(a.params.W_x, b.params.W_x)

    def test_zero_epochs_returns_init(self):
        t, x, y = self.data()
        cfg = SimpleZslConfig(d_embed=8, epochs=0, seed=3)
        r = train(cfg, t, x, y)
        init = SimpleZslParams.init(8, x.shape[1], t.shape[1], np.random.default_rng(3))
        np.testing.assert_array_equal(r.params.W_x, init.W_x)
        assert r.history == []

    def test_val_checkpointing(self):
        b = synthetic.generate()
        t, x, y = self.data()
        vx, vy = b.image_rows(b.test)
        vt = b.aux.rows(b.test.wnids).astype(float)
        r = train(SimpleZslConfig(d_embed=16, epochs=4), t, x, y, val=(vx, vy, vt))
        assert len(r.val_top5) == 4 and r.best_epoch == int(np.argmax(r.val_top5))

    def test_empty(self):
        with pytest.raises(ValueError):
            train(SimpleZslConfig(), np.zeros((1, 2)), np.zeros((0, 3)), np.zeros(0, int))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SimpleZslConfig(margin=-1)
        with pytest.raises(ValueError):
            SimpleZslConfig(d_embed=0)
