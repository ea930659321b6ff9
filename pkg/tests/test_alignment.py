"""Alignment objective: hinge values, loss algebra, gradients, training."""

from dataclasses import replace

import numpy as np
import pytest

from medtriplet.alignment import (
    Adam,
    DegenerateEmbeddingError,
    LossConfig,
    OptimizerConfig,
    TripletEmbeddings,
    TripletTrunks,
    cosine,
    gradient_report,
    head_gradients,
    multimodal_loss,
    train_heads,
    triplet_hinge,
)
from medtriplet.encoder import IMAGE, TEXT


def unit(*values):
    v = np.array(values, dtype=np.float64)
    return v / np.linalg.norm(v)


def random_trunks(rng, c=8):
    return TripletTrunks(*[rng.normal(size=c) for _ in range(6)])


def hinge_arguments(trunks, heads, cfg):
    """All four terms' pre-hinge arguments for one triplet."""
    e = {
        "i_a": heads[IMAGE] @ trunks.zi_a,
        "i_p": heads[IMAGE] @ trunks.zi_p,
        "i_n": heads[IMAGE] @ trunks.zi_n,
        "t_a": heads[TEXT] @ trunks.zt_a,
        "t_p": heads[TEXT] @ trunks.zt_p,
        "t_n": heads[TEXT] @ trunks.zt_n,
    }
    sign = 1.0 if cfg.sign_mode == "corrected" else -1.0
    args = []
    for a, p, n in (("i_a", "t_p", "t_n"), ("t_a", "i_p", "i_n"),
                    ("i_a", "i_p", "i_n"), ("t_a", "t_p", "t_n")):
        args.append(sign * (cosine(e[a], e[n]) - cosine(e[a], e[p])) + cfg.alpha)
    return args


class TestCosine:
    def test_self(self):
        x = np.array([0.3, -2.0, 5.0])
        assert cosine(x, x) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0

    def test_colinear(self):
        assert cosine(np.array([1.0, 2.0]), np.array([2.0, 4.0])) == pytest.approx(1.0)

    def test_zero_vector_raises(self):
        with pytest.raises(DegenerateEmbeddingError):
            cosine(np.zeros(3), np.ones(3))


class TestTripletHinge:
    def test_satisfied_margin(self):
        a, p, n = unit(1, 0), unit(1, 0), unit(0, 1)
        assert triplet_hinge(a, p, n, alpha=0.3) == 0.0

    def test_equal_similarities_give_alpha(self):
        a, pn = unit(1, 0), unit(1, 1)
        assert triplet_hinge(a, pn, pn, alpha=0.3) == pytest.approx(0.3)

    def test_worked_value(self):
        a = unit(1, 0)
        p = np.array([0.2, np.sqrt(1 - 0.04)])
        n = np.array([0.6, 0.8])
        assert triplet_hinge(a, p, n, alpha=0.3) == pytest.approx(0.7)

    def test_nonnegative(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            a, p, n = (rng.normal(size=5) for _ in range(3))
            assert triplet_hinge(a, p, n, alpha=float(rng.random())) >= 0.0

    def test_mode_contract(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            a, p, n = (rng.normal(size=6) for _ in range(3))
            alpha = float(rng.random())
            assert triplet_hinge(a, p, n, alpha, "corrected") == pytest.approx(
                triplet_hinge(a, n, p, alpha, "as-printed"), abs=1e-15
            )


class TestMultimodalLoss:
    def test_collapsed_embeddings_give_two_alpha(self):
        v = unit(1, 2, 3)
        t = TripletEmbeddings(v, v, v, v, v, v)
        total, terms = multimodal_loss(t, LossConfig(alpha=0.3, eta=0.5))
        assert all(term == pytest.approx(0.3) for term in terms.values())
        assert total == pytest.approx(0.6)

    def test_eta_one_drops_within_modal(self):
        rng = np.random.default_rng(2)
        t = TripletEmbeddings(*[rng.normal(size=4) for _ in range(6)])
        total, terms = multimodal_loss(t, LossConfig(eta=1.0))
        assert total == pytest.approx(terms["i2t"] + terms["t2i"], abs=1e-15)

    def test_eta_zero_drops_cross_modal(self):
        rng = np.random.default_rng(3)
        t = TripletEmbeddings(*[rng.normal(size=4) for _ in range(6)])
        total, terms = multimodal_loss(t, LossConfig(eta=0.0))
        assert total == pytest.approx(terms["i2i"] + terms["t2t"], abs=1e-15)

    def test_recombination_identity(self):
        rng = np.random.default_rng(4)
        for _ in range(300):
            t = TripletEmbeddings(*[rng.normal(size=5) for _ in range(6)])
            cfg = LossConfig(alpha=float(rng.random()), eta=float(rng.random()))
            total, terms = multimodal_loss(t, cfg)
            recombined = cfg.eta * (terms["i2t"] + terms["t2i"]) + (1 - cfg.eta) * (
                terms["i2i"] + terms["t2t"]
            )
            assert total == pytest.approx(recombined, abs=1e-12)
            assert total >= 0.0

    def test_positive_rescaling_invariance(self):
        rng = np.random.default_rng(5)
        vecs = [rng.normal(size=6) for _ in range(6)]
        cfg = LossConfig()
        base, _ = multimodal_loss(TripletEmbeddings(*vecs), cfg)
        for i in range(6):
            scaled = list(vecs)
            scaled[i] = 3.7 * scaled[i]
            total, _ = multimodal_loss(TripletEmbeddings(*scaled), cfg)
            assert total == pytest.approx(base, abs=1e-12)


class TestGradients:
    def test_flat_region_zero_gradient(self):
        e1, e2 = np.zeros(4), np.zeros(4)
        e1[0], e2[1] = 1.0, 1.0
        trunks = TripletTrunks(e1, e1, e2, e1, e1, e2)
        heads = {IMAGE: np.eye(4), TEXT: np.eye(4)}
        total, _, grads = head_gradients([trunks], heads, LossConfig(alpha=0.3))
        assert total == 0.0
        assert np.all(grads[IMAGE] == 0.0) and np.all(grads[TEXT] == 0.0)

    def test_analytic_matches_finite_differences(self):
        rng = np.random.default_rng(2024)
        accepted = 0
        worst = 0.0
        while accepted < 100:
            heads = {IMAGE: rng.normal(0, 0.5, (8, 8)), TEXT: rng.normal(0, 0.5, (8, 8))}
            batch = [random_trunks(rng) for _ in range(4)]
            cfg = LossConfig(alpha=float(rng.uniform(0, 0.8)), eta=float(rng.random()),
                             sign_mode="corrected" if rng.random() < 0.5 else "as-printed")
            # central differences are not a valid oracle within a step of
            # the hinge kink; resample draws that land there
            args = [z for t in batch for z in hinge_arguments(t, heads, cfg)]
            if min(abs(z) for z in args) < 5e-3:
                continue
            report = gradient_report(batch, heads, cfg, step=1e-4)
            worst = max(worst, report.max_rel_error)
            accepted += 1
        assert worst <= 1e-5

    def test_gradient_orthogonal_to_head_scaling(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            heads = {IMAGE: rng.normal(0, 0.5, (6, 6)), TEXT: rng.normal(0, 0.5, (6, 6))}
            batch = [random_trunks(rng, c=6) for _ in range(3)]
            _, _, grads = head_gradients(batch, heads, LossConfig())
            for modality in (IMAGE, TEXT):
                directional = float(np.sum(grads[modality] * heads[modality]))
                assert abs(directional) <= 1e-8

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            head_gradients([], {IMAGE: np.eye(2), TEXT: np.eye(2)}, LossConfig())


class TestAdamAndTraining:
    def _toy_trunks(self, rng, n=32, c=8):
        return [random_trunks(rng, c=c) for _ in range(n)]

    def test_zero_learning_rate_is_identity(self):
        rng = np.random.default_rng(7)
        trunks = self._toy_trunks(rng)
        heads = {IMAGE: rng.normal(0, 0.5, (8, 8)), TEXT: rng.normal(0, 0.5, (8, 8))}
        result = train_heads(trunks, heads, LossConfig(),
                             OptimizerConfig(learning_rate=0.0, epochs=5, batch_size=8, seed=0))
        np.testing.assert_array_equal(result.heads[IMAGE], heads[IMAGE])
        np.testing.assert_array_equal(result.heads[TEXT], heads[TEXT])
        totals = [e.total for e in result.curve]
        assert max(totals) == pytest.approx(min(totals), abs=1e-15)

    def test_same_seed_same_curve(self):
        rng = np.random.default_rng(8)
        trunks = self._toy_trunks(rng)
        heads = {IMAGE: rng.normal(0, 0.5, (8, 8)), TEXT: rng.normal(0, 0.5, (8, 8))}
        opt = OptimizerConfig(learning_rate=0.01, epochs=4, batch_size=8, seed=42)
        c1 = train_heads(trunks, heads, LossConfig(), opt).curve
        c2 = train_heads(trunks, heads, LossConfig(), opt).curve
        assert [e.total for e in c1] == [e.total for e in c2]

    def test_loss_decreases_on_trainable_problem(self):
        rng = np.random.default_rng(9)
        trunks = self._toy_trunks(rng, n=64)
        heads = {IMAGE: rng.normal(0, 0.5, (8, 8)), TEXT: rng.normal(0, 0.5, (8, 8))}
        result = train_heads(trunks, heads, LossConfig(),
                             OptimizerConfig(learning_rate=0.01, epochs=10, batch_size=16, seed=1))
        assert result.curve[-1].total < result.curve[0].total

    def test_adam_matches_reference_update(self):
        # single step against the textbook update rule
        params = {"w": np.array([1.0, -2.0])}
        grads = {"w": np.array([0.5, 0.5])}
        opt = Adam({k: v.copy() for k, v in params.items()}, OptimizerConfig(learning_rate=0.1))
        opt.step(grads)
        m = 0.1 * grads["w"]
        v = 0.001 * grads["w"] ** 2
        m_hat = m / 0.1
        v_hat = v / 0.001
        expected = params["w"] - 0.1 * m_hat / (np.sqrt(v_hat) + 1e-8)
        np.testing.assert_allclose(opt.params["w"], expected, atol=1e-12)

    def test_input_heads_not_mutated(self):
        rng = np.random.default_rng(10)
        trunks = self._toy_trunks(rng, n=16)
        heads = {IMAGE: rng.normal(0, 0.5, (8, 8)), TEXT: rng.normal(0, 0.5, (8, 8))}
        snapshot = {k: v.copy() for k, v in heads.items()}
        train_heads(trunks, heads, LossConfig(), OptimizerConfig(epochs=2, batch_size=8))
        for k in heads:
            np.testing.assert_array_equal(heads[k], snapshot[k])

    def test_resume_matches_straight_through_run(self):
        rng = np.random.default_rng(11)
        trunks = self._toy_trunks(rng, n=48)
        heads = {IMAGE: rng.normal(0, 0.5, (8, 8)), TEXT: rng.normal(0, 0.5, (8, 8))}
        base = OptimizerConfig(learning_rate=0.01, batch_size=16, seed=5)
        straight = train_heads(trunks, heads, LossConfig(), replace(base, epochs=5))
        first = train_heads(trunks, heads, LossConfig(), replace(base, epochs=3))
        second = train_heads(
            trunks, first.heads, LossConfig(), replace(base, epochs=2),
            resume_state=first.optimizer_state,
        )
        np.testing.assert_array_equal(second.heads[IMAGE], straight.heads[IMAGE])
        np.testing.assert_array_equal(second.heads[TEXT], straight.heads[TEXT])
        combined = [e.total for e in first.curve + second.curve]
        assert combined == [e.total for e in straight.curve]


class TestLossConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            LossConfig(alpha=-0.1)
        with pytest.raises(ValueError):
            LossConfig(eta=1.5)
        with pytest.raises(ValueError):
            LossConfig(sign_mode="upside-down")
