"""Similarity score: worked values, algebraic properties, oracle equivalence."""

import numpy as np
import pytest

from conftest import entities
from medtriplet.scoring import GammaWeights, jaccard, score
from oracles import enumerate_uniform_entities, oracle_score, random_entities, to_meta

WORKED_MI = entities({"pneumonia": ({"mild"}, {"left"}), "edema": (set(), set())})
WORKED_MJ = entities({"pneumonia": ({"mild", "severe"}, {"right"})})


class TestGammaWeights:
    def test_defaults(self):
        w = GammaWeights()
        assert (w.g0, w.g1, w.g2) == (0.85, 0.10, 0.05)

    def test_sum_enforced(self):
        with pytest.raises(ValueError):
            GammaWeights(0.5, 0.5, 0.5)

    def test_nonnegative_enforced(self):
        with pytest.raises(ValueError):
            GammaWeights(1.2, -0.1, -0.1)


class TestJaccard:
    def test_partial(self):
        assert jaccard({"mild"}, {"mild", "severe"}) == 0.5

    def test_identity(self):
        assert jaccard({"left"}, {"left"}) == 1.0

    def test_both_empty_is_zero(self):
        assert jaccard(set(), set()) == 0.0


class TestWorkedExample:
    def test_union_semantics(self):
        b = score(WORKED_MI, WORKED_MJ)
        assert b.prefactor == pytest.approx(0.5, abs=1e-15)
        assert b.shared_diseases[0].summand == pytest.approx(0.90, abs=1e-12)
        assert b.total == pytest.approx(0.45, abs=1e-12)

    def test_intersection_semantics(self):
        b = score(WORKED_MI, WORKED_MJ, semantics="intersection")
        assert b.shared_diseases[0].summand == pytest.approx(0.9 / 0.95, abs=1e-12)
        assert b.total == pytest.approx(0.9 / 0.95 / 2.0, abs=1e-12)

    def test_matches_oracle(self):
        mi = {"pneumonia": ({"mild"}, {"left"}), "edema": (set(), set())}
        mj = {"pneumonia": ({"mild", "severe"}, {"right"})}
        for semantics in ("union", "intersection"):
            expected = oracle_score(mi, mj, 0.85, 0.10, 0.05, semantics)
            assert score(WORKED_MI, WORKED_MJ, semantics=semantics).total == pytest.approx(
                expected, abs=1e-15
            )


class TestEdgeCases:
    def test_disjoint_diseases_zero(self):
        mi = entities({"edema": ({"mild"}, set())})
        mj = entities({"pneumonia": ({"mild"}, set())})
        assert score(mi, mj).total == 0.0

    def test_empty_side_zero(self):
        mi = entities({})
        mj = entities({"pneumonia": (set(), set())})
        assert score(mi, mj).total == 0.0
        assert score(mj, mi).total == 0.0

    def test_identical_is_one(self):
        m = entities({"edema": ({"mild"}, {"left"}), "pneumonia": (set(), {"upper"})})
        for semantics in ("union", "intersection"):
            assert score(m, m, semantics=semantics).total == pytest.approx(1.0, abs=1e-15)

    def test_breakdown_identity(self):
        b = score(WORKED_MI, WORKED_MJ)
        assert b.total == pytest.approx(b.prefactor * sum(t.summand for t in b.shared_diseases), abs=1e-15)


class TestProperties:
    """Randomized invariants over heterogeneous entity pairs."""

    def _random_weights(self, rng):
        raw = rng.random(3) + 0.05
        g = raw / raw.sum()
        g0 = 1.0 - g[1] - g[2]  # exact sum to 1 in floating point
        return GammaWeights(g0, float(g[1]), float(g[2]))

    def test_symmetry_range_zero_law_self_score(self):
        rng = np.random.default_rng(1234)
        for _ in range(2000):
            pi, pj = random_entities(rng), random_entities(rng)
            mi, mj = to_meta(pi), to_meta(pj)
            w = self._random_weights(rng)
            semantics = "union" if rng.random() < 0.5 else "intersection"
            fwd = score(mi, mj, w, semantics)
            rev = score(mj, mi, w, semantics)
            assert fwd.total == rev.total  # exact symmetry
            assert 0.0 <= fwd.total <= 1.0 + 1e-12
            disjoint = not (set(pi) & set(pj))
            assert (fwd.total == 0.0) == disjoint  # g0 > 0 by construction
            if pi:
                assert score(mi, mi, w, semantics).total == pytest.approx(1.0, abs=1e-12)

    def test_added_shared_adjective_never_decreases_union_score(self):
        # Holds under union indicator semantics; the intersection variant
        # deliberately lacks this guarantee (a fully mismatched pair
        # already scores as high as a matched one).
        rng = np.random.default_rng(99)
        checked = 0
        for _ in range(3000):
            pi, pj = random_entities(rng), random_entities(rng)
            shared = sorted(set(pi) & set(pj))
            if not shared:
                continue
            disease = shared[int(rng.integers(len(shared)))]
            w = self._random_weights(rng)
            before = score(to_meta(pi), to_meta(pj), w, "union").total
            pi[disease][0].add("fresh-adjective")
            pj[disease][0].add("fresh-adjective")
            after = score(to_meta(pi), to_meta(pj), w, "union").total
            assert after >= before - 1e-12
            checked += 1
        assert checked > 500


class TestOracleEquivalence:
    def test_exhaustive_uniform_universe(self):
        universe = enumerate_uniform_entities(
            ("d1", "d2", "d3"), ("a1", "a2"), ("r1", "r2")
        )
        assert len(universe) ** 2 >= 4000
        w = GammaWeights()
        for semantics in ("union", "intersection"):
            for pi in universe:
                mi = to_meta(pi)
                for pj in universe:
                    expected = oracle_score(pi, pj, w.g0, w.g1, w.g2, semantics)
                    got = score(mi, to_meta(pj), w, semantics).total
                    assert abs(got - expected) <= 1e-12

    def test_random_heterogeneous_pairs(self):
        rng = np.random.default_rng(31337)
        w = GammaWeights()
        for _ in range(2000):
            pi, pj = random_entities(rng), random_entities(rng)
            semantics = "union" if rng.random() < 0.5 else "intersection"
            expected = oracle_score(pi, pj, w.g0, w.g1, w.g2, semantics)
            assert score(to_meta(pi), to_meta(pj), w, semantics).total == pytest.approx(
                expected, abs=1e-12
            )
