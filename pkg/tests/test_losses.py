import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import collapsed_simplex, random_problem
from balcon.embedding import PrototypeSet, UnitConfiguration
from balcon.errors import InvalidSpecError, NoPositiveError
from balcon.longtail import Batch, sample_batch
from balcon.losses import (
    ClassifierWeights,
    LossParams,
    anchor_losses,
    averaged_loss_L1,
    averaged_loss_L2,
    batch_loss,
    bcl_instance_loss,
    class_batch_loss,
    combined_loss,
    contrastive_breakdown,
    lc_cross_entropy,
    lc_losses,
    prototype_loss_L3,
    scl_instance_loss,
)
from balcon.simplex import SimplexSpec, build_regular_simplex

SIMPLEX4_TAU1 = 0.5826576530618005  # log(1 + 3 exp(-4/3))


def same_point(n, h=3):
    z = np.zeros((n, h))
    z[:, 0] = 1.0
    return UnitConfiguration(z, [0] * n, 1)


class TestSCL:
    def test_pair_of_identical_points(self):
        z = same_point(2)
        assert scl_instance_loss(z, Batch.full(z.labels), 0, 0.1) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("tau", [0.05, 0.1, 1.0, 7.0])
    def test_three_identical_points(self, tau):
        z = same_point(3)
        assert scl_instance_loss(z, Batch.full(z.labels), 1, tau) == pytest.approx(math.log(2), abs=1e-12)

    def test_matches_naive_oracle(self, rng):
        for _ in range(20):
            z, batch, _ = random_problem(rng, 12, 3, 4, ensure_pairs=True)
            for i in range(12):
                if batch.size_of(z.labels[i]) < 2:
                    continue
                expect = oracles.scl(z.z, z.labels, list(range(12)), i, 0.5)
                assert scl_instance_loss(z, batch, i, 0.5) == pytest.approx(expect, abs=1e-10)

    def test_singleton_raises(self):
        z = UnitConfiguration([[1.0, 0.0], [0.0, 1.0]], [0, 1], 2)
        with pytest.raises(NoPositiveError):
            scl_instance_loss(z, Batch.full(z.labels), 0, 1.0)

    def test_anchor_must_be_in_batch(self, rng):
        z, _, _ = random_problem(rng, 6, 2, 3, ensure_pairs=True)
        with pytest.raises(InvalidSpecError):
            scl_instance_loss(z, Batch.from_labels([0, 1, 2], z.labels), 5, 1.0)


class TestClassBatch:
    def test_singleton_and_absent_classes_are_zero(self):
        z = UnitConfiguration([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]], [0, 1, 1], 3)
        batch = Batch.full(z.labels)
        assert class_batch_loss(z, batch, 0, 1.0) == 0.0
        assert class_batch_loss(z, batch, 2, 1.0) == 0.0
        assert class_batch_loss(z, batch, 1, 1.0) > 0

    @pytest.mark.parametrize("variant", ["scl", "l1", "l2", "bcl"])
    def test_regrouping_equals_whole_batch(self, rng, variant):
        z, batch, protos = random_problem(rng, 20, 4, 5)
        per_class = sum(class_batch_loss(z, batch, y, 0.3, variant, protos)
                        for y in sorted(batch.classes_present))
        assert batch_loss(z, batch, 0.3, variant, protos) == per_class

    def test_class_loss_is_sum_of_instance_losses(self, rng):
        z, batch, _ = random_problem(rng, 15, 3, 4, ensure_pairs=True)
        for y in range(3):
            idx = [i for i in range(15) if z.labels[i] == y]
            direct = sum(oracles.scl(z.z, z.labels, list(range(15)), i, 1.0) for i in idx)
            assert class_batch_loss(z, batch, y, 1.0) == pytest.approx(direct, rel=1e-12)


class TestAveraged:
    def test_symmetric_balanced_batch_gives_log_class_count(self):
        # all points identical: every similarity equals 1
        K, per = 4, 3
        z = np.zeros((K * per, 2))
        z[:, 0] = 1.0
        labels = np.repeat(np.arange(K), per)
        uz = UnitConfiguration(z, labels, K)
        batch = Batch.full(labels)
        for i in range(K * per):
            assert averaged_loss_L1(uz, batch, i, 0.2) == pytest.approx(math.log(K), abs=1e-12)
            assert averaged_loss_L2(uz, batch, i, 0.2) == pytest.approx(math.log(K), abs=1e-12)

    def test_pair_single_class_is_zero(self):
        z = same_point(2)
        batch = Batch.full(z.labels)
        assert averaged_loss_L1(z, batch, 0, 0.1) == pytest.approx(0.0, abs=1e-14)
        assert averaged_loss_L2(z, batch, 0, 0.1) == pytest.approx(0.0, abs=1e-14)

    @pytest.mark.parametrize("variant, oracle", [("l1", oracles.l1), ("l2", oracles.l2)])
    def test_matches_naive_oracle(self, rng, variant, oracle):
        for _ in range(15):
            z, batch, _ = random_problem(rng, 14, 4, 3, ensure_pairs=True)
            got = anchor_losses(z, batch, variant, 0.7)
            for i in range(14):
                if batch.size_of(z.labels[i]) > 1:
                    assert got[i] == pytest.approx(oracle(z.z, z.labels, list(range(14)), i, 0.7), abs=1e-10)

    def test_jensen_ordering(self, rng):
        for _ in range(200):
            N = int(rng.integers(4, 40))
            z, batch, _ = random_problem(rng, N, int(rng.integers(1, 8)), int(rng.integers(2, 12)))
            a1 = anchor_losses(z, batch, "l1", 0.5)
            a2 = anchor_losses(z, batch, "l2", 0.5)
            assert np.all(a1 >= a2 - 1e-10)

    def test_singleton_anchor_raises(self):
        z = UnitConfiguration([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]], [0, 1, 1], 2)
        with pytest.raises(NoPositiveError):
            averaged_loss_L1(z, Batch.full(z.labels), 0, 1.0)


class TestPrototypeL3:
    def test_single_class(self):
        assert prototype_loss_L3([1.0, 0.0], 0, PrototypeSet([[0.0, 1.0]]), 0.1) == 0.0

    def test_simplex_vertex(self):
        c = build_regular_simplex(SimplexSpec(4, 5), seed=2)
        assert prototype_loss_L3(c[1], 1, PrototypeSet(c), 1.0) == pytest.approx(SIMPLEX4_TAU1, abs=1e-12)

    def test_equals_softmax_cross_entropy(self, rng):
        for _ in range(50):
            z = oracles.random_unit(rng, 1, 6)[0]
            c = oracles.random_unit(rng, 5, 6)
            y = int(rng.integers(5))
            logits = [float(v) for v in c @ z / 0.3]
            assert prototype_loss_L3(z, y, PrototypeSet(c), 0.3) == pytest.approx(
                oracles.softmax_ce(logits, y), abs=1e-12)


class TestBCL:
    def test_singleton_anchor_is_finite(self):
        z = UnitConfiguration([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]], [0, 1, 1], 2)
        protos = PrototypeSet([[1.0, 0.0], [0.0, 1.0]])
        value = bcl_instance_loss(z, Batch.full(z.labels), 0, protos, 1.0)
        # only the prototype is positive; class 1 contributes (1 + 1 + 1) / 3
        expect = math.log(math.e + 1.0) - 1.0
        assert value == pytest.approx(expect, abs=1e-14)

    def test_collapsed_simplex_value(self):
        z, protos = collapsed_simplex([5, 3, 2, 1])
        losses = anchor_losses(z, Batch.full(z.labels), "bcl", 1.0, protos)
        np.testing.assert_allclose(losses, SIMPLEX4_TAU1, rtol=0, atol=1e-12)

    def test_one_per_class_equals_L3(self):
        z, protos = collapsed_simplex([1, 1, 1, 1])
        batch = Batch.full(z.labels)
        for i in range(4):
            assert bcl_instance_loss(z, batch, i, protos, 1.0) == pytest.approx(
                prototype_loss_L3(z.z[i], int(z.labels[i]), protos, 1.0), abs=1e-12)

    def test_matches_naive_oracle(self, rng):
        for _ in range(20):
            z, batch, protos = random_problem(rng, 13, 4, 5)
            got = anchor_losses(z, batch, "bcl", 0.4, protos)
            for i in range(13):
                assert got[i] == pytest.approx(
                    oracles.bcl(z.z, z.labels, list(range(13)), i, protos.c, 0.4), abs=1e-10)

    def test_sub_batch_uses_only_batch_members(self, rng):
        z, _, protos = random_problem(rng, 30, 3, 4)
        batch = sample_batch(z.labels, 11, rng)
        got = anchor_losses(z, batch, "bcl", 1.0, protos)
        members = batch.indices.tolist()
        for pos, i in enumerate(members):
            assert got[pos] == pytest.approx(oracles.bcl(z.z, z.labels, members, i, protos.c, 1.0), abs=1e-10)

    def test_permutation_invariance(self, rng):
        z, batch, protos = random_problem(rng, 17, 4, 6)
        base = anchor_losses(z, batch, "bcl", 0.2, protos)
        perm = rng.permutation(17)
        zp = UnitConfiguration(z.z[perm], z.labels[perm], z.K)
        shuffled = anchor_losses(zp, Batch.full(zp.labels), "bcl", 0.2, protos)
        np.testing.assert_allclose(shuffled, base[perm], rtol=1e-12, atol=1e-14)
        assert shuffled.sum() == pytest.approx(base.sum(), rel=1e-12)

    def test_needs_prototypes(self, rng):
        z, batch, _ = random_problem(rng, 5, 2, 2)
        with pytest.raises(InvalidSpecError):
            anchor_losses(z, batch, "bcl", 1.0)


class TestLogitCompensation:
    def test_uniform_priors_reduce_to_cross_entropy(self, rng):
        for _ in range(100):
            logits = rng.normal(scale=3, size=6)
            y = int(rng.integers(6))
            assert lc_cross_entropy(logits, y, np.full(6, 1 / 6)) == pytest.approx(
                oracles.softmax_ce(list(logits), y), abs=1e-12)

    def test_zero_logits_give_prior(self):
        assert lc_cross_entropy([0.0, 0.0], 0, [0.9, 0.1]) == pytest.approx(0.10536051565782628, abs=1e-14)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=8), st.data())
    def test_nonnegative(self, logits, data):
        K = len(logits)
        raw = data.draw(st.lists(st.floats(0.01, 1.0), min_size=K, max_size=K))
        priors = np.array(raw) / sum(raw)
        y = data.draw(st.integers(0, K - 1))
        assert lc_cross_entropy(logits, y, priors) >= 0.0

    def test_alpha_scales(self):
        base = lc_cross_entropy([1.0, -2.0, 0.5], 2, [0.5, 0.3, 0.2])
        assert lc_cross_entropy([1.0, -2.0, 0.5], 2, [0.5, 0.3, 0.2], alpha=[1.0, 1.0, 3.0]) == pytest.approx(3 * base)


class TestCombined:
    def setup_problem(self, rng, lam, mu):
        z, batch, protos = random_problem(rng, 16, 4, 5)
        W = rng.standard_normal((4, 5))
        clf = ClassifierWeights.from_counts(W, np.bincount(z.labels, minlength=4) + 1)
        return z, batch, protos, clf, LossParams(0.1, lam, mu)

    def test_components(self, rng):
        z, batch, protos, clf, params = self.setup_problem(rng, 2.0, 0.6)
        bd = combined_loss(z, batch, protos, clf, params)
        lc = lc_losses(z.z @ clf.W.T, z.labels, clf.priors).mean()
        bcl = anchor_losses(z, batch, "bcl", 0.1, protos).mean()
        assert bd.total == pytest.approx(2.0 * lc + 0.6 * bcl, rel=1e-13)
        assert bd.per_instance.sum() == pytest.approx(bd.total, rel=1e-8)
        assert bd.attraction + bd.repulsion == pytest.approx(0.6 * bcl, rel=1e-12)

    def test_mu_zero(self, rng):
        z, batch, protos, clf, params = self.setup_problem(rng, 1.5, 0.0)
        bd = combined_loss(z, batch, protos, clf, params)
        assert bd.total == pytest.approx(1.5 * lc_losses(z.z @ clf.W.T, z.labels, clf.priors).mean(), rel=1e-13)

    def test_lambda_zero(self, rng):
        z, batch, protos, clf, params = self.setup_problem(rng, 0.0, 0.6)
        bd = combined_loss(z, batch, protos, clf, params)
        assert bd.total == pytest.approx(0.6 * anchor_losses(z, batch, "bcl", 0.1, protos).mean(), rel=1e-13)

    def test_invalid_params(self):
        with pytest.raises(InvalidSpecError):
            LossParams(tau=0.0)
        with pytest.raises(InvalidSpecError):
            LossParams(lam=-1.0)

    def test_invalid_priors(self):
        with pytest.raises(InvalidSpecError):
            ClassifierWeights(np.zeros((2, 3)), [0.5, 0.6])


def test_temperature_rescales_similarities(rng):
    # loss at temperature tau on z equals loss at tau=1 on similarities s/tau; check
    # via a reference built from the scaled similarity matrix directly.
    z, batch, _ = random_problem(rng, 10, 2, 3, ensure_pairs=True)
    tau = 0.25
    s = z.z @ z.z.T / tau
    got = anchor_losses(z, batch, "scl", tau)
    for i in range(10):
        pos = [p for p in range(10) if p != i and z.labels[p] == z.labels[i]]
        others = [k for k in range(10) if k != i]
        m = max(s[i, k] for k in others)
        lse = m + math.log(sum(math.exp(s[i, k] - m) for k in others))
        assert got[i] == pytest.approx(sum(lse - s[i, p] for p in pos) / len(pos), abs=1e-10)


@pytest.mark.parametrize("variant", ["scl", "l1", "l2", "l3", "bcl"])
def test_finite_at_small_temperature(rng, variant):
    # similarities spanning [-1, 1] at tau=0.05 overflow a naive exp
    z = np.zeros((8, 2))
    angles = np.linspace(0, np.pi, 8)
    z[:, 0], z[:, 1] = np.cos(angles), np.sin(angles)
    labels = np.array([0, 0, 1, 1, 2, 2, 3, 3])
    uz = UnitConfiguration(z, labels, 4)
    protos = PrototypeSet(z[[0, 2, 4, 6]])
    losses = anchor_losses(uz, Batch.full(labels), variant, 0.05, protos)
    assert np.all(np.isfinite(losses))
    bd = contrastive_breakdown(uz, Batch.full(labels), variant, 0.05, protos)
    assert np.isfinite(bd.total)
    assert bd.total == pytest.approx(bd.attraction + bd.repulsion, rel=1e-12)
