"""Tests for the S2S loss terms, direction weights and composite objective."""

import numpy as np
import pytest

from s2sreid.data.dataset import View
from s2sreid.errors import UsageError
from s2sreid.loss.batch import MarginalPair, SampleRef, SetBatch, TripletUnit
from s2sreid.loss.direction import (
    DirectionMode,
    DirectionWeights,
    active_triplets,
    update_direction_weights,
)
from s2sreid.loss.objective import MarginConfig, TripletForm, total_loss
from s2sreid.loss.terms import (
    class_centers,
    class_identity_loss,
    conventional_triplet_loss,
    marginal_pairwise_loss,
    regularization,
    symmetric_triplet_loss,
)
from s2sreid.mining.miner import MiningConfig, sample_triplets, select_marginal_pairs
from s2sreid.nn.gradcheck import check_gradient
from tests.fixtures import random_set_batch

A, B = View.A, View.B


def unit(anchor, positive, negative):
    """Triplet over a 2-identity, M=1 batch: anchor row 0 view A, pos row 0 view B, neg row 1 view B."""
    emb = np.zeros((2, 2, 1, len(anchor)))
    emb[0, 0, 0] = anchor
    emb[0, 1, 0] = positive
    emb[1, 1, 0] = negative
    triplet = TripletUnit(SampleRef(0, A, 0), SampleRef(0, B, 0), SampleRef(1, B, 0))
    return SetBatch(emb, (0, 1)), [triplet]


def pair_batch(d2, g):
    emb = np.zeros((2, 2, 1, 1))
    emb[0, 1, 0, 0] = np.sqrt(d2) if g == 1 else 0.0
    emb[1, 1, 0, 0] = np.sqrt(d2) if g == -1 else 0.0
    other = 0 if g == 1 else 1
    return SetBatch(emb, (0, 1)), [MarginalPair(SampleRef(0, A, 0), SampleRef(other, B, 0), g)]


class TestSetBatch:
    def test_shape_checks(self):
        with pytest.raises(UsageError):
            SetBatch(np.zeros((2, 3, 1, 2)), (0, 1))
        with pytest.raises(UsageError):
            SetBatch(np.zeros((2, 2, 1, 2)), (0,))

    def test_loss_needs_two_identities(self):
        with pytest.raises(UsageError, match="2 identities"):
            class_identity_loss(SetBatch(np.zeros((1, 2, 2, 2)), (0,)), 0.1)

    def test_non_finite_rejected(self):
        batch = random_set_batch()
        emb = batch.embeddings.copy()
        emb[0, 0, 0, 0] = np.nan
        with pytest.raises(UsageError, match="non-finite"):
            class_identity_loss(batch.with_embeddings(emb), 0.1)

    def test_triplet_invariants(self):
        batch = random_set_batch()
        bad = TripletUnit(SampleRef(0, A, 0), SampleRef(0, A, 1), SampleRef(1, B, 0))
        with pytest.raises(UsageError):
            bad.check(batch)
        same = TripletUnit(SampleRef(0, A, 0), SampleRef(0, B, 1), SampleRef(0, B, 0))
        with pytest.raises(UsageError, match="negative"):
            same.check(batch)


class TestClassIdentity:
    def test_center_of_two_points(self):
        emb = np.zeros((2, 2, 2, 2))
        emb[0, 0] = [[0.0, 0.0], [1.0, 0.0]]
        np.testing.assert_array_equal(class_centers(SetBatch(emb, (0, 1)), A)[0], [0.5, 0.0])

    def test_center_matches_summed_mean(self):
        batch = random_set_batch(n=2, m=4, d=3, seed=4)
        x = batch.embeddings[1, 1]
        expected = (x[0] + x[1] + x[2] + x[3]) / 4
        np.testing.assert_allclose(class_centers(batch, B)[1], expected, rtol=0, atol=1e-15)

    def test_hand_value(self):
        emb = np.zeros((2, 2, 2, 2))
        emb[:, :] = [[0.0, 0.0], [1.0, 0.0]]
        result = class_identity_loss(SetBatch(emb, (0, 1)), 0.1)
        assert result.loss == pytest.approx(0.15, abs=1e-15)
        assert result.active == 8

    def test_identical_samples_give_zero(self):
        emb = np.broadcast_to(np.arange(3.0), (3, 2, 4, 3)).copy()
        result = class_identity_loss(SetBatch(emb, (0, 1, 2)), 0.1)
        assert result.loss == 0.0
        assert not result.grad.any()

    def test_translation_invariance(self):
        batch = random_set_batch(seed=8)
        shifted = batch.embeddings.copy()
        shifted[1] += np.array([3.0, -1.0, 0.5, 2.0])
        a = class_identity_loss(batch, 0.1).loss
        b = class_identity_loss(batch.with_embeddings(shifted), 0.1).loss
        assert b == pytest.approx(a, abs=1e-12)

    @pytest.mark.parametrize("pooled,frozen", [(False, False), (True, False), (False, True)])
    def test_gradient(self, pooled, frozen):
        batch = random_set_batch(n=3, m=3, d=2, seed=2)

        def func(e):
            r = class_identity_loss(batch.with_embeddings(e), 0.1, pooled=pooled,
                                    frozen_centers=frozen)
            return r.loss, r.grad

        if frozen:
            # Frozen centres are a different function of e; check the direct part only.
            r = class_identity_loss(batch, 0.1, frozen_centers=True)
            centers = np.stack([class_centers(batch, v) for v in View], axis=1)
            diff = batch.embeddings - centers[:, :, None, :]
            active = np.einsum("...d,...d->...", diff, diff) > 0.1
            expected = 2.0 * diff * active[..., None] / r.normalizer
            np.testing.assert_allclose(r.grad, expected, atol=1e-15)
        else:
            assert check_gradient(func, batch.embeddings, floor=1e-4) < 1e-6

    def test_negative_margin(self):
        with pytest.raises(UsageError):
            class_identity_loss(random_set_batch(), -0.1)


class TestTriplet:
    def test_collapsed_triplet(self):
        batch, triplets = unit([1.0, 1.0], [1.0, 1.0], [1.0, 1.0])
        result = symmetric_triplet_loss(batch, triplets, 0.6, 0.4, 1.0)
        assert result.loss == 1.0

    def test_hand_value_inactive(self):
        # d_ap = 1, d_an = 2, d_pn = 2 -> T = 1.2 + 0.8 - 1 = 1.0
        batch, triplets = unit([0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(1.75)])
        a, p, n = batch.embeddings[0, 0, 0], batch.embeddings[0, 1, 0], batch.embeddings[1, 1, 0]
        assert np.sum((a - p) ** 2) == pytest.approx(1.0)
        assert np.sum((a - n) ** 2) == pytest.approx(2.0)
        assert np.sum((p - n) ** 2) == pytest.approx(2.0)
        result = symmetric_triplet_loss(batch, triplets, 0.6, 0.4, 1.0)
        assert result.loss == pytest.approx(0.0, abs=1e-12)

    def test_conventional_inactive(self):
        batch, triplets = unit([0.0], [0.0], [np.sqrt(2.0)])
        assert conventional_triplet_loss(batch, triplets, 1.0).loss == 0.0

    def test_conventional_equals_symmetric_with_unit_weights(self):
        batch = random_set_batch(n=10, m=10, seed=12)
        config = MiningConfig(ids_per_batch=10, samples_per_view=10, triplets_per_anchor=10)
        triplets = sample_triplets(batch, config, np.random.default_rng(0))
        assert len(triplets) == 1000
        sym = symmetric_triplet_loss(batch, triplets, 1.0, 0.0, 1.0)
        conv = conventional_triplet_loss(batch, triplets, 1.0)
        assert 0 < conv.active < 1000
        assert sym.loss == pytest.approx(conv.loss, abs=1e-12)
        np.testing.assert_array_equal(sym.mask, conv.mask)
        np.testing.assert_allclose(sym.grad, conv.grad, rtol=0, atol=1e-12)

    def test_conventional_positive_gradient_ignores_negative(self):
        batch, triplets = unit([0.0, 0.0], [0.5, 0.0], [0.0, 0.5])
        conv = conventional_triplet_loss(batch, triplets, 1.0)
        a, p = batch.embeddings[0, 0, 0], batch.embeddings[0, 1, 0]
        np.testing.assert_allclose(conv.grad[0, 1, 0], -2.0 * (a - p))
        sym = symmetric_triplet_loss(batch, triplets, 0.6, 0.4, 1.0)
        assert not np.allclose(sym.grad[0, 1, 0], -2.0 * (a - p))

    def test_empty_triplets(self):
        result = symmetric_triplet_loss(random_set_batch(), [], 0.6, 0.4, 1.0)
        assert result.loss == 0.0 and result.normalizer == 0


class TestPairwise:
    def test_colocated_positive(self):
        batch, pairs = pair_batch(0.0, 1)
        assert marginal_pairwise_loss(batch, pairs, 0.175, 0.325).loss == 0.0

    def test_positive_hand_value(self):
        batch, pairs = pair_batch(0.5, 1)
        assert marginal_pairwise_loss(batch, pairs, 0.175, 0.325).loss == pytest.approx(0.35)

    @pytest.mark.parametrize("d2,expected", [(0.2, 0.30), (0.6, 0.0)])
    def test_negative_hand_values(self, d2, expected):
        batch, pairs = pair_batch(d2, -1)
        assert marginal_pairwise_loss(batch, pairs, 0.175, 0.325).loss == pytest.approx(expected)

    @pytest.mark.parametrize("c_p,m_p", [(0.3, 0.3), (0.0, 0.3), (0.4, 0.3)])
    def test_margin_order(self, c_p, m_p):
        batch, pairs = pair_batch(0.1, 1)
        with pytest.raises(UsageError):
            marginal_pairwise_loss(batch, pairs, c_p, m_p)

    def test_sign_must_match_identities(self):
        batch, _ = pair_batch(0.1, 1)
        wrong = [MarginalPair(SampleRef(0, A, 0), SampleRef(1, B, 0), 1)]
        with pytest.raises(UsageError):
            marginal_pairwise_loss(batch, wrong, 0.175, 0.325)


class TestRegularization:
    def test_values(self):
        assert regularization(np.zeros(5))[0] == 0.0
        # W = [[1, 1], [1, 1]], b = [0, 0]
        value, _ = regularization(np.array([1.0, 1.0, 1.0, 1.0, 0.0, 0.0]))
        assert value == 4.0
        p = np.random.default_rng(0).normal(size=7)
        np.testing.assert_array_equal(regularization(p)[1], 2.0 * p)


class TestScaling:
    """Scaling embeddings by s and every margin by s^2 scales each loss by s^2."""

    S = 3.0

    def setup_method(self):
        self.batch = random_set_batch(n=4, m=3, seed=21)
        self.scaled = SetBatch(self.batch.embeddings * self.S, self.batch.identity_ids)
        config = MiningConfig(ids_per_batch=4, samples_per_view=3)
        self.triplets = sample_triplets(self.batch, config, np.random.default_rng(1))
        self.pairs, _ = select_marginal_pairs(self.batch, self.batch.embeddings, config)

    def check(self, base, scaled):
        assert scaled.active == base.active
        assert scaled.loss == pytest.approx(self.S ** 2 * base.loss, rel=1e-9)

    def test_class_identity(self):
        base = class_identity_loss(self.batch, 1.5)
        self.check(base, class_identity_loss(self.scaled, 1.5 * self.S ** 2))
        assert 0 < base.active < base.normalizer

    def test_symmetric_triplet(self):
        base = symmetric_triplet_loss(self.batch, self.triplets, 0.6, 0.4, 1.0)
        scaled = symmetric_triplet_loss(self.scaled, self.triplets, 0.6, 0.4, self.S ** 2)
        self.check(base, scaled)
        np.testing.assert_array_equal(scaled.mask, base.mask)

    def test_pairwise(self):
        base = marginal_pairwise_loss(self.batch, self.pairs, 0.175, 0.325)
        scaled = marginal_pairwise_loss(self.scaled, self.pairs, 0.175 * self.S ** 2,
                                        0.325 * self.S ** 2)
        self.check(base, scaled)


class TestDirectionWeights:
    def test_positive_mode_update(self):
        w = DirectionWeights(psi=0.5, phi=0.1, eta=0.001)
        out = update_direction_weights(w, np.array([1.0]), np.array([3.0]), np.array([0.5]))
        assert out.phi == pytest.approx(0.099)
        assert out.mu == pytest.approx(0.599)
        assert out.nu == pytest.approx(0.401)

    def test_analytic_update_follows_dT_dphi(self):
        w = DirectionWeights(psi=0.5, phi=0.1, eta=0.001, mode=DirectionMode.ANALYTIC)
        out = update_direction_weights(w, np.array([1.0]), np.array([3.0]), np.array([0.5]))
        assert out.phi == pytest.approx(0.1 + 0.001 * 5.0)

    def test_zero_eta_is_fixed(self):
        w = DirectionWeights.from_mu_nu(1.0, 0.0, eta=0.0)
        out = update_direction_weights(w, np.array([4.0]), np.array([1.0]), np.array([0.1]))
        assert (out.mu, out.nu) == (1.0, 0.0)

    def test_balanced_triplets_leave_weights(self):
        w = DirectionWeights()
        out = update_direction_weights(w, np.array([1.0, 2.0]), np.zeros(2), np.array([1.0, 2.0]))
        assert out.phi == w.phi

    def test_sum_is_conserved_exactly(self):
        rng = np.random.default_rng(0)
        w = DirectionWeights.from_mu_nu(0.6, 0.4, eta=0.01)
        total = w.mu + w.nu
        for _ in range(200):
            w = update_direction_weights(w, rng.uniform(0, 3, 4), rng.uniform(0, 3, 4),
                                         rng.uniform(0, 3, 4))
            assert w.mu + w.nu == total
            assert -w.psi <= w.phi <= w.psi

    def test_from_mu_nu(self):
        w = DirectionWeights.from_mu_nu(0.6, 0.4)
        assert w.psi == 0.5 and w.phi == pytest.approx(0.1)

    def test_invalid(self):
        with pytest.raises(UsageError):
            DirectionWeights(eta=-1.0)
        with pytest.raises(UsageError):
            DirectionWeights(psi=0.5, phi=0.6)

    def test_active_triplets_filters_inactive(self):
        batch, triplets = unit([0.0], [0.0], [10.0])
        d_ap, _, _ = active_triplets(batch, triplets, DirectionWeights(), 1.0)
        assert d_ap.size == 0


def separated_batch():
    """Tight clusters far apart: every hinge inactive."""
    rng = np.random.default_rng(0)
    centers = np.array([[0.0, 0.0], [20.0, 0.0], [0.0, 20.0]])
    emb = centers[:, None, None, :] + rng.uniform(-0.05, 0.05, size=(3, 2, 2, 2))
    return SetBatch(emb, (0, 1, 2))


class TestTotalLoss:
    config = MiningConfig(ids_per_batch=3, samples_per_view=2, triplets_per_anchor=2, k_marginal=2)

    def mined(self, batch):
        triplets = sample_triplets(batch, self.config, np.random.default_rng(1))
        pairs, _ = select_marginal_pairs(batch, batch.embeddings, self.config)
        return triplets, pairs

    def test_only_triplet_term(self):
        batch = random_set_batch(seed=3)
        triplets, pairs = self.mined(batch)
        margins = MarginConfig(alpha=0.0, beta=0.0, lam=0.0)
        weights = DirectionWeights()
        report = total_loss(batch, triplets, pairs, np.ones(4), margins, weights)
        expected = symmetric_triplet_loss(batch, triplets, weights.mu, weights.nu, 1.0).loss
        assert report.total == expected

    def test_all_inactive(self):
        batch = separated_batch()
        triplets, pairs = self.mined(batch)
        params = np.array([0.5, -1.0, 2.0])
        margins = MarginConfig()
        report = total_loss(batch, triplets, pairs, params, margins, DirectionWeights())
        assert report.total == pytest.approx(margins.beta * 5.25)
        assert not report.grad_embeddings.any()
        assert report.active == {"class": 0, "triplet": 0, "pair": 0}
        np.testing.assert_allclose(report.grad_params, margins.beta * 2.0 * params)

    def test_recomposition(self):
        batch = random_set_batch(seed=6)
        triplets, pairs = self.mined(batch)
        params = np.random.default_rng(2).normal(size=10)
        m = MarginConfig()
        w = DirectionWeights()
        report = total_loss(batch, triplets, pairs, params, m, w)
        expected = (m.alpha * class_identity_loss(batch, m.m_c).loss
                    + symmetric_triplet_loss(batch, triplets, w.mu, w.nu, m.m_t).loss
                    + m.lam * marginal_pairwise_loss(batch, pairs, m.c_p, m.m_p).loss
                    + m.beta * regularization(params)[0])
        assert report.total == pytest.approx(expected, abs=1e-12)
        assert report.terms()["l_t"] == report.l_t

    def test_conventional_form(self):
        batch = random_set_batch(seed=9)
        triplets, pairs = self.mined(batch)
        margins = MarginConfig(alpha=0.0, beta=0.0, lam=0.0)
        report = total_loss(batch, triplets, pairs, np.zeros(1), margins, DirectionWeights(),
                            triplet_form=TripletForm.CONVENTIONAL)
        assert report.total == conventional_triplet_loss(batch, triplets, 1.0).loss

    def test_invalid_margins(self):
        with pytest.raises(UsageError):
            MarginConfig(c_p=0.4, m_p=0.3)
