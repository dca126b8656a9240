import math

import numpy as np
import pytest

from markerhmm import hmm, kernels
from markerhmm.errors import (
    CapacityError,
    DecodeError,
    EncodingError,
    InvalidInputError,
    TrainingDegeneracyError,
)
from markerhmm.hmm import CategoricalHmm

from conftest import random_hmm


def test_model_validation():
    with pytest.raises(InvalidInputError):
        CategoricalHmm([[0.5, 0.4], [0.5, 0.5]], [[1.0], [1.0]], [0.5, 0.5])
    with pytest.raises(InvalidInputError):
        CategoricalHmm([[1.0]], [[1.0]], [0.9])
    with pytest.raises(InvalidInputError):
        CategoricalHmm([[1.0]], [[1.0]], [1.0], ("a", "b"))
    with pytest.raises(InvalidInputError):
        CategoricalHmm([[0.5, 0.5], [0.5, 0.5]], [[1.0], [1.0]], [0.5, 0.5], ("a", "a"))


def test_model_is_read_only(fix1):
    with pytest.raises(ValueError):
        fix1.transition[0, 0] = 0.1
    assert fix1.num_hidden == 2 and fix1.num_symbols == 2


class TestForward:
    def test_single_step(self, fix1):
        # 0.6*0.9 + 0.4*0.2
        assert fix1 is not None
        lat = hmm.forward(fix1, [0])
        assert lat.likelihood == pytest.approx(0.62, abs=1e-12)

    def test_two_steps(self, fix1):
        # enumeration of the four paths: .6*.9*.7*.1 + .6*.9*.3*.8 + .4*.2*.4*.1 + .4*.2*.6*.8
        expected = 0.6 * 0.9 * 0.7 * 0.1 + 0.6 * 0.9 * 0.3 * 0.8 + 0.4 * 0.2 * 0.4 * 0.1 + 0.4 * 0.2 * 0.6 * 0.8
        assert expected == pytest.approx(0.2090, abs=1e-12)
        lat = hmm.forward(fix1, [0, 1])
        assert lat.likelihood == pytest.approx(expected, rel=1e-12)
        np.testing.assert_allclose(lat.alphas.sum(axis=1), 1.0, atol=1e-12)
        assert lat.log_likelihood == pytest.approx(np.log(lat.scalers).sum(), abs=1e-15)

    def test_single_state_chain(self):
        m = CategoricalHmm([[1.0]], [[0.3, 0.7]], [1.0])
        obs = [0, 1, 1, 0, 1]
        assert hmm.forward(m, obs).likelihood == pytest.approx(0.3**2 * 0.7**3, rel=1e-12)

    def test_errors(self, fix1):
        with pytest.raises(InvalidInputError):
            hmm.forward(fix1, [])
        with pytest.raises(EncodingError) as info:
            hmm.forward(fix1, [0, 1, 2])
        assert info.value.position == 2
        assert "position 2" in str(info.value)

    def test_long_sequence_does_not_underflow(self, fix1):
        rng = np.random.default_rng(3)
        _, obs = fix1.sample(5000, rng)
        lat = hmm.forward(fix1, obs)
        assert np.isfinite(lat.log_likelihood) and lat.log_likelihood < -1000


class TestBackward:
    def test_unscaled_betas(self, fix1):
        lat = hmm.forward(fix1, [0, 1])
        betas = hmm.backward(fix1, [0, 1], lat.scalers).betas
        # unscaled beta_t = scaled beta_t * prod_{s >= t} c_s
        unscaled_first = betas[0] * np.prod(lat.scalers)
        np.testing.assert_allclose(unscaled_first, [0.31, 0.52], atol=1e-12)
        assert np.dot(fix1.initial * fix1.emission[:, 0], unscaled_first) == pytest.approx(0.2090, abs=1e-12)
        assert betas[-1] == pytest.approx(1.0 / lat.scalers[-1])

    def test_single_step_is_one(self, fix1):
        lat = hmm.forward(fix1, [1])
        betas = hmm.backward(fix1, [1], lat.scalers).betas
        np.testing.assert_allclose(betas[0] * lat.scalers[0], 1.0)

    def test_reconstruction_every_step(self):
        rng = np.random.default_rng(11)
        m = random_hmm(rng, 3, 4)
        obs = rng.integers(0, 4, size=9)
        lat = hmm.forward(m, obs)
        betas = hmm.backward(m, obs, lat.scalers).betas
        lik = lat.likelihood
        for t in range(obs.size):
            unscaled_alpha = lat.alphas[t] * np.prod(lat.scalers[: t + 1])
            unscaled_beta = betas[t] * np.prod(lat.scalers[t:])
            assert np.dot(unscaled_alpha, unscaled_beta) == pytest.approx(lik, rel=1e-9)

    def test_length_mismatch(self, fix1):
        with pytest.raises(InvalidInputError):
            hmm.backward(fix1, [0, 1], [1.0])


class TestPosteriors:
    def test_fix1_pair(self, fix1):
        # alpha_1 = [.54, .08], beta_1 = [.31, .52]; alpha_2 = [.0486+.0032... ]
        g = hmm.posteriors(fix1, [0, 1]).gammas
        np.testing.assert_allclose(g[0], [0.54 * 0.31 / 0.209, 0.08 * 0.52 / 0.209], atol=1e-12)
        np.testing.assert_allclose(g[0], [0.8010, 0.1990], atol=1e-4)
        np.testing.assert_allclose(g[1], [0.1962, 0.8038], atol=1e-4)

    def test_fix1_single(self, fix1):
        g = hmm.posteriors(fix1, [0]).gammas
        np.testing.assert_allclose(g[0], [0.54 / 0.62, 0.08 / 0.62], atol=1e-12)

    def test_matches_brute_force_marginals(self):
        rng = np.random.default_rng(5)
        m = random_hmm(rng, 3, 3)
        obs = [0, 2, 1, 1]
        joint = np.zeros((4, 3))
        import itertools

        for path in itertools.product(range(3), repeat=4):
            p = m.initial[path[0]] * m.emission[path[0], obs[0]]
            for t in range(1, 4):
                p *= m.transition[path[t - 1], path[t]] * m.emission[path[t], obs[t]]
            for t, s in enumerate(path):
                joint[t, s] += p
        joint /= joint.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(hmm.posteriors(m, obs).gammas, joint, atol=1e-12)


class TestViterbi:
    def test_fix1(self, fix1):
        res = hmm.viterbi(fix1, [0, 1])
        assert list(res.path) == [0, 1]
        assert res.prob == pytest.approx(0.6 * 0.9 * 0.3 * 0.8, rel=1e-12)
        assert res.prob == pytest.approx(0.1296, abs=1e-12)
        assert res.backpointers.shape == (2, 2)

    def test_fix1_single(self, fix1):
        assert list(hmm.viterbi(fix1, [0]).path) == [0]

    def test_identity_emissions(self):
        m = CategoricalHmm(np.full((3, 3), 1 / 3), np.eye(3), np.full(3, 1 / 3))
        obs = [2, 0, 1, 1, 2]
        assert list(hmm.viterbi(m, obs).path) == obs

    def test_impossible_observation_without_floor(self):
        m = CategoricalHmm(np.eye(2), np.eye(2), [1.0, 0.0])
        with pytest.raises(DecodeError) as info:
            hmm.viterbi(m, [0, 1], floor=0.0)
        assert info.value.step == 1
        # default floor degrades rather than fails
        assert len(hmm.viterbi(m, [0, 1]).path) == 2

    def test_tie_goes_to_lowest_index(self):
        m = CategoricalHmm(np.full((2, 2), 0.5), np.full((2, 2), 0.5), [0.5, 0.5])
        res = hmm.viterbi(m, [0, 1, 0])
        assert list(res.path) == [0, 0, 0]
        _, best = hmm.brute_force(m, [0, 1, 0])
        assert list(best) == [0, 0, 0]


class TestExtrapolate:
    def test_one_step(self, fix1):
        np.testing.assert_allclose(hmm.extrapolate(fix1, [1, 0], 1), [[0.7, 0.3]])

    def test_stationary(self, fix1):
        out = hmm.extrapolate(fix1, [0.2, 0.8], 200)
        np.testing.assert_allclose(out[-1], [4 / 7, 3 / 7], atol=1e-6)
        np.testing.assert_allclose(hmm.stationary(fix1), [4 / 7, 3 / 7], atol=1e-9)

    def test_identity_chain(self):
        d = np.array([0.1, 0.6, 0.3])
        out = hmm.extrapolate(np.eye(3), d, 7)
        assert out.shape == (7, 3)
        np.testing.assert_allclose(out, np.tile(d, (7, 1)), atol=1e-12)

    def test_zero_steps(self, fix1):
        assert hmm.extrapolate(fix1, [0.5, 0.5], 0).shape == (0, 2)

    def test_rejects_unnormalised(self, fix1):
        with pytest.raises(InvalidInputError):
            hmm.extrapolate(fix1, [0.5, 0.6], 3)


class TestBruteForce:
    def test_fix1(self, fix1):
        lik, path = hmm.brute_force(fix1, [0, 1])
        assert lik == pytest.approx(0.2090, abs=1e-12)
        assert list(path) == [0, 1]

    def test_single_state(self):
        m = CategoricalHmm([[1.0]], [[0.25, 0.75]], [1.0])
        lik, path = hmm.brute_force(m, [1, 1, 0])
        assert lik == pytest.approx(0.75 * 0.75 * 0.25)
        assert list(path) == [0, 0, 0]

    def test_length_one(self, fix1):
        lik, _ = hmm.brute_force(fix1, [1])
        assert lik == pytest.approx(0.6 * 0.1 + 0.4 * 0.8)

    def test_guard(self, fix1):
        with pytest.raises(CapacityError):
            hmm.brute_force(fix1, [0] * 24)


class TestBaumWelch:
    def test_single_state_frequency(self):
        init = CategoricalHmm([[1.0]], [[0.5, 0.5]], [1.0])
        out = hmm.baum_welch(init, [[0] * 20], max_iter=20)
        np.testing.assert_allclose(out.emission, [[1.0, 0.0]], atol=1e-12)

    def test_monotone_from_true_model(self, fix1):
        rng = np.random.default_rng(0)
        corpus = [fix1.sample(50, rng)[1] for _ in range(20)]
        history = []
        hmm.baum_welch(fix1, corpus, max_iter=30, tol=0.0, callback=lambda i, ll: history.append(ll))
        assert np.all(np.diff(history) >= -1e-9)

    @staticmethod
    def _recovery_error(fix1, seed, num_seqs, seq_len):
        rng = np.random.default_rng(seed)
        corpus = [fix1.sample(seq_len, rng)[1] for _ in range(num_seqs)]
        init = CategoricalHmm(
            [[0.65, 0.35], [0.45, 0.55]], [[0.85, 0.15], [0.25, 0.75]], [0.55, 0.45]
        )
        out = hmm.baum_welch(init, corpus, max_iter=3000, tol=1e-8)
        return min(
            np.abs(out.transition[np.ix_(p, p)] - fix1.transition).max()
            for p in ([0, 1], [1, 0])
        )

    def test_recovers_fix1_transitions(self, fix1):
        # 10^4 steps; at this size the MLE itself is only ~0.05 from the truth
        assert self._recovery_error(fix1, seed=3, num_seqs=100, seq_len=100) <= 0.05

    @pytest.mark.skipif(not kernels.USE_NUMBA, reason="10**5-step corpus is too slow for the pure-numpy kernels")
    def test_recovers_fix1_transitions_large_corpus(self, fix1):
        assert self._recovery_error(fix1, seed=1, num_seqs=100, seq_len=1000) <= 0.05

    def test_output_is_valid_model(self):
        rng = np.random.default_rng(8)
        init = random_hmm(rng, 3, 4)
        corpus = [rng.integers(0, 4, size=rng.integers(1, 12)) for _ in range(15)]
        out = hmm.baum_welch(init, corpus, max_iter=25)
        assert isinstance(out, CategoricalHmm)
        assert np.allclose(out.transition.sum(axis=1), 1.0)

    def test_degenerate_symbol(self):
        init = CategoricalHmm([[1.0]], [[1.0, 0.0]], [1.0])
        with pytest.raises(TrainingDegeneracyError):
            hmm.baum_welch(init, [[0, 1]])

    def test_empty_corpus(self, fix1):
        with pytest.raises(InvalidInputError):
            hmm.baum_welch(fix1, [])
