"""Categorical hidden Markov models: likelihood, smoothing, decoding, training.

All inference routines floor emission probabilities at :data:`EMISSION_FLOOR`
inside the dynamic programme (pass ``floor=0`` to disable). The model matrices
themselves are never modified.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels
from .errors import (
    CapacityError,
    DecodeError,
    EncodingError,
    InvalidInputError,
    TrainingDegeneracyError,
)

EMISSION_FLOOR = 1e-12
STOCHASTIC_TOL = 1e-9
BRUTE_FORCE_LIMIT = 10**7


def _frozen(values, ndim, name):
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise InvalidInputError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _check_stochastic(arr, name):
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise InvalidInputError(f"{name} entries must lie in [0, 1]")
    sums = arr.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > STOCHASTIC_TOL):
        raise InvalidInputError(f"{name} must be row-stochastic (sums {sums})")


@dataclass(frozen=True, eq=False)
class CategoricalHmm:
    """An HMM with discrete hidden states and discrete emission symbols.

    ``transition`` is N x N, ``emission`` is N x M, ``initial`` has length N.
    Arrays are copied and made read-only on construction.
    """

    transition: np.ndarray
    emission: np.ndarray
    initial: np.ndarray
    hidden_labels: tuple = ()
    symbol_labels: tuple = ()

    def __post_init__(self):
        A = _frozen(self.transition, 2, "transition")
        B = _frozen(self.emission, 2, "emission")
        pi = _frozen(self.initial, 1, "initial")
        n = A.shape[0]
        if n < 1 or A.shape != (n, n):
            raise InvalidInputError(f"transition must be square, got {A.shape}")
        if B.shape[0] != n or B.shape[1] < 1:
            raise InvalidInputError(f"emission must have {n} rows, got {B.shape}")
        if pi.shape != (n,):
            raise InvalidInputError(f"initial must have length {n}, got {pi.shape}")
        _check_stochastic(A, "transition")
        _check_stochastic(B, "emission")
        _check_stochastic(pi, "initial")
        hidden = tuple(self.hidden_labels) or tuple(f"H{i}" for i in range(n))
        symbols = tuple(self.symbol_labels) or tuple(f"V{k}" for k in range(B.shape[1]))
        if len(hidden) != n or len(set(hidden)) != n:
            raise InvalidInputError("hidden_labels must be N unique names")
        if len(symbols) != B.shape[1] or len(set(symbols)) != len(symbols):
            raise InvalidInputError("symbol_labels must be M unique names")
        for name, value in (
            ("transition", A),
            ("emission", B),
            ("initial", pi),
            ("hidden_labels", tuple(str(h) for h in hidden)),
            ("symbol_labels", tuple(str(s) for s in symbols)),
        ):
            object.__setattr__(self, name, value)

    @property
    def num_hidden(self) -> int:
        return self.transition.shape[0]

    @property
    def num_symbols(self) -> int:
        return self.emission.shape[1]

    def emission_matrix(self, obs, floor: float = EMISSION_FLOOR) -> np.ndarray:
        """Return the T x N matrix of ``b_j(o_t)``, floored at ``floor``."""
        obs = check_observation(obs, self.num_symbols)
        return np.maximum(self.emission[:, obs].T, floor)

    def sample(self, length: int, rng: np.random.Generator):
        """Draw ``(hidden, symbols)`` index arrays of the given length."""
        hidden = np.empty(length, dtype=np.int64)
        symbols = np.empty(length, dtype=np.int64)
        state = rng.choice(self.num_hidden, p=self.initial)
        for t in range(length):
            if t > 0:
                state = rng.choice(self.num_hidden, p=self.transition[state])
            hidden[t] = state
            symbols[t] = rng.choice(self.num_symbols, p=self.emission[state])
        return hidden, symbols


@dataclass(frozen=True, eq=False)
class ForwardLattice:
    alphas: np.ndarray
    scalers: np.ndarray
    log_likelihood: float

    @property
    def likelihood(self) -> float:
        return math.exp(self.log_likelihood)


@dataclass(frozen=True, eq=False)
class BackwardLattice:
    betas: np.ndarray


@dataclass(frozen=True, eq=False)
class PosteriorMatrix:
    gammas: np.ndarray


@dataclass(frozen=True, eq=False)
class ViterbiResult:
    path: np.ndarray
    log_prob: float
    backpointers: np.ndarray

    @property
    def prob(self) -> float:
        return math.exp(self.log_prob)


def check_observation(obs, num_symbols: int) -> np.ndarray:
    """Validate a symbol-index sequence and return it as an int64 array."""
    arr = np.asarray(obs)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError("observation sequence must be a non-empty 1-d sequence")
    if arr.dtype.kind not in "iu":
        if arr.dtype.kind == "f" and np.all(np.isfinite(arr)) and np.all(arr == np.round(arr)):
            arr = arr.astype(np.int64)
        else:
            raise EncodingError("observation must contain integer symbol indices")
    bad = np.flatnonzero((arr < 0) | (arr >= num_symbols))
    if bad.size:
        pos = int(bad[0])
        raise EncodingError(
            f"symbol {int(arr[pos])} at position {pos} is outside [0, {num_symbols})",
            position=pos,
        )
    return arr.astype(np.int64, copy=False)


def _safe_log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def forward_from_emissions(pi, A, emis) -> ForwardLattice:
    """Scaled forward pass over an explicit T x N emission matrix."""
    alphas, scalers = kernels.forward(pi, A, np.ascontiguousarray(emis, dtype=float))
    zero = np.flatnonzero(scalers <= 0.0)
    if zero.size:
        raise InvalidInputError(
            f"observation has zero probability under the model at step {int(zero[0])}"
        )
    return ForwardLattice(alphas, scalers, float(np.sum(np.log(scalers))))


def forward(hmm: CategoricalHmm, obs, floor: float = EMISSION_FLOOR) -> ForwardLattice:
    emis = hmm.emission_matrix(obs, floor)
    return forward_from_emissions(hmm.initial, hmm.transition, emis)


def backward(
    hmm: CategoricalHmm, obs, scalers, floor: float = EMISSION_FLOOR
) -> BackwardLattice:
    emis = hmm.emission_matrix(obs, floor)
    scalers = np.asarray(scalers, dtype=float)
    if scalers.shape != (emis.shape[0],):
        raise InvalidInputError(
            f"scalers length {scalers.size} does not match observation length {emis.shape[0]}"
        )
    if np.any(scalers <= 0.0):
        raise InvalidInputError("scalers must be strictly positive")
    return BackwardLattice(kernels.backward(hmm.transition, emis, scalers))


def _normalise_rows(m):
    return m / m.sum(axis=1, keepdims=True)


def posteriors(hmm: CategoricalHmm, obs, floor: float = EMISSION_FLOOR) -> PosteriorMatrix:
    """Smoothed state posteriors, one row per time step."""
    emis = hmm.emission_matrix(obs, floor)
    fw = forward_from_emissions(hmm.initial, hmm.transition, emis)
    betas = kernels.backward(hmm.transition, emis, fw.scalers)
    return PosteriorMatrix(_normalise_rows(fw.alphas * betas))


def viterbi_from_log_emissions(log_pi, log_A, log_emis) -> ViterbiResult:
    """Log-space Viterbi over an explicit T x N log-emission matrix.

    Ties at every argmax go to the lowest state index.
    """
    log_emis = np.ascontiguousarray(log_emis, dtype=float)
    path, deltas, psi = kernels.viterbi(
        np.ascontiguousarray(log_pi, dtype=float),
        np.ascontiguousarray(log_A, dtype=float),
        log_emis,
    )
    dead = np.flatnonzero(np.all(np.isneginf(deltas), axis=1))
    if dead.size:
        step = int(dead[0])
        raise DecodeError(f"no state sequence can explain the observation at step {step}", step=step)
    return ViterbiResult(path, float(deltas[-1, path[-1]]), psi)


def viterbi(hmm: CategoricalHmm, obs, floor: float = EMISSION_FLOOR) -> ViterbiResult:
    log_emis = _safe_log(hmm.emission_matrix(obs, floor))
    return viterbi_from_log_emissions(_safe_log(hmm.initial), _safe_log(hmm.transition), log_emis)


def extrapolate(transition, dist, steps: int) -> np.ndarray:
    """Propagate ``dist`` through the chain: row ``j`` is ``dist @ A**(j+1)``.

    ``transition`` may be a :class:`CategoricalHmm` or an N x N matrix.
    Returns a ``steps x N`` array (empty when ``steps == 0``).
    """
    A = transition.transition if isinstance(transition, CategoricalHmm) else np.asarray(transition, float)
    d = np.asarray(dist, dtype=float)
    if d.shape != (A.shape[0],):
        raise InvalidInputError(f"distribution must have length {A.shape[0]}")
    if np.any(d < 0) or abs(d.sum() - 1.0) > STOCHASTIC_TOL:
        raise InvalidInputError("distribution must be non-negative and sum to 1")
    if steps < 0:
        raise InvalidInputError("steps must be >= 0")
    out = np.empty((steps, A.shape[0]))
    for j in range(steps):
        d = d @ A
        d = d / d.sum()
        out[j] = d
    return out


def stationary(transition, dist=None, steps: int = 1000) -> np.ndarray:
    """Power-iteration estimate of the stationary distribution."""
    A = transition.transition if isinstance(transition, CategoricalHmm) else np.asarray(transition, float)
    if dist is None:
        dist = np.full(A.shape[0], 1.0 / A.shape[0])
    return extrapolate(A, dist, steps)[-1]


def baum_welch(
    init: CategoricalHmm,
    obs_set: Sequence,
    max_iter: int = 100,
    tol: float = 1e-6,
    callback: Optional[Callable[[int, float], None]] = None,
) -> CategoricalHmm:
    """Multi-sequence Baum-Welch re-estimation.

    Expected counts are summed over all sequences before each M-step. The
    E-step runs without the emission floor so that each iteration is an exact
    EM step. ``callback(iteration, log_likelihood)`` is invoked with the corpus
    log-likelihood of the parameters *before* each update. Iteration stops when
    the improvement drops below ``tol`` or after ``max_iter`` updates.
    """
    if len(obs_set) == 0:
        raise InvalidInputError("obs_set must contain at least one sequence")
    seqs = [check_observation(o, init.num_symbols) for o in obs_set]
    seen = np.unique(np.concatenate(seqs))
    dead = [int(k) for k in seen if not np.any(init.emission[:, k] > 0.0)]
    if dead:
        raise TrainingDegeneracyError(
            f"symbols {dead} are observed but have zero emission probability in every state"
        )

    A = np.array(init.transition)
    B = np.array(init.emission)
    pi = np.array(init.initial)
    symbols = np.ascontiguousarray(np.concatenate(seqs), dtype=np.int64)
    offsets = np.cumsum([0] + [q.size for q in seqs]).astype(np.int64)
    prev = -np.inf
    for it in range(max_iter + 1):
        pi_sum, xi_sum, gamma_sum, total, failed = kernels.corpus_estep(pi, A, B, symbols, offsets)
        if failed >= 0:
            raise TrainingDegeneracyError(f"sequence {failed} has zero probability under the current model")
        if callback is not None:
            callback(it, total)
        if it == max_iter or total - prev < tol:
            break
        prev = total

        pi = pi_sum / pi_sum.sum()
        rows = xi_sum.sum(axis=1, keepdims=True)
        A = np.where(rows > 0, xi_sum / np.where(rows > 0, rows, 1.0), A)
        occ = gamma_sum.sum(axis=1, keepdims=True)
        B = np.where(occ > 0, gamma_sum / np.where(occ > 0, occ, 1.0), B)
        # guard accumulated rounding before re-validating
        A /= A.sum(axis=1, keepdims=True)
        B /= B.sum(axis=1, keepdims=True)

    return CategoricalHmm(A, B, pi, init.hidden_labels, init.symbol_labels)


def brute_force(hmm: CategoricalHmm, obs, limit: int = BRUTE_FORCE_LIMIT):
    """Exhaustive enumeration over all ``N**T`` state paths.

    Returns ``(likelihood, best_path)``. The likelihood is summed in probability
    space. Path scores are log-probabilities; paths within the Viterbi tie
    tolerance of the best score count as tied, and among them the one whose
    time-reversed sequence is lexicographically smallest wins. That is the path
    a lowest-index Viterbi backtrack selects.
    """
    obs = check_observation(obs, hmm.num_symbols)
    N, T = hmm.num_hidden, obs.size
    if N**T > limit:
        raise CapacityError(f"{N}**{T} state paths exceed the enumeration limit {limit}")
    A, B, pi = hmm.transition, hmm.emission, hmm.initial
    logA, logB, logpi = _safe_log(A), _safe_log(B), _safe_log(pi)
    paths = list(itertools.product(range(N), repeat=T))
    terms = []
    scores = []
    for path in paths:
        p = pi[path[0]] * B[path[0], obs[0]]
        score = logpi[path[0]] + logB[path[0], obs[0]]
        for t in range(1, T):
            p *= A[path[t - 1], path[t]] * B[path[t], obs[t]]
            score = (score + logA[path[t - 1], path[t]]) + logB[path[t], obs[t]]
        terms.append(p)
        scores.append(score)
    best_score = max(scores)
    cut = best_score
    if math.isfinite(best_score):
        cut = best_score - kernels.TIE_RTOL * max(1.0, abs(best_score))
    best = min(path[::-1] for path, s in zip(paths, scores) if s >= cut)
    return math.fsum(terms), np.array(best[::-1], dtype=np.int64)
