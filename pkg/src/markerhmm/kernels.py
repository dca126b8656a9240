"""Dynamic-programming kernels over precomputed emission matrices.

Every kernel works on a ``T x N`` emission matrix (``emis[t, j] = b_j(o_t)``, or
its log for Viterbi) so that single-channel and pooled multi-channel decoding
share one code path. Each kernel exists twice: an explicit-loop version compiled
by numba and a vectorised numpy version. The module-level names dispatch to one
of the two according to :data:`markerhmm._accel.USE_NUMBA`.

Scaling follows the usual convention: ``scalers[t]`` is the sum of the
unnormalised forward values at ``t``, alphas are divided by it, and betas share
the same scalers so that ``betas[T-1] == 1 / scalers[T-1]``.

Viterbi maximisations treat candidates within :data:`TIE_RTOL` (relative) of
the maximum as tied and take the lowest index. Mathematically tied paths
accumulate different rounding so a strict comparison would pick among them at
random.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

TIE_RTOL = 1e-12

# numpy implementations ---------------------------------------------------


def forward_numpy(pi, A, emis):
    T, N = emis.shape
    alphas = np.empty((T, N))
    scalers = np.empty(T)
    a = pi * emis[0]
    for t in range(T):
        if t > 0:
            a = (alphas[t - 1] @ A) * emis[t]
        c = a.sum()
        scalers[t] = c
        if c <= 0.0:
            alphas[t:] = 0.0
            scalers[t:] = 0.0
            break
        alphas[t] = a / c
    return alphas, scalers


def backward_numpy(A, emis, scalers):
    T, N = emis.shape
    betas = np.empty((T, N))
    betas[T - 1] = 1.0 / scalers[T - 1]
    for t in range(T - 2, -1, -1):
        betas[t] = (A @ (emis[t + 1] * betas[t + 1])) / scalers[t]
    return betas


def _first_near_max_numpy(cand):
    # column-wise lowest row index whose value is within TIE_RTOL of the max
    mx = cand.max(axis=0)
    with np.errstate(invalid="ignore"):
        cut = mx - TIE_RTOL * np.maximum(1.0, np.abs(mx))
    cut = np.where(np.isfinite(mx), cut, mx)
    return np.argmax(cand >= cut, axis=0)


def viterbi_numpy(log_pi, log_A, log_emis):
    T, N = log_emis.shape
    deltas = np.empty((T, N))
    psi = np.zeros((T, N), dtype=np.int64)
    deltas[0] = log_pi + log_emis[0]
    for t in range(1, T):
        cand = deltas[t - 1][:, None] + log_A
        best = _first_near_max_numpy(cand)
        psi[t] = best
        deltas[t] = cand[best, np.arange(N)] + log_emis[t]
    path = np.empty(T, dtype=np.int64)
    path[T - 1] = _first_near_max_numpy(deltas[T - 1][:, None])[0]
    for t in range(T - 2, -1, -1):
        path[t] = psi[t + 1, path[t + 1]]
    return path, deltas, psi


def expected_transitions_numpy(alphas, betas, A, emis):
    # sum_t alpha_t(i) a_ij b_j(o_{t+1}) beta_{t+1}(j)
    right = emis[1:] * betas[1:]
    return A * (alphas[:-1].T @ right)


def corpus_estep_numpy(pi, A, B, symbols, offsets):
    N, M = B.shape
    pi_sum = np.zeros(N)
    xi_sum = np.zeros((N, N))
    gamma_sum = np.zeros((N, M))
    total = 0.0
    for k in range(offsets.size - 1):
        obs = symbols[offsets[k]:offsets[k + 1]]
        emis = np.ascontiguousarray(B[:, obs].T)
        alphas, scalers = forward_numpy(pi, A, emis)
        if scalers[-1] <= 0.0:
            return pi_sum, xi_sum, gamma_sum, -np.inf, k
        betas = backward_numpy(A, emis, scalers)
        gamma = alphas * betas * scalers[:, None]
        total += np.log(scalers).sum()
        pi_sum += gamma[0]
        np.add.at(gamma_sum.T, obs, gamma)
        if obs.size > 1:
            xi_sum += expected_transitions_numpy(alphas, betas, A, emis)
    return pi_sum, xi_sum, gamma_sum, total, -1


# numba implementations ---------------------------------------------------


@njit
def forward_numba(pi, A, emis):
    T, N = emis.shape
    alphas = np.zeros((T, N))
    scalers = np.zeros(T)
    for j in range(N):
        alphas[0, j] = pi[j] * emis[0, j]
    for t in range(T):
        if t > 0:
            for j in range(N):
                acc = 0.0
                for i in range(N):
                    acc += alphas[t - 1, i] * A[i, j]
                alphas[t, j] = acc * emis[t, j]
        c = 0.0
        for j in range(N):
            c += alphas[t, j]
        scalers[t] = c
        if c <= 0.0:
            for s in range(t, T):
                scalers[s] = 0.0
                for j in range(N):
                    alphas[s, j] = 0.0
            break
        for j in range(N):
            alphas[t, j] /= c
    return alphas, scalers


@njit
def backward_numba(A, emis, scalers):
    T, N = emis.shape
    betas = np.empty((T, N))
    for i in range(N):
        betas[T - 1, i] = 1.0 / scalers[T - 1]
    for t in range(T - 2, -1, -1):
        for i in range(N):
            acc = 0.0
            for j in range(N):
                acc += A[i, j] * emis[t + 1, j] * betas[t + 1, j]
            betas[t, i] = acc / scalers[t]
    return betas


@njit
def _first_near_max_numba(values):
    mx = values[0]
    for i in range(1, values.size):
        if values[i] > mx:
            mx = values[i]
    cut = mx
    if np.isfinite(mx):
        cut = mx - TIE_RTOL * max(1.0, abs(mx))
    for i in range(values.size):
        if values[i] >= cut:
            return i
    return 0


@njit
def viterbi_numba(log_pi, log_A, log_emis):
    T, N = log_emis.shape
    deltas = np.empty((T, N))
    psi = np.zeros((T, N), dtype=np.int64)
    for j in range(N):
        deltas[0, j] = log_pi[j] + log_emis[0, j]
    cand = np.empty(N)
    for t in range(1, T):
        for j in range(N):
            for i in range(N):
                cand[i] = deltas[t - 1, i] + log_A[i, j]
            best = _first_near_max_numba(cand)
            psi[t, j] = best
            deltas[t, j] = cand[best] + log_emis[t, j]
    path = np.empty(T, dtype=np.int64)
    path[T - 1] = _first_near_max_numba(deltas[T - 1])
    for t in range(T - 2, -1, -1):
        path[t] = psi[t + 1, path[t + 1]]
    return path, deltas, psi


@njit
def expected_transitions_numba(alphas, betas, A, emis):
    T, N = emis.shape
    xi = np.zeros((N, N))
    for t in range(T - 1):
        for i in range(N):
            for j in range(N):
                xi[i, j] += alphas[t, i] * A[i, j] * emis[t + 1, j] * betas[t + 1, j]
    return xi


@njit
def corpus_estep_numba(pi, A, B, symbols, offsets):
    N, M = B.shape
    pi_sum = np.zeros(N)
    xi_sum = np.zeros((N, N))
    gamma_sum = np.zeros((N, M))
    total = 0.0
    for k in range(offsets.size - 1):
        obs = symbols[offsets[k]:offsets[k + 1]]
        T = obs.size
        emis = np.empty((T, N))
        for t in range(T):
            for j in range(N):
                emis[t, j] = B[j, obs[t]]
        alphas, scalers = forward_numba(pi, A, emis)
        if scalers[T - 1] <= 0.0:
            return pi_sum, xi_sum, gamma_sum, -np.inf, k
        betas = backward_numba(A, emis, scalers)
        for t in range(T):
            total += np.log(scalers[t])
            for i in range(N):
                g = alphas[t, i] * betas[t, i] * scalers[t]
                gamma_sum[i, obs[t]] += g
                if t == 0:
                    pi_sum[i] += g
        if T > 1:
            xi_sum += expected_transitions_numba(alphas, betas, A, emis)
    return pi_sum, xi_sum, gamma_sum, total, -1


if USE_NUMBA:
    forward = forward_numba
    backward = backward_numba
    viterbi = viterbi_numba
    expected_transitions = expected_transitions_numba
    corpus_estep = corpus_estep_numba
else:
    forward = forward_numpy
    backward = backward_numpy
    viterbi = viterbi_numpy
    expected_transitions = expected_transitions_numpy
    corpus_estep = corpus_estep_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
