"""Discrete-emission hidden Markov model with numerically stable scoring.

Likelihood evaluation uses the scaled forward recursion: the state
distribution is renormalized at every step and the log scale factors are
summed, so sequences of 100,000+ symbols score without underflow. A
brute-force path enumeration is kept alongside as an independent oracle for
short sequences; it shares no code with the scaled recursion.

Training is standard multi-sequence Baum-Welch with scaled forward-backward.
Expected counts from all sequences are pooled before each re-estimation.
Two guard rails keep re-estimation total: a state with zero posterior
occupancy keeps its rows unchanged for that iteration, and emission entries
are floored at ``EMISSION_FLOOR`` so one unseen symbol at test time cannot
force a minus-infinity score.

The hot loops are numba-compiled; results are deterministic for identical
inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from numba import njit

from .codec import ObservationSequence
from .errors import (
    DimensionError,
    EmptyCorpusError,
    EmptySequenceError,
    OracleSizeError,
    SymbolRangeError,
)

ROW_SUM_TOL = 1e-9
EMISSION_FLOOR = 1e-10
ORACLE_MAX_LEN = 12
ORACLE_MAX_PATHS = 10_000_000


@dataclass(frozen=True)
class HmmParams:
    """Model parameters: transition matrix, emission matrix, initial vector.

    Rows of ``transition`` and ``emission`` and the ``initial`` vector must
    each sum to 1 within ``ROW_SUM_TOL`` and contain no negative entries.
    """

    transition: np.ndarray
    emission: np.ndarray
    initial: np.ndarray

    def __post_init__(self) -> None:
        a = np.ascontiguousarray(np.asarray(self.transition, dtype=np.float64))
        b = np.ascontiguousarray(np.asarray(self.emission, dtype=np.float64))
        pi = np.ascontiguousarray(np.asarray(self.initial, dtype=np.float64))
        object.__setattr__(self, "transition", a)
        object.__setattr__(self, "emission", b)
        object.__setattr__(self, "initial", pi)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("transition must be a square matrix")
        n = a.shape[0]
        if b.ndim != 2 or b.shape[0] != n:
            raise ValueError("emission must have one row per state")
        if pi.shape != (n,):
            raise ValueError("initial must be a length-N vector")
        for name, rows in (("transition", a), ("emission", b), ("initial", pi[None, :])):
            if np.any(rows < 0):
                raise ValueError(f"{name} contains negative entries")
            sums = rows.sum(axis=1)
            if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
                raise ValueError(f"{name} rows must sum to 1 within {ROW_SUM_TOL}")

    @property
    def n_states(self) -> int:
        return int(self.transition.shape[0])

    @property
    def n_symbols(self) -> int:
        return int(self.emission.shape[1])


@dataclass
class TrainingReport:
    """Outcome of one Baum-Welch run."""

    final_params: HmmParams
    log_likelihood_history: list[float]
    iterations_run: int


def _as_symbols(obs: ObservationSequence | np.ndarray | Sequence[int]) -> np.ndarray:
    if isinstance(obs, ObservationSequence):
        return obs.symbols
    return np.asarray(obs, dtype=np.int32)


def _check_symbols(symbols: np.ndarray, n_symbols: int) -> None:
    if symbols.size == 0:
        return
    lo = int(symbols.min())
    hi = int(symbols.max())
    if lo < 0 or hi >= n_symbols:
        raise SymbolRangeError(
            f"symbols must lie in [0, {n_symbols}); found range [{lo}, {hi}]"
        )


def init_params(n_states: int, n_symbols: int, seed) -> HmmParams:
    """Draw near-uniform stochastic parameters, deterministically per seed.

    Every row entry starts at ``1/d`` with a uniform perturbation of at most
    ``0.1/d`` in either direction, then the row is renormalized.
    """
    if n_states < 1 or n_symbols < 1:
        raise DimensionError("n_states and n_symbols must both be >= 1")
    rng = np.random.default_rng(seed)

    def rows(count: int, width: int) -> np.ndarray:
        base = np.full((count, width), 1.0 / width)
        base += rng.uniform(-0.1 / width, 0.1 / width, size=(count, width))
        return base / base.sum(axis=1, keepdims=True)

    transition = rows(n_states, n_states)
    emission = rows(n_states, n_symbols)
    initial = rows(1, n_states)[0]
    return HmmParams(transition=transition, emission=emission, initial=initial)


def brute_force_likelihood(params: HmmParams, obs) -> float:
    """Exact P(O | model) by summing over every hidden state path.

    Oracle-only: restricted to short sequences (length <= ``ORACLE_MAX_LEN``
    and at most ``ORACLE_MAX_PATHS`` paths). Pure Python on purpose; it must
    stay independent of the scaled recursion it cross-checks.
    """
    symbols = _as_symbols(obs)
    t_len = int(symbols.shape[0])
    if t_len < 1:
        raise EmptySequenceError("brute force requires at least one symbol")
    n = params.n_states
    if t_len > ORACLE_MAX_LEN or n**t_len > ORACLE_MAX_PATHS:
        raise OracleSizeError(
            f"refusing exhaustive enumeration: N={n}, length={t_len}"
        )
    _check_symbols(symbols, params.n_symbols)

    a = params.transition.tolist()
    b = params.emission.tolist()
    pi = params.initial.tolist()
    seq = [int(s) for s in symbols]

    total = 0.0
    states = range(n)
    # Iterative depth-first walk over all N^T paths.
    stack = [(0, i, pi[i] * b[i][seq[0]]) for i in reversed(states)]
    while stack:
        t, state, prob = stack.pop()
        if t == t_len - 1:
            total += prob
            continue
        nxt = seq[t + 1]
        arow = a[state]
        for j in reversed(states):
            stack.append((t + 1, j, prob * arow[j] * b[j][nxt]))
    return total


@njit(cache=True)
def _forward_ll(a, b, pi, obs):  # pragma: no cover - exercised via wrapper
    n = a.shape[0]
    alpha = np.empty(n)
    nxt = np.empty(n)
    o = obs[0]
    total = 0.0
    for i in range(n):
        alpha[i] = pi[i] * b[i, o]
        total += alpha[i]
    if total <= 0.0:
        return -np.inf
    ll = np.log(total)
    for i in range(n):
        alpha[i] /= total
    for t in range(1, obs.shape[0]):
        o = obs[t]
        total = 0.0
        for j in range(n):
            s = 0.0
            for i in range(n):
                s += alpha[i] * a[i, j]
            v = s * b[j, o]
            nxt[j] = v
            total += v
        if total <= 0.0:
            return -np.inf
        ll += np.log(total)
        for j in range(n):
            alpha[j] = nxt[j] / total
    return ll


@njit(cache=True)
def _bw_accumulate(a, b, pi, obs, a_num, b_num, pi_num, occ):  # pragma: no cover
    """Scaled forward-backward for one sequence; pools expected counts.

    Returns the sequence log-likelihood under the current parameters, or
    -inf if the sequence has zero probability. The scaled alpha/beta
    identities make gamma = alpha_hat * beta_hat directly, and the xi terms
    only need one extra division by the next step's scale factor.
    """
    t_len = obs.shape[0]
    n = a.shape[0]
    alpha = np.empty((t_len, n))
    scale = np.empty(t_len)

    o = obs[0]
    total = 0.0
    for i in range(n):
        alpha[0, i] = pi[i] * b[i, o]
        total += alpha[0, i]
    if total <= 0.0:
        return -np.inf
    scale[0] = total
    for i in range(n):
        alpha[0, i] /= total
    for t in range(1, t_len):
        o = obs[t]
        total = 0.0
        for j in range(n):
            s = 0.0
            for i in range(n):
                s += alpha[t - 1, i] * a[i, j]
            v = s * b[j, o]
            alpha[t, j] = v
            total += v
        if total <= 0.0:
            return -np.inf
        scale[t] = total
        for j in range(n):
            alpha[t, j] /= total

    beta = np.ones(n)
    beta_next = np.empty(n)
    o = obs[t_len - 1]
    for i in range(n):
        g = alpha[t_len - 1, i]
        occ[i] += g
        b_num[i, o] += g
    for t in range(t_len - 2, -1, -1):
        o_next = obs[t + 1]
        c_next = scale[t + 1]
        for i in range(n):
            s = 0.0
            for j in range(n):
                edge = a[i, j] * b[j, o_next] * beta[j]
                s += edge
                a_num[i, j] += alpha[t, i] * edge / c_next
            beta_next[i] = s / c_next
        o = obs[t]
        for i in range(n):
            beta[i] = beta_next[i]
            g = alpha[t, i] * beta[i]
            occ[i] += g
            b_num[i, o] += g
    for i in range(n):
        pi_num[i] += alpha[0, i] * beta[i]

    ll = 0.0
    for t in range(t_len):
        ll += np.log(scale[t])
    return ll


def forward_log_likelihood(params: HmmParams, obs) -> float:
    """ln P(O | model) via the scaled forward recursion.

    Returns ``-inf`` when the sequence has zero probability under the model.
    """
    symbols = _as_symbols(obs)
    if symbols.shape[0] < 1:
        raise EmptySequenceError("forward recursion requires at least one symbol")
    _check_symbols(symbols, params.n_symbols)
    return float(_forward_ll(params.transition, params.emission, params.initial, symbols))


def llpo(params: HmmParams, obs) -> float:
    """Log-likelihood per opcode: ln P(O | model) / |O|."""
    symbols = _as_symbols(obs)
    if symbols.shape[0] < 1:
        raise EmptySequenceError("llpo requires at least one symbol")
    _check_symbols(symbols, params.n_symbols)
    ll = float(_forward_ll(params.transition, params.emission, params.initial, symbols))
    return ll / symbols.shape[0]


def _floor_emission(emission: np.ndarray) -> np.ndarray:
    low = emission < EMISSION_FLOOR
    if not low.any():
        return emission
    floored = np.where(low, EMISSION_FLOOR, emission)
    return floored / floored.sum(axis=1, keepdims=True)


def baum_welch_train(
    initial: HmmParams,
    sequences: Iterable[ObservationSequence | np.ndarray],
    max_iters: int = 200,
    tol: float | None = None,
    on_iteration: Callable[[int, HmmParams, float], None] | None = None,
) -> TrainingReport:
    """Multi-sequence Baum-Welch re-estimation.

    Runs exactly ``max_iters`` iterations unless ``tol`` is given, in which
    case training stops once the total log-likelihood improves by less than
    ``tol``. The recorded history holds the log-likelihood of the parameters
    entering each iteration, so it is non-decreasing by EM monotonicity.
    ``on_iteration(index, params_after_update, log_likelihood)`` is invoked
    after each completed iteration when provided.
    """
    if max_iters < 0:
        raise ValueError("max_iters must be >= 0")
    obs_list = [_as_symbols(s) for s in sequences]
    if not obs_list:
        raise EmptyCorpusError("Baum-Welch requires at least one sequence")
    for symbols in obs_list:
        if symbols.shape[0] < 1:
            raise EmptySequenceError("training sequences must be non-empty")
        _check_symbols(symbols, initial.n_symbols)

    params = initial
    n, m = initial.n_states, initial.n_symbols
    history: list[float] = []
    for iteration in range(max_iters):
        a_num = np.zeros((n, n))
        b_num = np.zeros((n, m))
        pi_num = np.zeros(n)
        occ = np.zeros(n)
        total_ll = 0.0
        for symbols in obs_list:
            ll = _bw_accumulate(
                params.transition, params.emission, params.initial,
                symbols, a_num, b_num, pi_num, occ,
            )
            if not math.isfinite(ll):
                raise ValueError(
                    "a training sequence has zero probability under the current parameters"
                )
            total_ll += float(ll)
        history.append(total_ll)

        new_a = params.transition.copy()
        new_b = params.emission.copy()
        for i in range(n):
            if occ[i] > 0.0:
                row_total = a_num[i].sum()
                if row_total > 0.0:
                    new_a[i] = a_num[i] / row_total
                new_b[i] = b_num[i] / b_num[i].sum()
        new_b = _floor_emission(new_b)
        new_pi = pi_num / pi_num.sum()
        params = HmmParams(transition=new_a, emission=new_b, initial=new_pi)

        if on_iteration is not None:
            on_iteration(iteration, params, total_ll)
        if tol is not None and len(history) >= 2 and history[-1] - history[-2] < tol:
            break

    return TrainingReport(
        final_params=params,
        log_likelihood_history=history,
        iterations_run=len(history),
    )
