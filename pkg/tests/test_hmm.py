from __future__ import annotations

import math

import numpy as np
import pytest

import opstream as op
from opstream.errors import (
    DimensionError,
    EmptyCorpusError,
    EmptySequenceError,
    OracleSizeError,
    SymbolRangeError,
)


def random_params(rng: np.random.Generator, n: int, m: int) -> op.HmmParams:
    a = rng.random((n, n)) + 0.05
    b = rng.random((n, m)) + 0.05
    pi = rng.random(n) + 0.05
    return op.HmmParams(
        transition=a / a.sum(axis=1, keepdims=True),
        emission=b / b.sum(axis=1, keepdims=True),
        initial=pi / pi.sum(),
    )


def path_sum_recursive(params: op.HmmParams, obs: list[int]) -> float:
    """Independent enumeration of all state paths, written as plain recursion."""
    n = params.n_states

    def extend(t: int, state: int) -> float:
        prob = params.emission[state, obs[t]]
        if t == len(obs) - 1:
            return prob
        return prob * sum(
            params.transition[state, j] * extend(t + 1, j) for j in range(n)
        )

    return sum(params.initial[i] * extend(0, i) for i in range(n))


# --- parameter construction -------------------------------------------------

def test_init_one_by_one_is_degenerate():
    p = op.init_params(1, 1, seed=123)
    assert p.transition.tolist() == [[1.0]]
    assert p.emission.tolist() == [[1.0]]
    assert p.initial.tolist() == [1.0]


def test_init_is_deterministic_per_seed():
    p1 = op.init_params(2, 27, seed=7)
    p2 = op.init_params(2, 27, seed=7)
    assert np.array_equal(p1.transition, p2.transition)
    assert np.array_equal(p1.emission, p2.emission)
    assert np.array_equal(p1.initial, p2.initial)
    p3 = op.init_params(2, 27, seed=8)
    assert not np.array_equal(p1.emission, p3.emission)


def test_init_rows_are_stochastic():
    p = op.init_params(3, 5, seed=1)
    assert np.allclose(p.transition.sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(p.emission.sum(axis=1), 1.0, atol=1e-12)
    assert abs(p.initial.sum() - 1.0) <= 1e-12


def test_init_rows_stay_near_uniform():
    p = op.init_params(4, 10, seed=5)
    assert np.all(p.emission > 0.5 / 10)
    assert np.all(p.emission < 1.5 / 10)


def test_init_rejects_zero_dimensions():
    with pytest.raises(DimensionError):
        op.init_params(0, 5, seed=1)
    with pytest.raises(DimensionError):
        op.init_params(2, 0, seed=1)


def test_params_validation_rejects_bad_rows():
    with pytest.raises(ValueError):
        op.HmmParams(transition=[[0.5, 0.4]], emission=[[1.0]], initial=[1.0])
    with pytest.raises(ValueError):
        op.HmmParams(transition=[[1.0]], emission=[[1.2, -0.2]], initial=[1.0])


# --- brute-force oracle -----------------------------------------------------

def test_brute_force_single_state_product():
    p = op.HmmParams(transition=[[1.0]], emission=[[0.5, 0.5]], initial=[1.0])
    assert op.brute_force_likelihood(p, [0, 0]) == pytest.approx(0.25, abs=1e-15)


def test_brute_force_deterministic_path():
    p = op.HmmParams(
        transition=[[1.0, 0.0], [0.0, 1.0]],
        emission=[[1.0, 0.0], [0.0, 1.0]],
        initial=[1.0, 0.0],
    )
    assert op.brute_force_likelihood(p, [0, 0, 0]) == pytest.approx(1.0, abs=0)


def test_brute_force_matches_independent_enumeration():
    rng = np.random.default_rng(42)
    for _ in range(10):
        p = random_params(rng, 2, 3)
        obs = rng.integers(0, 3, size=5).tolist()
        expected = path_sum_recursive(p, obs)
        assert op.brute_force_likelihood(p, obs) == pytest.approx(expected, rel=1e-12)


def test_brute_force_refuses_long_sequences():
    p = op.init_params(2, 2, seed=0)
    with pytest.raises(OracleSizeError):
        op.brute_force_likelihood(p, [0] * 13)


def test_brute_force_rejects_out_of_range_symbols():
    p = op.init_params(2, 3, seed=0)
    with pytest.raises(SymbolRangeError):
        op.brute_force_likelihood(p, [0, 3])


# --- scaled forward ---------------------------------------------------------

def test_forward_single_state():
    p = op.HmmParams(transition=[[1.0]], emission=[[0.5, 0.5]], initial=[1.0])
    assert op.forward_log_likelihood(p, [0, 0]) == pytest.approx(math.log(0.25), abs=1e-12)


def test_forward_probability_one_path():
    p = op.HmmParams(
        transition=[[1.0, 0.0], [0.0, 1.0]],
        emission=[[1.0, 0.0], [0.0, 1.0]],
        initial=[1.0, 0.0],
    )
    assert op.forward_log_likelihood(p, [0, 0, 0]) == 0.0


def test_forward_matches_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(40):
        n = int(rng.integers(1, 4))
        m = int(rng.integers(2, 6))
        t = int(rng.integers(1, 9))
        p = random_params(rng, n, m)
        obs = rng.integers(0, m, size=t)
        brute = op.brute_force_likelihood(p, obs)
        forward = op.forward_log_likelihood(p, obs)
        assert abs(forward - math.log(brute)) <= 1e-9


def test_forward_impossible_sequence_is_minus_inf():
    p = op.HmmParams(
        transition=[[1.0, 0.0], [0.0, 1.0]],
        emission=[[1.0, 0.0], [0.0, 1.0]],
        initial=[1.0, 0.0],
    )
    assert op.forward_log_likelihood(p, [1]) == float("-inf")


def test_forward_rejects_empty_sequence():
    p = op.init_params(2, 3, seed=0)
    with pytest.raises(EmptySequenceError):
        op.forward_log_likelihood(p, [])


def test_forward_rejects_out_of_range_symbols():
    p = op.init_params(2, 3, seed=0)
    with pytest.raises(SymbolRangeError):
        op.forward_log_likelihood(p, [-1])
    with pytest.raises(SymbolRangeError):
        op.forward_log_likelihood(p, [5])


def test_forward_long_sequence_is_finite():
    p = op.init_params(2, 27, seed=3)
    obs = np.random.default_rng(0).integers(0, 27, size=100_000)
    assert math.isfinite(op.forward_log_likelihood(p, obs))


def test_forward_accepts_observation_sequence_objects():
    p = op.init_params(2, 4, seed=1)
    seq = op.ObservationSequence(symbols=np.array([0, 1, 2, 3]))
    assert op.forward_log_likelihood(p, seq) == op.forward_log_likelihood(p, [0, 1, 2, 3])


# --- llpo ---------------------------------------------------------------

def test_llpo_single_symbol_equals_forward():
    p = op.init_params(2, 5, seed=2)
    assert op.llpo(p, [3]) == op.forward_log_likelihood(p, [3])


def test_llpo_iid_single_state():
    p = op.HmmParams(transition=[[1.0]], emission=[[0.5, 0.5]], initial=[1.0])
    assert op.llpo(p, [0, 0, 0, 0]) == pytest.approx(math.log(0.5), abs=1e-12)


def test_llpo_invariant_under_duplication_single_state():
    p = op.HmmParams(transition=[[1.0]], emission=[[0.3, 0.7]], initial=[1.0])
    obs = [0, 1, 1, 0, 1]
    assert op.llpo(p, obs + obs) == pytest.approx(op.llpo(p, obs), abs=1e-12)


# --- Baum-Welch -------------------------------------------------------------

def test_train_zero_iterations_is_identity():
    p = op.init_params(2, 3, seed=4)
    report = op.baum_welch_train(p, [np.array([0, 1, 2])], max_iters=0)
    assert report.final_params is p
    assert report.log_likelihood_history == []
    assert report.iterations_run == 0


def test_train_single_state_reaches_empirical_emission():
    p = op.init_params(1, 2, seed=9)
    report = op.baum_welch_train(p, [np.zeros(50, dtype=np.int32)], max_iters=10)
    assert report.final_params.emission[0, 0] >= 1 - 1e-6
    assert report.log_likelihood_history[-1] >= -1e-5


def test_train_history_is_monotone():
    rng = np.random.default_rng(21)
    p = op.init_params(2, 3, seed=21)
    obs = rng.integers(0, 3, size=40)
    report = op.baum_welch_train(p, [obs], max_iters=200)
    history = report.log_likelihood_history
    assert len(history) == 200
    assert all(history[i + 1] >= history[i] - 1e-9 for i in range(len(history) - 1))


def test_train_output_rows_are_stochastic():
    p = op.init_params(3, 4, seed=5)
    obs = np.random.default_rng(5).integers(0, 4, size=60)
    final = op.baum_welch_train(p, [obs], max_iters=50).final_params
    assert np.allclose(final.transition.sum(axis=1), 1.0, atol=1e-9)
    assert np.allclose(final.emission.sum(axis=1), 1.0, atol=1e-9)
    assert abs(final.initial.sum() - 1.0) <= 1e-9


def test_train_stochastic_after_every_iteration():
    p = op.init_params(2, 4, seed=6)
    obs = np.random.default_rng(6).integers(0, 4, size=50)
    seen = []

    def probe(iteration, params, ll):
        seen.append(iteration)
        assert np.allclose(params.transition.sum(axis=1), 1.0, atol=1e-9)
        assert np.allclose(params.emission.sum(axis=1), 1.0, atol=1e-9)
        assert abs(params.initial.sum() - 1.0) <= 1e-9

    op.baum_welch_train(p, [obs], max_iters=25, on_iteration=probe)
    assert seen == list(range(25))


def test_train_multi_sequence_pools_counts():
    rng = np.random.default_rng(13)
    p = op.init_params(2, 3, seed=13)
    seqs = [rng.integers(0, 3, size=30) for _ in range(4)]
    report = op.baum_welch_train(p, seqs, max_iters=80)
    history = report.log_likelihood_history
    assert all(history[i + 1] >= history[i] - 1e-9 for i in range(len(history) - 1))


def test_train_is_bit_deterministic():
    obs = np.random.default_rng(2).integers(0, 5, size=70)
    r1 = op.baum_welch_train(op.init_params(2, 5, seed=11), [obs], max_iters=30)
    r2 = op.baum_welch_train(op.init_params(2, 5, seed=11), [obs], max_iters=30)
    assert r1.log_likelihood_history == r2.log_likelihood_history
    assert np.array_equal(r1.final_params.transition, r2.final_params.transition)
    assert np.array_equal(r1.final_params.emission, r2.final_params.emission)
    assert np.array_equal(r1.final_params.initial, r2.final_params.initial)


def test_train_tol_stops_early():
    obs = np.zeros(30, dtype=np.int32)
    report = op.baum_welch_train(op.init_params(1, 2, seed=3), [obs],
                                 max_iters=200, tol=1e-12)
    assert report.iterations_run < 200
    assert report.iterations_run == len(report.log_likelihood_history)


def test_train_rejects_empty_corpus_and_sequences():
    p = op.init_params(2, 3, seed=1)
    with pytest.raises(EmptyCorpusError):
        op.baum_welch_train(p, [], max_iters=5)
    with pytest.raises(EmptySequenceError):
        op.baum_welch_train(p, [np.array([], dtype=np.int32)], max_iters=5)


def test_emission_floor_keeps_unseen_symbols_scoreable():
    p = op.init_params(1, 3, seed=8)
    report = op.baum_welch_train(p, [np.zeros(40, dtype=np.int32)], max_iters=30)
    assert math.isfinite(op.forward_log_likelihood(report.final_params, [1]))
    assert np.all(report.final_params.emission >= 1e-10 * (1 - 1e-6))
