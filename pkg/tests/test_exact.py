import math

import numpy as np
import pytest

from oracles import lindley_cost_exponential
from rasched.errors import DomainError, EvaluationError
from rasched.exact import (
    appointment_terms, build_sojourn_chain, evaluate_exact, tour_laws,
)
from rasched.instance import Instance, generate_instance, instance_from_requirements
from rasched.phasetype import FitConfig, moments


def exp_chain(means, w_idle=1.0, w_wait=1.0, w_travel=0.0):
    return instance_from_requirements(means, [1.0] * len(means), w_idle, w_wait, w_travel)


def test_single_exponential():
    ev = evaluate_exact(exp_chain([1.0]), (1,), [1.0])
    assert ev.per_client_idle[0] == pytest.approx(math.exp(-1), rel=1e-13)
    assert ev.per_client_wait[0] == pytest.approx(math.exp(-1), rel=1e-13)


@pytest.mark.parametrize("scv", [0.3, 1.0, 2.2])
def test_zero_slot_waits_for_whole_requirement(scv):
    inst = instance_from_requirements([2.5], [scv], 1.0, 1.0)
    ev = evaluate_exact(inst, (1,), [0.0])
    assert ev.per_client_idle[0] == pytest.approx(0.0, abs=1e-14)
    assert ev.per_client_wait[0] == pytest.approx(2.5, rel=1e-12)


def test_chain_base_case_is_the_fitted_law():
    inst = generate_instance(1, "low", 1.0, seed=3)
    chain = build_sojourn_chain(inst, (1,), [40.0])
    law = inst.requirement_law(0, 1)
    assert np.array_equal(chain.alphas[0], law.alpha)
    assert np.array_equal(chain.rates_at(0), law.rates)


def test_chain_initial_vectors_two_exponentials():
    inst = exp_chain([1.0, 1.0])
    chain = build_sojourn_chain(inst, (1, 2), [0.0, 1.0])
    # exponential fits are E_2(mu, 1): all mass on the second phase
    assert chain.alphas[1] == pytest.approx([0.0, 1.0, 0.0, 0.0], abs=1e-15)
    chain = build_sojourn_chain(inst, (1, 2), [1.0, 1.0])
    assert chain.alphas[1] == pytest.approx([0.0, math.exp(-1), 0.0, 1 - math.exp(-1)], abs=1e-14)


def test_chain_structure():
    inst = generate_instance(5, "high", 1.0, seed=8)
    tour = (2, 5, 1, 4, 3)
    chain = build_sojourn_chain(inst, tour, np.full(5, 45.0))
    assert all(a < b for a, b in zip(chain.dims, chain.dims[1:]))
    for j in range(1, 5):
        prev, cur = chain.rates_at(j - 1), chain.rates_at(j)
        assert np.array_equal(cur[:prev.shape[0], :prev.shape[0]], prev)
        assert not np.any(np.tril(cur, -1))
        assert np.all(np.diag(cur) < 0)
        assert chain.alphas[j].sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("seed", range(3))
def test_matches_quadrature_oracle(n, seed):
    rng = np.random.default_rng(seed * 10 + n)
    means = rng.uniform(0.5, 2.0, n)
    x = rng.uniform(0.2, 2.5, n)
    tour = tuple(range(1, n + 1))
    ev = evaluate_exact(exp_chain(means), tour, x)
    for k in range(n):
        one = np.eye(n)[k]
        assert ev.per_client_idle[k] == pytest.approx(
            lindley_cost_exponential(1 / means, x, one, 0 * one), abs=1e-6)
        assert ev.per_client_wait[k] == pytest.approx(
            lindley_cost_exponential(1 / means, x, 0 * one, one), abs=1e-6)


def test_matches_quadrature_oracle_four_clients():
    rng = np.random.default_rng(4)
    means = rng.uniform(0.5, 2.0, 4)
    x = rng.uniform(0.3, 2.5, 4)
    ci, cw = rng.uniform(0, 2, 4), rng.uniform(0, 2, 4)
    ev = evaluate_exact(exp_chain(means), (1, 2, 3, 4), x)
    value = ci @ ev.per_client_idle + cw @ ev.per_client_wait
    assert value == pytest.approx(lindley_cost_exponential(1 / means, x, ci, cw), abs=1e-6)


def test_objective_decomposition_and_return_leg():
    inst = generate_instance(4, "low", 1.5, seed=2)
    tour = (3, 1, 4, 2)
    ev = evaluate_exact(inst, tour, [40, 50, 45, 60])
    t = inst.travel_mean
    travel = t[0, 3] + t[3, 1] + t[1, 4] + t[4, 2] + t[2, 0]
    assert ev.travel_component == pytest.approx(1.5 * travel, rel=1e-14)
    expected = (1.5 * travel + 2.5 * ev.per_client_idle.sum()
                + inst.weight_wait[list(tour)] @ ev.per_client_wait)
    assert ev.objective == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_wait_minus_idle_identity(seed):
    rng = np.random.default_rng(seed)
    inst = generate_instance(5, "high" if seed % 2 else "low", 1.0, seed)
    tour = tuple(int(c) + 1 for c in rng.permutation(5))
    x = rng.uniform(20, 80, 5)
    ev = evaluate_exact(inst, tour, x)
    means = [moments(law).mean for law in tour_laws(inst, tour)]
    prev_wait = 0.0
    for j in range(5):
        lhs = ev.per_client_wait[j] - ev.per_client_idle[j]
        assert lhs == pytest.approx(prev_wait + means[j] - x[j], abs=1e-8)
        prev_wait = ev.per_client_wait[j]


@pytest.mark.parametrize("seed", range(5))
def test_monotone_in_single_slot(seed):
    rng = np.random.default_rng(100 + seed)
    inst = generate_instance(4, "high", 1.0, seed)
    tour = (1, 2, 3, 4)
    x = rng.uniform(20, 80, 4)
    base = evaluate_exact(inst, tour, x)
    for j in range(4):
        bumped = evaluate_exact(inst, tour, x + 5.0 * np.eye(4)[j])
        assert bumped.per_client_idle[j] >= base.per_client_idle[j] - 1e-12
        assert bumped.per_client_wait[j] <= base.per_client_wait[j] + 1e-12


@pytest.mark.parametrize("seed", range(10))
def test_midpoint_convexity(seed):
    rng = np.random.default_rng(200 + seed)
    inst = generate_instance(5, "low" if seed < 5 else "high", 1.0, seed)
    tour = tuple(int(c) + 1 for c in rng.permutation(5))
    a, b = rng.uniform(0, 100, 5), rng.uniform(0, 100, 5)
    fa, fb = (evaluate_exact(inst, tour, v).objective for v in (a, b))
    fm = evaluate_exact(inst, tour, (a + b) / 2).objective
    assert fm <= (fa + fb) / 2 + 1e-9 * abs(fa + fb)


@pytest.mark.parametrize("seed", range(4))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    inst = generate_instance(5, "high", 1.0, seed)
    tour = tuple(int(c) + 1 for c in rng.permutation(5))
    laws = tour_laws(inst, tour)
    ww = inst.weight_wait[list(tour)]
    x = rng.uniform(30, 70, 5)

    def f(v):
        idle, wait, _ = appointment_terms(laws, v)
        return 2.5 * idle.sum() + ww @ wait

    _, _, g = appointment_terms(laws, x, 2.5, ww, grad=True)
    for j in range(5):
        h = 1e-5 * (1 + x[j])
        e = np.eye(5)[j] * h
        assert g[j] == pytest.approx((f(x + e) - f(x - e)) / (2 * h), abs=1e-6)


def test_deterministic_requirements():
    inst = Instance(np.zeros((3, 2)), [[0, 10, 20], [10, 0, 5], [20, 5, 0]], np.zeros((3, 3)),
                    [0, 30, 40], [0, 0, 0], 1.0, 2.0, [0, 3, 4], explicit_travel=True)
    ev = evaluate_exact(inst, (1, 2), [10, 35])
    assert np.array_equal(ev.per_client_idle, [0, 0]) and np.array_equal(ev.per_client_wait, [0, 0])
    ev = evaluate_exact(inst, (1, 2), [12, 30])
    assert ev.per_client_idle.tolist() == [2.0, 0.0]
    assert ev.per_client_wait.tolist() == [0.0, 5.0]


def test_mixed_deterministic_and_random_is_rejected():
    inst = Instance(np.zeros((3, 2)), [[0, 10, 20], [10, 0, 5], [20, 5, 0]],
                    [[0, 0.2, 0], [0.2, 0, 0], [0, 0, 0]],
                    [0, 30, 40], [0, 0, 0], 1.0, 2.0, [0, 3, 4], explicit_travel=True)
    with pytest.raises(EvaluationError):
        evaluate_exact(inst, (1, 2), [10, 35])


def test_chain_dimension_cap_names_position():
    inst = generate_instance(4, "low", 1.0, seed=1)
    with pytest.raises(EvaluationError, match="position"):
        evaluate_exact(inst, (1, 2, 3, 4), [40] * 4, FitConfig(max_chain_dim=8))


def test_schedule_errors():
    inst = generate_instance(2, "low", 1.0, seed=1)
    with pytest.raises(DomainError):
        evaluate_exact(inst, (1, 2), [1.0, -1.0])
    with pytest.raises(DomainError):
        evaluate_exact(inst, (1, 2), [1.0])
