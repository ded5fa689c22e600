import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import markowitz_energy, quadratic_form, two_pass_moments
from pfqubo.instances import (
    PortfolioInstance,
    QuboMatrix,
    Selection,
    betting_moments,
    build_objective_qubo,
    build_penalized_qubo,
    equity_moments,
    qubo_energies,
    qubo_energy,
    to_upper_triangular,
)
from pfqubo.sparsify import edge_count


def random_instance(rng, n, a=4.0, k=None, lam=None):
    f = rng.normal(size=(n + 5, n))
    sigma = f.T @ f / (n + 5)
    return PortfolioInstance(
        rng.normal(size=n), sigma, lam or float(rng.uniform(0.1, 3)), a, k or int(rng.integers(1, n + 1))
    )


class Slate:
    def __init__(self, odds, probs, match_index):
        self.odds, self.probs, self.match_index = odds, probs, match_index


# --------------------------------------------------------------------------- Selection


def test_selection_support_and_weight():
    s = Selection(np.array([0, 1, 1, 0, 1]))
    assert s.support == (1, 2, 4)
    assert s.weight == 3
    assert s.n == 5


def test_selection_from_support_round_trip():
    s = Selection.from_support([3, 0], 5)
    assert s.support == (0, 3)
    assert list(s.bits) == [1, 0, 0, 1, 0]


def test_selection_is_immutable():
    s = Selection(np.array([1, 0]))
    with pytest.raises(ValueError):
        s.bits[0] = 0


def test_selection_equality_and_flip():
    a = Selection.from_support([1], 3)
    assert a.flipped(1) == Selection(np.zeros(3, dtype=np.int8))
    assert hash(a) == hash(Selection.from_support([1], 3))
    assert a != Selection.from_support([1], 4)


def test_selection_rejects_non_binary():
    with pytest.raises(ValueError):
        Selection(np.array([0, 2]))


# --------------------------------------------------------------------------- PortfolioInstance


def test_instance_validation():
    mu, sig = np.zeros(2), np.eye(2)
    with pytest.raises(ValueError):
        PortfolioInstance(mu, sig, 0.0, 1.0, 1)
    with pytest.raises(ValueError):
        PortfolioInstance(mu, sig, 1.0, -1.0, 1)
    with pytest.raises(ValueError):
        PortfolioInstance(mu, sig, 1.0, 1.0, 3)
    with pytest.raises(ValueError):
        PortfolioInstance(mu, sig, 1.0, 1.0, 0)
    with pytest.raises(ValueError):
        PortfolioInstance(mu, np.array([[1.0, 0.5], [0.0, 1.0]]), 1.0, 1.0, 1)
    with pytest.raises(ValueError):
        PortfolioInstance(mu, -np.eye(2), 1.0, 1.0, 1)
    with pytest.raises(ValueError):
        PortfolioInstance(np.zeros(3), sig, 1.0, 1.0, 1)
    with pytest.raises(ValueError):
        PortfolioInstance(mu, sig, 1.0, 1.0, 1, labels=("a",))


def test_instance_symmetrizes_ulp_asymmetry():
    s = np.array([[1.0, 0.3], [0.3 * (1 + 1e-15), 1.0]])
    inst = PortfolioInstance(np.zeros(2), s, 1.0, 1.0, 1)
    assert inst.sigma[0, 1] == inst.sigma[1, 0]


# --------------------------------------------------------------------------- builders


def test_penalty_only_two_variable_example():
    inst = PortfolioInstance(np.zeros(2), np.zeros((2, 2)), 1.0, 1.0, 1)
    q = build_penalized_qubo(inst)
    assert np.array_equal(q.q, np.array([[-1.0, 1.0], [1.0, -1.0]]))
    assert q.offset == 1.0
    assert qubo_energy(q, np.array([1, 0])) == 0.0
    assert qubo_energy(q, np.array([1, 1])) == 1.0


def test_penalized_off_diagonal_formula(rng):
    inst = random_instance(rng, 7)
    q = build_penalized_qubo(inst)
    iu = np.triu_indices(7, 1)
    assert np.allclose(q.q[iu], inst.lam * inst.sigma[iu] + inst.penalty_a, rtol=0, atol=1e-14)
    assert q.offset == inst.penalty_a * inst.k**2


def test_penalized_requires_positive_a(rng):
    with pytest.raises(ValueError):
        build_penalized_qubo(random_instance(rng, 4, a=0.0))


def test_objective_zero_covariance_is_diagonal():
    mu = np.array([0.1, -0.2, 0.3])
    q = build_objective_qubo(PortfolioInstance(mu, np.zeros((3, 3)), 1.0, 0.0, 1))
    assert np.array_equal(q.q, np.diag(-mu))
    assert q.offset == 0.0


def test_objective_pattern_matches_sigma():
    s = np.diag([1.0, 2.0, 3.0])
    s[0, 2] = s[2, 0] = 0.5
    q = build_objective_qubo(PortfolioInstance(np.zeros(3), s, 2.0, 0.0, 1))
    assert edge_count(q) == 1


def test_energy_identity_thousand_draws(rng):
    for _ in range(200):
        n = int(rng.integers(1, 9))
        inst = random_instance(rng, n)
        pen, obj = build_penalized_qubo(inst), build_objective_qubo(inst)
        for _ in range(5):
            x = rng.integers(0, 2, n)
            want = markowitz_energy(inst.mu, inst.sigma, inst.lam, inst.penalty_a, inst.k, x)
            assert math.isclose(qubo_energy(pen, x), want, rel_tol=1e-9, abs_tol=1e-9)
            want0 = markowitz_energy(inst.mu, inst.sigma, inst.lam, 0.0, inst.k, x)
            assert math.isclose(qubo_energy(obj, x), want0, rel_tol=1e-9, abs_tol=1e-9)


@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_energy_identity_property(n, seed):
    r = np.random.default_rng(seed)
    inst = random_instance(r, n)
    x = r.integers(0, 2, n)
    assert math.isclose(
        qubo_energy(build_penalized_qubo(inst), x),
        inst.penalized_objective(x),
        rel_tol=1e-9,
        abs_tol=1e-9,
    )
    assert math.isclose(
        qubo_energy(to_upper_triangular(build_objective_qubo(inst)), x),
        markowitz_energy(inst.mu, inst.sigma, inst.lam, 0.0, inst.k, x),
        rel_tol=1e-9,
        abs_tol=1e-9,
    )


@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_complete_graph_property(n, seed):
    inst = random_instance(np.random.default_rng(seed), n)
    assert edge_count(build_penalized_qubo(inst)) == n * (n - 1) // 2


# --------------------------------------------------------------------------- conventions


def test_upper_triangular_doubles_off_diagonal():
    q = QuboMatrix(np.array([[1.0, 0.5], [0.5, 2.0]]), 3.0)
    u = to_upper_triangular(q)
    assert u.q[0, 1] == 1.0 and u.q[1, 0] == 0.0
    assert u.q[0, 0] == 1.0 and u.q[1, 1] == 2.0 and u.offset == 3.0
    assert u.convention == "upper_triangular"


def test_upper_triangular_diagonal_unchanged():
    q = QuboMatrix(np.diag([1.0, -2.0, 3.0]))
    assert np.array_equal(to_upper_triangular(q).q, q.q)


def test_upper_triangular_rejects_upper_input():
    u = to_upper_triangular(QuboMatrix(np.eye(2)))
    with pytest.raises(ValueError):
        to_upper_triangular(u)


def test_conventions_agree_on_random_model(rng):
    a = rng.normal(size=(10, 10))
    q = QuboMatrix((a + a.T) / 2, 0.7)
    u = to_upper_triangular(q)
    xs = rng.integers(0, 2, (100, 10))
    for x in xs:
        assert abs(qubo_energy(q, x) - qubo_energy(u, x)) <= 1e-12 * max(1.0, abs(qubo_energy(q, x)))
        assert math.isclose(qubo_energy(q, x), quadratic_form(q.q, x, 0.7), rel_tol=1e-12, abs_tol=1e-12)
    assert np.allclose(qubo_energies(q, xs), qubo_energies(u, xs), rtol=1e-12, atol=1e-12)


def test_qubo_matrix_validation():
    with pytest.raises(ValueError):
        QuboMatrix(np.array([[1.0, 2.0], [1.0, 1.0]]))
    with pytest.raises(ValueError):
        QuboMatrix(np.array([[1.0, 0.0], [1.0, 1.0]]), convention="upper_triangular")
    with pytest.raises(ValueError):
        qubo_energy(QuboMatrix(np.eye(2)), np.array([1, 0, 1]))


def test_energy_of_zeros_is_offset():
    assert qubo_energy(QuboMatrix(np.eye(3), -2.5), np.zeros(3)) == -2.5


# --------------------------------------------------------------------------- moments


def test_betting_moments_examples():
    mu, s = betting_moments(Slate([2.0, 4.0, 4.0], [0.5, 0.25, 0.25], [0, 0, 0]))
    assert mu[0] == 0.0 and s[0, 0] == 1.0
    odds = [2.0, 3.0, 5.0, 2.0, 3.5, 4.0]
    probs = [0.4, 0.3, 0.3, 0.5, 0.25, 0.25]
    mu, s = betting_moments(Slate(odds, probs, [0, 0, 0, 1, 1, 1]))
    assert s[0, 1] == pytest.approx(-0.72, abs=1e-15)
    assert s[0, 3] == 0.0 and s[2, 5] == 0.0


def test_betting_moments_match_outcome_enumeration():
    # covariance of the payoff vector enumerated over the three outcomes of each match
    d = np.array([1.9, 3.6, 4.2, 2.5, 3.1, 2.9])
    p = np.array([0.5, 0.27, 0.23, 0.38, 0.3, 0.32])
    idx = np.array([0, 0, 0, 1, 1, 1])
    mu, s = betting_moments(Slate(d, p, idx))
    for i in range(6):
        for j in range(6):
            if idx[i] != idx[j]:
                want = 0.0
            else:
                m = idx[i]
                e_ij = sum(p[3 * m + o] * (d[i] * (i == 3 * m + o) - 1) * (d[j] * (j == 3 * m + o) - 1) for o in range(3))
                want = e_ij - mu[i] * mu[j]
            assert s[i, j] == pytest.approx(want, abs=1e-12)
    assert np.allclose(mu, d * p - 1)


def test_betting_moments_validation():
    with pytest.raises(ValueError):
        betting_moments(Slate([2.0, 3.0], [0.5, 0.5], [0, 0]))
    with pytest.raises(ValueError):
        betting_moments(Slate([1.0, 3.0, 3.0], [0.4, 0.3, 0.3], [0, 0, 0]))
    with pytest.raises(ValueError):
        betting_moments(Slate([2.0, 3.0, 3.0], [0.4, 0.3, 0.2], [0, 0, 0]))


def test_betting_sigma_has_one_block_per_match(rng):
    m = 5
    p = rng.dirichlet([2, 2, 2], size=m).ravel()
    d = 1.0 / p * 0.95 + 0.01
    inst = PortfolioInstance(*betting_moments(Slate(d, p, np.repeat(np.arange(m), 3))), 1.0, 0.0, 2)
    nz = np.abs(inst.sigma) > 0
    # components by closure over the sparsity graph
    seen, comps = set(), 0
    for s0 in range(3 * m):
        if s0 in seen:
            continue
        comps += 1
        stack = [s0]
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            stack.extend(np.flatnonzero(nz[v]).tolist())
    assert comps == m


def test_equity_moments_two_pass_oracle(rng):
    r = rng.normal(0.0005, 0.01, (252, 5))
    mu, s = equity_moments(r)
    m2, s2 = two_pass_moments(r.tolist())
    assert np.allclose(mu, m2, rtol=0, atol=1e-12)
    assert np.allclose(s, s2, rtol=0, atol=1e-12)


def test_equity_moments_edge_cases():
    r = np.array([[0.01, 0.02], [0.01, -0.01], [0.01, 0.03]])
    _, s = equity_moments(r)
    assert s[0, 0] == 0.0
    twin = np.column_stack([r[:, 1], r[:, 1]])
    _, s = equity_moments(twin)
    assert s[0, 1] == pytest.approx(s[0, 0], abs=1e-18)
    with pytest.raises(ValueError):
        equity_moments(r[:1])
    with pytest.raises(ValueError):
        equity_moments(np.array([[0.1, np.nan], [0.2, 0.1]]))
