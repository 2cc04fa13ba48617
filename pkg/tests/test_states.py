import itertools
import math

import numpy as np
import pytest
from scipy.stats import poisson

from freebound import GridDensity, mass, power_law
from freebound.density import entropy_integral
from freebound.errors import SupportOverlap, TruncationTooSevere
from freebound.potential import evaluate
from freebound.states import (Mixture, SparseJoint, block_approximation, density_of, entropy,
                              free_energy, geometric_localization, interaction_energy,
                              poisson_state, product_state, state_from_json, state_to_json,
                              to_sparse)


def grid(n=8, length=2.0):
    return GridDensity.uniform(1.0, 0.0, length, n)


def test_density_of_product_and_poisson():
    rho = GridDensity.from_function(lambda p: 1 + p[:, 0], [0.0], [1.0], [6]).scaled(2 / 1.5)
    assert np.allclose(density_of(product_state(rho, 2)).values, rho.values, atol=1e-14)
    P = poisson_state(rho, 25)
    assert np.allclose(density_of(P).values, rho.values, atol=1e-9)


def test_entropy_examples():
    g = grid(4, 2.0)
    one = Mixture(g, [1.0], [np.full((1, 4), 0.25)])
    assert entropy(one) == pytest.approx(math.log(2.0))
    # two particles in two distinct cells of volume v: -log(P * 1 / v^2) with P = 1
    v = g.cell_volume
    S = SparseJoint(g, [[0, 2]], [1.0])
    assert entropy(S) == pytest.approx(2 * math.log(v))
    P = poisson_state(GridDensity.uniform(1.0, 0.0, 1.0, 8), 25)
    assert entropy(P) == pytest.approx(1.0, abs=1e-8)


def test_poisson_weights_and_truncation():
    rho = GridDensity.uniform(1.0, 0.0, 2.0, 4)
    P = poisson_state(rho, 20)
    for n, w, _ in P.sectors[:6]:
        assert w == pytest.approx(poisson.pmf(n, 2.0), rel=1e-8)
    assert P.truncation < 1e-9
    with pytest.raises(TruncationTooSevere):
        poisson_state(rho, 3)


def test_interaction_energy_examples():
    g = grid(8, 4.0)
    w = power_law(1.0, 1.0, 2.0, 3.0)
    S = SparseJoint(g, [[1, 5]], [1.0])
    r = abs(g.centers()[1, 0] - g.centers()[5, 0])
    assert interaction_energy(S, w) == pytest.approx(float(evaluate(w, r)))
    zero = power_law(1.0, 1.0, 2.0, 3.0)
    assert interaction_energy(SparseJoint(g, [[2]], [1.0]), zero) == 0.0


def test_poisson_energy_is_half_double_sum():
    rho = GridDensity.from_function(lambda p: 1 + 0.5 * np.cos(p[:, 0]), [0.0], [3.0], [6])
    w = power_law(1.0, 1.0, 0.5, 3.0)
    from freebound.states import cell_self_energy
    m = rho.masses
    x = rho.centers()[:, 0]
    W = evaluate(w, np.abs(x[:, None] - x[None, :]) + np.eye(6))
    np.fill_diagonal(W, cell_self_energy(w, rho.spacing))
    expect = 0.5 * m @ W @ m
    assert interaction_energy(poisson_state(rho, 30), w) == pytest.approx(expect, rel=1e-7)


def test_free_energy_examples(rng):
    w = power_law(1.0, 1.0, 2.0, 3.0)
    g = grid(8, 4.0)
    S = SparseJoint(g, [[0, 4], [1, 6]], [0.3, 0.7])
    assert free_energy(S, w, 0.0) == pytest.approx(interaction_energy(S, w))
    rho = GridDensity.from_function(lambda p: 1 + p[:, 0], [0.0], [1.0], [5]).scaled(1 / 1.5)
    P1 = product_state(rho, 1)
    assert free_energy(P1, w, 0.7) == pytest.approx(0.7 * entropy_integral(rho))
    for _ in range(10):
        t = rng.integers(0, 8, (6, 3))
        P = SparseJoint.from_ordered(g, t, rng.dirichlet(np.ones(6)))
        F = free_energy(P, w, 1.0)
        N = 3
        assert F >= -(w.kappa + 1.0) * N + entropy_integral(density_of(P)) - 1e-9


def test_block_approximation_fixed_point_and_density(rng):
    g = grid(12, 3.0)
    chi = np.zeros((3, 12))
    for b in range(3):
        chi[b, 4 * b:4 * b + 4] = 1.0
    q = np.zeros((2, 12))
    q[0, 0:4] = rng.dirichlet(np.ones(4))
    q[1, 8:12] = rng.dirichlet(np.ones(4))
    P = Mixture(g, [1.0], [q])
    rho = density_of(P)
    Pt = block_approximation(P, chi, rho)
    assert entropy(Pt) == pytest.approx(entropy(P), abs=1e-12)
    a, b = to_sparse(P), to_sparse(Pt)
    assert np.array_equal(a.tuples, b.tuples) and np.allclose(a.probs, b.probs)
    S = SparseJoint.from_ordered(g, rng.integers(0, 12, (10, 2)), rng.dirichlet(np.ones(10)))
    chi[0, 3], chi[1, 3] = 0.5, 0.5
    rho = density_of(S)
    assert np.allclose(density_of(block_approximation(S, chi, rho)).values, rho.values,
                       atol=1e-12)


def test_geometric_localization_examples():
    g = grid(8, 2.0)
    q = np.zeros((2, 8))
    q[0, :4] = 0.25
    q[1, 4:] = 0.25
    P = Mixture(g, [1.0], [q])
    same = geometric_localization(P, 1.0)
    assert entropy(same) == pytest.approx(entropy(P), abs=1e-12)
    assert entropy(geometric_localization(P, 0.0)) == 0.0
    theta = np.r_[np.full(4, 0.5), np.ones(4)]
    # sectors: {site 2} w.p. 1/2 and {1,2} w.p. 1/2, each uniform on its cells
    v = g.cell_volume
    s1 = -0.5 * math.log(0.5 * 0.25 / v)
    s2 = -0.5 * math.log(0.5 * 0.25 * 0.25 / v ** 2)
    assert entropy(geometric_localization(P, theta)) == pytest.approx(s1 + s2, abs=1e-12)
    q2 = q.copy()
    q2[1] = 0.125
    with pytest.raises(SupportOverlap):
        geometric_localization(Mixture(g, [1.0], [q2]), 0.5)


def test_localization_subadditivity():
    g = grid(6, 3.0)
    q = np.zeros((2, 6))
    q[0, :3] = [0.2, 0.3, 0.5]
    q[1, 3:] = [0.6, 0.3, 0.1]
    P = Mixture(g, [1.0], [q])
    theta = np.array([0.3, 0.6, 0.9, 0.2, 0.5, 0.8])
    lhs = entropy(P)
    rhs = entropy(geometric_localization(P, theta)) + entropy(geometric_localization(P, 1 - theta))
    assert lhs <= rhs + 1e-12


def test_sparse_symmetrization_idempotent(rng):
    g = grid(5)
    t = rng.integers(0, 5, (12, 3))
    S = SparseJoint.from_ordered(g, t, rng.dirichlet(np.ones(12)))
    T = SparseJoint.from_ordered(g, S.tuples, S.probs)
    assert np.array_equal(S.tuples, T.tuples) and np.allclose(S.probs, T.probs)
    for perm in itertools.permutations(range(3)):
        U = SparseJoint.from_ordered(g, S.tuples[:, perm], S.probs)
        assert np.allclose(U.probs, S.probs)


def test_state_json_roundtrip():
    rho = GridDensity.uniform(0.5, 0.0, 4.0, 8)
    P = poisson_state(rho, 20)
    Q = state_from_json(state_to_json(P), P.grid)
    assert entropy(Q) == pytest.approx(entropy(P), abs=1e-12)
    assert mass(density_of(Q)) == pytest.approx(2.0, abs=1e-9)
