import itertools

import numpy as np
import pytest

from freebound import GridDensity
from freebound.covering import (ball_partition, besicovitch_balls, besicovitch_cubes,
                                box_distance, family_bound, partition_of_unity)
from freebound.density import local_radii
from freebound.errors import EpsilonOutOfRange, MassTooSmall


def test_uniform_1d_cubes():
    rho0 = 1.0
    g = GridDensity.uniform(rho0, 0.0, 4.0, 240)
    cov = besicovitch_cubes(g)
    # interior cubes have the uniform side 1/(15 rho0); ones near the edges are longer
    interior = np.abs(cov.centers[:, 0] - 2.0) < 1.5
    assert np.allclose(cov.sides[interior], 1 / (15 * rho0), rtol=1e-6)
    assert cov.family_count <= 15
    eta = cov.multiplicity[g.support]
    assert eta.min() >= 1 and eta.max() <= 2


def test_single_cell_mass_two():
    vals = np.zeros(10)
    vals[4] = 2.0 / 0.1
    g = GridDensity.uniform(1.0, 0.0, 1.0, 10).with_values(vals)
    cov = besicovitch_cubes(g)
    assert cov.family_count == 1
    assert cov.multiplicity[4] == 1


def test_mass_too_small():
    with pytest.raises(MassTooSmall):
        besicovitch_cubes(GridDensity.uniform(0.125, 0.0, 4.0, 8))


def test_partition_of_unity(rng):
    g = GridDensity.from_function(lambda p: 0.5 + 0.4 * np.sin(3 * p[:, 0]) * np.cos(p[:, 1]),
                                  [0, 0], [3, 3], [15, 15])
    cov = besicovitch_cubes(g)
    chi = partition_of_unity(cov, g)
    s = chi.sum(axis=0)[g.support]
    assert np.max(np.abs(s - 1)) <= 1e-12
    eta = cov.multiplicity
    for c in g.support[:50]:
        col = chi[:, c]
        assert np.allclose(col[col > 0], 1 / eta[c])


def test_family_separation_and_bound():
    g = GridDensity.from_function(lambda p: 1 + np.exp(-4 * (p[:, 0] - 1) ** 2), [0.0], [3.0], [120])
    cov = besicovitch_cubes(g)
    assert cov.family_count <= family_bound(1)
    for a, b in itertools.combinations(range(len(cov.sides)), 2):
        if cov.families[a] == cov.families[b]:
            gap = max(abs(cov.centers[a, 0] - cov.centers[b, 0])
                      - (cov.sides[a] + cov.sides[b]) / 2, 0.0)
            assert gap >= 0.5 * min(cov.sides[a], cov.sides[b])
    assert box_distance([0.0], 1.0, [3.0], 1.0) == pytest.approx(2.0)


def test_balls_uniform_1d():
    g = GridDensity.uniform(0.5, 0.0, 8.0, 160)
    cov = besicovitch_balls(g, 0.05)
    R = local_radii(g, cov.centers)
    for a, b in itertools.combinations(range(len(R)), 2):
        assert abs(cov.centers[a, 0] - cov.centers[b, 0]) >= 0.05 * max(R[a], R[b]) * (1 - 1e-12)
    assert cov.multiplicity[g.support].min() >= 1
    assert cov.multiplicity_bound >= cov.multiplicity[g.support].max()
    chi = ball_partition(cov)
    assert np.allclose(chi.sum(axis=0)[g.support], 1.0)


def test_balls_two_bumps():
    g = GridDensity.from_function(
        lambda p: np.exp(-((p[:, 0] - 1) / 0.3) ** 2) + np.exp(-((p[:, 0] - 9) / 0.3) ** 2),
        [0.0], [10.0], [200])
    cov = besicovitch_balls(g, 0.05)
    xs = cov.centers[:, 0]
    assert np.any(np.abs(xs - 1) < 1.5) and np.any(np.abs(xs - 9) < 1.5)


def test_epsilon_out_of_range():
    with pytest.raises(EpsilonOutOfRange):
        besicovitch_balls(GridDensity.uniform(0.5, 0.0, 8.0, 16), 0.2)
