import math

import numpy as np
import pytest

from freebound import GridDensity, hard_core, mass, power_law
from freebound import bounds as B
from freebound.density import entropy_integral, unit_ball_volume
from freebound.errors import IntegerMass, NotApplicable, NotRepresentable
from freebound.oracle import exact_canonical, exact_grand_canonical
from freebound.potential import PotentialSpec


def zero_potential():
    return PotentialSpec("tabulated", kappa=1.0, r0=1.0, alpha=0.5, s=3.0,
                         table=[[0.0, 0.0], [10.0, 0.0]])


def test_lower_bound_examples():
    w = power_law(1.0, 1.0, 2.0, 3.0)
    assert B.lower_bound(GridDensity.uniform(0.75, 0.0, 4.0, 8), w, 0.0).value == pytest.approx(-3)
    # kappa -> 0: only the entropy part remains, -2 for rho = 1 of mass 2
    rep = B.lower_bound(GridDensity.uniform(1.0, 0.0, 2.0, 8), w, 1.0)
    assert rep.terms["entropyTerm"] == pytest.approx(-2.0)


def test_mean_field_examples():
    rho = GridDensity.from_function(lambda p: 1 + p[:, 0], [0.0], [1.0], [8]).scaled(1 / 1.5)
    w = power_law(1.0, 1.0, 0.5, 3.0)
    assert B.mean_field_upper(rho, w, 0.8).value == pytest.approx(0.8 * entropy_integral(rho),
                                                                 abs=1e-12)
    rho2 = GridDensity.uniform(0.5, 0.0, 4.0, 8)
    assert B.mean_field_upper(rho2, zero_potential(), 0.0).value == 0.0
    with pytest.raises(NotApplicable):
        B.mean_field_upper(rho2, power_law(1, 1, 2, 3), 1.0)


def test_gc_strong_coefficients():
    rho = GridDensity.uniform(0.5, 0.0, 4.0, 16)
    rep = B.gc_strong_upper(rho, power_law(1.0, 1.0, 2.0, 3.0), 0.0)
    # tail: kappa s |S^0| 3 (4 + 1) / (2 d (s - d)) = 3 * 2 * 15 / 4
    assert rep.constants["tailCoefficient"] == pytest.approx(22.5)
    # core: kappa r0^a d^2 3^(d + 2a) 2^(7d) (4 + 1)^(1 + a/d) / (|S^0| (a - d))
    assert rep.constants["coreCoefficient"] == pytest.approx(3 ** 5 * 2 ** 7 * 5 ** 3 / 2)
    assert rep.terms["tailTerm"] == pytest.approx(22.5 * 1.0)
    assert rep.terms["coreTerm"] == pytest.approx(3 ** 5 * 2 ** 7 * 5 ** 3 / 2 * 0.5)
    assert B.gc_strong_upper(GridDensity.uniform(0.0, 0.0, 4.0, 8),
                             power_law(1, 1, 2, 3), 1.0).value == 0.0


def test_canonical_1d_example():
    rho = GridDensity.uniform(0.5, 0.0, 4.0, 16)
    w = power_law(1.0, 1.0, 2.0, 3.0)
    rep = B.canonical_1d_upper(rho, w, 1.0)
    # tail 4 (3/2) int rho^2, core 2^(3 + 2 alpha)/(alpha - 1) int rho^3 = 128 * 0.5
    expect = 4 * 1.5 * 1 + math.log(2) * 2 + 2 * math.log(0.5) + 128 * 0.5
    assert rep.value == pytest.approx(expect)
    assert B.canonical_1d_upper(GridDensity.uniform(0.0, 0.0, 4.0, 8), w, 1.0).value == 0.0


def test_canonical_T0_examples():
    rho0 = GridDensity.uniform(0.0, 0.0, 4.0, 8)
    assert B.canonical_T0_upper(rho0, power_law(1, 1, 2, 3), 1.0).value == 0.0
    rep = B.canonical_T0_upper(GridDensity.uniform(1.0, [0, 0], [2, 2], [8, 8]),
                               power_law(1, 1, 2, 4), 1 / 3)
    assert rep.constants["logScale"] is not None
    scale = rep.constants["logScale"]
    expect = rep.constants["coreCoefficient"] * max(math.log(scale * 1.0), 0) * 4.0
    assert rep.terms["coreTerm"] == pytest.approx(expect)


def test_ot_block_uniform_2d_log_radius():
    rho0 = 0.5
    rho = GridDensity.uniform(rho0, [0, 0], [8, 8], [32, 32])
    rep = B.ot_block_upper(rho, power_law(1, 1, 2, 4), 1.0)
    Rin = (rho0 * unit_ball_volume(2)) ** -0.5
    per_mass = rep.terms["logRadiusTerm"] / mass(rho)
    # interior cells dominate; edge cells only increase R
    assert per_mass >= 2 * math.log(Rin) * (1 - 2e-2)
    assert B.ot_block_upper(GridDensity.uniform(0.0, [0, 0], [2, 2], [4, 4]),
                            power_law(1, 1, 2, 4), 1.0).value == 0.0


def test_percus_examples():
    rho = GridDensity.uniform(0.4, 0.0, 10.0, 64)
    assert B.percus_exact_1d(rho, 1.0, 0.0).value == 0.0
    with pytest.raises(NotRepresentable):
        B.percus_exact_1d(GridDensity.uniform(1.0, 0.0, 10.0, 20), 1.0, 1.0)
    # closed form for a uniform density far from the edges: bulk Tonks gas
    big = GridDensity.uniform(0.4, 0.0, 200.0, 400)
    val = B.percus_exact_1d(big, 1.0, 1.0).value / 200
    bulk = 0.4 * math.log(0.4) - 0.4 - 0.4 * math.log(1 - 0.4)
    assert val == pytest.approx(bulk, rel=1e-2)


def test_hard_core_bounds():
    w = hard_core(1.0, 1.0, 3.0, tail=False)
    zero = GridDensity.uniform(0.0, 0.0, 6.0, 12)
    reps = B.hard_core_bounds(zero, w, 1.0)
    assert reps and all(r.value == 0.0 for r in reps)
    rho = GridDensity.uniform(0.3, 0.0, 10.0, 40)
    names = {r.name for r in B.hard_core_bounds(rho, w, 1.0)}
    assert "remark_3_2" in names
    thm = [r for r in B.hard_core_bounds(rho, w, 1.0) if r.name == "thm_2_7"][0]
    assert thm.value >= exact_grand_canonical(rho, w, 1.0).value
    assert B.hard_core_T0_constant(1, 3.0) == pytest.approx(27 / 4)


def test_representability_examples():
    flags = B.representability(GridDensity.uniform(0.5, 0.0, 8.0, 32), 1.0)
    assert flags["exact1D"]
    pk = B.PackingConstants()
    level = 0.5 * (pk.rho_c(2) + pk.rho_c(2) / pk.v_c(2))
    rho = GridDensity.uniform(level, [0, 0], [6, 6], [24, 24])
    f2 = B.representability(rho, 1.0)
    assert f2["necessary"] and not f2["sufficient"]
    vals = np.full(20, 0.05)
    vals[10] = 1.2 / 0.1
    f3 = B.representability(GridDensity.uniform(1.0, 0.0, 2.0, 20).with_values(vals), 0.2)
    assert not f3["necessary"]


def test_gc_from_canonical():
    rho = GridDensity.from_function(lambda p: 1 + 0.3 * np.sin(p[:, 0]), [0.0], [6.0], [12])
    rho = rho.scaled(2.5 / mass(rho))
    lo, hi = B.gc_from_canonical_densities(rho)
    w = power_law(1.0, 1.0, 2.0, 3.0)
    F2 = exact_canonical(lo, w, 1.0).value
    F3 = exact_canonical(hi, w, 1.0).value
    rep = B.gc_from_canonical(rho, F2, F3)
    assert rep.constants["t"] == pytest.approx(0.5)
    assert rep.value == pytest.approx(0.5 * F2 + 0.5 * F3)
    assert rep.value >= exact_grand_canonical(rho, w, 1.0, nmax=5).value - 1e-6
    with pytest.raises(IntegerMass):
        B.gc_from_canonical(rho.scaled(2 / 2.5), F2, F3)


def test_all_bounds_and_json():
    rho = GridDensity.uniform(0.5, 0.0, 4.0, 16)
    reps, skipped = B.all_bounds(rho, power_law(1, 1, 2, 3), 1.0, "gc")
    names = [r.name for r in reps]
    assert "lower_bound" in names and "gc_strong_upper" in names
    assert "mean_field_upper" in skipped
    js = reps[0].to_json()
    assert js["name"] == "lower_bound" and "terms" in js
