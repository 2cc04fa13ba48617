import json
import math

import numpy as np
import pytest

from freebound import hard_core, load_potential, power_law
from freebound.errors import TailNotIntegrable
from freebound.potential import (PotentialSpec, envelope, envelope_parts, evaluate,
                                 stability_falsify, tail_l1_bound)


def test_evaluate_examples():
    assert evaluate(hard_core(1.0, 1.0, 3.0), 0.5) == math.inf
    w = power_law(1.0, 1.0, 2.0, 3.0)
    assert evaluate(w, 2.0) == pytest.approx(1 / 9)
    assert evaluate(w, 0.5) == pytest.approx(4 + 1 / 1.125)


def test_envelope_parts_examples():
    w1, w2 = envelope_parts(power_law(2.0, 1.0, 2.0, 4.0))
    assert w1(1.0) == 0 and w1(3.0) == 0
    assert w2(1.0) == pytest.approx(1.0)


def test_tabulated_lennard_jones_dominated():
    r = np.linspace(0.9, 6.0, 80)
    lj = 4 * ((1 / r) ** 12 - (1 / r) ** 6)
    table = [[0.0, 1e6]] + [[a, b] for a, b in zip(r, lj)]
    w = PotentialSpec("tabulated", kappa=1e6, r0=0.9, alpha=12.0, s=6.0, table=table)
    rs = np.linspace(1e-3, 10, 1000)
    assert np.all(evaluate(w, rs) <= envelope(w, rs) + 1e-9)
    with pytest.raises(ValueError):
        PotentialSpec("tabulated", kappa=0.1, r0=0.5, alpha=1.0, s=4.0, table=[[0, 5], [1, 5]])


def test_tail_l1_examples():
    assert tail_l1_bound(power_law(1, 1, 2, 3), 1) == pytest.approx(3.0)
    assert tail_l1_bound(power_law(1, 1, 2, 4), 2) == pytest.approx(2 * math.pi)
    assert tail_l1_bound(power_law(2, 1, 2, 6), 3) == pytest.approx(16 * math.pi / 3)
    with pytest.raises(TailNotIntegrable):
        tail_l1_bound(power_law(1, 1, 2, 1.5), 2)


def test_stability_falsify_examples():
    box = ([0.0, 0.0], [3.0, 3.0])
    assert stability_falsify(power_law(1, 1, 2, 3), 5, 10 ** 4, box, rng=1) is None
    neg = PotentialSpec("tabulated", kappa=0.1, r0=10.0, alpha=1.0, s=4.0,
                        table=[[0.0, -1.0], [100.0, -1.0]])
    assert stability_falsify(neg, 4, 10, box, rng=1) is not None
    assert stability_falsify(hard_core(1, 1, 3), 5, 10 ** 4, box, rng=2) is None


def test_json_roundtrip(tmp_path):
    w = hard_core(1.0, 0.5, 4.0, tail=False)
    p = tmp_path / "w.json"
    p.write_text(json.dumps(w.to_json()))
    v = load_potential(p)
    assert v.kind == "hardCore" and math.isinf(v.alpha) and not v.tail
    assert v.content_hash() == w.content_hash()
