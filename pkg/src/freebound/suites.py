"""Deterministic desk-scale test densities and verification suites."""

from __future__ import annotations

import numpy as np

from .density import GridDensity, mass
from .potential import hard_core, power_law


def random_density_1d(rng, total, cells=48, length=8.0, bumps=3, width=(0.8, 1.6)):
    """Smooth sum of Gaussian bumps on [0, length], normalized to ``total``."""
    centers = rng.uniform(0.25 * length, 0.75 * length, bumps)
    widths = rng.uniform(*width, bumps)
    heights = rng.uniform(0.5, 1.5, bumps)

    def f(p):
        x = p[:, 0]
        return sum(a * np.exp(-((x - c) / s) ** 2) for a, c, s in zip(heights, centers, widths))

    g = GridDensity.from_function(f, [0.0], [length], [cells])
    return g.scaled(total / mass(g))


def random_density_2d(rng, total, cells=10, length=4.0, bumps=2, width=(0.7, 1.2)):
    centers = rng.uniform(0.3 * length, 0.7 * length, (bumps, 2))
    widths = rng.uniform(*width, bumps)
    heights = rng.uniform(0.5, 1.5, bumps)

    def f(p):
        return sum(a * np.exp(-np.sum((p - c) ** 2, axis=1) / s ** 2)
                   for a, c, s in zip(heights, centers, widths))

    g = GridDensity.from_function(f, [0.0, 0.0], [length, length], [cells, cells])
    return g.scaled(total / mass(g))


def sandwich_settings():
    """(label, d, alpha, mass, T) for the acceptance sandwich suite."""
    out = []
    for alpha in (1.0, 2.0):
        for total in (2, 3):
            for T in (0.0, 1.0):
                out.append((f"d1-a{alpha:g}-N{total}-T{T:g}", 1, alpha, total, T))
    out.append(("d2-a2-N2-T0", 2, 2.0, 2, 0.0))
    return out


def sandwich_cases(count=20, seed=2024):
    """Yield (label, rho, w, T, ensemble) for every acceptance setting."""
    for k, (label, d, alpha, total, T) in enumerate(sandwich_settings()):
        rng = np.random.default_rng(seed + k)
        s = 3.0 if d == 1 else 4.0
        w = power_law(1.0, 1.0, alpha, s)
        for _ in range(count):
            rho = random_density_1d(rng, total) if d == 1 else random_density_2d(rng, total)
            yield label, rho, w, T, "canonical"


def suite(name, count=20, seed=2024):
    """Named suites for ``freebound verify --suite``."""
    if name == "desk1d":
        return [c for c in sandwich_cases(count, seed) if c[0].startswith("d1")]
    if name == "desk2d":
        return [c for c in sandwich_cases(count, seed) if c[0].startswith("d2")]
    if name == "desk":
        return list(sandwich_cases(count, seed))
    if name == "deskgc":
        rng = np.random.default_rng(seed)
        w = power_law(1.0, 1.0, 2.0, 3.0)
        return [("gc-d1-a2", random_density_1d(rng, rng.uniform(1.2, 1.8), cells=12, length=6.0),
                 w, 1.0, "gc") for _ in range(count)]
    if name == "rods":
        w = hard_core(1.0, 1.0, 3.0, tail=False)
        return [(f"rods-{n}", GridDensity.uniform(0.4, 0.0, 10.0, n), w, 1.0, "gc")
                for n in (64, 128, 256)]
    raise ValueError(f"unknown suite {name!r}")


SUITES = ("desk", "desk1d", "desk2d", "deskgc", "rods")
