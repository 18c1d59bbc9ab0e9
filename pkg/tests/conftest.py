"""Shared helpers for the test suite."""

import numpy as np
import pytest

import ace_lab as al


def seeded_rng(*tags) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(tags)))


def random_hermitian(dim, rng, field="real"):
    g = rng.standard_normal((dim, dim))
    if field == "complex":
        g = g + 1j * rng.standard_normal((dim, dim))
    return (g + g.conj().T) / 2


def negative_definite(dim, rng, field="real", ridge=0.01):
    """Strictly negative definite matrix with unit spectral norm."""
    c = rng.standard_normal((dim, dim))
    if field == "complex":
        c = (c + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    s = c @ c.conj().T + ridge * np.eye(dim)
    s = (s + s.conj().T) / 2
    return -s / float(np.linalg.eigvalsh(s)[-1])


def generic_problem(seed, dim=12, n=3, gap=1.0, b_norm=1.0, field="real"):
    return al.random_problem(
        al.EnsembleSpec(N=dim, n=n, gap=gap, b_norm=b_norm, seed=seed, field=field)
    )


@pytest.fixture
def rng():
    return seeded_rng(0)
