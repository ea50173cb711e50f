"""Shared test helpers: seeded random SPD matrices and tangent vectors."""

from __future__ import annotations

import numpy as np
import pytest

from spdgauss.linalg import expm


def rand_spd(rng: np.random.Generator, d: int, scale: float = 1.0) -> np.ndarray:
    """Well-conditioned random SPD matrix: expm of a scaled GOE-like matrix."""
    a = rng.standard_normal((d, d))
    return expm(scale * (a + a.T) / np.sqrt(2.0 * d))


def rand_sym(rng: np.random.Generator, d: int, scale: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((d, d))
    return scale * (a + a.T) / 2.0


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260818)
