from __future__ import annotations

import math

import numpy as np
import pytest

from modules.DualOperator import DualOperator
from modules.Model import Frequency, Potential, Regime, ScaleLadder

GOLDEN = (math.sqrt(5) - 1) / 2


@pytest.fixture
def golden() -> Frequency:
    return Frequency((1.0, GOLDEN), 0.1, 3.0)


@pytest.fixture
def zero_potential() -> Potential:
    return Potential({}, 1e-4, 0.5, 2)


def harmonic(epsilon: float, n0: tuple[int, ...] = (0, 1)) -> Potential:
    """c(n0) = c(-n0) = epsilon, nothing else."""
    return Potential({n0: 1.0 + 0j, tuple(-x for x in n0): 1.0 + 0j}, epsilon, 0.5, len(n0))


@pytest.fixture
def zero_operator(golden, zero_potential) -> DualOperator:
    return DualOperator(golden, zero_potential)


@pytest.fixture
def harmonic_operator(golden) -> DualOperator:
    return DualOperator(golden, harmonic(1e-3))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(7)


@pytest.fixture
def small_ladder() -> ScaleLadder:
    """Hand-built desk ladder with R = 2, 4, 8 and tiny deltas."""
    return ScaleLadder(
        0.25,
        (-math.inf, math.log(2), math.log(4), math.log(8)),
        (-60.0, -80.0, -100.0, -120.0),
        Regime.desk,
    )


@pytest.fixture
def make_harmonic():
    return harmonic
