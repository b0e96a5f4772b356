import numpy as np
import pytest

from nipt import (
    Alphabet,
    NetworkModel,
    Pmf,
    Sensor,
    discrete_gaussian_pmf,
    make_mean_statistic,
    make_variance_statistic,
)


@pytest.fixture
def binary_sensor():
    """{-1, 1}, uniform f0, identity mean statistic, floor 1."""
    alph = Alphabet([-1, 1])
    f0 = Pmf.uniform(alph)
    stat = make_mean_statistic([-1.0, 1.0], f0, floor=1.0)
    return Sensor(alph, f0, stat)


@pytest.fixture
def binary_model(binary_sensor):
    return NetworkModel([binary_sensor])


def bernoulli_model(p: float, floor: float = 0.5) -> NetworkModel:
    """{0, 1} with scores (0, 1) and f0 = (1-p, p): the closed-form case."""
    alph = Alphabet([0, 1])
    f0 = Pmf(alph, [1.0 - p, p])
    stat = make_mean_statistic([0.0, 1.0], f0, floor=floor, name="bernoulli")
    return NetworkModel([Sensor(alph, f0, stat)])


@pytest.fixture
def three_letter_variance_model():
    """{-1, 0, 1}, uniform f0, variance statistic (offset 2/3), floor 0.3."""
    alph = Alphabet.integer_range(-1, 1)
    f0 = Pmf.uniform(alph)
    stat = make_variance_statistic(f0, floor=0.3)
    return NetworkModel([Sensor(alph, f0, stat)])


@pytest.fixture
def gauss9_sensor():
    """{-4..4}, discrete Gaussian f0, variance statistic, floor 1."""
    alph = Alphabet.integer_range(-4, 4)
    f0 = discrete_gaussian_pmf(alph, 1.0)
    stat = make_variance_statistic(f0, floor=1.0)
    return Sensor(alph, f0, stat)


@pytest.fixture
def gauss9_model(gauss9_sensor):
    return NetworkModel([gauss9_sensor])


def random_pmf(rng: np.random.Generator, alphabet: Alphabet) -> Pmf:
    return Pmf(alphabet, rng.dirichlet(np.ones(alphabet.size)))
