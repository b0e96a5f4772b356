"""Finite alphabets, probability mass functions, and empirical windows.

Everything downstream (local statistics, the information projection, the
detector) works with pmfs over small finite alphabets. Joint distributions
over a sensor network live on the product alphabet; empirical joints are kept
sparse (a map from observed symbol tuples to counts) because the product
alphabet is usually much larger than any window.

Conventions:

* probabilities are float64 and must sum to 1 within ``SUM_TOL``; anything
  further off is rejected rather than renormalized, so silent upstream bugs
  cannot hide behind a normalize call
* KL divergence is in nats, with 0*log(0/q) = 0 and +inf when the first
  argument puts mass where the second has none
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

SUM_TOL = 1e-12


class Alphabet:
    """An ordered finite set of at least two distinct symbol labels.

    Labels may be any hashables; numeric labels additionally expose a
    ``values`` array for statistics that need arithmetic on symbols (means,
    variances). Index order is the order given at construction and is part of
    the identity: two alphabets are equal iff their label sequences are equal.
    """

    __slots__ = ("_labels", "_index", "_values")

    def __init__(self, labels: Iterable):
        labels = tuple(labels)
        if len(labels) < 2:
            raise ValueError(f"alphabet needs at least 2 symbols, got {len(labels)}")
        if len(set(labels)) != len(labels):
            raise ValueError("alphabet labels must be distinct")
        self._labels = labels
        self._index = {lab: i for i, lab in enumerate(labels)}
        self._values: np.ndarray | None = None

    @classmethod
    def integer_range(cls, lo: int, hi: int) -> "Alphabet":
        """Alphabet of consecutive integers lo..hi inclusive."""
        if hi <= lo:
            raise ValueError(f"need hi > lo, got [{lo}, {hi}]")
        return cls(range(lo, hi + 1))

    @property
    def labels(self) -> tuple:
        return self._labels

    @property
    def size(self) -> int:
        return len(self._labels)

    def __len__(self) -> int:
        return len(self._labels)

    def index(self, label) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(f"label {label!r} not in alphabet") from None

    @property
    def values(self) -> np.ndarray:
        """Symbol labels as a float64 array; raises for non-numeric labels."""
        if self._values is None:
            try:
                vals = np.array([float(lab) for lab in self._labels], dtype=np.float64)
            except (TypeError, ValueError):
                raise TypeError(
                    "alphabet labels are not numeric; numeric statistics need "
                    "numeric labels"
                ) from None
            vals.setflags(write=False)
            self._values = vals
        return self._values

    def __eq__(self, other) -> bool:
        return isinstance(other, Alphabet) and self._labels == other._labels

    def __hash__(self) -> int:
        return hash(self._labels)

    def __repr__(self) -> str:
        if len(self._labels) <= 6:
            return f"Alphabet({list(self._labels)!r})"
        return f"Alphabet(<{len(self._labels)} symbols>)"


class ProductAlphabet(Alphabet):
    """Product of per-sensor alphabets; labels are symbol tuples.

    Index order is row major in the factor order (last factor varies
    fastest), which is what ``np.reshape`` assumes when a dense joint pmf is
    reshaped to one axis per sensor. Only build these for small products
    (oracle and test use); the detector never materializes the product.
    """

    __slots__ = ("_factors",)

    def __init__(self, factors: Sequence[Alphabet]):
        factors = tuple(factors)
        if not factors:
            raise ValueError("need at least one factor alphabet")
        size = 1
        for a in factors:
            size *= a.size
        if size > 1_000_000:
            raise ValueError(f"product alphabet of size {size} is too large to build")
        labels = [()]
        for a in factors:
            labels = [prefix + (lab,) for prefix in labels for lab in a.labels]
        super().__init__(labels)
        self._factors = factors

    @property
    def factors(self) -> tuple[Alphabet, ...]:
        return self._factors

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.size for a in self._factors)


class Pmf:
    """A probability mass function on an :class:`Alphabet`.

    Entries must be nonnegative and sum to 1 within ``SUM_TOL`` of 1;
    violations raise. The probability array is frozen after construction.
    """

    __slots__ = ("alphabet", "_probs")

    def __init__(self, alphabet: Alphabet, probs):
        probs = np.asarray(probs, dtype=np.float64).copy()
        if probs.shape != (alphabet.size,):
            raise ValueError(
                f"pmf has {probs.shape} entries for an alphabet of size {alphabet.size}"
            )
        if not np.all(np.isfinite(probs)):
            raise ValueError("pmf entries must be finite")
        if np.any(probs < 0.0):
            raise ValueError(f"negative pmf entry: min = {probs.min():.3e}")
        total = float(probs.sum())
        if abs(total - 1.0) > SUM_TOL:
            raise ValueError(
                f"pmf sums to {total!r}, off by {total - 1.0:.3e} (> {SUM_TOL:g}); "
                "refusing to renormalize"
            )
        probs.setflags(write=False)
        self.alphabet = alphabet
        self._probs = probs

    @classmethod
    def uniform(cls, alphabet: Alphabet) -> "Pmf":
        return cls(alphabet, np.full(alphabet.size, 1.0 / alphabet.size))

    @classmethod
    def point_mass(cls, alphabet: Alphabet, label) -> "Pmf":
        probs = np.zeros(alphabet.size)
        probs[alphabet.index(label)] = 1.0
        return cls(alphabet, probs)

    @property
    def probs(self) -> np.ndarray:
        return self._probs

    @property
    def is_strictly_positive(self) -> bool:
        return bool(np.all(self._probs > 0.0))

    def __getitem__(self, label) -> float:
        return float(self._probs[self.alphabet.index(label)])

    def mean(self) -> float:
        """Mean of the numeric symbol values."""
        return float(np.dot(self._probs, self.alphabet.values))

    def variance(self) -> float:
        mu = self.mean()
        return float(np.dot(self._probs, self.alphabet.values**2) - mu * mu)

    def __repr__(self) -> str:
        return f"Pmf({np.array2string(self._probs, precision=4)})"


def discrete_gaussian_pmf(alphabet: Alphabet, width: float = 1.0) -> Pmf:
    """Pmf proportional to exp(-a^2 / (2 width^2)) on a numeric alphabet."""
    if width <= 0.0:
        raise ValueError(f"width must be positive, got {width}")
    a = alphabet.values
    w = np.exp(-(a * a) / (2.0 * width * width))
    return Pmf(alphabet, w / w.sum())


@dataclass(frozen=True)
class JointSample:
    """One network observation: a symbol index per sensor."""

    indices: tuple[int, ...]

    def __post_init__(self):
        if not self.indices:
            raise ValueError("empty joint sample")
        for ix in self.indices:
            if not isinstance(ix, (int, np.integer)) or ix < 0:
                raise ValueError(f"symbol indices must be nonnegative ints, got {ix!r}")

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class WindowCounts:
    """Symbol counts over a window of joint samples.

    Maintains per-sensor marginal count vectors and the sparse joint tally
    (tuple of indices -> count). The two views must stay consistent; that is
    an invariant, checked by :meth:`check_consistent` in tests after mutation.
    """

    sizes: tuple[int, ...]
    n: int = 0
    per_sensor: list[np.ndarray] = field(default_factory=list)
    joint: dict[tuple[int, ...], int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.sizes:
            raise ValueError("need at least one sensor")
        if not self.per_sensor:
            self.per_sensor = [np.zeros(m, dtype=np.int64) for m in self.sizes]

    @classmethod
    def for_alphabets(cls, alphabets: Sequence[Alphabet]) -> "WindowCounts":
        return cls(sizes=tuple(a.size for a in alphabets))

    def append(self, sample) -> None:
        """Add one joint sample, given as a JointSample or index sequence."""
        idx = sample.indices if isinstance(sample, JointSample) else tuple(int(i) for i in sample)
        if len(idx) != len(self.sizes):
            raise ValueError(f"sample has {len(idx)} sensors, window expects {len(self.sizes)}")
        for j, ix in enumerate(idx):
            if not 0 <= ix < self.sizes[j]:
                raise ValueError(f"symbol index {ix} out of range for sensor {j}")
        for j, ix in enumerate(idx):
            self.per_sensor[j][ix] += 1
        self.joint[idx] = self.joint.get(idx, 0) + 1
        self.n += 1

    def extend(self, samples: Iterable) -> None:
        for s in samples:
            self.append(s)

    def check_consistent(self) -> None:
        """Raise if the marginal counts, joint tally, and n disagree."""
        if sum(self.joint.values()) != self.n:
            raise AssertionError("joint tally total != n")
        for j, counts in enumerate(self.per_sensor):
            if int(counts.sum()) != self.n:
                raise AssertionError(f"sensor {j} marginal total != n")
            derived = np.zeros_like(counts)
            for idx, c in self.joint.items():
                derived[idx[j]] += c
            if not np.array_equal(derived, counts):
                raise AssertionError(f"sensor {j} marginal disagrees with joint tally")


def empirical_pmfs(
    window: WindowCounts, alphabets: Sequence[Alphabet]
) -> tuple[list[Pmf], dict[tuple[int, ...], float]]:
    """Per-sensor empirical pmfs and the sparse joint empirical pmf.

    The joint is returned as {index tuple: probability} over observed tuples
    only. Raises on an empty window.
    """
    if window.n == 0:
        raise ValueError("empirical pmf of an empty window")
    if tuple(a.size for a in alphabets) != window.sizes:
        raise ValueError("alphabets do not match window sensor sizes")
    inv = 1.0 / window.n
    marginals = [
        Pmf(alphabets[j], window.per_sensor[j] * inv) for j in range(len(alphabets))
    ]
    joint = {idx: c * inv for idx, c in window.joint.items()}
    return marginals, joint


def _require_same_alphabet(f: Pmf, g: Pmf) -> None:
    if f.alphabet != g.alphabet:
        raise ValueError("pmfs live on different alphabets")


def kl_divergence(f: Pmf, g: Pmf) -> float:
    """I(f || g) in nats; +inf when f puts mass where g does not."""
    _require_same_alphabet(f, g)
    total = 0.0
    for p, q in zip(f.probs, g.probs):
        if p == 0.0:
            continue
        if q == 0.0:
            return math.inf
        total += p * math.log(p / q)
    # rounding can pull a tiny negative out of a near-identical pair
    return max(total, 0.0)


def l1_distance(f: Pmf, g: Pmf) -> float:
    _require_same_alphabet(f, g)
    return float(np.abs(f.probs - g.probs).sum())


def marginal(joint: Pmf, sensor: int) -> Pmf:
    """Marginal pmf of one sensor from a dense pmf on a ProductAlphabet."""
    alph = joint.alphabet
    if not isinstance(alph, ProductAlphabet):
        raise TypeError("marginal() needs a pmf on a ProductAlphabet")
    if not 0 <= sensor < len(alph.factors):
        raise IndexError(f"sensor {sensor} out of range")
    cube = joint.probs.reshape(alph.shape)
    axes = tuple(ax for ax in range(len(alph.factors)) if ax != sensor)
    return Pmf(alph.factors[sensor], cube.sum(axis=axes))


def product_pmf(factors: Sequence[Pmf]) -> Pmf:
    """Dense product distribution on the ProductAlphabet of the factors."""
    alph = ProductAlphabet([f.alphabet for f in factors])
    probs = np.ones(1)
    for f in factors:
        probs = np.outer(probs, f.probs).ravel()
    # renormalization is refused by Pmf, so correct the float dust explicitly:
    # a product of unit sums can drift by a few ulps, never more
    drift = probs.sum() - 1.0
    if abs(drift) > 1e-9:
        raise AssertionError(f"product pmf sum drifted by {drift:.3e}")
    return Pmf(alph, probs / probs.sum())
