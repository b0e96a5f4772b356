"""Local sensor statistics and the network model.

A local statistic is a concave, Lipschitz functional q_j of a sensor's
marginal pmf, normalized so that q_j(f_j0) = 0 at that sensor's pre-change
pmf. The network-level statistic is the sum over sensors of the per-sensor
values at the marginals; concavity and the Lipschitz bound are inherited
term by term (the Lipschitz constant adds).

Two families are built in:

* mean statistics  q(f) = <h, f> - <h, f0>  for a per-symbol score h
* variance statistics  q(f) = Var_f - offset  on numeric alphabets

Custom statistics can be supplied with an explicit gradient; the gradient of
a functional on the simplex is only defined up to an additive constant, and
every consumer here is invariant to that choice (tilting normalizes it away,
tangent scores are recentered under f0).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .distributions import Alphabet, Pmf

_KINDS = ("mean", "variance", "custom")


# Eval/gradient callables are module-level classes rather than closures so
# models pickle cleanly into worker processes.
@dataclass(frozen=True)
class _MeanEval:
    scores: np.ndarray
    center: float

    def __call__(self, f: Pmf) -> float:
        return float(np.dot(self.scores, f.probs)) - self.center


@dataclass(frozen=True)
class _MeanGradient:
    scores: np.ndarray
    center: float

    def __call__(self, f: Pmf) -> np.ndarray:
        return self.scores - self.center


@dataclass(frozen=True)
class _VarianceEval:
    offset: float

    def __call__(self, f: Pmf) -> float:
        return f.variance() - self.offset


@dataclass(frozen=True)
class _VarianceGradient:
    values: np.ndarray

    def __call__(self, f: Pmf) -> np.ndarray:
        # d/df(a) [ sum f b^2 - (sum f b)^2 ] = a^2 - 2 mu_f a
        a = self.values
        return a * a - 2.0 * f.mean() * a


@dataclass(frozen=True)
class LocalStatistic:
    """A concave functional of one sensor's pmf.

    ``floor`` is the assumed worst-case post-change value (the q-floor used
    by threshold schedules); it may be left None for exploratory use and is
    required once a schedule is built.
    """

    name: str
    kind: str
    eval_fn: Callable[[Pmf], float]
    gradient_fn: Callable[[Pmf], np.ndarray]
    lipschitz: float
    floor: float | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown statistic kind {self.kind!r}")
        if not (self.lipschitz > 0.0 and np.isfinite(self.lipschitz)):
            raise ValueError(f"Lipschitz constant must be positive, got {self.lipschitz}")
        if self.floor is not None and not self.floor > 0.0:
            raise ValueError(f"floor must be positive when given, got {self.floor}")

    def __call__(self, pmf: Pmf) -> float:
        return float(self.eval_fn(pmf))

    def gradient(self, pmf: Pmf) -> np.ndarray:
        g = np.asarray(self.gradient_fn(pmf), dtype=np.float64)
        if g.shape != (pmf.alphabet.size,):
            raise ValueError("gradient shape does not match the alphabet")
        return g

    def tangent_scores(self, f0: Pmf) -> np.ndarray:
        """Per-symbol scores of the tangent plane at f0, recentered to
        f0-mean zero.

        Concavity gives q(f) <= <scores, f> for every pmf f, with equality at
        f = f0 (both sides 0). This is what turns any concave statistic into
        a mean-type upper bound: the basis of the scan pruning rule and of
        the surrogate step distribution for variance statistics.
        """
        g = self.gradient(f0)
        return g - float(np.dot(g, f0.probs))


def make_mean_statistic(
    h,
    f0: Pmf,
    *,
    floor: float | None = None,
    name: str = "mean",
) -> LocalStatistic:
    """Mean statistic q(f) = <h, f> - <h, f0> for per-symbol scores h.

    ``h`` is either an array of one score per symbol (alphabet order) or a
    callable applied to each label. The score must not be constant. The l1
    Lipschitz constant is (max h - min h) / 2 and is tight.
    """
    alphabet = f0.alphabet
    if callable(h):
        h_vec = np.array([float(h(lab)) for lab in alphabet.labels], dtype=np.float64)
    else:
        h_vec = np.asarray(h, dtype=np.float64).copy()
    if h_vec.shape != (alphabet.size,):
        raise ValueError(f"h has {h_vec.shape} entries for an alphabet of size {alphabet.size}")
    if not np.all(np.isfinite(h_vec)):
        raise ValueError("h must be finite")
    span = float(h_vec.max() - h_vec.min())
    if span <= 0.0:
        raise ValueError("h is constant; the statistic would be identically zero")
    h_vec.setflags(write=False)
    center = float(np.dot(h_vec, f0.probs))
    return LocalStatistic(
        name=name,
        kind="mean",
        eval_fn=_MeanEval(h_vec, center),
        gradient_fn=_MeanGradient(h_vec, center),
        lipschitz=span / 2.0,
        floor=floor,
        params={"scores": h_vec, "center": center},
    )


def make_variance_statistic(
    f0: Pmf,
    offset: float | None = None,
    *,
    floor: float | None = None,
    name: str = "variance",
) -> LocalStatistic:
    """Variance statistic q(f) = Var_f(X) - offset on a numeric alphabet.

    ``offset`` defaults to Var_f0, which makes q(f0) = 0 exactly. Variance is
    concave in the pmf (it is a linear term minus a squared linear term).
    The Lipschitz constant used is the conservative bound 3 * max(a^2); the
    exact constant is smaller but harder to state, and only an upper bound
    is needed anywhere.
    """
    alphabet = f0.alphabet
    a = alphabet.values
    if offset is None:
        offset = f0.variance()
    offset = float(offset)
    a_sq_max = float(np.max(a * a))
    return LocalStatistic(
        name=name,
        kind="variance",
        eval_fn=_VarianceEval(offset),
        gradient_fn=_VarianceGradient(a),
        lipschitz=3.0 * a_sq_max,
        floor=floor,
        params={"values": a, "offset": offset},
    )


def make_custom_statistic(
    name: str,
    eval_fn: Callable[[Pmf], float],
    gradient_fn: Callable[[Pmf], np.ndarray],
    lipschitz: float,
    *,
    floor: float | None = None,
    validate_at: Pmf | None = None,
    rng: np.random.Generator | None = None,
    trials: int = 200,
) -> LocalStatistic:
    """Wrap a user-supplied concave statistic.

    When ``validate_at`` (the sensor's pre-change pmf) is given, the wrapper
    spot-checks normalization q(f0) = 0, concavity, the Lipschitz bound, and
    the gradient against finite differences on random pmfs; violations raise.
    """
    stat = LocalStatistic(
        name=name,
        kind="custom",
        eval_fn=eval_fn,
        gradient_fn=gradient_fn,
        lipschitz=lipschitz,
        floor=floor,
    )
    if validate_at is not None:
        validate_statistic(stat, validate_at, rng=rng, trials=trials)
    return stat


def validate_statistic(
    stat: LocalStatistic,
    f0: Pmf,
    *,
    rng: np.random.Generator | None = None,
    trials: int = 200,
    slack: float = 1e-9,
) -> None:
    """Statistical check of the statistic's contract at f0; raises on failure."""
    if rng is None:
        rng = np.random.default_rng(0)
    alphabet = f0.alphabet
    v0 = stat(f0)
    if abs(v0) > 1e-9:
        raise ValueError(f"{stat.name}: q(f0) = {v0:.3e}, expected 0")
    m = alphabet.size
    for _ in range(trials):
        f = Pmf(alphabet, rng.dirichlet(np.ones(m)))
        g = Pmf(alphabet, rng.dirichlet(np.ones(m)))
        alpha = float(rng.uniform())
        mix = Pmf(alphabet, alpha * f.probs + (1.0 - alpha) * g.probs)
        if stat(mix) < alpha * stat(f) + (1.0 - alpha) * stat(g) - slack:
            raise ValueError(f"{stat.name}: concavity violated")
        if abs(stat(f) - stat(g)) > stat.lipschitz * np.abs(f.probs - g.probs).sum() + slack:
            raise ValueError(f"{stat.name}: Lipschitz bound violated")
        fd = finite_difference_gradient(stat, f)
        grad = stat.gradient(f)
        centered = grad - grad.mean()
        scale = max(1.0, float(np.abs(centered).max()))
        if np.abs(fd - centered).max() > 1e-4 * scale:
            raise ValueError(f"{stat.name}: gradient disagrees with finite differences")


def finite_difference_gradient(stat: LocalStatistic, f: Pmf, step: float = 1e-6) -> np.ndarray:
    """Centered finite differences along simplex-tangent directions e_a - 1/m.

    Returns the gradient with its mean removed (the additive constant is not
    observable on the simplex).
    """
    m = f.alphabet.size
    base = f.probs
    out = np.empty(m)
    for a in range(m):
        d = np.full(m, -1.0 / m)
        d[a] += 1.0
        hi = base + step * d
        lo = base - step * d
        if hi.min() < 0.0 or lo.min() < 0.0:
            raise ValueError("pmf too close to the simplex boundary for finite differences")
        out[a] = (stat(Pmf(f.alphabet, hi / hi.sum())) - stat(Pmf(f.alphabet, lo / lo.sum()))) / (
            2.0 * step
        )
    return out


@dataclass(frozen=True)
class Sensor:
    """One sensor: its alphabet, pre-change pmf, and local statistic."""

    alphabet: Alphabet
    f0: Pmf
    statistic: LocalStatistic

    def __post_init__(self):
        if self.f0.alphabet != self.alphabet:
            raise ValueError("f0 alphabet does not match the sensor alphabet")
        if not self.f0.is_strictly_positive:
            raise ValueError("pre-change pmf must be strictly positive")
        v0 = self.statistic(self.f0)
        if abs(v0) > 1e-9:
            raise ValueError(
                f"statistic {self.statistic.name!r} has q(f0) = {v0:.3e}, expected 0"
            )


class NetworkModel:
    """The sensor network: per-sensor alphabets, pre-change pmfs, statistics."""

    def __init__(self, sensors: Sequence[Sensor]):
        sensors = tuple(sensors)
        if not sensors:
            raise ValueError("need at least one sensor")
        self.sensors = sensors

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    @property
    def alphabets(self) -> tuple[Alphabet, ...]:
        return tuple(s.alphabet for s in self.sensors)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(s.alphabet.size for s in self.sensors)

    @property
    def joint_size(self) -> int:
        out = 1
        for s in self.sensors:
            out *= s.alphabet.size
        return out

    @property
    def total_lipschitz(self) -> float:
        return float(sum(s.statistic.lipschitz for s in self.sensors))

    @property
    def min_floor(self) -> float:
        floors = [s.statistic.floor for s in self.sensors]
        if any(fl is None for fl in floors):
            raise ValueError("every sensor statistic needs a floor for schedule work")
        return float(min(floors))

    def global_eval(self, marginals: Sequence[Pmf]) -> float:
        """Network statistic: sum of per-sensor statistics at the marginals."""
        if len(marginals) != self.n_sensors:
            raise ValueError(
                f"got {len(marginals)} marginals for {self.n_sensors} sensors"
            )
        total = 0.0
        for s, f in zip(self.sensors, marginals):
            if f.alphabet != s.alphabet:
                raise ValueError("marginal alphabet mismatch")
            total += s.statistic(f)
        return total

    def fingerprint(self) -> str:
        """Stable hash of the model for table-file compatibility checks."""
        import hashlib
        import json

        desc = []
        for s in self.sensors:
            stat = s.statistic
            desc.append(
                {
                    "labels": [repr(lab) for lab in s.alphabet.labels],
                    "f0": [float(p) for p in s.f0.probs],
                    "kind": stat.kind,
                    "name": stat.name,
                    "lipschitz": stat.lipschitz,
                    "floor": stat.floor,
                    "params": {
                        k: (list(map(float, v)) if isinstance(v, np.ndarray) else v)
                        for k, v in stat.params.items()
                    },
                }
            )
        blob = json.dumps(desc, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def global_eval(model: NetworkModel, marginals: Sequence[Pmf]) -> float:
    return model.global_eval(marginals)
