"""Theoretical performance bounds for the two-stage detector.

Pre-change, the scan statistic behaves like the running maximum of a random
walk whose step is the network statistic's per-sample contribution minus
the drift. Its log moment generating function psi has a unique positive
root v*, and the false-alarm rate is controlled through it: the average run
length grows at least like exp((v* + 2 drift / L^2) * c) in the scan
threshold c. On the delay side the statistic gains at least q_lower per
post-change step, giving the 2 c / q_lower upper bound, and eliminating c
in favor of a target run length gamma yields the calibrated form
log(gamma) / (q_lower (v*/2 + drift/L^2)).

The step distribution is exact for mean statistics. For curved statistics
(variance, custom) the per-sample contribution is not defined, and the
tangent-plane scores at the pre-change pmf stand in as a surrogate; the
surrogate walk dominates the true scan pathwise, but the resulting ARL
bound is heuristic rather than guaranteed, and reports carry a flag saying
which case they are in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .statistics import NetworkModel

_EXP_OVERFLOW = 700.0


@dataclass(frozen=True)
class StepDistribution:
    """Finite pmf of the scan statistic's one-step increment pre-change."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        probs = np.asarray(self.probs, dtype=np.float64)
        if values.shape != probs.shape or values.ndim != 1:
            raise ValueError("values and probs must be matching 1-d arrays")
        if probs.min() < 0.0 or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be a distribution (nonnegative, sum 1)")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)

    def mean(self) -> float:
        return float(np.dot(self.probs, self.values))


def step_distribution(
    model: NetworkModel, drift: float, *, surrogate: bool = False
) -> StepDistribution:
    """Distribution of the per-sample scan increment under the pre-change law.

    For mean statistics the increment is exactly the summed per-symbol
    scores minus the drift, and its mean is -drift. Other statistic kinds
    have no per-sample increment; with ``surrogate=True`` their tangent
    scores at f0 are used instead (same -drift mean, pathwise an upper
    bound on the true scan), otherwise they raise.
    """
    acc: dict[float, float] = {0.0: 1.0}
    for sensor in model.sensors:
        stat = sensor.statistic
        if stat.kind != "mean" and not surrogate:
            raise ValueError(
                f"statistic {stat.name!r} is {stat.kind}-type and has no exact "
                "per-sample increment; pass surrogate=True to use its tangent "
                "scores (the resulting bounds are heuristic)"
            )
        scores = stat.tangent_scores(sensor.f0)
        nxt: dict[float, float] = {}
        for value, prob in acc.items():
            for score, weight in zip(scores, sensor.f0.probs):
                key = value + score
                nxt[key] = nxt.get(key, 0.0) + prob * weight
        acc = nxt
    values = np.array(sorted(acc.keys()), dtype=np.float64)
    probs = np.array([acc[v] for v in values], dtype=np.float64)
    probs = probs / probs.sum()
    return StepDistribution(values - drift, probs)


def log_mgf(step: StepDistribution, v: float) -> float:
    """psi(v) = log E exp(v * step); exactly 0 at v = 0."""
    if v == 0.0:
        return 0.0
    return float(logsumexp(np.log(step.probs) + v * step.values))


def log_mgf_root(step: StepDistribution, tol: float = 1e-10, max_iter: int = 2000) -> float:
    """The unique positive root of psi.

    psi is convex with psi(0) = 0 and negative slope there (the step mean is
    the drift, negative), so a positive root exists exactly when the step
    takes positive values; bracketing by doubling and bisecting to
    |psi| <= tol finds it.
    """
    if step.mean() >= 0.0:
        raise ValueError(f"step mean must be negative, got {step.mean():.6g}")
    if step.values.max() <= 0.0:
        raise ValueError(
            "step has no positive values, so psi has no positive root; "
            "the scan statistic never rises under the pre-change law"
        )
    lo, hi = 0.0, 1.0
    for _ in range(200):
        if log_mgf(step, hi) > 0.0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise RuntimeError("failed to bracket the positive root of psi")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        val = log_mgf(step, mid)
        if abs(val) <= tol:
            return mid
        if val < 0.0:
            lo = mid
        else:
            hi = mid
    raise RuntimeError(
        f"bisection for the psi root did not reach |psi| <= {tol:g} "
        f"in {max_iter} iterations"
    )


def arl_lower_bound(
    v_star: float, drift: float, lipschitz: float, scan_threshold: float
) -> tuple[float, float]:
    """Lower bound on the average run length at scan threshold c.

    Returns (bound, exponent) with bound = exp(exponent) and exponent =
    (v* + 2 drift / L^2) * c; the bound saturates to inf past the float
    range, which is why the exponent is reported alongside.
    """
    exponent = (v_star + 2.0 * drift / (lipschitz * lipschitz)) * scan_threshold
    bound = math.inf if exponent > _EXP_OVERFLOW else math.exp(exponent)
    return bound, exponent


@dataclass(frozen=True)
class WaddBounds:
    """Upper bounds on the worst average detection delay.

    ``direct`` is 2 c / q_lower at the given scan threshold; ``gamma_bound``
    re-expresses it through a target run length gamma, and
    ``calibrated_scan_threshold`` is the smallest c whose ARL bound reaches
    that gamma. The two coincide when c is exactly the calibrated value.
    """

    direct: float
    gamma_bound: float | None = None
    calibrated_scan_threshold: float | None = None


def wadd_bounds(
    q_lower: float,
    scan_threshold: float,
    *,
    v_star: float | None = None,
    drift: float | None = None,
    lipschitz: float | None = None,
    gamma: float | None = None,
) -> WaddBounds:
    """Delay bounds; the gamma form needs v*, drift, lipschitz, and gamma."""
    if not q_lower > 0.0:
        raise ValueError(f"q_lower must be positive, got {q_lower}")
    direct = 2.0 * scan_threshold / q_lower
    if gamma is None:
        return WaddBounds(direct=direct)
    if v_star is None or drift is None or lipschitz is None:
        raise ValueError("the gamma-form bound needs v_star, drift, and lipschitz")
    if gamma < 1.0:
        raise ValueError(f"gamma must be at least 1, got {gamma}")
    rate = v_star / 2.0 + drift / (lipschitz * lipschitz)
    return WaddBounds(
        direct=direct,
        gamma_bound=math.log(gamma) / (q_lower * rate),
        calibrated_scan_threshold=math.log(gamma) / (2.0 * rate),
    )


@dataclass(frozen=True)
class BoundReport:
    """All bound machinery for one model and drift, ready to evaluate.

    ``surrogate`` records whether the step distribution came from tangent
    scores (curved statistics) rather than exact per-sample increments;
    surrogate bounds are reference lines, not guarantees.
    """

    drift: float
    q_lower: float
    lipschitz: float
    v_star: float
    surrogate: bool
    step: StepDistribution

    def arl_lower(self, scan_threshold: float) -> tuple[float, float]:
        return arl_lower_bound(self.v_star, self.drift, self.lipschitz, scan_threshold)

    def wadd_upper(self, scan_threshold: float) -> float:
        return 2.0 * scan_threshold / self.q_lower

    def gamma_bound(self, gamma: float) -> float:
        return wadd_bounds(
            self.q_lower,
            0.0,
            v_star=self.v_star,
            drift=self.drift,
            lipschitz=self.lipschitz,
            gamma=gamma,
        ).gamma_bound

    def calibrated_scan_threshold(self, gamma: float) -> float:
        """Smallest scan threshold whose ARL bound reaches gamma."""
        rate = self.v_star + 2.0 * self.drift / (self.lipschitz * self.lipschitz)
        return math.log(gamma) / rate


def bound_report(
    model: NetworkModel, drift: float, *, surrogate: bool | None = None, tol: float = 1e-10
) -> BoundReport:
    """Build the bound report for a model at a given drift.

    ``surrogate=None`` picks the exact step for all-mean models and the
    tangent surrogate otherwise; passing False forces an error on curved
    statistics instead.
    """
    if surrogate is None:
        surrogate = any(s.statistic.kind != "mean" for s in model.sensors)
    step = step_distribution(model, drift, surrogate=surrogate)
    v_star = log_mgf_root(step, tol=tol)
    return BoundReport(
        drift=float(drift),
        q_lower=float(model.min_floor - drift),
        lipschitz=float(model.total_lipschitz),
        v_star=v_star,
        surrogate=bool(surrogate),
        step=step,
    )
