"""Two-stage online change detector and baseline detectors.

Stage one is a windowed scan: at each time k the statistic

    S_k = max over l in [tau, k+1] of (k - l + 1) * (q(window empirical) - drift)

is compared against a scan threshold (the empty window l = k+1 contributes
0, so S_k >= 0 always). Stage two runs only at crossings: with n the length
of the smallest-l maximizing window, the joint window empirical is compared
against the most-likely-false-alarm distribution for that n by KL
divergence. A divergence below the confirmation threshold means the window
looks like a typical false alarm, so the alarm is suppressed and the
detector resets (tau jumps past the window and the state renews exactly).
Confirmed alarms also reset, so one detector can stream through multiple
events.

Time is 1-based: the first sample processed is k = 1, and a change point
t1 = 1 means every sample is post-change.

Confirmation thresholds follow a two-level schedule: windows no longer than
n_low confirm unconditionally (threshold 0), longer windows must clear a
fixed level derived from the drift and the network Lipschitz constant.
Short windows imply a large per-step statistic excess that is already
implausible under the pre-change law; long, slow crossings are where
false alarms concentrate and where the projection test discriminates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._engine import kernel_params, make_kernel
from .distributions import Pmf, kl_divergence
from .projection import STATUS_INFEASIBLE, ProjectionError, ProjectionTable, sensor_max
from .statistics import NetworkModel, Sensor

QUIET = "quiet"
ALARM_CONFIRMED = "alarm_confirmed"
ALARM_SUPPRESSED = "alarm_suppressed"


class ScheduleError(ValueError):
    """Raised for threshold parameters outside their admissible ranges."""


def _ceil_snapped(x: float) -> int:
    # ceil with protection against 16.000000000000002-style float dust
    return max(0, math.ceil(x - 1e-9))


@dataclass(frozen=True)
class ThresholdSchedule:
    """Scan threshold, drift, and the two-level confirmation rule.

    ``q_lower`` is min_j floor_j - drift, the guaranteed per-step drift of
    the scan statistic after a change hitting the weakest sensor alone.
    ``confirm_threshold(n)`` is 0 for n <= n_low and ``confirm_level``
    beyond.
    """

    scan_threshold: float
    drift: float
    rho: float
    n_low: int
    confirm_level: float
    q_lower: float
    lipschitz: float
    min_floor: float

    def __post_init__(self):
        if not (self.scan_threshold >= 0.0):
            raise ScheduleError(f"scan threshold must be >= 0, got {self.scan_threshold}")
        if not (self.drift > 0.0 and math.isfinite(self.drift)):
            raise ScheduleError(f"drift must be positive, got {self.drift}")
        if not 0.0 < self.rho < 1.0:
            raise ScheduleError(f"rho must be in (0, 1), got {self.rho}")

    @classmethod
    def from_model(
        cls,
        model: NetworkModel,
        scan_threshold: float,
        drift: float,
        rho: float = 0.2,
        *,
        confirm_level: float | None = None,
        n_low: int | None = None,
    ) -> "ThresholdSchedule":
        """Derive the full schedule from the model's floors and Lipschitz sum.

        ``confirm_level`` and ``n_low`` override the derived defaults (a zero
        confirm level makes the second stage vacuous; +inf suppresses every
        alarm). A warning is emitted when the confirmation level is below the
        empirical-distribution counting scale (m / N) * log(N + 1), where the
        suppression guarantee carries no weight.
        """
        min_floor = model.min_floor
        if not drift < 0.5 * min_floor:
            raise ScheduleError(
                f"drift {drift} must be below half the smallest statistic floor "
                f"({0.5 * min_floor})"
            )
        q_lower = min_floor - drift
        if not (1.0 + rho) / (1.0 - rho) <= q_lower / drift:
            raise ScheduleError(
                f"rho {rho} too large: (1+rho)/(1-rho) must not exceed "
                f"q_lower/drift = {q_lower / drift:.6g}"
            )
        L = model.total_lipschitz
        if confirm_level is None:
            ratio = (2.0 - rho) / (1.0 - rho)
            confirm_level = ratio * ratio * drift * drift / (2.0 * L * L)
        if n_low is None:
            n_low = _ceil_snapped((1.0 + rho) * scan_threshold / q_lower)
        schedule = cls(
            scan_threshold=float(scan_threshold),
            drift=float(drift),
            rho=float(rho),
            n_low=int(n_low),
            confirm_level=float(confirm_level),
            q_lower=float(q_lower),
            lipschitz=float(L),
            min_floor=float(min_floor),
        )
        big_n = (1.0 - rho) * scan_threshold / drift
        if big_n > 0.0:
            scale = (model.joint_size / big_n) * math.log(big_n + 1.0)
            if schedule.confirm_level <= scale:
                warnings.warn(
                    f"confirmation level {schedule.confirm_level:.3g} is at or below "
                    f"the empirical-distribution counting scale {scale:.3g}; "
                    "suppression is unlikely to filter false alarms at this "
                    "threshold and alphabet size",
                    RuntimeWarning,
                    stacklevel=2,
                )
        return schedule

    def confirm_threshold(self, n: int) -> float:
        return 0.0 if n <= self.n_low else self.confirm_level


@dataclass(frozen=True)
class DecisionEvent:
    """One detector step's outcome.

    ``window_len`` is the length of the maximizing window (0 when the empty
    window wins, possible only at scan threshold 0). ``divergence`` and
    ``confirm_threshold`` are populated at alarms only.
    """

    kind: str
    k: int
    scan_value: float
    window_len: int
    divergence: float | None = None
    confirm_threshold: float | None = None


@dataclass
class RunRecord:
    """Stopping data of one simulated trajectory.

    ``first_cross`` is the first scan crossing (confirmed or not),
    ``t_confirm`` the first confirmed alarm (None when censored). When
    segment collection is on, ``segments`` holds one (length, confirmed)
    pair per scan crossing; segment lengths count samples from the reset
    that opened the segment through its crossing.
    """

    trial: int | None = None
    seed: int | None = None
    t1: int | None = None
    first_cross: int | None = None
    t_confirm: int | None = None
    suppressions: int = 0
    steps: int = 0
    censored: bool = False
    segments: list[tuple[int, bool]] | None = None

    def delay(self) -> int | None:
        """(t_confirm - t1 + 1)+, or None when censored or no change."""
        if self.t_confirm is None or self.t1 is None:
            return None
        return max(0, self.t_confirm - self.t1 + 1)


class Detector:
    """Streaming two-stage detector over one sample sequence.

    A projection ``table`` is required to score alarms with nonempty
    windows; it must have been built for this model with the schedule's
    scan threshold and drift. Many detectors may share one table and
    schedule (both are immutable); a detector itself is single-threaded.
    """

    def __init__(
        self,
        model: NetworkModel,
        schedule: ThresholdSchedule,
        table: ProjectionTable | None = None,
        *,
        capacity: int = 1024,
        window_cap: int = 0,
        engine: str | None = None,
    ):
        if table is not None:
            if abs(table.scan_threshold - schedule.scan_threshold) > 1e-9:
                raise ValueError(
                    f"table scan threshold {table.scan_threshold} does not match "
                    f"the schedule's {schedule.scan_threshold}"
                )
            if abs(table.drift - schedule.drift) > 1e-9:
                raise ValueError(
                    f"table drift {table.drift} does not match the schedule's "
                    f"{schedule.drift}"
                )
            if table.fingerprint != model.fingerprint():
                raise ValueError("table was built for a different model")
        if window_cap:
            warnings.warn(
                "window_cap discards scan candidates older than the cap; "
                "the scan statistic is no longer the full-window maximum",
                RuntimeWarning,
                stacklevel=2,
            )
        self.model = model
        self.schedule = schedule
        self.table = table
        self.kernel = make_kernel(
            model, schedule.drift, capacity=capacity, window_cap=window_cap, engine=engine
        )
        self._samples = np.zeros((capacity, model.n_sensors), dtype=np.int32)
        self._log_f0 = [np.log(s.f0.probs) for s in model.sensors]
        self.k = 0
        self.tau = 1
        self.suppressions = 0

    @property
    def window_len(self) -> int:
        return self.kernel.r

    def _ensure(self, extra: int) -> None:
        need = self.kernel.r + extra
        if need > self.kernel.capacity:
            new_cap = max(need, 2 * self.kernel.capacity)
            self.kernel.grow(new_cap)
            buf = np.zeros((new_cap, self.model.n_sensors), dtype=np.int32)
            buf[: self.kernel.r] = self._samples[: self.kernel.r]
            self._samples = buf

    def _entry_log_factors(self, n: int):
        entry = self.table.lookup(n) if self.table is not None else None
        if entry is None:
            raise ValueError(
                "alarm with a nonempty window needs a projection table; "
                "build one with a matching scan threshold and drift"
            )
        if entry.status == STATUS_INFEASIBLE:
            # a crossing window of length n is itself a feasible point for
            # the length-n target, so this cannot happen with a consistent
            # table
            raise AssertionError(
                f"scan crossing produced window length {n} whose projection "
                "target is infeasible; table and schedule are inconsistent"
            )
        with np.errstate(divide="ignore"):
            return [np.log(f.probs) for f in entry.factors]

    def _divergence(self, n: int) -> float:
        """KL of the alarm window's joint empirical from the table entry."""
        if n == 0:
            return 0.0
        log_factors = self._entry_log_factors(n)
        rows = self._samples[self.kernel.r - n : self.kernel.r]
        tuples, counts = np.unique(rows, axis=0, return_counts=True)
        total = 0.0
        inv = 1.0 / n
        for row, count in zip(tuples, counts):
            p = count * inv
            log_star = 0.0
            for j, sym in enumerate(row):
                log_star += log_factors[j][sym]
            if log_star == -math.inf:
                return math.inf
            total += p * (math.log(p) - log_star)
        return max(0.0, total)

    def _decide(self, scan_value: float, n: int) -> DecisionEvent:
        divergence = self._divergence(n)
        threshold = self.schedule.confirm_threshold(n)
        confirmed = divergence >= threshold
        self.tau = self.k + 1
        self.kernel.reset()
        if not confirmed:
            self.suppressions += 1
        return DecisionEvent(
            kind=ALARM_CONFIRMED if confirmed else ALARM_SUPPRESSED,
            k=self.k,
            scan_value=scan_value,
            window_len=n,
            divergence=divergence,
            confirm_threshold=threshold,
        )

    def step(self, x) -> DecisionEvent:
        """Process one joint sample (a JointSample or a length-J int sequence)."""
        symbols = getattr(x, "symbols", x)
        row = np.asarray(symbols, dtype=np.int32)
        self._ensure(1)
        self._samples[self.kernel.r] = row
        scan_value, _, n = self.kernel.step(row)
        self.k += 1
        if scan_value < self.schedule.scan_threshold:
            return DecisionEvent(kind=QUIET, k=self.k, scan_value=scan_value, window_len=n)
        return self._decide(scan_value, n)

    def run(
        self,
        chunks,
        *,
        max_steps: int | None = None,
        collect_segments: bool = False,
        trial: int | None = None,
        seed: int | None = None,
        t1: int | None = None,
    ) -> RunRecord:
        """Consume sample chunks until the first confirmed alarm.

        ``chunks`` is a (T, J) int array or an iterable of such arrays;
        exhausting it, or reaching ``max_steps``, censors the run. The
        detector must be fresh (k = 0).
        """
        if self.k != 0:
            raise RuntimeError("run() needs a freshly constructed detector")
        if isinstance(chunks, np.ndarray):
            chunks = (chunks,)
        threshold = self.schedule.scan_threshold
        first_cross = None
        suppressions = 0
        segments: list[tuple[int, bool]] | None = [] if collect_segments else None

        def record(t_confirm, censored):
            return RunRecord(
                trial=trial,
                seed=seed,
                t1=t1,
                first_cross=first_cross,
                t_confirm=t_confirm,
                suppressions=suppressions,
                steps=self.k,
                censored=censored,
                segments=segments,
            )

        for chunk in chunks:
            chunk = np.ascontiguousarray(chunk, dtype=np.int32)
            pos = 0
            while pos < len(chunk):
                avail = len(chunk) - pos
                if max_steps is not None:
                    if self.k >= max_steps:
                        return record(None, True)
                    avail = min(avail, max_steps - self.k)
                self._ensure(avail)
                row0 = self.kernel.r
                status, used, scan_value, _ = self.kernel.run(
                    chunk[pos : pos + avail], threshold
                )
                self._samples[row0 : row0 + used] = chunk[pos : pos + used]
                self.k += used
                pos += used
                if status != 1:
                    continue
                if first_cross is None:
                    first_cross = self.k
                n = self.kernel.last_n
                segment_len = self.kernel.r
                event = self._decide(scan_value, n)
                if segments is not None:
                    segments.append((segment_len, event.kind == ALARM_CONFIRMED))
                if event.kind == ALARM_CONFIRMED:
                    return record(self.k, False)
                suppressions += 1
            if max_steps is not None and self.k >= max_steps:
                return record(None, True)
        return record(None, True)


def scan_reference(model: NetworkModel, drift: float, X, *, arithmetic: str = "canonical"):
    """Definitional scan over a whole stream, no pruning, for verification.

    Evaluates every candidate window at every step and returns (S, n)
    arrays. ``arithmetic='canonical'`` uses the same prefix-sum expressions
    as the kernels, so agreement must be exact to the last bit;
    ``arithmetic='pmf'`` recomputes q through each statistic's pmf interface
    with independent formulas (float agreement only). Quadratic in the
    stream length.
    """
    X = np.ascontiguousarray(X, dtype=np.int32)
    T = X.shape[0]
    S = np.zeros(T)
    n_out = np.zeros(T, dtype=np.int64)
    if arithmetic == "canonical":
        params = kernel_params(model, drift)
        if params is None:
            raise ValueError("canonical arithmetic needs mean or variance statistics")
        kinds, chan0 = params["kinds"], params["chan0"]
        vt, cst = params["vt"], params["cst"]
        n_chan = vt.shape[0]
        P = np.zeros((T + 1, n_chan))
        for i in range(T):
            for j in range(model.n_sensors):
                c = chan0[j]
                sym = X[i, j]
                P[i + 1, c] = P[i, c] + vt[c, sym]
                if kinds[j] == 1:
                    P[i + 1, c + 1] = P[i, c + 1] + vt[c + 1, sym]
        for k in range(1, T + 1):
            best = -math.inf
            best_u = k
            for u in range(k + 1):
                if u == k:
                    W = 0.0
                else:
                    n_f = float(k - u)
                    W = -n_f * drift
                    for j in range(model.n_sensors):
                        c = chan0[j]
                        if kinds[j] == 0:
                            term = (P[k, c] - P[u, c]) - n_f * cst[j]
                        else:
                            A = P[k, c] - P[u, c]
                            B = P[k, c + 1] - P[u, c + 1]
                            term = B - A * A / n_f - n_f * cst[j]
                        W = W + term
                if W > best:
                    best = W
                    best_u = u
            S[k - 1] = best
            n_out[k - 1] = k - best_u
    elif arithmetic == "pmf":
        offsets = np.concatenate([[0], np.cumsum(model.sizes)])
        C = np.zeros((T + 1, offsets[-1]), dtype=np.int64)
        for i in range(T):
            C[i + 1] = C[i]
            for j in range(model.n_sensors):
                C[i + 1, offsets[j] + X[i, j]] += 1
        for k in range(1, T + 1):
            best = -math.inf
            best_u = k
            for u in range(k + 1):
                if u == k:
                    W = 0.0
                else:
                    n = k - u
                    marginals = [
                        Pmf(s.alphabet, (C[k, offsets[j] : offsets[j + 1]] - C[u, offsets[j] : offsets[j + 1]]) / n)
                        for j, s in enumerate(model.sensors)
                    ]
                    W = n * (model.global_eval(marginals) - drift)
                if W > best:
                    best = W
                    best_u = u
            S[k - 1] = best
            n_out[k - 1] = k - best_u
    else:
        raise ValueError(f"unknown arithmetic {arithmetic!r}")
    return S, n_out


class SumScan:
    """Baseline: per-sensor scans maximized separately, values summed.

    Each sensor runs its own windowed scan of (k - l + 1) * q_j with no
    drift term; the network value is the sum of the per-sensor maxima,
    each over its own window start. No confirmation stage.
    """

    def __init__(self, model: NetworkModel, *, capacity: int = 1024, engine: str | None = None):
        self.model = model
        self.kernels = [
            make_kernel(NetworkModel([s]), 0.0, capacity=capacity, engine=engine)
            for s in model.sensors
        ]

    def step(self, x) -> float:
        symbols = getattr(x, "symbols", x)
        total = 0.0
        for j, kernel in enumerate(self.kernels):
            if kernel.r >= kernel.capacity:
                kernel.grow(2 * kernel.capacity)
            value, _, _ = kernel.step(np.asarray([symbols[j]], dtype=np.int32))
            total += value
        return total


def _superlevel_anchor(sensor: Sensor) -> np.ndarray:
    """A pmf at (or near) the maximum of the sensor statistic, used to seed
    inner GLRT solves."""
    stat = sensor.statistic
    m = sensor.alphabet.size
    if stat.kind == "mean":
        scores = stat.params["scores"]
        probs = np.where(scores >= scores.max(), 1.0, 0.0)
        return probs / probs.sum()
    if stat.kind == "variance":
        a = stat.params["values"]
        probs = np.zeros(m)
        probs[int(np.argmin(a))] = 0.5
        probs[int(np.argmax(a))] = 0.5
        return probs
    return np.full(m, 1.0 / m)


def min_kl_to_superlevel(sensor: Sensor, f_hat: Pmf, *, tol: float = 1e-9) -> float:
    """inf I(f_hat || g) over pmfs g with q_j(g) >= the sensor's floor.

    Zero when f_hat is itself in the superlevel set. Convex in g, solved
    with SLSQP from blends of f_hat toward the statistic's maximizer.
    """
    from scipy.optimize import minimize

    stat = sensor.statistic
    floor = stat.floor
    if floor is None:
        raise ValueError(f"statistic {stat.name!r} has no floor")
    if stat(f_hat) >= floor:
        return 0.0
    top = sensor_max(stat, sensor.alphabet)
    if floor > top + 1e-12:
        raise ValueError(
            f"floor {floor} exceeds the statistic's maximum {top:.6g}; "
            "the post-change set is empty"
        )
    m = sensor.alphabet.size
    p = f_hat.probs
    support = p > 0.0

    def objective(x):
        x = np.clip(x, 1e-300, None)
        return float(np.sum(p[support] * (np.log(p[support]) - np.log(x[support]))))

    def objective_grad(x):
        x = np.clip(x, 1e-300, None)
        g = np.zeros(m)
        g[support] = -p[support] / x[support]
        return g

    cons = [
        {"type": "eq", "fun": lambda x: x.sum() - 1.0, "jac": lambda x: np.ones(m)},
        {
            "type": "ineq",
            "fun": lambda x: stat(Pmf(sensor.alphabet, np.clip(x, 0.0, None) / np.clip(x, 0.0, None).sum())) - floor,
            "jac": lambda x: stat.gradient(Pmf(sensor.alphabet, np.clip(x, 0.0, None) / np.clip(x, 0.0, None).sum())),
        },
    ]
    anchor = _superlevel_anchor(sensor)
    best = math.inf
    for alpha in (0.9, 0.7, 0.5, 0.3, 0.1):
        x0 = (1.0 - alpha) * p + alpha * anchor
        with warnings.catch_warnings():
            # the callbacks clip before evaluating, so SLSQP's own interior
            # clipping notice carries no information here
            warnings.filterwarnings("ignore", message="Values in x were outside bounds")
            res = minimize(
                objective,
                np.clip(x0, 1e-9, None),
                jac=objective_grad,
                bounds=[(1e-12, 1.0)] * m,
                constraints=cons,
                method="SLSQP",
                options={"maxiter": 400, "ftol": 1e-12},
            )
        x = np.clip(res.x, 0.0, None)
        s = x.sum()
        if not np.isfinite(s) or s <= 0.0:
            continue
        x = x / s
        if stat(Pmf(sensor.alphabet, x)) < floor - 1e-7:
            continue
        best = min(best, objective(x))
    if not math.isfinite(best):
        raise ProjectionError(
            f"inner GLRT solve failed for statistic {stat.name!r} at floor {floor}"
        )
    return max(0.0, best)


def glrt_statistic(model: NetworkModel, marginals, n: int) -> float:
    """Generalized likelihood ratio against per-sensor superlevel
    alternatives.

    Per sensor: n * (I(f_hat || f0) - inf over the alternative set), clipped
    at zero; the clipping realizes the maximum over affected-sensor subsets.
    Desk-scale baseline: every call runs J inner solves.
    """
    if len(marginals) != model.n_sensors:
        raise ValueError(f"got {len(marginals)} marginals for {model.n_sensors} sensors")
    total = 0.0
    for sensor, f_hat in zip(model.sensors, marginals):
        base = kl_divergence(f_hat, sensor.f0)
        inner = min_kl_to_superlevel(sensor, f_hat)
        total += n * max(0.0, base - inner)
    return total
