"""Information projection onto a statistic's superlevel set.

The projection problem: given the network's pre-change product distribution
f0 = prod_j f_j0 and a target eta, find

    f* = argmin I(f || f0)   subject to   q(f) >= eta,

where q is the network statistic (sum of concave per-sensor statistics of
the marginals). The constraint depends on f only through its marginals and
dropping cross-sensor correlation can only lower the KL term, so the
minimizer is a product distribution and the problem splits into per-sensor
factors coupled by a single scalar multiplier.

Stationarity pins each factor to a log-linear tilt of its pre-change pmf,

    f_j(a)  proportional to  f_j0(a) * exp(lam * g_j(a)),    g_j = grad q_j(f_j),

which is exact in one step for mean statistics (g_j constant) and is a fixed
point for curved statistics (variance, custom). The solver runs an outer
bisection on lam (q along the tilt path is nondecreasing: the tilt minimizes
the convex functional I - lam*q) with a damped fixed-point inner loop.

The gradient of a statistic on the simplex is defined up to an additive
constant; the tilt normalizes any such constant away, so projections do not
depend on the representative (tested).

Degenerate targets: eta <= 0 is satisfied by f0 itself; eta above the
maximum achievable q is infeasible; eta at exactly the achievable maximum is
attained only on a face of the simplex ("boundary" status, factors may
contain zeros, KL stays finite because f0 is strictly positive).
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .distributions import Pmf, kl_divergence
from .statistics import NetworkModel

TABLE_FORMAT = "nipt-projection-table"
TABLE_VERSION = 1

STATUS_SOLVED = "solved"
STATUS_REFERENCE = "reference-feasible"
STATUS_INFEASIBLE = "infeasible"
STATUS_BOUNDARY = "boundary"


class ProjectionError(RuntimeError):
    """Raised when a projection solve fails to converge or is ill-posed."""


@dataclass
class ProjectionResult:
    """Outcome of one projection solve.

    ``factors`` are the per-sensor marginals of the minimizer (None when
    infeasible), ``kl_value`` is I(f* || f0) = sum of per-sensor divergences,
    ``lam`` is the dual multiplier (None for boundary solutions where it
    diverges), ``achieved_q`` the network statistic at the solution, and
    ``residual`` the l1 fixed-point residual of the stationarity map.
    """

    status: str
    eta: float
    factors: list[Pmf] | None = None
    kl_value: float | None = None
    lam: float | None = None
    achieved_q: float | None = None
    residual: float = 0.0
    iterations: int = 0
    joint: np.ndarray | None = field(default=None, repr=False)


def sensor_max(statistic, alphabet) -> float:
    """Maximum of one local statistic over the simplex.

    Mean statistics peak at point masses on the argmax score; variance peaks
    at the half/half mixture of the extreme symbol values (for any pmf,
    Var <= E(X - c)^2 <= (span/2)^2 with c the midrange, attained there).
    Custom statistics fall back to Frank-Wolfe with a duality-gap stop.
    """
    if statistic.kind == "mean":
        return float(statistic.params["scores"].max() - statistic.params["center"])
    if statistic.kind == "variance":
        a = statistic.params["values"]
        span = float(a.max() - a.min())
        return span * span / 4.0 - float(statistic.params["offset"])
    return _frank_wolfe_max(statistic, alphabet)


def _frank_wolfe_max(statistic, alphabet, gap_tol: float = 1e-10, max_iter: int = 2000) -> float:
    m = alphabet.size
    f = np.full(m, 1.0 / m)
    for it in range(max_iter):
        g = statistic.gradient(Pmf(alphabet, f))
        a_star = int(np.argmax(g))
        gap = float(g[a_star] - np.dot(g, f))
        if gap <= gap_tol:
            break
        direction = -f.copy()
        direction[a_star] += 1.0
        # concave along the segment, so a short golden-section search suffices
        t = _golden_max(lambda t: statistic(Pmf(alphabet, f + t * direction)), 0.0, 1.0)
        if t <= 0.0:
            t = 2.0 / (it + 2.0)
        f = f + t * direction
        f = np.clip(f, 0.0, None)
        f /= f.sum()
    # Frank-Wolfe zigzags at O(1/k) near mixtures of vertices, so polish the
    # warm start with an active-set step to land the last few digits
    return _simplex_polish_max(statistic, alphabet, f)


def _simplex_polish_max(statistic, alphabet, f: np.ndarray) -> float:
    from scipy.optimize import minimize

    m = alphabet.size

    def negated(x):
        x = np.clip(x, 0.0, None)
        return -float(statistic(Pmf(alphabet, _renorm(x))))

    with warnings.catch_warnings():
        # SLSQP reports its own interior clipping; negated() already clips
        warnings.filterwarnings("ignore", message="Values in x were outside bounds")
        res = minimize(
            negated,
            f,
            bounds=[(0.0, 1.0)] * m,
            constraints=[{"type": "eq", "fun": lambda x: x.sum() - 1.0}],
            method="SLSQP",
            options={"maxiter": 200, "ftol": 1e-14},
        )
    best = float(statistic(Pmf(alphabet, f)))
    if res.success or np.isfinite(res.fun):
        x = np.clip(res.x, 0.0, None)
        if x.sum() > 0.0:
            best = max(best, float(statistic(Pmf(alphabet, _renorm(x)))))
    return best


def _golden_max(fun, lo: float, hi: float, iters: int = 60) -> float:
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fun(d)
    return (a + b) / 2.0


def max_achievable_q(model: NetworkModel) -> float:
    """Maximum of the network statistic over product distributions.

    The statistic splits over sensors, so the joint maximum is the sum of
    per-sensor maxima (and no correlated distribution can beat it, because q
    only sees marginals).
    """
    return float(sum(sensor_max(s.statistic, s.alphabet) for s in model.sensors))


def _tilt(log_f0: np.ndarray, lam: float, scores: np.ndarray) -> np.ndarray:
    logw = log_f0 + lam * scores
    logw -= logw.max()
    w = np.exp(logw)
    return w / w.sum()


def _solve_factor(sensor, lam: float, eps: float, warm: np.ndarray | None, fp_cap: int):
    """Per-sensor stationarity solve at a fixed multiplier.

    Returns (probs, iterations, l1 residual of the stationarity map).
    """
    stat = sensor.statistic
    log_f0 = np.log(sensor.f0.probs)
    if stat.kind == "mean":
        return _tilt(log_f0, lam, stat.params["scores"]), 1, 0.0
    tol = eps / 10.0
    if stat.kind == "variance":
        return _solve_variance_factor(stat, log_f0, lam, tol)
    f = warm if warm is not None else sensor.f0.probs.copy()
    grad_at = lambda f: stat.gradient(Pmf(sensor.alphabet, f))
    # naive averaging can two-cycle when the tilt amplifies gradient change,
    # so shrink the mixing weight whenever the map residual stops contracting
    beta = 0.5
    prev = math.inf
    for it in range(1, fp_cap + 1):
        target = _tilt(log_f0, lam, grad_at(f))
        gap = float(np.abs(target - f).sum())
        if gap <= tol:
            return f, it, gap
        if gap > 0.9 * prev:
            beta = max(beta * 0.5, 1.0 / 1024.0)
        prev = gap
        f = (1.0 - beta) * f + beta * target
    raise ProjectionError(
        f"fixed point for sensor statistic {stat.name!r} did not converge "
        f"(lam = {lam:.6g}, residual {gap:.3e} > {tol:.3e} after {fp_cap} iterations)"
    )


def _solve_variance_factor(stat, log_f0: np.ndarray, lam: float, tol: float):
    """Stationary tilt for the variance statistic via its mean.

    At a fixed multiplier the stationary pmf has the form
    tilt(lam * (a^2 - 2 m a)) with m equal to its own mean. The map from m
    to that tilt's mean is strictly decreasing (slope -2 lam Var < 0), so
    the self-consistent mean is the unique root and bisection cannot miss
    it, unlike vector fixed-point iteration, which is unstable in the mean
    direction once 2 lam Var exceeds one.
    """
    a = stat.params["values"]
    a_sq = a * a

    def mean_at(m: float) -> float:
        return float(np.dot(_tilt(log_f0, lam, a_sq - 2.0 * m * a), a))

    lo = float(a.min())
    hi = float(a.max())
    iters = 0
    for _ in range(200):
        iters += 1
        mid = 0.5 * (lo + hi)
        if mean_at(mid) >= mid:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(lo) + abs(hi)):
            break
    m = 0.5 * (lo + hi)
    f = _tilt(log_f0, lam, a_sq - 2.0 * m * a)
    gap = abs(float(np.dot(f, a)) - m)
    # two tilts whose exponents differ by 2 lam gap a are within this much in l1
    residual = min(2.0 * abs(lam) * float(np.abs(a).max()) * gap, 2.0)
    if residual > tol:
        raise ProjectionError(
            f"stationary mean for {stat.name!r} did not settle "
            f"(lam = {lam:.6g}, residual {residual:.3e} > {tol:.3e})"
        )
    return f, iters, residual


def _eval_lambda(model: NetworkModel, lam: float, eps: float, warm, fp_cap: int):
    factors = []
    total_q = 0.0
    iters = 0
    residual = 0.0
    for j, sensor in enumerate(model.sensors):
        probs, it, res = _solve_factor(sensor, lam, eps, warm[j] if warm else None, fp_cap)
        factors.append(probs)
        pmf = Pmf(sensor.alphabet, probs)
        total_q += sensor.statistic(pmf)
        iters += it
        residual += res
    return total_q, factors, iters, residual


def _boundary_solution(model: NetworkModel, eta: float) -> ProjectionResult:
    """Closed-form solution when the target equals the achievable maximum."""
    factors = []
    for sensor in model.sensors:
        stat = sensor.statistic
        if stat.kind == "mean":
            scores = stat.params["scores"]
            mask = scores >= scores.max()
            probs = np.where(mask, sensor.f0.probs, 0.0)
            probs = probs / probs.sum()
        elif stat.kind == "variance":
            a = stat.params["values"]
            probs = np.zeros(sensor.alphabet.size)
            probs[int(np.argmin(a))] = 0.5
            probs[int(np.argmax(a))] = 0.5
        else:
            raise ProjectionError(
                "target equals the achievable maximum and the statistic "
                f"{stat.name!r} has no closed-form maximizer"
            )
        factors.append(Pmf(sensor.alphabet, probs))
    kl = sum(kl_divergence(f, s.f0) for f, s in zip(factors, model.sensors))
    q = model.global_eval(factors)
    return ProjectionResult(
        status=STATUS_BOUNDARY,
        eta=eta,
        factors=factors,
        kl_value=float(kl),
        lam=None,
        achieved_q=float(q),
    )


def project(
    model: NetworkModel,
    eta: float,
    tol: float = 1e-6,
    *,
    fp_cap: int = 1000,
    max_bisect: int = 200,
) -> ProjectionResult:
    """Project f0 onto {q >= eta}; see the module docstring for the method.

    The solved status guarantees q(f*) within ``tol * L`` of eta (L the
    network Lipschitz constant) and a stationarity residual at most ``tol``.
    """
    if not np.isfinite(eta):
        raise ValueError(f"eta must be finite, got {eta}")
    if eta <= 0.0:
        factors = [s.f0 for s in model.sensors]
        return ProjectionResult(
            status=STATUS_REFERENCE,
            eta=eta,
            factors=factors,
            kl_value=0.0,
            lam=0.0,
            achieved_q=0.0,
        )
    q_max = max_achievable_q(model)
    if eta > q_max:
        return ProjectionResult(status=STATUS_INFEASIBLE, eta=eta)
    if eta >= q_max - 1e-12 * max(1.0, abs(q_max)):
        return _boundary_solution(model, eta)

    band = tol * model.total_lipschitz
    warm = None
    lo, q_lo = 0.0, 0.0
    hi = 1.0
    total_iters = 0
    for _ in range(70):
        q_hi, factors, iters, residual = _eval_lambda(model, hi, tol, warm, fp_cap)
        total_iters += iters
        warm = factors
        if q_hi >= eta:
            break
        lo, q_lo = hi, q_hi
        hi *= 2.0
    else:
        # the target hugs the achievable maximum; fall back to the boundary
        return _boundary_solution(model, eta)

    best = (hi, q_hi, factors, residual)
    for _ in range(max_bisect):
        if abs(best[1] - eta) <= band:
            break
        mid = 0.5 * (lo + hi)
        q_mid, factors, iters, residual = _eval_lambda(model, mid, tol, warm, fp_cap)
        total_iters += iters
        warm = factors
        if q_mid >= eta:
            hi = mid
            best = (mid, q_mid, factors, residual)
        else:
            lo = mid
            if abs(q_mid - eta) <= band:
                best = (mid, q_mid, factors, residual)
                break
    else:
        raise ProjectionError(
            f"bisection did not reach the target band (eta = {eta:.6g}, "
            f"best q = {best[1]:.6g}, band = {band:.3e})"
        )

    lam, q_val, factors, residual = best
    pmfs = [Pmf(s.alphabet, f) for s, f in zip(model.sensors, factors)]
    kl = sum(kl_divergence(f, s.f0) for f, s in zip(pmfs, model.sensors))
    status = STATUS_SOLVED
    if any(not f.is_strictly_positive for f in pmfs):
        # exp underflow at an extreme multiplier: effectively a boundary point
        status = STATUS_BOUNDARY
    return ProjectionResult(
        status=status,
        eta=eta,
        factors=pmfs,
        kl_value=float(kl),
        lam=float(lam),
        achieved_q=float(q_val),
        residual=float(residual),
        iterations=total_iters,
    )


class ProjectionTable:
    """Projections indexed by window length n, target eta(n) = c/n + drift.

    Entries for small n are infeasible (the target exceeds the achievable
    maximum); the detector can never consult them, because a window that
    crossed the scan threshold is itself a feasible point for its own n.
    KL values are non-increasing in n (targets shrink); that is an invariant
    of the construction, not re-checked at lookup time.
    """

    def __init__(
        self,
        scan_threshold: float,
        drift: float,
        n_max: int,
        eps: float,
        entries: dict[int, ProjectionResult],
        fingerprint: str,
    ):
        self.scan_threshold = scan_threshold
        self.drift = drift
        self.n_max = n_max
        self.eps = eps
        self.entries = entries
        self.fingerprint = fingerprint

    def eta(self, n: int) -> float:
        return self.scan_threshold / n + self.drift

    def lookup(self, n: int) -> ProjectionResult:
        if not 1 <= n <= self.n_max:
            raise KeyError(
                f"window length {n} outside table range [1, {self.n_max}]; "
                "rebuild the table with a larger n_max"
            )
        return self.entries[n]

    def first_feasible_n(self) -> int | None:
        for n in range(1, self.n_max + 1):
            if self.entries[n].status != STATUS_INFEASIBLE:
                return n
        return None

    def save(self, path) -> None:
        path = Path(path)
        with path.open("w") as fh:
            header = {
                "format": TABLE_FORMAT,
                "version": TABLE_VERSION,
                "scan_threshold": self.scan_threshold,
                "drift": self.drift,
                "n_max": self.n_max,
                "eps": self.eps,
                "fingerprint": self.fingerprint,
            }
            fh.write(json.dumps(header) + "\n")
            for n in range(1, self.n_max + 1):
                r = self.entries[n]
                rec = {
                    "n": n,
                    "status": r.status,
                    "lam": r.lam,
                    "kl": r.kl_value,
                    "q": r.achieved_q,
                    "factors": None
                    if r.factors is None
                    else [[float(p) for p in f.probs] for f in r.factors],
                }
                fh.write(json.dumps(rec) + "\n")

    @classmethod
    def load(cls, path, model: NetworkModel | None = None) -> "ProjectionTable":
        path = Path(path)
        with path.open() as fh:
            header = json.loads(fh.readline())
            if header.get("format") != TABLE_FORMAT:
                raise ValueError(f"{path} is not a projection table file")
            if header.get("version") != TABLE_VERSION:
                raise ValueError(
                    f"unsupported table version {header.get('version')} "
                    f"(reader supports {TABLE_VERSION})"
                )
            if model is not None and header["fingerprint"] != model.fingerprint():
                raise ValueError(
                    "table was built for a different model "
                    f"(fingerprint {header['fingerprint']} != {model.fingerprint()})"
                )
            entries: dict[int, ProjectionResult] = {}
            alphabets = None if model is None else model.alphabets
            for line in fh:
                rec = json.loads(line)
                factors = None
                if rec["factors"] is not None:
                    if alphabets is None:
                        raise ValueError("loading factor pmfs requires the model")
                    factors = [
                        Pmf(alphabets[j], np.asarray(probs))
                        for j, probs in enumerate(rec["factors"])
                    ]
                entries[rec["n"]] = ProjectionResult(
                    status=rec["status"],
                    eta=header["scan_threshold"] / rec["n"] + header["drift"],
                    factors=factors,
                    kl_value=rec["kl"],
                    lam=rec["lam"],
                    achieved_q=rec["q"],
                )
        return cls(
            scan_threshold=header["scan_threshold"],
            drift=header["drift"],
            n_max=header["n_max"],
            eps=header["eps"],
            entries=entries,
            fingerprint=header["fingerprint"],
        )


def _build_entry(args):
    model, scan_threshold, drift, n, eps = args
    return n, project(model, scan_threshold / n + drift, tol=eps)


def build_table(
    model: NetworkModel,
    scan_threshold: float,
    drift: float,
    n_max: int,
    eps: float = 1e-6,
    workers: int = 1,
) -> ProjectionTable:
    """Solve the projection for every window length 1..n_max.

    Solves are independent (no warm starting across n), so the result is
    identical for any worker count; workers > 1 fans them out over
    processes.
    """
    if scan_threshold < 0.0:
        raise ValueError(f"scan threshold must be >= 0, got {scan_threshold}")
    if drift <= 0.0:
        raise ValueError(f"drift must be positive, got {drift}")
    if n_max < 1:
        raise ValueError(f"n_max must be at least 1, got {n_max}")
    jobs = [(model, scan_threshold, drift, n, eps) for n in range(1, n_max + 1)]
    entries: dict[int, ProjectionResult] = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for n, result in pool.map(_build_entry, jobs, chunksize=64):
                entries[n] = result
    else:
        for job in jobs:
            n, result = _build_entry(job)
            entries[n] = result
    return ProjectionTable(
        scan_threshold=scan_threshold,
        drift=drift,
        n_max=n_max,
        eps=eps,
        entries=entries,
        fingerprint=model.fingerprint(),
    )


# ----------------------------------------------------------------------------
# brute-force oracle (tests only)


def _dense_joint(model: NetworkModel):
    f0 = np.ones(1)
    for s in model.sensors:
        f0 = np.outer(f0, s.f0.probs).ravel()
    shape = model.sizes
    return f0, shape


def _renorm(v: np.ndarray) -> np.ndarray:
    return v / v.sum()


def _joint_q(model: NetworkModel, flat: np.ndarray, shape) -> float:
    # SLSQP evaluates mid-iteration points whose mass is only approximately
    # one, so normalize before handing marginals to the strict Pmf check
    cube = flat.reshape(shape) / flat.sum()
    total = 0.0
    for j, s in enumerate(model.sensors):
        axes = tuple(ax for ax in range(len(shape)) if ax != j)
        total += s.statistic(Pmf(s.alphabet, _renorm(cube.sum(axis=axes))))
    return total


def _joint_q_grad(model: NetworkModel, flat: np.ndarray, shape) -> np.ndarray:
    cube = flat.reshape(shape) / flat.sum()
    grad = np.zeros(shape)
    for j, s in enumerate(model.sensors):
        axes = tuple(ax for ax in range(len(shape)) if ax != j)
        marg = Pmf(s.alphabet, _renorm(cube.sum(axis=axes)))
        g = s.statistic.gradient(marg)
        expand = [1] * len(shape)
        expand[j] = shape[j]
        grad = grad + g.reshape(expand)
    return grad.ravel()


def brute_force_project(
    model: NetworkModel,
    eta: float,
    *,
    resolution: float | None = None,
    starts: int = 64,
    seed: int = 0,
) -> ProjectionResult:
    """Independent minimizer over the joint simplex, for verification only.

    Joint dimension two or three with a ``resolution`` uses exhaustive grid
    enumeration; anything else uses SLSQP from ``starts`` random interior
    points (the problem is convex, multi-start is just insurance). Returns
    the joint minimizer (``joint`` field) along with its marginals as
    factors.
    """
    f0_flat, shape = _dense_joint(model)
    m = f0_flat.size
    if resolution is not None and m <= 3:
        joint = _grid_minimize(model, f0_flat, shape, eta, resolution)
    else:
        joint = _slsqp_minimize(model, f0_flat, shape, eta, starts, seed)
    if joint is None:
        return ProjectionResult(status=STATUS_INFEASIBLE, eta=eta)
    cube = joint.reshape(shape)
    factors = []
    for j, s in enumerate(model.sensors):
        axes = tuple(ax for ax in range(len(shape)) if ax != j)
        marg = cube.sum(axis=axes)
        marg = np.clip(marg, 0.0, None)
        factors.append(Pmf(s.alphabet, marg / marg.sum()))
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(joint > 0.0, joint * np.log(joint / f0_flat), 0.0)
    return ProjectionResult(
        status=STATUS_SOLVED,
        eta=eta,
        factors=factors,
        kl_value=float(terms.sum()),
        achieved_q=float(_joint_q(model, joint, shape)),
        joint=joint,
    )


def _grid_minimize(model, f0_flat, shape, eta, resolution):
    m = f0_flat.size
    steps = int(round(1.0 / resolution))
    if m == 2:
        p = np.arange(steps + 1, dtype=np.float64) / steps
        grid = np.stack([p, 1.0 - p], axis=1)
    elif m == 3:
        i, j = np.meshgrid(np.arange(steps + 1), np.arange(steps + 1), indexing="ij")
        keep = (i + j) <= steps
        i, j = i[keep], j[keep]
        grid = np.stack([i, j, steps - i - j], axis=1).astype(np.float64) / steps
    else:
        raise ValueError("grid enumeration supports joint dimension 2 or 3 only")
    with np.errstate(divide="ignore", invalid="ignore"):
        kl = np.where(grid > 0.0, grid * np.log(grid / f0_flat), 0.0).sum(axis=1)
    # q is evaluated per grid point through the model statistics; vectorize
    # the two built-in kinds by hand, fall back to a loop otherwise
    qs = np.zeros(len(grid))
    if len(shape) == 1:
        stat = model.sensors[0].statistic
        if stat.kind == "mean":
            qs = grid @ stat.params["scores"] - stat.params["center"]
        elif stat.kind == "variance":
            a = stat.params["values"]
            mu = grid @ a
            qs = grid @ (a * a) - mu * mu - stat.params["offset"]
        else:
            for i, g in enumerate(grid):
                qs[i] = stat(Pmf(model.sensors[0].alphabet, g))
    else:
        for i, g in enumerate(grid):
            qs[i] = _joint_q(model, g, shape)
    feasible = qs >= eta
    if not feasible.any():
        return None
    kl = np.where(feasible, kl, np.inf)
    return grid[int(np.argmin(kl))].copy()


def _slsqp_minimize(model, f0_flat, shape, eta, starts, seed):
    from scipy.optimize import minimize

    m = f0_flat.size
    log_f0 = np.log(f0_flat)

    def objective(x):
        x = np.clip(x, 1e-300, None)
        return float(np.dot(x, np.log(x) - log_f0))

    def objective_grad(x):
        x = np.clip(x, 1e-300, None)
        return np.log(x) - log_f0 + 1.0

    cons = [
        {"type": "eq", "fun": lambda x: x.sum() - 1.0, "jac": lambda x: np.ones(m)},
        {
            "type": "ineq",
            "fun": lambda x: _joint_q(model, np.clip(x, 0.0, None), shape) - eta,
            "jac": lambda x: _joint_q_grad(model, np.clip(x, 1e-300, None), shape),
        },
    ]
    rng = np.random.default_rng(seed)
    x0s = [f0_flat.copy()]
    for _ in range(starts - 1):
        x0s.append(rng.dirichlet(np.ones(m)))
    best = None
    best_val = np.inf
    for x0 in x0s:
        with warnings.catch_warnings():
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
        if _joint_q(model, x, shape) < eta - 1e-7:
            continue
        val = objective(x)
        if val < best_val:
            best_val = val
            best = x
    return best


def kkt_residual(model: NetworkModel, factors, eta: float) -> float:
    """Smallest stationarity residual over a grid of candidate multipliers.

    For a true projection the factor pmfs are a fixed point of the tilt map
    at the optimal multiplier, so this is ~0; for grid or descent minimizers
    it measures how far from stationary they are.
    """
    lams = np.concatenate([[0.0], np.geomspace(1e-4, 1e4, 321)])
    probs = [np.asarray(f.probs, dtype=np.float64) for f in factors]
    logs_f0 = [np.log(s.f0.probs) for s in model.sensors]
    grads = [
        s.statistic.gradient(Pmf(s.alphabet, p)) for s, p in zip(model.sensors, probs)
    ]

    def res_at(lam: float) -> float:
        res = 0.0
        for log_f0, g, p in zip(logs_f0, grads, probs):
            res += float(np.abs(_tilt(log_f0, lam, g) - p).sum())
        return res

    values = [res_at(lam) for lam in lams]
    i = int(np.argmin(values))
    lo = lams[max(i - 1, 0)]
    hi = lams[min(i + 1, len(lams) - 1)]
    refined = _golden_max(lambda lam: -res_at(lam), lo, hi)
    return min(values[i], res_at(refined))
