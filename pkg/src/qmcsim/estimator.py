"""Monte Carlo estimation of tr(X rho) under Trotterized evolution.

Covers the plain-mean estimator, its exact bias/variance accounting,
calibration of the MSE constants C1 and C2, the budget allocator for
N = m * n, and delta sweeps of the exact MSE.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .measurement import _sampler, distribution, expectation, replicate_rng
from .systems import System

BIAS_FLOOR = 1e-12


@dataclass(frozen=True)
class SimulationPlan:
    """m Trotter steps per replicate, n replicates, horizon T.

    ``budget`` is the requested N; the plan itself spends m * n of it and
    the difference is reported as slack.
    """

    T: float
    m: int
    n: int
    master_seed: int = 0
    budget: int | None = None

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValidationError(f"horizon must be positive, got {self.T}")
        for name in ("m", "n"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValidationError(f"{name} must be a positive integer, got {value}")
        if self.budget is not None and self.budget < self.m * self.n:
            raise ValidationError(f"plan spends {self.m * self.n} > budget {self.budget}")

    @classmethod
    def from_budget(cls, N: int, m: int, T: float = 1.0, master_seed: int = 0) -> "SimulationPlan":
        if m < 1 or N < m:
            raise ValidationError(f"budget {N} cannot fund {m} steps per replicate")
        return cls(T=T, m=m, n=N // m, master_seed=master_seed, budget=N)

    @property
    def N(self) -> int:
        return self.m * self.n

    @property
    def delta(self) -> float:
        return self.T / self.m

    @property
    def slack(self) -> int:
        return 0 if self.budget is None else self.budget - self.N

    def to_json(self) -> dict:
        return {"T": self.T, "m": self.m, "n": self.n, "N": self.N, "delta": self.delta, "seed": self.master_seed}


@dataclass
class EstimateReport:
    plan: SimulationPlan
    theta_hat: float
    sample_variance: float
    bias_est: float | None = None
    mse_est: float | None = None
    true_theta: float | None = None
    mode: str = "sampled"
    outcomes_digest: str = ""
    wall_ms: float = 0.0

    @property
    def slack(self) -> int:
        return self.plan.slack

    @property
    def variance_term(self) -> float:
        return self.sample_variance / self.plan.n

    def to_json(self, timestamp: bool = True) -> dict:
        record = {
            "plan": self.plan.to_json(),
            "theta_hat": self.theta_hat,
            "sample_variance": self.sample_variance,
            "bias_est": self.bias_est,
            "mse_est": self.mse_est,
            "slack": self.slack,
            "mode": self.mode,
        }
        if self.true_theta is not None:
            record["true_theta"] = self.true_theta
        if self.outcomes_digest:
            record["outcomes_digest"] = self.outcomes_digest
        if timestamp:
            record["wall_ms"] = self.wall_ms
        return record


def true_value(system: System, delta: float | None = None) -> float:
    """theta = tr(X rho) under exact evolution to the horizon."""
    X = system.observable_at(system.T if delta is None else delta)
    return expectation(X, system.exact_state())


def draw_outcomes(plan: SimulationPlan, system: System) -> np.ndarray:
    """One measurement per replicate, replicate i on sub-stream (seed, i).

    The simulated state is deterministic, so it is evolved once and shared
    by all n replicates.
    """
    state = system.trotter_state(plan.m)
    draw = _sampler(system.observable_at(plan.delta), state)
    return np.array([draw(replicate_rng(plan.master_seed, i), 1)[0] for i in range(plan.n)])


def run_estimate(plan: SimulationPlan, system: System) -> EstimateReport:
    if abs(plan.T - system.T) > 1e-12 * system.T:
        raise ValidationError(f"plan horizon {plan.T} differs from system horizon {system.T}")
    start = time.perf_counter()
    outcomes = draw_outcomes(plan, system)
    theta_hat = float(outcomes.mean())
    # n == 1 has no n-1 variance; report zero spread
    svar = float(outcomes.var(ddof=1)) if plan.n > 1 else 0.0
    digest = hashlib.sha256(outcomes.astype("<f8").tobytes()).hexdigest()[:16]
    return EstimateReport(
        plan=plan,
        theta_hat=theta_hat,
        sample_variance=svar,
        outcomes_digest=digest,
        wall_ms=(time.perf_counter() - start) * 1e3,
    )


def mse_report(plan: SimulationPlan, system: System, *, exact: bool = True) -> EstimateReport:
    """Bias and MSE of the estimator at ``plan``.

    Exact mode uses the moments of X under the simulated state, so
    ``theta_hat`` is E[theta_hat] and ``sample_variance`` is Var(X_1).
    Sampled mode (no exact path needed) estimates the bias by Richardson
    extrapolation from sample means at m and 2m steps, which assumes the
    bias scales as delta**2.
    """
    start = time.perf_counter()
    if exact:
        dist = distribution(system.observable_at(plan.delta), system.trotter_state(plan.m))
        theta = true_value(system)
        mean, var = dist.mean(), max(dist.variance(), 0.0)
        bias = mean - theta
        report = EstimateReport(plan, mean, var, bias, var / plan.n + bias**2, true_theta=theta, mode="exact")
    else:
        coarse = run_estimate(plan, system)
        fine_plan = SimulationPlan(plan.T, 2 * plan.m, plan.n, plan.master_seed + 1)
        fine = run_estimate(fine_plan, system)
        bias = 4.0 / 3.0 * (coarse.theta_hat - fine.theta_hat)
        report = EstimateReport(
            plan,
            coarse.theta_hat,
            coarse.sample_variance,
            bias,
            coarse.sample_variance / plan.n + bias**2,
            mode="sampled",
            outcomes_digest=coarse.outcomes_digest,
        )
    report.wall_ms = (time.perf_counter() - start) * 1e3
    return report


@dataclass(frozen=True)
class CalibrationResult:
    """MSE ~ C1 / n + C2 * (delta / T)**4."""

    C1: float
    C2: float
    deltas: tuple[float, ...] = ()
    biases: tuple[float, ...] = ()
    residuals: tuple[float, ...] = ()
    degenerate: bool = False

    def to_json(self) -> dict:
        return {
            "C1": self.C1,
            "C2": self.C2,
            "deltas": list(self.deltas),
            "biases": list(self.biases),
            "residuals": list(self.residuals),
            "degenerate": self.degenerate,
        }


def fit_bias_constant(deltas, biases, T: float = 1.0) -> tuple[float, np.ndarray, bool]:
    """Least-squares C2 in bias**2 = C2 * (delta/T)**4 (line through the origin).

    Returns ``(C2, residuals, degenerate)``; all biases at the numerical
    floor give ``C2 = 0`` and ``degenerate = True``.
    """
    x = (np.asarray(deltas, dtype=float) / T) ** 4
    b = np.asarray(biases, dtype=float)
    if np.all(np.abs(b) <= BIAS_FLOOR):
        return 0.0, b**2, True
    C2 = float(np.dot(b**2, x) / np.dot(x, x))
    return C2, b**2 - C2 * x, False


def default_calibration_grid(T: float) -> np.ndarray:
    return np.geomspace(T / 512, T / 32, 5)


def calibrate(
    system: System,
    deltas: Sequence[float] | None = None,
    pilot_n: int | None = None,
    *,
    exact: bool = True,
    seed: int = 0,
) -> CalibrationResult:
    """Estimate C1 (variance of X) and C2 (bias-squared constant).

    Each pilot delta is rounded to the nearest ``T/m``.  ``pilot_n``
    replicates per point are only used in sampled mode.
    """
    T = system.T
    grid = default_calibration_grid(T) if deltas is None else np.asarray(deltas, dtype=float)
    if grid.size < 4:
        raise ValidationError(f"calibration needs at least 4 pilot deltas, got {grid.size}")
    if grid.max() / grid.min() < math.sqrt(10) * (1 - 1e-9):
        raise ValidationError("pilot deltas must span at least half a decade")
    if not exact and (pilot_n is None or pilot_n < 2):
        raise ValidationError("sampled calibration needs pilot_n >= 2")
    ms = sorted({max(1, int(round(T / d))) for d in grid}, reverse=True)
    used = np.array([T / m for m in ms])
    biases, variances = [], []
    for m in ms:
        plan = SimulationPlan(T, m, pilot_n or 1, seed)
        rep = mse_report(plan, system, exact=exact)
        biases.append(rep.bias_est)
        variances.append(rep.sample_variance)
    C1 = float(variances[0])  # finest delta comes first
    if not C1 > 0:
        raise ValidationError(f"observable has zero variance under the simulated state (C1 = {C1})")
    C2, residuals, degenerate = fit_bias_constant(used, biases, T)
    return CalibrationResult(
        C1=C1,
        C2=C2,
        deltas=tuple(used.tolist()),
        biases=tuple(float(b) for b in biases),
        residuals=tuple(residuals.tolist()),
        degenerate=degenerate,
    )


@dataclass(frozen=True)
class Allocation:
    m: int
    n: int
    m_star: float
    bound: float
    N: int

    @property
    def slack(self) -> int:
        return self.N - self.m * self.n

    def to_json(self) -> dict:
        return {"m": self.m, "n": self.n, "m_star": self.m_star, "bound": self.bound, "N": self.N, "slack": self.slack}


def mse_bound(m, N: int, C1: float, C2: float):
    """C1 * m / N + C2 / m**4, the MSE bound with n = N / m."""
    m = np.asarray(m, dtype=float)
    return C1 * m / N + C2 / m**4


def rate_bound(N: int, C1: float, C2: float) -> float:
    """C1**(4/5) * C2**(1/5) * N**(-4/5)."""
    return C1 ** 0.8 * C2 ** 0.2 * N ** -0.8


def allocate(N: int, C1: float, C2: float) -> Allocation:
    """Split a budget of N state approximations into m steps x n replicates.

    Starts from the asymptotic ``m* = (C2/C1)**(1/5) * N**(1/5)`` and
    scans the integers in ``[m*/4, 4 m*]`` plus both endpoints for the
    minimizer of :func:`mse_bound`, preferring the smaller m on ties.  The
    bound is convex in m, so the scan returns the global integer optimum.
    """
    if int(N) != N or N < 1:
        raise ValidationError(f"budget must be a positive integer, got {N}")
    N = int(N)
    if not C1 > 0:
        raise ValidationError(f"C1 must be positive, got {C1}")
    if C2 < 0:
        raise ValidationError(f"C2 must be non-negative, got {C2}")
    if C2 == 0:
        return Allocation(m=1, n=N, m_star=0.0, bound=C1 / N, N=N)
    m_star = (C2 / C1) ** 0.2 * N ** 0.2
    lo = max(1, math.floor(m_star / 4))
    hi = min(N, math.ceil(4 * m_star))
    candidates = np.unique(np.concatenate([[1, N], np.arange(lo, hi + 1)]))
    values = mse_bound(candidates, N, C1, C2)
    best = int(candidates[int(np.argmin(values))])  # argmin picks the first (smallest m) tie
    return Allocation(m=best, n=N // best, m_star=float(m_star), bound=float(mse_bound(best, N, C1, C2)), N=N)


@dataclass(frozen=True)
class SweepRow:
    delta: float
    m: int
    n: int
    variance_term: float
    bias_sq: float
    mse: float


@dataclass
class Sweep:
    rows: list[SweepRow]
    skipped: list[dict] = field(default_factory=list)

    @property
    def argmin(self) -> SweepRow:
        return min(self.rows, key=lambda r: (r.mse, r.delta))

    def segments(self) -> list[dict]:
        """Maximal monotone runs of the MSE curve, in increasing delta."""
        rows = sorted(self.rows, key=lambda r: r.delta)
        out: list[dict] = []
        for a, b in zip(rows, rows[1:]):
            if b.mse == a.mse:
                continue
            direction = "increasing" if b.mse > a.mse else "decreasing"
            if out and out[-1]["direction"] == direction:
                out[-1]["end_delta"] = b.delta
            else:
                out.append({"direction": direction, "start_delta": a.delta, "end_delta": b.delta})
        return out

    def has_interior_minimum(self) -> bool:
        rows = sorted(self.rows, key=lambda r: r.delta)
        best = self.argmin
        unique = sum(r.mse == best.mse for r in rows) == 1
        return unique and best is not rows[0] and best is not rows[-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# schema=1\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["delta", "m", "n", "variance_term", "bias_sq", "mse"])
        for r in self.rows:
            writer.writerow([repr(r.delta), r.m, r.n, repr(r.variance_term), repr(r.bias_sq), repr(r.mse)])
        return buf.getvalue()

    def to_json(self) -> dict:
        best = self.argmin
        return {
            "rows": [r.__dict__ for r in self.rows],
            "argmin": {"delta": best.delta, "m": best.m, "n": best.n, "mse": best.mse},
            "segments": self.segments(),
            "interior_minimum": self.has_interior_minimum(),
            "skipped": self.skipped,
        }


def _check_budget(N) -> None:
    if int(N) != N or N < 1:
        raise ValidationError(f"budget must be a positive integer, got {N}")


def default_sweep_grid(T: float = 1.0, N: int = 5000, points: int = 50, delta_max: float = 0.01) -> np.ndarray:
    """Equally spaced deltas in (0, delta_max], starting at the smallest affordable step."""
    _check_budget(N)
    lo = max(T / N, delta_max / points)
    return np.linspace(lo, delta_max, points)


def delta_sweep(system: System, N: int, deltas: Sequence[float], *, workers: int | None = 1) -> Sweep:
    """Exact-mode MSE over a delta grid at fixed budget N.

    Each delta maps to ``m = round(T/delta)`` and ``n = N // m``; rows
    report the realized ``delta = T/m``.  Points with no affordable
    replicate are skipped with a record.
    """
    _check_budget(N)
    T = system.T
    plans, skipped = [], []
    for d in sorted(float(x) for x in deltas):
        if not d > 0:
            skipped.append({"delta": d, "reason": "non-positive delta"})
            continue
        m = max(1, int(round(T / d)))
        if N // m < 1:
            skipped.append({"delta": d, "m": m, "reason": f"n = floor({N}/{m}) < 1"})
            continue
        plans.append(SimulationPlan(T, m, N // m, budget=N))

    def run(plan):
        rep = mse_report(plan, system)
        return SweepRow(plan.delta, plan.m, plan.n, rep.variance_term, rep.bias_est**2, rep.mse_est)

    if workers == 1:
        rows = [run(p) for p in plans]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, plans))
    if not rows:
        raise ValidationError("no affordable grid points in the sweep")
    return Sweep(rows=rows, skipped=skipped)
