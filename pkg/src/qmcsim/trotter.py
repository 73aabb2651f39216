"""Symmetric second-order Trotter steps, iteration, and error-order studies."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import NumericalInstabilityError, ShapeError, ValidationError
from .operators import (
    HamiltonianSum,
    Operator,
    UnitaryFactorization,
    exact_propagator,
    local_exponential,
    operator_distance,
)
from .states import PureState

DRIFT_LIMIT = 1e-6
GAMMA_FLOOR = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    T: float
    m: int

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValidationError(f"horizon must be positive, got {self.T}")
        if int(self.m) != self.m or self.m < 1:
            raise ValidationError(f"step count must be a positive integer, got {self.m}")

    @property
    def delta(self) -> float:
        return self.T / self.m

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.m + 1) * self.delta


def trotter_step(H: HamiltonianSum, delta: float) -> UnitaryFactorization:
    """U_delta = [e^{-iH_1 d/2} ... e^{-iH_L d/2}][e^{-iH_L d/2} ... e^{-iH_1 d/2}].

    The returned factor list is in application order (rightmost operator
    first), so it reads H_1, ..., H_L, H_L, ..., H_1 -- the product is
    palindromic.  Each distinct half-step block is computed once.
    """
    if not H.terms:
        raise ValidationError("Trotter step needs at least one term")
    if not math.isfinite(delta):
        raise ValidationError(f"step must be finite, got {delta}")
    halves = [local_exponential(term, delta / 2) for term in H.terms]
    return UnitaryFactorization(H.dims, halves + halves[::-1], check=False)


@dataclass(frozen=True)
class Trajectory:
    final: PureState
    states: dict[int, PureState] = field(default_factory=dict)
    max_drift: float = 0.0


def evolve(
    state0: PureState,
    step: UnitaryFactorization,
    m: int,
    *,
    indices: Iterable[int] | None = None,
    full: bool = False,
) -> Trajectory:
    """Apply ``step`` m times.

    Only the final state is kept unless ``indices`` or ``full`` ask for
    more.  States are never renormalized; drift beyond 1e-6 raises.
    """
    if state0.dims != step.dims:
        raise ShapeError(f"state dims {state0.dims} vs step dims {step.dims}")
    if m < 0:
        raise ValidationError("step count must be non-negative")
    keep = set(range(1, m + 1)) if full else set(indices or ())
    vec = state0.amplitudes
    saved: dict[int, PureState] = {}
    max_drift = 0.0
    for j in range(1, m + 1):
        vec = step.apply_vector(vec)
        drift = abs(np.linalg.norm(vec) - 1.0)
        max_drift = max(max_drift, drift)
        if drift > DRIFT_LIMIT:
            raise NumericalInstabilityError(f"norm drift {drift:.3e} after {j} steps")
        if j in keep:
            saved[j] = PureState._unchecked(vec.copy(), state0.dims)
    final = PureState._unchecked(vec, state0.dims) if m else state0
    return Trajectory(final=final, states=saved, max_drift=max_drift)


def iterated_distance(U: Operator, V: Operator, j: int) -> float:
    """Gamma(U^j, V^j) on dense operators."""
    Ud = U.dense() if isinstance(U, UnitaryFactorization) else np.asarray(U)
    Vd = V.dense() if isinstance(V, UnitaryFactorization) else np.asarray(V)
    return operator_distance(np.linalg.matrix_power(Ud, j), np.linalg.matrix_power(Vd, j))


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    points_used: int
    degenerate: bool = False

    def to_json(self) -> dict:
        finite = not self.degenerate
        return {
            "slope": self.slope if finite else None,
            "intercept": self.intercept if finite else None,
            "points_used": self.points_used,
            "degenerate": self.degenerate,
        }


def fit_loglog(x, y, floor: float = GAMMA_FLOOR) -> SlopeFit:
    """OLS slope of log y against log x, dropping points with y < floor."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = y >= floor
    if mask.sum() < 2 or np.unique(x[mask]).size < 2:
        return SlopeFit(float("nan"), float("nan"), int(mask.sum()), degenerate=True)
    slope, intercept = np.polyfit(np.log(x[mask]), np.log(y[mask]), 1)
    return SlopeFit(float(slope), float(intercept), int(mask.sum()))


@dataclass(frozen=True)
class ErrorScaling:
    """Rows of (delta, j, gamma) plus one log-log fit per series.

    Series are keyed by ``"j=<j>"`` for fixed-j studies and ``"horizon"``
    for the fixed jδ study.
    """

    rows: list[tuple[float, int, float]]
    fits: dict[str, SlopeFit]

    def summary(self) -> dict:
        return {key: fit.to_json() for key, fit in self.fits.items()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# schema=1\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["delta", "j", "gamma"])
        for delta, j, gamma in self.rows:
            writer.writerow([repr(float(delta)), j, repr(float(gamma))])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "rows": [{"delta": d, "j": j, "gamma": g} for d, j, g in self.rows],
            "fits": self.summary(),
        }


def _check_grid(deltas: Sequence[float]) -> np.ndarray:
    grid = np.asarray(deltas, dtype=float)
    if grid.size < 5:
        raise ValidationError(f"delta grid needs at least 5 points, got {grid.size}")
    if np.any(grid <= 0):
        raise ValidationError("delta grid must be positive")
    if grid.max() / grid.min() < 10 * (1 - 1e-9):
        raise ValidationError("delta grid must span at least one decade")
    return grid


def _gamma_point(H: HamiltonianSum, delta: float, j: int) -> float:
    U = trotter_step(H, delta)
    if j == 1:
        Uj = U
    else:
        Uj = np.linalg.matrix_power(U.dense(), j) if H.size <= 64 else U.power(j)
    return operator_distance(Uj, exact_propagator(H, j * delta))


def error_scaling(
    H: HamiltonianSum,
    deltas: Sequence[float],
    j_values: Sequence[int] = (1,),
    *,
    horizon: float | None = None,
    workers: int | None = 1,
) -> ErrorScaling:
    """Gamma(U_delta^j, exp(-iH j delta)) over a delta grid.

    With ``horizon`` set, ``j = horizon / delta`` per grid point (each delta
    must divide the horizon) and ``j_values`` is ignored.
    """
    grid = _check_grid(deltas)
    tasks: list[tuple[float, int, str]] = []
    if horizon is not None:
        for d in grid:
            j = int(round(horizon / d))
            if j < 1 or abs(j * d - horizon) > 1e-9 * horizon:
                raise ValidationError(f"delta {d} does not divide the horizon {horizon}")
            tasks.append((float(d), j, "horizon"))
    else:
        for j in j_values:
            if int(j) != j or j < 1:
                raise ValidationError(f"j must be a positive integer, got {j}")
            tasks.extend((float(d), int(j), f"j={int(j)}") for d in grid)

    def run(task):
        d, j, _ = task
        return _gamma_point(H, d, j)

    if workers == 1:
        gammas = [run(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            gammas = list(pool.map(run, tasks))

    rows = [(d, j, g) for (d, j, _), g in zip(tasks, gammas)]
    fits = {}
    for key in dict.fromkeys(k for _, _, k in tasks):
        sel = [(d, g) for (d, _, k), g in zip(tasks, gammas) if k == key]
        fits[key] = fit_loglog([d for d, _ in sel], [g for _, g in sel])
    return ErrorScaling(rows=rows, fits=fits)
