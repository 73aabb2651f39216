"""Projective measurement: outcome distributions, moments, sampling, collapse."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import InvalidCollapseError, ShapeError, ValidationError
from .operators import ObservableSpec
from .states import EnsembleState, PureState

State = Union[PureState, EnsembleState]

CLAMP_TOL = 1e-12
SUM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class OutcomeDistribution:
    """Eigenvalues (strictly increasing) with their probabilities."""

    eigenvalues: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.eigenvalues, dtype=float)
        probs = np.asarray(self.probabilities, dtype=float).copy()
        if vals.shape != probs.shape:
            raise ShapeError("eigenvalues and probabilities differ in length")
        if vals.size > 1 and np.any(np.diff(vals) <= 0):
            raise ValidationError("eigenvalues must be strictly increasing")
        if np.any(probs < -CLAMP_TOL):
            raise ValidationError(f"negative probability {probs.min()!r} below rounding tolerance")
        probs[probs < 0] = 0.0
        if abs(probs.sum() - 1.0) > SUM_TOL:
            raise ValidationError(f"probabilities sum to {probs.sum()!r}")
        vals.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "probabilities", probs)

    def __len__(self) -> int:
        return self.eigenvalues.size

    def mean(self) -> float:
        return float(np.dot(self.eigenvalues, self.probabilities))

    def second_moment(self) -> float:
        return float(np.dot(self.eigenvalues**2, self.probabilities))

    def variance(self) -> float:
        return self.second_moment() - self.mean() ** 2

    def as_dict(self) -> dict[float, float]:
        return dict(zip(self.eigenvalues.tolist(), self.probabilities.tolist()))

    def to_json(self) -> list[dict]:
        return [{"eigenvalue": x, "probability": p} for x, p in zip(self.eigenvalues.tolist(), self.probabilities.tolist())]


def _check(X: ObservableSpec, state: State) -> None:
    if X.size != int(np.prod(state.dims)):
        raise ShapeError(f"observable of size {X.size} vs state dims {state.dims}")
    if len(X.dims) > 1 and tuple(X.dims) != tuple(state.dims):
        raise ShapeError(f"observable dims {X.dims} vs state dims {state.dims}")


def _pure_probabilities(X: ObservableSpec, state: PureState) -> np.ndarray:
    weights = np.abs(X.coefficients(state.amplitudes)) ** 2
    return np.bincount(X.assignment, weights=weights, minlength=X.eigenvalues.size)


def outcome_probabilities(X: ObservableSpec, state: State) -> np.ndarray:
    """Probabilities indexed like ``X.eigenvalues`` (not sorted)."""
    _check(X, state)
    if isinstance(state, EnsembleState):
        return sum(p * _pure_probabilities(X, s) for p, s in state.components)
    return _pure_probabilities(X, state)


def distribution(X: ObservableSpec, state: State) -> OutcomeDistribution:
    probs = outcome_probabilities(X, state)
    order = np.argsort(X.eigenvalues)
    return OutcomeDistribution(X.eigenvalues[order], probs[order])


def expectation(X: ObservableSpec, state: State) -> float:
    return distribution(X, state).mean()


def second_moment(X: ObservableSpec, state: State) -> float:
    return distribution(X, state).second_moment()


def variance(X: ObservableSpec, state: State) -> float:
    var = distribution(X, state).variance()
    if var < -CLAMP_TOL:
        raise ValidationError(f"negative variance {var!r}")
    return max(var, 0.0)


def replicate_rng(master_seed: int, replicate: int) -> np.random.Generator:
    """Counter-based sub-stream for one replicate.

    Derived from ``(master_seed, replicate)`` alone, so replicate ``i``
    draws the same numbers whether run serially or in parallel.
    """
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(replicate),))
    return np.random.Generator(np.random.Philox(seq))


def _inverse_cdf(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cum = np.cumsum(probs)
    cum /= cum[-1]
    idx = np.searchsorted(cum, u, side="right")
    last = int(np.flatnonzero(probs > 0)[-1])
    return np.minimum(idx, last)


def _sampler(X: ObservableSpec, state: State):
    """Precompute the outcome tables once; return ``draw(rng, count)``."""
    _check(X, state)
    if isinstance(state, EnsembleState):
        weights = state.weights
        tables = [distribution(X, s) for s in state.states]

        def draw(rng, count):
            comp = _inverse_cdf(weights, rng.random(count))
            u = rng.random(count)
            out = np.empty(count)
            for k, dist in enumerate(tables):
                sel = comp == k
                if sel.any():
                    out[sel] = dist.eigenvalues[_inverse_cdf(dist.probabilities, u[sel])]
            return out

        return draw

    dist = distribution(X, state)

    def draw(rng, count):
        return dist.eigenvalues[_inverse_cdf(dist.probabilities, rng.random(count))]

    return draw


def sample(X: ObservableSpec, state: State, rng: np.random.Generator, count: int) -> np.ndarray:
    """Draw ``count`` i.i.d. measurement outcomes by inverse CDF.

    For an ensemble, each draw first picks a component with probability
    p_k and then measures that component.
    """
    if count < 1:
        raise ValidationError(f"sample count must be >= 1, got {count}")
    return _sampler(X, state)(rng, count)


def collapse(X: ObservableSpec, state: PureState, outcome: float) -> PureState:
    """Normalized projection of ``state`` onto the eigenspace of ``outcome``."""
    _check(X, state)
    hits = np.flatnonzero(np.abs(X.eigenvalues - outcome) <= 1e-9)
    if hits.size == 0:
        raise InvalidCollapseError(f"{outcome!r} is not an eigenvalue of the observable")
    coeffs = X.coefficients(state.amplitudes)
    kept = np.where(X.assignment == hits[0], coeffs, 0.0)
    prob = float(np.sum(np.abs(kept) ** 2))
    if prob <= 1e-12:
        raise InvalidCollapseError(f"outcome {outcome!r} has probability {prob:.3e}")
    return PureState.normalized(X.vectors(kept), state.dims)


def samples_to_csv(samples_by_replicate) -> str:
    """CSV of (replicate, draw_index, outcome) rows."""
    buf = io.StringIO()
    buf.write("# schema=1\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["replicate", "draw_index", "outcome"])
    for rep, draws in enumerate(samples_by_replicate):
        for idx, value in enumerate(np.atleast_1d(draws)):
            writer.writerow([rep, idx, repr(float(value))])
    return buf.getvalue()
