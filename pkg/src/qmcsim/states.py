"""Pure and ensemble states over a tensor-product basis.

Basis index ``i`` is the mixed-radix number whose digits are the subsystem
labels, with subsystem 0 the least significant (fastest varying) digit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ShapeError, ValidationError

NORM_TOL = 1e-9
WEIGHT_TOL = 1e-12


def _check_dims(dims) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if not dims or any(d < 1 for d in dims):
        raise ValidationError(f"dims must be a non-empty list of positive ints, got {dims}")
    return dims


@dataclass(frozen=True, eq=False)
class PureState:
    """Unit-norm complex amplitude vector.

    The constructor rejects vectors whose norm is off by more than 1e-9;
    use :meth:`normalized` to rescale explicitly.
    """

    amplitudes: np.ndarray
    dims: tuple[int, ...]

    def __init__(self, amplitudes, dims: Sequence[int] | None = None):
        amps = np.array(amplitudes, dtype=np.complex128).reshape(-1)
        dims = (amps.size,) if dims is None else _check_dims(dims)
        if int(np.prod(dims)) != amps.size:
            raise ShapeError(f"dims {dims} imply {int(np.prod(dims))} amplitudes, got {amps.size}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValidationError(f"state norm {norm!r} deviates from 1 by more than {NORM_TOL}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "dims", dims)

    @classmethod
    def normalized(cls, vector, dims=None) -> "PureState":
        vec = np.asarray(vector, dtype=np.complex128).reshape(-1)
        norm = np.linalg.norm(vec)
        if norm == 0 or not np.isfinite(norm):
            raise ValidationError("cannot normalize a zero or non-finite vector")
        return cls(vec / norm, dims)

    @classmethod
    def basis(cls, index: int, dims) -> "PureState":
        dims = _check_dims(dims)
        vec = np.zeros(int(np.prod(dims)), dtype=np.complex128)
        vec[index] = 1.0
        return cls(vec, dims)

    @classmethod
    def _unchecked(cls, amplitudes: np.ndarray, dims) -> "PureState":
        # Skips the norm test; callers monitor drift themselves.
        self = object.__new__(cls)
        amps = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "dims", tuple(dims))
        return self

    @property
    def size(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def to_json(self) -> dict:
        return {
            "dims": list(self.dims),
            "re": self.amplitudes.real.tolist(),
            "im": self.amplitudes.imag.tolist(),
        }

    @classmethod
    def from_json(cls, record: dict) -> "PureState":
        try:
            re = np.asarray(record["re"], dtype=float)
            im = np.asarray(record.get("im", np.zeros_like(re)), dtype=float)
            return cls(re + 1j * im, record["dims"])
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed state record: {exc}") from exc


@dataclass(frozen=True)
class EnsembleState:
    """Probabilistic mixture of pure states, kept in weighted form."""

    components: tuple[tuple[float, PureState], ...]

    def __init__(self, components):
        comps = tuple((float(p), s) for p, s in components)
        if not comps:
            raise ValidationError("ensemble needs at least one component")
        weights = np.array([p for p, _ in comps])
        if np.any(weights < 0):
            raise ValidationError("ensemble weights must be non-negative")
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise ValidationError(f"ensemble weights sum to {weights.sum()!r}, not 1")
        dims = comps[0][1].dims
        if any(s.dims != dims for _, s in comps):
            raise ShapeError("ensemble components must share dims")
        object.__setattr__(self, "components", comps)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.components[0][1].dims

    @property
    def weights(self) -> np.ndarray:
        return np.array([p for p, _ in self.components])

    @property
    def states(self) -> list[PureState]:
        return [s for _, s in self.components]

    def map(self, fn) -> "EnsembleState":
        """Apply ``fn`` to every component state, keeping the weights."""
        return EnsembleState([(p, fn(s)) for p, s in self.components])


def _same_dims(a: PureState, b: PureState) -> None:
    if a.dims != b.dims:
        raise ShapeError(f"dims mismatch: {a.dims} vs {b.dims}")


def inner_product(a: PureState, b: PureState) -> complex:
    """Return <a|b>, conjugating the first argument."""
    _same_dims(a, b)
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def state_distance(a: PureState, b: PureState) -> float:
    """Euclidean norm of the amplitude difference (phase sensitive)."""
    _same_dims(a, b)
    return float(np.linalg.norm(a.amplitudes - b.amplitudes))


def phase_aligned_distance(a: PureState, b: PureState) -> float:
    """min over alpha of ||a - exp(i alpha) b||, i.e. sqrt(2 - 2|<a|b>|)."""
    overlap = inner_product(b, a)
    phase = overlap / abs(overlap) if overlap != 0 else 1.0
    # direct difference; the closed form loses precision when a ~ b
    return float(np.linalg.norm(a.amplitudes - phase * b.amplitudes))
