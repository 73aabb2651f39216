"""Simulation targets: Hamiltonian, initial state, observable and horizon."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ShapeError, ValidationError
from .operators import HamiltonianSum, LocalTerm, ObservableSpec, apply_operator, exact_propagator
from .states import EnsembleState, PureState
from .trotter import evolve, trotter_step

State = Union[PureState, EnsembleState]

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True, eq=False)
class System:
    """Everything the estimator needs about one simulation problem.

    ``trotter_terms`` is the split that gets Trotterized; it defaults to
    ``hamiltonian`` and must sum to the same operator.  Simulated states
    are cached per step count since evolution is deterministic.
    """

    hamiltonian: HamiltonianSum
    initial: State
    observable: ObservableSpec | None = None
    T: float = 1.0
    trotter_terms: HamiltonianSum | None = None
    name: str = "custom"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.T > 0:
            raise ValidationError(f"horizon must be positive, got {self.T}")
        if tuple(self.initial.dims) != self.hamiltonian.dims:
            raise ShapeError(f"initial state dims {self.initial.dims} vs Hamiltonian dims {self.hamiltonian.dims}")
        if self.trotter_terms is not None and self.trotter_terms.dims != self.hamiltonian.dims:
            raise ShapeError("trotter_terms and hamiltonian act on different spaces")

    @property
    def dims(self) -> tuple[int, ...]:
        return self.hamiltonian.dims

    @property
    def split(self) -> HamiltonianSum:
        return self.trotter_terms if self.trotter_terms is not None else self.hamiltonian

    def observable_at(self, delta: float | None = None) -> ObservableSpec:
        if self.observable is None:
            raise ValidationError(f"system {self.name!r} has no observable")
        return self.observable

    def exact_state(self, t: float | None = None) -> State:
        t = self.T if t is None else t
        U = exact_propagator(self.hamiltonian, t)
        return _map(self.initial, lambda s: apply_operator(U, s))

    def trotter_state(self, m: int) -> State:
        if m < 1:
            raise ValidationError(f"step count must be >= 1, got {m}")
        key = ("trotter", int(m))
        if key not in self._cache:
            step = trotter_step(self.split, self.T / m).fused()
            self._cache[key] = _map(self.initial, lambda s: evolve(s, step, m).final)
        return self._cache[key]


def _map(state: State, fn) -> State:
    return state.map(fn) if isinstance(state, EnsembleState) else fn(state)


def pauli_xz(T: float = 1.0) -> System:
    """Single qubit, H = Z + X split as two noncommuting terms, |0>, measure Z."""
    H = HamiltonianSum([2], [LocalTerm([0], PAULI_Z), LocalTerm([0], PAULI_X)])
    return System(
        hamiltonian=H,
        initial=PureState.basis(0, [2]),
        observable=ObservableSpec.from_hermitian(PAULI_Z),
        T=T,
        name="pauli-xz",
    )


def system_from_json(record: dict) -> System:
    """Build a system from ``{hamiltonian, initial, observable, T?, trotter_terms?}``.

    ``initial`` is either a state record or ``{"ensemble": [{"weight", "state"}]}``.
    """
    try:
        H = HamiltonianSum.from_json(record["hamiltonian"])
        init = record["initial"]
        if "ensemble" in init:
            initial = EnsembleState([(c["weight"], PureState.from_json(c["state"])) for c in init["ensemble"]])
        else:
            initial = PureState.from_json(init)
        obs = ObservableSpec.from_json(record["observable"])
        split = HamiltonianSum.from_json(record["trotter_terms"]) if "trotter_terms" in record else None
        return System(H, initial, obs, float(record.get("T", 1.0)), split, name=record.get("name", "custom"))
    except KeyError as exc:
        raise ValidationError(f"system record lacks field {exc}") from exc


BUILTINS = ("oscillator", "pauli-xz")


def load_system(source: str) -> System:
    """Builtin name or path to a JSON system description."""
    if source == "pauli-xz":
        return pauli_xz()
    if source == "oscillator":
        from .oscillator import build_system

        return build_system()
    if not os.path.exists(source):
        raise ValidationError(f"unknown system {source!r}: not a builtin ({', '.join(BUILTINS)}) or an existing file")
    try:
        with open(source) as fh:
            record = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"system file {source!r} is not valid JSON: {exc}") from exc
    return system_from_json(record)
