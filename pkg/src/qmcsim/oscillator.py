"""Isotropic harmonic oscillator in a truncated Hermite basis.

Each of the ``d`` dimensions keeps the lowest ``K`` levels, so the state
space is ``K**d`` (4096 for d = 6, K = 4, i.e. 12 qubits).  The position
operators are the exact projections of the infinite ladder-operator
matrices onto those levels, which keeps every local Hamiltonian exactly
diagonal; only the split xi^2 / -nabla^2 exponentials see the truncation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ValidationError
from .operators import HamiltonianSum, LocalTerm, ObservableSpec, apply_factor
from .states import PureState
from .systems import System
from .trotter import trotter_step

MAX_LEVEL = 30
MAX_ABS_X = 20.0
MAX_SIZE = 2**20
OBSERVABLE_SCALE = 20.0


def hermite_eval(k: int, x):
    """Normalized Hermite function h_k(x) by the three-term recurrence.

    h_0 = pi**-0.25 exp(-x**2/2), h_1 = sqrt(2) x h_0,
    h_{j+1} = sqrt(2/(j+1)) x h_j - sqrt(j/(j+1)) h_{j-1}.
    """
    if int(k) != k or not 0 <= k <= MAX_LEVEL:
        raise ValidationError(f"level k must be an integer in [0, {MAX_LEVEL}], got {k}")
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > MAX_ABS_X):
        raise ValidationError(f"|x| must be <= {MAX_ABS_X}")
    prev = np.pi**-0.25 * np.exp(-(x**2) / 2)
    if k == 0:
        return prev if prev.ndim else float(prev)
    cur = np.sqrt(2.0) * x * prev
    for j in range(1, int(k)):
        prev, cur = cur, np.sqrt(2.0 / (j + 1)) * x * cur - np.sqrt(j / (j + 1)) * prev
    return cur if cur.ndim else float(cur)


def ladder_matrices(K: int) -> tuple[np.ndarray, np.ndarray]:
    """Truncated (annihilation, creation) matrices: A-[k-1, k] = sqrt(k)."""
    lower = np.diag(np.sqrt(np.arange(1, K, dtype=float)), 1)
    return lower, lower.T.copy()


def quadrature_matrices(K: int) -> tuple[np.ndarray, np.ndarray]:
    """Projections of xi^2 and -nabla^2 onto the lowest K levels.

    Both carry k + 1/2 on the diagonal and +-sqrt((k+1)(k+2))/2 at
    (k, k+2); their sum is exactly diag(2k + 1).
    """
    if K < 2:
        raise ValidationError(f"truncation K must be >= 2, got {K}")
    levels = np.arange(K, dtype=float)
    off = np.sqrt((levels[:-2] + 1) * (levels[:-2] + 2)) / 2
    xi2 = np.diag(levels + 0.5) + np.diag(off, 2) + np.diag(off, -2)
    neg_lap = np.diag(levels + 0.5) - np.diag(off, 2) - np.diag(off, -2)
    return xi2, neg_lap


def level_grid(d: int, K: int) -> np.ndarray:
    """(K**d, d) integer array of level vectors in state-basis order."""
    idx = np.arange(K**d)
    return (idx[:, None] // K ** np.arange(d)[None, :]) % K


def qubit_label(levels: np.ndarray, K: int) -> np.ndarray:
    """Integer z(b) of the qubit string encoding each level vector.

    Bit r of the level in dimension j is qubit ``j + r*d`` (0-based), which
    gives k_j = z_j + 2 z_{j+d} at K = 4.  Needs K to be a power of two.
    """
    bits = int(K).bit_length() - 1
    if 2**bits != K:
        raise ValidationError(f"qubit encoding needs K to be a power of two, got {K}")
    levels = np.atleast_2d(levels)
    d = levels.shape[1]
    z = np.zeros(levels.shape[0], dtype=np.int64)
    for r in range(bits):
        for j in range(d):
            z += ((levels[:, j] >> r) & 1).astype(np.int64) << (j + r * d)
    return z


@dataclass(frozen=True, eq=False)
class OscillatorSystem(System):
    """d independent truncated oscillators with a uniform initial state."""

    d: int = 6
    K: int = 4
    xi2: np.ndarray | None = None
    neg_lap: np.ndarray | None = None

    @property
    def energies(self) -> np.ndarray:
        """Eigenvalue sum(k_j) + d/2 of every basis vector."""
        return level_grid(self.d, self.K).sum(axis=1) + self.d / 2

    def observable_at(self, delta: float | None = None) -> ObservableSpec:
        return build_observable(self, self.T if delta is None else delta)


def build_system(d: int = 6, K: int = 4, T: float = 1.0) -> OscillatorSystem:
    if K < 2:
        raise ValidationError(f"truncation K must be >= 2, got {K}")
    if K**d > MAX_SIZE:
        raise CapacityError(f"K**d = {K**d} exceeds the {MAX_SIZE} guard")
    xi2, neg_lap = quadrature_matrices(K)
    dims = [K] * d
    # (xi2 + neg_lap) / 2 is diag(k + 1/2) exactly: the off-diagonals cancel.
    H = HamiltonianSum(dims, [LocalTerm([j], (xi2 + neg_lap) / 2) for j in range(d)])
    split = HamiltonianSum(
        dims,
        [term for j in range(d) for term in (LocalTerm([j], xi2 / 2), LocalTerm([j], neg_lap / 2))],
    )
    D = K**d
    initial = PureState(np.full(D, 1 / np.sqrt(D), dtype=complex), dims)
    return OscillatorSystem(
        hamiltonian=H,
        initial=initial,
        T=T,
        trotter_terms=split,
        name="oscillator",
        d=d,
        K=K,
        xi2=xi2,
        neg_lap=neg_lap,
    )


def build_observable(system: OscillatorSystem, delta: float) -> ObservableSpec:
    """X = (1/20) sum_z E_z Q_{u_z}, u_z = exp(-i E_z t_{z(b)}) |z>.

    E_z = sum(k_j) + d/2 and t_{z(b)} = z(b) * delta.  The phases leave the
    projectors (and so every probability) unchanged.
    """
    if not delta > 0:
        raise ValidationError(f"delta must be positive, got {delta}")
    levels = level_grid(system.d, system.K)
    energies = levels.sum(axis=1) + system.d / 2
    try:
        labels = qubit_label(levels, system.K)
    except ValidationError:
        labels = np.arange(levels.shape[0])
    phases = np.exp(-1j * energies * labels * delta)
    return ObservableSpec.from_values(energies / OBSERVABLE_SCALE, phases=phases, dims=system.dims)


def exact_final_state(system: OscillatorSystem, t: float) -> PureState:
    """Closed form: amplitudes D**-0.5 * exp(-i E_k t)."""
    D = system.K**system.d
    return PureState(np.exp(-1j * system.energies * t) / np.sqrt(D), system.dims)


def trotterized_final_state(system: OscillatorSystem, m: int, *, per_dimension: bool = False) -> PureState:
    """U_delta^m phi_0 with delta = T/m.

    The default goes through the generic Trotter path on the 2d split
    terms.  ``per_dimension`` instead raises each dimension's 4x4 step to
    the m-th power and applies it once, which is exact because different
    dimensions commute.
    """
    if m < 1:
        raise ValidationError(f"step count must be >= 1, got {m}")
    if not per_dimension:
        return system.trotter_state(m)
    delta = system.T / m
    state = system.initial
    for j in range(system.d):
        local = HamiltonianSum([system.K], [LocalTerm([0], system.xi2 / 2), LocalTerm([0], system.neg_lap / 2)])
        block = np.linalg.matrix_power(trotter_step(local, delta).dense(), m)
        state = apply_factor([j], block, state)
    return state


def enumerate_moments(d: int = 6, K: int = 4) -> dict:
    """theta, tr(X^2 rho) and Var by brute force over all level vectors.

    The exact final state has every |amplitude|^2 = K**-d, so the moments
    are plain averages of (sum k + d/2) / 20 over the grid.
    """
    total = first = second = 0
    for ks in itertools.product(range(K), repeat=d):
        value = sum(ks) + d / 2
        first += value
        second += value * value
        total += 1
    theta = first / (OBSERVABLE_SCALE * total)
    second_moment = second / (OBSERVABLE_SCALE**2 * total)
    return {"theta": theta, "second_moment": second_moment, "variance": second_moment - theta**2, "dims": total}


def oscillator_report(d: int = 6, K: int = 4) -> dict:
    return enumerate_moments(d, K)
