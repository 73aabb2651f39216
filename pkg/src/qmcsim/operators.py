"""Local Hamiltonian terms, factorized unitaries, observables and Gamma.

Blocks acting on ``sites = (s_0, s_1, ...)`` use the same little-endian
convention as states: the local index is ``l_0 + d(s_0) * (l_1 + ...)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import CapacityError, ConvergenceError, ShapeError, ValidationError
from .states import PureState

DENSE_LIMIT = 4096
SVD_LIMIT = 64
HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
EIGEN_MERGE_TOL = 1e-9


def _as_matrix(block) -> np.ndarray:
    mat = np.array(block, dtype=np.complex128)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ShapeError(f"block must be square, got shape {mat.shape}")
    return mat


def _check_sites(sites, dims) -> tuple[int, ...]:
    sites = tuple(int(s) for s in sites)
    if not sites or len(set(sites)) != len(sites):
        raise ShapeError(f"sites must be distinct and non-empty, got {sites}")
    if any(s < 0 or s >= len(dims) for s in sites):
        raise ShapeError(f"sites {sites} out of range for {len(dims)} subsystems")
    return sites


def _local_dim(sites, dims) -> int:
    return int(np.prod([dims[s] for s in sites]))


def is_hermitian(mat: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.allclose(mat, mat.conj().T, rtol=0.0, atol=tol))


@dataclass(frozen=True, eq=False)
class LocalTerm:
    """Hermitian block acting on a few subsystems."""

    sites: tuple[int, ...]
    block: np.ndarray

    def __init__(self, sites: Sequence[int], block):
        mat = _as_matrix(block)
        if not is_hermitian(mat):
            raise ValidationError("local term block is not Hermitian")
        mat.setflags(write=False)
        object.__setattr__(self, "sites", tuple(int(s) for s in sites))
        object.__setattr__(self, "block", mat)

    def validate(self, dims) -> None:
        _check_sites(self.sites, dims)
        if self.block.shape[0] != _local_dim(self.sites, dims):
            raise ShapeError(
                f"block of size {self.block.shape[0]} does not match sites {self.sites} in dims {tuple(dims)}"
            )


@dataclass(frozen=True, eq=False)
class HamiltonianSum:
    """H = sum of local terms over a fixed tensor-product space."""

    dims: tuple[int, ...]
    terms: tuple[LocalTerm, ...]

    def __init__(self, dims, terms):
        dims = tuple(int(d) for d in dims)
        terms = tuple(terms)
        if not terms:
            raise ValidationError("a Hamiltonian needs at least one term")
        for term in terms:
            term.validate(dims)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "terms", terms)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def disjoint_supports(self) -> bool:
        seen: set[int] = set()
        for term in self.terms:
            if seen.intersection(term.sites):
                return False
            seen.update(term.sites)
        return True

    def dense(self) -> np.ndarray:
        return sum(embed_local(t, self.dims) for t in self.terms)

    def to_json(self) -> dict:
        return {
            "dims": list(self.dims),
            "terms": [
                {"sites": list(t.sites), "block_re": t.block.real.tolist(), "block_im": t.block.imag.tolist()}
                for t in self.terms
            ],
        }

    @classmethod
    def from_json(cls, record: dict) -> "HamiltonianSum":
        try:
            terms = [
                LocalTerm(
                    t["sites"],
                    np.asarray(t["block_re"], dtype=float) + 1j * np.asarray(t.get("block_im", 0.0), dtype=float),
                )
                for t in record["terms"]
            ]
            return cls(record["dims"], terms)
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed Hamiltonian record: {exc}") from exc


@dataclass(frozen=True, eq=False)
class UnitaryFactorization:
    """Ordered (sites, block) pairs; ``factors[0]`` acts on the ket first."""

    dims: tuple[int, ...]
    factors: tuple[tuple[tuple[int, ...], np.ndarray], ...]

    def __init__(self, dims, factors, check: bool = True):
        dims = tuple(int(d) for d in dims)
        cleaned = []
        for sites, block in factors:
            sites = _check_sites(sites, dims)
            mat = _as_matrix(block)
            if mat.shape[0] != _local_dim(sites, dims):
                raise ShapeError(f"factor block size {mat.shape[0]} does not match sites {sites}")
            if check and not np.allclose(mat @ mat.conj().T, np.eye(mat.shape[0]), rtol=0.0, atol=UNITARY_TOL):
                raise ValidationError(f"factor on sites {sites} is not unitary")
            mat.setflags(write=False)
            cleaned.append((sites, mat))
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "factors", tuple(cleaned))

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def __len__(self) -> int:
        return len(self.factors)

    def apply(self, state: PureState) -> PureState:
        return PureState._unchecked(self.apply_vector(state.amplitudes), state.dims)

    def apply_vector(self, vec: np.ndarray) -> np.ndarray:
        for sites, block in self.factors:
            vec = _contract(sites, block, vec, self.dims)
        return vec

    def adjoint(self) -> "UnitaryFactorization":
        return UnitaryFactorization(
            self.dims, [(s, b.conj().T) for s, b in reversed(self.factors)], check=False
        )

    def then(self, other: "UnitaryFactorization") -> "UnitaryFactorization":
        """Factorization applying ``self`` first and ``other`` second."""
        if other.dims != self.dims:
            raise ShapeError("cannot compose factorizations over different dims")
        return UnitaryFactorization(self.dims, self.factors + other.factors, check=False)

    def power(self, j: int) -> "UnitaryFactorization":
        if j < 0:
            raise ValidationError("power must be non-negative")
        return UnitaryFactorization(self.dims, self.factors * j, check=False)

    def fused(self) -> "UnitaryFactorization":
        """Merge factors on identical sites when everything between them commutes.

        A later factor is folded into an earlier one on the same sites if
        all factors in between touch disjoint sites, which leaves the
        operator unchanged.
        """
        out: list[list] = []
        for sites, block in self.factors:
            target = None
            for idx in range(len(out) - 1, -1, -1):
                prev_sites = out[idx][0]
                if prev_sites == sites:
                    target = idx
                    break
                if set(prev_sites) & set(sites):
                    break
            if target is None:
                out.append([sites, block])
            else:
                out[target][1] = block @ out[target][1]
        return UnitaryFactorization(self.dims, [tuple(f) for f in out], check=False)

    def dense(self) -> np.ndarray:
        _dense_guard(self.size)
        mat = np.eye(self.size, dtype=np.complex128)
        for sites, block in self.factors:
            mat = embed_block(sites, block, self.dims) @ mat
        return mat


Operator = Union[np.ndarray, UnitaryFactorization]


@dataclass(frozen=True, eq=False)
class ObservableSpec:
    """Observable in spectral form.

    ``assignment[i]`` is the index into ``eigenvalues`` attached to basis
    vector ``i``.  The eigenbasis is either a dense matrix whose *columns*
    are the vectors, or ``None`` for the computational basis, optionally
    dressed with per-vector ``phases`` (then vector ``i`` is
    ``phases[i] * e_i``).
    """

    eigenvalues: np.ndarray
    assignment: np.ndarray
    basis: np.ndarray | None = None
    phases: np.ndarray | None = None
    dims: tuple[int, ...] | None = None

    def __post_init__(self):
        vals = np.asarray(self.eigenvalues, dtype=float).reshape(-1)
        assign = np.asarray(self.assignment, dtype=np.int64).reshape(-1)
        D = assign.size
        dims = (D,) if self.dims is None else tuple(int(d) for d in self.dims)
        if int(np.prod(dims)) != D:
            raise ShapeError(f"dims {dims} do not match {D} basis vectors")
        if vals.size == 0:
            raise ValidationError("observable needs at least one eigenvalue")
        if vals.size > 1 and np.min(np.diff(np.sort(vals))) <= EIGEN_MERGE_TOL:
            raise ValidationError("eigenvalues must be pairwise distinct (separation > 1e-9)")
        if assign.min() < 0 or assign.max() >= vals.size:
            raise ValidationError("assignment refers to a non-existent eigenvalue")
        basis = self.basis
        phases = self.phases
        if basis is not None:
            basis = np.array(basis, dtype=np.complex128)
            if basis.shape != (D, D):
                raise ShapeError(f"basis must be {D}x{D}, got {basis.shape}")
            if not np.allclose(basis.conj().T @ basis, np.eye(D), rtol=0.0, atol=1e-10):
                raise ValidationError("eigenbasis is not orthonormal")
            if phases is not None:
                raise ValidationError("give either a dense basis or phases, not both")
        if phases is not None:
            phases = np.array(phases, dtype=np.complex128).reshape(-1)
            if phases.size != D or not np.allclose(np.abs(phases), 1.0, rtol=0.0, atol=1e-10):
                raise ValidationError("phases must be unit-modulus, one per basis vector")
        for arr in (vals, assign, basis, phases):
            if arr is not None:
                arr.setflags(write=False)
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "assignment", assign)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "dims", dims)

    @property
    def size(self) -> int:
        return self.assignment.size

    @classmethod
    def from_values(cls, values, basis=None, phases=None, dims=None) -> "ObservableSpec":
        """Group per-vector values into sorted distinct eigenvalues.

        Values closer than 1e-9 to their neighbour merge into one spectral
        point (represented by the first value of the run).
        """
        values = np.asarray(values, dtype=float).reshape(-1)
        order = np.argsort(values, kind="stable")
        sorted_vals = values[order]
        group = np.concatenate([[0], np.cumsum(np.diff(sorted_vals) > EIGEN_MERGE_TOL)])
        eig = sorted_vals[np.concatenate([[True], np.diff(group) > 0])]
        assignment = np.empty(values.size, dtype=np.int64)
        assignment[order] = group
        return cls(eig, assignment, basis=basis, phases=phases, dims=dims)

    @classmethod
    def from_hermitian(cls, matrix, dims=None) -> "ObservableSpec":
        mat = _as_matrix(matrix)
        if not is_hermitian(mat, 1e-10):
            raise ValidationError("observable matrix is not Hermitian")
        w, v = np.linalg.eigh(mat)
        return cls.from_values(w, basis=v, dims=dims)

    @classmethod
    def diagonal(cls, values, dims=None) -> "ObservableSpec":
        return cls.from_values(values, dims=dims)

    def coefficients(self, vec: np.ndarray) -> np.ndarray:
        """Components <u_i|psi> of ``vec`` in the eigenbasis."""
        if vec.shape[-1] != self.size:
            raise ShapeError(f"vector of length {vec.shape[-1]} vs observable size {self.size}")
        if self.basis is not None:
            return self.basis.conj().T @ vec
        if self.phases is not None:
            return self.phases.conj() * vec
        return vec

    def vectors(self, coeffs: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`coefficients`."""
        if self.basis is not None:
            return self.basis @ coeffs
        if self.phases is not None:
            return self.phases * coeffs
        return coeffs

    def values_per_vector(self) -> np.ndarray:
        return self.eigenvalues[self.assignment]

    def apply_vector(self, vec: np.ndarray, power: int = 1) -> np.ndarray:
        """X**power applied to ``vec`` without forming X."""
        return self.vectors(self.values_per_vector() ** power * self.coefficients(vec))

    def dense(self) -> np.ndarray:
        _dense_guard(self.size)
        return self.vectors(np.diag(self.values_per_vector()).astype(np.complex128)) @ (
            self.vectors(np.eye(self.size, dtype=np.complex128)).conj().T
        )

    def to_json(self) -> dict:
        record = {"eigenvalues": self.eigenvalues.tolist(), "assignment": self.assignment.tolist(), "dims": list(self.dims)}
        if self.basis is not None:
            # one row per eigenvector
            record["basis_re"] = self.basis.T.real.tolist()
            record["basis_im"] = self.basis.T.imag.tolist()
        elif self.phases is not None:
            record["phases_re"] = self.phases.real.tolist()
            record["phases_im"] = self.phases.imag.tolist()
        return record

    @classmethod
    def from_json(cls, record: dict) -> "ObservableSpec":
        try:
            basis = phases = None
            if "basis_re" in record:
                rows = np.asarray(record["basis_re"], dtype=float) + 1j * np.asarray(
                    record.get("basis_im", 0.0), dtype=float
                )
                basis = rows.T
            elif "phases_re" in record:
                phases = np.asarray(record["phases_re"], dtype=float) + 1j * np.asarray(
                    record.get("phases_im", 0.0), dtype=float
                )
            return cls(record["eigenvalues"], record["assignment"], basis=basis, phases=phases, dims=record.get("dims"))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed observable record: {exc}") from exc


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _dense_guard(D: int, limit: int = DENSE_LIMIT) -> None:
    if D > limit:
        raise CapacityError(f"dense materialization of dimension {D} exceeds guard {limit}")


def embed_block(sites, block, dims) -> np.ndarray:
    """Full-space matrix of ``block`` on ``sites`` with identity elsewhere."""
    dims = tuple(dims)
    sites = _check_sites(sites, dims)
    D = int(np.prod(dims))
    _dense_guard(D)
    block = _as_matrix(block)
    if block.shape[0] != _local_dim(sites, dims):
        raise ShapeError(f"block size {block.shape[0]} does not match sites {sites}")
    rest = [s for s in range(len(dims)) if s not in sites]
    d_rest = int(np.prod([dims[s] for s in rest])) if rest else 1
    # Local-first ordering: (rest..., sites...) little-endian is kron(I_rest, block)
    # whose row-major tensor axes run most-significant first.
    big = np.kron(np.eye(d_rest), block)
    order = list(sites) + rest  # subsystem for each little-endian position
    n = len(dims)
    shape = [dims[s] for s in reversed(order)]
    tensor = big.reshape(shape + shape)
    # axis a (0 = most significant) in the local ordering holds subsystem order[n-1-a];
    # in the target ordering subsystem s lives at axis n-1-s.
    src_for_target = [0] * n
    for a in range(n):
        s = order[n - 1 - a]
        src_for_target[n - 1 - s] = a
    perm = src_for_target + [n + a for a in src_for_target]
    return tensor.transpose(perm).reshape(D, D)


def embed_local(term: LocalTerm, dims) -> np.ndarray:
    """Kronecker embedding of a local term into the full D x D space."""
    return embed_block(term.sites, term.block, dims)


def _contract(sites, block, vec: np.ndarray, dims) -> np.ndarray:
    n = len(dims)
    r = len(sites)
    psi = vec.reshape(tuple(reversed(dims)))
    axes = [n - 1 - s for s in reversed(sites)]
    local_shape = [dims[s] for s in reversed(sites)]
    blk = block.reshape(local_shape + local_shape)
    out = np.tensordot(blk, psi, axes=(list(range(r, 2 * r)), axes))
    out = np.moveaxis(out, list(range(r)), axes)
    return out.reshape(-1)


def apply_factor(sites, block, state: PureState) -> PureState:
    """Apply a local block to a state by tensor contraction.

    Works for any square block (unitary or not); the result is returned
    without a norm check so Hermitian blocks can be applied as well.
    """
    sites = _check_sites(sites, state.dims)
    block = _as_matrix(block)
    if block.shape[0] != _local_dim(sites, state.dims):
        raise ShapeError(f"block size {block.shape[0]} does not match sites {sites} in dims {state.dims}")
    return PureState._unchecked(_contract(sites, block, state.amplitudes, state.dims), state.dims)


def hermitian_exponential(block: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i block dt) via eigendecomposition of a Hermitian matrix."""
    w, v = np.linalg.eigh(block)
    return (v * np.exp(-1j * w * dt)) @ v.conj().T


def local_exponential(term: LocalTerm, dt: float) -> tuple[tuple[int, ...], np.ndarray]:
    if not np.isfinite(dt):
        raise ValidationError(f"time step must be finite, got {dt}")
    if not is_hermitian(term.block):
        raise ValidationError("local term block is not Hermitian")
    return term.sites, hermitian_exponential(term.block, dt)


def exact_propagator(H: HamiltonianSum, t: float) -> Operator:
    """exp(-iHt).

    Returns a :class:`UnitaryFactorization` of per-term exponentials when the
    term supports are pairwise disjoint (the terms then commute), otherwise
    a dense matrix.
    """
    if H.disjoint_supports():
        return UnitaryFactorization(H.dims, [local_exponential(term, t) for term in H.terms], check=False)
    _dense_guard(H.size)
    return hermitian_exponential(H.dense(), t)


def apply_operator(op: Operator, state: PureState) -> PureState:
    if isinstance(op, UnitaryFactorization):
        if op.dims != state.dims:
            raise ShapeError(f"operator dims {op.dims} vs state dims {state.dims}")
        return op.apply(state)
    op = np.asarray(op)
    if op.shape != (state.size, state.size):
        raise ShapeError(f"operator shape {op.shape} vs state size {state.size}")
    return PureState._unchecked(op @ state.amplitudes, state.dims)


def _size(op: Operator) -> int:
    return op.size if isinstance(op, UnitaryFactorization) else np.asarray(op).shape[0]


def _to_dense(op: Operator) -> np.ndarray:
    return op.dense() if isinstance(op, UnitaryFactorization) else np.asarray(op, dtype=np.complex128)


def _matvec(op: Operator, vec: np.ndarray) -> np.ndarray:
    return op.apply_vector(vec) if isinstance(op, UnitaryFactorization) else op @ vec


def _rmatvec(op: Operator, vec: np.ndarray) -> np.ndarray:
    if isinstance(op, UnitaryFactorization):
        return op.adjoint().apply_vector(vec)
    return op.conj().T @ vec


def operator_distance(
    U1: Operator,
    U2: Operator,
    *,
    start: np.ndarray | None = None,
    rtol: float = 1e-8,
    max_iter: int = 10000,
    dense_limit: int = SVD_LIMIT,
) -> float:
    """Gamma(U1, U2): spectral norm of U1 - U2.

    Dense SVD up to ``dense_limit``; above it, power iteration on
    (U1 - U2)^dagger (U1 - U2) from ``start`` (a fixed seeded vector by
    default).
    """
    D = _size(U1)
    if _size(U2) != D:
        raise ShapeError(f"operators act on different spaces: {D} vs {_size(U2)}")
    if D <= dense_limit:
        return float(np.linalg.norm(_to_dense(U1) - _to_dense(U2), 2))
    if D > DENSE_LIMIT:
        raise CapacityError(f"operator dimension {D} exceeds {DENSE_LIMIT}")

    if start is None:
        rng = np.random.default_rng(0)
        start = rng.standard_normal(D) + 1j * rng.standard_normal(D)
    x = np.asarray(start, dtype=np.complex128).reshape(-1)
    if x.size != D:
        raise ShapeError("start vector has the wrong length")
    x = x / np.linalg.norm(x)

    def diff(v):
        return _matvec(U1, v) - _matvec(U2, v)

    def diff_h(v):
        return _rmatvec(U1, v) - _rmatvec(U2, v)

    lam_old = None
    lam = 0.0
    for _ in range(max_iter):
        y = diff_h(diff(x))
        lam = float(np.real(np.vdot(x, y)))
        norm_y = np.linalg.norm(y)
        if norm_y == 0.0:
            return 0.0
        if lam_old is not None and abs(lam - lam_old) <= rtol * abs(lam):
            return float(np.sqrt(max(lam, 0.0)))
        lam_old = lam
        x = y / norm_y
    residual = abs(lam - lam_old) / abs(lam) if lam else float("inf")
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations", residual=residual)
