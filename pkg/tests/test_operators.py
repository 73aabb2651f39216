import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from qmcsim import (
    CapacityError,
    ConvergenceError,
    HamiltonianSum,
    LocalTerm,
    ObservableSpec,
    PureState,
    ShapeError,
    UnitaryFactorization,
    ValidationError,
    apply_factor,
    embed_local,
    exact_propagator,
    local_exponential,
    operator_distance,
)
from qmcsim.operators import apply_operator, embed_block

from conftest import random_hermitian, random_state, random_unitary

X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.diag([1.0, -1.0]).astype(complex)


def digits(index, dims):
    out = []
    for d in dims:
        out.append(index % d)
        index //= d
    return out


def brute_force_embed(sites, block, dims):
    """Entry-by-entry embedding from mixed-radix index arithmetic."""
    D = int(np.prod(dims))
    out = np.zeros((D, D), dtype=complex)
    for i in range(D):
        di = digits(i, dims)
        for j in range(D):
            dj = digits(j, dims)
            if any(di[s] != dj[s] for s in range(len(dims)) if s not in sites):
                continue
            li = lj = 0
            scale = 1
            for s in sites:
                li += di[s] * scale
                lj += dj[s] * scale
                scale *= dims[s]
            out[i, j] = block[li, lj]
    return out


class TestEmbedding:
    def test_identity_block(self):
        assert np.array_equal(embed_local(LocalTerm([1], np.eye(3)), [2, 3, 2]), np.eye(12))

    def test_pauli_z_on_site_zero_is_little_endian(self):
        mat = embed_local(LocalTerm([0], Z), [2, 2])
        np.testing.assert_array_equal(mat, np.kron(np.eye(2), Z))
        np.testing.assert_array_equal(np.diag(mat), [1, -1, 1, -1])

    def test_two_site_block_matches_index_loop(self, rng):
        block = random_hermitian(rng, 4)
        np.testing.assert_allclose(
            embed_local(LocalTerm([0, 1], block), [2, 2, 2]), brute_force_embed([0, 1], block, [2, 2, 2]), atol=0
        )

    @pytest.mark.parametrize("sites", [(2, 0), (1, 2), (0, 2), (2,), (1,)])
    def test_mixed_radix_any_site_order(self, rng, sites):
        dims = [2, 3, 2]
        block = random_hermitian(rng, int(np.prod([dims[s] for s in sites])))
        np.testing.assert_allclose(embed_block(sites, block, dims), brute_force_embed(sites, block, dims), atol=1e-15)

    def test_invalid_sites(self):
        with pytest.raises(ShapeError):
            embed_block([3], Z, [2, 2])
        with pytest.raises(ShapeError):
            embed_block([0, 0], np.eye(4), [2, 2])

    def test_block_size_mismatch(self):
        with pytest.raises(ShapeError):
            embed_block([0], np.eye(3), [2, 2])

    def test_capacity_guard(self):
        with pytest.raises(CapacityError):
            embed_block([0], Z, [2] * 13)


class TestApplyFactor:
    def test_identity_block(self, rng):
        psi = random_state(rng, [2, 2, 2])
        np.testing.assert_array_equal(apply_factor([1], np.eye(2), psi).amplitudes, psi.amplitudes)

    def test_unitary_on_eight_qubits_matches_dense(self, rng):
        U = random_unitary(rng, 4)
        psi = random_state(rng, [2] * 8)
        dense = brute_force_embed([1, 2], U, [2] * 8) @ psi.amplitudes
        out = apply_factor([1, 2], U, psi)
        np.testing.assert_allclose(out.amplitudes, dense, atol=1e-12)
        assert out.norm() == pytest.approx(1.0, abs=1e-10)

    def test_unitary_on_twelve_qubits_product_state(self, rng):
        # product state: the two touched qubits transform as a 4-vector, the rest factor out
        singles = [PureState.normalized(rng.standard_normal(2) + 1j * rng.standard_normal(2)).amplitudes for _ in range(12)]
        full = singles[0]
        for q in singles[1:]:
            full = np.kron(q, full)
        U = random_unitary(rng, 4)
        out = apply_factor([1, 2], U, PureState(full, [2] * 12)).amplitudes
        pair = U @ np.kron(singles[2], singles[1])
        expected = singles[0]
        expected = np.kron(pair, expected)
        for q in singles[3:]:
            expected = np.kron(q, expected)
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_hermitian_block_second_moment(self, rng):
        Hb = random_hermitian(rng, 2)
        psi = random_state(rng, [2, 2, 2])
        out = apply_factor([2], Hb, psi)
        dense = brute_force_embed([2], Hb, [2, 2, 2])
        assert out.norm() ** 2 == pytest.approx(np.vdot(psi.amplitudes, dense @ dense @ psi.amplitudes).real, abs=1e-10)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            apply_factor([0, 1], np.eye(2), random_state(rng, [2, 2]))

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(st.integers(2, 4), min_size=1, max_size=4).filter(lambda d: np.prod(d) <= 256),
        st.integers(0, 2**32 - 1),
        st.data(),
    )
    def test_contraction_equals_dense_embedding(self, dims, seed, data):
        rng = np.random.default_rng(seed)
        sites = data.draw(st.lists(st.integers(0, len(dims) - 1), min_size=1, max_size=min(2, len(dims)), unique=True))
        block = random_hermitian(rng, int(np.prod([dims[s] for s in sites])))
        term = LocalTerm(sites, block)
        psi = random_state(rng, dims)
        np.testing.assert_allclose(
            apply_factor(sites, block, psi).amplitudes, embed_local(term, dims) @ psi.amplitudes, atol=1e-12
        )


class TestLocalExponential:
    def test_zero_time_is_identity(self, rng):
        _, U = local_exponential(LocalTerm([0], random_hermitian(rng, 3)), 0.0)
        np.testing.assert_allclose(U, np.eye(3), atol=1e-14)

    def test_pauli_z_phases(self):
        delta = 0.37
        _, U = local_exponential(LocalTerm([0], Z), delta)
        np.testing.assert_allclose(U, np.diag([np.exp(-1j * delta), np.exp(1j * delta)]), atol=1e-15)

    def test_pauli_x_quarter_turn(self):
        _, U = local_exponential(LocalTerm([0], X), math.pi / 2)
        np.testing.assert_allclose(U, [[0, -1j], [-1j, 0]], atol=1e-15)

    def test_matches_scipy_expm(self, rng):
        Hb = random_hermitian(rng, 6)
        _, U = local_exponential(LocalTerm([0, 1], Hb), 0.8)
        np.testing.assert_allclose(U, expm(-0.8j * Hb), atol=1e-12)
        np.testing.assert_allclose(U @ U.conj().T, np.eye(6), atol=1e-10)

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValidationError):
            LocalTerm([0], [[0, 1], [0, 0]])

    def test_rejects_non_finite(self):
        with pytest.raises(ValidationError):
            local_exponential(LocalTerm([0], Z), float("nan"))


class TestExactPropagator:
    def test_zero_time(self, rng):
        H = HamiltonianSum([2, 2], [LocalTerm([0, 1], random_hermitian(rng, 4)), LocalTerm([0], Z)])
        np.testing.assert_allclose(exact_propagator(H, 0.0), np.eye(4), atol=1e-14)

    def test_diagonal(self):
        H = HamiltonianSum([3], [LocalTerm([0], np.diag([0.0, 1.0, 2.0]))])
        U = exact_propagator(H, 1.0)
        np.testing.assert_allclose(U.dense(), np.diag(np.exp(-1j * np.arange(3))), atol=1e-15)

    def test_disjoint_supports_factorize(self, rng):
        dims = [2, 3, 2]
        terms = [LocalTerm([0], random_hermitian(rng, 2)), LocalTerm([1, 2], random_hermitian(rng, 6))]
        H = HamiltonianSum(dims, terms)
        U = exact_propagator(H, 0.7)
        assert isinstance(U, UnitaryFactorization)
        dense_H = sum(brute_force_embed(t.sites, t.block, dims) for t in terms)
        np.testing.assert_allclose(U.dense(), expm(-0.7j * dense_H), atol=1e-12)

    def test_overlapping_supports_dense(self, rng):
        H = HamiltonianSum([2, 2], [LocalTerm([0, 1], random_hermitian(rng, 4)), LocalTerm([1], X)])
        U = exact_propagator(H, 1.3)
        assert isinstance(U, np.ndarray)
        np.testing.assert_allclose(U, expm(-1.3j * H.dense()), atol=1e-12)
        np.testing.assert_allclose(U @ U.conj().T, np.eye(4), atol=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(-2, 2), st.floats(-2, 2))
    def test_group_property(self, seed, s, t):
        rng = np.random.default_rng(seed)
        H = HamiltonianSum([2, 2, 2], [LocalTerm([0, 1], random_hermitian(rng, 4)), LocalTerm([1, 2], random_hermitian(rng, 4))])
        lhs = exact_propagator(H, s + t)
        rhs = exact_propagator(H, s) @ exact_propagator(H, t)
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_capacity(self):
        terms = [LocalTerm([0, 1], np.eye(4)), LocalTerm([1, 2], np.eye(4))]
        with pytest.raises(CapacityError):
            exact_propagator(HamiltonianSum([2] * 13, terms), 1.0)

    def test_empty_hamiltonian(self):
        with pytest.raises(ValidationError):
            HamiltonianSum([2], [])


class TestOperatorDistance:
    def test_self_distance(self, rng):
        U = random_unitary(rng, 8)
        assert operator_distance(U, U) == 0

    def test_scalar_multiple(self):
        assert operator_distance(np.eye(4), 1j * np.eye(4)) == pytest.approx(math.sqrt(2), abs=1e-14)

    def test_random_pair(self, rng):
        U1, U2 = random_unitary(rng, 8), random_unitary(rng, 8)
        gamma = operator_distance(U1, U2)
        diff = U1 - U2
        oracle = math.sqrt(np.linalg.eigvalsh(diff.conj().T @ diff).max())
        assert gamma == pytest.approx(oracle, abs=1e-9)
        phis = rng.standard_normal((8, 1000)) + 1j * rng.standard_normal((8, 1000))
        phis /= np.linalg.norm(phis, axis=0)
        assert gamma >= np.linalg.norm(diff @ phis, axis=0).max()

    def test_power_iteration_path(self, rng):
        dims = [2] * 7
        H = HamiltonianSum(dims, [LocalTerm([k], random_hermitian(rng, 2)) for k in range(7)])
        U1 = exact_propagator(H, 0.3)
        U2 = exact_propagator(H, 0.31)
        gamma = operator_distance(U1, U2)
        oracle = np.linalg.norm(U1.dense() - U2.dense(), 2)
        assert gamma == pytest.approx(oracle, rel=1e-6)

    def test_iteration_cap(self, rng):
        dims = [2] * 7
        H = HamiltonianSum(dims, [LocalTerm([k], random_hermitian(rng, 2)) for k in range(7)])
        with pytest.raises(ConvergenceError) as info:
            operator_distance(exact_propagator(H, 0.3), exact_propagator(H, 0.5), max_iter=2)
        assert info.value.residual is not None

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            operator_distance(np.eye(2), np.eye(4))


class TestUnitaryFactorization:
    def test_rejects_non_unitary(self):
        with pytest.raises(ValidationError):
            UnitaryFactorization([2], [((0,), 2 * np.eye(2))])

    def test_preserves_norm(self, rng):
        dims = [2, 3, 2]
        U = UnitaryFactorization(dims, [((0, 1), random_unitary(rng, 6)), ((2,), random_unitary(rng, 2)), ((1, 2), random_unitary(rng, 6))])
        for _ in range(1000):
            psi = random_state(rng, dims)
            assert abs(U.apply(psi).norm() - 1) < 1e-10

    def test_fused_equals_unfused(self, rng):
        dims = [2, 2, 2]
        factors = [((0,), random_unitary(rng, 2)), ((1,), random_unitary(rng, 2)), ((0,), random_unitary(rng, 2)),
                   ((0, 1), random_unitary(rng, 4)), ((2,), random_unitary(rng, 2)), ((0,), random_unitary(rng, 2))]
        U = UnitaryFactorization(dims, factors)
        fused = U.fused()
        assert len(fused) < len(U)
        np.testing.assert_allclose(fused.dense(), U.dense(), atol=1e-13)

    def test_adjoint_inverts(self, rng):
        U = UnitaryFactorization([2, 2], [((0, 1), random_unitary(rng, 4)), ((1,), random_unitary(rng, 2))])
        np.testing.assert_allclose(U.then(U.adjoint()).dense(), np.eye(4), atol=1e-13)

    def test_apply_operator_shape_check(self, rng):
        with pytest.raises(ShapeError):
            apply_operator(np.eye(3), random_state(rng, [2]))


class TestObservableSpec:
    def test_groups_degenerate_values(self):
        obs = ObservableSpec.diagonal([1.0, 2.0, 1.0 + 1e-12, 3.0])
        assert obs.eigenvalues.tolist() == [1.0, 2.0, 3.0]
        assert obs.assignment.tolist() == [0, 1, 0, 2]

    def test_rejects_repeated_eigenvalues(self):
        with pytest.raises(ValidationError):
            ObservableSpec([1.0, 1.0], [0, 1])

    def test_rejects_non_orthonormal_basis(self):
        with pytest.raises(ValidationError):
            ObservableSpec([0.0, 1.0], [0, 1], basis=[[1, 1], [0, 1]])

    def test_completeness(self, rng):
        obs = ObservableSpec.from_hermitian(random_hermitian(rng, 6))
        assert np.bincount(obs.assignment).sum() == 6
        psi = random_state(rng, [6])
        probs = np.bincount(obs.assignment, weights=np.abs(obs.coefficients(psi.amplitudes)) ** 2)
        assert probs.sum() == pytest.approx(1.0, abs=1e-10)

    def test_dense_reconstruction(self, rng):
        M = random_hermitian(rng, 5)
        np.testing.assert_allclose(ObservableSpec.from_hermitian(M).dense(), M, atol=1e-12)

    def test_phased_basis_is_diagonal(self, rng):
        phases = np.exp(1j * rng.uniform(0, 2 * np.pi, 4))
        obs = ObservableSpec.from_values([0.1, 0.2, 0.3, 0.1], phases=phases)
        np.testing.assert_allclose(obs.dense(), np.diag([0.1, 0.2, 0.3, 0.1]), atol=1e-15)

    def test_json_round_trip(self, rng):
        obs = ObservableSpec.from_hermitian(random_hermitian(rng, 4), dims=[2, 2])
        back = ObservableSpec.from_json(json.loads(json.dumps(obs.to_json())))
        np.testing.assert_allclose(back.dense(), obs.dense(), atol=1e-14)
        assert back.dims == (2, 2)


def test_hamiltonian_json_round_trip(rng):
    H = HamiltonianSum([2, 3], [LocalTerm([1, 0], random_hermitian(rng, 6)), LocalTerm([1], random_hermitian(rng, 3))])
    back = HamiltonianSum.from_json(json.loads(json.dumps(H.to_json())))
    np.testing.assert_allclose(back.dense(), H.dense(), atol=1e-15)
    with pytest.raises(ValidationError):
        HamiltonianSum.from_json({"dims": [2]})
