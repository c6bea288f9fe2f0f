import numpy as np
import pytest
from numpy.testing import assert_allclose

from entsquash.operators import (
    DensityMatrix,
    HermitianOperator,
    SubsystemIndexError,
    asoperator,
    identity,
    min_eigenvalue,
    partial_trace,
    partial_transpose,
    projector,
    random_density,
    random_hermitian,
    spectral,
    tensor,
    trace_norm,
    trace_norm_variational,
)

SZ = np.array([[1, 0], [0, -1]], dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
BELL = np.array([0, 1, 1, 0]) / np.sqrt(2)  # (|01> + |10>)/sqrt2


def bell_projector():
    return projector(BELL, (2, 2))


class TestConstruction:
    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError, match="not Hermitian"):
            HermitianOperator(np.array([[0, 1], [0, 0]]), (2,))

    def test_rejects_dims_mismatch(self):
        with pytest.raises(ValueError, match="total dimension"):
            HermitianOperator(np.eye(4), (2, 3))

    def test_rejects_nonsquare(self):
        with pytest.raises(ValueError, match="square"):
            HermitianOperator(np.ones((2, 3)), (2,))

    def test_symmetrizes_input_noise(self):
        mat = np.array([[1.0, 1e-13j], [0.0, 2.0]])
        op = HermitianOperator(mat, (2,))
        assert_allclose(op.entries, op.entries.conj().T)

    def test_entries_read_only(self):
        op = identity((2,))
        with pytest.raises(ValueError):
            op.entries[0, 0] = 5.0

    def test_payload_round_trip(self):
        rng = np.random.default_rng(0)
        op = random_hermitian(6, rng).with_dims((2, 3))
        back = HermitianOperator.from_payload(op.to_payload())
        assert back.dims == (2, 3)
        assert_allclose(back.entries, op.entries)


class TestDensityMatrix:
    def test_rejects_negative_eigenvalue(self):
        with pytest.raises(ValueError, match="positive semidefinite"):
            DensityMatrix(HermitianOperator(np.diag([1.5, -0.5]), (2,)))

    def test_rejects_trace_mismatch(self):
        with pytest.raises(ValueError, match="trace"):
            DensityMatrix(identity((2,)))

    def test_subnormalized_carrier(self):
        dm = DensityMatrix(0.25 * identity((2,)), declared_trace=0.5)
        assert dm.dim == 2


class TestTensor:
    def test_sigma_z_pair_diagonal(self):
        op = tensor(HermitianOperator(SZ, (2,)), HermitianOperator(SZ, (2,)))
        assert op.entries[0, 0] == 1.0  # |00> eigenvalue product
        assert op.dims == (2, 2)

    def test_identity_case(self):
        assert_allclose(tensor(identity((2,)), identity((2,))).entries, np.eye(4))

    def test_rank_one_product(self):
        p0 = projector(np.array([1, 0]))
        p1 = projector(np.array([0, 1]))
        out = tensor(p0, p1)
        expected = np.zeros((4, 4))
        expected[1, 1] = 1.0  # |01><01|
        assert_allclose(out.entries, expected)


class TestPartialTranspose:
    def test_identity_invariant(self):
        op = 0.25 * identity((2, 2))
        assert_allclose(partial_transpose(op, 0).entries, op.entries)

    def test_bell_eigenvalues(self):
        # oracle: eigendecomposition of the explicit 4x4 partial transpose
        pt = partial_transpose(bell_projector(), 0)
        assert_allclose(np.linalg.eigvalsh(pt.entries), [-0.5, 0.5, 0.5, 0.5], atol=1e-12)

    def test_product_state_stays_psd(self):
        rng = np.random.default_rng(1)
        rho_a = random_density(2, rng)
        rho_b = random_density(3, rng)
        prod = tensor(rho_a.op, rho_b.op)
        pt = partial_transpose(prod, 0)
        assert min_eigenvalue(pt) >= -1e-12
        assert_allclose(pt.entries, np.kron(rho_a.entries.T, rho_b.entries))

    def test_involution(self):
        rng = np.random.default_rng(2)
        op = random_hermitian(12, rng).with_dims((3, 4))
        twice = partial_transpose(partial_transpose(op, 1), 1)
        assert np.max(np.abs(twice.entries - op.entries)) <= 1e-12

    def test_index_out_of_range(self):
        with pytest.raises(SubsystemIndexError):
            partial_transpose(identity((2, 2)), 2)


class TestPartialTrace:
    def test_traces_out_unit_factor(self):
        rng = np.random.default_rng(3)
        rho_a = random_density(3, rng)
        rho_b = random_density(2, rng)
        out = partial_trace(tensor(rho_a.op, rho_b.op), 1)
        assert_allclose(out.entries, rho_a.entries, atol=1e-12)

    def test_bell_marginal_contraction_oracle(self):
        # direct contraction: (tr_A X)[j, l] = sum_i X[(i, j), (i, l)]
        x = bell_projector().entries
        oracle = np.zeros((2, 2), dtype=complex)
        for j in range(2):
            for l in range(2):
                for i in range(2):
                    oracle[j, l] += x[i * 2 + j, i * 2 + l]
        out = partial_trace(bell_projector(), 0)
        assert_allclose(out.entries, oracle, atol=1e-15)
        assert_allclose(oracle, np.eye(2) / 2, atol=1e-15)

    def test_trace_preserved(self):
        rng = np.random.default_rng(4)
        op = random_hermitian(12, rng).with_dims((2, 3, 2))
        for k in range(3):
            assert abs(partial_trace(op, k).trace() - op.trace()) <= 1e-12

    def test_compose_with_tensor(self):
        rng = np.random.default_rng(5)
        a = random_hermitian(3, rng)
        b = random_hermitian(4, rng)
        out = partial_trace(tensor(a, b), 1)
        assert np.max(np.abs(out.entries - b.trace() * a.entries)) <= 1e-12


class TestTraceNorm:
    def test_density_matrix_is_one(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            assert abs(trace_norm(random_density(5, rng).op) - 1.0) <= 1e-12

    def test_partially_transposed_bell(self):
        assert abs(trace_norm(partial_transpose(bell_projector(), 0)) - 2.0) <= 1e-12

    def test_sigma_z(self):
        assert abs(trace_norm(HermitianOperator(SZ, (2,))) - 2.0) <= 1e-12

    def test_dominates_trace(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            op = random_hermitian(6, rng)
            assert trace_norm(op) >= abs(op.trace()) - 1e-12

    def test_variational_form_agrees(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            op = random_hermitian(7, rng)
            assert abs(trace_norm(op) - trace_norm_variational(op)) <= 1e-10


class TestSpectral:
    def test_diagonal(self):
        dec = spectral(HermitianOperator(np.diag([3.0, 1.0, 2.0]), (3,)))
        assert_allclose(dec.eigenvalues, [1.0, 2.0, 3.0])

    def test_sigma_x(self):
        dec = spectral(HermitianOperator(SX, (2,)))
        assert_allclose(dec.eigenvalues, [-1.0, 1.0])

    def test_random_reconstruction(self):
        rng = np.random.default_rng(9)
        op = random_hermitian(8, rng)
        dec = spectral(op)
        scale = np.max(np.abs(op.entries))
        assert np.max(np.abs(dec.reconstruct() - op.entries)) <= 1e-9 * scale

    def test_orthonormal_vectors(self):
        rng = np.random.default_rng(10)
        dec = spectral(random_hermitian(8, rng))
        gram = dec.eigenvectors.conj().T @ dec.eigenvectors
        assert np.max(np.abs(gram - np.eye(8))) <= 1e-10


def test_asoperator_coercions():
    dm = random_density(4, np.random.default_rng(11))
    assert asoperator(dm).dims == (4,)
    assert asoperator(dm, (2, 2)).dims == (2, 2)
    assert asoperator(np.eye(2)).dims == (2,)
