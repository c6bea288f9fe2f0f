import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from entsquash import maps
from entsquash.maps import adjoint, apply, check_complete_positivity, compose
from entsquash.models import (
    BASIS_KETS,
    PAULI,
    ObservableSet,
    block_slices,
    click_operators,
    dark_count_postprocess,
    difference_operators,
    extract_block,
    full_click_operators,
    ion_trap_sets,
    loss_channel,
    misalignment_channel,
    pauli_targets,
    polarization_model,
    polarized_ket,
    raw_click_povm,
    standard_witness,
    symmetric_embedding,
    target_click_operators,
    werner_state,
)
from entsquash.operators import HermitianOperator, projector, random_density


class TestSymmetricEmbedding:
    def test_single_photon_is_identity(self):
        assert_allclose(symmetric_embedding(1), np.eye(2))

    def test_two_photon_dicke_columns(self):
        v = symmetric_embedding(2)
        assert_allclose(v[:, 0], [1, 0, 0, 0])  # |2,0> -> |00>
        assert_allclose(v[:, 1], [0, 1 / np.sqrt(2), 1 / np.sqrt(2), 0])
        assert_allclose(v[:, 2], [0, 0, 0, 1])  # |0,2> -> |11>

    def test_three_photon_orthogonality(self):
        v = symmetric_embedding(3)
        assert abs(np.vdot(v[:, 1], v[:, 0])) <= 1e-14

    @pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
    def test_isometry(self, n):
        v = symmetric_embedding(n)
        assert np.max(np.abs(v.conj().T @ v - np.eye(n + 1))) <= 1e-12


class TestClickOperators:
    def test_single_photon_no_double_clicks(self):
        ops = click_operators(1, "x")
        assert np.max(np.abs(ops["d"])) == 0.0

    def test_two_photon_z_double_click(self):
        ops = click_operators(2, "z")
        assert_allclose(ops["d"], np.diag([0.0, 1.0, 0.0]))

    @pytest.mark.parametrize("n", [0, 1, 2, 3, 4])
    @pytest.mark.parametrize("beta", ["x", "y", "z"])
    def test_povm_closure_per_block(self, n, beta):
        ops = click_operators(n, beta)
        total = sum(ops.values())
        assert np.max(np.abs(total - np.eye(n + 1))) <= 1e-12

    def test_invalid_basis(self):
        with pytest.raises(ValueError, match="basis"):
            click_operators(2, "w")


class TestFullClickOperators:
    def test_single_photon_block_is_ground_projector(self):
        # the 0-click along z on one photon projects onto |1,0>_z = |0>
        f = full_click_operators(2, "z")
        block = extract_block(f.operator("0").entries, 1, 2)
        assert_allclose(block, np.diag([1.0, 0.0]), atol=1e-14)

    def test_two_photon_block_diagonal(self):
        f = full_click_operators(2, "z")
        block = extract_block(f.operator("0").entries, 2, 2)
        assert_allclose(block, np.diag([1.0, 0.5, 0.0]), atol=1e-14)

    @pytest.mark.parametrize("beta", ["x", "y", "z"])
    def test_click_outcomes_close_on_click_space(self, beta):
        f = full_click_operators(3, beta)
        total = f.operator("0").entries + f.operator("1").entries
        vac = f.operator("vac").entries
        assert_allclose(total + vac, np.eye(f.dim), atol=1e-12)

    def test_vacuum_outcome(self):
        f = full_click_operators(3, "y")
        vac = f.operator("vac").entries
        expected = np.zeros_like(vac)
        expected[0, 0] = 1.0
        assert_allclose(vac, expected)


class TestDifferenceOperators:
    @pytest.mark.parametrize("beta", ["x", "y", "z"])
    def test_single_photon_is_pauli(self, beta):
        d = difference_operators(1, beta)[0]
        assert_allclose(d, PAULI[beta], atol=1e-14)

    def test_two_photon_z(self):
        d = difference_operators(2, "z")[1]
        assert_allclose(d, np.diag([1.0, 0.0, -1.0]), atol=1e-14)

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    @pytest.mark.parametrize("beta", ["x", "y", "z"])
    def test_permutation_expansion(self, n, beta):
        # oracle: explicit sum over all odd-size placements of the basis Pauli
        v = symmetric_embedding(n)
        expansion = np.zeros((2**n, 2**n), dtype=complex)
        for j in range(1, n + 1, 2):
            for positions in itertools.combinations(range(n), j):
                term = np.array([[1.0 + 0j]])
                for site in range(n):
                    term = np.kron(term, PAULI[beta] if site in positions else np.eye(2))
                expansion += term
        expansion /= 2.0 ** (n - 1)
        photon_block = difference_operators(n, beta)[n - 1]
        assert np.max(np.abs(photon_block - v.conj().T @ expansion @ v)) <= 1e-12

    @pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
    def test_eigenvalues_within_unit_interval(self, n):
        for beta in "xyz":
            eigs = np.linalg.eigvalsh(difference_operators(n, beta)[n - 1])
            assert eigs[0] >= -1.0 - 1e-12
            assert eigs[-1] <= 1.0 + 1e-12


class TestTargets:
    @pytest.mark.parametrize("beta", ["x", "y", "z"])
    def test_target_clicks(self, beta):
        t = target_click_operators(beta)
        diff = t.operator("0").entries - t.operator("1").entries
        assert_allclose(diff[1:, 1:], PAULI[beta], atol=1e-14)
        assert_allclose(t.operator("vac").entries, np.diag([1.0, 0.0, 0.0]))

    def test_pauli_targets_complete(self):
        assert maps.is_tomographically_complete(pauli_targets())


class TestLossChannel:
    def test_unit_transmissivity_is_identity(self):
        assert_allclose(
            loss_channel(2, 1.0).choi.entries,
            maps.identity_map(6).choi.entries,
            atol=1e-12,
        )

    def test_zero_transmissivity_all_vacuum(self):
        loss = loss_channel(2, 0.0)
        rho = np.eye(6, dtype=complex) / 6
        out = loss.apply_matrix(rho)
        assert abs(out[0, 0] - 1.0) <= 1e-12

    def test_single_photon_binomial(self):
        loss = loss_channel(2, 0.7)
        rho = np.zeros((6, 6), dtype=complex)
        rho[1, 1] = 1.0  # |1,0>
        out = loss.apply_matrix(rho)
        assert abs(out[0, 0] - 0.3) <= 1e-12
        assert abs(out[1, 1] - 0.7) <= 1e-12

    def test_cptp(self):
        loss = loss_channel(3, 0.42)
        assert loss.is_trace_preserving()
        assert check_complete_positivity(loss).completely_positive

    def test_eta_out_of_range(self):
        with pytest.raises(ValueError):
            loss_channel(2, 1.2)


class TestDarkCounts:
    def test_zero_probability_unchanged(self):
        raw = raw_click_povm(2, "x")
        out = dark_count_postprocess(raw, 0.0)
        for label in raw.labels:
            assert_allclose(out.operator(label).entries, raw.operator(label).entries)

    def test_vacuum_scaling_oracle(self):
        # independent detectors: both silent with probability (1-p)^2
        p = 0.07
        raw = raw_click_povm(2, "z")
        out = dark_count_postprocess(raw, p)
        assert_allclose(
            out.operator("vac").entries, (1 - p) ** 2 * raw.operator("vac").entries
        )

    def test_closure_preserved(self):
        out = dark_count_postprocess(raw_click_povm(2, "y"), 0.2)
        total = sum(op.entries for op in out.operators)
        assert_allclose(total, np.eye(6), atol=1e-12)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            dark_count_postprocess(raw_click_povm(1, "z"), 1.0)


class TestMisalignment:
    def test_zero_strength_is_identity(self):
        m = misalignment_channel(2, 0.0)
        assert_allclose(m.choi.entries, maps.identity_map(6).choi.entries, atol=1e-12)

    def test_full_strength_single_photon(self):
        m = misalignment_channel(1, 1.0)
        rho = np.diag([0.0, 1.0, 0.0]).astype(complex)
        out = m.apply_matrix(rho)
        assert_allclose(out[1:, 1:], np.eye(2) / 2, atol=1e-12)

    def test_bloch_vector_shrinks(self):
        m = misalignment_channel(1, 0.5)
        rho = np.zeros((3, 3), dtype=complex)
        rho[1, 1] = 1.0  # |0> in the photon block
        out = m.apply_matrix(rho)
        bloch_z = float(np.real(np.trace(out[1:, 1:] @ PAULI["z"])))
        assert abs(bloch_z - 0.5) <= 1e-12

    def test_trace_preserving_and_conditioning_reported(self):
        m = misalignment_channel(3, 0.35)
        assert m.is_trace_preserving()
        keep = m.meta["conditioning"]
        assert keep[0] == 1.0
        assert all(0.0 < keep[n] <= 1.0 for n in keep)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            misalignment_channel(2, -0.1)


@pytest.mark.parametrize(
    "eta,p_dark,q",
    [(1.0, 0.0, 0.0), (0.8, 0.0, 0.0), (1.0, 0.05, 0.0), (1.0, 0.0, 0.3), (0.7, 0.03, 0.2)],
)
def test_model_povm_and_block_structure(eta, p_dark, q):
    model = polarization_model(3, eta=eta, p_dark=p_dark, q=q)
    for beta in "xyz":
        f = model.full_sets[beta]  # POVM closure validated on construction
        # operators commute with the photon-number decomposition
        for op in f.operators:
            blocks = {
                n: extract_block(op.entries, n, 3) for n in range(4)
            }
            reassembled = np.zeros_like(op.entries)
            for n, sl in block_slices(3).items():
                reassembled[sl, sl] = blocks[n]
            assert np.max(np.abs(reassembled - op.entries)) <= 1e-12


@pytest.mark.parametrize(
    "eta,p_dark,q",
    [(1.0, 0.0, 0.0), (0.75, 0.0, 0.0), (1.0, 0.04, 0.0), (1.0, 0.0, 0.25), (0.8, 0.02, 0.1)],
)
def test_model_squashing_identity(eta, p_dark, q):
    model = polarization_model(3, eta=eta, p_dark=p_dark, q=q)
    squasher = model.squasher()
    rng = np.random.default_rng(17)
    for _ in range(5):
        rho = random_density(model.full_dim, rng)
        out = apply(squasher, rho.op)
        for beta in "xyz":
            fset = model.full_sets[beta]
            tset = model.target_sets[beta]
            for label in ("vac", "0", "1"):
                lhs = np.trace(rho.entries @ fset.operator(label).entries)
                rhs = np.trace(out.entries @ tset.operator(label).entries)
                assert abs(lhs - rhs) <= 1e-10


def test_loss_precomposition_keeps_squashing_identity():
    # lifting the ideal outcome operators through the loss channel is the
    # adjoint picture of precomposing the squasher with the loss
    base = polarization_model(3)
    loss = loss_channel(3, 0.6)
    lifted = {
        beta: [
            adjoint(loss).apply_matrix(op.entries)
            for op in base.full_sets[beta].operators
        ]
        for beta in "xyz"
    }
    composed = compose(base.squasher(), loss)
    rng = np.random.default_rng(23)
    rho = random_density(base.full_dim, rng)
    out = apply(composed, rho.op)
    for beta in "xyz":
        tset = base.target_sets[beta]
        for k, label in enumerate(("vac", "0", "1")):
            lhs = np.trace(rho.entries @ lifted[beta][k])
            rhs = np.trace(out.entries @ tset.operator(label).entries)
            assert abs(lhs - rhs) <= 1e-10


class TestIonTrap:
    def test_qubit_projectors_unit_trace(self):
        set_a, set_b = ion_trap_sets("qubit")
        for op in set_a.operators + set_b.operators:
            assert abs(op.trace() - 1.0) <= 1e-12

    def test_qutrit_extra_level_invisible(self):
        _, set_b = ion_trap_sets("qutrit")
        e3 = np.array([0.0, 0.0, 1.0])
        for op in set_b.operators:
            assert np.max(np.abs(op.entries @ e3)) <= 1e-14

    def test_fully_mixed_data(self):
        set_a, set_b = ion_trap_sets("qubit")
        rho = werner_state(1.0)
        for fa in set_a.operators:
            for fb in set_b.operators:
                val = np.trace(rho.entries @ np.kron(fa.entries, fb.entries))
                assert abs(val - 0.25) <= 1e-12

    def test_unknown_model(self):
        with pytest.raises(ValueError):
            ion_trap_sets("ququart")


class TestWernerAndWitness:
    def test_full_noise_is_maximally_mixed(self):
        assert_allclose(werner_state(1.0).entries, np.eye(4) / 4)

    def test_zero_noise_is_pure(self):
        rho = werner_state(0.0).entries
        assert abs(np.trace(rho @ rho) - 1.0) <= 1e-12

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            werner_state(1.5)

    def test_witness_trace_oracle(self):
        # six rank-one terms with signs +,+,-,-,+,+ each of unit trace
        signs = [+1, +1, -1, -1, +1, +1]
        assert sum(signs) / 4 == 0.5
        val = np.real(np.trace(standard_witness().entries @ (np.eye(4) / 4)))
        assert abs(val - 0.5) <= 1e-12


class TestObservableSet:
    def test_povm_sum_violation_rejected(self):
        p0 = projector(np.array([1.0, 0.0]))
        with pytest.raises(ValueError, match="sum"):
            ObservableSet((p0, p0), ("a", "b"), normalization="povm")

    def test_non_psd_member_rejected(self):
        bad = HermitianOperator(np.diag([1.2, -0.2]), (2,))
        complement = HermitianOperator(np.eye(2) - bad.entries, (2,))
        with pytest.raises(ValueError, match="PSD"):
            ObservableSet((bad, complement), ("a", "b"), normalization="povm")

    def test_mixed_spaces_rejected(self):
        with pytest.raises(ValueError, match="share"):
            ObservableSet(
                (projector(np.array([1.0, 0.0])), projector(np.array([1.0, 0.0, 0.0]))),
                ("a", "b"),
            )


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("beta", ["x", "y", "z"])
@pytest.mark.parametrize("sign", [+1, -1])
def test_polarized_kets_match_embedding(n, beta, sign):
    v = symmetric_embedding(n)
    single = BASIS_KETS[(beta, sign)]
    product = np.array([1.0 + 0j])
    for _ in range(n):
        product = np.kron(product, single)
    assert_allclose(polarized_ket(n, beta, sign), v.conj().T @ product, atol=1e-12)


def test_full_and_click_squashers_agree_on_click_sector():
    # two independent constructions: the direct vacuum + Bloch assembly and
    # the generic Born-rule-inversion builder must give the same map where
    # both are defined
    n_max = 3
    model = polarization_model(n_max)
    full_squasher = model.squasher()
    from entsquash.models import click_squasher

    click = click_squasher(n_max)
    rng = np.random.default_rng(3)
    for _ in range(5):
        rho_click = random_density(model.click_dim, rng).entries
        padded = np.zeros((model.full_dim, model.full_dim), dtype=complex)
        padded[1:, 1:] = rho_click
        out_full = full_squasher.apply_matrix(padded)
        out_click = click.apply_matrix(rho_click)
        assert np.max(np.abs(out_full[1:, 1:] - out_click)) <= 1e-12
        assert abs(out_full[0, 0]) <= 1e-12


@pytest.mark.parametrize(
    "kwargs",
    [{}, {"eta": 0.8}, {"p_dark": 0.04}, {"q": 0.15}, {"eta": 0.85, "p_dark": 0.02, "q": 0.1}],
)
def test_adjoint_form_of_squashing_identity(kwargs):
    # equivalent formulation: the adjoint of the squasher lifts every target
    # observable to the matching full observable, as operators
    model = polarization_model(3, **kwargs)
    lifted = adjoint(model.squasher())
    for beta in "xyz":
        for label in ("vac", "0", "1"):
            t_op = model.target_sets[beta].operator(label).entries
            f_op = model.full_sets[beta].operator(label).entries
            assert np.max(np.abs(lifted.apply_matrix(t_op) - f_op)) <= 1e-12


class TestTruncationHelpers:
    def test_dimension_recognition(self):
        from entsquash.models import truncation_from_dim

        assert truncation_from_dim(1) == 0
        assert truncation_from_dim(6) == 2
        assert truncation_from_dim(15) == 4
        with pytest.raises(ValueError):
            truncation_from_dim(7)

    def test_compress_keeps_low_support(self):
        from entsquash.models import block_dims, block_slices, compress_to_truncation

        d3 = sum(block_dims(3))
        h = block_slices(3)[1].start
        mat = np.zeros((d3 * d3, d3 * d3), dtype=complex)
        mat[h * d3 + h, h * d3 + h] = 1.0
        small = compress_to_truncation(mat, 3, 2)
        d2 = sum(block_dims(2))
        assert small.shape == (d2 * d2, d2 * d2)
        assert abs(np.trace(small) - 1.0) <= 1e-12

    def test_compress_rejects_high_support(self):
        from entsquash.models import block_dims, block_slices, compress_to_truncation

        d3 = sum(block_dims(3))
        idx = block_slices(3)[3].start
        mat = np.zeros((d3 * d3, d3 * d3), dtype=complex)
        mat[idx * d3 + idx, idx * d3 + idx] = 1.0
        with pytest.raises(ValueError, match="support exceeds"):
            compress_to_truncation(mat, 3, 2)
