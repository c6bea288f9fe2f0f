import numpy as np
import pytest

from entsquash import maps
from entsquash.maps import (
    add_maps,
    apply,
    compose,
    identity_map,
    random_cptp_map,
    random_positive_not_cp_qubit_map,
    tensor_maps,
    transposition_map,
)
from entsquash.metrics import (
    BoundReport,
    max_output_trace_norm,
    max_output_trace_norm_grid_upper,
    negativity,
    negativity_bound_diamond,
    negativity_bound_peak,
    ppt_test,
    witness_value,
)
from entsquash.models import standard_witness, werner_state
from entsquash.operators import (
    HermitianOperator,
    identity,
    projector,
    random_density,
    random_hermitian,
    tensor,
)

BELL = projector(np.array([0, 1, 1, 0]) / np.sqrt(2), (2, 2))


def random_unit_trace_hermitian(dim, dims, rng):
    op = random_hermitian(dim, rng)
    shift = (1.0 - op.trace()) / dim
    return HermitianOperator(op.entries + shift * np.eye(dim), dims)


class TestNegativity:
    def test_maximally_mixed(self):
        assert abs(negativity(0.25 * identity((2, 2))).value) <= 1e-12

    def test_bell_state(self):
        rep = negativity(BELL)
        assert abs(rep.value - 0.5) <= 1e-12
        assert abs(rep.pt_trace_norm - 2.0) <= 1e-12

    def test_noise_family_boundary(self):
        assert abs(negativity(werner_state(2.0 / 3.0).op).value) <= 1e-10

    def test_two_computations_agree(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = random_unit_trace_hermitian(6, (2, 3), rng)
            rep = negativity(x)
            assert rep.consistency <= 1e-10

    def test_cut_symmetry(self):
        rng = np.random.default_rng(1)
        x = random_unit_trace_hermitian(6, (2, 3), rng)
        assert abs(negativity(x, cut=0).value - negativity(x, cut=1).value) <= 1e-10

    def test_requires_unit_trace(self):
        with pytest.raises(ValueError, match="unit trace"):
            negativity(identity((2, 2)))

    def test_requires_bipartition(self):
        with pytest.raises(ValueError, match="bipartition"):
            negativity(0.25 * identity((4,)))


class TestPpt:
    def test_product_state(self):
        rng = np.random.default_rng(2)
        rho = tensor(random_density(2, rng).op, random_density(2, rng).op)
        assert ppt_test(rho).status == "ppt"

    def test_bell_state(self):
        verdict = ppt_test(BELL)
        assert verdict.status == "npt"
        assert abs(verdict.min_eigenvalue + 0.5) <= 1e-12

    def test_noise_family_below_boundary(self):
        assert ppt_test(werner_state(0.6).op).status == "npt"


class TestWitness:
    def test_maximally_mixed_value(self):
        assert abs(witness_value(standard_witness(), 0.25 * identity((2, 2))) - 0.5) <= 1e-12

    def test_linearity_in_mixtures(self):
        rng = np.random.default_rng(3)
        w = standard_witness()
        a = random_density(4, rng)
        b = random_density(4, rng)
        lam = 0.3
        mixed = HermitianOperator(lam * a.entries + (1 - lam) * b.entries, (4,))
        direct = witness_value(w, mixed)
        combo = lam * witness_value(w, a) + (1 - lam) * witness_value(w, b)
        assert abs(direct - combo) <= 1e-12

    def test_local_projection_cyclicity(self):
        # projecting the state locally or the witness globally gives the same value
        rng = np.random.default_rng(4)
        rho = random_density(6, rng).op.with_dims((2, 3))
        pi = np.kron(np.eye(2), np.array([[1, 0], [0, 1], [0, 0]], dtype=complex))
        w_embedded = HermitianOperator(pi @ standard_witness().entries @ pi.conj().T, (2, 3))
        projected_state = HermitianOperator(
            pi.conj().T @ rho.entries @ pi, (2, 2)
        )
        lhs = witness_value(standard_witness(), projected_state)
        rhs = witness_value(w_embedded, rho)
        assert abs(lhs - rhs) <= 1e-12


class TestPeakNorm:
    def test_cptp_map_is_one(self):
        rng = np.random.default_rng(5)
        m = random_cptp_map(2, 2, rng)
        assert abs(max_output_trace_norm(m, restarts=8).value - 1.0) <= 1e-9

    def test_transposition_alone_is_one(self):
        assert abs(max_output_trace_norm(transposition_map(2), restarts=8).value - 1.0) <= 1e-9

    def test_partial_transposition_is_two(self):
        doubled = tensor_maps(transposition_map(2), identity_map(2))
        assert abs(max_output_trace_norm(doubled, restarts=16).value - 2.0) <= 1e-7

    def test_transposition_conjugation_invariance(self):
        rng = np.random.default_rng(6)
        t = transposition_map(2)
        for seed in range(3):
            m = random_positive_not_cp_qubit_map(rng)
            direct = max_output_trace_norm(m, restarts=16, seed=seed).value
            conjugated = max_output_trace_norm(
                compose(t, compose(m, t)), restarts=16, seed=seed + 50
            ).value
            assert abs(direct - conjugated) <= 1e-6


class TestGridUpper:
    def test_upper_bounds_multistart_qubit(self):
        rng = np.random.default_rng(7)
        for _ in range(3):
            m = random_positive_not_cp_qubit_map(rng)
            upper = max_output_trace_norm_grid_upper(m)
            lower = max_output_trace_norm(m, restarts=16).value
            assert upper.value >= lower - 1e-9
            assert upper.slack > 0.0

    def test_transposition_grid_tight(self):
        up = max_output_trace_norm_grid_upper(transposition_map(2))
        assert abs(up.grid_maximum - 1.0) <= 1e-9
        assert up.value >= 1.0

    def test_dimension_limit(self):
        with pytest.raises(ValueError, match="dimension"):
            max_output_trace_norm_grid_upper(identity_map(5))

    def test_submultiplicative_composition(self):
        rng = np.random.default_rng(8)
        for seed in range(3):
            outer = random_positive_not_cp_qubit_map(rng)
            inner = random_positive_not_cp_qubit_map(rng)
            lower = max_output_trace_norm(compose(outer, inner), restarts=16, seed=seed).value
            bound = (
                max_output_trace_norm_grid_upper(outer).value
                * max_output_trace_norm_grid_upper(inner).value
            )
            assert lower <= bound + 1e-9

    def test_pair_norm_below_diamond_product(self):
        from entsquash.sdp import diamond_norm

        rng = np.random.default_rng(9)
        t = transposition_map(2)
        for seed in range(3):
            ma = random_positive_not_cp_qubit_map(rng)
            mb = random_positive_not_cp_qubit_map(rng)
            pair = tensor_maps(compose(t, compose(ma, t)), mb)
            heuristic = max_output_trace_norm(pair, restarts=16, seed=seed).value
            certified = diamond_norm(ma) * diamond_norm(mb)
            assert heuristic <= certified + 1e-6


class TestBounds:
    def test_identity_maps_reproduce_negativity(self):
        rho = werner_state(0.2).op
        rep = negativity_bound_peak(rho, identity_map(2), identity_map(2), restarts=2)
        assert rep.norm_provenance == "cptp-exact"
        assert abs(rep.bound - negativity(rho).value) <= 1e-12
        assert not rep.vacuous

    def test_cptp_pairs_reduce_to_monotonicity(self):
        rng = np.random.default_rng(10)
        for _ in range(5):
            ma = random_cptp_map(2, 2, rng)
            mb = random_cptp_map(2, 2, rng)
            rho = random_density(4, rng).op.with_dims((2, 2))
            rep = negativity_bound_peak(rho, ma, mb, restarts=2)
            squashed = apply(tensor_maps(ma, mb), rho)
            assert rep.norm_value == 1.0
            assert abs(rep.bound - negativity(squashed).value) <= 1e-12
            assert negativity(rho).value >= rep.bound - 1e-8

    def test_positive_noncp_side_holds(self):
        mix = add_maps(identity_map(2), transposition_map(2), 0.6, 0.4)
        rep = negativity_bound_peak(BELL, mix, identity_map(2), restarts=8)
        n_rho = negativity(BELL).value
        assert n_rho >= rep.bound - 1e-8
        assert rep.norm_value >= 1.0
        assert rep.heuristic_norm <= rep.norm_value + 1e-6

    def test_diamond_bound_vacuous_example(self):
        rep = negativity_bound_diamond(BELL, transposition_map(2), identity_map(2))
        assert abs(rep.squashed_negativity) <= 1e-9
        assert abs(rep.norm_value - 2.0) <= 1e-5
        assert abs(rep.bound + 0.25) <= 1e-5
        assert rep.vacuous

    def test_diamond_never_beats_peak(self):
        rng = np.random.default_rng(11)
        for _ in range(3):
            ma = random_positive_not_cp_qubit_map(rng)
            mb = random_cptp_map(2, 2, rng)
            rho = random_density(4, rng).op.with_dims((2, 2))
            peak = negativity_bound_peak(rho, ma, mb, restarts=2)
            diamond = negativity_bound_diamond(rho, ma, mb)
            assert diamond.bound <= peak.bound + 1e-6

    def test_separable_states_squash_to_ppt(self):
        rng = np.random.default_rng(12)
        t = transposition_map(2)
        for _ in range(5):
            ma = add_maps(identity_map(2), t, 0.5, 0.5)
            mb = random_cptp_map(2, 2, rng)
            sep = np.zeros((4, 4), dtype=complex)
            for w in rng.dirichlet(np.ones(3)):
                sep += w * np.kron(
                    random_density(2, rng).entries, random_density(2, rng).entries
                )
            rho = HermitianOperator(sep, (2, 2))
            squashed = apply(tensor_maps(ma, mb), rho)
            assert negativity(squashed).value <= 1e-9

    def test_non_trace_preserving_rejected(self):
        half = maps.map_from_function(lambda x: 0.5 * x, 2, 2)
        with pytest.raises(ValueError, match="trace-preserving"):
            negativity_bound_peak(BELL, half, identity_map(2))

    def test_report_payload_serializable(self):
        import json

        rep = negativity_bound_diamond(BELL, transposition_map(2), identity_map(2))
        assert isinstance(rep, BoundReport)
        json.dumps(rep.to_payload())
