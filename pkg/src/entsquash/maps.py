"""Hermiticity-preserving linear maps between operator spaces.

Maps are stored through their Choi matrix with the **input factor first**:

    choi(L) = sum_ij |i><j| (x) L[|i><j|]

so the Choi matrix lives on ``in_dim * out_dim`` and the action is recovered
as ``L[X] = tr_in[(X^T (x) 1) choi]``.  All modules share this convention.

A map is completely positive iff its Choi matrix is positive semidefinite;
mere positivity has no finite certificate from sampling, so the verdict type
keeps the epistemic status explicit: a violation comes with a concrete input
witness, while "certified-yes" needs an analytic certificate supplied by the
caller (e.g. Bloch-ball inclusion established by the set-geometry module).

Only trace-preserving squashers (equivalently, unital adjoints) are
constructed here; positive non-trace-preserving connections between
observable sets exist but are out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

from . import _optim
from .operators import HermitianOperator, asoperator

if TYPE_CHECKING:  # pragma: no cover
    from .models import ObservableSet

CP_EIG_FLOOR = -1e-9
POSITIVITY_VIOLATION = -1e-7
FLAG_ATOL = 1e-9
COMPLETENESS_RTOL = 1e-8


class DimensionMismatchError(ValueError):
    """Operator and map spaces do not line up."""


class CompletenessError(ValueError):
    """An observable set does not determine operators uniquely."""


@dataclass(frozen=True)
class ProcessMap:
    """Linear map in Choi representation (input factor first).

    ``in_dims``/``out_dims`` carry optional factorizations of the spaces so
    that outputs of tensored maps keep their bipartite structure.
    """

    in_dim: int
    out_dim: int
    choi: HermitianOperator
    in_dims: tuple[int, ...] = None
    out_dims: tuple[int, ...] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.choi.dim != self.in_dim * self.out_dim:
            raise ValueError(
                f"choi dimension {self.choi.dim} != in*out = {self.in_dim * self.out_dim}"
            )
        if self.in_dims is None:
            object.__setattr__(self, "in_dims", (self.in_dim,))
        if self.out_dims is None:
            object.__setattr__(self, "out_dims", (self.out_dim,))
        if int(np.prod(self.in_dims)) != self.in_dim:
            raise ValueError("in_dims inconsistent with in_dim")
        if int(np.prod(self.out_dims)) != self.out_dim:
            raise ValueError("out_dims inconsistent with out_dim")

    # -- representations --

    def choi_tensor(self) -> np.ndarray:
        """Choi as a 4-tensor C[i, a, j, b] = <a| L[|i><j|] |b>."""
        di, do = self.in_dim, self.out_dim
        return self.choi.entries.reshape(di, do, di, do)

    def superoperator(self) -> np.ndarray:
        """Matrix acting on row-major vectorized operators, shape (out^2, in^2)."""
        di, do = self.in_dim, self.out_dim
        return self.choi_tensor().transpose(1, 3, 0, 2).reshape(do * do, di * di)

    def apply_matrix(self, mat: np.ndarray) -> np.ndarray:
        mat = np.asarray(mat, dtype=complex)
        if mat.shape != (self.in_dim, self.in_dim):
            raise DimensionMismatchError(
                f"input is {mat.shape}, map expects ({self.in_dim}, {self.in_dim})"
            )
        return np.einsum("iajb,ij->ab", self.choi_tensor(), mat)

    # -- declared-flag checks --

    def trace_preserving_defect(self) -> float:
        di = self.in_dim
        partial = np.trace(self.choi_tensor(), axis1=1, axis2=3)
        return float(np.max(np.abs(partial - np.eye(di))))

    def is_trace_preserving(self, atol: float = FLAG_ATOL) -> bool:
        return self.trace_preserving_defect() <= atol

    def is_unital(self, atol: float = FLAG_ATOL) -> bool:
        out = self.apply_matrix(np.eye(self.in_dim))
        return float(np.max(np.abs(out - np.eye(self.out_dim)))) <= atol

    def to_payload(self) -> dict:
        return {
            "in_dim": self.in_dim,
            "out_dim": self.out_dim,
            "choi": self.choi.to_payload(),
            "trace_preserving": self.is_trace_preserving(),
            "unital": self.is_unital(),
        }

    @staticmethod
    def from_payload(payload: dict) -> "ProcessMap":
        return ProcessMap(
            int(payload["in_dim"]),
            int(payload["out_dim"]),
            HermitianOperator.from_payload(payload["choi"]),
        )


@dataclass
class PositivityVerdict:
    """Outcome of positivity analyses of a map.

    ``completely_positive`` / ``min_choi_eigenvalue`` come from the spectral
    CP test; the remaining fields from the sampling search over pure inputs.
    A ``certified-no`` always carries a unit input vector whose image has a
    negative eigenvalue below the violation threshold.
    """

    completely_positive: bool | None = None
    min_choi_eigenvalue: float | None = None
    positivity_status: str | None = None  # certified-yes | certified-no | undecided
    worst_output_eigenvalue: float | None = None
    witness: np.ndarray | None = None
    certificate: str | None = None
    optimizer: dict | None = None


# -- constructors --


def _choi_from_function(
    fn: Callable[[np.ndarray], np.ndarray], in_dim: int, out_dim: int
) -> HermitianOperator:
    c = np.zeros((in_dim * out_dim, in_dim * out_dim), dtype=complex)
    c4 = c.reshape(in_dim, out_dim, in_dim, out_dim)
    unit = np.zeros((in_dim, in_dim), dtype=complex)
    for i in range(in_dim):
        for j in range(in_dim):
            unit[i, j] = 1.0
            c4[i, :, j, :] = fn(unit)
            unit[i, j] = 0.0
    return HermitianOperator(c, (in_dim, out_dim))


def map_from_function(
    fn: Callable[[np.ndarray], np.ndarray],
    in_dim: int,
    out_dim: int,
    in_dims: Sequence[int] | None = None,
    out_dims: Sequence[int] | None = None,
) -> ProcessMap:
    """Build a map from its action on matrix units (must be Hermiticity preserving)."""
    choi = _choi_from_function(fn, in_dim, out_dim)
    return ProcessMap(
        in_dim,
        out_dim,
        choi,
        tuple(in_dims) if in_dims else None,
        tuple(out_dims) if out_dims else None,
    )


def map_from_kraus(
    kraus: Sequence[np.ndarray], coefficients: Sequence[float] | None = None
) -> ProcessMap:
    """Map X -> sum_i c_i K_i X K_i^dag (real c_i; omitted means all ones)."""
    ops = [np.asarray(k, dtype=complex) for k in kraus]
    out_dim, in_dim = ops[0].shape
    cs = [1.0] * len(ops) if coefficients is None else [float(c) for c in coefficients]

    def fn(x):
        return sum(c * (k @ x @ k.conj().T) for c, k in zip(cs, ops))

    return map_from_function(fn, in_dim, out_dim)


def identity_map(dim: int) -> ProcessMap:
    return map_from_function(lambda x: x, dim, dim)


def transposition_map(dim: int) -> ProcessMap:
    return map_from_function(lambda x: x.T, dim, dim)


def depolarizing_map(dim: int, q: float) -> ProcessMap:
    """X -> (1-q) X + q tr(X) 1/dim."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"depolarizing weight must lie in [0, 1], got {q}")
    eye = np.eye(dim)
    return map_from_function(
        lambda x: (1 - q) * x + q * np.trace(x) * eye / dim, dim, dim
    )


def random_cptp_map(
    in_dim: int, out_dim: int, rng: np.random.Generator, kraus_count: int = 3
) -> ProcessMap:
    """Random channel: Kraus operators whitened so they sum to the identity."""
    ops = [
        rng.standard_normal((out_dim, in_dim)) + 1j * rng.standard_normal((out_dim, in_dim))
        for _ in range(kraus_count)
    ]
    gram = sum(k.conj().T @ k for k in ops)
    vals, vecs = np.linalg.eigh(gram)
    whiten = (vecs / np.sqrt(vals)) @ vecs.conj().T
    return map_from_kraus([k @ whiten for k in ops])


def random_positive_not_cp_qubit_map(
    rng: np.random.Generator, max_tries: int = 50
) -> ProcessMap:
    """Positive trace-preserving qubit map with a negative Choi eigenvalue.

    Mixes a channel with a transposed channel; both summands are positive, so
    the mixture is, while the Choi matrix generically picks up negativity.
    """
    t = transposition_map(2)
    for _ in range(max_tries):
        w = rng.uniform(0.3, 0.7)
        a = random_cptp_map(2, 2, rng)
        b = compose(t, random_cptp_map(2, 2, rng))
        mix = add_maps(a, b, 1 - w, w)
        if float(np.linalg.eigvalsh(mix.choi.entries)[0]) < -1e-4:
            return mix
    raise RuntimeError("failed to draw a positive non-CP map")


# -- algebra on maps --


def apply(m: ProcessMap, a):
    """Apply the map; HermitianOperator in, HermitianOperator out (arrays pass through)."""
    if isinstance(a, np.ndarray):
        return m.apply_matrix(a)
    op = asoperator(a)
    out = m.apply_matrix(op.entries)
    return HermitianOperator(out, m.out_dims)


def adjoint(m: ProcessMap) -> ProcessMap:
    """Adjoint under the trace pairing: tr(L[A] B) = tr(A L^dag[B])."""
    c4 = m.choi_tensor()
    adj = c4.transpose(3, 2, 1, 0).reshape(m.out_dim * m.in_dim, m.out_dim * m.in_dim)
    return ProcessMap(
        m.out_dim,
        m.in_dim,
        HermitianOperator(adj, (m.out_dim, m.in_dim)),
        m.out_dims,
        m.in_dims,
    )


def conjugate_by_transposition(m: ProcessMap) -> ProcessMap:
    """T o L o T; its Choi matrix is the entrywise conjugate of choi(L)."""
    return ProcessMap(
        m.in_dim,
        m.out_dim,
        HermitianOperator(m.choi.entries.conj(), m.choi.dims),
        m.in_dims,
        m.out_dims,
    )


def _superop_to_map(
    k: np.ndarray, in_dim: int, out_dim: int, in_dims=None, out_dims=None
) -> ProcessMap:
    c4 = k.reshape(out_dim, out_dim, in_dim, in_dim).transpose(2, 0, 3, 1)
    choi = HermitianOperator(
        c4.reshape(in_dim * out_dim, in_dim * out_dim), (in_dim, out_dim)
    )
    return ProcessMap(in_dim, out_dim, choi, in_dims, out_dims)


def compose(outer: ProcessMap, inner: ProcessMap) -> ProcessMap:
    """outer o inner (apply inner first)."""
    if inner.out_dim != outer.in_dim:
        raise DimensionMismatchError(
            f"cannot compose: inner output {inner.out_dim} != outer input {outer.in_dim}"
        )
    k = outer.superoperator() @ inner.superoperator()
    return _superop_to_map(
        k, inner.in_dim, outer.out_dim, inner.in_dims, outer.out_dims
    )


def add_maps(a: ProcessMap, b: ProcessMap, wa: float = 1.0, wb: float = 1.0) -> ProcessMap:
    if (a.in_dim, a.out_dim) != (b.in_dim, b.out_dim):
        raise DimensionMismatchError("cannot add maps on different spaces")
    choi = HermitianOperator(
        wa * a.choi.entries + wb * b.choi.entries, a.choi.dims
    )
    return ProcessMap(a.in_dim, a.out_dim, choi, a.in_dims, a.out_dims)


def tensor_maps(a: ProcessMap, b: ProcessMap) -> ProcessMap:
    """Act with ``a`` on the first factor and ``b`` on the second."""
    ca = a.choi_tensor()
    cb = b.choi_tensor()
    c = np.einsum("iajb,kcld->ikacjlbd", ca, cb)
    di = a.in_dim * b.in_dim
    do = a.out_dim * b.out_dim
    choi = HermitianOperator(c.reshape(di * do, di * do), (di, do))
    return ProcessMap(di, do, choi, a.in_dims + b.in_dims, a.out_dims + b.out_dims)


def restricted_choi(m: ProcessMap, input_projector: np.ndarray) -> HermitianOperator:
    """Choi matrix compressed to an input subspace: (P (x) 1) choi (P (x) 1)."""
    p = np.asarray(input_projector, dtype=complex)
    big = np.kron(p, np.eye(m.out_dim))
    return HermitianOperator(big @ m.choi.entries @ big, m.choi.dims)


# -- positivity analysis --


def check_complete_positivity(m: ProcessMap) -> PositivityVerdict:
    min_eig = float(np.linalg.eigvalsh(m.choi.entries)[0])
    return PositivityVerdict(
        completely_positive=min_eig >= CP_EIG_FLOOR, min_choi_eigenvalue=min_eig
    )


def check_positivity(
    m: ProcessMap,
    restarts: int = 64,
    seed: int = 0,
    certificate: str | None = None,
) -> PositivityVerdict:
    """Search for a pure input whose image has a negative eigenvalue.

    Pure inputs suffice: the minimum output eigenvalue is concave-minimized
    at extreme points of the state set.  Without a violation the status is
    ``undecided`` unless the caller supplies an analytic certificate.
    """
    adj = adjoint(m)

    def value_and_grad(psi):
        out = m.apply_matrix(np.outer(psi, psi.conj()))
        vals, vecs = np.linalg.eigh(out)
        w = vecs[:, 0]
        grad_matrix = adj.apply_matrix(np.outer(w, w.conj()))
        # ascent on -lambda_min
        return -float(vals[0]), -(grad_matrix @ psi)

    result = _optim.maximize_over_unit_sphere(
        value_and_grad, m.in_dim, restarts=restarts, seed=seed
    )
    worst = -result.value
    verdict = PositivityVerdict(
        worst_output_eigenvalue=worst,
        optimizer={"restarts": restarts, "seed": seed, "iterations": result.iterations},
    )
    if worst < POSITIVITY_VIOLATION:
        verdict.positivity_status = "certified-no"
        verdict.witness = result.argmax
    elif certificate is not None:
        verdict.positivity_status = "certified-yes"
        verdict.certificate = certificate
    else:
        verdict.positivity_status = "undecided"
    return verdict


# -- Born-rule plumbing: expectations, inversion, squasher --


class MeasurementMap:
    """rho -> vector of expectation values of an observable set."""

    def __init__(self, observable_set: "ObservableSet"):
        self.observable_set = observable_set
        self._stack = np.stack([op.entries for op in observable_set.operators])

    @property
    def dim(self) -> int:
        return self._stack.shape[1]

    def expectations_complex(self, mat: np.ndarray) -> np.ndarray:
        if mat.shape != (self.dim, self.dim):
            raise DimensionMismatchError(
                f"state is {mat.shape}, observables act on dimension {self.dim}"
            )
        return np.einsum("kij,ji->k", self._stack, mat)

    def __call__(self, rho) -> np.ndarray:
        mat = asoperator(rho).entries
        return np.real(self.expectations_complex(mat))


def measurement_map(observable_set: "ObservableSet") -> MeasurementMap:
    return MeasurementMap(observable_set)


def hermitian_basis(dim: int) -> list[np.ndarray]:
    """Unnormalized Hermitian basis: E_ii, E_ij + E_ji, i(E_ij - E_ji)."""
    basis = []
    for i in range(dim):
        e = np.zeros((dim, dim), dtype=complex)
        e[i, i] = 1.0
        basis.append(e)
    for i in range(dim):
        for j in range(i + 1, dim):
            e = np.zeros((dim, dim), dtype=complex)
            e[i, j] = 1.0
            e[j, i] = 1.0
            basis.append(e)
            e = np.zeros((dim, dim), dtype=complex)
            e[i, j] = 1.0j
            e[j, i] = -1.0j
            basis.append(e)
    return basis


def _design_matrix(
    operators: Sequence[HermitianOperator], with_trace_row: bool
) -> tuple[np.ndarray, list[np.ndarray]]:
    dim = operators[0].dim
    basis = hermitian_basis(dim)
    rows = [[float(np.real(np.trace(b @ t.entries))) for b in basis] for t in operators]
    if with_trace_row:
        rows.append([float(np.real(np.trace(b))) for b in basis])
    return np.array(rows), basis


def is_tomographically_complete(observable_set: "ObservableSet") -> bool:
    """Rank test of the design matrix (plus trace row when declared)."""
    with_trace = observable_set.normalization == "trace"
    a, _ = _design_matrix(observable_set.operators, with_trace)
    sv = np.linalg.svd(a, compute_uv=False)
    dim = observable_set.operators[0].dim
    if len(sv) < dim * dim or sv[0] == 0.0:
        return False
    return bool(sv[dim * dim - 1] / sv[0] > COMPLETENESS_RTOL)


def linear_inversion(
    observable_set: "ObservableSet",
    expectations: Sequence[float],
    trace: float | None = None,
    allow_incomplete: bool = False,
) -> HermitianOperator:
    """Unique Hermitian X with tr(X T_i) = E_i (and tr X = trace if given).

    The operator is returned even when it is not positive semidefinite; an
    unphysical reconstruction is the caller's signal, not an error.

    With ``allow_incomplete=True`` a rank-deficient set is accepted and the
    minimum-norm solution returned: components inside the span of the
    observables are still determined exactly, everything orthogonal to it
    is set to zero.  Callers own the burden of extracting only determined
    components in that mode.
    """
    ops = observable_set.operators
    e = np.asarray(expectations, dtype=float)
    if e.shape != (len(ops),):
        raise ValueError(f"{len(ops)} observables but {e.shape} expectation values")
    with_trace = trace is not None
    a, basis = _design_matrix(ops, with_trace)
    rhs = np.concatenate([e, [float(trace)]]) if with_trace else e
    dim = ops[0].dim
    if not allow_incomplete:
        sv = np.linalg.svd(a, compute_uv=False)
        if len(sv) < dim * dim or sv[dim * dim - 1] / sv[0] <= COMPLETENESS_RTOL:
            raise CompletenessError(
                "observable set is not tomographically complete (rank-deficient design matrix)"
            )
    x, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    residual = float(np.max(np.abs(a @ x - rhs)))
    if residual > 1e-8 * (1.0 + float(np.max(np.abs(rhs)))):
        raise ValueError(
            f"inconsistent overdetermined expectation data (residual {residual:.3e})"
        )
    mat = np.tensordot(x, np.stack(basis), axes=1)
    return HermitianOperator(mat, ops[0].dims)


def build_squasher(targets: "ObservableSet", fulls: "ObservableSet") -> ProcessMap:
    """Construct the map L with tr(rho F_i) = tr(L[rho] T_i) for all rho, i.

    Works by chaining the full-side expectation map with the target-side
    Born-rule inversion.  Requires a tomographically complete target set;
    with matching normalization declarations the result is trace preserving.
    """
    if len(targets.operators) != len(fulls.operators):
        raise ValueError(
            f"target and full sets differ in length: "
            f"{len(targets.operators)} vs {len(fulls.operators)}"
        )
    if not is_tomographically_complete(targets):
        raise CompletenessError("target set is not tomographically complete")
    t_dim = targets.operators[0].dim
    f_dim = fulls.operators[0].dim
    use_trace = targets.normalization == "trace"
    a, basis = _design_matrix(targets.operators, use_trace)
    pinv = np.linalg.pinv(a, rcond=1e-12)
    basis_stack = np.stack(basis)
    fstack = np.stack([op.entries for op in fulls.operators])

    def fn(x):
        e = np.einsum("kij,ji->k", fstack, x)
        rhs = np.concatenate([e, [np.trace(x)]]) if use_trace else e
        coeff = pinv @ rhs
        return np.tensordot(coeff, basis_stack, axes=1)

    squasher = map_from_function(fn, f_dim, t_dim)

    # construction must satisfy the defining identity; if the full set fails
    # the linear dependencies of the targets no linear map can, so fail loudly
    rng = np.random.default_rng(7)
    tstack = np.stack([op.entries for op in targets.operators])
    for _ in range(8):
        g = rng.standard_normal((f_dim, f_dim)) + 1j * rng.standard_normal((f_dim, f_dim))
        rho = g @ g.conj().T
        rho /= np.real(np.trace(rho))
        lhs = np.real(np.einsum("kij,ji->k", fstack, rho))
        out = squasher.apply_matrix(rho)
        rhs = np.real(np.einsum("kij,ji->k", tstack, out))
        if np.max(np.abs(lhs - rhs)) > 1e-10:
            raise ValueError(
                "no linear squasher reproduces the full-set expectations; "
                "the sets impose incompatible linear dependencies"
            )
    return squasher
