"""Dense complex Hermitian operator algebra on multipartite spaces.

Every operator carries an explicit subsystem factorization (``dims``) so that
partial operations (transpose, trace) are unambiguous.  Storage is dense; the
intended regime is total dimension up to a few dozen, where dense eigensolvers
are both fast and accurate.  All operations are pure functions over immutable
values and safe to evaluate concurrently.

Tolerances used by the validating constructors:

* Hermiticity: entrywise absolute deviation from the conjugate transpose
  at most ``HERMITICITY_ATOL``.
* Positivity of states: minimum eigenvalue at least ``PSD_EIG_FLOOR``
  (chosen above eigensolver round-off at these dimensions).
* Declared trace: matched within ``TRACE_ATOL``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

HERMITICITY_ATOL = 1e-12
PSD_EIG_FLOOR = -1e-9
TRACE_ATOL = 1e-10


class SubsystemIndexError(IndexError):
    """A partial operation addressed a factor outside the declared dims."""


def _as_complex_matrix(entries) -> np.ndarray:
    mat = np.asarray(entries, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {mat.shape}")
    return mat


@dataclass(frozen=True)
class HermitianOperator:
    """A Hermitian matrix together with its subsystem factorization.

    The matrix is symmetrized on construction (after validating that the
    input is Hermitian within ``HERMITICITY_ATOL``) so downstream exact
    identities are not polluted by representation noise.
    """

    entries: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        mat = _as_complex_matrix(self.entries)
        dims = tuple(int(d) for d in self.dims)
        if any(d <= 0 for d in dims):
            raise ValueError(f"subsystem dimensions must be positive, got {dims}")
        total = int(np.prod(dims))
        if total != mat.shape[0]:
            raise ValueError(
                f"dims {dims} imply total dimension {total}, matrix is {mat.shape[0]}"
            )
        dev = np.max(np.abs(mat - mat.conj().T)) if mat.size else 0.0
        if dev > HERMITICITY_ATOL:
            raise ValueError(f"matrix is not Hermitian (max deviation {dev:.3e})")
        mat = (mat + mat.conj().T) / 2.0
        mat.setflags(write=False)
        object.__setattr__(self, "entries", mat)
        object.__setattr__(self, "dims", dims)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def trace(self) -> float:
        return float(np.real(np.trace(self.entries)))

    def with_dims(self, dims: Sequence[int]) -> "HermitianOperator":
        """Reinterpret the same matrix with a different factorization."""
        return HermitianOperator(self.entries, tuple(dims))

    # -- arithmetic (real-linear combinations stay Hermitian) --

    def __add__(self, other: "HermitianOperator") -> "HermitianOperator":
        self._check_same_space(other)
        return HermitianOperator(self.entries + other.entries, self.dims)

    def __sub__(self, other: "HermitianOperator") -> "HermitianOperator":
        self._check_same_space(other)
        return HermitianOperator(self.entries - other.entries, self.dims)

    def __mul__(self, scalar: float) -> "HermitianOperator":
        return HermitianOperator(self.entries * float(scalar), self.dims)

    __rmul__ = __mul__

    def __neg__(self) -> "HermitianOperator":
        return HermitianOperator(-self.entries, self.dims)

    def _check_same_space(self, other: "HermitianOperator"):
        if self.dims != other.dims:
            raise ValueError(f"operator spaces differ: {self.dims} vs {other.dims}")

    # -- serialization (row-major [re, im] pairs) --

    def to_payload(self) -> dict:
        flat = self.entries.reshape(-1)
        return {
            "dims": list(self.dims),
            "entries": [[float(z.real), float(z.imag)] for z in flat],
        }

    @staticmethod
    def from_payload(payload: dict) -> "HermitianOperator":
        dims = tuple(int(d) for d in payload["dims"])
        total = int(np.prod(dims))
        flat = np.array(
            [complex(re, im) for re, im in payload["entries"]], dtype=complex
        )
        if flat.size != total * total:
            raise ValueError(
                f"payload has {flat.size} entries, expected {total * total}"
            )
        return HermitianOperator(flat.reshape(total, total), dims)


@dataclass(frozen=True)
class DensityMatrix:
    """A positive semidefinite ``HermitianOperator`` with a declared trace.

    The trace defaults to one; set ``declared_trace`` for subnormalized
    carriers (e.g. conditional states).
    """

    op: HermitianOperator
    declared_trace: float = 1.0

    def __post_init__(self):
        min_eig = float(np.linalg.eigvalsh(self.op.entries)[0])
        if min_eig < PSD_EIG_FLOOR:
            raise ValueError(f"not positive semidefinite (min eigenvalue {min_eig:.3e})")
        tr = self.op.trace()
        if abs(tr - self.declared_trace) > TRACE_ATOL:
            raise ValueError(
                f"trace {tr!r} differs from declared {self.declared_trace!r}"
            )

    @property
    def entries(self) -> np.ndarray:
        return self.op.entries

    @property
    def dims(self) -> tuple[int, ...]:
        return self.op.dims

    @property
    def dim(self) -> int:
        return self.op.dim


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues in ascending order with orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def asoperator(x, dims: Sequence[int] | None = None) -> HermitianOperator:
    """Coerce an array, ``DensityMatrix`` or ``HermitianOperator`` to the latter."""
    if isinstance(x, HermitianOperator):
        return x if dims is None else x.with_dims(dims)
    if isinstance(x, DensityMatrix):
        return x.op if dims is None else x.op.with_dims(dims)
    mat = _as_complex_matrix(x)
    return HermitianOperator(mat, tuple(dims) if dims is not None else (mat.shape[0],))


def tensor(a: HermitianOperator, b: HermitianOperator) -> HermitianOperator:
    """Kronecker product; dims concatenate."""
    return HermitianOperator(np.kron(a.entries, b.entries), a.dims + b.dims)


def _check_subsystem(a: HermitianOperator, subsystem: int):
    if not 0 <= subsystem < len(a.dims):
        raise SubsystemIndexError(
            f"subsystem {subsystem} out of range for dims {a.dims}"
        )


def partial_transpose(a: HermitianOperator, subsystem: int) -> HermitianOperator:
    """Transpose the indexed tensor factor; Hermiticity is preserved."""
    _check_subsystem(a, subsystem)
    k = len(a.dims)
    tens = a.entries.reshape(a.dims + a.dims)
    axes = list(range(2 * k))
    axes[subsystem], axes[k + subsystem] = axes[k + subsystem], axes[subsystem]
    out = tens.transpose(axes).reshape(a.dim, a.dim)
    return HermitianOperator(out, a.dims)


def partial_trace(a: HermitianOperator, subsystem: int) -> HermitianOperator:
    """Trace out the indexed tensor factor."""
    _check_subsystem(a, subsystem)
    k = len(a.dims)
    tens = a.entries.reshape(a.dims + a.dims)
    out = np.trace(tens, axis1=subsystem, axis2=k + subsystem)
    new_dims = a.dims[:subsystem] + a.dims[subsystem + 1 :]
    if not new_dims:
        new_dims = (1,)
        out = out.reshape(1, 1)
    else:
        d = int(np.prod(new_dims))
        out = out.reshape(d, d)
    return HermitianOperator(out, new_dims)


def trace_norm(a: HermitianOperator | np.ndarray) -> float:
    """Sum of absolute eigenvalues."""
    mat = a.entries if isinstance(a, (HermitianOperator, DensityMatrix)) else a
    return float(np.sum(np.abs(np.linalg.eigvalsh(mat))))


def trace_norm_variational(a: HermitianOperator) -> float:
    """Trace norm as max of tr(M a) over -1 <= M <= 1, attained at M = sign(a)."""
    vals, vecs = np.linalg.eigh(a.entries)
    m = (vecs * np.sign(vals)) @ vecs.conj().T
    return float(np.real(np.trace(m @ a.entries)))


def spectral(a: HermitianOperator) -> SpectralDecomposition:
    """Full eigendecomposition.

    Raises ``np.linalg.LinAlgError`` if the underlying solver does not
    converge; non-convergence is reported, never silently truncated.
    """
    vals, vecs = np.linalg.eigh(a.entries)
    return SpectralDecomposition(vals, vecs)


def min_eigenvalue(a: HermitianOperator | np.ndarray) -> float:
    mat = a.entries if isinstance(a, (HermitianOperator, DensityMatrix)) else a
    return float(np.linalg.eigvalsh(mat)[0])


def is_psd(a: HermitianOperator | np.ndarray, floor: float = PSD_EIG_FLOOR) -> bool:
    return min_eigenvalue(a) >= floor


def identity(dims: Sequence[int]) -> HermitianOperator:
    d = int(np.prod(tuple(dims)))
    return HermitianOperator(np.eye(d), tuple(dims))


def projector(vector: np.ndarray, dims: Sequence[int] | None = None) -> HermitianOperator:
    v = np.asarray(vector, dtype=complex).reshape(-1)
    mat = np.outer(v, v.conj())
    return HermitianOperator(mat, tuple(dims) if dims is not None else (v.size,))


# -- seeded random carriers used by tests, optimizers and CLI scenarios --


def random_unit_vector(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> HermitianOperator:
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return HermitianOperator(scale * (g + g.conj().T) / 2.0, (dim,))


def random_density(
    dim: int, rng: np.random.Generator, rank: int | None = None
) -> DensityMatrix:
    r = rank if rank is not None else dim
    g = rng.standard_normal((dim, r)) + 1j * rng.standard_normal((dim, r))
    mat = g @ g.conj().T
    mat /= np.real(np.trace(mat))
    return DensityMatrix(HermitianOperator(mat, (dim,)))
