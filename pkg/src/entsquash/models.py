"""Concrete measurement models: ion-trap projector sets and the two-detector
polarization measurement with threshold detectors.

Basis conventions used throughout:

* qubit: ``|x+->  = (|0> +- |1>)/sqrt2``, ``|y+-> = (|0> +- i|1>)/sqrt2``,
  z eigenstates are the computational basis;
* the n-photon two-mode block has basis ``|n-k, k>`` for k = 0..n (first
  mode count descending), identified with the single-photon convention
  ``|1,0> = |0>`` and ``|0,1> = |1>``;
* the polarization space is the direct sum of photon blocks n = 0..n_max
  (vacuum first), so states with support above n_max cannot be represented
  and are rejected rather than clipped.

The four detector outcomes per basis setting are labeled ``vac``, ``0``,
``1`` and ``d`` (double click).  Double clicks are reassigned to the two
single-click outcomes with weight 1/2 each; this weight is fixed, since the
squashing guarantees are proved for it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb, sqrt

import numpy as np

from .maps import (
    ProcessMap,
    adjoint,
    build_squasher,
    compose,
    map_from_function,
    map_from_kraus,
)
from .operators import DensityMatrix, HermitianOperator, projector

POVM_ATOL = 1e-9

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}

BASIS_KETS = {
    ("x", +1): np.array([1, 1], dtype=complex) / sqrt(2),
    ("x", -1): np.array([1, -1], dtype=complex) / sqrt(2),
    ("y", +1): np.array([1, 1j], dtype=complex) / sqrt(2),
    ("y", -1): np.array([1, -1j], dtype=complex) / sqrt(2),
    ("z", +1): np.array([1, 0], dtype=complex),
    ("z", -1): np.array([0, 1], dtype=complex),
}


def _check_basis(beta: str):
    if beta not in PAULI:
        raise ValueError(f"unknown polarization basis {beta!r}, expected x, y or z")


@dataclass(frozen=True)
class ObservableSet:
    """Ordered observables on one space, with a declared normalization.

    ``normalization`` is one of:

    * ``"povm"``  - members are PSD and sum to the identity;
    * ``"trace"`` - reconstruction from this set additionally fixes the trace;
    * ``"none"``  - no normalization functional declared.
    """

    operators: tuple[HermitianOperator, ...]
    labels: tuple[str, ...]
    normalization: str = "none"

    def __post_init__(self):
        ops = tuple(self.operators)
        labels = tuple(str(l) for l in self.labels)
        if len(ops) != len(labels):
            raise ValueError("labels and operators differ in length")
        if not ops:
            raise ValueError("observable set may not be empty")
        dims = ops[0].dims
        if any(op.dims != dims for op in ops):
            raise ValueError("all operators must share one space")
        if self.normalization not in ("povm", "trace", "none"):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.normalization == "povm":
            total = sum(op.entries for op in ops)
            if np.max(np.abs(total - np.eye(ops[0].dim))) > POVM_ATOL:
                raise ValueError("POVM members do not sum to the identity")
            for op, label in zip(ops, labels):
                if float(np.linalg.eigvalsh(op.entries)[0]) < -POVM_ATOL:
                    raise ValueError(f"POVM member {label!r} is not PSD")
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.operators[0].dim

    @property
    def dims(self) -> tuple[int, ...]:
        return self.operators[0].dims

    def __len__(self) -> int:
        return len(self.operators)

    def operator(self, label: str) -> HermitianOperator:
        return self.operators[self.labels.index(label)]


# -- symmetric subspace / photon blocks --


def symmetric_embedding(n: int) -> np.ndarray:
    """Isometry from the (n+1)-dim photon block into n qubits.

    Column k is the normalized equal superposition of all computational
    states with k ones, matching the photon state |n-k, k>.
    """
    if n < 1:
        raise ValueError("need at least one photon")
    v = np.zeros((2**n, n + 1), dtype=complex)
    for positions in itertools.product((0, 1), repeat=n):
        k = sum(positions)
        index = int("".join(str(b) for b in positions), 2)
        v[index, k] += 1.0
    v /= np.sqrt(np.array([comb(n, k) for k in range(n + 1)]))
    return v


def polarized_ket(n: int, beta: str, sign: int = +1) -> np.ndarray:
    """|n,0>_beta (sign=+1) or |0,n>_beta (sign=-1) in the photon-block basis."""
    _check_basis(beta)
    if n < 0:
        raise ValueError("photon number must be nonnegative")
    u, v = BASIS_KETS[(beta, sign)]
    return np.array(
        [sqrt(comb(n, k)) * u ** (n - k) * v**k for k in range(n + 1)], dtype=complex
    )


def block_dims(n_max: int, include_vacuum: bool = True) -> list[int]:
    start = 0 if include_vacuum else 1
    return [n + 1 for n in range(start, n_max + 1)]


def block_slices(n_max: int, include_vacuum: bool = True) -> dict[int, slice]:
    start = 0 if include_vacuum else 1
    slices = {}
    offset = 0
    for n in range(start, n_max + 1):
        slices[n] = slice(offset, offset + n + 1)
        offset += n + 1
    return slices


def assemble_blocks(blocks: dict[int, np.ndarray], n_max: int, include_vacuum: bool = True) -> np.ndarray:
    slices = block_slices(n_max, include_vacuum)
    dim = sum(block_dims(n_max, include_vacuum))
    out = np.zeros((dim, dim), dtype=complex)
    for n, sl in slices.items():
        if n in blocks:
            out[sl, sl] = blocks[n]
    return out


def extract_block(mat: np.ndarray, n: int, n_max: int, include_vacuum: bool = True) -> np.ndarray:
    sl = block_slices(n_max, include_vacuum)[n]
    return mat[sl, sl]


# -- click operators (Fock picture, per block and assembled) --


def click_operators(n: int, beta: str) -> dict[str, np.ndarray]:
    """The four-outcome POVM restricted to the n-photon block."""
    _check_basis(beta)
    if n < 0:
        raise ValueError("photon number must be nonnegative")
    if n == 0:
        one = np.ones((1, 1), dtype=complex)
        zero = np.zeros((1, 1), dtype=complex)
        return {"vac": one, "0": zero, "1": zero, "d": zero}
    p0 = polarized_ket(n, beta, +1)
    p1 = polarized_ket(n, beta, -1)
    m0 = np.outer(p0, p0.conj())
    m1 = np.outer(p1, p1.conj())
    md = np.eye(n + 1, dtype=complex) - m0 - m1
    if n == 1:
        md = np.zeros((2, 2), dtype=complex)
    return {"vac": np.zeros((n + 1, n + 1), dtype=complex), "0": m0, "1": m1, "d": md}


def raw_click_povm(n_max: int, beta: str) -> ObservableSet:
    """Four-outcome threshold-detector POVM on the full space (vacuum included)."""
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    ops = {}
    for label in ("vac", "0", "1", "d"):
        blocks = {n: click_operators(n, beta)[label] for n in range(n_max + 1)}
        ops[label] = HermitianOperator(assemble_blocks(blocks, n_max), (sum(block_dims(n_max)),))
    return ObservableSet(
        tuple(ops[l] for l in ("vac", "0", "1", "d")),
        ("vac", "0", "1", "d"),
        normalization="povm",
    )


def _reassign(povm: ObservableSet, w0: float, w1: float) -> ObservableSet:
    if abs(w0 + w1 - 1.0) > 1e-12:
        raise ValueError("reassignment weights must sum to one")
    m = {label: povm.operator(label) for label in ("vac", "0", "1", "d")}
    return ObservableSet(
        (m["vac"], m["0"] + w0 * m["d"], m["1"] + w1 * m["d"]),
        ("vac", "0", "1"),
        normalization="povm",
    )


def reassign_double_clicks(povm: ObservableSet) -> ObservableSet:
    """Fold the double-click outcome into the single clicks with weight 1/2 each."""
    return _reassign(povm, 0.5, 0.5)


def full_click_operators(n_max: int, beta: str) -> ObservableSet:
    """Processed full observables {F_vac, F_0, F_1} for one basis setting."""
    return reassign_double_clicks(raw_click_povm(n_max, beta))


def difference_operators(n_max: int, beta: str) -> list[np.ndarray]:
    """Per-block click differences F_0^n - F_1^n for n = 1..n_max."""
    _check_basis(beta)
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    out = []
    for n in range(1, n_max + 1):
        ops = click_operators(n, beta)
        out.append(ops["0"] - ops["1"])
    return out


def difference_set(n_max: int) -> ObservableSet:
    """The three basis differences assembled on the click space, trace-normalized."""
    dim = sum(block_dims(n_max, include_vacuum=False))
    ops = []
    for beta in "xyz":
        blocks = dict(enumerate(difference_operators(n_max, beta), start=1))
        ops.append(
            HermitianOperator(assemble_blocks(blocks, n_max, include_vacuum=False), (dim,))
        )
    return ObservableSet(tuple(ops), ("x", "y", "z"), normalization="trace")


def target_click_operators(beta: str) -> ObservableSet:
    """Single-photon targets on vacuum + qubit: {T_vac, T_0, T_1}."""
    _check_basis(beta)
    dim = 3
    t_vac = np.zeros((dim, dim), dtype=complex)
    t_vac[0, 0] = 1.0
    ops = [HermitianOperator(t_vac, (dim,))]
    for sign in (+1, -1):
        ket = BASIS_KETS[(beta, sign)]
        mat = np.zeros((dim, dim), dtype=complex)
        mat[1:, 1:] = np.outer(ket, ket.conj())
        ops.append(HermitianOperator(mat, (dim,)))
    return ObservableSet(tuple(ops), ("vac", "0", "1"), normalization="povm")


def pauli_targets() -> ObservableSet:
    return ObservableSet(
        tuple(HermitianOperator(PAULI[b], (2,)) for b in "xyz"),
        ("x", "y", "z"),
        normalization="trace",
    )


# -- imperfection channels --


def loss_channel(n_max: int, eta: float) -> ProcessMap:
    """Pure loss of transmissivity eta on both modes, on the full space.

    Loss only lowers the photon number, so the truncated space maps to
    itself exactly; channel is CPTP by binomial closure of the Kraus set.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"transmissivity must lie in [0, 1], got {eta}")
    dim = sum(block_dims(n_max))
    slices = block_slices(n_max)
    kraus = []
    for j in range(n_max + 1):  # photons lost from the first mode
        for l in range(n_max + 1 - j):  # photons lost from the second mode
            k = np.zeros((dim, dim), dtype=complex)
            nonzero = False
            for n in range(n_max + 1):
                for kk in range(n + 1):  # |n-kk, kk>
                    a, b = n - kk, kk
                    if j > a or l > b:
                        continue
                    n_new = n - j - l
                    amp = sqrt(comb(a, j) * (1 - eta) ** j * eta ** (a - j)) * sqrt(
                        comb(b, l) * (1 - eta) ** l * eta ** (b - l)
                    )
                    if amp == 0.0:
                        continue
                    row = slices[n_new].start + (b - l)
                    col = slices[n].start + kk
                    k[row, col] = amp
                    nonzero = True
            if nonzero:
                kraus.append(k)
    return map_from_kraus(kraus)


def misalignment_channel(n_max: int, q: float) -> ProcessMap:
    """Per-photon depolarizing noise, conditioned back onto the photon blocks.

    The depolarizing acts in the n-qubit embedding and leaks out of the
    symmetric subspace; the model conditions on staying symmetric and
    renormalizes.  The conditioning probability is state independent per
    block (asserted here) and reported in ``meta["conditioning"]``.
    Cross-block coherences are discarded (the click observables are
    block diagonal, so they carry no signal in this model).
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"misalignment weight must lie in [0, 1], got {q}")
    dim = sum(block_dims(n_max))
    if q == 0.0:
        m = map_from_function(lambda x: x, dim, dim)
        m.meta["conditioning"] = {n: 1.0 for n in range(n_max + 1)}
        return m
    slices = block_slices(n_max)
    keep = {0: 1.0}
    block_superops = {}
    for n in range(1, n_max + 1):
        v = symmetric_embedding(n)
        d_block = n + 1

        def depolarize_block(x, n=n, v=v):
            t = (v @ x @ v.conj().T).reshape((2,) * (2 * n))
            for site in range(n):
                traced = np.trace(t, axis1=site, axis2=n + site)
                mixed = np.tensordot(traced, np.eye(2) / 2, axes=0)
                mixed = np.moveaxis(mixed, (2 * n - 2, 2 * n - 1), (site, n + site))
                t = (1 - q) * t + q * mixed
            flat = t.reshape(2**n, 2**n)
            return v.conj().T @ flat @ v

        # conditioning probability is state independent; compute on one state
        probe = np.zeros((d_block, d_block), dtype=complex)
        probe[0, 0] = 1.0
        p_keep = float(np.real(np.trace(depolarize_block(probe))))
        rng = np.random.default_rng(11)
        g = rng.standard_normal((d_block, d_block)) + 1j * rng.standard_normal((d_block, d_block))
        check = g @ g.conj().T
        check /= np.trace(check)
        p2 = float(np.real(np.trace(depolarize_block(check))))
        if abs(p2 - p_keep) > 1e-10:
            raise AssertionError("symmetric-conditioning probability is state dependent")
        keep[n] = p_keep
        block_superops[n] = (depolarize_block, p_keep)

    def fn(x):
        out = np.zeros_like(x)
        out[0, 0] = x[0, 0]
        for n in range(1, n_max + 1):
            sl = slices[n]
            dep, p_keep = block_superops[n]
            out[sl, sl] = dep(x[sl, sl]) / p_keep
        return out

    m = map_from_function(fn, dim, dim)
    m.meta["conditioning"] = keep
    return m


def dark_count_postprocess(povm: ObservableSet, p_dark: float) -> ObservableSet:
    """Stochastic relabeling for detectors that fire spuriously with p_dark.

    Input must be the raw four-outcome set; each silent detector fires
    independently, so clicks can be gained but never lost.
    """
    if not 0.0 <= p_dark < 1.0:
        raise ValueError(f"dark-count probability must lie in [0, 1), got {p_dark}")
    if set(povm.labels) != {"vac", "0", "1", "d"}:
        raise ValueError("dark-count postprocessing expects outcomes vac, 0, 1, d")
    p = p_dark
    m = {label: povm.operator(label) for label in povm.labels}
    new = {
        "vac": (1 - p) ** 2 * m["vac"],
        "0": (1 - p) * m["0"] + p * (1 - p) * m["vac"],
        "1": (1 - p) * m["1"] + p * (1 - p) * m["vac"],
        "d": m["d"] + p * (m["0"] + m["1"]) + p * p * m["vac"],
    }
    return ObservableSet(
        tuple(new[l] for l in ("vac", "0", "1", "d")),
        ("vac", "0", "1", "d"),
        normalization="povm",
    )


# -- assembled polarization model --


@dataclass
class PhotonBlockModel:
    """Threshold-detector polarization model truncated at n_max photons.

    Holds the processed full observables per basis, the matching target
    observables on vacuum + qubit, the imperfection channel, and the
    per-block click differences used by the set-inclusion analysis.
    ``contrast`` is the factor by which dark counts shrink the differences;
    ``normalized_difference_blocks`` divides it out so values compare
    against the unit Bloch ball.
    """

    n_max: int
    eta: float = 1.0
    p_dark: float = 0.0
    q: float = 0.0
    full_sets: dict = field(default_factory=dict, repr=False)
    target_sets: dict = field(default_factory=dict, repr=False)
    channel: ProcessMap | None = field(default=None, repr=False)
    conditioning: dict = field(default_factory=dict, repr=False)
    contrast: float = 1.0
    # False for hand-built variants (e.g. skewed double-click weights); the
    # analytic inclusion certificates only apply to the standard pipeline
    standard_postprocessing: bool = True

    @property
    def full_dim(self) -> int:
        return sum(block_dims(self.n_max))

    @property
    def click_dim(self) -> int:
        return sum(block_dims(self.n_max, include_vacuum=False))

    def difference_blocks(self, beta: str) -> list[np.ndarray]:
        f = self.full_sets[beta]
        diff = f.operator("0").entries - f.operator("1").entries
        return [
            extract_block(diff, n, self.n_max) for n in range(1, self.n_max + 1)
        ]

    def normalized_difference_blocks(self, beta: str) -> list[np.ndarray]:
        return [b / self.contrast for b in self.difference_blocks(beta)]

    def squasher(self) -> ProcessMap:
        """Full-space squasher (vacuum + clicks -> vacuum + qubit).

        Vacuum weight is routed to the vacuum level, the click sector goes
        through the Bloch reconstruction; the imperfection channel, being
        CPTP, precomposes without affecting the squashing property.
        """
        base = _perfect_full_squasher(self.n_max)
        return base if self.channel is None else compose(base, self.channel)

    def describe(self) -> dict:
        return {
            "kind": "polarization",
            "n_max": self.n_max,
            "eta": self.eta,
            "p_dark": self.p_dark,
            "q": self.q,
            "contrast": self.contrast,
            "conditioning": {str(k): v for k, v in self.conditioning.items()},
        }


def _perfect_full_squasher(n_max: int) -> ProcessMap:
    dim = sum(block_dims(n_max))
    diffs = {
        beta: assemble_blocks(
            dict(enumerate(difference_operators(n_max, beta), start=1)), n_max
        )
        for beta in "xyz"
    }

    def fn(x):
        out = np.zeros((3, 3), dtype=complex)
        out[0, 0] = x[0, 0]
        click_trace = np.trace(x) - x[0, 0]
        qubit = 0.5 * click_trace * np.eye(2, dtype=complex)
        for beta in "xyz":
            qubit = qubit + 0.5 * np.trace(diffs[beta] @ x) * PAULI[beta]
        out[1:, 1:] = qubit
        return out

    m = map_from_function(fn, dim, 3)
    m.meta["role"] = "full-space squasher"
    return m


def click_squasher(n_max: int) -> ProcessMap:
    """Perfect-model squasher from the click space onto the qubit."""
    return build_squasher(pauli_targets(), difference_set(n_max))


def polarization_model(
    n_max: int, eta: float = 1.0, p_dark: float = 0.0, q: float = 0.0
) -> PhotonBlockModel:
    """Assemble the polarization model with the given imperfections.

    The channel order is misalignment then loss; both commute with the
    photon-block structure of the observables.
    """
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    channel = None
    conditioning = {}
    if q > 0.0:
        mis = misalignment_channel(n_max, q)
        conditioning = mis.meta["conditioning"]
        channel = mis
    if eta < 1.0:
        loss = loss_channel(n_max, eta)
        channel = loss if channel is None else compose(loss, channel)

    full_sets = {}
    target_sets = {}
    for beta in "xyz":
        raw = raw_click_povm(n_max, beta)
        if channel is not None:
            lifted = adjoint(channel)
            raw = ObservableSet(
                tuple(
                    HermitianOperator(lifted.apply_matrix(op.entries), op.dims)
                    for op in raw.operators
                ),
                raw.labels,
                normalization="povm",
            )
        target_raw = _target_raw_povm(beta)
        if p_dark > 0.0:
            raw = dark_count_postprocess(raw, p_dark)
            target_raw = dark_count_postprocess(target_raw, p_dark)
        full_sets[beta] = reassign_double_clicks(raw)
        target_sets[beta] = reassign_double_clicks(target_raw)

    return PhotonBlockModel(
        n_max=n_max,
        eta=eta,
        p_dark=p_dark,
        q=q,
        full_sets=full_sets,
        target_sets=target_sets,
        channel=channel,
        conditioning=conditioning,
        contrast=1.0 - p_dark,
    )


def _target_raw_povm(beta: str) -> ObservableSet:
    base = target_click_operators(beta)
    zero = HermitianOperator(np.zeros((3, 3)), (3,))
    return ObservableSet(
        (base.operator("vac"), base.operator("0"), base.operator("1"), zero),
        ("vac", "0", "1", "d"),
        normalization="povm",
    )


def truncation_from_dim(dim: int) -> int:
    """Photon-number truncation whose full space has the given dimension."""
    n = 0
    total = 1
    while total < dim:
        n += 1
        total += n + 1
    if total != dim:
        raise ValueError(
            f"{dim} is not a polarization-space dimension (1, 3, 6, 10, ...)"
        )
    return n


def compress_to_truncation(mat: np.ndarray, n_from: int, n_to: int) -> np.ndarray:
    """Restrict a bipartite polarization-pair state to a smaller truncation.

    Weight on blocks above the target truncation is rejected, never
    silently clipped: dropping it would fake positivity results.
    """
    if n_to > n_from:
        raise ValueError(f"cannot extend truncation {n_from} to {n_to}")
    d_from = sum(block_dims(n_from))
    keep_side = np.concatenate(
        [np.arange(sl.start, sl.stop) for n, sl in block_slices(n_from).items() if n <= n_to]
    )
    keep = np.array([a * d_from + b for a in keep_side for b in keep_side])
    mask = np.zeros(d_from * d_from, dtype=bool)
    mask[keep] = True
    dropped_rows = mat[~mask, :]
    dropped_cols = mat[:, ~mask]
    weight = max(
        float(np.max(np.abs(dropped_rows), initial=0.0)),
        float(np.max(np.abs(dropped_cols), initial=0.0)),
    )
    if weight > 1e-12:
        raise ValueError(
            f"state support exceeds the {n_to}-photon truncation; rejected rather than clipped"
        )
    return mat[np.ix_(keep, keep)]


# -- ion-trap example --


def ion_trap_sets(model: str) -> tuple[ObservableSet, ObservableSet]:
    """Measurement sets for two ions: (side A, side B).

    ``"qubit"`` treats both ions as two-level systems; ``"qutrit"`` embeds
    side B's projectors into a three-level system whose extra level is
    invisible to all three operators.
    """
    if model not in ("qubit", "qutrit"):
        raise ValueError(f"unknown ion-trap model {model!r}")
    kets = [BASIS_KETS[("z", +1)], BASIS_KETS[("x", +1)], BASIS_KETS[("y", +1)]]
    labels = ("0", "x+", "y+")
    qubit_ops = tuple(projector(k) for k in kets)
    set_a = ObservableSet(qubit_ops, labels, normalization="none")
    if model == "qubit":
        return set_a, set_a
    embedded = []
    for k in kets:
        mat = np.zeros((3, 3), dtype=complex)
        mat[:2, :2] = np.outer(k, k.conj())
        embedded.append(HermitianOperator(mat, (3,)))
    return set_a, ObservableSet(tuple(embedded), labels, normalization="none")


def werner_state(p: float) -> DensityMatrix:
    """(1-p) |psi+><psi+| + p 1/4 on two qubits."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"noise parameter must lie in [0, 1], got {p}")
    psi = np.zeros(4, dtype=complex)
    psi[1] = psi[2] = 1 / sqrt(2)
    mat = (1 - p) * np.outer(psi, psi.conj()) + p * np.eye(4) / 4
    return DensityMatrix(HermitianOperator(mat, (2, 2)))


def standard_witness() -> HermitianOperator:
    """Six-projector witness combination on two qubits."""
    terms = [
        (+1, ("z", +1), ("z", +1)),
        (+1, ("z", -1), ("z", -1)),
        (-1, ("x", +1), ("x", +1)),
        (-1, ("x", -1), ("x", -1)),
        (+1, ("y", +1), ("y", +1)),
        (+1, ("y", -1), ("y", -1)),
    ]
    mat = np.zeros((4, 4), dtype=complex)
    for sign, (ba, sa), (bb, sb) in terms:
        ka = BASIS_KETS[(ba, sa)]
        kb = BASIS_KETS[(bb, sb)]
        ket = np.kron(ka, kb)
        mat += sign * np.outer(ket, ket.conj())
    return HermitianOperator(mat, (2, 2))
