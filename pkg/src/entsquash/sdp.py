"""Dense semidefinite feasibility and optimization on small problems.

Problems are stated over a real decision vector x:

* PSD blocks: affine Hermitian pencils  B(x) = C + sum_i x_i A_i >= 0,
* equalities: E x = f,
* optional linear objective c.x (minimized).

Complex Hermitian data is realified once, at solve time, through the
standard 2x2 block embedding H = R + iJ -> [[R, -J], [J, R]], which is PSD
exactly when H is; every module states problems in complex form and relies
on this single embedding.

The solver is a primal-dual interior-point iteration (HKM direction with a
Mehrotra-style corrector) after eliminating the equalities.  Feasibility
questions run through a phase-I formulation that maximizes the smallest
block eigenvalue: a positive optimum yields an explicit strictly feasible
point, a negative one yields a dual improving ray which is re-verified and
reported as an infeasibility certificate.  "The solver did not find a
point" is never reported as infeasibility.

Default tolerances: duality gap 1e-8, feasibility margin 1e-9, iteration
cap 200, certificate threshold 1e-7.  One solver instance is single-threaded
and deterministic; independent instances (e.g. bisection probes) can run
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _optim
from .maps import ProcessMap, hermitian_basis, identity_map, tensor_maps
from .models import ObservableSet, ion_trap_sets, werner_state
from .operators import HermitianOperator, asoperator, partial_transpose

GAP_TOL = 1e-8
FEAS_TOL = 1e-9
FEAS_MARGIN = 1e-9
CERT_TOL = 1e-7
MAX_ITER = 200


class SolverFailure(RuntimeError):
    """The interior-point iteration did not reach the requested accuracy."""


class InconsistentDataError(ValueError):
    """Equality constraints admit no Hermitian solution at all."""


# -- problem container and builder --


@dataclass
class BlockExpr:
    """Affine Hermitian-valued expression C + sum_i x_i A_i on one block."""

    dim: int
    const: np.ndarray
    coeffs: dict[int, np.ndarray] = field(default_factory=dict)

    def add(self, var: int, coeff: np.ndarray):
        cur = self.coeffs.get(var)
        self.coeffs[var] = coeff if cur is None else cur + coeff

    def place(self, var: int, mat: np.ndarray, row: int, col: int):
        """Add mat at block position (row, col) and its dagger at (col, row)."""
        d = self.dim
        full = np.zeros((d, d), dtype=complex)
        r, c = mat.shape
        full[row : row + r, col : col + c] += mat
        if (row, col) != (col, row) or not np.allclose(mat, mat.conj().T):
            full[col : col + c, row : row + r] += mat.conj().T
        self.add(var, full)

    def place_const(self, mat: np.ndarray, row: int, col: int):
        d = self.dim
        r, c = mat.shape
        self.const[row : row + r, col : col + c] += mat
        if (row, col) != (col, row) or not np.allclose(mat, mat.conj().T):
            self.const[col : col + c, row : row + r] += mat.conj().T


def _complex_payload(mat: np.ndarray) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(mat).reshape(-1)]


def _complex_from_payload(data: list, dim: int) -> np.ndarray:
    flat = np.array([complex(re, im) for re, im in data])
    return flat.reshape(dim, dim)


@dataclass
class SdpProblem:
    n_vars: int
    blocks: list[BlockExpr]
    eq_matrix: np.ndarray
    eq_rhs: np.ndarray
    objective: np.ndarray | None = None

    def to_payload(self) -> dict:
        return {
            "n_vars": self.n_vars,
            "blocks": [
                {
                    "dim": b.dim,
                    "const": _complex_payload(b.const),
                    "coeffs": {str(k): _complex_payload(v) for k, v in b.coeffs.items()},
                }
                for b in self.blocks
            ],
            "eq_matrix": self.eq_matrix.tolist(),
            "eq_rhs": self.eq_rhs.tolist(),
            "objective": None if self.objective is None else self.objective.tolist(),
        }

    @staticmethod
    def from_payload(payload: dict) -> "SdpProblem":
        blocks = []
        for b in payload["blocks"]:
            d = int(b["dim"])
            block = BlockExpr(d, _complex_from_payload(b["const"], d))
            for k, v in b["coeffs"].items():
                block.coeffs[int(k)] = _complex_from_payload(v, d)
            blocks.append(block)
        obj = payload["objective"]
        return SdpProblem(
            int(payload["n_vars"]),
            blocks,
            np.array(payload["eq_matrix"], dtype=float).reshape(
                len(payload["eq_rhs"]), int(payload["n_vars"])
            ),
            np.array(payload["eq_rhs"], dtype=float),
            None if obj is None else np.array(obj, dtype=float),
        )


class SdpBuilder:
    def __init__(self):
        self.n_vars = 0
        self.blocks: list[BlockExpr] = []
        self._eq_rows: list[np.ndarray] = []
        self._eq_rhs: list[float] = []
        self._objective: dict[int, float] | None = None

    def new_vars(self, count: int) -> range:
        r = range(self.n_vars, self.n_vars + count)
        self.n_vars += count
        return r

    def hermitian_var(self, dim: int) -> "HermitianVar":
        idx = self.new_vars(dim * dim)
        return HermitianVar(list(idx), hermitian_basis(dim), dim)

    def block(self, dim: int) -> BlockExpr:
        b = BlockExpr(dim, np.zeros((dim, dim), dtype=complex))
        self.blocks.append(b)
        return b

    def add_equality(self, lin: dict[int, float], rhs: float):
        row = np.zeros(self.n_vars)
        for k, v in lin.items():
            row[k] = v
        self._eq_rows.append(row)
        self._eq_rhs.append(float(rhs))

    def set_objective(self, lin: dict[int, float]):
        self._objective = dict(lin)

    def problem(self) -> SdpProblem:
        n = self.n_vars
        if self._eq_rows:
            eq = np.zeros((len(self._eq_rows), n))
            for i, row in enumerate(self._eq_rows):
                eq[i, : row.size] = row
        else:
            eq = np.zeros((0, n))
        obj = None
        if self._objective is not None:
            obj = np.zeros(n)
            for k, v in self._objective.items():
                obj[k] = v
        return SdpProblem(n, self.blocks, eq, np.array(self._eq_rhs), obj)


@dataclass
class HermitianVar:
    """Real variables parameterizing a Hermitian matrix via a fixed basis."""

    indices: list[int]
    basis: list[np.ndarray]
    dim: int

    def matrix(self, x: np.ndarray) -> np.ndarray:
        return sum(x[i] * b for i, b in zip(self.indices, self.basis))

    def add_to_block(self, block: BlockExpr, offset: int = 0, transform=None):
        for i, b in zip(self.indices, self.basis):
            coeff = b if transform is None else transform(b)
            block.place(i, coeff, offset, offset)

    def trace_functional(self, weight: np.ndarray | None = None) -> dict[int, float]:
        """Coefficients of x -> tr(X W) (W Hermitian; identity if omitted)."""
        w = np.eye(self.dim) if weight is None else weight
        return {
            i: float(np.real(np.trace(b @ w))) for i, b in zip(self.indices, self.basis)
        }


# -- solution containers --


@dataclass
class InfeasibilityCertificate:
    """Dual improving ray: PSD block multipliers annihilating every variable
    direction while giving the constant terms a strictly negative value."""

    block_duals: list[np.ndarray]
    direction_residual: float
    constant_value: float
    verified: bool


@dataclass
class SdpSolution:
    status: str
    x: np.ndarray | None = None
    objective_value: float | None = None
    gap: float | None = None
    iterations: int = 0
    feasibility_margin: float | None = None
    certificate: InfeasibilityCertificate | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_payload(self) -> dict:
        cert = None
        if self.certificate is not None:
            cert = {
                "direction_residual": self.certificate.direction_residual,
                "constant_value": self.certificate.constant_value,
                "verified": self.certificate.verified,
            }
        return {
            "status": self.status,
            "x": None if self.x is None else [float(v) for v in self.x],
            "objective_value": self.objective_value,
            "gap": self.gap,
            "iterations": self.iterations,
            "feasibility_margin": self.feasibility_margin,
            "certificate": cert,
        }


# -- realification and equality elimination --


def _embed(h: np.ndarray) -> np.ndarray:
    r, j = h.real, h.imag
    return np.block([[r, -j], [j, r]])


def _reduce(problem: SdpProblem):
    """Eliminate equalities: x = x0 + N u with orthonormal N spanning the null space."""
    n = problem.n_vars
    e, f = problem.eq_matrix, problem.eq_rhs
    if e.shape[0] == 0:
        return np.zeros(n), np.eye(n)
    x0, *_ = np.linalg.lstsq(e, f, rcond=None)
    residual = float(np.max(np.abs(e @ x0 - f))) if f.size else 0.0
    if residual > 1e-9 * (1.0 + float(np.max(np.abs(f), initial=0.0))):
        raise InconsistentDataError(
            f"equality constraints are inconsistent (residual {residual:.3e})"
        )
    u, s, vt = np.linalg.svd(e)
    rank = int(np.sum(s > 1e-12 * (s[0] if s.size else 1.0)))
    nullspace = vt[rank:].T
    return x0, nullspace


def _stack_blocks(problem: SdpProblem, x0: np.ndarray, nullspace: np.ndarray):
    """Per block: real-symmetric stacked tensor G with G[0] the constant at x0
    and G[1 + i] the coefficient of reduced variable u_i."""
    m = nullspace.shape[1]
    stacked = []
    for b in problem.blocks:
        const = b.const.copy()
        for k, coeff in b.coeffs.items():
            const = const + x0[k] * coeff
        g = np.zeros((m + 1, 2 * b.dim, 2 * b.dim))
        g[0] = _embed(const)
        for i in range(m):
            direction = nullspace[:, i]
            acc = np.zeros((b.dim, b.dim), dtype=complex)
            for k, coeff in b.coeffs.items():
                if direction[k] != 0.0:
                    acc = acc + direction[k] * coeff
            g[1 + i] = _embed(acc)
        stacked.append(g)
    return stacked


# -- interior-point core --


def _presolve_constant(stacked, x0, problem):
    """Handle the degenerate case of no free variables: the equalities pin x."""
    margins = [float(np.linalg.eigvalsh(g[0])[0]) for g in stacked]
    margin = min(margins)
    obj = None
    if problem.objective is not None:
        obj = float(problem.objective @ x0)
    if margin >= -FEAS_TOL:
        return SdpSolution(
            status="optimal" if problem.objective is not None else "feasible",
            x=x0,
            objective_value=obj,
            gap=0.0,
            feasibility_margin=margin,
        )
    # the unique candidate violates a block: its bottom eigenvector is a
    # Farkas certificate (no variable directions exist to annihilate)
    worst = margins.index(margin)
    duals = []
    for k, g in enumerate(stacked):
        if k == worst:
            vals, vecs = np.linalg.eigh(g[0])
            duals.append(np.outer(vecs[:, 0], vecs[:, 0]))
        else:
            duals.append(np.zeros_like(g[0]))
    cert = InfeasibilityCertificate(duals, 0.0, margin, margin <= -CERT_TOL)
    if cert.verified:
        return SdpSolution(
            status="infeasible-certified", feasibility_margin=margin, certificate=cert
        )
    return SdpSolution(status="undecided", feasibility_margin=margin)


def _chol_pd(a: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        bump = 1e-12 * max(float(np.trace(a)), 1.0)
        return np.linalg.cholesky(a + bump * np.eye(a.shape[0]))


def _ipm(stacked, c_red, gap_tol, feas_tol, max_iter):
    """HKM predictor-corrector on: min c.u s.t. G0_b + sum_i u_i Gi_b >= 0.

    Returns (u, S_list, Z_list, info).  Raises SolverFailure on stall.
    """
    m = c_red.size
    dims = [g.shape[1] for g in stacked]
    total_dim = sum(dims)
    u = np.zeros(m)
    s_list, z_list = [], []
    for g in stacked:
        eta = max(1.0, 1.2 * float(np.linalg.norm(g[0], 2)))
        s_list.append(eta * np.eye(g.shape[1]))
        z_list.append(max(1.0, float(np.max(np.abs(c_red), initial=1.0))) * np.eye(g.shape[1]))

    obj_scale = 1.0 + float(np.max(np.abs(c_red), initial=0.0))
    const_scale = 1.0 + max(float(np.max(np.abs(g[0]))) for g in stacked)

    info = {"iterations": 0}
    for it in range(max_iter):
        info["iterations"] = it + 1
        rp_list = []
        rd = c_red.copy()
        mu = 0.0
        for g, s, z in zip(stacked, s_list, z_list):
            cur = g[0] + np.tensordot(u, g[1:], axes=1)
            rp_list.append(cur - s)
            rd -= np.einsum("iab,ba->i", g[1:], z)
            mu += float(np.sum(s * z))
        mu /= total_dim

        pobj = float(c_red @ u)
        dobj = -sum(float(np.sum(g[0] * z)) for g, z in zip(stacked, z_list))
        gap = abs(pobj - dobj)
        rp_norm = max((float(np.max(np.abs(r))) for r in rp_list), default=0.0)
        rd_norm = float(np.max(np.abs(rd), initial=0.0))
        if (
            gap <= gap_tol * (1.0 + abs(pobj) + abs(dobj))
            and mu <= gap_tol * (1.0 + abs(pobj))
            and rp_norm <= feas_tol * const_scale
            and rd_norm <= feas_tol * obj_scale
        ):
            info.update(gap=gap, mu=mu, rp=rp_norm, rd=rd_norm)
            return u, s_list, z_list, info

        # factorizations and Schur complement
        sinv_list, m_mat = [], np.zeros((m, m))
        for g, s, z in zip(stacked, s_list, z_list):
            linv = np.linalg.inv(_chol_pd(s))
            sinv = linv.T @ linv
            sinv_list.append(sinv)
            p = np.einsum("iab,bc->iac", g[1:], sinv)
            q = np.einsum("iab,bc->iac", g[1:], z)
            m_mat += np.einsum("iab,jba->ij", p, q)
        m_mat = (m_mat + m_mat.T) / 2.0
        try:
            m_chol = np.linalg.cholesky(m_mat + 1e-14 * np.trace(m_mat) / max(m, 1) * np.eye(m))
        except np.linalg.LinAlgError:
            m_chol = None

        def solve_m(rhs):
            if m_chol is not None:
                y = np.linalg.solve(m_chol, rhs)
                return np.linalg.solve(m_chol.T, y)
            return np.linalg.lstsq(m_mat, rhs, rcond=None)[0]

        def assemble_rhs(sigma_mu, corr_list):
            rhs = np.zeros(m)
            for g, sinv, z, rp, corr in zip(
                stacked, sinv_list, z_list, rp_list, corr_list
            ):
                w = sinv @ (rp @ z if corr is None else rp @ z + corr)
                rhs += sigma_mu * np.einsum("iab,ba->i", g[1:], sinv)
                rhs -= np.einsum("iab,ba->i", g[1:], w)
            return rhs - c_red

        def directions(du, sigma_mu, corr_list):
            ds_list, dz_list = [], []
            for g, sinv, z, rp, corr in zip(
                stacked, sinv_list, z_list, rp_list, corr_list
            ):
                ds = np.tensordot(du, g[1:], axes=1) + rp
                extra = np.zeros_like(ds) if corr is None else corr
                dz = sigma_mu * sinv - z - sinv @ (ds @ z + extra)
                dz = (dz + dz.T) / 2.0
                ds_list.append(ds)
                dz_list.append(dz)
            return ds_list, dz_list

        def max_step(mats, dmats):
            alpha = 1.0
            for a, da in zip(mats, dmats):
                linv = np.linalg.inv(_chol_pd(a))
                w = linv @ da @ linv.T
                lam = float(np.linalg.eigvalsh((w + w.T) / 2.0)[0])
                if lam < 0:
                    alpha = min(alpha, -1.0 / lam)
            return alpha

        none_corr = [None] * len(stacked)
        du_aff = solve_m(assemble_rhs(0.0, none_corr))
        ds_aff, dz_aff = directions(du_aff, 0.0, none_corr)
        ap_aff = min(1.0, 0.99 * max_step(s_list, ds_aff))
        ad_aff = min(1.0, 0.99 * max_step(z_list, dz_aff))
        mu_aff = sum(
            float(np.sum((s + ap_aff * ds) * (z + ad_aff * dz)))
            for s, ds, z, dz in zip(s_list, ds_aff, z_list, dz_aff)
        ) / total_dim
        sigma = min(0.8, max(1e-6, (max(mu_aff, 0.0) / mu) ** 3))

        corr_list = [ds @ dz for ds, dz in zip(ds_aff, dz_aff)]
        du = solve_m(assemble_rhs(sigma * mu, corr_list))
        ds_list, dz_list = directions(du, sigma * mu, corr_list)
        ap = min(1.0, 0.98 * max_step(s_list, ds_list))
        ad = min(1.0, 0.98 * max_step(z_list, dz_list))
        if ap < 1e-10 and ad < 1e-10:
            raise SolverFailure(f"step collapsed at iteration {it} (mu={mu:.2e})")
        u = u + ap * du
        s_list = [s + ap * ds for s, ds in zip(s_list, ds_list)]
        z_list = [z + ad * dz for z, dz in zip(z_list, dz_list)]

    raise SolverFailure(f"iteration cap {max_iter} reached (mu={mu:.2e}, gap={gap:.2e})")


def solve(
    problem: SdpProblem,
    gap_tol: float = GAP_TOL,
    feas_tol: float = FEAS_TOL,
    max_iter: int = MAX_ITER,
) -> SdpSolution:
    """Minimize the objective; with no objective declared, decide feasibility."""
    if problem.objective is None:
        return solve_feasibility(problem, gap_tol=gap_tol, max_iter=max_iter)
    x0, nullspace = _reduce(problem)
    stacked = _stack_blocks(problem, x0, nullspace)
    c_red = nullspace.T @ problem.objective
    if nullspace.shape[1] == 0:
        return _presolve_constant(stacked, x0, problem)
    try:
        u, s_list, z_list, info = _ipm(stacked, c_red, gap_tol, feas_tol, max_iter)
    except SolverFailure as exc:
        return SdpSolution(status="numerical-failure", diagnostics={"error": str(exc)})
    x = x0 + nullspace @ u
    pobj = float(problem.objective @ x)
    return SdpSolution(
        status="optimal",
        x=x,
        objective_value=pobj,
        gap=info["gap"],
        iterations=info["iterations"],
        diagnostics={"duals": z_list, "mu": info["mu"]},
    )


def _certificate_from_duals(stacked_orig, z_list) -> InfeasibilityCertificate:
    duals = []
    tau = 0.0
    for z in z_list:
        zz = (z + z.T) / 2.0
        vals, vecs = np.linalg.eigh(zz)
        zz = (vecs * np.clip(vals, 0.0, None)) @ vecs.T  # clip solver round-off
        duals.append(zz)
        tau += float(np.trace(zz))
    if tau <= 0.0:
        return InfeasibilityCertificate(duals, np.inf, 0.0, False)
    duals = [z / tau for z in duals]
    m = stacked_orig[0].shape[0] - 1
    residual = 0.0
    for i in range(m):
        v = sum(float(np.sum(g[1 + i] * z)) for g, z in zip(stacked_orig, duals))
        residual = max(residual, abs(v))
    value = sum(float(np.sum(g[0] * z)) for g, z in zip(stacked_orig, duals))
    verified = residual <= CERT_TOL and value <= -CERT_TOL
    return InfeasibilityCertificate(duals, residual, value, verified)


def solve_feasibility(
    problem: SdpProblem,
    gap_tol: float = GAP_TOL,
    max_iter: int = MAX_ITER,
    t_cap: float = 1.0,
) -> SdpSolution:
    """Phase-I: maximize the common smallest block eigenvalue t (capped).

    t* > margin: feasible with an explicit interior point.  t* < -1e-7 with a
    verified dual ray: infeasible-certified.  Otherwise undecided (boundary).
    """
    x0, nullspace = _reduce(problem)
    stacked_orig = _stack_blocks(problem, x0, nullspace)
    m = nullspace.shape[1]
    stacked = []
    for g in stacked_orig:
        d = g.shape[1]
        gg = np.zeros((m + 2, d, d))
        gg[: m + 1] = g
        gg[m + 1] = -np.eye(d)
        stacked.append(gg)
    cap = np.zeros((m + 2, 1, 1))
    cap[0, 0, 0] = t_cap
    cap[m + 1, 0, 0] = -1.0
    stacked.append(cap)
    c_red = np.zeros(m + 1)
    c_red[m] = -1.0  # maximize t

    try:
        u, s_list, z_list, info = _ipm(stacked, c_red, gap_tol, FEAS_TOL, max_iter)
    except SolverFailure as exc:
        point = _alternating_projections(problem, x0, nullspace)
        if point is not None:
            return SdpSolution(
                status="feasible",
                x=point,
                feasibility_margin=0.0,
                diagnostics={"method": "alternating-projections", "ipm_error": str(exc)},
            )
        return SdpSolution(status="numerical-failure", diagnostics={"error": str(exc)})

    t_star = float(u[m])
    x = x0 + nullspace @ u[:m]
    if t_star >= FEAS_MARGIN:
        return SdpSolution(
            status="feasible",
            x=x,
            feasibility_margin=t_star,
            iterations=info["iterations"],
            gap=info["gap"],
        )
    cert = _certificate_from_duals(stacked_orig, z_list[:-1])
    if t_star <= -CERT_TOL and cert.verified:
        return SdpSolution(
            status="infeasible-certified",
            feasibility_margin=t_star,
            certificate=cert,
            iterations=info["iterations"],
            gap=info["gap"],
        )
    return SdpSolution(
        status="undecided",
        x=x,
        feasibility_margin=t_star,
        certificate=cert if cert.verified else None,
        iterations=info["iterations"],
        gap=info["gap"],
    )


def _alternating_projections(problem, x0, nullspace, iters: int = 500):
    """Feasible-point fallback: alternate PSD clipping with the affine fit."""
    m = nullspace.shape[1]
    stacked = _stack_blocks(problem, x0, nullspace)
    rows, offsets = [], [0]
    for g in stacked:
        d = g.shape[1]
        rows.append(g[1:].reshape(m, d * d).T if m else np.zeros((d * d, 0)))
        offsets.append(offsets[-1] + d * d)
    a = np.vstack(rows) if rows else np.zeros((0, m))
    pinv = np.linalg.pinv(a) if m else None
    u = np.zeros(m)
    for _ in range(iters):
        targets = []
        worst = 0.0
        for g in stacked:
            cur = g[0] + (np.tensordot(u, g[1:], axes=1) if m else 0.0)
            vals, vecs = np.linalg.eigh(cur)
            worst = min(worst, float(vals[0])) if targets else float(vals[0])
            clipped = (vecs * np.clip(vals, 1e-12, None)) @ vecs.T
            targets.append(clipped - g[0])
        if worst >= -FEAS_TOL:
            return x0 + nullspace @ u if m else x0
        if not m:
            return None
        rhs = np.concatenate([t.reshape(-1) for t in targets])
        u = pinv @ rhs
    return None


# -- expectation-data feasibility (separable-compatibility test) --


@dataclass
class ExpectationRecords:
    """Joint (and optionally marginal) expectation values of a product set."""

    joint: np.ndarray
    marginals_a: np.ndarray | None = None
    marginals_b: np.ndarray | None = None
    total: float = 1.0


def expectation_records(
    rho, set_a: ObservableSet, set_b: ObservableSet, marginals: bool = True
) -> ExpectationRecords:
    mat = asoperator(rho).entries
    da, db = set_a.dim, set_b.dim
    if mat.shape[0] != da * db:
        raise ValueError(f"state dimension {mat.shape[0]} != {da}*{db}")
    joint = np.zeros((len(set_a), len(set_b)))
    for i, fa in enumerate(set_a.operators):
        for j, fb in enumerate(set_b.operators):
            joint[i, j] = float(np.real(np.trace(mat @ np.kron(fa.entries, fb.entries))))
    ma = mb = None
    if marginals:
        ma = np.array(
            [
                float(np.real(np.trace(mat @ np.kron(fa.entries, np.eye(db)))))
                for fa in set_a.operators
            ]
        )
        mb = np.array(
            [
                float(np.real(np.trace(mat @ np.kron(np.eye(da), fb.entries))))
                for fb in set_b.operators
            ]
        )
    return ExpectationRecords(joint, ma, mb, float(np.real(np.trace(mat))))


@dataclass
class CompatibilityResult:
    solution: SdpSolution
    ppt_exact: bool
    constraint_mode: str

    @property
    def entanglement_verified(self) -> bool:
        """Data excludes every PPT state; in PPT-exact dimensions that means
        every separable state, so the verification is conclusive."""
        return self.solution.status == "infeasible-certified"


def separable_compatibility(
    records: ExpectationRecords,
    set_a: ObservableSet,
    set_b: ObservableSet,
    include_marginals: bool = True,
    gap_tol: float = GAP_TOL,
) -> CompatibilityResult:
    """Search for a PPT state reproducing the expectation records.

    In dimensions with dim_A * dim_B <= 6 PPT equals separability, so an
    infeasibility certificate verifies entanglement for the given sets;
    beyond that the test is a relaxation (flagged in the result).
    """
    da, db = set_a.dim, set_b.dim
    d = da * db
    builder = SdpBuilder()
    sigma = builder.hermitian_var(d)
    psd = builder.block(d)
    sigma.add_to_block(psd)
    ppt = builder.block(d)
    sigma.add_to_block(
        ppt,
        transform=lambda b: partial_transpose(
            HermitianOperator(b, (da, db)), 0
        ).entries,
    )
    builder.add_equality(sigma.trace_functional(), records.total)
    for i, fa in enumerate(set_a.operators):
        for j, fb in enumerate(set_b.operators):
            w = np.kron(fa.entries, fb.entries)
            builder.add_equality(sigma.trace_functional(w), records.joint[i, j])
    mode = "joint"
    if include_marginals:
        if records.marginals_a is None or records.marginals_b is None:
            raise ValueError("marginal constraints requested but records carry none")
        for i, fa in enumerate(set_a.operators):
            w = np.kron(fa.entries, np.eye(db))
            builder.add_equality(sigma.trace_functional(w), records.marginals_a[i])
        for j, fb in enumerate(set_b.operators):
            w = np.kron(np.eye(da), fb.entries)
            builder.add_equality(sigma.trace_functional(w), records.marginals_b[j])
        mode = "joint+marginals"
    solution = solve_feasibility(builder.problem(), gap_tol=gap_tol)
    return CompatibilityResult(solution, ppt_exact=d <= 6, constraint_mode=mode)


def ion_trap_records(p: float) -> ExpectationRecords:
    """Expectation data of the two-qubit noise family under the qubit sets."""
    set_a, set_b = ion_trap_sets("qubit")
    return expectation_records(werner_state(p), set_a, set_b)


def ion_trap_compatibility(
    p: float, model: str, include_marginals: bool = True
) -> CompatibilityResult:
    set_a, set_b = ion_trap_sets(model)
    return separable_compatibility(
        ion_trap_records(p), set_a, set_b, include_marginals=include_marginals
    )


def threshold_search(
    feasible_at: Callable[[float], bool],
    p_lo: float,
    p_hi: float,
    tol_p: float,
) -> float:
    """Bisect the feasibility boundary; expects infeasible at p_lo, feasible at p_hi."""
    lo_feasible = feasible_at(p_lo)
    hi_feasible = feasible_at(p_hi)
    if lo_feasible == hi_feasible:
        raise ValueError(
            f"no boundary in range [{p_lo}, {p_hi}]: "
            f"both endpoints {'feasible' if lo_feasible else 'infeasible'}"
        )
    if lo_feasible:
        raise ValueError("expected the low endpoint to be the infeasible one")
    lo, hi = p_lo, p_hi
    while hi - lo > tol_p:
        mid = (lo + hi) / 2.0
        if feasible_at(mid):
            hi = mid
        else:
            lo = mid
    return (lo + hi) / 2.0


# -- spectral helpers stated as SDPs (used for cross-checks) --


def max_eigenvalue_sdp(a) -> SdpSolution:
    """min t with t 1 - A >= 0."""
    mat = asoperator(a).entries
    d = mat.shape[0]
    builder = SdpBuilder()
    (t,) = builder.new_vars(1)
    blk = builder.block(d)
    blk.place_const(-mat, 0, 0)
    blk.place(t, np.eye(d, dtype=complex), 0, 0)
    builder.set_objective({t: 1.0})
    return solve(builder.problem())


def trace_norm_sdp(a) -> SdpSolution:
    """max tr(M A) over -1 <= M <= 1, as a (minimizing) SDP."""
    mat = asoperator(a).entries
    d = mat.shape[0]
    builder = SdpBuilder()
    m_var = builder.hermitian_var(d)
    upper = builder.block(d)
    upper.place_const(np.eye(d, dtype=complex), 0, 0)
    m_var.add_to_block(upper, transform=lambda b: -b)
    lower = builder.block(d)
    lower.place_const(np.eye(d, dtype=complex), 0, 0)
    m_var.add_to_block(lower)
    builder.set_objective({k: -v for k, v in m_var.trace_functional(mat).items()})
    solution = solve(builder.problem())
    if solution.status == "optimal":
        solution.objective_value = -solution.objective_value
    return solution


# -- diamond norm --


@dataclass
class DiamondNormResult:
    value: float
    multistart_lower: float | None
    agreement: float | None
    solution: SdpSolution


def diamond_norm(m: ProcessMap, cross_check: bool = False, restarts: int = 64, seed: int = 0):
    """Diamond norm via the standard maximization SDP over the Choi matrix.

    With ``cross_check=True`` also runs the direct multi-start maximization
    of the output trace norm of ``m (x) id`` over pure inputs on the doubled
    space and returns a ``DiamondNormResult``; otherwise returns the value.
    """
    res = _diamond_sdp(m)
    if not cross_check:
        return res.value
    lower = _stabilized_trace_norm_peak(m, restarts=restarts, seed=seed)
    res.multistart_lower = lower
    res.agreement = res.value - lower
    return res


def _diamond_sdp(m: ProcessMap) -> DiamondNormResult:
    di, do = m.in_dim, m.out_dim
    dj = di * do
    j = m.choi.entries
    builder = SdpBuilder()
    x_re = builder.new_vars(dj * dj)
    x_im = builder.new_vars(dj * dj)
    rho0 = builder.hermitian_var(di)
    rho1 = builder.hermitian_var(di)
    big = builder.block(2 * dj)
    eye_out = np.eye(do, dtype=complex)
    rho0.add_to_block(big, offset=0, transform=lambda b: np.kron(b, eye_out))
    rho1.add_to_block(big, offset=dj, transform=lambda b: np.kron(b, eye_out))
    unit = np.zeros((dj, dj), dtype=complex)
    obj: dict[int, float] = {}
    for a in range(dj):
        for b in range(dj):
            k_re = x_re[a * dj + b]
            k_im = x_im[a * dj + b]
            unit[a, b] = 1.0
            big.place(k_re, unit.copy(), 0, dj)
            unit[a, b] = 1.0j
            big.place(k_im, unit.copy(), 0, dj)
            unit[a, b] = 0.0
            # objective: maximize Re tr(J X) = sum_ab Re(J_ba) X^re_ab - Im(J_ba) X^im_ab
            re_c = float(np.real(j[b, a]))
            im_c = float(np.imag(j[b, a]))
            if re_c:
                obj[k_re] = -re_c
            if im_c:
                obj[k_im] = im_c
    builder.add_equality(rho0.trace_functional(), 1.0)
    builder.add_equality(rho1.trace_functional(), 1.0)
    builder.set_objective(obj)
    solution = solve(builder.problem())
    if solution.status != "optimal":
        raise SolverFailure(f"diamond-norm SDP failed: {solution.status}")
    return DiamondNormResult(-solution.objective_value, None, None, solution)


def _stabilized_trace_norm_peak(m: ProcessMap, restarts: int, seed: int) -> float:
    doubled = tensor_maps(m, identity_map(m.in_dim))
    from .maps import adjoint  # local to avoid a cycle at import time

    adj = adjoint(doubled)

    def value_and_grad(psi):
        out = doubled.apply_matrix(np.outer(psi, psi.conj()))
        vals, vecs = np.linalg.eigh(out)
        sign_m = (vecs * np.sign(vals)) @ vecs.conj().T
        return float(np.sum(np.abs(vals))), adj.apply_matrix(sign_m) @ psi

    result = _optim.maximize_over_unit_sphere(
        value_and_grad, doubled.in_dim, restarts=restarts, seed=seed
    )
    return result.value
