"""Multi-start projected gradient ascent over complex unit vectors.

Shared by the map-positivity search, the per-photon-block Bloch-norm
maximization and the peak-output-trace-norm estimate.  Restarts are
independent and deterministic given the seed; results merge by keeping
the best value found.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass
class AscentResult:
    value: float
    argmax: np.ndarray
    restarts: int
    seed: int
    iterations: int


def _project_tangent(psi: np.ndarray, grad: np.ndarray) -> np.ndarray:
    return grad - psi * np.vdot(psi, grad)


def maximize_over_unit_sphere(
    value_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    dim: int,
    restarts: int = 64,
    seed: int = 0,
    max_iter: int = 400,
    grad_tol: float = 1e-11,
    initial_points: list[np.ndarray] | None = None,
) -> AscentResult:
    """Maximize a real objective over unit vectors in C^dim.

    ``value_and_grad(psi)`` must return the objective and its Wirtinger
    gradient d f / d conj(psi); the ascent direction is its tangent part.
    Extra deterministic starting points can be supplied (counted on top of
    the random restarts).
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    rng = np.random.default_rng(seed)
    starts = list(initial_points or [])
    for _ in range(restarts):
        v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        starts.append(v / np.linalg.norm(v))

    best_val = -np.inf
    best_psi = starts[0]
    total_iters = 0
    for psi0 in starts:
        psi = np.asarray(psi0, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        f, g = value_and_grad(psi)
        step = 0.5
        for _ in range(max_iter):
            total_iters += 1
            gt = _project_tangent(psi, g)
            gnorm = np.linalg.norm(gt)
            if gnorm <= grad_tol * (1.0 + abs(f)):
                break
            accepted = False
            for _ in range(30):
                cand = psi + step * gt
                cand = cand / np.linalg.norm(cand)
                f_new, g_new = value_and_grad(cand)
                if f_new >= f + 1e-4 * step * gnorm**2:
                    psi, f, g = cand, f_new, g_new
                    step = min(step * 1.3, 10.0)
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                break
        if f > best_val:
            best_val = f
            best_psi = psi
    return AscentResult(float(best_val), best_psi, restarts, seed, total_iters)
