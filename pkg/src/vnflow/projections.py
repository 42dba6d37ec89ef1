"""Projection calculus on block operators.

Spectral projections, polar phases, kernel projections, range intersections
and nearest-projection repair.  Every projection returned here is "snapped":
it is rebuilt from an orthonormal eigenbasis, so downstream rank counts are
stable integers.
"""

from __future__ import annotations

import numpy as np

from .errors import PreconditionError, SpectralGapError
from .model import DEFAULT_TOL, BlockOperator, Tolerances

__all__ = [
    "chi",
    "polar_phase",
    "null_projection",
    "range_projection",
    "proj_intersection",
    "nearest_projection",
    "range_basis",
]


def _herm(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.conj().T)


def _projection_from_eigenspace(mat: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto the span of the selected eigenvectors."""
    w, v = np.linalg.eigh(_herm(mat))
    cols = v[:, keep(w)]
    return cols @ cols.conj().T


def _require_selfadjoint(op: BlockOperator, tol: Tolerances, what: str) -> None:
    eps = tol.proj_eps(op.norm())
    if op.selfadjoint_defect() > eps:
        raise PreconditionError(
            f"{what} must be selfadjoint: defect "
            f"{op.selfadjoint_defect():.3e} > {eps:.3e}"
        )


def chi(op: BlockOperator, tol: Tolerances = DEFAULT_TOL) -> BlockOperator:
    """Nonnegative spectral projection of a selfadjoint operator.

    Eigenvalues down to ``-kernel_eps`` count as nonnegative, so exact zeros
    (integer models) land in the positive side deterministically.
    """
    _require_selfadjoint(op, tol, "chi argument")
    eps_zero = tol.kernel_eps(op.norm())
    return op.map_blocks(
        lambda b: _projection_from_eigenspace(b, lambda w: w >= -eps_zero)
    )


def polar_phase(op: BlockOperator, tol: Tolerances = DEFAULT_TOL) -> BlockOperator:
    """The partial isometry from the polar decomposition.

    Built from the SVD keeping singular values above the kernel threshold.
    The zero operator yields the zero phase.
    """
    eps = tol.kernel_eps(op.norm())

    def phase_block(b: np.ndarray) -> np.ndarray:
        u, s, vh = np.linalg.svd(b)
        mask = s > eps
        return u[:, mask] @ vh[mask, :]

    return op.map_blocks(phase_block)


def null_projection(op: BlockOperator, tol: Tolerances = DEFAULT_TOL) -> BlockOperator:
    """Orthogonal projection onto the kernel (right singular vectors below threshold)."""
    eps = tol.kernel_eps(op.norm())

    def null_block(b: np.ndarray) -> np.ndarray:
        _, s, vh = np.linalg.svd(b)
        cols = vh[s <= eps, :].conj().T
        return cols @ cols.conj().T

    return op.map_blocks(null_block)


def range_projection(op: BlockOperator, tol: Tolerances = DEFAULT_TOL) -> BlockOperator:
    """Orthogonal projection onto the closure of the image."""
    eps = tol.kernel_eps(op.norm())

    def range_block(b: np.ndarray) -> np.ndarray:
        u, s, _ = np.linalg.svd(b)
        cols = u[:, s > eps]
        return cols @ cols.conj().T

    return op.map_blocks(range_block)


def proj_intersection(
    p: BlockOperator, q: BlockOperator, tol: Tolerances = DEFAULT_TOL
) -> BlockOperator:
    """Projection onto the intersection of the ranges of two projections.

    The intersection of the ranges is exactly the eigenvalue-2 eigenspace of
    p + q, so one Hermitian eigendecomposition with the ``intersection``
    tolerance settles it.
    """
    for arg, what in ((p, "first"), (q, "second")):
        eps = tol.proj_eps(arg.norm())
        if arg.projection_defect() > eps:
            raise PreconditionError(
                f"{what} intersection argument is not a projection "
                f"(defect {arg.projection_defect():.3e})"
            )
    cut = 2.0 - tol.intersection
    total = p + q
    return total.map_blocks(
        lambda b: _projection_from_eigenspace(b, lambda w: w > cut)
    )


def nearest_projection(e: BlockOperator, tol: Tolerances = DEFAULT_TOL) -> BlockOperator:
    """Snap an almost-idempotent selfadjoint operator to the nearest projection.

    Requires a spectral gap around 1/2, guaranteed when the idempotency defect
    is below 1/4.  The result is the spectral projection above 1/2 and lies
    within distance 1/2 of the input.
    """
    _require_selfadjoint(e, tol, "nearest_projection argument")
    gap_eps = 1e-12
    snapped = []
    for i, b in enumerate(e.blocks):
        w, v = np.linalg.eigh(_herm(b))
        if np.any(np.abs(w - 0.5) < gap_eps):
            raise SpectralGapError(
                f"no spectral gap: block {i} has an eigenvalue within "
                f"{gap_eps:g} of 1/2"
            )
        defect = float(np.max(np.abs(w * w - w)))
        if defect >= 0.25:
            raise SpectralGapError(
                f"no spectral gap: block {i} has idempotency defect "
                f"{defect:.6g} >= 1/4"
            )
        cols = v[:, w > 0.5]
        snapped.append(cols @ cols.conj().T)
    return BlockOperator(snapped)


def range_basis(p: BlockOperator) -> list[np.ndarray]:
    """Orthonormal bases of the block ranges of a projection.

    Returns one (dim x rank) matrix with orthonormal columns per block,
    obtained from the eigenvectors with eigenvalue above 1/2.
    """
    bases = []
    for b in p.blocks:
        w, v = np.linalg.eigh(_herm(b))
        bases.append(v[:, w > 0.5])
    return bases
