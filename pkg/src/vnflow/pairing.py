"""Odd index pairings realized through the boundary map.

The pairing of a unitary with the class of a projection-mod-ideal is computed
as the boundary class of the compressed unitary p u p + (1 - p), and verified
against the boundary class of the intermediate operator built from the
selfadjoint logarithm of u.  All mod-ideal identities along the way are
exposed as quantitative residual checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import ConsistencyError, ModelError, NumericsError, PreconditionError
from .model import (
    DEFAULT_TOL,
    BlockOperator,
    K0Class,
    Tolerances,
    VnAlgebra,
    quotient_norm,
)
from .corner import boundary_map
from .projections import nearest_projection

__all__ = [
    "PairingData",
    "make_pairing_data",
    "unitary_log",
    "cos_identity_check",
    "intermediate_operator",
    "pairing_via_boundary",
]

_LOG_TOL = 1e-10


def unitary_log(u: BlockOperator, tol: Tolerances = DEFAULT_TOL) -> BlockOperator:
    """Selfadjoint logarithm: q with u = exp(2 pi i q) and spectrum in [0, 1).

    The branch cut sits at argument zero, so the eigenvalue 1 maps to the
    q-eigenvalue 0.  Built from a complex Schur form, which is diagonal for
    the (normal) unitary input.
    """
    if u.unitary_defect() > _LOG_TOL:
        raise PreconditionError(
            f"unitary_log needs a unitary within {_LOG_TOL:g} "
            f"(defect {u.unitary_defect():.3e})"
        )

    logs = []
    for b in u.blocks:
        t, z = scipy.linalg.schur(b, output="complex")
        angles = np.mod(np.angle(np.diagonal(t)), 2.0 * np.pi)
        vals = angles / (2.0 * np.pi)
        logs.append((z * vals) @ z.conj().T)
    q = BlockOperator(logs)

    recon = q.map_blocks(_exp_2pi_i)
    defect = max(
        float(np.linalg.norm(x - y, 2)) for x, y in zip(recon.blocks, u.blocks)
    )
    if defect > _LOG_TOL:
        raise NumericsError(
            f"logarithm reconstruction error {defect:.3e} exceeds {_LOG_TOL:g}"
        )
    return q


def _exp_2pi_i(b: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (b + b.conj().T))
    return (v * np.exp(2j * np.pi * w)) @ v.conj().T


def _selfadjoint_function(op: BlockOperator, fn) -> BlockOperator:
    def apply(b: np.ndarray) -> np.ndarray:
        w, v = np.linalg.eigh(0.5 * (b + b.conj().T))
        return (v * fn(w)) @ v.conj().T

    return op.map_blocks(apply)


def cos_identity_check(
    q: BlockOperator,
    alg: VnAlgebra,
    tol: Tolerances = DEFAULT_TOL,
    eps_gap: float | None = None,
) -> float:
    """Residual of the quotient identity cos(pi q) = -(2q - 1).

    Valid whenever q is selfadjoint and idempotent modulo the ideal; the
    residual is bounded by a small multiple of the idempotency defect, so for
    a defect within ``eps_gap`` it stays below ten times that.
    """
    eps = tol.gap if eps_gap is None else eps_gap
    if q.selfadjoint_defect() > tol.proj_eps(q.norm()):
        raise PreconditionError("cos identity needs a selfadjoint argument")
    defect = quotient_norm(q @ q - q, alg)
    if defect > eps:
        raise PreconditionError(
            f"argument is not idempotent modulo the ideal: "
            f"quotient defect {defect:.3e} > {eps:.3e}"
        )
    one = alg.identity()
    cos_pq = _selfadjoint_function(q, lambda w: np.cos(np.pi * w))
    return quotient_norm(cos_pq + 2.0 * q - one, alg)


@dataclass(frozen=True)
class PairingData:
    """Inputs of an odd pairing: p (projection mod ideal), unitary u, log q.

    ``psi`` is the block map carrying the unitary side into the algebra of
    the projection; the identity embedding when not supplied.
    """

    alg: VnAlgebra
    p: BlockOperator
    u: BlockOperator
    q: BlockOperator
    psi: Callable[[BlockOperator], BlockOperator]


def make_pairing_data(
    alg: VnAlgebra,
    p: BlockOperator,
    u: BlockOperator,
    q: BlockOperator | None = None,
    psi: Callable[[BlockOperator], BlockOperator] | None = None,
    psi_test_elements: tuple[BlockOperator, ...] = (),
    tol: Tolerances = DEFAULT_TOL,
) -> PairingData:
    """Validate pairing inputs.

    q defaults to the selfadjoint logarithm of u.  A user-supplied psi must be
    unital, adjoint-preserving and multiplicative (to 1e-10) on u, u* and the
    supplied test elements.
    """
    alg.require_conformal(p)
    alg.require_conformal(u)
    if not u.is_unitary(tol):
        raise PreconditionError(
            f"pairing unitary has defect {u.unitary_defect():.3e}"
        )
    if quotient_norm(p @ p - p, alg) > tol.gap:
        raise PreconditionError(
            "p must be a projection modulo the ideal "
            f"(quotient defect {quotient_norm(p @ p - p, alg):.3e})"
        )
    if p.selfadjoint_defect() > tol.proj_eps(p.norm()):
        raise PreconditionError("p must be selfadjoint")

    if q is None:
        q = unitary_log(u, tol)
    else:
        alg.require_conformal(q)
        if q.selfadjoint_defect() > tol.proj_eps(q.norm()):
            raise PreconditionError("q must be selfadjoint")
        if q.norm() > 1.0 + _LOG_TOL:
            raise PreconditionError(f"q must have norm <= 1, got {q.norm():.6g}")
        recon = _selfadjoint_function(q, lambda w: np.exp(2j * np.pi * w))
        defect = max(
            float(np.linalg.norm(x - y, 2))
            for x, y in zip(recon.blocks, u.blocks)
        )
        if defect > _LOG_TOL:
            raise PreconditionError(
                f"u differs from exp(2 pi i q) by {defect:.3e} > {_LOG_TOL:g}"
            )

    if psi is None:
        psi_map: Callable[[BlockOperator], BlockOperator] = lambda op: op
    else:
        psi_map = psi
        one = alg.identity()
        if not psi_map(one).allclose(one, atol=_LOG_TOL):
            raise ModelError("psi must be unital")
        probes = (u, u.H) + tuple(psi_test_elements)
        for x in probes:
            if not psi_map(x.H).allclose(psi_map(x).H, atol=_LOG_TOL):
                raise ModelError("psi must preserve adjoints on the test elements")
            for y in probes:
                if not psi_map(x @ y).allclose(
                    psi_map(x) @ psi_map(y), atol=_LOG_TOL
                ):
                    raise ModelError(
                        "psi must be multiplicative on the test elements"
                    )

    commutator = quotient_norm(p @ psi_map(u) - psi_map(u) @ p, alg)
    if commutator > tol.gap:
        raise PreconditionError(
            f"[p, psi(u)] is not ideal-supported: quotient norm {commutator:.3e}"
        )
    return PairingData(alg=alg, p=p, u=u, q=q, psi=psi_map)


def intermediate_operator(
    data: PairingData, tol: Tolerances = DEFAULT_TOL
) -> BlockOperator:
    """The single corner entry representing the product cycle.

    W = -i psi(cos(pi q)) + psi(sin(pi q)) (2p - 1).  Its quotient image must
    be unitary; the residuals are checked against ten times the gap tolerance.
    """
    alg = data.alg
    one = alg.identity()
    cos_pq = _selfadjoint_function(data.q, lambda w: np.cos(np.pi * w))
    sin_pq = _selfadjoint_function(data.q, lambda w: np.sin(np.pi * w))
    w_op = (-1j) * data.psi(cos_pq) + data.psi(sin_pq) @ (2.0 * data.p - one)
    res_left = quotient_norm(w_op.H @ w_op - one, alg)
    res_right = quotient_norm(w_op @ w_op.H - one, alg)
    if max(res_left, res_right) > 10.0 * tol.gap:
        raise PreconditionError(
            f"intermediate operator is not quotient unitary: residuals "
            f"({res_left:.3e}, {res_right:.3e})"
        )
    return w_op


def pairing_via_boundary(
    data: PairingData, tol: Tolerances = DEFAULT_TOL
) -> K0Class:
    """The odd pairing as the boundary class of p psi(u) p + (1 - p).

    When p is only a projection modulo the ideal it is first snapped to the
    nearest honest projection.  The boundary class of the intermediate
    operator is computed as well; disagreement flags a violated hypothesis,
    typically a commutator [p, psi(u)] that is not ideal-supported.
    """
    alg = data.alg
    one = alg.identity()
    p = data.p
    if p.projection_defect() > tol.proj_eps(p.norm()):
        p = nearest_projection(p, tol)
    lift = p @ data.psi(data.u) @ p + (one - p)
    via_lift = boundary_map(lift, alg, tol, eps_gap=10.0 * tol.gap)
    w_op = intermediate_operator(data, tol)
    via_intermediate = boundary_map(w_op, alg, tol, eps_gap=10.0 * tol.gap)
    if via_lift != via_intermediate:
        raise ConsistencyError(
            "pairing routes disagree "
            f"({via_lift.ranks} vs {via_intermediate.ranks}); "
            "check that [p, psi(u)] is ideal-supported"
        )
    return via_lift
