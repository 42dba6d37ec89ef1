"""Spectral triples on the block model.

A triple bundles a named generating family (containing the unit), a
selfadjoint operator D, and the ambient algebra with its ideal mask.  The
bounded transform D(1 + D^2)^(-1/2) and the two associated projections are
derived at construction time, together with machine-checkable versions of the
module hypotheses: bounded commutators (recorded) and ideal-supported
resolvents (enforced).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import (
    ConsistencyError,
    ModelError,
    NumericsError,
    PreconditionError,
)
from .model import (
    DEFAULT_TOL,
    BlockOperator,
    K0Class,
    OperatorPath,
    Tolerances,
    VnAlgebra,
    block_ranks,
    k0_of_difference,
    quotient_norm,
)
from .projections import chi, null_projection, proj_intersection
from .corner import boundary_map, corner_index

__all__ = [
    "VnTriple",
    "make_triple",
    "bounded_transform",
    "KasparovReport",
    "check_kasparov_module",
    "IntegralCheck",
    "resolvent_integral_check",
    "sf_unitary",
    "sf_unbounded",
    "pushforward_sf",
]


def bounded_transform(d: BlockOperator, tol: Tolerances = DEFAULT_TOL) -> BlockOperator:
    """Map a selfadjoint operator into the open unit ball, preserving sign data.

    Eigendecompose blockwise and apply x -> x / sqrt(1 + x^2).
    """
    eps = tol.proj_eps(d.norm())
    if d.selfadjoint_defect() > eps:
        raise PreconditionError(
            f"bounded transform needs a selfadjoint operator "
            f"(defect {d.selfadjoint_defect():.3e})"
        )

    def transform(b: np.ndarray) -> np.ndarray:
        w, v = np.linalg.eigh(0.5 * (b + b.conj().T))
        f = w / np.sqrt(1.0 + w * w)
        return (v * f) @ v.conj().T

    return d.map_blocks(transform)


@dataclass(frozen=True)
class VnTriple:
    """A spectral triple over a block model.

    ``F`` is the bounded transform of ``D``, ``p`` its nonnegative spectral
    projection and ``p_half`` the affine shift (F + 1)/2, which is only a
    projection modulo the ideal.  ``commutator_norms`` records ||[D, a]|| per
    generator; ``resolvent_residuals`` records the non-ideal support of
    a (i - D)^(-1), which construction has verified to be negligible.
    """

    alg: VnAlgebra
    generators: Mapping[str, BlockOperator]
    D: BlockOperator
    F: BlockOperator
    p: BlockOperator
    p_half: BlockOperator
    commutator_norms: Mapping[str, float]
    resolvent_residuals: Mapping[str, float]

    def generator(self, name: str) -> BlockOperator:
        try:
            return self.generators[name]
        except KeyError:
            raise ModelError(f"no generator named {name!r}") from None


def _resolvent_residual(a: BlockOperator, d: BlockOperator, alg: VnAlgebra) -> float:
    """Non-ideal support of a (i - D)^(-1)."""
    residual = 0.0
    for i in alg.nonideal_indices:
        db = d.blocks[i]
        res = np.linalg.solve(1j * np.eye(db.shape[0]) - db, np.eye(db.shape[0]))
        residual = max(residual, float(np.linalg.norm(a.blocks[i] @ res, 2)))
    return residual


def make_triple(
    alg: VnAlgebra,
    generators: Mapping[str, BlockOperator],
    d: BlockOperator,
    tol: Tolerances = DEFAULT_TOL,
) -> VnTriple:
    """Validate and assemble a spectral triple.

    The generating family must contain the unit.  Each generator has to have
    ideal-supported resolvent product a (i - D)^(-1); a violation means D does
    not separate the non-ideal blocks strongly enough to model an ideal
    resolvent.
    """
    alg.require_conformal(d)
    if not d.is_selfadjoint(tol):
        raise PreconditionError("D must be selfadjoint")
    one = alg.identity()
    if not any(
        op.allclose(one, atol=tol.proj_eps(1.0)) for op in generators.values()
    ):
        raise PreconditionError("the generating family must contain the unit")

    commutators = {}
    residuals = {}
    for name, a in generators.items():
        alg.require_conformal(a)
        commutators[name] = (d @ a - a @ d).norm()
        res = _resolvent_residual(a, d, alg)
        residuals[name] = res
        if res > tol.proj_eps(a.norm()):
            raise PreconditionError(
                f"generator {name!r} violates the ideal resolvent condition: "
                f"non-ideal support {res:.3e}"
            )

    f = bounded_transform(d, tol)
    return VnTriple(
        alg=alg,
        generators=MappingProxyType(dict(generators)),
        D=d,
        F=f,
        p=chi(f, tol),
        p_half=0.5 * (f + one),
        commutator_norms=MappingProxyType(commutators),
        resolvent_residuals=MappingProxyType(residuals),
    )


@dataclass(frozen=True)
class KasparovReport:
    """Quotient-side residuals of the three module conditions, per generator."""

    commutator: Mapping[str, float]
    square_defect: Mapping[str, float]
    adjoint_defect: Mapping[str, float]
    passed: bool

    def worst(self) -> float:
        values = (
            list(self.commutator.values())
            + list(self.square_defect.values())
            + list(self.adjoint_defect.values())
        )
        return max(values) if values else 0.0


def check_kasparov_module(
    triple: VnTriple, tol: Tolerances = DEFAULT_TOL
) -> KasparovReport:
    """Check that [F, a], a(1 - F^2) and a(F - F*) vanish in the quotient."""
    alg = triple.alg
    one = alg.identity()
    f = triple.F
    comm, square, adj = {}, {}, {}
    for name, a in triple.generators.items():
        comm[name] = quotient_norm(f @ a - a @ f, alg)
        square[name] = quotient_norm(a @ (one - f @ f), alg)
        adj[name] = quotient_norm(a @ (f - f.H), alg)
    passed = all(
        v <= tol.gap for vals in (comm, square, adj) for v in vals.values()
    )
    return KasparovReport(
        commutator=MappingProxyType(comm),
        square_defect=MappingProxyType(square),
        adjoint_defect=MappingProxyType(adj),
        passed=passed,
    )


@dataclass(frozen=True)
class IntegralCheck:
    """Result of the resolvent-integral evaluation against the direct formula."""

    residual: float
    direct_norm: float
    truncation_bound: float
    lambda_max: float
    evaluations: int


def _simpson(a: float, b: float, fa, fm, fb) -> list[np.ndarray]:
    h = (b - a) / 6.0
    return [h * (x + 4.0 * y + z) for x, y, z in zip(fa, fm, fb)]


def _blocks_norm(blocks) -> float:
    return max(float(np.linalg.norm(m, 2)) for m in blocks)


def _adaptive_simpson(f, a, b, fa, fm, fb, whole, eps_rate, depth, counter):
    mid = 0.5 * (a + b)
    flm, frm = f(0.5 * (a + mid)), f(0.5 * (mid + b))
    counter[0] += 2
    left = _simpson(a, mid, fa, flm, fm)
    right = _simpson(mid, b, fm, frm, fb)
    err = [l + r - w for l, r, w in zip(left, right, whole)]
    if depth <= 0 or _blocks_norm(err) <= 15.0 * eps_rate * (b - a):
        return [l + r + e / 15.0 for l, r, e in zip(left, right, err)]
    sub_left = _adaptive_simpson(f, a, mid, fa, flm, fm, left, eps_rate, depth - 1, counter)
    sub_right = _adaptive_simpson(f, mid, b, fm, frm, fb, right, eps_rate, depth - 1, counter)
    return [x + y for x, y in zip(sub_left, sub_right)]


def resolvent_integral_check(
    triple: VnTriple,
    a: BlockOperator | str,
    b: BlockOperator | str,
    tol: Tolerances = DEFAULT_TOL,
    target: float = 1e-8,
) -> IntegralCheck:
    """Evaluate D [(1 + D^2)^(-1/2), a] b through its resolvent integral.

    The integral over the spectral parameter is transformed with
    lambda = tan(theta)^2, which bounds the integrand, and evaluated by
    adaptive Simpson quadrature.  The tail beyond the truncation point is
    certified with the resolvent estimates ||R|| <= 1/(1 + lambda) and
    ||D R|| <= 1/(2 sqrt(1 + lambda)).  Returns the norm of the difference
    against the direct eigendecomposition formula.
    """
    if isinstance(a, str):
        a = triple.generator(a)
    if isinstance(b, str):
        b = triple.generator(b)
    d = triple.D
    alg = triple.alg
    alg.require_conformal(a)
    alg.require_conformal(b)

    eig = [np.linalg.eigh(0.5 * (m + m.conj().T)) for m in d.blocks]

    commutator_norm = (d @ a - a @ d).norm()
    scale = commutator_norm * b.norm()
    # The integrand decays like (5/4) scale / (lambda^(1/2) (1 + lambda)); the
    # tail from Lambda on is below (5 scale / (2 pi)) * 2 arctan(Lambda^(-1/2)),
    # which fixes the truncation angle for a given budget.
    if scale == 0.0:
        theta_max = 0.25 * math.pi
        truncation = 0.0
    else:
        tail_angle = min(0.5 * target * math.pi / (5.0 * scale), 0.25 * math.pi)
        theta_max = 0.5 * math.pi - tail_angle
        truncation = (5.0 * scale / math.pi) * tail_angle
    lambda_max = math.tan(theta_max) ** 2

    def integrand(theta: float) -> list[np.ndarray]:
        # lambda = tan(theta)^2 turns lambda^(-1/2) dlambda into 2 sec(theta)^2 dtheta
        lam = math.tan(theta) ** 2
        weight = (2.0 / math.pi) * (1.0 + lam)
        out = []
        for (w, v), ab, bb, db in zip(eig, a.blocks, b.blocks, d.blocks):
            denom = 1.0 + w * w + lam
            r = (v / denom) @ v.conj().T
            dr = (v * (w / denom)) @ v.conj().T
            # D [R, a] b = D R a b - D a R b
            out.append(weight * (dr @ ab @ bb - db @ ab @ r @ bb))
        return out

    counter = [3]
    fa, fm, fb = integrand(0.0), integrand(0.5 * theta_max), integrand(theta_max)
    whole = _simpson(0.0, theta_max, fa, fm, fb)
    eps_rate = 0.5 * target / theta_max
    total = _adaptive_simpson(
        integrand, 0.0, theta_max, fa, fm, fb, whole, eps_rate, 44, counter
    )

    direct_blocks = []
    for (w, v), ab, bb, db in zip(eig, a.blocks, b.blocks, d.blocks):
        inv_sqrt = (v / np.sqrt(1.0 + w * w)) @ v.conj().T
        direct_blocks.append(db @ (inv_sqrt @ ab - ab @ inv_sqrt) @ bb)

    residual = max(
        float(np.linalg.norm(t - dbk, 2))
        for t, dbk in zip(total, direct_blocks)
    )
    direct_norm = max(float(np.linalg.norm(dbk, 2)) for dbk in direct_blocks)
    if residual > max(1000.0 * target, 1e-6 * direct_norm):
        raise NumericsError(
            f"resolvent integral did not converge: residual {residual:.3e} "
            f"(truncation bound {truncation:.3e})"
        )
    return IntegralCheck(
        residual=residual,
        direct_norm=direct_norm,
        truncation_bound=truncation,
        lambda_max=lambda_max,
        evaluations=counter[0],
    )


def _as_unitary(triple: VnTriple, u: BlockOperator | str, tol: Tolerances):
    if isinstance(u, str):
        u = triple.generator(u)
    triple.alg.require_conformal(u)
    if not u.is_unitary(tol):
        raise PreconditionError(
            f"argument is not unitary (defect {u.unitary_defect():.3e})"
        )
    return u


def sf_unitary(
    triple: VnTriple, u: BlockOperator | str, tol: Tolerances = DEFAULT_TOL
) -> K0Class:
    """Spectral flow from D to u* D u, evaluated by the boundary formula.

    Requires [u, p] to be supported in the ideal blocks.  Three routes are
    evaluated and must agree: the boundary class of p u p + (1 - p), the
    boundary class of the affine-shift version built from (F + 1)/2, and the
    corner index of p u p in the p-corner.
    """
    u = _as_unitary(triple, u, tol)
    alg = triple.alg
    p = triple.p
    commutator = quotient_norm(u @ p - p @ u, alg)
    if commutator > tol.gap:
        raise PreconditionError(
            f"[u, p] is not ideal-supported: quotient norm {commutator:.3e}"
        )
    one = alg.identity()
    via_projection = boundary_map(p @ u @ p + (one - p), alg, tol, eps_gap=10 * tol.gap)
    ph = triple.p_half
    via_affine = boundary_map(ph @ u @ ph + (one - ph), alg, tol, eps_gap=10 * tol.gap)
    via_corner = corner_index(p @ u @ p, p, p, alg, tol)
    if not (via_projection == via_affine == via_corner):
        raise ConsistencyError(
            "boundary and corner routes disagree: "
            f"{via_projection.ranks} / {via_affine.ranks} / {via_corner.ranks}"
        )
    return via_projection


def sf_unbounded(
    triple: VnTriple,
    a_path: OperatorPath,
    tol: Tolerances = DEFAULT_TOL,
    drift_samples: int = 9,
) -> K0Class:
    """Spectral flow along t -> D + A_t, reduced to the endpoints.

    The bounded transforms of all the perturbed operators must share one
    quotient image; the drift is sampled and a violation reported.  The class
    depends on the endpoints only and is the usual difference of kernel
    intersections of the endpoint spectral projections.
    """
    alg = triple.alg
    for t, op in a_path.keyframes:
        alg.require_conformal(op)
        if not op.is_selfadjoint(tol):
            raise PreconditionError(
                f"perturbation keyframe at t = {t:g} is not selfadjoint"
            )

    f0 = bounded_transform(triple.D + a_path.at(0.0), tol)
    if not alg.all_ideal:
        grid = sorted(
            set(np.linspace(0.0, 1.0, drift_samples).tolist()) | set(a_path.times)
        )
        for t in grid:
            ft = bounded_transform(triple.D + a_path.at(t), tol)
            drift = quotient_norm(ft - f0, alg)
            if drift > tol.gap:
                raise ModelError(
                    f"quotient image of the bounded transform drifts at t = {t:g}: "
                    f"{drift:.3e} > {tol.gap:.3e}"
                )

    p0 = chi(f0, tol)
    p1 = chi(bounded_transform(triple.D + a_path.at(1.0), tol), tol)
    one = alg.identity()
    return k0_of_difference(
        proj_intersection(one - p1, p0, tol),
        proj_intersection(one - p0, p1, tol),
        alg,
        tol,
    )


def pushforward_sf(
    triple: VnTriple,
    u: BlockOperator | str,
    sub_ideal_mask: tuple[bool, ...] | list[bool],
    tol: Tolerances = DEFAULT_TOL,
) -> tuple[K0Class, K0Class]:
    """Spectral flow refined to a designated subalgebra of the ideal.

    ``sub_ideal_mask`` selects ideal blocks forming the subalgebra.  It must
    carry the compact data of the triple: the support of (1 + D^2)^(-1) and
    of every [F, a], and the kernels entering the flow.  Returns the class
    over the selected blocks and its zero-padded image over all ideal blocks,
    which is checked against the unrefined flow.
    """
    u = _as_unitary(triple, u, tol)
    alg = triple.alg
    mask = tuple(bool(x) for x in sub_ideal_mask)
    if len(mask) != len(alg.blocks):
        raise ModelError(
            f"sub-ideal mask has {len(mask)} entries for {len(alg.blocks)} blocks"
        )
    for i, selected in enumerate(mask):
        if selected and not alg.blocks[i].in_ideal:
            raise ModelError(f"sub-ideal mask selects non-ideal block {i}")

    one = alg.identity()
    f = triple.F
    resolvent = one - f @ f
    outside = [i for i in range(len(alg.blocks)) if not mask[i]]
    for i in outside:
        support = float(np.linalg.norm(resolvent.blocks[i], 2))
        if support > tol.gap:
            raise PreconditionError(
                f"sub-ideal too small: (1 + D^2)^(-1) has norm {support:.3e} "
                f"on unselected block {i}"
            )
        for name, a in triple.generators.items():
            c = f @ a - a @ f
            support = float(np.linalg.norm(c.blocks[i], 2))
            if support > tol.gap:
                raise PreconditionError(
                    f"sub-ideal too small: [F, {name}] has norm {support:.3e} "
                    f"on unselected block {i}"
                )

    flow = sf_unitary(triple, u, tol)

    p = triple.p
    lift = p @ u @ p + (one - p)
    ker = null_projection(lift, tol)
    coker = null_projection(lift.H, tol)
    for i in outside:
        for name, kp in (("kernel", ker), ("cokernel", coker)):
            support = float(np.linalg.norm(kp.blocks[i], 2))
            if support > tol.proj_eps(1.0):
                raise PreconditionError(
                    f"sub-ideal too small: flow {name} has norm {support:.3e} "
                    f"on unselected block {i}"
                )

    rk = block_ranks(ker)
    rc = block_ranks(coker)
    sub_blocks = [i for i, selected in enumerate(mask) if selected]
    sub_class = K0Class(rk[i] - rc[i] for i in sub_blocks)
    padded = K0Class(
        (rk[i] - rc[i]) if mask[i] else 0 for i in alg.ideal_indices
    )
    if padded != flow:
        raise ConsistencyError(
            f"pushforward {padded.ranks} disagrees with the flow {flow.ranks}"
        )
    return sub_class, padded
