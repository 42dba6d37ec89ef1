"""Finite block models of a von Neumann algebra with a marked ideal.

A model is a finite direct sum of full complex matrix blocks.  Each block
carries a positive trace weight and a flag saying whether it belongs to the
distinguished norm closed ideal.  The quotient onto the Calkin side simply
forgets the ideal blocks, which keeps norms, traces, spectral projections and
K-classes exactly computable.

Everything in this module is immutable after construction and safe for
unrestricted concurrent use.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ModelError, NotInIdealError, PreconditionError

__all__ = [
    "Tolerances",
    "DEFAULT_TOL",
    "Block",
    "VnAlgebra",
    "BlockOperator",
    "K0Class",
    "OperatorPath",
    "quotient_norm",
    "tau",
    "tau_star",
    "k0_of_difference",
    "block_ranks",
]


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds shared across the package.

    ``proj`` and ``kernel`` are relative factors: the effective projection
    tolerance for an operand of norm ``n`` is ``proj * (1 + n)`` and the
    effective kernel threshold is ``kernel * max(1, n)``.  ``gap`` (Fredholm
    gap) and ``intersection`` (eigenvalue-2 selection) are absolute.
    ``margin`` and ``max_depth`` drive the partition search.
    """

    proj: float = 1e-8
    kernel: float = 1e-10
    gap: float = 1e-8
    intersection: float = 1e-8
    margin: float = 0.05
    max_depth: int = 20

    def proj_eps(self, norm: float) -> float:
        return self.proj * (1.0 + norm)

    def kernel_eps(self, norm: float) -> float:
        return self.kernel * max(1.0, norm)


DEFAULT_TOL = Tolerances()


def _spectral_norm(mat: np.ndarray) -> float:
    if mat.size == 0:
        return 0.0
    return float(np.linalg.norm(mat, 2))


@dataclass(frozen=True)
class Block:
    """One summand of the model: dimension, trace weight, ideal membership."""

    dim: int
    weight: float = 1.0
    in_ideal: bool = True

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ModelError(f"block dimension must be >= 1, got {self.dim}")
        if not self.weight > 0.0:
            raise ModelError(f"trace weight must be > 0, got {self.weight}")


@dataclass(frozen=True)
class VnAlgebra:
    """A finite direct sum of matrix blocks with an ideal mask and weights."""

    blocks: tuple[Block, ...]

    def __init__(self, blocks: Iterable[Block]) -> None:
        blocks = tuple(blocks)
        if not blocks:
            raise ModelError("an algebra needs at least one block")
        object.__setattr__(self, "blocks", blocks)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(b.dim for b in self.blocks)

    @property
    def weights(self) -> tuple[float, ...]:
        return tuple(b.weight for b in self.blocks)

    @property
    def ideal_indices(self) -> tuple[int, ...]:
        return tuple(i for i, b in enumerate(self.blocks) if b.in_ideal)

    @property
    def nonideal_indices(self) -> tuple[int, ...]:
        return tuple(i for i, b in enumerate(self.blocks) if not b.in_ideal)

    @property
    def n_ideal(self) -> int:
        return len(self.ideal_indices)

    @property
    def all_ideal(self) -> bool:
        return not self.nonideal_indices

    def identity(self) -> "BlockOperator":
        return BlockOperator([np.eye(d, dtype=complex) for d in self.dims])

    def zero(self) -> "BlockOperator":
        return BlockOperator([np.zeros((d, d), dtype=complex) for d in self.dims])

    def require_conformal(self, op: "BlockOperator") -> None:
        if op.dims != self.dims:
            raise ModelError(
                f"operator blocks {op.dims} do not match algebra blocks {self.dims}"
            )


class BlockOperator:
    """An element of the model: one complex square matrix per block.

    Instances are immutable; the underlying arrays are copies with the
    writeable flag cleared.  Norm and the selfadjoint / projection / unitary
    defect checks are cached on first use.
    """

    __slots__ = ("blocks", "_cache")

    def __init__(self, blocks: Sequence[np.ndarray]) -> None:
        mats = []
        for raw in blocks:
            arr = np.array(raw, dtype=complex)
            if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
                raise ModelError(f"blocks must be square matrices, got shape {arr.shape}")
            arr.setflags(write=False)
            mats.append(arr)
        if not mats:
            raise ModelError("an operator needs at least one block")
        self.blocks = tuple(mats)
        self._cache: dict = {}

    # -- construction helpers -------------------------------------------------

    @classmethod
    def identity(cls, dims: Sequence[int]) -> "BlockOperator":
        return cls([np.eye(d, dtype=complex) for d in dims])

    @classmethod
    def zeros(cls, dims: Sequence[int]) -> "BlockOperator":
        return cls([np.zeros((d, d), dtype=complex) for d in dims])

    @classmethod
    def from_diagonals(cls, diagonals: Sequence[Sequence[complex]]) -> "BlockOperator":
        return cls([np.diag(np.asarray(d, dtype=complex)) for d in diagonals])

    def map_blocks(self, fn: Callable[[np.ndarray], np.ndarray]) -> "BlockOperator":
        return BlockOperator([fn(b) for b in self.blocks])

    # -- basic queries ---------------------------------------------------------

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(b.shape[0] for b in self.blocks)

    @property
    def H(self) -> "BlockOperator":
        """The adjoint (blockwise conjugate transpose)."""
        return BlockOperator([b.conj().T for b in self.blocks])

    def norm(self) -> float:
        """Operator norm: the maximum spectral norm over all blocks."""
        if "norm" not in self._cache:
            self._cache["norm"] = max(_spectral_norm(b) for b in self.blocks)
        return self._cache["norm"]

    def allclose(self, other: "BlockOperator", atol: float = 1e-10) -> bool:
        if self.dims != other.dims:
            return False
        return all(
            np.allclose(a, b, atol=atol, rtol=0.0)
            for a, b in zip(self.blocks, other.blocks)
        )

    # -- cached flags ----------------------------------------------------------

    def selfadjoint_defect(self) -> float:
        if "sa" not in self._cache:
            self._cache["sa"] = max(
                _spectral_norm(b - b.conj().T) for b in self.blocks
            )
        return self._cache["sa"]

    def projection_defect(self) -> float:
        if "proj" not in self._cache:
            idem = max(_spectral_norm(b @ b - b) for b in self.blocks)
            self._cache["proj"] = max(idem, self.selfadjoint_defect())
        return self._cache["proj"]

    def unitary_defect(self) -> float:
        if "uni" not in self._cache:
            defect = 0.0
            for b in self.blocks:
                eye = np.eye(b.shape[0])
                defect = max(
                    defect,
                    _spectral_norm(b.conj().T @ b - eye),
                    _spectral_norm(b @ b.conj().T - eye),
                )
            self._cache["uni"] = defect
        return self._cache["uni"]

    def is_selfadjoint(self, tol: Tolerances = DEFAULT_TOL) -> bool:
        return self.selfadjoint_defect() <= tol.proj_eps(self.norm())

    def is_projection(self, tol: Tolerances = DEFAULT_TOL) -> bool:
        return self.projection_defect() <= tol.proj_eps(self.norm())

    def is_unitary(self, tol: Tolerances = DEFAULT_TOL) -> bool:
        return self.unitary_defect() <= tol.proj_eps(self.norm())

    # -- algebra ---------------------------------------------------------------

    def _binary(self, other: "BlockOperator", fn) -> "BlockOperator":
        if not isinstance(other, BlockOperator):
            return NotImplemented
        if self.dims != other.dims:
            raise ModelError(f"block shape mismatch: {self.dims} vs {other.dims}")
        return BlockOperator([fn(a, b) for a, b in zip(self.blocks, other.blocks)])

    def __add__(self, other):
        return self._binary(other, lambda a, b: a + b)

    def __sub__(self, other):
        return self._binary(other, lambda a, b: a - b)

    def __matmul__(self, other):
        return self._binary(other, lambda a, b: a @ b)

    def __neg__(self):
        return BlockOperator([-b for b in self.blocks])

    def __mul__(self, scalar):
        if isinstance(scalar, (int, float, complex)):
            return BlockOperator([scalar * b for b in self.blocks])
        return NotImplemented

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"BlockOperator(dims={self.dims})"


@dataclass(frozen=True)
class K0Class:
    """An element of the K-group of the ideal: one integer rank per ideal block."""

    ranks: tuple[int, ...]

    def __init__(self, ranks: Iterable[int]) -> None:
        object.__setattr__(self, "ranks", tuple(int(r) for r in ranks))

    @classmethod
    def zero(cls, n_ideal: int) -> "K0Class":
        return cls((0,) * n_ideal)

    @property
    def is_zero(self) -> bool:
        return all(r == 0 for r in self.ranks)

    def _check(self, other: "K0Class") -> None:
        if len(self.ranks) != len(other.ranks):
            raise ModelError(
                f"K-class length mismatch: {len(self.ranks)} vs {len(other.ranks)}"
            )

    def __add__(self, other: "K0Class") -> "K0Class":
        self._check(other)
        return K0Class(a + b for a, b in zip(self.ranks, other.ranks))

    def __sub__(self, other: "K0Class") -> "K0Class":
        self._check(other)
        return K0Class(a - b for a, b in zip(self.ranks, other.ranks))

    def __neg__(self) -> "K0Class":
        return K0Class(-r for r in self.ranks)

    def __mul__(self, n: int) -> "K0Class":
        return K0Class(n * r for r in self.ranks)

    __rmul__ = __mul__


class OperatorPath:
    """A piecewise linear path of selfadjoint-capable operators over [0, 1].

    Keyframes are (time, operator) pairs with strictly increasing times, the
    first at 0 and the last at 1.  Evaluation at a keyframe time returns the
    stored operator itself; between keyframes the blocks are interpolated
    linearly.
    """

    __slots__ = ("keyframes", "_times")

    def __init__(self, keyframes: Sequence[tuple[float, BlockOperator]]) -> None:
        frames = [(float(t), op) for t, op in keyframes]
        if len(frames) < 2:
            raise ModelError("a path needs at least the two endpoint keyframes")
        times = [t for t, _ in frames]
        if times[0] != 0.0 or times[-1] != 1.0:
            raise ModelError("keyframe times must start at 0 and end at 1")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ModelError("keyframe times must be strictly increasing")
        dims = frames[0][1].dims
        for _, op in frames:
            if op.dims != dims:
                raise ModelError("all keyframes must share the same block structure")
        self.keyframes = tuple(frames)
        self._times = tuple(times)

    @classmethod
    def from_function(
        cls, fn: Callable[[float], BlockOperator], times: Sequence[float]
    ) -> "OperatorPath":
        return cls([(t, fn(t)) for t in times])

    @classmethod
    def linear(cls, start: BlockOperator, end: BlockOperator) -> "OperatorPath":
        return cls([(0.0, start), (1.0, end)])

    @property
    def times(self) -> tuple[float, ...]:
        return self._times

    @property
    def dims(self) -> tuple[int, ...]:
        return self.keyframes[0][1].dims

    def at(self, t: float) -> BlockOperator:
        t = float(t)
        if not 0.0 <= t <= 1.0:
            raise ModelError(f"path parameter {t} outside [0, 1]")
        idx = bisect_right(self._times, t) - 1
        if idx >= 0 and self._times[idx] == t:
            return self.keyframes[idx][1]
        t0, op0 = self.keyframes[idx]
        t1, op1 = self.keyframes[idx + 1]
        s = (t - t0) / (t1 - t0)
        return BlockOperator(
            [(1.0 - s) * a + s * b for a, b in zip(op0.blocks, op1.blocks)]
        )

    def reversed(self) -> "OperatorPath":
        frames = [(1.0 - t, op) for t, op in reversed(self.keyframes)]
        return OperatorPath(frames)

    def refined(self, extra_times: Iterable[float]) -> "OperatorPath":
        """The same path with additional keyframes at the given times."""
        ts = sorted(set(self._times) | {float(t) for t in extra_times})
        return OperatorPath([(t, self.at(t)) for t in ts])

    def concatenated(self, other: "OperatorPath", atol: float = 1e-12) -> "OperatorPath":
        """Run this path on [0, 1/2] and ``other`` on [1/2, 1].

        The end of this path must coincide with the start of ``other``.
        """
        if not self.keyframes[-1][1].allclose(other.keyframes[0][1], atol=atol):
            raise ModelError("concatenation point does not match")
        frames = [(0.5 * t, op) for t, op in self.keyframes]
        frames += [(0.5 + 0.5 * t, op) for t, op in other.keyframes[1:]]
        return OperatorPath(frames)


# -- model operations ---------------------------------------------------------


def quotient_norm(op: BlockOperator, alg: VnAlgebra) -> float:
    """Norm of the image in the quotient: max spectral norm over non-ideal blocks.

    Returns 0 when every block belongs to the ideal (the quotient is zero).
    """
    alg.require_conformal(op)
    idx = alg.nonideal_indices
    if not idx:
        return 0.0
    return max(_spectral_norm(op.blocks[i]) for i in idx)


def block_ranks(p: BlockOperator) -> tuple[int, ...]:
    """Per-block rank of a projection, counted against the 1/2 threshold.

    Eigenvalues of the Hermitian part are compared with 1/2, which is the
    stable way to count after arithmetic has smeared an idempotent.
    """
    ranks = []
    for b in p.blocks:
        w = np.linalg.eigvalsh(0.5 * (b + b.conj().T))
        ranks.append(int(np.count_nonzero(w >= 0.5)))
    return tuple(ranks)


def _require_projection(p: BlockOperator, tol: Tolerances, what: str) -> None:
    eps = tol.proj_eps(p.norm())
    if p.projection_defect() > eps:
        raise PreconditionError(
            f"{what} is not a projection: defect {p.projection_defect():.3e} > {eps:.3e}"
        )


def tau(p: BlockOperator, alg: VnAlgebra, tol: Tolerances = DEFAULT_TOL) -> float:
    """The weighted trace of a projection: sum of weight * rank over all blocks."""
    alg.require_conformal(p)
    _require_projection(p, tol, "tau argument")
    ranks = block_ranks(p)
    return float(sum(w * r for w, r in zip(alg.weights, ranks)))


def tau_star(c: K0Class, alg: VnAlgebra) -> float:
    """The trace homomorphism on K-classes: weighted sum over ideal blocks."""
    idx = alg.ideal_indices
    if len(c.ranks) != len(idx):
        raise ModelError(
            f"K-class has {len(c.ranks)} entries but the algebra has {len(idx)} ideal blocks"
        )
    return float(sum(alg.blocks[i].weight * r for i, r in zip(idx, c.ranks)))


def k0_of_difference(
    p: BlockOperator,
    q: BlockOperator,
    alg: VnAlgebra,
    tol: Tolerances = DEFAULT_TOL,
) -> K0Class:
    """The formal difference of two projections as a K-class of the ideal.

    The difference must be supported in the ideal blocks: on every non-ideal
    block p and q have to agree within the projection tolerance, otherwise the
    class does not live in the ideal's K-group.
    """
    alg.require_conformal(p)
    alg.require_conformal(q)
    _require_projection(p, tol, "first argument")
    _require_projection(q, tol, "second argument")
    eps = tol.proj_eps(max(p.norm(), q.norm()))
    for i in alg.nonideal_indices:
        defect = _spectral_norm(p.blocks[i] - q.blocks[i])
        if defect > eps:
            raise NotInIdealError(
                f"class not in the ideal K-group: non-ideal block {i} "
                f"carries a difference of norm {defect:.3e}"
            )
    rp = block_ranks(p)
    rq = block_ranks(q)
    return K0Class(rp[i] - rq[i] for i in alg.ideal_indices)
