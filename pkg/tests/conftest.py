"""Shared seeded generators for the test suite."""

from __future__ import annotations

import numpy as np

from vnflow import Block, BlockOperator, VnAlgebra


def haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


def random_projection(n: int, rank: int, rng: np.random.Generator) -> np.ndarray:
    v = haar_unitary(n, rng)[:, :rank]
    return v @ v.conj().T


def random_selfadjoint(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * 0.5 * (g + g.conj().T)


def random_matrix(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    return scale * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))


def single_block_alg(dim: int, weight: float = 1.0, ideal: bool = True) -> VnAlgebra:
    return VnAlgebra([Block(dim=dim, weight=weight, in_ideal=ideal)])


def op(*mats) -> BlockOperator:
    return BlockOperator([np.asarray(m, dtype=complex) for m in mats])


def rotation_path(n: int, rng: np.random.Generator, speed: float):
    """t -> unitary exp(-i t speed H) for a random Hermitian direction H."""
    h = random_selfadjoint(n, rng)
    h *= 1.0 / max(np.linalg.norm(h, 2), 1e-12)
    w, v = np.linalg.eigh(h)

    def rot(t: float) -> np.ndarray:
        return (v * np.exp(-1j * speed * t * w)) @ v.conj().T

    return rot


def random_certified_path(seed: int, n_keyframes: int = 7):
    """Seeded mixed-model path that certifies: crossings happen only on ideal blocks.

    Ideal blocks carry smooth eigenvalue curves that may cross zero; non-ideal
    blocks keep their spectrum pinned away from zero while the eigenbasis
    rotates moderately.  Returns (algebra, path).
    """
    from vnflow import OperatorPath, weighted_model

    rng = np.random.default_rng(seed)
    n_ideal = int(rng.integers(1, 3))
    dims, weights, mask = [], [], []
    for _ in range(n_ideal):
        dims.append(int(rng.integers(2, 7)))
        weights.append(float(rng.choice([1.0, 0.5, 1.0 / 3.0])))
        mask.append(True)
    if rng.uniform() < 0.6:
        dims.append(int(rng.integers(2, 5)))
        weights.append(1.0)
        mask.append(False)
    alg = weighted_model(dims, weights, mask)

    builders = []
    for dim, ideal in zip(dims, mask):
        rot = rotation_path(dim, rng, speed=float(rng.uniform(0.0, 2.0)))
        if ideal:
            c0 = rng.uniform(-1.2, 1.2, size=dim)
            c1 = rng.uniform(-1.5, 1.5, size=dim)
            c2 = rng.uniform(-0.8, 0.8, size=dim)
            # keep endpoints clear of zero
            for coeffs in (c0, c0 + c1):
                small = np.abs(coeffs) < 0.05
                coeffs[small] += 0.1 * np.sign(coeffs[small] + 0.5)

            def curve(t, c0=c0, c1=c1, c2=c2):
                return c0 + c1 * t + c2 * np.sin(np.pi * t)

        else:
            levels = rng.uniform(0.4, 1.5, size=dim) * rng.choice(
                [-1.0, 1.0], size=dim
            )

            def curve(t, levels=levels):
                return levels

        def block(t, rot=rot, curve=curve):
            v = rot(t)
            mat = (v * curve(t)) @ v.conj().T
            return 0.5 * (mat + mat.conj().T)

        builders.append(block)

    def frame(t: float) -> BlockOperator:
        return BlockOperator([b(t) for b in builders])

    grid = np.linspace(0.0, 1.0, n_keyframes)
    return alg, OperatorPath.from_function(frame, grid)


def endpoint_rank_oracle(path, alg) -> tuple[int, ...]:
    """Independent flow oracle: per ideal block, endpoint difference of the
    number of nonnegative eigenvalues, counted directly from the spectra."""
    counts = []
    for idx in alg.ideal_indices:
        deltas = []
        for t in (0.0, 1.0):
            b = path.at(t).blocks[idx]
            w = np.linalg.eigvalsh(0.5 * (b + b.conj().T))
            deltas.append(int(np.count_nonzero(w >= -1e-12)))
        counts.append(deltas[0] - deltas[1])
    return tuple(counts)
