"""Isotypic decomposition of finite-group representations.

The decomposition is built numerically from the group average (twirl) of
random probes, with no character tables:

1. a seeded random Hermitian probe is twirled into a generic commutant
   element; its eigenspaces are irreducible invariant subspaces;
2. eigenspaces are grouped into equivalence classes by twirling random
   cross-block maps (nonzero exactly between equivalent irreps);
3. inside a class, block 1 fixes the basis and every other block is rotated
   by the unitary intertwiner that maps block 1 onto it, so the restricted
   irrep matrices coincide across blocks.

The intertwiners ``T[mu, k, l] = B_k B_l^dag`` built from the aligned
blocks satisfy ``T_kl T_pq = delta_lp T_kq`` and commute with every U_g.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateProbe, DimensionMismatch, ReconstructionFailure
from .group_core import ProjectiveRep

CLUSTER_TOL = 1e-8
RANK_TOL = 1e-10
MAX_PROBE_RETRIES = 8


def _dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def twirl(rep: ProjectiveRep, X) -> np.ndarray:
    """Group average ``(1/|G|) sum_g U_g X U_g^dag``."""
    X = np.asarray(X, dtype=complex)
    d = rep.dim
    if X.shape != (d, d):
        raise DimensionMismatch(f"operator has shape {X.shape}, representation acts on C^{d}")
    U = rep.matrices
    return np.sum(U @ X @ _dagger(U), axis=0) / len(U)


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (z + z.conj().T) / 2


def commutant_basis(rep: ProjectiveRep, tol: float = RANK_TOL) -> list[np.ndarray]:
    """Hilbert-Schmidt orthonormal basis of ``{O : [O, U_g] = 0 for all g}``.

    Solves the stacked linear system ``(U_g (x) 1 - 1 (x) U_g^T) vec(O) = 0``
    (row-major vec) by SVD; singular values above ``d * s_max * tol`` count
    towards the rank.
    """
    d = rep.dim
    eye = np.eye(d)
    M = np.concatenate([np.kron(U, eye) - np.kron(eye, U.T) for U in rep.matrices])
    _, s, vh = np.linalg.svd(M, full_matrices=False)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > d * smax * tol)) if smax > 0 else 0
    return [vh[j].conj().reshape(d, d) for j in range(rank, d * d)]


def commutant_dimension(rep: ProjectiveRep) -> int:
    """``(1/|G|) sum_g |Tr U_g|^2``, the trace of the twirl superoperator, rounded."""
    chi = np.trace(rep.matrices, axis1=1, axis2=2)
    return int(round(float(np.sum(np.abs(chi) ** 2)) / len(chi)))


@dataclass(frozen=True, eq=False)
class IsotypicComponent:
    label: int
    d_mu: int
    m_mu: int
    basis: np.ndarray  # d x (d_mu * m_mu), block k = columns k*d_mu:(k+1)*d_mu
    irrep: np.ndarray  # |G| x d_mu x d_mu, shared by all blocks

    def block(self, k: int) -> np.ndarray:
        return self.basis[:, k * self.d_mu:(k + 1) * self.d_mu]

    @property
    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.conj().T


@dataclass(frozen=True, eq=False)
class IsotypicDecomposition:
    rep: ProjectiveRep
    components: tuple
    probe_seed: int

    @property
    def dim(self) -> int:
        return self.rep.dim

    def intertwiner(self, mu: int, k: int, l: int) -> np.ndarray:
        c = self.components[mu]
        return c.block(k) @ c.block(l).conj().T

    def keys(self) -> list[tuple[int, int, int]]:
        """All (mu, k, l) in lexicographic order; there are sum_mu m_mu^2 of them."""
        return [(mu, k, l) for mu, c in enumerate(self.components)
                for k in range(c.m_mu) for l in range(c.m_mu)]

    @property
    def intertwiners(self) -> dict:
        return {key: self.intertwiner(*key) for key in self.keys()}

    @property
    def sum_m_squared(self) -> int:
        return sum(c.m_mu ** 2 for c in self.components)

    def summary(self) -> list[dict]:
        return [{"mu": c.label, "d_mu": c.d_mu, "m_mu": c.m_mu} for c in self.components]

    def reconstruct(self, O) -> np.ndarray:
        """``sum_mu sum_kl Tr[T_lk O] / d_mu * T_kl``; the identity map on the commutant."""
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for mu, k, l in self.keys():
            c = self.components[mu]
            coeff = np.trace(self.intertwiner(mu, l, k) @ O) / c.d_mu
            out += coeff * self.intertwiner(mu, k, l)
        return out


def _cluster(evals: np.ndarray, tol: float, floor: float) -> list[np.ndarray]:
    span = evals[-1] - evals[0]
    cut = max(tol * span, floor)
    groups, start = [], 0
    for j in range(1, len(evals) + 1):
        if j == len(evals) or evals[j] - evals[j - 1] > cut:
            groups.append(np.arange(start, j))
            start = j
    return groups


def _restricted(U: np.ndarray, V: np.ndarray) -> np.ndarray:
    return _dagger(V)[None] @ U @ V[None]


def _phase_fix(W: np.ndarray) -> np.ndarray:
    flat = W.ravel()
    scale = np.max(np.abs(flat))
    j = int(np.argmax(np.abs(flat) > 1e-8 * scale))
    return W * (np.abs(flat[j]) / flat[j])


def _class_key(irrep: np.ndarray) -> tuple:
    chi = np.trace(irrep, axis1=1, axis2=2)
    return (irrep.shape[1],) + tuple(np.round(np.concatenate([chi.real, chi.imag]), 6) + 0.0)


def _attempt(rep: ProjectiveRep, seed: int) -> tuple:
    U = rep.matrices
    d = rep.dim
    n = len(U)
    rng = np.random.default_rng(seed)
    probe = random_hermitian(d, rng)
    H = twirl(rep, probe)
    H = (H + H.conj().T) / 2
    evals, evecs = np.linalg.eigh(H)

    blocks = []
    # the floor keeps round-off splitting of a scalar eigenvalue from creating clusters
    for idx in _cluster(evals, CLUSTER_TOL, 1e-10 * np.linalg.norm(probe)):
        V = evecs[:, idx]
        R = _restricted(U, V)
        leak = np.linalg.norm(U @ V[None] - V[None] @ R, axis=(1, 2)).max()
        if leak > 1e-6 * max(1.0, np.sqrt(V.shape[1])):
            raise DegenerateProbe(f"probe eigenspace is not invariant (leak {leak:.2e})")
        chi = np.trace(R, axis1=1, axis2=2)
        self_int = float(np.sum(np.abs(chi) ** 2)) / n
        if abs(self_int - 1.0) > 1e-6:
            raise DegenerateProbe(
                f"probe eigenspace of dimension {V.shape[1]} is reducible "
                f"(character norm {self_int:.6f})"
            )
        blocks.append((V, R))

    # equivalence classes: nonzero twirled cross map <=> equivalent irreps
    classes: list[list[int]] = []
    cross: dict[tuple[int, int], np.ndarray] = {}
    for j, (Vj, Rj) in enumerate(blocks):
        placed = False
        for cl in classes:
            V0, R0 = blocks[cl[0]]
            if V0.shape[1] != Vj.shape[1]:
                continue
            Y = rng.standard_normal(Vj.shape[1] * 2 * V0.shape[1]).view(complex)
            Y = Y.reshape(Vj.shape[1], V0.shape[1])
            Y /= np.linalg.norm(Y)
            K = np.sum(Rj @ Y[None] @ _dagger(R0), axis=0) / n  # R^j_g K = K R^0_g
            size = np.linalg.norm(K)
            if size > 1e-4:
                cl.append(j)
                cross[(j, cl[0])] = K
                placed = True
                break
            if size > 1e-9:
                raise DegenerateProbe(f"ambiguous equivalence test (cross norm {size:.2e})")
        if not placed:
            classes.append([j])

    comps = []
    for cl in classes:
        V0, R0 = blocks[cl[0]]
        dm = V0.shape[1]
        cols = [V0]
        for j in cl[1:]:
            K = cross[(j, cl[0])]
            W = K / np.sqrt(np.real(np.trace(K.conj().T @ K)) / dm)
            u, _, vh = np.linalg.svd(W)
            W = _phase_fix(u @ vh)
            cols.append(blocks[j][0] @ W)
        basis = np.concatenate(cols, axis=1)
        comps.append((_class_key(R0), dm, len(cl), basis, R0))
    comps.sort(key=lambda c: c[0])
    return tuple(
        IsotypicComponent(mu, dm, m, basis, irrep)
        for mu, (_, dm, m, basis, irrep) in enumerate(comps)
    )


def decompose(rep: ProjectiveRep, tol: float = 1e-8, probe_seed: int = 0) -> IsotypicDecomposition:
    """Isotypic decomposition with aligned multiplicity blocks.

    Classes are ordered by irrep dimension and then by character values, so
    the labels ``mu`` do not depend on ``probe_seed``. When a probe happens to
    be degenerate the next seed is tried, up to ``MAX_PROBE_RETRIES`` times.
    """
    last = None
    for attempt in range(MAX_PROBE_RETRIES):
        try:
            comps = _attempt(rep, probe_seed + attempt)
        except DegenerateProbe as exc:
            last = exc
            continue
        dec = IsotypicDecomposition(rep, comps, probe_seed + attempt)
        check_decomposition(dec, tol)
        return dec
    raise DegenerateProbe(f"no usable probe after {MAX_PROBE_RETRIES} seeds: {last}")


def check_decomposition(dec: IsotypicDecomposition, tol: float = 1e-8) -> float:
    """Largest residual over the structural identities; raises if above ``tol * d``."""
    d = dec.dim
    U = dec.rep.matrices
    full = np.concatenate([c.basis for c in dec.components], axis=1)
    if full.shape[1] != d:
        raise DegenerateProbe(f"blocks span dimension {full.shape[1]} instead of {d}")
    res = np.linalg.norm(full.conj().T @ full - np.eye(d))
    for c in dec.components:
        for k in range(c.m_mu):
            R = _restricted(U, c.block(k))
            res = max(res, np.linalg.norm(R - c.irrep, axis=(1, 2)).max())
    if res > tol * d:
        raise DegenerateProbe(f"aligned basis residual {res:.2e} exceeds tolerance")
    return float(res)


@dataclass
class ReconstructionReport:
    trials: int
    max_residual: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.max_residual <= self.tol


def verify_reconstruction(dec: IsotypicDecomposition, trials: int = 10, tol: float = 1e-8,
                          seed: int = 12345) -> ReconstructionReport:
    """Compare ``twirl(X)`` with its reconstruction from intertwiner traces for random Hermitian X."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        O = twirl(dec.rep, random_hermitian(dec.dim, rng))
        worst = max(worst, float(np.linalg.norm(O - dec.reconstruct(O))))
    if worst > tol:
        raise ReconstructionFailure(worst)
    return ReconstructionReport(trials, worst, tol)
