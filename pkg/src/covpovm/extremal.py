"""Extremality of covariant POVMs: spanning test, perturbation witnesses, convex splits.

All routines act on a *block operator*: a list of PSD blocks ``A_i`` together
with a :class:`ConstraintSet` listing, for each key ``(mu, k, l)``, one
constraint operator per block and the target value of
``sum_i Tr[S_kli A_i]``. For seeds ``A_i`` on the full space the constraint
operators are the intertwiners ``T_kl`` repeated over blocks; the stability
module supplies partial-traced ones on multiplicity spaces instead.

With ``A_i = X_i^dag X_i`` (``X_i`` of full row rank ``r_i``), A is extremal
iff the operators ``F_kl = (+)_i X_i S_kli X_i^dag`` span every block
operator on ``(+)_i C^{r_i}``; Hermitian ``Q`` orthogonal to all of them give
perturbations ``P_i = X_i^dag Q_i X_i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NotAWitness
from .povm import SeedBlock, make_seed_block, normalization_map
from .repdec import IsotypicDecomposition

RANK_TOL = 1e-10
WITNESS_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    keys: tuple
    ops: dict  # key -> tuple of per-block matrices
    targets: dict  # key -> real target value
    block_dims: tuple
    sum_m_squared: int

    @property
    def n_blocks(self) -> int:
        return len(self.block_dims)


def seed_constraints(dec: IsotypicDecomposition, n_blocks: int) -> ConstraintSet:
    keys = tuple(dec.keys())
    ops, targets = {}, {}
    for key in keys:
        T = dec.intertwiner(*key)
        ops[key] = (T,) * n_blocks
        mu, k, l = key
        targets[key] = float(dec.components[mu].d_mu) if k == l else 0.0
    return ConstraintSet(keys, ops, targets, (dec.dim,) * n_blocks, dec.sum_m_squared)


@dataclass(frozen=True, eq=False)
class SeedFactorization:
    factors: tuple  # X_i with r_i rows

    @property
    def ranks(self) -> tuple:
        return tuple(X.shape[0] for X in self.factors)

    @property
    def range_dims(self) -> tuple:
        return self.ranks

    @property
    def full_dim(self) -> int:
        return sum(r * r for r in self.ranks)

    def reconstruct(self) -> list[np.ndarray]:
        return [X.conj().T @ X for X in self.factors]


def factor_blocks(blocks, tol: float = RANK_TOL) -> SeedFactorization:
    """``X_i = diag(sqrt(lam)) V_i^dag`` keeping eigenvalues above ``tol`` times the largest one.

    The largest eigenvalue is taken over the whole block operator, so blocks
    that are zero up to round-off come out with rank 0. Eigenvalues are kept in
    descending order and every eigenvector has its largest-magnitude entry
    real positive.
    """
    mats = [np.asarray(A, dtype=complex) for A in blocks]
    spectra = [np.linalg.eigh((A + A.conj().T) / 2) for A in mats]
    lam_max = max((float(w[-1]) for w, _ in spectra if w.size), default=0.0)
    factors = []
    for A, (w, v) in zip(mats, spectra):
        order = np.argsort(-w, kind="stable")
        w, v = w[order], v[:, order]
        keep = w > tol * lam_max if lam_max > 0 else np.zeros(w.shape, bool)
        w, v = w[keep], v[:, keep]
        if v.size:
            j = np.argmax(np.abs(v), axis=0)
            lead = v[j, np.arange(v.shape[1])]
            v = v * (np.abs(lead) / lead)
        factors.append(np.sqrt(w)[:, None] * v.conj().T if w.size else np.zeros((0, A.shape[0]), complex))
    return SeedFactorization(tuple(factors))


def factor_seeds(seed_block: SeedBlock, tol: float = RANK_TOL) -> SeedFactorization:
    return factor_blocks(seed_block.seeds, tol)


@dataclass(frozen=True, eq=False)
class FOperatorSet:
    keys: tuple
    ops: dict  # key -> tuple of r_i x r_i blocks
    ranks: tuple

    @property
    def full_dim(self) -> int:
        return sum(r * r for r in self.ranks)

    def __len__(self) -> int:
        return len(self.keys)

    def vectorized(self) -> np.ndarray:
        """One row per key, the blocks flattened and concatenated into C^{sum r_i^2}."""
        rows = [np.concatenate([b.ravel() for b in self.ops[key]] + [np.zeros(0, complex)])
                for key in self.keys]
        return np.array(rows, dtype=complex).reshape(len(self.keys), self.full_dim)


def build_f_from_constraints(fact: SeedFactorization, cons: ConstraintSet) -> FOperatorSet:
    if len(fact.factors) != cons.n_blocks:
        raise DimensionMismatch(f"{len(fact.factors)} factors but {cons.n_blocks} constraint blocks")
    for i, (X, n) in enumerate(zip(fact.factors, cons.block_dims)):
        if X.shape[1] != n:
            raise DimensionMismatch(f"factor {i} acts on C^{X.shape[1]}, block dimension is {n}")
    ops = {key: tuple(X @ S @ X.conj().T for X, S in zip(fact.factors, cons.ops[key]))
           for key in cons.keys}
    return FOperatorSet(cons.keys, ops, fact.ranks)


def build_f_operators(fact: SeedFactorization, dec: IsotypicDecomposition) -> FOperatorSet:
    return build_f_from_constraints(fact, seed_constraints(dec, len(fact.factors)))


def _numerical_rank(M: np.ndarray, tol: float) -> tuple[int, np.ndarray, np.ndarray]:
    if M.size == 0:
        return 0, np.zeros(0), np.zeros((M.shape[1], M.shape[1]))
    _, s, vh = np.linalg.svd(M, full_matrices=True)
    if s.size == 0 or s[0] == 0:
        return 0, s, vh
    return int(np.sum(s > max(M.shape) * s[0] * tol)), s, vh


def spanning_test(fset: FOperatorSet, tol: float = RANK_TOL) -> tuple[int, bool]:
    """Complex rank of the vectorized F operators; extremal iff it equals ``sum r_i^2``."""
    rank, _, _ = _numerical_rank(fset.vectorized(), tol)
    return rank, rank == fset.full_dim


def hermitian_basis(r: int) -> list[np.ndarray]:
    """Hilbert-Schmidt orthonormal real basis of r x r Hermitian matrices.

    Order: diagonal units, then (E_ab + E_ba)/sqrt2, then i(E_ab - E_ba)/sqrt2 for a < b.
    """
    out = []
    for a in range(r):
        E = np.zeros((r, r), complex)
        E[a, a] = 1
        out.append(E)
    pairs = [(a, b) for a in range(r) for b in range(a + 1, r)]
    for a, b in pairs:
        E = np.zeros((r, r), complex)
        E[a, b] = E[b, a] = 1 / np.sqrt(2)
        out.append(E)
    for a, b in pairs:
        E = np.zeros((r, r), complex)
        E[a, b], E[b, a] = 1j / np.sqrt(2), -1j / np.sqrt(2)
        out.append(E)
    return out


def _hermitian_constraints(fset: FOperatorSet) -> tuple[np.ndarray, list]:
    """Real matrix mapping Hermitian-basis coordinates of Q to (Re, Im) of every Tr[F Q]."""
    basis = [(i, E) for i, r in enumerate(fset.ranks) for E in hermitian_basis(r)]
    M = np.zeros((2 * len(fset.keys), len(basis)))
    for row, key in enumerate(fset.keys):
        blocks = fset.ops[key]
        for col, (i, E) in enumerate(basis):
            t = np.sum(blocks[i].T * E)
            M[2 * row, col] = t.real
            M[2 * row + 1, col] = t.imag
    return M, basis


def _assemble(coeffs: np.ndarray, basis: list, ranks) -> tuple:
    Q = [np.zeros((r, r), complex) for r in ranks]
    for c, (i, E) in zip(coeffs, basis):
        Q[i] += c * E
    return tuple(Q)


def find_perturbation(fset: FOperatorSet, tol: float = RANK_TOL) -> tuple | None:
    """A unit-norm Hermitian block Q with ``Tr[F Q] = 0`` for every F, or None if only Q = 0.

    The null space comes from the right singular vectors with (numerically)
    vanishing singular values; when it has dimension above one, the element
    returned is the normalized projection of the basis direction with the
    largest overlap, ties going to the lowest basis index.
    """
    M, basis = _hermitian_constraints(fset)
    if not basis:
        return None
    rank, _, vh = _numerical_rank(M, tol)
    null = vh[rank:].T
    if null.shape[1] == 0:
        return None
    weights = np.linalg.norm(null, axis=1)
    j = int(np.argmax(weights >= weights.max() - 1e-9))
    coeffs = null @ null[j]
    coeffs /= np.linalg.norm(coeffs)
    return _assemble(coeffs, basis, fset.ranks)


def witness_residual(fset: FOperatorSet, Q) -> float:
    return max((abs(sum(np.sum(F.T * q) for F, q in zip(fset.ops[key], Q))) for key in fset.keys),
               default=0.0)


def block_norm(blocks) -> float:
    return float(np.sqrt(sum(np.linalg.norm(b) ** 2 for b in blocks)))


def split_blocks(blocks, fact: SeedFactorization, Q):
    """Endpoints of the segment ``A + tP`` inside the positive cone, ``P_i = X_i^dag Q_i X_i``.

    On the support ``A_i + tP_i = X_i^dag (1 + tQ_i) X_i``, so the boundary is
    reached when ``1 + t q = 0`` for an eigenvalue q of some ``Q_i``.
    """
    eigs = np.concatenate([np.linalg.eigvalsh(q) for q in Q if q.size] + [np.zeros(0)])
    scale = np.abs(eigs).max() if eigs.size else 0.0
    neg, pos = eigs[eigs < -1e-10 * scale], eigs[eigs > 1e-10 * scale]
    if scale == 0 or neg.size == 0 or pos.size == 0:
        raise NotAWitness("witness must have eigenvalues of both signs")
    t_plus = float(np.min(-1.0 / neg))
    t_minus = float(np.max(-1.0 / pos))
    P = [X.conj().T @ q @ X for X, q in zip(fact.factors, Q)]
    plus = [np.asarray(A) + t_plus * p for A, p in zip(blocks, P)]
    minus = [np.asarray(A) + t_minus * p for A, p in zip(blocks, P)]
    return plus, minus, t_plus, t_minus, P


def convex_weights(t_plus: float, t_minus: float) -> tuple[float, float]:
    """Weights with ``A = w_plus A_plus + w_minus A_minus``."""
    span = t_plus - t_minus
    return -t_minus / span, t_plus / span


def _check_witness_shape(fact: SeedFactorization, Q, tol: float):
    if Q is None:
        raise NotAWitness("no perturbation exists (the point is extremal)")
    Q = tuple(np.asarray(q, dtype=complex) for q in Q)
    if len(Q) != len(fact.factors):
        raise NotAWitness(f"witness has {len(Q)} blocks, expected {len(fact.factors)}")
    for q, r in zip(Q, fact.ranks):
        if q.shape != (r, r):
            raise NotAWitness(f"witness block of shape {q.shape} does not match rank {r}")
    norm = block_norm(Q)
    if norm == 0:
        raise NotAWitness("witness is zero")
    herm = block_norm([q - q.conj().T for q in Q])
    if herm > tol * norm:
        raise NotAWitness(f"witness is not Hermitian (residual {herm:.3e})")
    return Q, norm


def convex_split(seed_block: SeedBlock, fact: SeedFactorization, Q, tol: float = WITNESS_TOL):
    """Split a non-extremal member of C along a witness Q.

    Returns ``(A_plus, A_minus, t_plus, t_minus)``; A is recovered as
    ``(-t_minus A_plus + t_plus A_minus) / (t_plus - t_minus)``.
    """
    Q, norm = _check_witness_shape(fact, Q, tol)
    P = [X.conj().T @ q @ X for X, q in zip(fact.factors, Q)]
    drift = np.linalg.norm(normalization_map(seed_block.replace(P)))
    if drift > tol * max(1.0, block_norm(P)):
        raise NotAWitness(f"perturbation changes the normalization (residual {drift:.3e})")
    plus, minus, t_plus, t_minus, _ = split_blocks(seed_block.seeds, fact, Q)
    return seed_block.replace(plus), seed_block.replace(minus), t_plus, t_minus


def rank_bound_check(fact: SeedFactorization, dec_or_rhs) -> tuple[int, int, bool]:
    rhs = dec_or_rhs if isinstance(dec_or_rhs, int) else dec_or_rhs.sum_m_squared
    lhs = fact.full_dim
    return lhs, rhs, lhs <= rhs


@dataclass
class ExtremalityReport:
    is_extremal: bool
    span_dim: int
    full_dim: int
    rank_bound_lhs: int
    rank_bound_rhs: int
    rank_bound_satisfied: bool
    ranks: tuple
    witness: tuple | None = None
    witness_perturbation: tuple | None = None
    witness_residual: float | None = None
    tol: float = RANK_TOL
    extra: dict = field(default_factory=dict)

    def to_dict(self, matrices: bool = True) -> dict:
        from .fileio import encode_matrix  # local: fileio depends on this module's types

        out = {
            "is_extremal": self.is_extremal,
            "span_dim": self.span_dim,
            "full_dim": self.full_dim,
            "rank_bound_lhs": self.rank_bound_lhs,
            "rank_bound_rhs": self.rank_bound_rhs,
            "rank_bound_satisfied": self.rank_bound_satisfied,
            "ranks": list(self.ranks),
            "witness_residual": self.witness_residual,
            "tol": self.tol,
        }
        if matrices:
            out["witness"] = None if self.witness is None else [encode_matrix(q) for q in self.witness]
            out["witness_perturbation"] = (None if self.witness_perturbation is None
                                           else [encode_matrix(p) for p in self.witness_perturbation])
        return out


def analyze_blocks(blocks, cons: ConstraintSet, tol: float = RANK_TOL) -> ExtremalityReport:
    """Factorization, F operators, spanning test, rank bound and (if needed) a witness."""
    fact = factor_blocks(blocks, tol)
    fset = build_f_from_constraints(fact, cons)
    span_dim, is_ext = spanning_test(fset, tol)
    lhs, rhs, ok = rank_bound_check(fact, cons.sum_m_squared)
    rep = ExtremalityReport(is_ext, span_dim, fset.full_dim, lhs, rhs, ok, fact.ranks, tol=tol)
    if not is_ext:
        Q = find_perturbation(fset, tol)
        if Q is not None:
            rep.witness = Q
            rep.witness_perturbation = tuple(X.conj().T @ q @ X for X, q in zip(fact.factors, Q))
            rep.witness_residual = float(witness_residual(fset, Q))
    return rep


def analyze(seed_block: SeedBlock, dec: IsotypicDecomposition, tol: float = RANK_TOL) -> ExtremalityReport:
    return analyze_blocks(seed_block.seeds, seed_constraints(dec, seed_block.size), tol)


def extremality_oracle(seed_block: SeedBlock, dec: IsotypicDecomposition, tol: float = RANK_TOL) -> bool:
    """Minimal-support test, independent of the F operators.

    Unknowns are the real and imaginary parts of every entry of
    ``b_i`` with ``B_i = V_i b_i V_i^dag`` (``V_i`` an orthonormal basis of
    ``Supp(A_i)``); homogeneous constraints are Hermiticity of each ``b_i``
    and ``sum_i Tr[T_kl B_i] = 0``. A is extremal iff this system has only the
    zero solution, i.e. A is the only member of C with support inside Supp(A).
    """
    seeds = seed_block.seeds
    lam_max = max(float(np.linalg.eigvalsh(A)[-1]) for A in seeds)
    supports = []
    for A in seeds:
        own = np.linalg.norm(A, 2) / lam_max if lam_max > 0 else 0.0
        if own <= tol:
            supports.append(np.zeros((A.shape[0], 0)))
            continue
        # orth cuts relative to this seed's own top singular value; rescale to the block-wide one
        supports.append(scipy.linalg.orth(A / lam_max, rcond=tol / own))
    sizes = [V.shape[1] for V in supports]
    n_var = 2 * sum(r * r for r in sizes)
    if n_var == 0:
        return True
    offsets = np.cumsum([0] + [2 * r * r for r in sizes])

    def embed(i: int, a: int, b: int, imag: bool) -> np.ndarray:
        V = supports[i]
        return (1j if imag else 1.0) * np.outer(V[:, a], V[:, b].conj())

    rows = []
    # Hermiticity: Re b_ab = Re b_ba, Im b_ab = -Im b_ba
    for i, r in enumerate(sizes):
        for a in range(r):
            for b in range(a, r):
                re = np.zeros(n_var)
                im = np.zeros(n_var)
                base = offsets[i]
                re[base + 2 * (a * r + b)] += 1
                re[base + 2 * (b * r + a)] -= 1
                im[base + 2 * (a * r + b) + 1] += 1
                im[base + 2 * (b * r + a) + 1] += 1
                rows.extend([re, im])
    for key in dec.keys():
        T = dec.intertwiner(*key)
        re = np.zeros(n_var)
        im = np.zeros(n_var)
        for i, r in enumerate(sizes):
            for a in range(r):
                for b in range(r):
                    for part in (0, 1):
                        val = np.trace(T @ embed(i, a, b, bool(part)))
                        col = offsets[i] + 2 * (a * r + b) + part
                        re[col], im[col] = val.real, val.imag
        rows.extend([re, im])
    null = scipy.linalg.null_space(np.array(rows))
    return null.shape[1] == 0


@dataclass(eq=False)
class SplitNode:
    blocks: list
    weight: float
    is_extremal: bool
    depth: int
    t_plus: float | None = None
    t_minus: float | None = None
    children: list = field(default_factory=list)

    def leaves(self) -> list["SplitNode"]:
        if not self.children:
            return [self]
        return [leaf for c in self.children for leaf in c.leaves()]

    def reconstruct(self) -> list[np.ndarray]:
        out = [np.zeros_like(np.asarray(b, dtype=complex)) for b in self.blocks]
        for leaf in self.leaves():
            for j, b in enumerate(leaf.blocks):
                out[j] = out[j] + leaf.weight * np.asarray(b)
        return out

    def to_dict(self, matrices: bool = True) -> dict:
        from .fileio import encode_matrix

        out = {
            "weight": self.weight,
            "is_extremal": self.is_extremal,
            "depth": self.depth,
            "ranks": [int(r) for r in factor_blocks(self.blocks).ranks],
            "t_plus": self.t_plus,
            "t_minus": self.t_minus,
            "children": [c.to_dict(matrices) for c in self.children],
        }
        if matrices:
            out["blocks"] = [encode_matrix(b) for b in self.blocks]
        return out


def decompose_blocks(blocks, cons: ConstraintSet, tol: float = RANK_TOL, weight: float = 1.0,
                     depth: int = 0, max_depth: int | None = None) -> SplitNode:
    """Split recursively (first witness, plus endpoint first) until every leaf is extremal.

    Each split lowers the total rank of both endpoints by at least one, so the
    depth never exceeds the total rank of the root.
    """
    blocks = [np.asarray(b, dtype=complex) for b in blocks]
    fact = factor_blocks(blocks, tol)
    if max_depth is None:
        max_depth = sum(fact.ranks) + 1
    fset = build_f_from_constraints(fact, cons)
    _, is_ext = spanning_test(fset, tol)
    node = SplitNode(blocks, weight, is_ext, depth)
    if is_ext:
        return node
    if depth >= max_depth:
        raise RuntimeError(f"convex decomposition exceeded depth {max_depth}")
    Q = find_perturbation(fset, tol)
    if Q is None:
        node.is_extremal = True
        return node
    plus, minus, t_plus, t_minus, _ = split_blocks(blocks, fact, Q)
    w_plus, w_minus = convex_weights(t_plus, t_minus)
    node.t_plus, node.t_minus = t_plus, t_minus
    node.children = [
        decompose_blocks(plus, cons, tol, weight * w_plus, depth + 1, max_depth),
        decompose_blocks(minus, cons, tol, weight * w_minus, depth + 1, max_depth),
    ]
    return node


def extremal_decomposition(seed_block: SeedBlock, dec: IsotypicDecomposition,
                           tol: float = RANK_TOL) -> SplitNode:
    return decompose_blocks(seed_block.seeds, seed_constraints(dec, seed_block.size), tol)


def leaf_seed_blocks(root: SplitNode, like: SeedBlock) -> list[tuple[float, SeedBlock]]:
    return [(leaf.weight, make_seed_block(like.rep, leaf.blocks, like.index_labels, tol=1e-6))
            for leaf in root.leaves()]
