"""Seed operators, the normalization constraints and synthesis of covariant POVMs.

A covariant POVM on ``I x G`` is fixed by one positive seed per orbit; its
elements are ``P(i, g) = U_g A_i U_g^dag / |G|``. The seeds form a member of
the convex set C when they are positive and ``sum_i Tr[T_kl A_i] = d_mu delta_kl``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidState, NotHermitian, NotNormalized, ValidationError
from .group_core import ProjectiveRep
from .repdec import IsotypicDecomposition, twirl

DEFAULT_TOL = 1e-9
ELEMENT_CAP = 10 ** 7


def _hermitian(a: np.ndarray) -> np.ndarray:
    return (a + a.conj().T) / 2


def hermitian_residual(a: np.ndarray) -> float:
    return float(np.linalg.norm(a - a.conj().T))


@dataclass(frozen=True, eq=False)
class SeedBlock:
    rep: ProjectiveRep
    seeds: tuple
    index_labels: tuple

    @property
    def size(self) -> int:
        return len(self.seeds)

    @property
    def dim(self) -> int:
        return self.rep.dim

    def replace(self, seeds) -> "SeedBlock":
        return make_seed_block(self.rep, seeds, self.index_labels)


def make_seed_block(rep: ProjectiveRep, seeds, labels=None, tol: float = DEFAULT_TOL) -> SeedBlock:
    """Wrap seeds as a block; they must be d x d and Hermitian (positivity is checked later)."""
    out = []
    d = rep.dim
    for i, A in enumerate(seeds):
        A = np.asarray(A, dtype=complex)
        if A.shape != (d, d):
            raise DimensionMismatch(f"seed {i} has shape {A.shape}, expected ({d}, {d})")
        res = hermitian_residual(A)
        if res > tol * (1 + np.linalg.norm(A)):
            raise NotHermitian(f"seed {i}", res)
        A = _hermitian(A)
        A.setflags(write=False)
        out.append(A)
    if not out:
        raise DimensionMismatch("a seed block needs at least one seed")
    if labels is None:
        labels = tuple(str(i) for i in range(len(out)))
    labels = tuple(str(x) for x in labels)
    if len(labels) != len(out):
        raise DimensionMismatch(f"{len(out)} seeds but {len(labels)} labels")
    return SeedBlock(rep, tuple(out), labels)


def normalization_map(seed_block: SeedBlock) -> np.ndarray:
    """``L(A) = sum_i twirl(A_i)``; A normalizes a POVM exactly when this is the identity."""
    return sum(twirl(seed_block.rep, A) for A in seed_block.seeds)


def positivity_floor(A: np.ndarray, tol: float) -> float:
    return -tol * (1 + np.linalg.norm(A, 2))


def clip_psd(A: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(_hermitian(A))
    return (v * np.clip(w, 0, None)) @ v.conj().T


@dataclass
class MembershipReport:
    positivity: list
    normalization_residuals: list
    member: bool
    tol: float

    @property
    def violations(self) -> list:
        return [p for p in self.positivity if not p["ok"]] + \
               [r for r in self.normalization_residuals if not r["ok"]]

    @property
    def max_residual(self) -> float:
        return max((r["residual"] for r in self.normalization_residuals), default=0.0)

    def to_dict(self) -> dict:
        return {
            "positivity": self.positivity,
            "normalization_residuals": self.normalization_residuals,
            "member": self.member,
            "tol": self.tol,
        }


def check_membership(seed_block: SeedBlock, dec: IsotypicDecomposition,
                     tol: float = DEFAULT_TOL) -> MembershipReport:
    """Positivity of each seed and every trace condition, all listed (the check is not fail-fast)."""
    if dec.dim != seed_block.dim:
        raise DimensionMismatch(f"decomposition acts on C^{dec.dim}, seeds on C^{seed_block.dim}")
    positivity = []
    for i, (A, lab) in enumerate(zip(seed_block.seeds, seed_block.index_labels)):
        lo = float(np.linalg.eigvalsh(A)[0])
        positivity.append({"orbit": i, "label": lab, "min_eigenvalue": lo,
                           "ok": lo >= positivity_floor(A, tol)})
    total = sum(seed_block.seeds)
    bound = tol * seed_block.dim
    norm = []
    for mu, k, l in dec.keys():
        value = complex(np.trace(dec.intertwiner(mu, k, l) @ total))
        target = float(dec.components[mu].d_mu) if k == l else 0.0
        res = abs(value - target)
        norm.append({"mu": mu, "k": k, "l": l, "value_re": value.real, "value_im": value.imag,
                     "target": target, "residual": res, "ok": res <= bound})
    member = all(p["ok"] for p in positivity) and all(r["ok"] for r in norm)
    return MembershipReport(positivity, norm, member, tol)


@dataclass(eq=False)
class CovariantPOVM:
    """Elements ``P(i, g)`` of a covariant POVM; materialized only below ``cap`` complex entries."""

    seed_block: SeedBlock
    cap: int = ELEMENT_CAP
    _elements: np.ndarray | None = field(default=None, repr=False)

    @property
    def rep(self) -> ProjectiveRep:
        return self.seed_block.rep

    @property
    def shape(self) -> tuple[int, int]:
        return self.seed_block.size, self.rep.group.order

    @property
    def streaming(self) -> bool:
        n_i, n_g = self.shape
        return n_i * n_g * self.rep.dim ** 2 > self.cap

    def element(self, i: int, g: int) -> np.ndarray:
        if self._elements is not None:
            return self._elements[i, g]
        U = self.rep.matrices[g]
        return U @ self.seed_block.seeds[i] @ U.conj().T / self.rep.group.order

    def _orbit(self, i: int) -> np.ndarray:
        U = self.rep.matrices
        return U @ self.seed_block.seeds[i] @ np.conj(np.swapaxes(U, 1, 2)) / len(U)

    def iter_elements(self):
        """Yield ``((i, g), P(i, g))`` in (i, g) lexicographic order."""
        n_i, n_g = self.shape
        for i in range(n_i):
            orbit = self._elements[i] if self._elements is not None else self._orbit(i)
            for g in range(n_g):
                yield (i, g), orbit[g]

    def as_array(self) -> np.ndarray:
        if self._elements is not None:
            return self._elements
        return np.stack([self._orbit(i) for i in range(self.shape[0])])

    def total(self) -> np.ndarray:
        return sum(self._orbit(i).sum(axis=0) for i in range(self.shape[0]))

    def completeness_residual(self) -> float:
        return float(np.linalg.norm(self.total() - np.eye(self.rep.dim), 2))

    def covariance_residual(self) -> float:
        """max over h, i, g of ``||P(i, hg) - U_h P(i, g) U_h^dag||``."""
        mul = self.rep.group.mul
        U = self.rep.matrices
        worst = 0.0
        for i in range(self.shape[0]):
            orbit = self._orbit(i)
            for h in range(len(U)):
                moved = U[h] @ orbit @ U[h].conj().T
                worst = max(worst, float(np.abs(orbit[mul[h]] - moved).max()))
        return worst


def synthesize(seed_block: SeedBlock, tol: float = DEFAULT_TOL, cap: int = ELEMENT_CAP,
               check_covariance: bool = True) -> CovariantPOVM:
    """Build ``P(i, g) = U_g A_i U_g^dag / |G|`` after clipping the seeds to exact PSD.

    Raises :class:`NotNormalized` when the elements miss the identity by more
    than ``d * tol`` in operator norm.
    """
    for i, A in enumerate(seed_block.seeds):
        lo = np.linalg.eigvalsh(A)[0]
        if lo < positivity_floor(A, tol):
            raise ValidationError(f"seed {i} is not positive semidefinite (min eigenvalue {lo:.3e})")
    clipped = seed_block.replace([clip_psd(A) for A in seed_block.seeds])
    povm = CovariantPOVM(clipped, cap)
    if not povm.streaming:
        povm._elements = povm.as_array()
        povm._elements.setflags(write=False)
    res = povm.completeness_residual()
    if res > tol * seed_block.dim:
        raise NotNormalized(res)
    if check_covariance:
        cres = povm.covariance_residual()
        if cres > tol * seed_block.dim:
            raise ValidationError(f"synthesized POVM is not covariant (residual {cres:.3e})")
    return povm


def validate_state(rho, d: int, tol: float = DEFAULT_TOL) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (d, d):
        raise InvalidState(f"state has shape {rho.shape}, expected ({d}, {d})")
    if hermitian_residual(rho) > tol * d:
        raise InvalidState("state is not Hermitian")
    rho = _hermitian(rho)
    if abs(np.trace(rho).real - 1.0) > tol * d:
        raise InvalidState(f"state has trace {np.trace(rho).real:.12g}, expected 1")
    lo = np.linalg.eigvalsh(rho)[0]
    if lo < -tol * d:
        raise InvalidState(f"state is not positive (min eigenvalue {lo:.3e})")
    return rho


def outcome_probabilities(povm: CovariantPOVM, state, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Born-rule table ``p[i, g] = Tr[rho P(i, g)]``."""
    rho = validate_state(state, povm.rep.dim, tol)
    U = povm.rep.matrices
    # Tr[rho U A U^dag] = Tr[(U^dag rho U) A]
    moved = np.conj(np.swapaxes(U, 1, 2)) @ rho @ U
    p = np.stack([np.einsum("gij,ji->g", moved, A).real for A in povm.seed_block.seeds])
    return p / len(U)
