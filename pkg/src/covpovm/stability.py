"""Covariant POVMs on unions of quotients G/G_i (nontrivial stability groups).

Each orbit i carries a subgroup G_i; its seed must commute with U_h for h in
G_i, which forces the form ``A_i = (+)_nu 1_nu (x) A_{i,nu}`` in the tensor
basis ``H_nu (x) C^{m_nu}`` of the restricted representation. The blocks
``A_w`` (``w = (i, nu)``) then obey the same kind of constraints as plain
seeds, with partial-traced intertwiners ``S_klw = Tr_{H_nu}[Pi_nu T_kl]`` in
place of ``T_kl``, so the extremality machinery is reused unchanged.

Tensor basis convention: in the restricted decomposition, column ``a`` of
block ``k`` of class ``nu`` is the vector ``|nu, a> (x) |k>``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotInvariant, NotNormalized
from .extremal import ConstraintSet, ExtremalityReport, analyze_blocks, RANK_TOL
from .group_core import CosetSpace, ProjectiveRep, Subgroup, left_cosets
from .povm import DEFAULT_TOL, MembershipReport, SeedBlock, clip_psd, make_seed_block, positivity_floor
from .repdec import IsotypicDecomposition, decompose, twirl


def restrict_and_decompose(rep: ProjectiveRep, sub: Subgroup, tol: float = 1e-8,
                           seed: int = 0) -> IsotypicDecomposition:
    return decompose(rep.restrict(sub), tol, seed)


@dataclass(frozen=True, eq=False)
class StabilitySetup:
    rep: ProjectiveRep
    subgroups: tuple
    restrictions: tuple
    omega_index: tuple  # ((i, nu), ...) in orbit-major order

    @property
    def n_orbits(self) -> int:
        return len(self.subgroups)

    def multiplicity(self, w: int) -> int:
        i, nu = self.omega_index[w]
        return self.restrictions[i].components[nu].m_mu

    def omegas_of(self, i: int) -> list[int]:
        return [w for w, (j, _) in enumerate(self.omega_index) if j == i]


def build_setup(rep: ProjectiveRep, subgroups, tol: float = 1e-8, seed: int = 0) -> StabilitySetup:
    subgroups = tuple(subgroups)
    restr = tuple(restrict_and_decompose(rep, s, tol, seed) for s in subgroups)
    omega = tuple((i, nu) for i, r in enumerate(restr) for nu in range(len(r.components)))
    return StabilitySetup(rep, subgroups, restr, omega)


def project_seed_to_blocks(A, restriction: IsotypicDecomposition, tol: float = DEFAULT_TOL,
                           strict: bool = True) -> tuple[list[np.ndarray], float]:
    """Multiplicity blocks of the G_i-twirl of ``A`` and the residual ``||A - twirl(A)||_F``."""
    A = np.asarray(A, dtype=complex)
    Abar = twirl(restriction.rep, A)
    residual = float(np.linalg.norm(A - Abar))
    if strict and residual > tol * (1 + np.linalg.norm(A)):
        raise NotInvariant(residual)
    blocks = []
    for c in restriction.components:
        b = np.empty((c.m_mu, c.m_mu), complex)
        for k in range(c.m_mu):
            for l in range(c.m_mu):
                b[k, l] = np.trace(c.block(k).conj().T @ Abar @ c.block(l)) / c.d_mu
        blocks.append((b + b.conj().T) / 2)
    return blocks, residual


def embed_blocks(blocks, restriction: IsotypicDecomposition) -> np.ndarray:
    """``(+)_nu 1_nu (x) A_nu`` written back on the full space."""
    d = restriction.dim
    out = np.zeros((d, d), complex)
    for b, c in zip(blocks, restriction.components):
        b = np.asarray(b, dtype=complex)
        if b.shape != (c.m_mu, c.m_mu):
            raise DimensionMismatch(f"block of shape {b.shape}, multiplicity space has dimension {c.m_mu}")
        for k in range(c.m_mu):
            for l in range(c.m_mu):
                if b[k, l] != 0:
                    out += b[k, l] * (c.block(k) @ c.block(l).conj().T)
    return out


@dataclass(frozen=True, eq=False)
class MultiplicityBlockSeed:
    setup: StabilitySetup
    blocks: tuple  # one m_nu x m_nu matrix per w, in omega_index order

    def block(self, i: int, nu: int) -> np.ndarray:
        return self.blocks[self.setup.omega_index.index((i, nu))]

    def reconstruct(self) -> list[np.ndarray]:
        s = self.setup
        return [embed_blocks([self.blocks[w] for w in s.omegas_of(i)], s.restrictions[i])
                for i in range(s.n_orbits)]

    def as_seed_block(self) -> SeedBlock:
        return make_seed_block(self.setup.rep, self.reconstruct(), tol=1e-7)


def make_block_seed(setup: StabilitySetup, blocks) -> MultiplicityBlockSeed:
    """From a list in omega order or a dict keyed by ``(i, nu)``; missing entries are zero."""
    if isinstance(blocks, dict):
        blocks = [blocks.get(w, np.zeros((setup.multiplicity(n),) * 2))
                  for n, w in enumerate(setup.omega_index)]
    blocks = [np.asarray(b, dtype=complex) for b in blocks]
    if len(blocks) != len(setup.omega_index):
        raise DimensionMismatch(f"expected {len(setup.omega_index)} blocks, got {len(blocks)}")
    for w, b in enumerate(blocks):
        m = setup.multiplicity(w)
        if b.shape != (m, m):
            raise DimensionMismatch(f"block {setup.omega_index[w]} has shape {b.shape}, expected ({m}, {m})")
    return MultiplicityBlockSeed(setup, tuple(blocks))


def block_seed_from_full(setup: StabilitySetup, seeds, tol: float = DEFAULT_TOL,
                         strict: bool = True) -> tuple[MultiplicityBlockSeed, list[float]]:
    """Project full-space seeds onto multiplicity blocks; returns the per-orbit commutation residuals."""
    seeds = list(seeds)
    if len(seeds) != setup.n_orbits:
        raise DimensionMismatch(f"{len(seeds)} seeds for {setup.n_orbits} stability subgroups")
    blocks, residuals = [], []
    for i, A in enumerate(seeds):
        try:
            b, res = project_seed_to_blocks(A, setup.restrictions[i], tol, strict)
        except NotInvariant as exc:
            raise NotInvariant(exc.residual, orbit=i) from None
        blocks.extend(b)
        residuals.append(res)
    return MultiplicityBlockSeed(setup, tuple(blocks)), residuals


def build_s_blocks(setup: StabilitySetup, dec: IsotypicDecomposition) -> ConstraintSet:
    """``S_klw[a, b] = Tr[B_a^dag T_kl B_b]``, the partial trace over the irrep factor H_nu."""
    if dec.dim != setup.rep.dim:
        raise DimensionMismatch(f"decomposition acts on C^{dec.dim}, setup on C^{setup.rep.dim}")
    keys = tuple(dec.keys())
    ops, targets = {}, {}
    for key in keys:
        T = dec.intertwiner(*key)
        per_w = []
        for i, nu in setup.omega_index:
            c = setup.restrictions[i].components[nu]
            S = np.empty((c.m_mu, c.m_mu), complex)
            for a in range(c.m_mu):
                for b in range(c.m_mu):
                    S[a, b] = np.trace(c.block(a).conj().T @ T @ c.block(b))
            per_w.append(S)
        ops[key] = tuple(per_w)
        mu, k, l = key
        targets[key] = float(dec.components[mu].d_mu) if k == l else 0.0
    dims = tuple(setup.multiplicity(w) for w in range(len(setup.omega_index)))
    return ConstraintSet(keys, ops, targets, dims, dec.sum_m_squared)


def s_block(s_blocks: ConstraintSet, mu: int, k: int, l: int, w: int) -> np.ndarray:
    return s_blocks.ops[(mu, k, l)][w]


def stability_membership(seeds: MultiplicityBlockSeed, s_blocks: ConstraintSet,
                         tol: float = DEFAULT_TOL) -> MembershipReport:
    """Membership in D: every block PSD and ``sum_w Tr[S_klw A_w] = d_mu delta_kl``."""
    positivity = []
    for w, (A, om) in enumerate(zip(seeds.blocks, seeds.setup.omega_index)):
        lo = float(np.linalg.eigvalsh((A + A.conj().T) / 2)[0]) if A.size else 0.0
        positivity.append({"orbit": om[0], "nu": om[1], "label": f"{om[0]}:{om[1]}",
                           "min_eigenvalue": lo, "ok": lo >= positivity_floor(A, tol) if A.size else True})
    bound = tol * seeds.setup.rep.dim
    norm = []
    for key in s_blocks.keys:
        value = complex(sum(np.trace(S @ A) for S, A in zip(s_blocks.ops[key], seeds.blocks)))
        target = s_blocks.targets[key]
        res = abs(value - target)
        mu, k, l = key
        norm.append({"mu": mu, "k": k, "l": l, "value_re": value.real, "value_im": value.imag,
                     "target": target, "residual": res, "ok": res <= bound})
    member = all(p["ok"] for p in positivity) and all(r["ok"] for r in norm)
    return MembershipReport(positivity, norm, member, tol)


def stability_extremality(seeds: MultiplicityBlockSeed, s_blocks: ConstraintSet,
                          tol: float = RANK_TOL) -> ExtremalityReport:
    return analyze_blocks(seeds.blocks, s_blocks, tol)


@dataclass(eq=False)
class QuotientPOVM:
    """Elements ``P(i, x)`` over ``(+)_i G/G_i``, stored per orbit as (cosets, d, d) arrays."""

    seeds: tuple
    cosets: tuple
    elements: tuple

    @property
    def dim(self) -> int:
        return self.seeds[0].shape[0]

    @property
    def outcome_counts(self) -> tuple:
        return tuple(len(e) for e in self.elements)

    def items(self):
        for i, orbit in enumerate(self.elements):
            for x, P in enumerate(orbit):
                yield (i, x), P

    def flat(self) -> list[np.ndarray]:
        return [P for _, P in self.items()]

    def total(self) -> np.ndarray:
        return sum(e.sum(axis=0) for e in self.elements)

    def completeness_residual(self) -> float:
        return float(np.linalg.norm(self.total() - np.eye(self.dim), 2))


def synthesize_quotient_povm(seeds: MultiplicityBlockSeed, setup: StabilitySetup | None = None,
                             cosets=None, tol: float = DEFAULT_TOL) -> QuotientPOVM:
    """``P(i, x) = (|G_i|/|G|) U_g A_i U_g^dag`` with g the chosen representative of coset x."""
    setup = setup or seeds.setup
    group = setup.rep.group
    if cosets is None:
        cosets = [left_cosets(group, s) for s in setup.subgroups]
    cosets = tuple(cosets)
    if len(cosets) != setup.n_orbits:
        raise DimensionMismatch(f"{len(cosets)} coset spaces for {setup.n_orbits} orbits")
    U = setup.rep.matrices
    d = setup.rep.dim
    full = [clip_psd(A) for A in seeds.reconstruct()]
    elements = []
    for i, (A, cs) in enumerate(zip(full, cosets)):
        if not isinstance(cs, CosetSpace) or set(cs.subgroup.members) != set(setup.subgroups[i].members):
            raise DimensionMismatch(f"coset space {i} does not belong to stability subgroup {i}")
        for h in setup.subgroups[i].members:
            res = np.linalg.norm(U[h] @ A - A @ U[h])
            if res > tol * (1 + np.linalg.norm(A)):
                raise NotInvariant(res, orbit=i)
        w = setup.subgroups[i].order / group.order
        reps = np.array(cs.representatives)
        orbit = w * (U[reps] @ A @ np.conj(np.swapaxes(U[reps], 1, 2)))
        elements.append(orbit)
    povm = QuotientPOVM(tuple(full), cosets, tuple(elements))
    res = povm.completeness_residual()
    if res > tol * d:
        raise NotNormalized(res)
    return povm
