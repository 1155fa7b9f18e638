"""Finite groups, subgroups, coset spaces and projective unitary representations.

Groups are stored as multiplication tables over element indices ``0..n-1``;
the ordering of elements is fixed by the input and every downstream
computation inherits it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    NoIdentity,
    NoInverse,
    NotAssociative,
    NotASubgroup,
    NotProjectiveRep,
    NotUnitary,
    ParseError,
)

DEFAULT_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FiniteGroup:
    mul: np.ndarray
    identity: int
    inv: np.ndarray
    labels: tuple | None = None

    @property
    def order(self) -> int:
        return int(self.mul.shape[0])

    def elements(self) -> range:
        return range(self.order)

    def element_order(self, g: int) -> int:
        k, x = 1, int(g)
        while x != self.identity:
            x = int(self.mul[x, g])
            k += 1
        return k

    def label(self, g: int) -> str:
        return str(self.labels[g]) if self.labels is not None else str(g)

    def same_table(self, other: "FiniteGroup") -> bool:
        return self.order == other.order and bool(np.array_equal(self.mul, other.mul))


@dataclass(frozen=True, eq=False)
class Subgroup:
    parent: FiniteGroup
    members: tuple

    @property
    def order(self) -> int:
        return len(self.members)

    def as_group(self) -> FiniteGroup:
        """The subgroup as a standalone group, members reindexed ``0..|H|-1`` in sorted order."""
        pos = {g: k for k, g in enumerate(self.members)}
        table = [[pos[int(self.parent.mul[a, b])] for b in self.members] for a in self.members]
        return validate_group(table)


@dataclass(frozen=True, eq=False)
class CosetSpace:
    subgroup: Subgroup
    representatives: tuple
    coset_of: np.ndarray

    @property
    def size(self) -> int:
        return len(self.representatives)

    def members(self, x: int) -> list[int]:
        return [int(g) for g in np.flatnonzero(self.coset_of == x)]

    def with_representatives(self, reps) -> "CosetSpace":
        """Same partition, different choice g_i(x_i) of representative per coset."""
        reps = tuple(int(r) for r in reps)
        if len(reps) != self.size:
            raise DimensionMismatch(f"expected {self.size} representatives, got {len(reps)}")
        for x, r in enumerate(reps):
            if self.coset_of[r] != x:
                raise ParseError(f"element {r} is not in coset {x}")
        return CosetSpace(self.subgroup, reps, self.coset_of)


@dataclass(frozen=True, eq=False)
class ProjectiveRep:
    group: FiniteGroup
    matrices: np.ndarray  # shape (|G|, d, d)
    cocycle: np.ndarray  # shape (|G|, |G|)
    max_residual: float = field(default=0.0)

    @property
    def dim(self) -> int:
        return int(self.matrices.shape[1])

    def is_ordinary(self, tol: float = 1e-9) -> bool:
        return bool(np.all(np.abs(self.cocycle - 1.0) <= tol))

    def restrict(self, sub: Subgroup) -> "ProjectiveRep":
        """Restriction to a subgroup, with the subgroup reindexed as in :meth:`Subgroup.as_group`."""
        if sub.parent is not self.group and not sub.parent.same_table(self.group):
            raise NotASubgroup("subgroup belongs to a different group")
        idx = np.array(sub.members)
        return ProjectiveRep(
            sub.as_group(),
            _frozen(self.matrices[idx]),
            _frozen(self.cocycle[np.ix_(idx, idx)]),
            self.max_residual,
        )


def validate_group(table, labels=None) -> FiniteGroup:
    """Check the group axioms on a raw multiplication table.

    Associativity is tested first, then the identity, then inverses; the
    raised error names the first violating triple or element in index order.
    """
    try:
        mul = np.asarray(table, dtype=np.int64)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"multiplication table is not an integer array: {exc}") from None
    if mul.ndim != 2 or mul.shape[0] != mul.shape[1] or mul.shape[0] == 0:
        raise ParseError(f"multiplication table must be a non-empty square array, got shape {mul.shape}")
    n = mul.shape[0]
    if mul.min() < 0 or mul.max() >= n:
        raise ParseError(f"multiplication table entries must lie in 0..{n - 1}")

    for a in range(n):
        # rows: (ab)c = mul[mul[a, b], c] against a(bc) = mul[a, mul[b, c]]
        bad = np.argwhere(mul[mul[a]] != mul[a][mul])
        if bad.size:
            raise NotAssociative((a, *bad[0]))

    ar = np.arange(n)
    e = next((x for x in range(n) if np.array_equal(mul[x], ar) and np.array_equal(mul[:, x], ar)), None)
    if e is None:
        raise NoIdentity()
    inv = np.empty(n, dtype=np.int64)
    for a in range(n):
        cand = np.flatnonzero((mul[a] == e) & (mul[:, a] == e))
        if cand.size == 0:
            raise NoInverse(a)
        inv[a] = cand[0]
    if labels is not None:
        labels = tuple(labels)
        if len(labels) != n:
            raise ParseError(f"expected {n} labels, got {len(labels)}")
    return FiniteGroup(_frozen(mul), int(e), _frozen(inv), labels)


def cyclic_group(n: int) -> FiniteGroup:
    if n < 1:
        raise ParseError("cyclic group order must be positive")
    ar = np.arange(n)
    return validate_group((ar[:, None] + ar[None, :]) % n)


def symmetric_group(n: int) -> FiniteGroup:
    """S_n with permutations listed in lexicographic order; composition (ab)(x) = a(b(x))."""
    perms = list(itertools.permutations(range(n)))
    pos = {p: k for k, p in enumerate(perms)}
    table = [[pos[tuple(a[b[x]] for x in range(n))] for b in perms] for a in perms]
    return validate_group(table, labels=["".join(map(str, p)) for p in perms])


def build_product_group(g1: FiniteGroup, g2: FiniteGroup) -> FiniteGroup:
    """Direct product; element (a, b) has index ``a * |G2| + b``."""
    n1, n2 = g1.order, g2.order
    a = np.repeat(np.arange(n1), n2)
    b = np.tile(np.arange(n2), n1)
    mul = g1.mul[a[:, None], a[None, :]] * n2 + g2.mul[b[:, None], b[None, :]]
    inv = g1.inv[a] * n2 + g2.inv[b]
    labels = None
    if g1.labels is not None or g2.labels is not None:
        labels = tuple(f"({g1.label(x)},{g2.label(y)})" for x, y in zip(a, b))
    return FiniteGroup(_frozen(mul), int(g1.identity * n2 + g2.identity), _frozen(inv), labels)


def make_subgroup(group: FiniteGroup, members) -> Subgroup:
    mem = sorted({int(m) for m in members})
    if not mem or mem[0] < 0 or mem[-1] >= group.order:
        raise NotASubgroup("subgroup members must be valid element indices")
    s = set(mem)
    if group.identity not in s:
        raise NotASubgroup("subgroup does not contain the identity")
    for a in mem:
        if int(group.inv[a]) not in s:
            raise NotASubgroup(f"subgroup is not closed under inversion at element {a}")
        for b in mem:
            if int(group.mul[a, b]) not in s:
                raise NotASubgroup(f"subgroup is not closed under multiplication at ({a}, {b})")
    return Subgroup(group, tuple(mem))


def generated_subgroup(group: FiniteGroup, generators) -> Subgroup:
    """Smallest subgroup containing ``generators`` (closure under right multiplication)."""
    gens = [int(x) for x in generators]
    seen = {group.identity}
    frontier = [group.identity]
    while frontier:
        nxt = []
        for x in frontier:
            for g in gens:
                y = int(group.mul[x, g])
                if y not in seen:
                    seen.add(y)
                    nxt.append(y)
        frontier = nxt
    return make_subgroup(group, seen)


def left_cosets(group: FiniteGroup, sub: Subgroup) -> CosetSpace:
    """Left cosets gH; cosets are numbered by their minimal element, which is the representative."""
    if sub.parent is not group and not sub.parent.same_table(group):
        raise NotASubgroup("subgroup belongs to a different group")
    make_subgroup(group, sub.members)
    coset_of = np.full(group.order, -1, dtype=np.int64)
    reps = []
    h = np.array(sub.members)
    for g in range(group.order):
        if coset_of[g] >= 0:
            continue
        coset_of[group.mul[g, h]] = len(reps)
        reps.append(g)
    return CosetSpace(sub, tuple(reps), _frozen(coset_of))


def validate_rep(group: FiniteGroup, matrices, tol: float = DEFAULT_TOL) -> ProjectiveRep:
    """Validate a (projective) unitary representation and extract its cocycle.

    The cocycle is ``w(g, h) = Tr[U_gh^dag U_g U_h] / d``; both the unitarity
    residual and ``||U_g U_h - w(g, h) U_gh||_F`` must stay below ``tol * d``.
    """
    U = np.asarray(matrices, dtype=complex)
    if U.ndim != 3 or U.shape[1] != U.shape[2]:
        raise DimensionMismatch(f"expected a stack of square matrices, got shape {U.shape}")
    if U.shape[0] != group.order:
        raise DimensionMismatch(f"expected {group.order} matrices (one per element), got {U.shape[0]}")
    d = U.shape[1]
    bound = tol * d
    eye = np.eye(d)
    unit_res = np.linalg.norm(np.conj(np.swapaxes(U, 1, 2)) @ U - eye, axis=(1, 2))
    for g in range(group.order):
        if unit_res[g] > bound:
            raise NotUnitary(g, unit_res[g])
    worst = float(unit_res.max())

    n = group.order
    cocycle = np.empty((n, n), dtype=complex)
    for g in range(n):
        prod = U[g] @ U  # U_g U_h for every h
        target = U[group.mul[g]]
        w = np.einsum("hij,hij->h", np.conj(target), prod) / d
        res = np.linalg.norm(prod - w[:, None, None] * target, axis=(1, 2))
        res = np.maximum(res, np.abs(np.abs(w) - 1.0))
        bad = np.flatnonzero(res > bound)
        if bad.size:
            raise NotProjectiveRep(g, bad[0], res[bad[0]])
        worst = max(worst, float(res.max()))
        cocycle[g] = w
    return ProjectiveRep(group, _frozen(U), _frozen(cocycle), worst)


def regular_rep(group: FiniteGroup) -> ProjectiveRep:
    """Left regular representation, U_g |h> = |gh>."""
    n = group.order
    U = np.zeros((n, n, n))
    for g in range(n):
        U[g, group.mul[g], np.arange(n)] = 1.0
    return validate_rep(group, U)


def direct_sum_rep(*reps: ProjectiveRep) -> ProjectiveRep:
    """Block-diagonal sum of representations of the same group with equal cocycles."""
    group = reps[0].group
    n = group.order
    dims = [r.dim for r in reps]
    U = np.zeros((n, sum(dims), sum(dims)), dtype=complex)
    off = 0
    for r, k in zip(reps, dims):
        U[:, off:off + k, off:off + k] = r.matrices
        off += k
    return validate_rep(group, U)


def parse_group_spec(spec: str) -> FiniteGroup:
    """Built-in constructors: ``cyclic:n`` and ``product:A,B[,C...]`` (folded left)."""
    spec = spec.strip()
    kind, _, arg = spec.partition(":")
    if kind == "cyclic":
        try:
            return cyclic_group(int(arg))
        except ValueError:
            raise ParseError(f"bad cyclic group order in {spec!r}") from None
    if kind == "product":
        parts = [p for p in arg.split(",") if p]
        if len(parts) < 2:
            raise ParseError(f"product needs at least two factors: {spec!r}")
        factors = [parse_group_spec(p) for p in parts]
        g = factors[0]
        for f in factors[1:]:
            g = build_product_group(g, f)
        return g
    raise ParseError(f"unknown group constructor {spec!r}")
