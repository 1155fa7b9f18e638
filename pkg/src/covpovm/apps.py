"""Applications: discrimination of mutually unbiased bases and mutual information."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidEnsemble, InvalidPriors, OutcomeMismatch, ValidationError, InvalidState
from .group_core import ProjectiveRep, build_product_group, cyclic_group, left_cosets, make_subgroup, validate_rep
from .povm import CovariantPOVM, validate_state
from .repdec import IsotypicDecomposition, decompose
from .stability import (
    MultiplicityBlockSeed,
    QuotientPOVM,
    StabilitySetup,
    block_seed_from_full,
    build_s_blocks,
    build_setup,
    make_block_seed,
    stability_extremality,
    stability_membership,
    synthesize_quotient_povm,
)

PRIOR_TOL = 1e-9
TIE_TOL = 1e-12


def weyl_heisenberg_rep(d: int) -> ProjectiveRep:
    """Shift-and-phase operators ``U_pq = sum_n w^(qn) |n+p><n|`` on Z_d x Z_d, index ``p*d + q``.

    No 1/sqrt(d) prefactor: with it the operators would not be unitary.
    """
    if d < 2:
        raise ValueError("Weyl-Heisenberg representation needs d >= 2")
    group = build_product_group(cyclic_group(d), cyclic_group(d))
    w = np.exp(2j * np.pi / d)
    n = np.arange(d)
    U = np.zeros((d * d, d, d), complex)
    for p in range(d):
        for q in range(d):
            U[p * d + q, (n + p) % d, n] = w ** ((q * n) % d)
    return validate_rep(group, U)


def fourier_basis(d: int) -> np.ndarray:
    """Columns ``e_n = d^(-1/2) sum_m w^(mn) |m>``."""
    m = np.arange(d)
    return np.exp(2j * np.pi * np.outer(m, m) / d) / np.sqrt(d)


def _check_priors(priors, n: int) -> tuple:
    try:
        p = np.asarray(priors, dtype=float).ravel()
    except (TypeError, ValueError):
        raise InvalidPriors(f"priors are not numbers: {priors!r}") from None
    if p.size != n:
        raise InvalidPriors(f"expected {n} basis priors, got {p.size}")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise InvalidPriors("priors must be finite and nonnegative")
    if abs(p.sum() - 1) > PRIOR_TOL:
        raise InvalidPriors(f"priors sum to {p.sum():.12g}, expected 1")
    return tuple(float(x) for x in p)


@dataclass(frozen=True)
class Signal:
    orbit: int  # 0-based basis index
    coset: int
    index: int  # position of the state inside its basis
    prior: float
    state: np.ndarray = field(repr=False, compare=False)


@dataclass(frozen=True, eq=False)
class MubScenario:
    """Bases are numbered from 1 in user-facing output; ``orbit`` fields are 0-based."""

    d: int
    basis_priors: tuple
    bases: tuple  # unitary matrices, columns are the basis vectors
    rep: ProjectiveRep
    dec: IsotypicDecomposition
    setup: StabilitySetup
    cosets: tuple
    signals: tuple

    @property
    def basis_count(self) -> int:
        return len(self.bases)


def mutual_unbiasedness(bases) -> float:
    """Largest deviation of ``|<b|b'>|^2`` from 1/d over all cross-basis pairs."""
    d = bases[0].shape[0]
    worst = 0.0
    for a in range(len(bases)):
        for b in range(a + 1, len(bases)):
            overlaps = np.abs(bases[a].conj().T @ bases[b]) ** 2
            worst = max(worst, float(np.abs(overlaps - 1 / d).max()))
    return worst


def _stabilizer(rep: ProjectiveRep, v: np.ndarray, tol: float) -> list[int]:
    amp = np.abs(np.einsum("i,gij,j->g", v.conj(), rep.matrices, v))
    return [int(g) for g in np.flatnonzero(amp > 1 - tol)]


def build_mub_scenario(d: int, priors, bases=None, tol: float = 1e-9, probe_seed: int = 0) -> MubScenario:
    """Union of MUBs as orbits under the Weyl-Heisenberg group.

    By default the computational and Fourier bases. Custom families are
    accepted when every basis is the orbit of its first vector, so that signal
    states match the cosets of that vector's stabilizer.
    """
    rep = weyl_heisenberg_rep(d)
    if bases is None:
        bases = [np.eye(d, dtype=complex), fourier_basis(d)]
    bases = [np.asarray(b, dtype=complex) for b in bases]
    p = _check_priors(priors, len(bases))
    for l, b in enumerate(bases):
        if b.shape != (d, d) or np.linalg.norm(b.conj().T @ b - np.eye(d)) > tol * d:
            raise ValidationError(f"basis {l + 1} is not an orthonormal basis of C^{d}")
    dev = mutual_unbiasedness(bases)
    if dev > 1e-8:
        raise ValidationError(f"bases are not mutually unbiased (deviation {dev:.3e})")

    group = rep.group
    subgroups, cosets, signals = [], [], []
    for l, b in enumerate(bases):
        sub = make_subgroup(group, _stabilizer(rep, b[:, 0], 1e-8))
        cs = left_cosets(group, sub)
        seen = {}
        for x, g in enumerate(cs.representatives):
            moved = rep.matrices[g] @ b[:, 0]
            amp = np.abs(b.conj().T @ moved)
            n = int(np.argmax(amp))
            if amp[n] < 1 - 1e-8 or n in seen:
                raise ValidationError(f"basis {l + 1} is not a single orbit of its first vector")
            seen[n] = x
            signals.append(Signal(l, x, n, p[l] / d, np.outer(b[:, n], b[:, n].conj())))
        if len(seen) != d:
            raise ValidationError(f"orbit of basis {l + 1} has {len(seen)} states, expected {d}")
        subgroups.append(sub)
        cosets.append(cs)
    dec = decompose(rep, probe_seed=probe_seed)
    setup = build_setup(rep, subgroups, seed=probe_seed)
    return MubScenario(d, p, tuple(bases), rep, dec, setup, tuple(cosets), tuple(signals))


def basis_measurement_seed(scenario: MubScenario, basis: int) -> MultiplicityBlockSeed:
    """Block seed of the orthogonal measurement onto ``basis`` (1-based); zero on other orbits."""
    d = scenario.d
    seeds = []
    for l, b in enumerate(scenario.bases):
        v = b[:, 0]
        seeds.append(d * np.outer(v, v.conj()) if l == basis - 1 else np.zeros((d, d), complex))
    blocks, _ = block_seed_from_full(scenario.setup, seeds)
    return blocks


def bayes_error(povm: QuotientPOVM, scenario: MubScenario) -> float:
    """``1 - sum_x prior(x) Tr[P(x) rho_x]`` with outcome (i, x) read as signal (i, x)."""
    expected = tuple(c.size for c in scenario.cosets)
    if povm.outcome_counts != expected:
        raise OutcomeMismatch(f"POVM has outcome counts {povm.outcome_counts}, signals need {expected}")
    success = sum(s.prior * np.trace(povm.elements[s.orbit][s.coset] @ s.state).real
                  for s in scenario.signals)
    return float(1 - success)


@dataclass
class MubResult:
    chosen_basis: int  # 1-based
    min_error_probability: float
    optimal_povm: QuotientPOVM
    degenerate: bool
    tied_bases: tuple
    candidate_errors: tuple
    certificates: tuple  # ExtremalityReport per candidate basis
    memberships: tuple

    def to_dict(self) -> dict:
        return {
            "chosen_basis": self.chosen_basis,
            "min_error_probability": self.min_error_probability,
            "degenerate": self.degenerate,
            "tied_bases": list(self.tied_bases),
            "candidate_errors": list(self.candidate_errors),
            "completeness_residual": self.optimal_povm.completeness_residual(),
            "certificates": [
                {"basis": l + 1, "member": m.member, "normalization_residual": m.max_residual,
                 **c.to_dict(matrices=False)}
                for l, (c, m) in enumerate(zip(self.certificates, self.memberships))
            ],
        }


def optimal_mub_discrimination(scenario: MubScenario, tol: float = 1e-10) -> MubResult:
    """Measure the basis with the largest prior; error ``1 - max_l p_l``.

    The representation is irreducible, so an extremal covariant POVM has a
    single rank-one block and detects one basis only; among those the
    orthogonal measurement onto the most likely basis wins. Ties pick the
    lowest index and set ``degenerate``.
    """
    p = np.array(scenario.basis_priors)
    best = p.max()
    tied = tuple(int(l) + 1 for l in np.flatnonzero(p >= best - TIE_TOL))
    chosen = tied[0]
    s_blocks = build_s_blocks(scenario.setup, scenario.dec)
    certs, members, errors, povms = [], [], [], []
    for l in range(1, scenario.basis_count + 1):
        seed = basis_measurement_seed(scenario, l)
        members.append(stability_membership(seed, s_blocks))
        certs.append(stability_extremality(seed, s_blocks, tol))
        povm = synthesize_quotient_povm(seed)
        povms.append(povm)
        errors.append(bayes_error(povm, scenario))
    return MubResult(chosen, float(1 - best), povms[chosen - 1], len(tied) > 1, tied,
                     tuple(errors), tuple(certs), tuple(members))


def extremal_candidates(scenario: MubScenario) -> list[tuple[tuple, MultiplicityBlockSeed]]:
    """All single-block rank-one members of D, one per ``w = (i, nu)``.

    With an irreducible representation these are every extremal covariant POVM
    when all multiplicities are 1, which is the case for MUB stabilizers.
    """
    setup = scenario.setup
    s_blocks = build_s_blocks(setup, scenario.dec)
    key = s_blocks.keys[0]
    out = []
    for w, om in enumerate(setup.omega_index):
        if setup.multiplicity(w) != 1:
            raise ValidationError("rank-one enumeration needs multiplicity-free restrictions")
        scale = s_blocks.ops[key][w][0, 0].real
        blocks = {om: np.array([[s_blocks.targets[key] / scale]])}
        out.append((om, make_block_seed(setup, blocks)))
    return out


@dataclass(frozen=True, eq=False)
class Ensemble:
    states: tuple
    priors: tuple

    @property
    def dim(self) -> int:
        return self.states[0].shape[0]


def make_ensemble(states, priors, tol: float = 1e-9) -> Ensemble:
    states = [np.asarray(s, dtype=complex) for s in states]
    if not states:
        raise InvalidEnsemble("ensemble has no states")
    p = np.asarray(priors, dtype=float).ravel()
    if p.size != len(states):
        raise InvalidEnsemble(f"{len(states)} states but {p.size} priors")
    if np.any(p < -tol) or abs(p.sum() - 1) > tol:
        raise InvalidEnsemble(f"priors must be nonnegative and sum to 1 (sum {p.sum():.12g})")
    d = states[0].shape[0]
    checked = []
    for j, s in enumerate(states):
        try:
            checked.append(validate_state(s, d, tol))
        except InvalidState as exc:
            raise InvalidEnsemble(f"state {j}: {exc}") from None
    return Ensemble(tuple(checked), tuple(float(x) for x in np.clip(p, 0, None)))


def mub_ensemble(scenario: MubScenario) -> Ensemble:
    return make_ensemble([s.state for s in scenario.signals], [s.prior for s in scenario.signals])


def shannon_entropy(p) -> float:
    """Base-2 entropy with 0 log 0 = 0."""
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def _povm_elements(povm) -> list[np.ndarray]:
    if isinstance(povm, QuotientPOVM):
        return povm.flat()
    if isinstance(povm, CovariantPOVM):
        return [P for _, P in povm.iter_elements()]
    return [np.asarray(P, dtype=complex) for P in povm]


def joint_distribution(povm, ensemble: Ensemble) -> np.ndarray:
    """``p[i, j] = p_j Tr[M_i rho_j]`` with i the outcome and j the state."""
    M = np.array(_povm_elements(povm))
    rho = np.array(ensemble.states)
    if M.shape[1:] != rho.shape[1:]:
        raise InvalidEnsemble(f"POVM acts on C^{M.shape[1]}, states on C^{rho.shape[1]}")
    tr = np.einsum("iab,jba->ij", M, rho).real
    return np.clip(tr, 0, None) * np.array(ensemble.priors)[None, :]


def mutual_information(povm, ensemble: Ensemble) -> float:
    """``H(priors) + H(outcome marginals) - H(joint)`` in bits."""
    joint = joint_distribution(povm, ensemble)
    return (shannon_entropy(ensemble.priors) + shannon_entropy(joint.sum(axis=1))
            - shannon_entropy(joint))


def orbit_bound(dec: IsotypicDecomposition) -> int:
    """Number of seed orbits that suffices when maximizing mutual information: ``sum_mu m_mu^2``."""
    return dec.sum_m_squared

