import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from covpovm.apps import build_mub_scenario, fourier_basis, weyl_heisenberg_rep
from covpovm.errors import DimensionMismatch, NotInvariant, NotNormalized
from covpovm.extremal import analyze
from covpovm.group_core import left_cosets, make_subgroup
from covpovm.povm import check_membership, make_seed_block, synthesize
from covpovm.repdec import decompose
from covpovm.stability import (
    block_seed_from_full,
    build_s_blocks,
    build_setup,
    embed_blocks,
    make_block_seed,
    project_seed_to_blocks,
    restrict_and_decompose,
    s_block,
    stability_extremality,
    stability_membership,
    synthesize_quotient_povm,
)

from builders import SMALL_REPS, X, doubled_pauli, maybe_member, random_psd, z2_on_c3


def weyl2_setup():
    rep = weyl_heisenberg_rep(2)
    g1 = make_subgroup(rep.group, [0, 1])  # (0, q): {I, Z}
    g2 = make_subgroup(rep.group, [0, 2])  # (p, 0): {I, X}
    return rep, build_setup(rep, [g1, g2])


def test_restriction_to_z_subgroup():
    rep = weyl_heisenberg_rep(2)
    r = restrict_and_decompose(rep, make_subgroup(rep.group, [0, 1]))
    assert [(c.d_mu, c.m_mu) for c in r.components] == [(1, 1), (1, 1)]
    assert sorted(round(abs(c.basis[0, 0]) ** 2) for c in r.components) == [0, 1]


def test_sigma_x_is_maximally_non_invariant():
    rep = weyl_heisenberg_rep(2)
    r = restrict_and_decompose(rep, make_subgroup(rep.group, [0, 1]))
    blocks, residual = project_seed_to_blocks(X, r, strict=False)
    assert np.isclose(residual, np.linalg.norm(X))
    assert all(np.allclose(b, 0) for b in blocks)
    with pytest.raises(NotInvariant):
        project_seed_to_blocks(X, r)


def test_s_blocks_for_weyl2():
    rep, setup = weyl2_setup()
    s = build_s_blocks(setup, decompose(rep))
    assert len(setup.omega_index) == 4
    for w in range(4):
        assert np.allclose(s_block(s, 0, 0, 0, w), [[1.0]])


def test_single_block_member_and_basis_measurement():
    rep, setup = weyl2_setup()
    s = build_s_blocks(setup, decompose(rep))
    nu0 = next(nu for nu, c in enumerate(setup.restrictions[0].components) if abs(c.basis[0, 0]) > 0.5)
    seed = make_block_seed(setup, {(0, nu0): np.array([[2.0]])})
    assert stability_membership(seed, s).member
    full = seed.reconstruct()
    assert np.allclose(full[0], np.diag([2, 0]))
    assert np.allclose(full[1], 0)
    povm = synthesize_quotient_povm(seed)
    assert povm.outcome_counts == (2, 2)
    assert np.allclose(povm.elements[0][0], np.diag([1, 0]))
    assert np.allclose(povm.elements[0][1], np.diag([0, 1]))
    assert np.allclose(povm.elements[1], 0)
    ext = stability_extremality(seed, s)
    assert ext.is_extremal and ext.rank_bound_satisfied


def test_both_bases_nonzero_is_not_extremal():
    rep, setup = weyl2_setup()
    s = build_s_blocks(setup, decompose(rep))
    half = [np.diag([1.0, 0]), np.outer([1, 1], [1, 1]) / 2]
    blocks, _ = block_seed_from_full(setup, half)
    assert stability_membership(blocks, s).member
    ext = stability_extremality(blocks, s)
    assert (ext.rank_bound_lhs, ext.rank_bound_rhs) == (2, 1)
    assert not ext.is_extremal


def test_quotient_synthesis_of_mub_bases():
    sc = build_mub_scenario(3, [0.5, 0.5])
    from covpovm.apps import basis_measurement_seed

    povm = synthesize_quotient_povm(basis_measurement_seed(sc, 2))
    F = fourier_basis(3)
    hit = set()
    for P in povm.elements[1]:
        assert np.isclose(np.trace(P).real, 1)
        n = int(np.argmax(np.abs(F.conj().T @ P @ F).diagonal()))
        assert np.allclose(P, np.outer(F[:, n], F[:, n].conj()))
        hit.add(n)
    assert hit == {0, 1, 2}


def test_quotient_errors():
    rep, setup = weyl2_setup()
    bad = make_block_seed(setup, {(0, 0): np.array([[5.0]])})
    with pytest.raises(NotNormalized):
        synthesize_quotient_povm(bad)
    with pytest.raises(DimensionMismatch):
        make_block_seed(setup, [np.eye(1)] * 3)
    with pytest.raises(DimensionMismatch):
        block_seed_from_full(setup, [np.eye(2)])


@pytest.mark.parametrize("name,make", SMALL_REPS + [("doubled_pauli", doubled_pauli)])
def test_restriction_dimensions(name, make):
    from covpovm.group_core import generated_subgroup

    rep = make()
    for h in range(rep.group.order):
        sub = generated_subgroup(rep.group, [h])
        r = restrict_and_decompose(rep, sub)
        assert sum(c.d_mu * c.m_mu for c in r.components) == rep.dim


def test_embed_project_round_trip():
    rep = z2_on_c3()
    r = restrict_and_decompose(rep, make_subgroup(rep.group, [0, 1]))
    rng = np.random.default_rng(0)
    blocks = [random_psd(c.m_mu, c.m_mu, rng) for c in r.components]
    A = embed_blocks(blocks, r)
    back, res = project_seed_to_blocks(A, r)
    assert res < 1e-12
    assert all(np.allclose(a, b) for a, b in zip(blocks, back))


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(SMALL_REPS + [("doubled_pauli", doubled_pauli)]), st.integers(0, 2 ** 32 - 1),
       st.integers(1, 2))
def test_collapse_with_trivial_stabilizers(case, seed, n):
    rep = case[1]()
    rng = np.random.default_rng(seed)
    block = maybe_member(rep, [int(rng.integers(1, rep.dim + 1)) for _ in range(n)], rng)
    assume(block is not None)
    dec = decompose(rep)
    trivial = make_subgroup(rep.group, [rep.group.identity])
    setup = build_setup(rep, [trivial] * n)
    blocks, _ = block_seed_from_full(setup, block.seeds)
    s = build_s_blocks(setup, dec)
    plain_mem = check_membership(block, dec)
    stab_mem = stability_membership(blocks, s)
    assert plain_mem.member == stab_mem.member
    plain, stab = analyze(block, dec), stability_extremality(blocks, s)
    for field in ("is_extremal", "span_dim", "full_dim", "rank_bound_lhs", "rank_bound_rhs"):
        assert getattr(plain, field) == getattr(stab, field)
    q = synthesize_quotient_povm(blocks)
    p = synthesize(block)
    assert np.allclose(np.concatenate(q.elements), p.as_array().reshape(-1, rep.dim, rep.dim), atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2 ** 32 - 1))
def test_representative_independence(d, seed):
    sc = build_mub_scenario(d, [0.5, 0.5])
    rng = np.random.default_rng(seed)
    # a random invariant seed per orbit: any state diagonal in that basis, scaled to normalize
    seeds = []
    for b in sc.bases:
        w = rng.random(d)
        seeds.append(b @ np.diag(w / w.sum() * d / 2) @ b.conj().T)
    blocks, _ = block_seed_from_full(sc.setup, seeds)
    assume(stability_membership(blocks, build_s_blocks(sc.setup, sc.dec)).member)
    base = synthesize_quotient_povm(blocks)
    alt = [cs.with_representatives([int(rng.choice(cs.members(x))) for x in range(cs.size)])
           for cs in sc.cosets]
    moved = synthesize_quotient_povm(blocks, cosets=alt)
    assert base.completeness_residual() <= d * 1e-9
    for e1, e2 in zip(base.elements, moved.elements):
        assert np.allclose(e1, e2, atol=1e-12)


def test_cosets_must_match_subgroups():
    rep, setup = weyl2_setup()
    seed = make_block_seed(setup, {(0, 0): np.array([[2.0]])})
    wrong = [left_cosets(rep.group, setup.subgroups[1]), left_cosets(rep.group, setup.subgroups[0])]
    with pytest.raises(DimensionMismatch):
        synthesize_quotient_povm(seed, cosets=wrong)


def test_stability_membership_matches_full_space():
    rep, setup = weyl2_setup()
    dec = decompose(rep)
    s = build_s_blocks(setup, dec)
    for scale in (1.0, 2.0, 3.0):
        blocks, _ = block_seed_from_full(setup, [scale * np.diag([1.0, 0]), np.zeros((2, 2))])
        full = make_seed_block(rep, blocks.reconstruct())
        expected = scale == 2.0
        assert stability_membership(blocks, s).member == check_membership(full, dec).member == expected
