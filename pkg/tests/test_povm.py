import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from covpovm.apps import weyl_heisenberg_rep
from covpovm.errors import DimensionMismatch, InvalidState, NotHermitian, NotNormalized
from covpovm.povm import (
    check_membership,
    make_seed_block,
    normalization_map,
    outcome_probabilities,
    synthesize,
)
from covpovm.repdec import decompose

from builders import SMALL_REPS, X, doubled_pauli, maybe_member, random_member, random_state, z2_rep, z2_on_c3

REPS = SMALL_REPS + [("doubled_pauli", doubled_pauli)]


def test_normalization_of_identity_seed():
    block = make_seed_block(z2_rep(), [np.eye(2)])
    assert np.allclose(normalization_map(block), np.eye(2))


def test_weyl_two_projector_is_member():
    rep = weyl_heisenberg_rep(2)
    report = check_membership(make_seed_block(rep, [np.diag([2.0, 0.0])]), decompose(rep))
    assert report.member
    (row,) = report.normalization_residuals
    assert np.isclose(row["value_re"], 2) and row["target"] == 2


def test_z2_identity_is_member():
    report = check_membership(make_seed_block(z2_rep(), [np.eye(2)]), decompose(z2_rep()))
    assert report.member
    assert [r["value_re"] for r in report.normalization_residuals] == pytest.approx([1, 1])


def test_membership_lists_every_violation():
    rep = z2_rep()
    block = make_seed_block(rep, [np.diag([3.0, -1.0])])
    report = check_membership(block, decompose(rep))
    assert not report.member
    kinds = {("positivity" if "min_eigenvalue" in v else "normalization") for v in report.violations}
    assert kinds == {"positivity", "normalization"}
    assert len(report.violations) == 3


def test_seed_validation():
    with pytest.raises(DimensionMismatch):
        make_seed_block(z2_rep(), [np.eye(3)])
    with pytest.raises(NotHermitian):
        make_seed_block(z2_rep(), [np.array([[0, 1], [0, 0]])])


def test_weyl_rank_one_orbit():
    rep = weyl_heisenberg_rep(2)
    psi = np.array([np.cos(0.3), np.exp(0.7j) * np.sin(0.3)])
    povm = synthesize(make_seed_block(rep, [2 * np.outer(psi, psi.conj())]))
    elements = povm.as_array()[0]
    assert elements.shape == (4, 2, 2)
    for g, P in enumerate(elements):
        v = rep.matrices[g] @ psi
        assert np.allclose(P, 0.5 * np.outer(v, v.conj()))
        assert np.linalg.matrix_rank(P, tol=1e-9) == 1
    assert povm.completeness_residual() < 1e-12
    probs = outcome_probabilities(povm, np.outer(psi, psi.conj()))
    assert np.isclose(probs[0, 0], 0.5)


def test_two_diagonal_seeds():
    rep = z2_rep()
    povm = synthesize(make_seed_block(rep, [np.diag([1.0, 0]), np.diag([0, 1.0])]))
    assert povm.as_array().shape == (2, 2, 2, 2)
    assert povm.completeness_residual() < 1e-12


def test_non_normalized_synthesis_rejected():
    with pytest.raises(NotNormalized):
        synthesize(make_seed_block(z2_rep(), [2 * np.eye(2)]))


def test_streaming_matches_dense():
    rep = z2_on_c3()
    block = random_member(rep, [2, 1], np.random.default_rng(3))
    dense = synthesize(block)
    stream = synthesize(block, cap=1)
    assert stream.streaming and not dense.streaming
    assert np.allclose(np.stack([P for _, P in stream.iter_elements()]),
                       dense.as_array().reshape(-1, 3, 3))
    assert np.isclose(stream.completeness_residual(), dense.completeness_residual())


def test_invalid_state_rejected():
    povm = synthesize(make_seed_block(z2_rep(), [np.eye(2)]))
    with pytest.raises(InvalidState):
        outcome_probabilities(povm, np.diag([0.7, 0.7]))
    with pytest.raises(InvalidState):
        outcome_probabilities(povm, X)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(REPS), st.integers(0, 2 ** 32 - 1), st.integers(1, 2))
def test_membership_and_completeness_routes_agree(case, seed, n_seeds):
    rep = case[1]()
    rng = np.random.default_rng(seed)
    ranks = [int(rng.integers(1, rep.dim + 1)) for _ in range(n_seeds)]
    block = maybe_member(rep, ranks, rng)
    assume(block is not None)
    dec = decompose(rep)
    # route 1: intertwiner traces
    assert check_membership(block, dec).member
    # route 2: direct element sum
    povm = synthesize(block)
    direct = povm.as_array().sum(axis=(0, 1))
    assert np.linalg.norm(direct - np.eye(rep.dim), 2) <= rep.dim * 1e-9
    # normalization map commutes with everything
    L = normalization_map(block)
    for U in rep.matrices:
        assert np.allclose(U @ L, L @ U, atol=1e-10)
    # covariance: U_h P(i, g) U_h^dag = P(i, hg)
    assert povm.covariance_residual() < 1e-10
    elems = povm.as_array()
    mul = rep.group.mul
    h = int(rng.integers(rep.group.order))
    Uh = rep.matrices[h]
    for g in range(rep.group.order):
        assert np.allclose(Uh @ elems[0, g] @ Uh.conj().T, elems[0, mul[h, g]], atol=1e-10)
    probs = outcome_probabilities(povm, random_state(rep.dim, rng))
    assert probs.min() >= -1e-12 and np.isclose(probs.sum(), 1)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.05, 3.0))
def test_scaled_member_fails_normalization(seed, scale):
    rep = z2_on_c3()
    block = random_member(rep, [3], np.random.default_rng(seed))
    scaled = block.replace([scale * A for A in block.seeds])
    report = check_membership(scaled, decompose(rep))
    assert report.member == bool(abs(scale - 1) < 1e-9)
