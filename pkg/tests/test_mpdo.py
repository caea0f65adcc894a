from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import dense_from_purification, fidelity, purification_vector, random_mpdo, random_unitary
from mpdosim import baselines, channels, mpdo
from mpdosim.mpdo import MpdoState


def is_left_iso(t, tol=1e-10):
    l, d, r, m = t.shape
    x = t.reshape(l * d * r, m)
    return np.linalg.norm(x.conj().T @ x - np.eye(m)) < tol


def is_right_iso(t, tol=1e-10):
    l = t.shape[0]
    x = t.reshape(l, -1)
    return np.linalg.norm(x @ x.conj().T - np.eye(l)) < tol


def check_canonical(state):
    c = state.center
    assert all(is_left_iso(state.sites[i]) for i in range(c))
    assert all(is_right_iso(state.sites[i]) for i in range(c + 1, state.n))


def maximally_mixed_qubit():
    t = np.zeros((1, 2, 2, 1), dtype=complex)
    t[0, 0, 0, 0] = t[0, 1, 1, 0] = 1 / np.sqrt(2)
    return MpdoState([t], center=0)


# -- construction and validation ---------------------------------------------------


def test_product_state_single():
    assert np.allclose(mpdo.to_dense(mpdo.product_state(1, [0])), np.diag([1, 0]))


def test_product_state_two():
    rho = mpdo.to_dense(mpdo.product_state(2, [0, 1]))
    ref = np.zeros((4, 4))
    ref[1, 1] = 1
    assert np.allclose(rho, ref)


def test_product_state_three_is_pure():
    s = mpdo.product_state(3, [1, 0, 1])
    rho = mpdo.to_dense(s)
    assert np.trace(rho).real == pytest.approx(1.0)
    assert np.vdot(rho, rho).real == pytest.approx(1.0)
    assert s.bond_dims == [1, 1] and s.anc_dims == [1, 1, 1]


def test_product_state_errors():
    with pytest.raises(ValueError):
        mpdo.product_state(0, [])
    with pytest.raises(ValueError):
        mpdo.product_state(2, [0])
    with pytest.raises(ValueError):
        mpdo.product_state(1, [2])


def test_validate_rejects_bad_shapes():
    with pytest.raises(ValueError, match="expected 4"):
        MpdoState([np.zeros((1, 2, 1))])
    with pytest.raises(ValueError, match="boundary"):
        MpdoState([np.zeros((2, 2, 1, 1))])
    with pytest.raises(ValueError, match="mismatch"):
        MpdoState([np.zeros((1, 2, 1, 2)), np.zeros((3, 2, 1, 1))])
    with pytest.raises(ValueError):
        MpdoState([])


# -- canonical forms --------------------------------------------------------------------


def test_canonicalize_preserves_rho(rng):
    s = random_mpdo(rng, 4, center=None)
    rho = dense_from_purification(s)
    for c in range(4):
        t = mpdo.canonicalize(s, c)
        check_canonical(t)
        rho_c = mpdo.to_dense(t)
        assert fidelity(rho / np.trace(rho).real, rho_c / np.trace(rho_c).real) > 1 - 1e-10


def test_canonicalize_idempotent(rng):
    s = random_mpdo(rng, 4, center=2)
    t = mpdo.canonicalize(s, 2)
    for a, b in zip(s.sites, t.sites):
        assert np.allclose(a, b, atol=1e-12)


def test_canonicalize_ends_preserve_trace(rng):
    s = random_mpdo(rng, 5)
    for c in (0, 4):
        assert mpdo.canonicalize(s, c).norm_squared() == pytest.approx(1.0, abs=1e-10)


def test_canonicalize_range():
    with pytest.raises(IndexError):
        mpdo.canonicalize(mpdo.product_state(2, [0, 0]), 2)


def test_norm_without_center_matches_center(rng):
    s = random_mpdo(rng, 4, center=None)
    t = mpdo.canonicalize(s, 1)
    assert s.norm_squared() == pytest.approx(t.norm_squared(), rel=1e-12)


# -- spectra --------------------------------------------------------------------------


def test_entanglement_spectrum_product():
    sp = mpdo.entanglement_spectrum(mpdo.product_state(3, [0, 1, 0]), 1)
    assert sp.kind == "entanglement" and np.allclose(sp.values, [1.0])


def test_entanglement_spectrum_bell(bell_purification):
    sp = mpdo.entanglement_spectrum(bell_purification, 0)
    assert np.allclose(sp.values, [1 / np.sqrt(2)] * 2)


def test_entanglement_spectrum_matches_schmidt(rng):
    s = random_mpdo(rng, 4, chi=3, r=2)
    psi = purification_vector(s)
    for b in range(3):
        cut = int(np.prod(psi.shape[: 2 * (b + 1)]))
        ref = np.linalg.svd(psi.reshape(cut, -1), compute_uv=False)
        got = mpdo.entanglement_spectrum(s, b).values
        assert np.allclose(got, ref[: got.size], atol=1e-12)
        assert np.allclose(ref[got.size :], 0, atol=1e-12)


def test_purification_spectrum_product():
    sp = mpdo.purification_spectrum(mpdo.product_state(2, [0, 0]), 0)
    assert sp.kind == "purification" and np.allclose(sp.values, [1.0])


def test_purification_spectrum_maximally_mixed():
    assert np.allclose(mpdo.purification_spectrum(maximally_mixed_qubit(), 0).values, [0.5, 0.5])


def test_purification_spectrum_matches_partial_trace(rng):
    s = random_mpdo(rng, 4, chi=3, r=3)
    psi = purification_vector(s)
    for i in range(4):
        m = np.moveaxis(psi, 2 * i + 1, 0).reshape(psi.shape[2 * i + 1], -1)
        ref = np.sort(np.linalg.eigvalsh(m @ m.conj().T))[::-1]
        assert np.allclose(mpdo.purification_spectrum(s, i).values, ref, atol=1e-12)


def test_spectrum_index_errors():
    s = mpdo.product_state(3, [0, 0, 0])
    with pytest.raises(IndexError):
        mpdo.entanglement_spectrum(s, 2)
    with pytest.raises(IndexError):
        mpdo.purification_spectrum(s, 3)


def test_all_spectra_agree_with_single_bond_calls(rng):
    s = random_mpdo(rng, 5)
    sig, lam = mpdo.all_spectra(s)
    for b in range(4):
        assert np.allclose(sig[b], mpdo.entanglement_spectrum(s, b).values)
    for i in range(5):
        assert np.allclose(lam[i], mpdo.purification_spectrum(s, i).values)


def test_bond_spectrum_probabilities():
    sp = mpdo.BondSpectrum("entanglement", 0, np.array([0.6, 0.8]))
    assert np.allclose(sp.probabilities, [0.36, 0.64])
    sp = mpdo.BondSpectrum("purification", 0, np.array([0.3, 0.7]))
    assert np.allclose(sp.probabilities, [0.3, 0.7])


@given(
    n=st.integers(2, 8),
    chi=st.integers(1, 4),
    r=st.integers(1, 3),
    seed=st.integers(0, 2**31),
)
def test_normalization_identity(n, chi, r, seed):
    s = random_mpdo(np.random.default_rng(seed), n, chi=chi, r=r)
    sig, lam = mpdo.all_spectra(s)
    for v in sig:
        assert abs(np.sum(v**2) - 1) < 1e-10
    for v in lam:
        assert abs(np.sum(v) - 1) < 1e-10


# -- entropies ------------------------------------------------------------------------


@pytest.mark.parametrize("alpha", [0, 0.5, 1, 2, 3, np.inf])
def test_renyi_uniform(alpha):
    assert mpdo.renyi_entropy(np.full(4, 0.25), alpha) == pytest.approx(np.log(4))


@pytest.mark.parametrize("alpha", [0.5, 1, 2])
def test_renyi_pure(alpha):
    h = mpdo.renyi_entropy(np.array([1.0, 0.0, 0.0]), alpha)
    assert h == 0.0
    assert str(h) == "0.0"


def test_renyi_direct_formula():
    assert mpdo.renyi_entropy(np.array([0.5, 0.25, 0.25]), 2) == pytest.approx(-np.log(0.375))


def test_renyi_shannon():
    p = np.array([0.5, 0.25, 0.25])
    assert mpdo.renyi_entropy(p, 1) == pytest.approx(-np.sum(p * np.log(p)))


def test_renyi_errors():
    with pytest.raises(ValueError, match="sum"):
        mpdo.renyi_entropy(np.array([0.5, 0.6]), 1)
    with pytest.raises(ValueError):
        mpdo.renyi_entropy(np.array([1.5, -0.5]), 1)
    with pytest.raises(ValueError):
        mpdo.renyi_entropy(np.array([1.0]), -1)


@given(p=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=12).filter(lambda v: sum(v) > 1e-3))
def test_renyi_monotone_in_alpha(p):
    p = np.array(p) / np.sum(p)
    h = [mpdo.renyi_entropy(p, a) for a in (0, 0.5, 1, 2, np.inf)]
    assert all(h[k + 1] <= h[k] + 1e-12 for k in range(4))


def test_bond_entropies_product():
    ent, pur = mpdo.bond_entropies(mpdo.product_state(3, [0, 1, 1]), 1)
    assert ent == [0.0, 0.0] and pur == [0.0, 0.0, 0.0]


def test_bond_entropies_bell(bell_purification):
    ent, pur = mpdo.bond_entropies(bell_purification, 1)
    assert ent[0] == pytest.approx(np.log(2))
    assert pur == [0.0, 0.0]


def test_bond_entropies_monotone(rng):
    s = random_mpdo(rng, 4, chi=4, r=3)
    e1, p1 = mpdo.bond_entropies(s, 1)
    e2, p2 = mpdo.bond_entropies(s, 2)
    assert all(b <= a + 1e-12 for a, b in zip(e1, e2))
    assert all(b <= a + 1e-12 for a, b in zip(p1, p2))


# -- truncation -----------------------------------------------------------------------


def test_truncate_eps_zero_is_identity(rng):
    s = random_mpdo(rng, 4)
    rho = mpdo.to_dense(s)
    for kind, idx in (("entanglement", 1), ("purification", 2)):
        t, w = mpdo.truncate_bond(s, kind, idx)
        assert w == pytest.approx(0.0, abs=1e-14)
        assert np.allclose(mpdo.to_dense(t), rho, atol=1e-12)


def test_truncate_bell_to_product(bell_purification):
    t, w = mpdo.truncate_bond(bell_purification, "entanglement", 0, cap=1)
    assert w == pytest.approx(0.5)
    assert t.bond_dims == [1]
    rho = mpdo.to_dense(t)
    assert np.trace(rho).real == pytest.approx(1.0)
    assert np.vdot(rho, rho).real == pytest.approx(1.0)


def test_truncate_purification_of_mixed_qubit():
    t, w = mpdo.truncate_bond(maximally_mixed_qubit(), "purification", 0, cap=1)
    assert w == pytest.approx(0.5)
    assert t.anc_dims == [1]
    assert np.trace(mpdo.to_dense(t)).real == pytest.approx(1.0)


def test_truncate_entanglement_uses_weights():
    # Schmidt values 0.999.., 0.03, 0.02: weights 9e-4 and 4e-4 both sit below 1e-3
    s = np.array([np.sqrt(1 - 0.03**2 - 0.02**2), 0.03, 0.02])
    a = np.zeros((1, 3, 1, 3), dtype=complex)
    b = np.zeros((3, 3, 1, 1), dtype=complex)
    for j in range(3):
        a[0, j, 0, j] = 1
        b[j, j, 0, 0] = s[j]
    state = MpdoState([a, b], center=1)
    t, w = mpdo.truncate_bond(state, "entanglement", 0, 1e-3)
    assert t.bond_dims == [1]
    assert w == pytest.approx(0.03**2 + 0.02**2)
    t, _ = mpdo.truncate_bond(state, "entanglement", 0, 5e-4)
    assert t.bond_dims == [2]


def test_truncate_purification_uses_lambda():
    lam = np.array([0.9985, 1.2e-3, 3e-4])
    t = np.zeros((1, 3, 3, 1), dtype=complex)
    for j in range(3):
        t[0, j, j, 0] = np.sqrt(lam[j])
    out, w = mpdo.truncate_bond(MpdoState([t], center=0), "purification", 0, 1e-3)
    assert out.anc_dims == [2]
    assert w == pytest.approx(3e-4)


def test_truncate_errors(rng):
    s = random_mpdo(rng, 3)
    with pytest.raises(ValueError):
        mpdo.truncate_bond(s, "entanglement", 0, cap=0)
    with pytest.raises(ValueError):
        mpdo.truncate_bond(s, "entanglement", 0, eps_rel=-1.0)
    with pytest.raises(ValueError):
        mpdo.truncate_bond(s, "bogus", 0)
    with pytest.raises(IndexError):
        mpdo.truncate_bond(s, "entanglement", 2)


def test_truncation_fidelity_bound(rng):
    s = random_mpdo(rng, 4, chi=4, r=3)
    rho = mpdo.to_dense(s)
    total = 0.0
    t = s
    for b in range(3):
        t, w = mpdo.truncate_bond(t, "entanglement", b, 1e-3)
        total += w
    for i in range(4):
        t, w = mpdo.truncate_bond(t, "purification", i, 1e-3)
        total += w
    assert 1 - fidelity(rho, mpdo.to_dense(t)) <= 2 * total + 1e-12


@given(
    n=st.integers(2, 5),
    seed=st.integers(0, 2**31),
    kind=st.sampled_from(["entanglement", "purification"]),
    eps=st.floats(0.0, 0.5),
    cap=st.one_of(st.none(), st.integers(1, 3)),
)
def test_truncation_properties(n, seed, kind, eps, cap):
    s = random_mpdo(np.random.default_rng(seed), n, chi=3, r=3)
    idx = int(np.random.default_rng(seed + 1).integers(0, n - 1 if kind == "entanglement" else n))
    t, w = mpdo.truncate_bond(s, kind, idx, eps, cap)
    rho_s, rho_t = mpdo.to_dense(s), mpdo.to_dense(t)
    assert np.trace(rho_t).real == pytest.approx(1.0, abs=1e-10)
    assert np.linalg.eigvalsh(rho_t)[0] >= -1e-10
    assert mpdo.memory_footprint(t) <= mpdo.memory_footprint(s)
    assert 1 - fidelity(rho_s, rho_t) <= 2 * w + 1e-9


# -- gauge invariance ------------------------------------------------------------------


@given(n=st.integers(1, 5), seed=st.integers(0, 2**31))
def test_single_ancilla_gauge_invariance(n, seed):
    rng = np.random.default_rng(seed)
    s = random_mpdo(rng, n, chi=2, r=3)
    i = int(rng.integers(0, n))
    u = random_unitary(rng, 3)
    t = s.copy()
    t.sites[i] = np.einsum("ba,lsar->lsbr", u, t.sites[i])
    assert fidelity(mpdo.to_dense(s), mpdo.to_dense(t)) > 1 - 1e-10


# -- dense and MPO conversion -----------------------------------------------------------


def test_to_dense_product():
    rho = mpdo.to_dense(mpdo.product_state(2, [0, 0]))
    ref = np.zeros((4, 4))
    ref[0, 0] = 1
    assert np.allclose(rho, ref)


def test_to_dense_mixed_qubit():
    assert np.allclose(mpdo.to_dense(maximally_mixed_qubit()), np.eye(2) / 2)


def test_to_dense_after_depolarizing():
    p = 0.3
    s = channels.apply_one_site(mpdo.product_state(1, [0]), 0, channels.depolarizing(p))
    ref = (1 - p) * np.diag([1, 0]) + p * np.eye(2) / 2
    assert np.allclose(mpdo.to_dense(s), ref, atol=1e-14)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_to_dense_matches_purification_oracle(rng, n):
    s = random_mpdo(rng, n, chi=3, r=2)
    rho = mpdo.to_dense(s)
    assert np.allclose(rho, dense_from_purification(s), atol=1e-12)
    assert np.linalg.norm(rho - rho.conj().T) < 1e-12
    assert np.linalg.eigvalsh(rho)[0] >= -1e-10


def test_to_dense_mixed_physical_dims(rng):
    sites = [rng.normal(size=(1, 3, 2, 2)), rng.normal(size=(2, 2, 2, 2)), rng.normal(size=(2, 4, 1, 1))]
    s = MpdoState(sites)
    assert np.allclose(mpdo.to_dense(s), dense_from_purification(s), atol=1e-12)


def test_to_dense_cap():
    with pytest.raises(ValueError, match="limited"):
        mpdo.to_dense(mpdo.product_state(4, [0] * 4), max_qubits=3)


def test_to_mpo_product():
    m = mpdo.to_mpo(mpdo.product_state(3, [1, 0, 1]))
    assert m.bond_dims == [1, 1]


def test_to_mpo_maximally_mixed():
    s = MpdoState([maximally_mixed_qubit().sites[0]] * 2)
    m = mpdo.to_mpo(s)
    assert m.bond_dims == [1]
    assert np.allclose(baselines.mpo_to_dense(m), np.eye(4) / 4)


def test_to_mpo_dense_equality(rng):
    s = random_mpdo(rng, 4, chi=3, r=2)
    m = mpdo.to_mpo(s)
    assert m.bond_dims == [c**2 for c in s.bond_dims]
    assert np.allclose(baselines.mpo_to_dense(m), mpdo.to_dense(s), atol=1e-10)


def test_purification_overlap_and_fidelity(rng):
    s = random_mpdo(rng, 3)
    assert mpdo.purification_fidelity(s, s) == pytest.approx(1.0)
    psi = purification_vector(s).ravel()
    t = random_mpdo(rng, 3)
    assert mpdo.purification_overlap(s, t) == pytest.approx(np.vdot(psi, purification_vector(t).ravel()))
    with pytest.raises(ValueError):
        mpdo.purification_overlap(s, random_mpdo(rng, 3, r=3))


# -- memory and snapshots ---------------------------------------------------------------


def test_memory_product():
    assert mpdo.memory_footprint(mpdo.product_state(3, [0, 0, 0])) == 96


def test_memory_uniform():
    s = MpdoState([np.zeros((1, 2, 2, 4)), np.zeros((4, 2, 2, 1))])
    assert mpdo.memory_footprint(s) == 512


def test_snapshot_round_trip(rng, tmp_path):
    s = random_mpdo(rng, 3, center=1)
    path = tmp_path / "state.json"
    mpdo.save_state(s, path)
    t = mpdo.load_state(path)
    assert isinstance(t, MpdoState) and t.center == 1
    for a, b in zip(s.sites, t.sites):
        assert np.array_equal(a, b)
    obj = json.loads(path.read_text())
    assert obj["version"] == mpdo.SNAPSHOT_VERSION and obj["kind"] == "mpdo"
    assert obj["sites"][0]["shape"] == list(s.sites[0].shape)


def test_snapshot_mpo_and_errors(rng):
    m = mpdo.to_mpo(random_mpdo(rng, 2))
    back = mpdo.state_from_json(mpdo.state_to_json(m))
    assert isinstance(back, baselines.MpoState)
    obj = mpdo.state_to_json(m)
    with pytest.raises(ValueError, match="version"):
        mpdo.state_from_json({**obj, "version": 99})
    with pytest.raises(ValueError, match="kind"):
        mpdo.state_from_json({**obj, "kind": "peps"})
    with pytest.raises(ValueError, match="count"):
        mpdo.state_from_json({**obj, "n": 5})
