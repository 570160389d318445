import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import unitary_group, ortho_group

from cgbp.mera import (
    MeraLayer,
    ascend,
    coarse_hamiltonians,
    descend,
    initial_layer,
    load_layers,
    optimize_mera,
    ring_bond_density,
    ring_ground_state,
    ring_matrix,
    save_layers,
)
from cgbp.models import tfim_chain
from cgbp.oracle import exact_energy, jw_ring_ground_energy, ring_hamiltonian
from cgbp.operators import operator

from conftest import random_density, random_hermitian

H_CRIT = tfim_chain(1.0).template.matrix


def random_layer(seed, d=2, chi=2):
    u = ortho_group.rvs(d * d, random_state=seed)
    w = ortho_group.rvs(d**3, random_state=seed + 1)[:, :chi]
    return MeraLayer(u, w)


class TestLayer:
    def test_rejects_non_unitary(self):
        with pytest.raises(ValueError):
            MeraLayer(2 * np.eye(4), np.eye(8)[:, :2])

    def test_rejects_non_isometry(self):
        with pytest.raises(ValueError):
            MeraLayer(np.eye(4), np.ones((8, 2)))

    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            MeraLayer(np.eye(3), np.eye(27)[:, :2])

    def test_roundtrip(self, tmp_path):
        layers = [random_layer(3), MeraLayer(unitary_group.rvs(4, random_state=1), np.eye(8)[:, :3])]
        save_layers(layers, tmp_path / "l.json")
        back = load_layers(tmp_path / "l.json")
        for a, b in zip(layers, back):
            np.testing.assert_array_equal(a.u, b.u)
            np.testing.assert_array_equal(a.w, b.w)

    def test_initial_layer_dims(self):
        layer = initial_layer(H_CRIT, 3)
        assert (layer.chi_in, layer.chi_out) == (2, 3)
        with pytest.raises(ValueError):
            initial_layer(H_CRIT, 9)


class TestAscendDescend:
    def test_identity_maps_to_three_identities(self):
        out = ascend(np.eye(4), random_layer(0))
        np.testing.assert_allclose(out, 3 * np.eye(4), atol=1e-12)

    @settings(max_examples=20)
    @given(st.integers(0, 10**6))
    def test_duality(self, seed):
        rng = np.random.default_rng(seed)
        layer = random_layer(seed % 1000)
        h = random_hermitian(rng, 4, real=True)
        rho = random_density(rng, 4, real=True)
        lhs = np.trace(ascend(h, layer) @ rho)
        rhs = 3 * np.trace(h @ descend(rho, layer))
        assert lhs == pytest.approx(rhs, abs=1e-11)

    @settings(max_examples=20)
    @given(st.integers(0, 10**6))
    def test_descend_is_state(self, seed):
        rng = np.random.default_rng(seed)
        out = descend(random_density(rng, 4, real=True), random_layer(seed % 1000))
        vals = np.linalg.eigvalsh(out)
        assert vals.min() > -1e-12
        assert vals.sum() == pytest.approx(1.0, abs=1e-12)

    def test_ascend_hermitian(self, rng):
        h = random_hermitian(rng, 4, real=True)
        out = ascend(h, random_layer(5))
        np.testing.assert_allclose(out, out.conj().T, atol=1e-12)


class TestRing:
    @pytest.mark.parametrize("n", [3, 4, 6])
    def test_matches_oracle(self, n):
        tpl = operator(H_CRIT, (0, 1), hermitian=True)
        np.testing.assert_allclose(ring_matrix(H_CRIT, 2, n).toarray(), ring_hamiltonian(tpl, n), atol=1e-13)

    def test_asymmetric_term(self, rng):
        h = random_hermitian(rng, 9, real=True)
        tpl = operator(h, (0, 1), dims=3, hermitian=True)
        np.testing.assert_allclose(ring_matrix(h, 3, 4).toarray(), ring_hamiltonian(tpl, 4), atol=1e-12)

    def test_ground_energy(self):
        e, psi = ring_ground_state(H_CRIT, 2, 8)
        assert e == pytest.approx(jw_ring_ground_energy(8), abs=1e-10)
        rho = ring_bond_density(psi, 2, 8)
        assert np.trace(rho @ H_CRIT) == pytest.approx(e / 8, abs=1e-10)


class TestNoTruncation:
    @pytest.mark.parametrize("beta", [0.1, 1.0])
    def test_coarse_ring_equals_fine_ring(self, beta):
        # chi_out = chi_in^3 makes every layer a change of basis
        layer = MeraLayer(unitary_group.rvs(4, random_state=2), unitary_group.rvs(8, random_state=3))
        hc = ascend(H_CRIT, layer)
        fine = exact_energy(ring_matrix(H_CRIT, 2, 9).toarray(), beta) / 9
        coarse = exact_energy(ring_matrix(hc, 8, 3).toarray(), beta) / 9
        assert coarse == pytest.approx(fine, abs=1e-9)


class TestOptimize:
    def test_classical_exact(self):
        res = optimize_mera(tfim_chain(0.0).template.matrix, [2], sweeps=5)
        assert res.energy == pytest.approx(-1.0, abs=1e-12)

    def test_variational_and_monotone(self):
        res = optimize_mera(H_CRIT, [2], sweeps=40)
        assert all(b <= a + 1e-12 for a, b in zip(res.history, res.history[1:]))
        exact = jw_ring_ground_energy(res.n_fine_sites) / res.n_fine_sites
        assert res.energy >= exact - 1e-12
        assert res.energy < res.history[0]

    def test_coarse_hamiltonians(self):
        res = optimize_mera(H_CRIT, [2, 2], sweeps=3)
        hs = coarse_hamiltonians(H_CRIT, res.layers)
        assert [h.shape for h in hs] == [(4, 4), (4, 4), (4, 4)]
        for a, b in zip(hs, res.hamiltonians):
            np.testing.assert_allclose(a, b, atol=1e-12)
