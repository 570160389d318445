import numpy as np
import pytest
from hypothesis import given, strategies as st

from cgbp.models import CayleyTree, cayley_glass, pauli, sample_boundary_fields, tfim_chain
from cgbp.operators import embed
from cgbp.oracle import (
    classical_enumerate,
    exact_energy,
    exact_log_z,
    exact_thermal,
    jw_energy_density,
    jw_ring_ground_energy,
    ring_hamiltonian,
    ring_thermal_energy,
    transfer_matrix_log_z,
)

# reference values from an independent 30-digit mpmath quadrature
MPMATH_JW = {
    (1.0, 1.0): -1.11794183734017464,
    (0.5, 0.7): -0.959565805252078374,
    (2.0, 0.3): -2.12676725071785462,
    (1.0, 0.05): -1.27291211843638437,
}


class TestJordanWigner:
    @pytest.mark.parametrize("key", sorted(MPMATH_JW))
    def test_against_mpmath(self, key):
        assert jw_energy_density(*key) == pytest.approx(MPMATH_JW[key], abs=1e-13)

    def test_ground_state_four_over_pi(self):
        assert jw_energy_density(1.0, 0.0) == pytest.approx(-4 / np.pi, abs=1e-13)

    def test_high_temperature_limit(self):
        assert abs(jw_energy_density(1.0, 1e6)) < 1e-5

    def test_classical_limit(self):
        # B = 0: e = -tanh(1/T)
        assert jw_energy_density(0.0, 0.5) == pytest.approx(-np.tanh(2.0), abs=1e-12)

    @given(st.floats(0.0, 3.0), st.floats(0.02, 5.0), st.floats(1.01, 3.0))
    def test_monotone_in_temperature(self, B, T, factor):
        assert jw_energy_density(B, T) <= jw_energy_density(B, T * factor) + 1e-12

    def test_negative_temperature(self):
        with pytest.raises(ValueError):
            jw_energy_density(1.0, -1.0)

    def test_ring_extrapolates_to_jw(self):
        h = tfim_chain(1.0).template
        e = [ring_thermal_energy(h, n, 1.0) for n in (6, 8, 10)]
        aitken = e[2] - (e[2] - e[1]) ** 2 / ((e[2] - e[1]) - (e[1] - e[0]))
        exact = jw_energy_density(1.0, 1.0)
        assert abs(aitken - exact) < 1e-3
        assert abs(aitken - exact) < abs(e[2] - exact) / 5

    @pytest.mark.parametrize("n", [6, 8, 10])
    def test_ring_ground_energy(self, n):
        H = ring_hamiltonian(tfim_chain(1.0).template, n)
        assert np.linalg.eigvalsh(H)[0] == pytest.approx(jw_ring_ground_energy(n), abs=1e-10)

    def test_ring_ground_energy_odd(self):
        with pytest.raises(ValueError):
            jw_ring_ground_energy(5)


class TestExactThermal:
    @pytest.mark.parametrize("beta", [0.1, 1.0, 3.0])
    def test_two_site_partition_function(self, beta):
        g = tfim_chain(0.0, 2)
        assert exact_log_z(g, beta) == pytest.approx(np.log(2 * np.exp(-beta) + 2 * np.exp(beta)), rel=1e-14)

    def test_infinite_temperature_energy(self):
        assert exact_energy(tfim_chain(1.0, 5), 0.0) == pytest.approx(0.0, abs=1e-13)

    def test_eleven_site_finite_size_error(self):
        # mid-bond energy of the open 11-site chain: about three digits at low T
        g = tfim_chain(1.0, 11)
        mid = embed(g.edges[5].op, g.sites).matrix
        out = exact_thermal(g, {"mid": mid}, 1 / 0.1)
        err = abs(out["mid"] - jw_energy_density(1.0, 0.1))
        assert 1e-4 < err < 1e-2

    def test_size_cap(self):
        with pytest.raises(ValueError):
            exact_thermal(np.zeros((2**15, 1)), {}, 1.0)

    def test_returns_log_z(self):
        g = tfim_chain(0.5, 4)
        _, lz = exact_thermal(g, {}, 0.7, return_log_z=True)
        assert lz == pytest.approx(exact_log_z(g, 0.7), rel=1e-13)


class TestClassical:
    def test_two_spin(self):
        out = classical_enumerate(tfim_chain(0.0, 2), 1.0)
        assert out["log_z"] == pytest.approx(np.log(2 * np.exp(-1) + 2 * np.exp(1)), rel=1e-14)

    def test_twelve_site_transfer_matrix(self):
        g = tfim_chain(0.0, 12)
        tables = [np.real(np.diag(e.op.matrix)).reshape(2, 2) for e in g.edges]
        lz = transfer_matrix_log_z(tables, 0.8)
        assert classical_enumerate(g, 0.8)["log_z"] == pytest.approx(lz, rel=1e-12)

    def test_agrees_with_exact_thermal(self):
        t = CayleyTree(2)
        g = cayley_glass(0.0, 2, sample_boundary_fields(5, t))
        c = classical_enumerate(g, 0.6)
        Z0 = pauli("Z" + "I" * (t.n_sites - 1))
        q, lz = exact_thermal(g, {"z": Z0}, 0.6, return_log_z=True)
        assert c["log_z"] == pytest.approx(lz, rel=1e-12)
        assert c["sz"][0] == pytest.approx(q["z"], abs=1e-12)

    def test_needs_diagonal(self):
        with pytest.raises(ValueError):
            classical_enumerate(tfim_chain(1.0, 3), 1.0)

    def test_cap(self):
        with pytest.raises(ValueError):
            classical_enumerate(tfim_chain(0.0, 25), 1.0)
