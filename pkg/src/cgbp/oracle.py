"""Exact reference results used to check the approximate solvers.

* free-fermion energy density of the infinite transverse-field Ising chain,
* exact thermal expectations by full diagonalisation,
* classical partition functions by enumeration or transfer matrices,
* the exact ground energy of the critical Ising ring.
"""

from __future__ import annotations


import numpy as np
from scipy import integrate, linalg

from .models import InteractionGraph, hamiltonian_matrix
from .operators import MultiSiteOperator, embed

MAX_EXACT_DIM = 2**14
MAX_ENUM_SPINS = 24


def _quasiparticle(k, B):
    return 2.0 * np.sqrt(1.0 + B * B - 2.0 * B * np.cos(k))


def jw_energy_density(B: float, T: float) -> float:
    """Energy per bond of ``sum Z_i Z_{i+1} + B X_i`` on the infinite chain.

    ``e = -(1/2 pi) int_0^pi eps(k) tanh(eps(k) / 2T) dk`` with
    ``eps(k) = 2 sqrt(1 + B^2 - 2B cos k)``.  ``T = 0`` gives the ground state.
    """
    if T < 0:
        raise ValueError("temperature must be non-negative")

    def integrand(k):
        eps = _quasiparticle(k, B)
        if T == 0:
            return eps
        return eps * np.tanh(eps / (2.0 * T))

    # the dispersion has a kink at k = 0 when B = 1; quad handles the endpoint
    val, _ = integrate.quad(integrand, 0.0, np.pi, epsabs=1e-14, epsrel=1e-13, limit=400)
    return -val / (2.0 * np.pi)


def jw_ring_ground_energy(N: int) -> float:
    """Ground energy of the critical (B = 1) Ising ring of even length ``N``.

    Periodic boundary conditions on the spins select antiperiodic fermion
    momenta ``k = (2m+1) pi / N`` in the even-parity sector.
    """
    if N < 2 or N % 2:
        raise ValueError("ring length must be even")
    k = (2 * np.arange(N) + 1) * np.pi / N
    return float(-0.5 * np.sum(_quasiparticle(k, 1.0)))


def _dense(H) -> np.ndarray:
    if isinstance(H, InteractionGraph):
        H = hamiltonian_matrix(H)
    elif isinstance(H, MultiSiteOperator):
        H = H.matrix
    H = np.asarray(H)
    if H.shape[0] > MAX_EXACT_DIM:
        raise ValueError(f"dimension {H.shape[0]} exceeds the exact-diagonalisation cap {MAX_EXACT_DIM}")
    return H


def exact_thermal(H, observables, beta: float, return_log_z: bool = False):
    """Thermal expectations ``Tr(O e^{-beta H}) / Z`` by full diagonalisation.

    ``H`` is a graph, an operator or a dense matrix; ``observables`` is a
    dict of dense matrices of the same size.
    """
    H = _dense(H)
    vals, vecs = np.linalg.eigh(H)
    w = np.exp(-beta * (vals - vals[0]))
    Z = w.sum()
    out = {}
    for name, O in observables.items():
        O = O.matrix if isinstance(O, MultiSiteOperator) else np.asarray(O)
        diag = np.einsum("ij,ik,kj->j", vecs.conj(), O, vecs, optimize=True)
        out[name] = float(np.real(np.dot(w, diag)) / Z)
    if return_log_z:
        return out, float(np.log(Z) - beta * vals[0])
    return out


def exact_log_z(H, beta: float) -> float:
    vals = np.linalg.eigvalsh(_dense(H))
    return float(-beta * vals[0] + np.log(np.sum(np.exp(-beta * (vals - vals[0])))))


def exact_energy(H, beta: float) -> float:
    vals = np.linalg.eigvalsh(_dense(H))
    w = np.exp(-beta * (vals - vals[0]))
    return float(np.dot(w, vals) / w.sum())


def exact_ground_state(H) -> tuple[float, np.ndarray]:
    vals, vecs = np.linalg.eigh(_dense(H))
    return float(vals[0]), vecs[:, 0]


def ring_hamiltonian(h: MultiSiteOperator, n: int) -> np.ndarray:
    """``sum_k h_{k, k+1 mod n}`` for a two-site template ``h``."""
    if n < 2:
        raise ValueError("ring needs at least two sites")
    a, b = h.sites
    d = h.dims[0]
    sites = list(range(n))
    total = np.zeros((d**n, d**n), dtype=h.matrix.dtype)
    for k in range(n):
        term = h.relabel({a: k, b: (k + 1) % n})
        total = total + embed(term, sites, dim=d).matrix
    return total


def ring_thermal_energy(h: MultiSiteOperator, n: int, beta: float) -> float:
    """Thermal energy per bond of the ``n``-site ring built from template ``h``."""
    return exact_energy(ring_hamiltonian(h, n), beta) / n


def classical_enumerate(graph: InteractionGraph, beta: float) -> dict:
    """Exact classical statistics by summing over all ``2^N`` configurations.

    Requires diagonal edge terms.  Returns ``log_z``, the mean energy and the
    one-site ``<Z>`` and nearest-neighbour ``<ZZ>`` values on the edges.
    """
    if not graph.is_classical():
        raise ValueError("classical_enumerate needs diagonal edge terms")
    n = graph.n_sites
    if n > MAX_ENUM_SPINS:
        raise ValueError(f"{n} spins exceeds the enumeration cap {MAX_ENUM_SPINS}")
    pos = {s.index: k for k, s in enumerate(graph.sites)}
    # axis k of the weight tensor is site k; index 0 -> spin up (Z = +1)
    energy = np.zeros((2,) * n)
    for e in graph.edges:
        diag = np.real(np.diag(e.op.matrix)).reshape(2, 2)
        shape = [1] * n
        i, j = pos[e.i], pos[e.j]
        shape[i] = shape[j] = 2
        energy = energy + (diag if i < j else diag.T).reshape(shape)
    shift = energy.min()
    w = np.exp(-beta * (energy - shift))
    Z = w.sum()
    spin = np.array([1.0, -1.0])

    def marginal(*ks):
        return w.sum(axis=tuple(k for k in range(n) if k not in ks)) / Z

    return {
        "log_z": float(np.log(Z) - beta * shift),
        "energy": float(np.sum(w * energy) / Z),
        "sz": {s.index: float(marginal(k) @ spin) for k, s in enumerate(graph.sites)},
        "szsz": {
            (e.i, e.j): float(spin @ marginal(*sorted((pos[e.i], pos[e.j]))) @ spin) for e in graph.edges
        },
    }


def transfer_matrix_log_z(edge_energies: list[np.ndarray], beta: float) -> float:
    """``log Z`` of an open classical chain from its bond energy tables."""
    v = np.ones(edge_energies[0].shape[0])
    log_z = 0.0
    for E in edge_energies:
        v = np.exp(-beta * np.asarray(E)).T @ v
        s = v.sum()
        log_z += np.log(s)
        v = v / s
    return float(log_z)


def matrix_log(A: np.ndarray) -> np.ndarray:
    """Principal matrix logarithm via scipy, used to cross-check eigen-based logs."""
    return linalg.logm(A)
