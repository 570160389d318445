"""Ternary MERA layers: optimisation and Hamiltonian renormalisation.

Fine sites are grouped in blocks ``(3k, 3k+1, 3k+2)``.  A disentangler ``u``
acts across each block boundary and an isometry ``w`` maps a block to one
coarse site of dimension ``chi_out``.  A coarse two-site term collects the
three fine bonds it covers:

    H'_{k,k+1} = (w x w)^dag  u^dag (h_12 + h_23 + h_34) u  (w x w)

where sites 1..4 are the last two sites of block ``k`` and the first two of
block ``k+1`` and ``u`` acts on sites 2, 3.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as splinalg

from .operators import MultiSiteOperator, embed, operator

ISOMETRY_ATOL = 1e-10


@dataclass(frozen=True)
class MeraLayer:
    """Disentangler ``u`` (``chi_in^2 x chi_in^2``) and isometry ``w`` (``chi_in^3 x chi_out``)."""

    u: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        u, w = np.asarray(self.u), np.asarray(self.w)
        d2 = u.shape[0]
        d = int(round(np.sqrt(d2)))
        if u.shape != (d2, d2) or d * d != d2:
            raise ValueError(f"disentangler shape {u.shape} is not chi_in^2 square")
        if w.shape[0] != d**3 or w.shape[1] > d**3:
            raise ValueError(f"isometry shape {w.shape} does not match chi_in = {d}")
        if not np.allclose(u.conj().T @ u, np.eye(d2), atol=ISOMETRY_ATOL):
            raise ValueError("disentangler is not unitary")
        if not np.allclose(w.conj().T @ w, np.eye(w.shape[1]), atol=ISOMETRY_ATOL):
            raise ValueError("isometry violates w^dag w = 1")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "w", w)

    @property
    def chi_in(self) -> int:
        return int(round(np.sqrt(self.u.shape[0])))

    @property
    def chi_out(self) -> int:
        return self.w.shape[1]

    def to_dict(self) -> dict:
        def enc(a):
            if np.iscomplexobj(a):
                return {"re": a.real.tolist(), "im": a.imag.tolist()}
            return {"re": a.tolist()}

        return {"chi_in": self.chi_in, "chi_out": self.chi_out, "u": enc(self.u), "w": enc(self.w)}

    @classmethod
    def from_dict(cls, doc: dict) -> "MeraLayer":
        def dec(x):
            a = np.array(x["re"], dtype=float)
            return a + 1j * np.array(x["im"]) if "im" in x else a

        return cls(dec(doc["u"]), dec(doc["w"]))


def save_layers(layers, path) -> None:
    with open(path, "w") as fh:
        json.dump([layer.to_dict() for layer in layers], fh)


def load_layers(path) -> list[MeraLayer]:
    with open(path) as fh:
        return [MeraLayer.from_dict(d) for d in json.load(fh)]


def _h4(h: np.ndarray, d: int) -> np.ndarray:
    """``h_12 + h_23 + h_34`` on four sites."""
    I = np.eye(d)
    return np.kron(np.kron(h, I), I) + np.kron(np.kron(I, h), I) + np.kron(I, np.kron(I, h))


def _disentangled(O: np.ndarray, u: np.ndarray, d: int) -> np.ndarray:
    U = np.kron(np.kron(np.eye(d), u), np.eye(d))
    return U.conj().T @ O @ U


def ascend(h: np.ndarray, layer: MeraLayer) -> np.ndarray:
    """Coarse two-site term (``chi_out^2`` square) from a fine two-site term."""
    d, chi = layer.chi_in, layer.chi_out
    h = np.asarray(h)
    if h.shape != (d * d, d * d):
        raise ValueError(f"edge term shape {h.shape} does not match chi_in = {d}")
    Od = _disentangled(_h4(h, d), layer.u, d).reshape((d,) * 8)
    w = layer.w.reshape(d, d, d, chi)
    out = np.einsum(
        "iABS,CDjT,ABCDEFGH,iEFs,GHjt->STst", w.conj(), w.conj(), Od, w, w, optimize="greedy"
    ).reshape(chi * chi, chi * chi)
    return 0.5 * (out + out.conj().T)


def renormalize(h: MultiSiteOperator, layer: MeraLayer) -> MultiSiteOperator:
    """Coarse edge template on sites ``(0, 1)`` from a fine template."""
    H = ascend(embed(h, h.support).matrix, layer)
    return operator(H, (0, 1), dims=layer.chi_out, hermitian=True)


def descend(rho: np.ndarray, layer: MeraLayer) -> np.ndarray:
    """Average fine two-site density matrix under a coarse two-site one.

    ``rho`` is indexed ``[(s t), (s' t')]``.  The three fine bonds covered
    by the coarse bond are averaged, so the result has unit trace.
    """
    G = _descend_dis(rho, layer)
    d = layer.chi_in
    u = layer.u
    U = np.kron(np.kron(np.eye(d), u), np.eye(d))
    R = (U @ G.reshape(d**4, d**4) @ U.conj().T).reshape((d,) * 8)
    s12 = np.einsum("abxyABxy->abAB", R)
    s23 = np.einsum("xabyxABy->abAB", R)
    s34 = np.einsum("xyabxyAB->abAB", R)
    out = ((s12 + s23 + s34) / 3.0).reshape(d * d, d * d)
    return 0.5 * (out + out.conj().T)


def _descend_dis(rho: np.ndarray, layer: MeraLayer) -> np.ndarray:
    d, chi = layer.chi_in, layer.chi_out
    w = layer.w.reshape(d, d, d, chi)
    r = np.asarray(rho).reshape(chi, chi, chi, chi)
    return np.einsum("stST,iEFs,GHjt,iABS,CDjT->EFGHABCD", r, w, w, w.conj(), w.conj(), optimize="greedy")


def _env_u(h: np.ndarray, rho: np.ndarray, layer: MeraLayer) -> np.ndarray:
    d = layer.chi_in
    G = _descend_dis(rho, layer).reshape(d**4, d**4)
    U = np.kron(np.kron(np.eye(d), layer.u), np.eye(d))
    M = (_h4(h, d) @ U @ G).reshape((d,) * 8)
    return np.einsum("xpqyxrsy->pqrs", M).reshape(d * d, d * d)


def _env_w(h: np.ndarray, rho: np.ndarray, layer: MeraLayer) -> np.ndarray:
    d, chi = layer.chi_in, layer.chi_out
    Od = _disentangled(_h4(h, d), layer.u, d).reshape((d,) * 8)
    w = layer.w.reshape(d, d, d, chi)
    r = np.asarray(rho).reshape(chi, chi, chi, chi)
    left = np.einsum("ABCDEFGH,stST,iEFs,GHjt,CDjT->iABS", Od, r, w, w, w.conj(), optimize="greedy")
    right = np.einsum("ABCDEFGH,stST,iEFs,GHjt,iABS->CDjT", Od, r, w, w, w.conj(), optimize="greedy")
    return (left + right).reshape(d**3, chi)


def _neg_polar(env: np.ndarray) -> np.ndarray:
    """Isometry ``x`` minimising ``Re Tr(x^dag env)``."""
    X, _, Yh = linalg.svd(env, full_matrices=False)
    return -(X @ Yh)


def ring_matrix(h: np.ndarray, d: int, n: int):
    """Sparse ``sum_k h_{k,k+1 mod n}`` for an ``n``-site ring."""
    h = sparse.csr_matrix(h)
    total = None
    for k in range(n - 1):
        term = sparse.kron(sparse.kron(sparse.identity(d**k), h), sparse.identity(d ** (n - k - 2)))
        total = term if total is None else total + term
    # wrap-around bond (n-1, 0) from the operator-Schmidt form h = sum_k A_k x B_k
    M = h.toarray().reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)
    X, S, Y = np.linalg.svd(M)
    mid = sparse.identity(d ** (n - 2))
    for k in np.flatnonzero(S > 1e-15 * max(S[0], 1e-300)):
        A = (X[:, k] * S[k]).reshape(d, d)
        B = Y[k].reshape(d, d)
        total = total + sparse.kron(sparse.kron(sparse.csr_matrix(B), mid), sparse.csr_matrix(A))
    return total.tocsr()


def ring_ground_state(h: np.ndarray, d: int, n: int) -> tuple[float, np.ndarray]:
    H = ring_matrix(h, d, n)
    if H.shape[0] <= 1024:
        vals, vecs = np.linalg.eigh(H.toarray())
        return float(vals[0]), vecs[:, 0]
    v0 = np.ones(H.shape[0]) / np.sqrt(H.shape[0])
    vals, vecs = splinalg.eigsh(H, k=1, which="SA", v0=v0, tol=1e-13)
    return float(vals[0]), vecs[:, 0]


def ring_bond_density(psi: np.ndarray, d: int, n: int) -> np.ndarray:
    """Translation-averaged two-site density matrix of a ring state."""
    t = psi.reshape((d,) * n)
    acc = np.zeros((d * d, d * d), dtype=psi.dtype)
    for k in range(n):
        s = np.moveaxis(t, [k, (k + 1) % n], [0, 1]).reshape(d * d, -1)
        acc = acc + s @ s.conj().T
    out = acc / n
    return 0.5 * (out + out.conj().T)


def initial_layer(h: np.ndarray, chi_out: int) -> MeraLayer:
    """Identity disentangler; isometry onto the lowest block eigenvectors."""
    d = int(round(np.sqrt(np.asarray(h).shape[0])))
    if not 1 <= chi_out <= d**3:
        raise ValueError(f"chi_out must lie in [1, {d**3}], got {chi_out}")
    I = np.eye(d)
    block = np.kron(h, I) + np.kron(I, h)
    _, vecs = np.linalg.eigh(block)
    return MeraLayer(np.eye(d * d, dtype=vecs.dtype), vecs[:, :chi_out])


@dataclass
class MeraResult:
    layers: list[MeraLayer]
    energy: float
    history: list[float] = field(default_factory=list)
    hamiltonians: list[np.ndarray] = field(default_factory=list)
    top_sites: int = 4

    @property
    def n_fine_sites(self) -> int:
        return self.top_sites * 3 ** len(self.layers)


def _shifted(h: np.ndarray) -> tuple[np.ndarray, float]:
    c = float(np.linalg.eigvalsh(h)[-1])
    return h - c * np.eye(h.shape[0]), c


def _energy(hs_top: np.ndarray, chi: int, top_sites: int):
    e, psi = ring_ground_state(hs_top, chi, top_sites)
    return e, psi


def optimize_mera(
    h: np.ndarray,
    chis,
    sweeps: int = 100,
    top_sites: int = 4,
    layers: list[MeraLayer] | None = None,
    tol: float = 1e-11,
) -> MeraResult:
    """Variational ground-state MERA with an exactly diagonalised top ring.

    Each layer's ``u`` and ``w`` are replaced by the negated polar factor of
    their environment; a step is kept only if the ring ground energy does not
    rise.  Energies are reported per fine bond.
    """
    h = np.asarray(h)
    d = int(round(np.sqrt(h.shape[0])))
    hs0, c0 = _shifted(h)
    if layers is None:
        layers = []
        hc = hs0
        for chi in chis:
            layer = initial_layer(hc, chi)
            layers.append(layer)
            hc = ascend(hc, layer)
    layers = list(layers)
    L = len(layers)
    chi_top = layers[-1].chi_out if L else d
    norm = top_sites * 3**L

    def coarse_terms(ls):
        out = [hs0]
        for layer in ls:
            out.append(ascend(out[-1], layer))
        return out

    def total(ls):
        hs = coarse_terms(ls)
        e, psi = _energy(hs[-1], chi_top, top_sites)
        return e, psi, hs

    e_cur, psi, hs = total(layers)
    history = [e_cur / norm + c0]
    for _ in range(sweeps):
        e_start = e_cur
        for k in range(L):
            # densities above layer k from the current top state
            rho = ring_bond_density(psi, chi_top, top_sites)
            for j in range(L - 1, k, -1):
                rho = descend(rho, layers[j])
            for which in ("u", "w"):
                layer = layers[k]
                if which == "u":
                    cand = MeraLayer(_neg_polar(_env_u(hs[k], rho, layer)), layer.w)
                else:
                    cand = MeraLayer(layer.u, _neg_polar(_env_w(hs[k], rho, layer)))
                trial = layers[:k] + [cand] + layers[k + 1 :]
                e_new, psi_new, hs_new = total(trial)
                if e_new <= e_cur + 1e-9 * max(1.0, abs(e_cur)):
                    layers, e_cur, psi, hs = trial, e_new, psi_new, hs_new
        history.append(e_cur / norm + c0)
        if abs(e_start - e_cur) <= tol * max(1.0, abs(e_cur)):
            break
    unshifted = [h]
    for layer in layers:
        unshifted.append(ascend(unshifted[-1], layer))
    return MeraResult(layers, e_cur / norm + c0, history, unshifted, top_sites)


def optimize_layer(h: np.ndarray, chi_out: int, sweeps: int = 100, top_sites: int = 4) -> MeraLayer:
    """Single layer optimised against an exact ring of ``top_sites`` coarse sites."""
    return optimize_mera(h, [chi_out], sweeps, top_sites).layers[0]


def coarse_hamiltonians(h: np.ndarray, layers) -> list[np.ndarray]:
    out = [np.asarray(h)]
    for layer in layers:
        out.append(ascend(out[-1], layer))
    return out
