"""Dense operators on tensor products of finite-dimensional site spaces.

An operator is a square matrix together with the ordered tuple of sites it
acts on.  Functions of Hermitian operators (exp, log) always go through a
full eigendecomposition.  Matrices stay real whenever the input is real.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy import special
from scipy.linalg import lapack

LOG_FLOOR = 1e-14
HERMITIAN_RTOL = 1e-12


class SupportError(ValueError):
    """Sites requested by an operation are missing or inconsistent."""


class SingularityError(ArithmeticError):
    """Logarithm of a numerically singular operator."""


class ContractError(ValueError):
    """An operator lacks the structure (hermitian/positive) an operation needs."""


class NormalizationError(ValueError):
    """A density operator does not have unit trace."""


class SiteId(NamedTuple):
    index: int
    dim: int = 2


def _as_sites(sites: Iterable, dims=2) -> tuple[SiteId, ...]:
    sites = list(sites)
    if np.isscalar(dims):
        dims = [dims] * len(sites)
    out = tuple(s if isinstance(s, SiteId) else SiteId(int(s), int(d)) for s, d in zip(sites, dims))
    for s in out:
        if s.dim < 2:
            raise ValueError(f"site {s.index} has dimension {s.dim} < 2")
    if len({s.index for s in out}) != len(out):
        raise SupportError(f"repeated site labels in {[s.index for s in out]}")
    return out


@dataclass(frozen=True, eq=False)
class MultiSiteOperator:
    """A dense operator acting on an ordered tuple of sites.

    ``matrix`` uses the ``np.kron(A_first, A_second, ...)`` layout, i.e. the
    first site of ``support`` is the most significant tensor factor.  The
    ``hermitian`` and ``positive`` flags are checked on construction.
    """

    support: tuple[SiteId, ...]
    matrix: np.ndarray
    hermitian: bool = False
    positive: bool = False

    def __post_init__(self):
        support = _as_sites(self.support)
        mat = np.array(self.matrix, dtype=complex if np.iscomplexobj(self.matrix) else float)
        dim = int(np.prod([s.dim for s in support])) if support else 1
        if mat.shape != (dim, dim):
            raise SupportError(f"matrix of shape {mat.shape} does not match support dimension {dim}")
        hermitian = self.hermitian or self.positive
        if hermitian:
            scale = max(np.linalg.norm(mat), 1e-300)
            if np.linalg.norm(mat - mat.conj().T) > HERMITIAN_RTOL * scale:
                raise ContractError("operator flagged hermitian is not hermitian")
        if self.positive:
            vals = np.linalg.eigvalsh(mat)
            if vals[0] < -HERMITIAN_RTOL * max(abs(vals[-1]), 1e-300):
                raise ContractError(f"operator flagged positive has eigenvalue {vals[0]:.3e}")
        mat.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "hermitian", hermitian)

    @classmethod
    def _unchecked(cls, support, matrix, hermitian=False, positive=False) -> "MultiSiteOperator":
        # for results that carry their structure by construction
        self = object.__new__(cls)
        matrix = np.asarray(matrix)
        if matrix.flags.writeable:
            matrix.setflags(write=False)
        object.__setattr__(self, "support", tuple(support))
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "hermitian", bool(hermitian or positive))
        object.__setattr__(self, "positive", bool(positive))
        return self

    @property
    def sites(self) -> tuple[int, ...]:
        return tuple(s.index for s in self.support)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.support)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def trace(self) -> float | complex:
        tr = np.trace(self.matrix)
        return float(np.real(tr)) if self.hermitian else tr

    def is_diagonal(self) -> bool:
        m = self.matrix
        return not np.count_nonzero(m - np.diag(np.diag(m)))

    def with_matrix(self, matrix, hermitian=None, positive=None) -> "MultiSiteOperator":
        return MultiSiteOperator(
            self.support,
            matrix,
            hermitian=self.hermitian if hermitian is None else hermitian,
            positive=self.positive if positive is None else positive,
        )

    def relabel(self, mapping) -> "MultiSiteOperator":
        """Rename sites; ``mapping`` is a dict or a callable on site indices."""
        f = mapping if callable(mapping) else mapping.__getitem__
        support = _as_sites([SiteId(f(s.index), s.dim) for s in self.support])
        return MultiSiteOperator._unchecked(support, self.matrix, self.hermitian, self.positive)

    def __add__(self, other):
        if not isinstance(other, MultiSiteOperator):
            return NotImplemented
        target = union_support(self.support, other.support)
        mat = embed(self, target).matrix + embed(other, target).matrix
        return MultiSiteOperator._unchecked(target, mat, self.hermitian and other.hermitian)

    def __sub__(self, other):
        if not isinstance(other, MultiSiteOperator):
            return NotImplemented
        return self + (-1.0) * other

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        herm = self.hermitian and np.isreal(c)
        pos = self.positive and herm and np.real(c) >= 0
        return MultiSiteOperator._unchecked(self.support, self.matrix * c, herm, pos)

    __rmul__ = __mul__

    def __neg__(self):
        return -1.0 * self

    def __repr__(self):
        flags = "".join(f for f, on in (("H", self.hermitian), ("P", self.positive)) if on)
        return f"MultiSiteOperator(sites={self.sites}, dims={self.dims}, flags={flags or '-'})"


def operator(matrix, sites, dims=2, hermitian=False, positive=False) -> MultiSiteOperator:
    """Construct from plain integer site labels."""
    return MultiSiteOperator(_as_sites(sites, dims), matrix, hermitian, positive)


def identity(sites, dims=2) -> MultiSiteOperator:
    support = _as_sites(sites, dims)
    dim = int(np.prod([s.dim for s in support]))
    return MultiSiteOperator._unchecked(support, np.eye(dim), True, True)


def union_support(*supports: Sequence[SiteId]) -> tuple[SiteId, ...]:
    """Union of supports in canonical (ascending index) order."""
    seen: dict[int, SiteId] = {}
    for sup in supports:
        for s in sup:
            prev = seen.get(s.index)
            if prev is not None and prev.dim != s.dim:
                raise SupportError(f"site {s.index} appears with dims {prev.dim} and {s.dim}")
            seen[s.index] = s
    return tuple(seen[k] for k in sorted(seen))


def embed(op: MultiSiteOperator, target, dim: int | None = None) -> MultiSiteOperator:
    """Extend ``op`` by identities to ``target`` and permute to its order.

    ``target`` may mix :class:`SiteId` and integer labels; integer labels not
    in the operator's support get dimension ``dim`` (default: the dimension
    of the operator's first site).
    """
    known = {s.index: s for s in op.support}
    default = op.support[0].dim if dim is None else dim
    target = _as_sites(
        [t if isinstance(t, SiteId) else known.get(int(t), SiteId(int(t), default)) for t in target]
    )
    tindex = {s.index: s for s in target}
    for s in op.support:
        if s.index not in tindex:
            raise SupportError(f"target is missing site {s.index} of the operator")
        if tindex[s.index].dim != s.dim:
            raise SupportError(f"site {s.index} dimension mismatch")
    if target == op.support:
        return op
    extra = [s for s in target if s.index not in known]
    n_extra = int(np.prod([s.dim for s in extra])) if extra else 1
    full = np.kron(op.matrix, np.eye(n_extra)) if extra else op.matrix
    current = list(op.support) + extra
    n = len(current)
    dims = [s.dim for s in current]
    perm = [current.index(s) for s in target]
    size = full.shape[0]
    tensor = full.reshape(dims + dims).transpose(perm + [p + n for p in perm])
    return MultiSiteOperator._unchecked(target, tensor.reshape(size, size), op.hermitian, op.positive)


def _from_eig(vals, vecs):
    return (vecs * vals) @ vecs.conj().T


def _offdiag_free(m) -> bool:
    return not np.count_nonzero(m - np.diag(np.diag(m)))


def herm_exp(H: MultiSiteOperator, beta: float = 1.0) -> MultiSiteOperator:
    """``exp(-beta H)`` for Hermitian ``H``."""
    if not H.hermitian:
        raise ContractError("herm_exp needs a hermitian operator")
    if _offdiag_free(H.matrix):
        d = np.real(np.diag(H.matrix))
        return MultiSiteOperator._unchecked(H.support, np.diag(np.exp(-beta * d)), True, True)
    vals, vecs = np.linalg.eigh(H.matrix)
    return MultiSiteOperator._unchecked(H.support, _from_eig(np.exp(-beta * vals), vecs), True, True)


def _floored_log(vals, floor=LOG_FLOOR, clamp=True):
    top = vals.max()
    if not top > 0:
        raise SingularityError("operator has no positive eigenvalue")
    eps = floor * top
    if vals.min() < eps:
        if not clamp:
            raise SingularityError(f"eigenvalue {vals.min():.3e} below floor {eps:.3e}")
        vals = np.maximum(vals, eps)
    return np.log(vals)


def herm_log(A: MultiSiteOperator, floor: float = LOG_FLOOR, clamp: bool = True) -> MultiSiteOperator:
    """Principal logarithm of a positive operator.

    Eigenvalues below ``floor * max_eigenvalue`` are raised to that value
    first; with ``clamp=False`` they raise :class:`SingularityError` instead.
    """
    if not A.hermitian:
        raise ContractError("herm_log needs a positive operator")
    if _offdiag_free(A.matrix):
        d = np.real(np.diag(A.matrix))
        return MultiSiteOperator._unchecked(A.support, np.diag(_floored_log(d, floor, clamp)), True)
    vals, vecs = np.linalg.eigh(A.matrix)
    return MultiSiteOperator._unchecked(A.support, _from_eig(_floored_log(vals, floor, clamp), vecs), True)


def exp_normalized(K: MultiSiteOperator) -> tuple[MultiSiteOperator, float]:
    """``exp(K) / Tr exp(K)`` for Hermitian ``K``, plus ``log Tr exp(K)``.

    Works in shifted form so that large exponents do not overflow.
    """
    m = K.matrix
    if _offdiag_free(m):
        d = np.real(np.diag(m))
        shift = d.max()
        w = np.exp(d - shift)
        tr = w.sum()
        return MultiSiteOperator._unchecked(K.support, np.diag(w / tr), True, True), shift + np.log(tr)
    vals, vecs = np.linalg.eigh(m)
    shift = vals[-1]
    w = np.exp(vals - shift)
    tr = w.sum()
    return MultiSiteOperator._unchecked(K.support, _from_eig(w / tr, vecs), True, True), shift + np.log(tr)


def _graded_left_singular(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Singular values and left vectors of a column-graded wide matrix ``F``.

    Real input goes through LAPACK's preconditioned Jacobi SVD, which keeps
    high relative accuracy when ``F`` is a well-conditioned matrix times a
    diagonal scaling.  Complex input falls back to the ordinary SVD.
    """
    if np.iscomplexobj(F):
        U, s, _ = np.linalg.svd(F, full_matrices=False)
        return s, U
    sva, _, v, work, _, info = lapack.dgejsv(
        np.ascontiguousarray(F.T), joba=4, jobu=3, jobv=0, jobr=1, jobt=0, jobp=1
    )
    if info != 0:
        U, s, _ = np.linalg.svd(F, full_matrices=False)
        return s, U
    return sva * (work[0] / work[1]), v


@dataclass(frozen=True)
class TracedExp:
    rho: MultiSiteOperator
    log_rho: MultiSiteOperator
    log_trace: float


def traced_exp(K: MultiSiteOperator, traced=()) -> TracedExp:
    """``rho = Tr_traced exp(K) / Tr exp(K)`` together with ``log rho``.

    ``log rho`` is accurate even when the spectrum of ``rho`` spans far more
    than the sixteen decades a dense matrix can hold: ``exp(K)`` is kept as
    a graded factor ``F F^T`` and the trace acts on the factor's columns.
    """
    if not K.hermitian:
        raise ContractError("traced_exp needs a hermitian exponent")
    traced = {int(t) for t in traced}
    if traced - set(K.sites):
        raise SupportError(f"cannot trace {sorted(traced - set(K.sites))}: not in support")
    kept = tuple(s for s in K.support if s.index not in traced)
    if not kept:
        raise SupportError("cannot trace out every site")
    dims = K.dims
    tr_axes = [k for k, s in enumerate(K.support) if s.index in traced]
    keep_axes = [k for k, s in enumerate(K.support) if s.index not in traced]
    dk = int(np.prod([dims[k] for k in keep_axes]))
    m = K.matrix
    if _offdiag_free(m):
        d = np.real(np.diag(m)).reshape(dims)
        d = np.moveaxis(d, tr_axes, range(len(tr_axes))).reshape(-1, dk)
        logs = special.logsumexp(d, axis=0)
        log_tr = float(special.logsumexp(logs))
        logs = logs - log_tr
        return TracedExp(
            MultiSiteOperator._unchecked(kept, np.diag(np.exp(logs)), True, True),
            MultiSiteOperator._unchecked(kept, np.diag(logs), True),
            log_tr,
        )
    vals, vecs = np.linalg.eigh(m)
    log_tr = float(special.logsumexp(vals))
    lv = vals - log_tr
    if not traced:
        return TracedExp(
            MultiSiteOperator._unchecked(kept, _from_eig(np.exp(lv), vecs), True, True),
            MultiSiteOperator._unchecked(kept, _from_eig(lv, vecs), True),
            log_tr,
        )
    # columns below ~e^-700 cannot be represented and carry no weight
    live = lv > 2.0 * np.log(np.finfo(float).tiny) + 1.0
    F = vecs[:, live] * np.exp(0.5 * lv[live])
    n = F.shape[1]
    F = F.reshape(tuple(dims) + (n,))
    F = np.moveaxis(F, keep_axes, range(len(keep_axes))).reshape(dk, -1)
    if F.shape[1] < dk:
        F = np.hstack([F, np.zeros((dk, dk - F.shape[1]), dtype=F.dtype)])
    s, U = _graded_left_singular(F)
    s2 = s**2
    logs = 2.0 * np.log(np.maximum(s, np.finfo(float).tiny))
    return TracedExp(
        MultiSiteOperator._unchecked(kept, _from_eig(s2, U), True, True),
        MultiSiteOperator._unchecked(kept, _from_eig(logs, U), True),
        log_tr,
    )


def odot(A: MultiSiteOperator, B: MultiSiteOperator, *more: MultiSiteOperator) -> MultiSiteOperator:
    """``exp(log A + log B + ...)`` on the union of the supports.

    Diagonal inputs commute, and are multiplied directly.
    """
    ops = (A, B) + more
    for op in ops:
        if not op.positive:
            raise ContractError("odot needs positive operators")
    target = union_support(*(op.support for op in ops))
    embedded = [embed(op, target) for op in ops]
    if all(_offdiag_free(op.matrix) for op in embedded):
        d = np.ones(embedded[0].dim)
        for op in embedded:
            d = d * np.real(np.diag(op.matrix))
        return MultiSiteOperator._unchecked(target, np.diag(d), True, True)
    K = sum(herm_log(op).matrix for op in embedded)
    vals, vecs = np.linalg.eigh(K)
    return MultiSiteOperator._unchecked(target, _from_eig(np.exp(vals), vecs), True, True)


def partial_trace(A: MultiSiteOperator, traced, normalized: bool = False) -> MultiSiteOperator:
    """Trace out the sites in ``traced``.

    With ``normalized=True`` the result is divided by the dimension of the
    traced sites, so that the identity maps to the identity.
    """
    traced_idx = {t.index if isinstance(t, SiteId) else int(t) for t in traced}
    sites = A.sites
    missing = traced_idx - set(sites)
    if missing:
        raise SupportError(f"cannot trace sites {sorted(missing)}: not in support {sites}")
    if not traced_idx:
        return A
    keep = [k for k, s in enumerate(sites) if s not in traced_idx]
    gone = [k for k, s in enumerate(sites) if s in traced_idx]
    dims = list(A.dims)
    n = len(sites)
    dk = int(np.prod([dims[k] for k in keep])) if keep else 1
    dg = int(np.prod([dims[k] for k in gone]))
    t = A.matrix.reshape(dims + dims)
    t = t.transpose(keep + gone + [k + n for k in keep] + [k + n for k in gone]).reshape(dk, dg, dk, dg)
    out = np.einsum("aibi->ab", t)
    if normalized:
        out = out / dg
    support = tuple(A.support[k] for k in keep)
    return MultiSiteOperator._unchecked(support, out, A.hermitian, A.positive)


def keep_sites(A: MultiSiteOperator, kept, normalized: bool = False) -> MultiSiteOperator:
    """Partial trace over everything not in ``kept``."""
    kept = {k.index if isinstance(k, SiteId) else int(k) for k in kept}
    return partial_trace(A, [s for s in A.sites if s not in kept], normalized=normalized)


def normalize(A: MultiSiteOperator) -> tuple[MultiSiteOperator, float]:
    """Scale ``A`` to unit trace; return the scaled operator and ``log Tr A``."""
    tr = float(np.real(np.trace(A.matrix)))
    if not tr > 0:
        raise SingularityError(f"cannot normalise operator with trace {tr}")
    return MultiSiteOperator._unchecked(A.support, A.matrix / tr, A.hermitian, A.positive), float(np.log(tr))


def traceless(A: MultiSiteOperator) -> MultiSiteOperator:
    mat = A.matrix - np.trace(A.matrix) / A.dim * np.eye(A.dim)
    return MultiSiteOperator._unchecked(A.support, mat, A.hermitian, False)


def hermitian_part(A: MultiSiteOperator) -> MultiSiteOperator:
    return MultiSiteOperator._unchecked(A.support, 0.5 * (A.matrix + A.matrix.conj().T), True)


def expectation(rho: MultiSiteOperator, op: MultiSiteOperator) -> float:
    """``Re Tr(rho op)``, with ``op`` reduced against ``rho`` on its own support."""
    if set(op.sites) - set(rho.sites):
        raise SupportError(f"operator sites {op.sites} not inside state sites {rho.sites}")
    red = keep_sites(rho, op.sites)
    red = embed(red, op.support)
    return float(np.real(np.sum(red.matrix.T * op.matrix)))


def operator_norm(A: MultiSiteOperator) -> float:
    if A.hermitian:
        vals = np.linalg.eigvalsh(A.matrix)
        return float(max(abs(vals[0]), abs(vals[-1])))
    return float(np.linalg.norm(A.matrix, 2))


def trace_distance(A: MultiSiteOperator, B: MultiSiteOperator) -> float:
    target = union_support(A.support, B.support)
    diff = embed(A, target).matrix - embed(B, target).matrix
    return 0.5 * float(np.abs(np.linalg.eigvalsh(diff)).sum())


@dataclass(frozen=True)
class CumulantSeries:
    """``V = sum_j V^j`` with ``V^j`` on the first ``j`` sites of ``order``."""

    cumulants: tuple[MultiSiteOperator, ...]
    order: tuple[int, ...]
    norms: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if not self.norms:
            object.__setattr__(self, "norms", tuple(operator_norm(c) for c in self.cumulants))

    def __len__(self):
        return len(self.cumulants)

    def __getitem__(self, j):
        return self.cumulants[j]


def cumulant_decompose(V: MultiSiteOperator, order: Sequence[int] | None = None) -> CumulantSeries:
    """Split ``V`` into pieces ``V^j`` supported on the first ``j`` sites of ``order``.

    ``order`` starts at the site nearest the traced-out region and defaults
    to the support order.  Each piece is the normalised partial trace of what
    the lower pieces leave over, so the embedded pieces sum back to ``V``.
    """
    if not V.hermitian:
        raise ContractError("cumulant_decompose needs a hermitian operator")
    order = tuple(V.sites) if order is None else tuple(int(s) for s in order)
    if sorted(order) != sorted(V.sites):
        raise SupportError("order must be a permutation of the support")
    cumulants = []
    residual = V
    for j in range(1, len(order) + 1):
        piece = hermitian_part(keep_sites(residual, order[:j], normalized=True))
        piece = embed(piece, [s for s in V.support if s.index in order[:j]])
        cumulants.append(piece)
        residual = residual - embed(piece, V.support)
    return CumulantSeries(tuple(cumulants), order)


def von_neumann_entropy(rho: MultiSiteOperator) -> float:
    vals = np.linalg.eigvalsh(rho.matrix)
    vals = vals[vals > 1e-300]
    return float(-np.sum(vals * np.log(vals)))


def conditional_mutual_information(rho: MultiSiteOperator, a, b, c) -> float:
    """``I(a:c|b) = S(ab) + S(bc) - S(b) - S(abc)`` from eigenvalue entropies.

    Values down to -1e-9 are treated as rounding and clamped to zero.
    """
    a, b, c = ([int(s) for s in x] for x in (a, b, c))
    if set(a) & set(b) or set(a) & set(c) or set(b) & set(c):
        raise SupportError("regions must be disjoint")
    if sorted(a + b + c) != sorted(rho.sites):
        raise SupportError("regions must cover the support")
    tr = float(np.real(np.trace(rho.matrix)))
    if abs(tr - 1.0) > 1e-10:
        raise NormalizationError(f"state has trace {tr}")

    def S(region):
        return von_neumann_entropy(keep_sites(rho, region)) if region else 0.0

    val = S(a + b) + S(b + c) - S(b) - S(a + b + c)
    return max(val, 0.0) if val > -1e-9 else val
