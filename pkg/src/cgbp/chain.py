"""Sliding-window quantum belief propagation on chains.

A message is a unit-trace positive operator on an ``l``-site window.  One
update adds the next edge with the odot-product and traces out the first
site of the window.  The classical special case (diagonal edge terms) is the
transfer-matrix recursion and is handled by the same code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .operators import (
    LOG_FLOOR,
    CumulantSeries,
    MultiSiteOperator,
    SiteId,
    SupportError,
    cumulant_decompose,
    embed,
    exp_normalized,
    expectation,
    traced_exp,
    herm_log,
    keep_sites,
    operator,
    trace_distance,
    traceless,
    union_support,
)


STALL_FACTOR = 1e3
STALL_WINDOW = 25


@dataclass(frozen=True)
class BpConfig:
    l: int
    beta: float
    tol: float = 1e-12
    max_iter: int | None = None
    belief_max_dim: int = 2048

    def __post_init__(self):
        if self.l < 2:
            raise ValueError(f"window size must be at least 2, got {self.l}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")

    def overlap(self, d: int) -> int:
        """Sites shared by the left and right windows of the belief.

        Disjoint windows joined by one bond when ``d^(2l)`` fits in
        ``belief_max_dim``; otherwise the smallest overlap that fits.
        """
        n = 2 * self.l
        while n > self.l and d**n > self.belief_max_dim:
            n -= 1
        return 2 * self.l - n

    def iteration_cap(self, h_norm: float = 1.0) -> int:
        if self.max_iter is not None:
            return self.max_iter
        # ten correlation lengths, with beta * |h| as the length estimate
        return max(500, int(np.ceil(10 * self.beta * h_norm)))


@dataclass(frozen=True)
class Message:
    """Unit-trace message with its accumulated log-normalisation.

    ``log_op`` is ``log(op)`` computed to high relative accuracy on the whole
    spectrum.  ``bare`` holds the edge terms lying inside the window.
    """

    op: MultiSiteOperator
    log_norm: float = 0.0
    bare: tuple[MultiSiteOperator, ...] = ()
    converged: bool = True
    iterations: int = 0
    log_norm_step: float = float("nan")
    log_op: MultiSiteOperator | None = None

    @property
    def window(self) -> tuple[int, ...]:
        return self.op.sites

    def bare_sum(self) -> MultiSiteOperator:
        total = 0.0 * MultiSiteOperator._unchecked(
            self.op.support, np.zeros((self.op.dim, self.op.dim)), True
        )
        for h in self.bare:
            total = total + h
        return embed(total, self.op.support)

    def relabel(self, mapping) -> "Message":
        return replace(
            self,
            op=_canonical(self.op.relabel(mapping)),
            bare=tuple(_canonical(h.relabel(mapping)) for h in self.bare),
            log_op=None if self.log_op is None else _canonical(self.log_op.relabel(mapping)),
        )


@dataclass(frozen=True)
class BpResult:
    belief: MultiSiteOperator
    observables: dict[str, float]
    error_estimate: float
    converged: bool
    iterations: int
    left: Message | None = None
    right: Message | None = None
    cumulants: CumulantSeries | None = None
    free_energy: float = float("nan")


def _canonical(op: MultiSiteOperator) -> MultiSiteOperator:
    return embed(op, sorted(op.support, key=lambda s: s.index))


def message_log(m: Message, beta: float, floor: float = LOG_FLOOR) -> MultiSiteOperator:
    """``log(m.op)``, taken from ``m.log_op`` when the message carries it.

    Otherwise eigenvalues below ``floor * max`` carry no usable information.
    On that subspace the logarithm is replaced by ``-beta`` times the bare
    window Hamiltonian plus the mean effective potential of the resolved
    subspace.  Without floored eigenvalues this is the plain log.
    """
    if m.log_op is not None:
        return m.log_op
    mat = m.op.matrix
    if not m.bare or not np.count_nonzero(mat - np.diag(np.diag(mat))):
        return herm_log(m.op, floor)
    vals, vecs = np.linalg.eigh(mat)
    good = vals >= floor * vals[-1]
    if good.all():
        return herm_log(m.op, floor)
    P = vecs[:, good]
    H = m.bare_sum().matrix
    PHP = P.conj().T @ H @ P
    # mean of log(m) + beta*H over the resolved subspace
    shift = (np.sum(np.log(vals[good])) + beta * np.real(np.trace(PHP))) / good.sum()
    proj = P @ P.conj().T
    resolved = (P * np.log(vals[good])) @ P.conj().T
    completed = resolved - beta * (H - P @ PHP @ P.conj().T) + shift * (np.eye(len(vals)) - proj)
    completed = 0.5 * (completed + completed.conj().T)
    return MultiSiteOperator._unchecked(m.op.support, completed, True)


def uniform_message(window, dims=2, bare=()) -> Message:
    support = tuple(SiteId(int(s), dims) if not isinstance(s, SiteId) else s for s in window)
    dim = int(np.prod([s.dim for s in support]))
    op = MultiSiteOperator._unchecked(support, np.eye(dim) / dim, True, True)
    log_op = MultiSiteOperator._unchecked(support, -np.log(dim) * np.eye(dim), True)
    return Message(op, float(np.log(dim)), tuple(bare), log_op=log_op)


def message_update(m_prev: Message, h: MultiSiteOperator, config: BpConfig) -> Message:
    """Add edge ``h`` on ``(i, i+1)`` to a message ending at ``i``; drop the first site.

    The window stays at ``config.l`` sites once it is full; shorter windows
    (the start of a finite chain) grow by one site instead.
    """
    i = m_prev.window[-1]
    if tuple(h.sites) != (i, i + 1):
        raise SupportError(f"edge {h.sites} does not extend a window ending at site {i}")
    beta = config.beta
    target = union_support(m_prev.op.support, h.support)
    K = embed(message_log(m_prev, beta), target).matrix - beta * embed(h, target).matrix
    bare = m_prev.bare + (h,)
    dropped = [target[0].index] if len(target) > config.l else []
    res = traced_exp(MultiSiteOperator._unchecked(target, K, True), dropped)
    bare = tuple(b for b in bare if not set(b.sites) & set(dropped))
    return Message(
        res.rho, m_prev.log_norm + res.log_trace, bare, log_norm_step=res.log_trace, log_op=res.log_rho
    )


def _shift_left(m: Message) -> Message:
    return m.relabel(lambda k: k - 1)


def fixed_point(h: MultiSiteOperator, config: BpConfig, init: Message | None = None) -> Message:
    """Iterate the update with a translation-invariant edge template.

    The message lives on sites ``0..l-1`` with the traced-out half chain to
    the left of site 0.  Convergence is measured by the trace distance
    between successive normalised messages.
    """
    l = config.l
    d = h.dims[0]
    template = h.relabel({h.sites[0]: 0, h.sites[1]: 1})
    window_edges = tuple(template.relabel(lambda k, s=s: k + s) for s in range(l - 1))
    if init is None:
        m = uniform_message(range(l), d, window_edges)
    else:
        if init.window != tuple(range(l)):
            raise SupportError("warm-start message must live on sites 0..l-1")
        m = replace(init, bare=window_edges)
    step = template.relabel(lambda k: k + l - 1)
    cap = config.iteration_cap(float(np.abs(np.linalg.eigvalsh(template.matrix)).max()))
    dist = best = np.inf
    since_best = 0
    it = 0
    converged = False
    while it < cap:
        new = _shift_left(message_update(m, step, config))
        it += 1
        dist = trace_distance(new.op, m.op)
        m = new
        if dist <= config.tol:
            converged = True
            break
        if dist < 0.5 * best:
            best, since_best = dist, 0
        else:
            since_best += 1
        # large windows stall at a rounding floor slightly above tol
        if best <= STALL_FACTOR * config.tol and since_best >= STALL_WINDOW:
            converged = True
            break
    return replace(m, converged=converged, iterations=it)


def reflect_template(h: MultiSiteOperator) -> MultiSiteOperator:
    a, b = h.sites
    return _canonical(h.relabel({a: b, b: a}))


def _reflect_message(m: Message, l: int) -> Message:
    return m.relabel(lambda k: l - 1 - k)


def belief(
    m_left: Message, m_right: Message, window_terms, config: BpConfig | float
) -> MultiSiteOperator:
    """Two-sided belief ``e^{-beta V_left} (.) e^{-beta H_window} (.) e^{-beta V_right}``.

    Each message is ``exp(-beta (H_bare + V))`` on its own window; its bare
    part is stripped so that every edge in ``window_terms`` (the edges inside
    the union of the two windows) is counted exactly once.
    """
    beta = config.beta if isinstance(config, BpConfig) else float(config)
    target = union_support(m_left.op.support, m_right.op.support)
    tsites = set(s.index for s in target)
    K = np.zeros((int(np.prod([s.dim for s in target])),) * 2, dtype=m_left.op.matrix.dtype)
    for m in (m_left, m_right):
        inside = set(m.window)
        bare = [h for h in window_terms if set(h.sites) <= inside]
        K = K + embed(message_log(m, beta), target).matrix
        for h in bare:
            K = K + beta * embed(h, target).matrix
    for h in window_terms:
        if not set(h.sites) <= tsites:
            raise SupportError(f"window term on {h.sites} lies outside the belief window")
        K = K - beta * embed(h, target).matrix
    rho, _ = exp_normalized(MultiSiteOperator._unchecked(target, K, True))
    return rho


def central_bonds(l: int) -> list[tuple[int, int]]:
    bonds = {((l - 2) // 2, (l - 2) // 2 + 1), ((l - 1) // 2, (l - 1) // 2 + 1)}
    return sorted(b for b in bonds if b[1] < l)


def central_sites(l: int) -> list[int]:
    return sorted({(l - 1) // 2, l // 2})


def observables(rho: MultiSiteOperator, h: MultiSiteOperator) -> dict[str, float]:
    """Energy per bond and, for spin-1/2 sites, magnetisations and ZZ correlator.

    Bond quantities are averaged over the central bond(s) of the window and
    site quantities over the central site(s).
    """
    l = len(rho.sites)
    base = rho.sites[0]
    tmpl = h.relabel({h.sites[0]: 0, h.sites[1]: 1})
    bonds = central_bonds(l)
    out = {
        "energy": float(
            np.mean([expectation(rho, tmpl.relabel(lambda k, a=a: k + a + base)) for a, _ in bonds])
        )
    }
    if all(d == 2 for d in rho.dims):
        from .models import PAULI

        for name, P in (("sz", PAULI["Z"]), ("sx", PAULI["X"])):
            out[name] = float(
                np.mean([expectation(rho, operator(P, (s + base,), hermitian=True)) for s in central_sites(l)])
            )
        zz = np.kron(PAULI["Z"], PAULI["Z"])
        out["szsz"] = float(
            np.mean([expectation(rho, operator(zz, (a + base, b + base), hermitian=True)) for a, b in bonds])
        )
    return out


def effective_potential(m: Message, config: BpConfig | float) -> MultiSiteOperator:
    """Traceless part of ``-(1/beta) log m - H_bare(window)``."""
    beta = config.beta if isinstance(config, BpConfig) else float(config)
    if not m.bare:
        raise ValueError("message carries no bare window terms")
    V = (-1.0 / beta) * message_log(m, beta) - m.bare_sum()
    return traceless(MultiSiteOperator._unchecked(V.support, 0.5 * (V.matrix + V.matrix.conj().T), True))


NOISE_RTOL = 1e-12
ROUNDING_RTOL = 1e-13


def error_estimate(
    cs: CumulantSeries, beta: float, rho: MultiSiteOperator | None = None, mode: str = "norm"
) -> float:
    """Extrapolated size of the first discarded cumulant, ``beta a_l (a_l / a_{l-1})``.

    With ``mode="norm"`` the sizes ``a_j`` are operator norms ``|V^j|``; with
    ``mode="expectation"`` they are ``|<V^j>|`` in ``rho`` and fall back to
    norms when the expectations underflow.  Cumulants whose norm is at
    rounding level count as zero.
    """
    if len(cs) < 2:
        raise ValueError("error estimate needs at least two cumulants")
    if mode not in ("norm", "expectation"):
        raise ValueError(f"unknown error-estimate mode {mode!r}")
    scale = max(1.0, max(cs.norms))
    live = [n > NOISE_RTOL * scale for n in cs.norms]
    norms = [n if ok else 0.0 for n, ok in zip(cs.norms, live)]
    if mode == "expectation":
        if rho is None:
            raise ValueError("expectation mode needs a state")
        vals = [abs(expectation(rho, c)) if ok else 0.0 for c, ok in zip(cs.cumulants, live)]
    else:
        vals = norms
    a, b = vals[-1], vals[-2]
    if not live[-1]:
        return 0.0
    if b < 1e-300:
        a, b = norms[-1], norms[-2]
        if b < 1e-300:
            return float("inf")
    return float(beta * a * (a / b))


def rounding_floor(h: MultiSiteOperator) -> float:
    """Smallest energy error double precision can resolve for edge term ``h``."""
    return ROUNDING_RTOL * max(1.0, float(np.abs(h.matrix).sum(axis=1).max()))


def message_cumulants(m: Message, config: BpConfig | float, from_right: bool = False) -> CumulantSeries:
    V = effective_potential(m, config)
    order = list(V.sites)
    if from_right:
        order = order[::-1]
    return cumulant_decompose(V, order)


def _window_terms(h: MultiSiteOperator, l: int) -> list[MultiSiteOperator]:
    tmpl = h.relabel({h.sites[0]: 0, h.sites[1]: 1})
    return [tmpl.relabel(lambda k, s=s: k + s) for s in range(l - 1)]


@dataclass
class ChainWarmStart:
    left: Message | None = None
    right: Message | None = None


def run_chain_bp(
    h: MultiSiteOperator,
    config: BpConfig,
    warm: ChainWarmStart | BpResult | None = None,
    estimate: str = "norm",
) -> BpResult:
    """Left and right fixed points, belief on the window, observables, error estimate."""
    left0 = warm.left if warm is not None else None
    right0 = warm.right if warm is not None else None
    l = config.l
    left = fixed_point(h, config, init=left0)
    h_ref = reflect_template(h)
    symmetric = np.allclose(h_ref.matrix, h.matrix, rtol=0, atol=1e-13 * max(1.0, np.abs(h.matrix).max()))
    if symmetric:
        right_ref = left
    else:
        init = _reflect_message(right0, l) if right0 is not None else None
        right_ref = fixed_point(h_ref, config, init=init)
    right = _reflect_message(right_ref, l)
    shift = l - config.overlap(h.dims[0])
    terms = _window_terms(h, l + shift)
    rho = belief(left, right.relabel(lambda k: k + shift), terms, config)
    obs = observables(rho, h)
    cs_left = message_cumulants(left, config)
    cs_right = message_cumulants(right, config, from_right=True)
    err = error_estimate(cs_left, config.beta, rho, estimate) + error_estimate(
        cs_right, config.beta, rho, estimate
    )
    err += rounding_floor(h)
    return BpResult(
        belief=rho,
        observables=obs,
        error_estimate=err,
        converged=left.converged and right_ref.converged,
        iterations=max(left.iterations, right_ref.iterations),
        left=left,
        right=right,
        cumulants=cs_left,
        free_energy=-left.log_norm_step / config.beta,
    )


def classical_message_update(m_prev: np.ndarray, h_energy: np.ndarray, beta: float) -> np.ndarray:
    """``m(x_{i+1}) = sum_{x_i} exp(-beta h(x_i, x_{i+1})) m_prev(x_i)``."""
    return np.exp(-beta * np.asarray(h_energy)).T @ np.asarray(m_prev)


@dataclass
class FiniteChainResult:
    log_z: float
    energy: float
    bond_energies: list[float]
    beliefs: dict[int, MultiSiteOperator] = field(default_factory=dict)

    def marginal(self, sites) -> MultiSiteOperator:
        """Reduced belief on ``sites`` from the most central window containing them."""
        sites = sorted(int(s) for s in sites)
        best = None
        for start, rho in self.beliefs.items():
            w = rho.sites
            if sites[0] >= w[0] and sites[-1] <= w[-1]:
                slack = min(sites[0] - w[0], w[-1] - sites[-1])
                if best is None or slack > best[0]:
                    best = (slack, rho)
        if best is None:
            raise SupportError(f"no belief window contains sites {sites}")
        return keep_sites(best[1], sites)


def _sweep(edges: list[MultiSiteOperator], first_site: SiteId, config: BpConfig) -> list[Message]:
    """Messages arriving at each site when sweeping along ``edges`` in order."""
    m = uniform_message([first_site], first_site.dim)
    out = [m]
    for h in edges:
        m = message_update(m, h, config)
        out.append(m)
    return out


def finite_chain_bp(graph, config: BpConfig) -> FiniteChainResult:
    """BP on an open chain: both sweeps, window beliefs, energy and ``log Z``.

    With ``l >= N - 1`` no approximation is made and the result is exact.
    """
    n = graph.n_sites
    edges = sorted((e.op for e in graph.edges), key=lambda op: op.sites)
    left = _sweep(edges, graph.sites[0], config)
    flip = {k: n - 1 - k for k in range(n)}
    rev_edges = [_canonical(op.relabel(flip)) for op in reversed(edges)]
    right_rev = _sweep(rev_edges, SiteId(0, graph.sites[-1].dim), config)
    right = [m.relabel(flip) for m in reversed(right_rev)]
    # left[k]: message arriving at site k from the left, right[k]: from the right
    w = min(config.l, n)
    beliefs = {}
    for a in range(n - w + 1):
        b = a + w - 1
        window = list(range(a, b + 1))
        mL = _restrict(left[b], window, config.beta)
        mR = _restrict(right[a], window, config.beta)
        terms = [op for op in edges if set(op.sites) <= set(window)]
        beliefs[a] = belief(mL, mR, terms, config)
    bond_energies = []
    for k, op in enumerate(edges):
        a = min(max(k - (w // 2 - 1), 0), n - w)
        bond_energies.append(expectation(beliefs[a], op))
    return FiniteChainResult(
        log_z=left[-1].log_norm,
        energy=float(np.sum(bond_energies)),
        bond_energies=bond_energies,
        beliefs=beliefs,
    )


def _restrict(m: Message, window, beta: float) -> Message:
    extra = [s for s in m.window if s not in window]
    if not extra:
        return m
    res = traced_exp(message_log(m, beta), extra)
    bare = tuple(h for h in m.bare if set(h.sites) <= set(window))
    return replace(m, op=res.rho, bare=bare, log_op=res.log_rho)
