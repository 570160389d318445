"""Quantum belief propagation on the degree-3 Cayley tree.

The message from node ``v`` to its parent ``p`` lives on ``p``, ``v`` and
the descendants of ``v`` down to ``keep`` generations.  It is built by
merging the messages of ``v``'s children with the edge ``(p, v)`` and tracing
out everything deeper.  Leaves send ``exp(-beta h)`` on their edge.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .models import PAULI, InteractionGraph, cayley_glass, sample_boundary_fields
from .operators import (
    MultiSiteOperator,
    cumulant_decompose,
    embed,
    expectation,
    keep_sites,
    operator,
    traced_exp,
    traceless,
    union_support,
)
from .chain import NOISE_RTOL, error_estimate


class ArityError(ValueError):
    pass


@dataclass(frozen=True)
class TreeMessage:
    op: MultiSiteOperator
    log_op: MultiSiteOperator
    log_norm: float
    node: int
    parent: int
    bare: tuple[MultiSiteOperator, ...] = ()

    def potential(self, beta: float) -> MultiSiteOperator:
        """Traceless effective potential ``-(1/beta) log m - H_bare``."""
        H = sum((embed(h, self.op.support).matrix for h in self.bare), np.zeros_like(self.op.matrix))
        V = -self.log_op.matrix / beta - H
        V = 0.5 * (V + V.conj().T)
        return traceless(MultiSiteOperator._unchecked(self.op.support, V, True))


def tree_message(
    children: list[TreeMessage],
    h: MultiSiteOperator,
    beta: float,
    generation,
    keep: int = 1,
) -> TreeMessage:
    """Message along edge ``h = (parent, node)`` given the node's incoming messages.

    ``generation`` maps a site label to its distance from the tree centre.
    Sites more than ``keep`` generations below the node are traced out.
    """
    parent, node = h.sites
    if generation[node] < generation[parent]:
        parent, node = node, parent
    for c in children:
        if c.parent != node:
            raise ValueError(f"message from {c.node} is not addressed to node {node}")
    target = union_support(h.support, *(c.op.support for c in children))
    K = -beta * embed(h, target).matrix
    for c in children:
        K = K + embed(c.log_op, target).matrix
    g0 = generation[node]
    traced = [s.index for s in target if generation[s.index] - g0 > keep]
    res = traced_exp(MultiSiteOperator._unchecked(target, K, True), traced)
    kept = set(res.rho.sites)
    bare = tuple(b for c in children for b in c.bare if set(b.sites) <= kept) + (h,)
    log_norm = res.log_trace + sum(c.log_norm for c in children)
    return TreeMessage(res.rho, res.log_rho, log_norm, node, parent, bare)


def leaf_message(h: MultiSiteOperator, beta: float, generation) -> TreeMessage:
    return tree_message([], h, beta, generation)


@dataclass(frozen=True)
class CentralBelief:
    state: MultiSiteOperator
    log_z: float

    def reduced(self, sites) -> MultiSiteOperator:
        return keep_sites(self.state, sites)


def central_merge(*msgs: TreeMessage) -> CentralBelief:
    """Full merged state of the centre and everything its three messages keep."""
    if len(msgs) != 3:
        raise ArityError(f"the centre of a degree-3 tree takes 3 messages, got {len(msgs)}")
    centre = {m.parent for m in msgs}
    if len(centre) != 1:
        raise ValueError("messages are not addressed to the same node")
    target = union_support(*(m.op.support for m in msgs))
    K = sum(embed(m.log_op, target).matrix for m in msgs)
    res = traced_exp(MultiSiteOperator._unchecked(target, K, True))
    return CentralBelief(res.rho, res.log_trace + sum(m.log_norm for m in msgs))


def central_belief(*msgs: TreeMessage) -> MultiSiteOperator:
    """Unit-trace belief on the centre and its three neighbours."""
    merged = central_merge(*msgs)
    return merged.reduced([msgs[0].parent] + [m.node for m in msgs])


@dataclass
class TreeBpResult:
    sz: float
    log_z: float
    error_estimate: float
    belief: MultiSiteOperator
    messages: tuple[TreeMessage, ...] = field(default=())


def _message_error(m: TreeMessage, beta: float, state: MultiSiteOperator, generation) -> float:
    V = m.potential(beta)
    # cumulants start at the kept descendants (next to the traced region)
    order = sorted(V.sites, key=lambda s: -generation[s])
    cs = cumulant_decompose(V, order)
    if max(cs.norms) <= NOISE_RTOL:
        return 0.0
    return error_estimate(cs, beta, state)


def tree_bp(graph: InteractionGraph, beta: float, keep: int = 1) -> TreeBpResult:
    """Leaves-to-centre sweep on a Cayley-tree graph; returns the centre's ``<Z>``."""
    tree = graph.tree
    if tree is None:
        raise ValueError("graph has no tree structure")
    gen = tree.generation
    edge_of = {e.j: e.op for e in graph.edges}
    inbox: dict[int, list[TreeMessage]] = {}
    for g in range(tree.depth, 0, -1):
        for v in (k for k in range(tree.n_sites) if gen[k] == g):
            msg = tree_message(inbox.pop(v, []), edge_of[v], beta, gen, keep)
            inbox.setdefault(tree.parent[v], []).append(msg)
    msgs = tuple(inbox[0])
    merged = central_merge(*msgs)
    rho = merged.reduced([0] + [m.node for m in msgs])
    sz = expectation(rho, operator(PAULI["Z"], (0,), hermitian=True))
    err = sum(_message_error(m, beta, merged.state, gen) for m in msgs)
    return TreeBpResult(sz, merged.log_z, err, rho, msgs)


@dataclass(frozen=True)
class QuenchResult:
    q_ea: float
    stderr: float
    sz: tuple[float, ...]
    bp_error: float
    records: tuple[dict, ...]


def instance_seed(seed: int, k: int) -> int:
    """Independent, reproducible per-instance seed."""
    return int(np.random.SeedSequence([int(seed), int(k)]).generate_state(1)[0])


def _fields_digest(values: dict) -> str:
    arr = np.array([values[k] for k in sorted(values)], dtype="<f8")
    return hashlib.sha256(arr.tobytes()).hexdigest()


def _run_instance(args):
    B, T, depth, seed, k, keep = args
    s = instance_seed(seed, k)
    fields = sample_boundary_fields(s, cayley_glass(B, depth).tree)
    res = tree_bp(cayley_glass(B, depth, fields), 1.0 / T, keep)
    record = {
        "B": B,
        "T": T,
        "instance": k,
        "seed": s,
        "fields_sha256": _fields_digest(fields.values),
        "sz": res.sz,
        "bp_error": res.error_estimate,
    }
    return res.sz, res.error_estimate, record


def quench_average(
    B: float,
    T: float,
    depth: int,
    n_instances: int,
    seed: int,
    keep: int = 1,
    workers: int = 1,
) -> QuenchResult:
    """Edwards-Anderson order parameter ``[<Z_0>^2]`` over random boundary fields."""
    if n_instances < 1:
        raise ValueError("need at least one instance")
    if not T > 0:
        raise ValueError("temperature must be positive")
    jobs = [(float(B), float(T), int(depth), int(seed), k, int(keep)) for k in range(n_instances)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_run_instance, jobs))
    else:
        out = [_run_instance(j) for j in jobs]
    sz = np.array([o[0] for o in out])
    q = sz**2
    stderr = float(q.std(ddof=1) / np.sqrt(len(q))) if len(q) > 1 else 0.0
    return QuenchResult(
        q_ea=float(q.mean()),
        stderr=stderr,
        sz=tuple(float(x) for x in sz),
        bp_error=float(np.mean([o[1] for o in out])),
        records=tuple(o[2] for o in out),
    )


def records_jsonl(records) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
