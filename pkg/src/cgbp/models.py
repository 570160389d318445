"""Interaction graphs for the transverse-field Ising chain and Cayley-tree glass.

Edge terms are stored as Pauli polynomials on an ordered site pair, e.g.
``{"ZZ": 1.0, "XI": 0.5, "IX": 0.5}``.  One-body fields are folded into the
edges by splitting each site's field equally among its incident edges.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse

from .operators import MultiSiteOperator, SiteId, embed, operator

PAULI = {
    "I": np.eye(2),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "Y": np.array([[0.0, -1j], [1j, 0.0]]),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]]),
}

INFINITE = "inf"


def pauli(word: str) -> np.ndarray:
    out = np.ones((1, 1))
    for ch in word:
        out = np.kron(out, PAULI[ch])
    return out


def pauli_polynomial(terms: dict[str, float]) -> np.ndarray:
    words = list(terms)
    mat = sum(c * pauli(w) for w, c in terms.items()) if words else None
    if mat is None:
        raise ValueError("empty Pauli polynomial")
    return np.real_if_close(mat)


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    terms: dict[str, float]

    @cached_property
    def op(self) -> MultiSiteOperator:
        return operator(pauli_polynomial(self.terms), (self.i, self.j), hermitian=True)


@dataclass(frozen=True)
class CayleyTree:
    """Degree-3 tree grown ``depth`` generations out from site 0 (BFS numbering)."""

    depth: int

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("tree depth must be at least 1")

    @cached_property
    def parent(self) -> tuple[int, ...]:
        parent = [-1]
        frontier = [0]
        for gen in range(1, self.depth + 1):
            nxt = []
            for p in frontier:
                for _ in range(3 if gen == 1 else 2):
                    parent.append(p)
                    nxt.append(len(parent) - 1)
            frontier = nxt
        return tuple(parent)

    @cached_property
    def generation(self) -> tuple[int, ...]:
        gen = [0] * len(self.parent)
        for k in range(1, len(gen)):
            gen[k] = gen[self.parent[k]] + 1
        return tuple(gen)

    @cached_property
    def children(self) -> tuple[tuple[int, ...], ...]:
        kids: list[list[int]] = [[] for _ in self.parent]
        for k, p in enumerate(self.parent):
            if p >= 0:
                kids[p].append(k)
        return tuple(tuple(c) for c in kids)

    @property
    def n_sites(self) -> int:
        return len(self.parent)

    @property
    def boundary(self) -> tuple[int, ...]:
        return tuple(k for k, g in enumerate(self.generation) if g == self.depth)


@dataclass(frozen=True)
class BoundaryFieldConfig:
    values: dict[int, float]
    seed: int | None = None

    def __post_init__(self):
        for site, r in self.values.items():
            if abs(r) > 1.0:
                raise ValueError(f"boundary field {r} on site {site} outside [-1, 1]")

    def as_array(self) -> np.ndarray:
        return np.array([self.values[k] for k in sorted(self.values)])

    def flipped(self) -> "BoundaryFieldConfig":
        return BoundaryFieldConfig({k: -v for k, v in self.values.items()}, self.seed)


@dataclass(frozen=True)
class InteractionGraph:
    sites: tuple[SiteId, ...]
    edges: tuple[Edge, ...]
    geometry: str
    params: dict = field(default_factory=dict)
    tree: CayleyTree | None = None

    def __post_init__(self):
        labels = {s.index for s in self.sites}
        for e in self.edges:
            if e.i not in labels or e.j not in labels:
                raise ValueError(f"edge ({e.i}, {e.j}) has an endpoint outside the graph")
        if self.geometry.startswith("cayley"):
            if len(self.edges) != len(self.sites) - 1:
                raise ValueError("a tree needs exactly n_sites - 1 edges")

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def is_infinite(self) -> bool:
        return self.geometry == "infinite-chain"

    @property
    def template(self) -> MultiSiteOperator:
        """The single edge term of a translation-invariant chain."""
        if not self.is_infinite:
            raise ValueError("only infinite chains have an edge template")
        return self.edges[0].op

    def is_classical(self) -> bool:
        return all(e.op.is_diagonal() for e in self.edges)

    def to_json(self) -> str:
        doc = {
            "geometry": self.geometry,
            "params": self.params,
            "sites": [[s.index, s.dim] for s in self.sites],
            "edges": [{"sites": [e.i, e.j], "terms": e.terms} for e in self.edges],
        }
        if self.tree is not None:
            doc["tree_depth"] = self.tree.depth
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "InteractionGraph":
        doc = json.loads(text)
        tree = CayleyTree(doc["tree_depth"]) if "tree_depth" in doc else None
        return cls(
            sites=tuple(SiteId(i, d) for i, d in doc["sites"]),
            edges=tuple(Edge(e["sites"][0], e["sites"][1], dict(e["terms"])) for e in doc["edges"]),
            geometry=doc["geometry"],
            params=doc["params"],
            tree=tree,
        )


def _edge_terms(pairs, coupling, fields, zfields=None):
    """Fold one-body fields into edge terms, splitting by site degree."""
    degree: dict[int, int] = {}
    for i, j in pairs:
        degree[i] = degree.get(i, 0) + 1
        degree[j] = degree.get(j, 0) + 1
    zfields = zfields or {}
    edges = []
    for i, j in pairs:
        terms = {"ZZ": coupling}
        for word, site in (("XI", i), ("IX", j)):
            if fields:
                terms[word] = fields / degree[site]
        for word, site in (("ZI", i), ("IZ", j)):
            r = zfields.get(site, 0.0)
            if r:
                terms[word] = terms.get(word, 0.0) + r / degree[site]
        edges.append(Edge(i, j, terms))
    return tuple(edges)


def tfim_chain(B: float, n=INFINITE) -> InteractionGraph:
    """``H = sum_i Z_i Z_{i+1} + B X_i`` on an open chain or as an infinite template."""
    if n == INFINITE or n is None:
        edge = Edge(0, 1, {"ZZ": 1.0, "XI": B / 2, "IX": B / 2} if B else {"ZZ": 1.0})
        return InteractionGraph(
            (SiteId(0), SiteId(1)), (edge,), "infinite-chain", {"B": float(B), "n": INFINITE}
        )
    n = int(n)
    if n < 2:
        raise ValueError(f"a chain needs at least 2 sites, got {n}")
    pairs = [(k, k + 1) for k in range(n - 1)]
    return InteractionGraph(
        tuple(SiteId(k) for k in range(n)),
        _edge_terms(pairs, 1.0, B),
        "chain",
        {"B": float(B), "n": n},
    )


def sample_boundary_fields(seed: int, graph) -> BoundaryFieldConfig:
    """I.i.d. uniform fields in [-1, 1] on the boundary sites, fixed by ``seed``."""
    tree = graph.tree if isinstance(graph, InteractionGraph) else graph
    if tree is None or not tree.boundary:
        raise ValueError("graph has no boundary sites")
    rng = np.random.default_rng(seed)
    r = rng.uniform(-1.0, 1.0, size=len(tree.boundary))
    return BoundaryFieldConfig({int(k): float(v) for k, v in zip(tree.boundary, r)}, seed)


def cayley_glass(B: float, depth: int, config: BoundaryFieldConfig | None = None) -> InteractionGraph:
    """Transverse-field Ising model on a degree-3 Cayley tree with boundary fields."""
    tree = CayleyTree(depth)
    values = {} if config is None else config.values
    if config is not None and set(values) != set(tree.boundary):
        raise ValueError("boundary fields must be given on exactly the boundary sites")
    pairs = [(tree.parent[k], k) for k in range(1, tree.n_sites)]
    return InteractionGraph(
        tuple(SiteId(k) for k in range(tree.n_sites)),
        _edge_terms(pairs, 1.0, B, values),
        f"cayley-tree(3,{depth})",
        {"B": float(B), "depth": depth, "seed": None if config is None else config.seed},
        tree,
    )


def hamiltonian_matrix(graph: InteractionGraph) -> np.ndarray:
    """Dense matrix of the sum of all edge terms on a finite graph."""
    return hamiltonian_sparse(graph).toarray()


def hamiltonian_sparse(graph: InteractionGraph):
    """Sparse CSR matrix of the sum of all edge terms (spin-1/2 sites)."""
    if graph.is_infinite:
        raise ValueError("cannot build the matrix of an infinite chain")
    if any(s.dim != 2 for s in graph.sites):
        total = sum(embed(e.op, graph.sites).matrix for e in graph.edges)
        return sparse.csr_matrix(total)
    pos = {s.index: k for k, s in enumerate(graph.sites)}
    n = len(graph.sites)
    dtype = complex if any("Y" in w for e in graph.edges for w in e.terms) else float
    total = sparse.csr_matrix((2**n, 2**n), dtype=dtype)
    for e in graph.edges:
        for word, c in e.terms.items():
            factors = ["I"] * n
            factors[pos[e.i]] = word[0]
            factors[pos[e.j]] = word[1]
            term = sparse.identity(1, dtype=dtype, format="csr")
            for ch in factors:
                term = sparse.kron(term, sparse.csr_matrix(PAULI[ch]), format="csr")
            total = total + c * term
    return total
