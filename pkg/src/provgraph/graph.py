"""Undirected provenance graphs from a dissimilarity matrix."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

import numpy as np

from .errors import UnknownNode


def edge_key(a: str, b: str) -> Tuple[str, str]:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class ProvenanceGraph:
    nodes: FrozenSet[str]
    edges: FrozenSet[Tuple[str, str]]
    weights: Dict[Tuple[str, str], float] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        for a, b in self.edges:
            if a == b:
                raise ValueError(f"self-loop on {a}")
            if a not in self.nodes or b not in self.nodes:
                raise ValueError(f"edge ({a}, {b}) references a node outside the graph")

    @classmethod
    def from_edges(cls, nodes: Iterable[str], edges: Iterable[Tuple[str, str]], weights=None) -> "ProvenanceGraph":
        return cls(frozenset(nodes), frozenset(edge_key(a, b) for a, b in edges), dict(weights or {}))

    def sorted_nodes(self) -> List[str]:
        return sorted(self.nodes)

    def sorted_edges(self) -> List[Tuple[str, str]]:
        return sorted(self.edges)

    @property
    def total_weight(self) -> float:
        return float(sum(self.weights[e] for e in self.sorted_edges()))

    def adjacency(self, order: Optional[List[str]] = None) -> np.ndarray:
        """Binary adjacency matrix (BAM) in ``order`` (default: sorted ids)."""
        order = order or self.sorted_nodes()
        pos = {n: i for i, n in enumerate(order)}
        bam = np.zeros((len(order), len(order)), dtype=np.uint8)
        for a, b in self.edges:
            bam[pos[a], pos[b]] = bam[pos[b], pos[a]] = 1
        return bam

    def neighbors(self) -> Dict[str, List[str]]:
        adj = {n: [] for n in self.sorted_nodes()}
        for a, b in self.sorted_edges():
            adj[a].append(b)
            adj[b].append(a)
        return adj

    def to_dict(self) -> dict:
        return {
            "nodes": self.sorted_nodes(),
            "edges": [list(e) for e in self.sorted_edges()],
            "weights": [self.weights[e] for e in self.sorted_edges()] if self.weights else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ProvenanceGraph":
        edges = [tuple(e) for e in data["edges"]]
        weights = None
        if data.get("weights") is not None:
            weights = {edge_key(*e): float(w) for e, w in zip(edges, data["weights"])}
        return cls.from_edges(data["nodes"], edges, weights)


@dataclass
class QueryCase:
    query_id: str
    candidates: List[str]
    ground_truth: Optional[ProvenanceGraph] = None

    def __post_init__(self):
        if self.query_id not in self.candidates:
            raise ValueError(f"query {self.query_id!r} is not among the candidates")


class UnionFind:
    def __init__(self, items: Iterable[str]):
        self.parent = {x: x for x in items}
        self.rank = {x: 0 for x in self.parent}

    def find(self, x: str) -> str:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: str, b: str) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


def kruskal_forest(matrix) -> ProvenanceGraph:
    """Minimum spanning forest over the pairs that carry evidence.

    Edges are taken in ascending weight, ties broken by the sorted id pair.
    """
    ids = list(matrix.ids)
    values = np.asarray(matrix.values, dtype=np.float64)
    no_ev = np.asarray(matrix.no_evidence, dtype=bool)
    candidates = []
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            if not no_ev[i, j]:
                candidates.append((float(values[i, j]), edge_key(ids[i], ids[j])))
    candidates.sort()
    uf = UnionFind(ids)
    edges = {}
    for w, (a, b) in candidates:
        if uf.union(a, b):
            edges[(a, b)] = w
            if len(edges) == len(ids) - 1:
                break
    return ProvenanceGraph(frozenset(ids), frozenset(edges), edges)


def extract_query_component(forest: ProvenanceGraph, query_id: str) -> ProvenanceGraph:
    if query_id not in forest.nodes:
        raise UnknownNode(f"query {query_id!r} is not a node of the graph")
    adj = forest.neighbors()
    seen = {query_id}
    stack = [query_id]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    edges = {e: w for e, w in forest.weights.items() if e[0] in seen} if forest.weights else {}
    kept = [e for e in forest.edges if e[0] in seen]
    return ProvenanceGraph(frozenset(seen), frozenset(kept), edges)


def graph_to_json(graph: ProvenanceGraph, query_id: Optional[str] = None, metric: Optional[str] = None,
                  fingerprint: Optional[str] = None) -> str:
    payload = graph.to_dict()
    payload.update({"query_id": query_id, "metric": metric, "config_fingerprint": fingerprint})
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def graph_to_dot(graph: ProvenanceGraph, query_id: Optional[str] = None, name: str = "provenance") -> str:
    lines = [f"graph {name} {{", "  node [shape=circle];"]
    for n in graph.sorted_nodes():
        attrs = ' [shape=doublecircle, style=bold]' if n == query_id else ""
        lines.append(f'  "{n}"{attrs};')
    for a, b in graph.sorted_edges():
        w = graph.weights.get((a, b)) if graph.weights else None
        label = f' [label="{w:.4g}"]' if w is not None else ""
        lines.append(f'  "{a}" -- "{b}"{label};')
    lines.append("}")
    return "\n".join(lines) + "\n"
