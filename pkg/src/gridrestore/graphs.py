"""Pre-optimization graph processing.

Splits a damaged feeder into connected subgraphs, contracts each subgraph to
its bus blocks (maximal groups of nodes joined by non-switchable branches),
and sizes the restoration horizon from block-graph eccentricities: the
restoration step radius/diameter are the min/max eccentricity over blocks
hosting black-start units, and the step estimates add one synchronization
step per black-start unit.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace

from .feeder import FeederModel


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class BusBlock:
    id: int
    nodes: tuple[str, ...]
    hosts_black_start: bool


@dataclass(frozen=True)
class BusBlockGraph:
    """Quotient graph: one vertex per bus block, one edge per inter-block switch."""

    blocks: tuple[BusBlock, ...]
    edges: tuple[tuple[int, int, str], ...]  # (block, block, branch id)

    def block_of(self, node_id: str) -> int:
        for blk in self.blocks:
            if node_id in blk.nodes:
                return blk.id
        raise GraphError(f"node {node_id!r} not in any block")

    def neighbors(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {blk.id: [] for blk in self.blocks}
        for u, v, _ in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return adj


@dataclass(frozen=True)
class StepEstimate:
    rsr: int
    rsd: int
    n_black_start: int
    conservative: int
    generous: int


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:  # path compression
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def connected_subgraphs(model: FeederModel) -> list[FeederModel]:
    """Split the feeder into maximal connected components, damage removed.

    Damaged branches are dropped entirely; every surviving node lands in
    exactly one component together with its attached DERs and loads.  A fully
    damaged system degenerates to isolated single-node components.
    """
    uf = _UnionFind([n.id for n in model.nodes])
    for b in model.alive_branches():
        uf.union(b.from_node, b.to_node)

    roots: dict[str, list[str]] = {}
    for n in model.nodes:
        roots.setdefault(uf.find(n.id), []).append(n.id)
    # deterministic: order components by their smallest member in node order
    node_order = {n.id: i for i, n in enumerate(model.nodes)}
    components = sorted(roots.values(), key=lambda ids: min(node_order[i] for i in ids))

    out = []
    for ids in components:
        members = set(ids)
        out.append(replace(
            model,
            nodes=tuple(n for n in model.nodes if n.id in members),
            branches=tuple(
                b for b in model.alive_branches()
                if b.from_node in members and b.to_node in members
            ),
            ders=tuple(d for d in model.ders if d.node in members),
            loads=tuple(l for l in model.loads if l.node in members),
        ))
    return out


def is_connected(model: FeederModel) -> bool:
    return len(connected_subgraphs(model)) <= 1


def reduce_to_bus_blocks(model: FeederModel) -> BusBlockGraph:
    """Contract nodes joined by non-switchable (and undamaged) branches.

    The model must be a single connected subgraph (split first with
    :func:`connected_subgraphs`).  Blocks hosting an undamaged black-start
    unit are flagged.
    """
    if not is_connected(model):
        raise GraphError("model is disconnected; split into connected subgraphs first")
    uf = _UnionFind([n.id for n in model.nodes])
    for b in model.alive_branches():
        if not b.switchable:
            uf.union(b.from_node, b.to_node)

    members: dict[str, list[str]] = {}
    for n in model.nodes:
        members.setdefault(uf.find(n.id), []).append(n.id)
    node_order = {n.id: i for i, n in enumerate(model.nodes)}
    groups = sorted(members.values(), key=lambda ids: min(node_order[i] for i in ids))

    bs_nodes = {d.node for d in model.ders if d.black_start and not d.damaged}
    blocks = tuple(
        BusBlock(id=i, nodes=tuple(ids), hosts_black_start=bool(bs_nodes & set(ids)))
        for i, ids in enumerate(groups)
    )
    block_of = {nid: blk.id for blk in blocks for nid in blk.nodes}
    edges = tuple(
        (block_of[b.from_node], block_of[b.to_node], b.id)
        for b in model.alive_branches()
        if b.switchable and block_of[b.from_node] != block_of[b.to_node]
    )
    return BusBlockGraph(blocks=blocks, edges=edges)


def eccentricity(graph: BusBlockGraph, vertex: int) -> int:
    """Max over all vertices of the BFS hop distance from ``vertex``."""
    adj = graph.neighbors()
    if vertex not in adj:
        raise GraphError(f"block {vertex} not in graph")
    dist = {vertex: 0}
    queue = deque([vertex])
    far = 0
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                far = max(far, dist[v])
                queue.append(v)
    if len(dist) != len(graph.blocks):
        raise GraphError("bus-block graph is disconnected")
    return far


def restoration_step_bounds(graph: BusBlockGraph) -> tuple[int, int]:
    """(radius, diameter) of restoration steps over black-start blocks.

    Radius is the minimum eccentricity among blocks hosting a black-start
    unit, diameter the maximum; the best startup choice needs ``rsr`` switch
    closures to reach everything, the worst needs ``rsd``.
    """
    bs = [blk.id for blk in graph.blocks if blk.hosts_black_start]
    if not bs:
        raise GraphError("no block hosts a black-start unit")
    eccs = [eccentricity(graph, v) for v in bs]
    return min(eccs), max(eccs)


def step_estimates(bounds: tuple[int, int], n_black_start: int) -> StepEstimate:
    """Conservative/generous horizon estimates: bounds plus one dedicated
    zero-dispatch synchronization step per black-start unit."""
    if n_black_start < 1:
        raise GraphError("need at least one black-start unit")
    rsr, rsd = bounds
    if rsr > rsd:
        raise GraphError(f"radius {rsr} exceeds diameter {rsd}")
    return StepEstimate(
        rsr=rsr,
        rsd=rsd,
        n_black_start=n_black_start,
        conservative=rsr + n_black_start,
        generous=rsd + n_black_start,
    )


def analyze_subgraph(model: FeederModel) -> tuple[BusBlockGraph, StepEstimate]:
    """Convenience: blocks plus step estimates for one connected subgraph."""
    graph = reduce_to_bus_blocks(model)
    n_bs = sum(1 for d in model.ders if d.black_start and not d.damaged)
    bounds = restoration_step_bounds(graph)
    return graph, step_estimates(bounds, n_bs)
