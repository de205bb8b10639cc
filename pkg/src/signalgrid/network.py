"""Road-network topology and random-walk diffusion operators.

The controlled system is a directed graph of signalized intersections
(agents). Edges carry non-negative affinity weights; traffic flowing over
the graph is modelled as a random walk, and the walk's transition matrices
become graph shift operators used for neighborhood information
aggregation and graph convolution.

Conventions:
  * ``fwd = W^T (D_out)^{-1}`` and ``rev = W (D_in)^{-1}``; both are
    column-stochastic. Applying ``fwd`` to a node-signal lets every node
    read its in-neighbors; ``rev`` reads out-neighbors.
  * A restart-probability random walk truncated at depth ``D`` gives each
    node a visiting distribution over the graph; stacking these per-node
    distributions row-wise yields the dense diffusion matrix.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

UNREACHABLE = math.inf


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class RoadNetwork:
    """Directed agent graph with weighted adjacency and hop distances.

    ``hop_dist[i, j]`` is the directed BFS hop count (inf if unreachable);
    ``comm_hop_dist`` is the same on the undirected support, i.e. the
    number of single-neighbor message exchanges needed for information at
    j to reach i.
    """

    nodes: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    weights: np.ndarray            # dense N x N, weights[i, j] = w_ij
    lanes: dict[tuple[int, int], tuple[str, ...]] = field(repr=False, default_factory=dict)
    hop_dist: np.ndarray = field(repr=False, default=None)
    comm_hop_dist: np.ndarray = field(repr=False, default=None)
    grid_shape: tuple[int, int] | None = None

    @property
    def n(self) -> int:
        return len(self.nodes)

    def out_neighbors(self, i: int) -> list[int]:
        return [j for j in self.nodes if self.weights[i, j] > 0.0]

    def in_neighbors(self, i: int) -> list[int]:
        return [j for j in self.nodes if self.weights[j, i] > 0.0]

    def neighbors(self, i: int) -> list[int]:
        """Undirected 1-hop neighborhood (communication partners)."""
        return [j for j in self.nodes
                if j != i and (self.weights[i, j] > 0.0 or self.weights[j, i] > 0.0)]


def _bfs_hops(n: int, adj: list[list[int]]) -> np.ndarray:
    dist = np.full((n, n), UNREACHABLE)
    for s in range(n):
        dist[s, s] = 0.0
        q = deque([s])
        while q:
            u = q.popleft()
            for v in adj[u]:
                if dist[s, v] == UNREACHABLE:
                    dist[s, v] = dist[s, u] + 1.0
                    q.append(v)
    return dist


def build_network(
    rows: int | None = None,
    cols: int | None = None,
    edges: list[tuple[int, int]] | None = None,
    weights: list[float] | None = None,
    n_nodes: int | None = None,
    lanes_per_edge: int = 1,
    weight_mode: str = "unit",
) -> RoadNetwork:
    """Construct a RoadNetwork from a grid spec or an explicit edge list.

    Grid spec: ``rows x cols`` intersections with bidirectional 4-neighbor
    connectivity, node ids in row-major order. Edge list spec: ordered
    pairs with optional per-edge weights (default 1.0).

    ``weight_mode='lane_count'`` scales each edge weight by its lane count.
    """
    if rows is not None or cols is not None:
        if edges is not None:
            raise NetworkError("give either grid dimensions or an edge list, not both")
        if rows is None or cols is None or rows < 1 or cols < 1:
            raise NetworkError("grid dimensions must be >= 1")
        n = rows * cols
        edge_list: list[tuple[int, int]] = []
        for r in range(rows):
            for c in range(cols):
                i = r * cols + c
                for rr, cc in ((r - 1, c), (r, c + 1), (r + 1, c), (r, c - 1)):
                    if 0 <= rr < rows and 0 <= cc < cols:
                        edge_list.append((i, rr * cols + cc))
        weight_list = [1.0] * len(edge_list)
        grid_shape = (rows, cols)
    else:
        if edges is None:
            raise NetworkError("need grid dimensions or an edge list")
        edge_list = [(int(i), int(j)) for i, j in edges]
        if weights is None:
            weight_list = [1.0] * len(edge_list)
        else:
            if len(weights) != len(edge_list):
                raise NetworkError("weights length must match edges length")
            weight_list = [float(w) for w in weights]
        node_ids = {i for e in edge_list for i in e}
        n = max(node_ids) + 1 if node_ids else 0
        if n_nodes is not None:
            if node_ids and max(node_ids) >= n_nodes:
                raise NetworkError("edge references node id beyond n_nodes")
            n = n_nodes
        if n < 1:
            raise NetworkError("network needs at least one node")
        grid_shape = None

    seen: set[tuple[int, int]] = set()
    W = np.zeros((n, n))
    lanes: dict[tuple[int, int], tuple[str, ...]] = {}
    for (i, j), w in zip(edge_list, weight_list):
        if i == j:
            raise NetworkError(f"self-edge at node {i}")
        if not (0 <= i < n and 0 <= j < n):
            raise NetworkError(f"edge ({i}, {j}) references unknown node")
        if (i, j) in seen:
            raise NetworkError(f"duplicate edge ({i}, {j})")
        if w < 0:
            raise NetworkError(f"negative weight on edge ({i}, {j})")
        seen.add((i, j))
        lane_ids = tuple(f"{i}->{j}:{k}" for k in range(lanes_per_edge))
        lanes[(i, j)] = lane_ids
        W[i, j] = w * (lanes_per_edge if weight_mode == "lane_count" else 1.0)

    out_adj = [[j for j in range(n) if W[i, j] > 0] for i in range(n)]
    und_adj = [[j for j in range(n) if j != i and (W[i, j] > 0 or W[j, i] > 0)] for i in range(n)]
    return RoadNetwork(
        nodes=tuple(range(n)),
        edges=tuple(sorted(seen)),
        weights=W,
        lanes=lanes,
        hop_dist=_bfs_hops(n, out_adj),
        comm_hop_dist=_bfs_hops(n, und_adj),
        grid_shape=grid_shape,
    )


def hop_distance(net: RoadNetwork, i: int, j: int) -> float:
    """Directed shortest hop count from i to j; inf if unreachable."""
    return float(net.hop_dist[i, j])


@dataclass(frozen=True)
class DiffusionOperator:
    """Transition / reverse-transition matrices and their cached powers.

    ``powers_fwd[d]`` is ``fwd**d`` (``powers_fwd[0]`` the identity), and
    likewise for ``powers_rev``; both families are cached up to
    ``depth``. ``restart_alpha`` and ``depth`` parameterize the truncated
    restarting random walk; ``mix`` sets the convex combination of the
    two walk directions used when forming per-node visiting
    distributions (1.0 = forward walk only).
    """

    net: RoadNetwork
    fwd: np.ndarray
    rev: np.ndarray
    restart_alpha: float
    depth: int
    mix: float
    powers_fwd: tuple[np.ndarray, ...] = field(repr=False, default=())
    powers_rev: tuple[np.ndarray, ...] = field(repr=False, default=())

    @property
    def n(self) -> int:
        return self.fwd.shape[0]

    def walk_base(self) -> np.ndarray:
        return self.mix * self.fwd + (1.0 - self.mix) * self.rev

    def power(self, family: str, k: int) -> np.ndarray:
        """fwd**k or rev**k, extending beyond the cache if needed."""
        cached = self.powers_fwd if family == "fwd" else self.powers_rev
        if k < len(cached):
            return cached[k]
        base = self.fwd if family == "fwd" else self.rev
        m = cached[-1].copy()
        for _ in range(k - len(cached) + 1):
            m = m @ base
        return m


def build_operator(
    net: RoadNetwork,
    restart_alpha: float = 0.75,
    depth: int = 3,
    mix: float = 0.5,
    add_self_loops: bool = True,
) -> DiffusionOperator:
    """Normalize the weighted adjacency into the two walk matrices.

    Any node with zero out-degree or zero in-degree gets a unit self-loop
    before normalization so the degree matrices stay invertible; with
    ``add_self_loops=False`` such a node raises instead.
    """
    if not 0.0 < restart_alpha <= 1.0:
        raise NetworkError("restart_alpha must be in (0, 1]")
    if depth < 0:
        raise NetworkError("depth must be >= 0")
    if not 0.0 <= mix <= 1.0:
        raise NetworkError("mix must be in [0, 1]")
    W = net.weights.copy()
    n = W.shape[0]
    out_deg = W.sum(axis=1)
    in_deg = W.sum(axis=0)
    for i in range(n):
        if out_deg[i] == 0.0 or in_deg[i] == 0.0:
            if not add_self_loops:
                kind = "out" if out_deg[i] == 0.0 else "in"
                raise NetworkError(f"node {i} has zero {kind}-degree")
            W[i, i] += 1.0
    out_deg = W.sum(axis=1)
    in_deg = W.sum(axis=0)

    fwd = W.T / out_deg[np.newaxis, :]   # column j scaled by 1/d_out(j)
    rev = W / in_deg[np.newaxis, :]      # column j scaled by 1/d_in(j)

    pf = [np.eye(n)]
    pr = [np.eye(n)]
    for _ in range(depth):
        pf.append(pf[-1] @ fwd)
        pr.append(pr[-1] @ rev)
    return DiffusionOperator(
        net=net, fwd=fwd, rev=rev,
        restart_alpha=restart_alpha, depth=depth, mix=mix,
        powers_fwd=tuple(pf), powers_rev=tuple(pr),
    )


def rwr_distribution(op: DiffusionOperator, source: int) -> np.ndarray:
    """Truncated restarting-random-walk visiting distribution of ``source``.

    Returns ``alpha * sum_{d=0}^{D} (1-alpha)^d * base^d * e_source`` where
    ``base`` is the operator's (possibly mixed) walk matrix. Entries are
    non-negative and sum to ``1 - (1-alpha)^(D+1)``.
    """
    if not 0 <= source < op.n:
        raise NetworkError(f"unknown source node {source}")
    base = op.walk_base()
    a = op.restart_alpha
    v = np.zeros(op.n)
    v[source] = 1.0
    acc = a * v
    for d in range(1, op.depth + 1):
        v = base @ v
        acc += a * (1.0 - a) ** d * v
    return acc


def diffusion_matrix(op: DiffusionOperator) -> np.ndarray:
    """Per-node visiting distributions stacked row-wise.

    Row i is ``rwr_distribution(op, i)``; entry (i, j) reads as the
    probability that traffic starting at agent i visits agent j within
    the truncated walk.
    """
    base_t = op.walk_base().T
    a = op.restart_alpha
    acc = a * np.eye(op.n)
    m = np.eye(op.n)
    for d in range(1, op.depth + 1):
        m = m @ base_t
        acc += a * (1.0 - a) ** d * m
    return acc
