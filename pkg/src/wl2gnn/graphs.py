"""Undirected graphs, structural transforms and dataset construction.

Graphs are immutable: vertex set 0..n-1, a canonical tuple of undirected
edges (i, j) with i <= j, float feature matrices for vertices and edges,
and optional integer vertex labels. Base graphs built by the generators
carry no self-loops; `graph_power` introduces one per vertex because a
vertex has distance zero to itself.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class GraphError(ValueError):
    """Raised for structurally invalid graphs or malformed dataset files."""


def _as_features(arr, rows, what):
    if arr is None:
        return np.zeros((rows, 0), dtype=np.float64)
    out = np.asarray(arr, dtype=np.float64)
    if out.ndim != 2 or out.shape[0] != rows:
        raise GraphError(f"{what} must be a ({rows}, d) matrix, got shape {out.shape}")
    return out


@dataclass(frozen=True, eq=False)
class Graph:
    n: int
    edges: tuple
    vertex_features: np.ndarray = None
    edge_features: np.ndarray = None
    vertex_labels: tuple | None = None

    def __post_init__(self):
        if self.n < 0:
            raise GraphError(f"vertex count must be non-negative, got {self.n}")
        canon = []
        seen = set()
        for e in self.edges:
            i, j = e
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge {e} references a vertex outside 0..{self.n - 1}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise GraphError(f"duplicate edge {e}")
            seen.add(key)
            canon.append(key)
        order = sorted(range(len(canon)), key=lambda k: canon[k])
        object.__setattr__(self, "edges", tuple(canon[k] for k in order))
        vf = _as_features(self.vertex_features, self.n, "vertex_features")
        ef = _as_features(self.edge_features, len(canon), "edge_features")
        if self.edge_features is not None and len(order) != len(canon):
            raise GraphError("edge_features rows do not align with edges")
        # edge features follow the canonical edge order
        object.__setattr__(self, "vertex_features", vf)
        object.__setattr__(self, "edge_features", ef[order] if ef.shape[0] else ef)
        if self.vertex_labels is not None:
            labels = tuple(int(x) for x in self.vertex_labels)
            if len(labels) != self.n:
                raise GraphError("vertex_labels length does not match vertex count")
            object.__setattr__(self, "vertex_labels", labels)

    @property
    def num_edges(self):
        return len(self.edges)

    @cached_property
    def adjacency(self):
        """Neighbor sets; a self-loop (v, v) puts v into its own set."""
        adj = [set() for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        return tuple(frozenset(s) for s in adj)

    @cached_property
    def edge_index(self):
        """Canonical edge (i <= j) to position in `edges`."""
        return {e: k for k, e in enumerate(self.edges)}

    def has_edge(self, i, j):
        return (min(i, j), max(i, j)) in self.edge_index

    def edge_id(self, i, j):
        return self.edge_index[(min(i, j), max(i, j))]

    def degree(self, v):
        """Neighbor count, self excluded."""
        return len(self.adjacency[v] - {v})

    def has_self_loops(self):
        return any(i == j for i, j in self.edges)


def cycle_graph(n):
    if n < 3:
        raise GraphError(f"cycle needs at least 3 vertices, got {n}")
    edges = [(i, (i + 1) % n) for i in range(n)]
    return Graph(n, tuple(edges),
                 vertex_features=np.ones((n, 1)),
                 edge_features=np.ones((n, 1)))


def complete_graph(n):
    if n < 1:
        raise GraphError(f"complete graph needs at least 1 vertex, got {n}")
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return Graph(n, tuple(edges),
                 vertex_features=np.ones((n, 1)),
                 edge_features=np.ones((len(edges), 1)))


def circulant_graph(n, offsets):
    """Vertices 0..n-1, i adjacent to (i +/- s) mod n for each offset s.

    Degree is 2 * len(offsets), minus one for the antipodal offset n/2.
    """
    offsets = sorted(set(int(s) for s in offsets))
    if n < 3:
        raise GraphError(f"circulant needs at least 3 vertices, got {n}")
    for s in offsets:
        if not 1 <= s <= n // 2:
            raise GraphError(f"offset {s} outside 1..{n // 2}")
    edges = set()
    for i in range(n):
        for s in offsets:
            j = (i + s) % n
            if i != j:
                edges.add((min(i, j), max(i, j)))
    edges = tuple(sorted(edges))
    return Graph(n, edges,
                 vertex_features=np.ones((n, 1)),
                 edge_features=np.ones((len(edges), 1)))


def disjoint_union(graphs):
    """Relabels vertices with cumulative offsets; features are stacked."""
    graphs = list(graphs)
    if not graphs:
        raise GraphError("disjoint union of zero graphs")
    dv = {g.vertex_features.shape[1] for g in graphs}
    de = {g.edge_features.shape[1] for g in graphs}
    if len(dv) > 1 or len(de) > 1:
        raise GraphError("feature dimensions differ between union components")
    edges = []
    offset = 0
    for g in graphs:
        edges.extend((i + offset, j + offset) for i, j in g.edges)
        offset += g.n
    vf = np.vstack([g.vertex_features for g in graphs])
    ef = np.vstack([g.edge_features for g in graphs])
    labels = None
    if all(g.vertex_labels is not None for g in graphs):
        labels = tuple(x for g in graphs for x in g.vertex_labels)
    return Graph(offset, tuple(edges), vertex_features=vf,
                 edge_features=ef, vertex_labels=labels)


def _bfs_within(adj, source, radius):
    """Vertices at shortest-path distance <= radius from source."""
    seen = {source: 0}
    frontier = deque([source])
    while frontier:
        v = frontier.popleft()
        if seen[v] == radius:
            continue
        for u in adj[v]:
            if u not in seen:
                seen[u] = seen[v] + 1
                frontier.append(u)
    return seen


def graph_power(g, r):
    """Graph on the same vertices with edges between all pairs at
    shortest-path distance <= r, plus a self-loop at every vertex.

    Edge features of surviving original edges are kept; new edges and
    self-loops get zero rows (when the graph carries edge features).
    """
    if g.n == 0:
        raise GraphError("graph power undefined on the empty graph")
    if r < 1:
        raise GraphError(f"radius must be >= 1, got {r}")
    base_adj = [g.adjacency[v] - {v} for v in range(g.n)]
    edges = []
    for v in range(g.n):
        reach = _bfs_within(base_adj, v, r)
        edges.append((v, v))
        edges.extend((v, u) for u in reach if u > v)
    edges = tuple(sorted(edges))
    de = g.edge_features.shape[1]
    ef = np.zeros((len(edges), de))
    if de:
        for k, e in enumerate(edges):
            if e in g.edge_index:
                ef[k] = g.edge_features[g.edge_index[e]]
    return Graph(g.n, edges, vertex_features=g.vertex_features.copy(),
                 edge_features=ef, vertex_labels=g.vertex_labels)


def edge_neighborhood_graph(g):
    """Graph whose vertices are the 2-multisets {v, v} and {v, u} of
    vertices and edges of g, adjacent iff their multiset intersection
    has exactly one element.

    Vertex order: the n loop multisets in vertex order, then the edges
    in canonical order. Vertex labels mark the two kinds (0 = loop,
    1 = edge) since they are distinct objects, not an artifact of the
    embedding.
    """
    if g.n == 0:
        raise GraphError("edge neighborhood graph undefined on the empty graph")
    if g.has_self_loops():
        raise GraphError("edge neighborhood graph expects a loop-free base graph")
    m = g.num_edges
    edges = []
    # loop {v, v} meets edge {i, j} in exactly {v} iff v is an endpoint
    for k, (i, j) in enumerate(g.edges):
        edges.append((i, g.n + k))
        edges.append((j, g.n + k))
    # two distinct edges meet in exactly one shared endpoint
    for a in range(m):
        ia, ja = g.edges[a]
        for b in range(a + 1, m):
            ib, jb = g.edges[b]
            if len({ia, ja} & {ib, jb}) == 1:
                edges.append((g.n + a, g.n + b))
    total = g.n + m
    labels = (0,) * g.n + (1,) * m
    return Graph(total, tuple(edges),
                 vertex_features=np.ones((total, 1)),
                 edge_features=np.ones((len(edges), 1)),
                 vertex_labels=labels)


# ---------------------------------------------------------------------------
# triangle detection benchmark


@dataclass
class TriangleConfig:
    """Parameter grid for the synthetic triangle dataset.

    Every cell is (vertex count, color proportion, density, planted class)
    and asks for `samples_per_cell` graphs containing exactly one
    unicolored triangle, whose color is the class. Density is the edge
    count over n^2 with edges counted in both directions, so the
    undirected edge target is round(density * n^2 / 2). Cells that are
    structurally infeasible or exhaust `max_attempts_per_cell` draws are
    skipped with a warning.
    """

    vertex_counts: tuple = tuple(range(6, 33))
    proportions: tuple = ((0.5, 0.5), (0.75, 0.25), (0.25, 0.75))
    densities: tuple = (0.25, 0.5)
    samples_per_cell: int = 3
    max_attempts_per_cell: int = 10_000
    balanced_cells: bool = True


def _monochromatic_triangles(adj_matrix, color_ids):
    total = 0
    for c in (0, 1):
        idx = np.flatnonzero(color_ids == c)
        if len(idx) < 3:
            continue
        sub = adj_matrix[np.ix_(idx, idx)]
        total += int(np.round(np.trace(sub @ sub @ sub))) // 6
    return total


def _sample_triangle_graph(rng, n, n_a, m_target, planted, pair_i, pair_j):
    colors = np.ones(n, dtype=np.int64)
    colors[rng.choice(n, size=n_a, replace=False)] = 0
    planted_pool = np.flatnonzero(colors == planted)
    tri = rng.choice(planted_pool, size=3, replace=False)
    pick = rng.choice(len(pair_i), size=m_target, replace=False)
    adj = np.zeros((n, n), dtype=np.float64)
    adj[pair_i[pick], pair_j[pick]] = 1.0
    adj[pair_j[pick], pair_i[pick]] = 1.0
    tri_pairs = [(min(a, b), max(a, b)) for a, b in
                 ((tri[0], tri[1]), (tri[0], tri[2]), (tri[1], tri[2]))]
    missing = [(a, b) for a, b in tri_pairs if adj[a, b] == 0.0]
    if missing:
        # plant, then drop as many non-triangle edges to keep the count
        others = [(a, b) for a, b in zip(pair_i[pick], pair_j[pick])
                  if (min(a, b), max(a, b)) not in tri_pairs]
        if len(others) < len(missing):
            return None
        for a, b in missing:
            adj[a, b] = adj[b, a] = 1.0
        for k in rng.choice(len(others), size=len(missing), replace=False):
            a, b = others[k]
            adj[a, b] = adj[b, a] = 0.0
    if _monochromatic_triangles(adj, colors) != 1:
        return None
    ii, jj = np.nonzero(np.triu(adj, 1))
    features = np.zeros((n, 2))
    features[np.arange(n), colors] = 1.0
    return Graph(n, tuple(zip(ii.tolist(), jj.tolist())),
                 vertex_features=features,
                 vertex_labels=tuple(colors.tolist()))


def generate_triangle_dataset(seed, config=None):
    """Builds the triangle dataset; returns (graphs, labels, warnings).

    Labels are 0/1 for classes A/B (the color of the unique unicolored
    triangle). Vertex features are the one-hot colors; there are no
    edge features. Fully deterministic in the seed.

    With `balanced_cells` (the default) both class cells of a
    (vertex count, proportion, density) combination must fill up or the
    combination is dropped entirely. Without the pairing, combinations
    where only one class is feasible would make labels predictable from
    color counts alone.
    """
    config = config or TriangleConfig()
    rng = np.random.default_rng(seed)
    graphs, labels, warnings = [], [], []
    for n in config.vertex_counts:
        pair_i, pair_j = np.triu_indices(n, 1)
        for prop in config.proportions:
            n_a = int(round(prop[0] * n))
            n_b = n - n_a
            for density in config.densities:
                m_target = int(round(density * n * n / 2))
                cell_graphs = {0: [], 1: []}
                failed = []
                for planted in (0, 1):
                    cell = (f"n={n} prop={prop[0]:g}/{prop[1]:g} "
                            f"density={density:g} class={'AB'[planted]}")
                    if (planted == 0 and n_a < 3) or (planted == 1 and n_b < 3):
                        warnings.append(f"skipped {cell}: fewer than 3 vertices "
                                        "of the planted color")
                        failed.append(planted)
                        continue
                    if not 3 <= m_target <= len(pair_i):
                        warnings.append(f"skipped {cell}: edge target {m_target} "
                                        "out of range")
                        failed.append(planted)
                        continue
                    attempts = 0
                    while len(cell_graphs[planted]) < config.samples_per_cell \
                            and attempts < config.max_attempts_per_cell:
                        attempts += 1
                        g = _sample_triangle_graph(rng, n, n_a, m_target,
                                                   planted, pair_i, pair_j)
                        if g is not None:
                            cell_graphs[planted].append(g)
                    if len(cell_graphs[planted]) < config.samples_per_cell:
                        warnings.append(f"skipped {cell}: "
                                        f"{len(cell_graphs[planted])}/"
                                        f"{config.samples_per_cell} samples after "
                                        f"{attempts} attempts")
                        failed.append(planted)
                if config.balanced_cells and failed:
                    dropped = [c for c in (0, 1)
                               if c not in failed and cell_graphs[c]]
                    if dropped:
                        warnings.append(
                            f"dropped n={n} prop={prop[0]:g}/{prop[1]:g} "
                            f"density={density:g} class="
                            f"{''.join('AB'[c] for c in dropped)}: "
                            "sibling class cell failed")
                    continue
                for planted in (0, 1):
                    if planted in failed:
                        continue
                    graphs.extend(cell_graphs[planted])
                    labels.extend([planted] * len(cell_graphs[planted]))
    return graphs, np.asarray(labels, dtype=np.int64), warnings


# ---------------------------------------------------------------------------
# TU-format dataset interchange


def _read_lines(path):
    try:
        with open(path) as fh:
            return fh.read().splitlines()
    except OSError as exc:
        raise GraphError(f"cannot read {path}: {exc}") from exc


def _parse_ints(path, expected_fields=None):
    rows = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        try:
            fields = [int(x) for x in line.replace(",", " ").split()]
        except ValueError:
            raise GraphError(f"{path}:{lineno}: expected integers, got {line!r}")
        if expected_fields is not None and len(fields) != expected_fields:
            raise GraphError(f"{path}:{lineno}: expected {expected_fields} "
                             f"fields, got {len(fields)}")
        rows.append((lineno, fields))
    return rows


def _parse_floats(path):
    rows = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(x) for x in line.replace(",", " ").split()])
        except ValueError:
            raise GraphError(f"{path}:{lineno}: expected floats, got {line!r}")
    return rows


def load_tu_dataset(path):
    """Loads a dataset in the TU text format from a directory.

    Expects <name>_A.txt, <name>_graph_indicator.txt and
    <name>_graph_labels.txt, with vertex ids 1-indexed; optional
    node labels (one-hot encoded), node attributes and edge attributes.
    Returns (graphs, labels) with labels remapped to {0, 1}.
    """
    import os

    path = os.path.abspath(path)
    name = os.path.basename(path.rstrip("/"))
    prefix = os.path.join(path, name)

    indicator = _parse_ints(f"{prefix}_graph_indicator.txt", 1)
    n_total = len(indicator)
    graph_of = np.empty(n_total, dtype=np.int64)
    for k, (lineno, (gid,)) in enumerate(indicator):
        graph_of[k] = gid - 1
    n_graphs = int(graph_of.max()) + 1 if n_total else 0
    if n_total and sorted(set(graph_of.tolist())) != list(range(n_graphs)):
        raise GraphError(f"{prefix}_graph_indicator.txt: graph ids not contiguous")

    label_rows = _parse_ints(f"{prefix}_graph_labels.txt", 1)
    if len(label_rows) != n_graphs:
        raise GraphError(f"{prefix}_graph_labels.txt: {len(label_rows)} labels "
                         f"for {n_graphs} graphs")
    raw_labels = [fields[0] for _, fields in label_rows]
    distinct = sorted(set(raw_labels))
    if len(distinct) != 2:
        raise GraphError(f"{prefix}_graph_labels.txt: need exactly 2 classes, "
                         f"found {distinct}")
    labels = np.asarray([distinct.index(x) for x in raw_labels], dtype=np.int64)

    # vertex ids local to each graph, in file order
    counts = np.bincount(graph_of, minlength=n_graphs)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])

    edge_rows = _parse_ints(f"{prefix}_A.txt", 2)
    per_graph_edges = [set() for _ in range(n_graphs)]
    edge_attr_of = {}
    import os.path as osp
    attr_path = f"{prefix}_edge_attributes.txt"
    edge_attrs = _parse_floats(attr_path) if osp.exists(attr_path) else None
    if edge_attrs is not None and len(edge_attrs) != len(edge_rows):
        raise GraphError(f"{attr_path}: {len(edge_attrs)} rows for "
                         f"{len(edge_rows)} edges")
    for k, (lineno, (u, v)) in enumerate(edge_rows):
        if not (1 <= u <= n_total and 1 <= v <= n_total):
            raise GraphError(f"{prefix}_A.txt:{lineno}: vertex id out of range")
        gu, gv = graph_of[u - 1], graph_of[v - 1]
        if gu != gv:
            raise GraphError(f"{prefix}_A.txt:{lineno}: edge crosses graphs "
                             f"{gu + 1} and {gv + 1}")
        if u == v:
            raise GraphError(f"{prefix}_A.txt:{lineno}: self-loop on vertex {u}")
        a = u - 1 - starts[gu]
        b = v - 1 - starts[gu]
        key = (min(a, b), max(a, b))
        per_graph_edges[gu].add(key)
        if edge_attrs is not None and (gu, key) not in edge_attr_of:
            edge_attr_of[(gu, key)] = edge_attrs[k]

    node_label_path = f"{prefix}_node_labels.txt"
    node_labels = None
    if osp.exists(node_label_path):
        rows = _parse_ints(node_label_path, 1)
        if len(rows) != n_total:
            raise GraphError(f"{node_label_path}: {len(rows)} labels for "
                             f"{n_total} vertices")
        node_labels = [fields[0] for _, fields in rows]
        label_values = sorted(set(node_labels))
    node_attr_path = f"{prefix}_node_attributes.txt"
    node_attrs = None
    if osp.exists(node_attr_path):
        node_attrs = _parse_floats(node_attr_path)
        if len(node_attrs) != n_total:
            raise GraphError(f"{node_attr_path}: {len(node_attrs)} rows for "
                             f"{n_total} vertices")

    graphs = []
    for gid in range(n_graphs):
        n = int(counts[gid])
        lo = int(starts[gid])
        blocks = []
        if node_labels is not None:
            onehot = np.zeros((n, len(label_values)))
            for v in range(n):
                onehot[v, label_values.index(node_labels[lo + v])] = 1.0
            blocks.append(onehot)
        if node_attrs is not None:
            blocks.append(np.asarray(node_attrs[lo:lo + n], dtype=np.float64))
        vf = np.hstack(blocks) if blocks else np.ones((n, 1))
        edges = tuple(sorted(per_graph_edges[gid]))
        ef = None
        if edge_attrs is not None:
            ef = np.asarray([edge_attr_of[(gid, e)] for e in edges],
                            dtype=np.float64)
            if ef.size == 0:
                ef = ef.reshape(0, len(edge_attrs[0]) if edge_attrs else 0)
        vl = tuple(node_labels[lo:lo + n]) if node_labels is not None else None
        graphs.append(Graph(n, edges, vertex_features=vf, edge_features=ef,
                            vertex_labels=vl))
    return graphs, labels


def save_tu_dataset(graphs, labels, path, name):
    """Writes graphs in the TU text format (edges in both directions)."""
    import os

    os.makedirs(path, exist_ok=True)
    prefix = os.path.join(path, name)
    with open(f"{prefix}_A.txt", "w") as adj, \
            open(f"{prefix}_graph_indicator.txt", "w") as ind:
        offset = 0
        for gid, g in enumerate(graphs, start=1):
            for _ in range(g.n):
                ind.write(f"{gid}\n")
            for i, j in g.edges:
                adj.write(f"{offset + i + 1}, {offset + j + 1}\n")
                adj.write(f"{offset + j + 1}, {offset + i + 1}\n")
            offset += g.n
    with open(f"{prefix}_graph_labels.txt", "w") as fh:
        for y in labels:
            fh.write(f"{int(y)}\n")
    if all(g.vertex_labels is not None for g in graphs):
        with open(f"{prefix}_node_labels.txt", "w") as fh:
            for g in graphs:
                for lab in g.vertex_labels:
                    fh.write(f"{lab}\n")
