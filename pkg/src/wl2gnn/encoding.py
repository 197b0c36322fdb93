"""Sparse feature encoding for 2-WL convolutions.

A graph is encoded against its r-th power. Every undirected vertex pair
(i, j) with an edge in the power graph gets one feature row: self-loops
first in vertex order, then proper edges in lexicographic order. The
initial feature of row (i, j) is the vertex feature block (x[v_i] when
i = j, zero otherwise) followed by the edge feature block (x[e_ij] when
the pair is an edge of the base graph, zero otherwise). Graphs without
edge features get one synthetic channel instead: 1.0 on self-loops and
base edges, 0.0 on pairs only connected in the power graph.

Aggregation is described by three pointer columns of equal length: for
every row t = (i, j) and every common neighbor l of v_i and v_j in the
power graph (both endpoints included, thanks to the self-loops), one
triple holds the target row of e_ij and the rows of e_il and e_lj. For
a self-loop target the two neighbor pointers name the same undirected
row twice. Triples are grouped by target row; within a group the common
neighbors are ordered endpoints first (i, then j), then the remaining
vertices ascending.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .graphs import GraphError, graph_power

_MAGIC = b"WL2E"
_VERSION = 1


@dataclass
class Wl2Encoding:
    z0: np.ndarray          # (m, width) float64 initial features
    ref_l: np.ndarray       # (gamma,) int64, target row of each triple
    ref_g1: np.ndarray      # (gamma,) int64, row of e_il
    ref_g2: np.ndarray      # (gamma,) int64, row of e_lj
    rows: np.ndarray        # (m, 2) int64, vertex pair of each row, i <= j
    graph_offsets: np.ndarray  # (n_graphs, 4): row start/count, ref start/count
    radius: int

    @property
    def m(self):
        return self.z0.shape[0]

    @property
    def gamma(self):
        return self.ref_l.shape[0]

    @property
    def width(self):
        return self.z0.shape[1]

    @property
    def n_graphs(self):
        return self.graph_offsets.shape[0]

    def row_segments(self):
        """Graph id per feature row, for pooling batched outputs."""
        seg = np.empty(self.m, dtype=np.int64)
        for gid, (start, count, _, _) in enumerate(self.graph_offsets):
            seg[start:start + count] = gid
        return seg

    def triples(self):
        return list(zip(self.ref_l.tolist(), self.ref_g1.tolist(),
                        self.ref_g2.tolist()))


def _row_order(power):
    loops = [(v, v) for v in range(power.n)]
    edges = sorted(e for e in power.edges if e[0] != e[1])
    return loops + edges


def encode(g, r):
    """Encodes one graph against its r-th power."""
    power = graph_power(g, r)
    order = _row_order(power)
    row_of = {e: k for k, e in enumerate(order)}
    m = len(order)

    dv = g.vertex_features.shape[1]
    de = g.edge_features.shape[1]
    width = dv + (de if de else 1)
    z0 = np.zeros((m, width))
    for k, (i, j) in enumerate(order):
        if i == j:
            z0[k, :dv] = g.vertex_features[i]
        is_base_edge = i != j and g.has_edge(i, j)
        if de:
            if is_base_edge:
                z0[k, dv:] = g.edge_features[g.edge_id(i, j)]
        else:
            z0[k, dv] = 1.0 if (i == j or is_base_edge) else 0.0

    adj = power.adjacency  # includes the vertex itself via its self-loop
    ref_l, ref_g1, ref_g2 = [], [], []
    for k, (i, j) in enumerate(order):
        common = adj[i] & adj[j]
        if i not in common or j not in common:
            raise GraphError(f"corrupt power graph: endpoints of {(i, j)} "
                             "missing from their own neighborhood")
        ordered = [i] + ([j] if j != i else []) + sorted(common - {i, j})
        for l in ordered:
            ref_l.append(k)
            ref_g1.append(row_of[(min(i, l), max(i, l))])
            ref_g2.append(row_of[(min(l, j), max(l, j))])

    offsets = np.asarray([[0, m, 0, len(ref_l)]], dtype=np.int64)
    return Wl2Encoding(z0=z0,
                       ref_l=np.asarray(ref_l, dtype=np.int64),
                       ref_g1=np.asarray(ref_g1, dtype=np.int64),
                       ref_g2=np.asarray(ref_g2, dtype=np.int64),
                       rows=np.asarray(order, dtype=np.int64).reshape(m, 2),
                       graph_offsets=offsets,
                       radius=r)


def combine_encodings(encodings):
    """Concatenates encodings of separate graphs into one batch.

    Row and pointer indices are shifted by cumulative offsets; vertex
    ids in `rows` are shifted as in a disjoint union. All encodings
    must share the radius and feature width.
    """
    encodings = list(encodings)
    if not encodings:
        raise ValueError("cannot combine zero encodings")
    radius = encodings[0].radius
    width = encodings[0].width
    for enc in encodings:
        if enc.radius != radius or enc.width != width:
            raise ValueError("encodings differ in radius or feature width")
    z0 = np.vstack([enc.z0 for enc in encodings])
    row_off, ref_off, vert_off = 0, 0, 0
    ref_l, ref_g1, ref_g2, rows, offsets = [], [], [], [], []
    for enc in encodings:
        ref_l.append(enc.ref_l + row_off)
        ref_g1.append(enc.ref_g1 + row_off)
        ref_g2.append(enc.ref_g2 + row_off)
        rows.append(enc.rows + vert_off)
        offsets.append([row_off, enc.m, ref_off, enc.gamma])
        row_off += enc.m
        ref_off += enc.gamma
        vert_off += int(enc.rows.max()) + 1 if enc.m else 0
    return Wl2Encoding(z0=z0,
                       ref_l=np.concatenate(ref_l),
                       ref_g1=np.concatenate(ref_g1),
                       ref_g2=np.concatenate(ref_g2),
                       rows=np.vstack(rows),
                       graph_offsets=np.asarray(offsets, dtype=np.int64),
                       radius=radius)


def encode_batch(graphs, r):
    graphs = list(graphs)
    if not graphs:
        raise ValueError("cannot encode an empty batch")
    return combine_encodings(encode(g, r) for g in graphs)


def save_encoding(enc, path):
    """Binary dump: int64 header, float64 features, int64 pointers (LE)."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        header = np.asarray([_VERSION, enc.m, enc.gamma, enc.width,
                             enc.radius, enc.n_graphs], dtype="<i8")
        fh.write(header.tobytes())
        fh.write(enc.graph_offsets.astype("<i8").tobytes())
        fh.write(enc.rows.astype("<i8").tobytes())
        fh.write(enc.z0.astype("<f8").tobytes())
        for arr in (enc.ref_l, enc.ref_g1, enc.ref_g2):
            fh.write(arr.astype("<i8").tobytes())


def load_encoding(path):
    with open(path, "rb") as fh:
        data = fh.read()
    buf = io.BytesIO(data)
    if buf.read(4) != _MAGIC:
        raise ValueError(f"{path}: not an encoding dump")
    version, m, gamma, width, radius, n_graphs = np.frombuffer(
        buf.read(6 * 8), dtype="<i8")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported version {version}")

    def take(count, dtype):
        arr = np.frombuffer(buf.read(count * 8), dtype=dtype)
        if arr.shape[0] != count:
            raise ValueError(f"{path}: truncated dump")
        return arr

    offsets = take(n_graphs * 4, "<i8").reshape(n_graphs, 4).astype(np.int64)
    rows = take(m * 2, "<i8").reshape(m, 2).astype(np.int64)
    z0 = take(m * width, "<f8").reshape(m, width).astype(np.float64)
    ref_l = take(gamma, "<i8").astype(np.int64)
    ref_g1 = take(gamma, "<i8").astype(np.int64)
    ref_g2 = take(gamma, "<i8").astype(np.int64)
    if buf.read(1):
        raise ValueError(f"{path}: trailing bytes after dump")
    return Wl2Encoding(z0=z0, ref_l=ref_l, ref_g1=ref_g1, ref_g2=ref_g2,
                       rows=rows, graph_offsets=offsets, radius=int(radius))
