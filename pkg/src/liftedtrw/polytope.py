"""Outer bounds of the lifted marginal polytope.

Three families of linear constraints over the lifted variables:

* local: per-orbit normalization and edge-to-node marginalization rows,
* cycle: valid inequalities separated on the ground graph via shortest paths
  in a two-layer mirror graph and re-expressed in lifted variables,
* exchangeable: count-distribution consistency rows for clusters of mutually
  interchangeable binary nodes, using auxiliary variables ``c_0..c_n`` that
  approximate the probability of seeing exactly ``k`` ones in the cluster.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

from .lpsolve import Row

CYCLE_VIOLATION_TOL = 1e-6


class NotExchangeable(Exception):
    """The node orbit lacks the single flip-symmetric internal edge orbit."""


@dataclass
class ConstraintSystem:
    """Deduplicated sparse rows over the lifted variables."""

    n_vars: int
    rows: list[Row] = field(default_factory=list)
    fixed_zero: np.ndarray | None = None
    _keys: set = field(default_factory=set)

    def add(self, coeffs, rel, rhs, tag=""):
        row = Row.make(coeffs, rel, rhs, tag)
        key = row.canonical_key()
        if key in self._keys:
            return False
        self._keys.add(key)
        self.rows.append(row)
        return True

    def has(self, row):
        return row.canonical_key() in self._keys

    def violation(self, row, x):
        val = sum(c * x[j] for j, c in row.coeffs) - row.rhs
        return val if row.rel == "<=" else abs(val)

    def max_violation(self, x):
        return max((self.violation(r, x) for r in self.rows), default=0.0)


def lifted_local(lg):
    """Lifted local-polytope constraints.

    Per node orbit one normalization row; per edge orbit, marginalization rows
    obtained by projecting the representative ground edge's rows onto orbit
    variables (one redundant side row is dropped, and rows that coincide after
    flip merging are deduplicated).
    """
    cs = ConstraintSystem(n_vars=lg.n_vars,
                          fixed_zero=lg.structural_zero_var.copy())
    for orb in lg.node_orbits:
        coeffs = {lg.node_var(orb.id, t): 1.0 for t in range(orb.n_values)}
        cs.add(coeffs, "=", 1.0, tag="local")
    for eo in lg.edge_orbits:
        u0, v0 = eo.rep
        nu = lg.model.nodes[u0].n_values
        nv = lg.model.nodes[v0].n_values
        for t in range(nu):
            coeffs = {}
            for h in range(nv):
                v = lg.edge_var(eo.id, t, h)
                coeffs[v] = coeffs.get(v, 0.0) + 1.0
            nvar = lg.node_var(eo.u_orbit, t)
            coeffs[nvar] = coeffs.get(nvar, 0.0) - 1.0
            cs.add(coeffs, "=", 0.0, tag="local")
        for h in range(nv - 1):
            coeffs = {}
            for t in range(nu):
                v = lg.edge_var(eo.id, t, h)
                coeffs[v] = coeffs.get(v, 0.0) + 1.0
            nvar = lg.node_var(eo.v_orbit, h)
            coeffs[nvar] = coeffs.get(nvar, 0.0) - 1.0
            cs.add(coeffs, "=", 0.0, tag="local")
    return cs


# ---------------------------------------------------------------------------
# Exchangeable clusters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Cluster:
    node_orbit: int
    edge_orbit: int
    size: int
    c_offset: int = -1  # variable offset assigned when embedded in a system


def _cluster_structure(lg, node_orbit_id):
    """Return the internal edge orbit of a cluster or raise NotExchangeable."""
    model = lg.model
    orb = lg.node_orbits[node_orbit_id]
    nd = model.nodes[orb.rep]
    if nd.kind != "atom" or nd.n_values != 2 or len(nd.consts) != 1:
        raise NotExchangeable(f"orbit {orb.key} is not a unary binary-atom orbit")
    if orb.size < 2:
        raise NotExchangeable("cluster needs at least two nodes")
    eo_ids = set()
    for a, b in itertools.combinations(sorted(orb.members), 2):
        k = model.edge_index.get((min(a, b), max(a, b)))
        if k is None:
            raise NotExchangeable("cluster pair without a ground edge")
        eo_ids.add(int(lg.edge_orbit_of[k]))
    if len(eo_ids) != 1:
        raise NotExchangeable("cluster pairs fall in several edge orbits")
    eo = lg.edge_orbits[eo_ids.pop()]
    if not eo.flip or eo.size != orb.size * (orb.size - 1) // 2:
        raise NotExchangeable("cluster edge orbit is not a flip-symmetric self-loop")
    return eo


def detect_exchangeable_clusters(lg):
    """Node orbits of unary-predicate groundings that pass the structure check."""
    out = []
    for orb in lg.node_orbits:
        try:
            eo = _cluster_structure(lg, orb.id)
        except NotExchangeable:
            continue
        out.append(Cluster(orb.id, eo.id, orb.size))
    return out


def exchangeable_constraints(lg, node_orbit_id, c_offset):
    """Count-distribution consistency rows for one exchangeable cluster.

    Introduces variables ``c_0..c_n`` at ``c_offset`` and links their pairwise
    expectations to the cluster's edge-orbit variables; also adds the
    (redundant) row ``sum_k c_k = 1``.
    """
    eo = _cluster_structure(lg, node_orbit_id)
    n = lg.node_orbits[node_orbit_id].size
    denom = n * (n - 1)
    v00 = lg.edge_var(eo.id, 0, 0)
    v11 = lg.edge_var(eo.id, 1, 1)
    v01 = lg.edge_var(eo.id, 0, 1)

    rows = []
    r00 = {c_offset + k: (n - k) * (n - k - 1) / denom for k in range(0, n - 1)}
    r00[v00] = -1.0
    rows.append(Row.make(r00, "=", 0.0, tag="exchangeable"))
    r11 = {c_offset + k: k * (k - 1) / denom for k in range(2, n + 1)}
    r11[v11] = -1.0
    rows.append(Row.make(r11, "=", 0.0, tag="exchangeable"))
    r01 = {c_offset + k: k * (n - k) / denom for k in range(1, n)}
    r01[v01] = -1.0
    rows.append(Row.make(r01, "=", 0.0, tag="exchangeable"))
    rows.append(Row.make({c_offset + k: 1.0 for k in range(n + 1)}, "=", 1.0,
                         tag="exchangeable"))
    return rows, n


# ---------------------------------------------------------------------------
# Cycle inequality separation
# ---------------------------------------------------------------------------

class CyclePool:
    """Cuts discovered so far, deduplicated by canonical row key."""

    def __init__(self):
        self.rows = []
        self._keys = set()

    def add(self, row):
        key = row.canonical_key()
        if key in self._keys:
            return False
        self._keys.add(key)
        self.rows.append(row)
        return True

    def __contains__(self, row):
        return row.canonical_key() in self._keys

    def __len__(self):
        return len(self.rows)


def _binary_subgraph(model):
    """Edges between binary atom nodes, as (edge id, u, v)."""
    out = []
    for k, e in enumerate(model.edges):
        if (model.nodes[e.u].kind == "atom" and model.nodes[e.v].kind == "atom"
                and model.nodes[e.u].n_values == 2 and model.nodes[e.v].n_values == 2):
            out.append((k, e.u, e.v))
    return out


def separate_cycles(lg, tau, pool, max_rows=20, tol=CYCLE_VIOLATION_TOL):
    """Find violated lifted cycle inequalities at ``tau``.

    Runs shortest-path separation on the ground graph: a two-layer mirror
    graph where staying in a layer costs the edge disagreement probability and
    switching layers costs one minus it.  A path from a node's copy in layer 0
    to its copy in layer 1 shorter than 1 yields a violated inequality, which
    is projected onto orbit variables, deduplicated against ``pool`` and
    returned (the most violated first).
    """
    model = lg.model
    edges = _binary_subgraph(model)
    if not edges:
        return []
    tau = np.asarray(tau)

    n_nodes = len(model.nodes)
    adj = [[] for _ in range(2 * n_nodes)]
    lam = {}
    for k, u, v in edges:
        l = float(tau[lg.feat_to_var[model.edge_feature(k, 0, 1)]]
                  + tau[lg.feat_to_var[model.edge_feature(k, 1, 0)]])
        l = min(max(l, 0.0), 1.0)
        lam[k] = l
        for a, b in ((u, v), (v, u)):
            adj[2 * a].append((2 * b, l, k, False))
            adj[2 * a + 1].append((2 * b + 1, l, k, False))
            adj[2 * a].append((2 * b + 1, 1.0 - l, k, True))
            adj[2 * a + 1].append((2 * b, 1.0 - l, k, True))

    sources = sorted({u for _, u, v in edges} | {v for _, u, v in edges})
    found = []
    seen_keys = set()
    for s in sources:
        dist, parent = _dijkstra(adj, 2 * s, 2 * s + 1, 2 * n_nodes)
        if dist is None or dist >= 1.0 - tol:
            continue
        steps = _walk(parent, 2 * s, 2 * s + 1)
        coeffs = {}
        n_cross = 0
        for k, crossing in steps:
            sign = 1.0 if crossing else -1.0
            n_cross += int(crossing)
            for (t, h) in ((0, 1), (1, 0)):
                var = int(lg.feat_to_var[model.edge_feature(k, t, h)])
                coeffs[var] = coeffs.get(var, 0.0) + sign
        row = Row.make(coeffs, "<=", n_cross - 1, tag="cycle")
        key = row.canonical_key()
        if key in seen_keys or row in pool:
            continue
        violation = sum(c * tau[j] for j, c in row.coeffs) - row.rhs
        if violation <= tol:
            continue
        seen_keys.add(key)
        found.append((violation, row))

    found.sort(key=lambda t: -t[0])
    rows = []
    for violation, row in found[:max_rows]:
        pool.add(row)
        rows.append(row)
    return rows


def _dijkstra(adj, src, dst, n):
    dist = np.full(n, np.inf)
    dist[src] = 0.0
    parent = [None] * n
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u] + 1e-15:
            continue
        if u == dst:
            return d, parent
        for v, w, k, crossing in adj[u]:
            nd = d + w
            if nd < dist[v] - 1e-15:
                dist[v] = nd
                parent[v] = (u, k, crossing)
                heapq.heappush(heap, (nd, v))
    if np.isfinite(dist[dst]):
        return float(dist[dst]), parent
    return None, None


def _walk(parent, src, dst):
    steps = []
    cur = dst
    while cur != src:
        prev, k, crossing = parent[cur]
        steps.append((k, crossing))
        cur = prev
    steps.reverse()
    return steps


# ---------------------------------------------------------------------------
# Assembled outer systems
# ---------------------------------------------------------------------------

OUTER_CHOICES = ("local", "cycle", "local+exch", "cycle+exch")


@dataclass
class OuterSystem:
    """A constraint system plus metadata for one outer-bound choice."""

    lg: object
    outer: str
    n_tau: int
    n_vars: int
    cs: ConstraintSystem
    clusters: list[Cluster]
    use_cycles: bool
    pool: CyclePool
    start_basis: list | None = None

    def uniform_point(self):
        """The moment vector of the uniform distribution (always feasible)."""
        x = np.zeros(self.n_vars)
        lg = self.lg
        for orb in lg.node_orbits:
            s = lg.node_var_start[orb.id]
            x[s:s + orb.n_values] = 1.0 / orb.n_values
        for eo in lg.edge_orbits:
            u0, v0 = eo.rep
            size = lg.model.nodes[u0].n_values * lg.model.nodes[v0].n_values
            for var, _count in lg.edge_orbit_vars(eo.id):
                x[var] = 1.0 / size
        if self.cs.fixed_zero is not None:
            # hard consistency edges: mass uniform over the allowed diagonal
            for eo in lg.edge_orbits:
                vars_counts = lg.edge_orbit_vars(eo.id)
                zeros = [v for v, _ in vars_counts if lg.structural_zero_var[v]]
                if not zeros:
                    continue
                u0, v0 = eo.rep
                k = lg.model.edge_index[(min(u0, v0), max(u0, v0))]
                e = lg.model.edges[k]
                mask = lg.model.structural_zero[k]
                th = mask if (u0, v0) == (e.u, e.v) else mask.T
                allowed = (~th)
                nu, nv = th.shape
                # uniform over the larger endpoint's values, consistent pairs only
                for t in range(nu):
                    for h in range(nv):
                        var = lg.edge_var(eo.id, t, h)
                        x[var] = (1.0 / max(nu, nv)) if allowed[t, h] else 0.0
        for cl in self.clusters:
            n = cl.size
            ks = np.arange(n + 1)
            x[cl.c_offset:cl.c_offset + n + 1] = (
                np.array([_comb(n, k) for k in ks]) / 2.0 ** n)
        return x


def _comb(n, k):
    out = 1
    for i in range(k):
        out = out * (n - i) // (i + 1)
    return out


def crash_basis(lg, cs):
    """A feasible starting basis for a pure local system, or None.

    Encodes the vertex of the all-zeros assignment: per node orbit the
    value-0 variable, per edge orbit the first row and first column of the
    value grid.  Only valid before cuts or cluster rows are added and when no
    structural zeros are present (auxiliary-node systems fall back to the
    usual phase-1 start).
    """
    if cs.fixed_zero is not None and cs.fixed_zero.any():
        return None
    cols = []
    for orb in lg.node_orbits:
        cols.append(lg.node_var(orb.id, 0))
    for eo in lg.edge_orbits:
        u0, v0 = eo.rep
        nu = lg.model.nodes[u0].n_values
        nv = lg.model.nodes[v0].n_values
        block = {lg.edge_var(eo.id, 0, h) for h in range(nv)}
        block |= {lg.edge_var(eo.id, t, 0) for t in range(1, nu)}
        cols.extend(sorted(block))
    if len(cols) != len(cs.rows) or len(set(cols)) != len(cols):
        return None
    return cols


def build_outer_system(lg, outer):
    """Assemble the constraint system for one of the four outer bounds."""
    if outer not in OUTER_CHOICES:
        raise ValueError(f"outer must be one of {OUTER_CHOICES}, got {outer!r}")
    cs = lifted_local(lg)
    n_vars = lg.n_vars
    clusters = []
    if outer.endswith("+exch"):
        for cl in detect_exchangeable_clusters(lg):
            rows, n = exchangeable_constraints(lg, cl.node_orbit, n_vars)
            clusters.append(Cluster(cl.node_orbit, cl.edge_orbit, cl.size, n_vars))
            n_vars += n + 1
            for row in rows:
                cs.rows.append(row)
                cs._keys.add(row.canonical_key())
    if cs.fixed_zero is not None and n_vars > lg.n_vars:
        cs.fixed_zero = np.concatenate(
            [cs.fixed_zero, np.zeros(n_vars - lg.n_vars, dtype=bool)])
    cs.n_vars = n_vars
    return OuterSystem(
        lg=lg,
        outer=outer,
        n_tau=lg.n_vars,
        n_vars=n_vars,
        cs=cs,
        clusters=clusters,
        use_cycles=outer.startswith("cycle"),
        pool=CyclePool(),
        start_basis=None if clusters else crash_basis(lg, cs),
    )
