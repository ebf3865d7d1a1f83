"""Lifted maximum spanning tree and edge-appearance optimization.

Kruskal's algorithm is simulated at the orbit level: edge orbits are scanned
in decreasing weight order and the number of tree edges contributed by each
orbit is the change in ground node count minus the change in ground component
count.  Ground components are counted without touching the ground union-find:
within a connected sub-lifted-graph all ground components are isomorphic, so
one component's size is read off the orbit structure after pinning a single
representative node, and the count is total nodes over component size.
"""

from __future__ import annotations

import numpy as np

from .symmetry import node_pattern
from .trw import frank_wolfe


class DisconnectedGraph(Exception):
    """The ground graph has no spanning tree."""


class _UnionFind:
    def __init__(self):
        self.parent = {}

    def add(self, x):
        self.parent.setdefault(x, x)

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra
        return ra


def _pinned_component_size(model, node_ids, edge_members, u0):
    """Ground size of the component containing ``u0`` in the pinned subgraph.

    Nodes are grouped by canonical keys with the constants of ``u0`` excluded
    from renaming (the stabilizer orbits), and the groups are connected by the
    subgraph's edges; ``u0`` sits in a singleton group.
    """
    distinguished = frozenset(model.nodes[u0].consts)
    class_of = {}
    sizes = []
    keys = {}
    for i in node_ids:
        key = node_pattern(model, i, distinguished)
        if key not in keys:
            keys[key] = len(sizes)
            sizes.append(0)
        ci = keys[key]
        class_of[i] = ci
        sizes[ci] += 1
    uf = _UnionFind()
    for ci in range(len(sizes)):
        uf.add(ci)
    for u, v in edge_members:
        uf.union(class_of[u], class_of[v])
    root = uf.find(class_of[u0])
    return sum(sizes[ci] for ci in range(len(sizes)) if uf.find(ci) == root)


def _ground_components_of(lg, node_orbit_ids, edge_orbit_ids):
    """Ground component count for a connected set of node orbits."""
    model = lg.model
    node_ids = [i for oid in node_orbit_ids for i in lg.node_orbits[oid].members]
    edge_members = [m for eid in edge_orbit_ids for m in lg.edge_orbits[eid].members]
    u0 = lg.node_orbits[min(node_orbit_ids)].rep
    comp = _pinned_component_size(model, node_ids, edge_members, u0)
    total = len(node_ids)
    assert total % comp == 0, "component sizes must divide the ground node count"
    return total // comp


def count_components(lg, node_orbit_ids=None, edge_orbit_ids=None):
    """Number of ground connected components of a sub-lifted-graph.

    Defaults to the whole graph.  Edge orbits with an endpoint outside the
    node orbit set are ignored.  Exact for models whose symmetry is the
    renaming group; for hand-built models the pinned node classes may merge
    stabilizer orbits, which requires the classes not to straddle ground
    components (true for the bundled hand-built models).
    """
    if node_orbit_ids is None:
        node_orbit_ids = [o.id for o in lg.node_orbits]
    node_set = set(node_orbit_ids)
    if edge_orbit_ids is None:
        edge_orbit_ids = [e.id for e in lg.edge_orbits]
    edge_ids = [eid for eid in edge_orbit_ids
                if lg.edge_orbits[eid].u_orbit in node_set
                and lg.edge_orbits[eid].v_orbit in node_set]

    uf = _UnionFind()
    for oid in node_set:
        uf.add(oid)
    for eid in edge_ids:
        eo = lg.edge_orbits[eid]
        uf.union(eo.u_orbit, eo.v_orbit)
    comps = {}
    for oid in node_set:
        comps.setdefault(uf.find(oid), []).append(oid)
    edge_of_comp = {}
    for eid in edge_ids:
        edge_of_comp.setdefault(uf.find(lg.edge_orbits[eid].u_orbit), []).append(eid)

    total = 0
    for root, orbits in comps.items():
        total += _ground_components_of(lg, orbits, edge_of_comp.get(root, []))
    return total


def lifted_kruskal(lg, weights):
    """Edge appearances of a maximum-weight spanning tree, per edge orbit.

    ``weights`` is one weight per edge orbit.  Returns ``rho`` with
    ``rho[e] = (tree edges taken from orbit e) / |e|``; the weighted size
    ``sum_e |e| rho_e w_e`` equals the ground maximum spanning tree weight.
    Raises :class:`DisconnectedGraph` when no spanning tree exists.
    """
    weights = np.asarray(weights, dtype=float)
    total_gv = len(lg.model.nodes)
    rho = np.zeros(len(lg.edge_orbits))
    if len(lg.edge_orbits) == 0:
        if total_gv <= 1:
            return rho
        raise DisconnectedGraph("graph has nodes but no edges")

    order = sorted(range(len(lg.edge_orbits)), key=lambda e: (-weights[e], e))
    uf = _UnionFind()
    comp_nodes = {}   # root -> set of node orbit ids
    comp_edges = {}   # root -> list of edge orbit ids
    ground_comps = {}  # root -> ground component count
    added = set()
    num_gv = 0
    num_gc = 0

    for eid in order:
        eo = lg.edge_orbits[eid]
        nb = {eo.u_orbit, eo.v_orbit}
        old_roots = {uf.find(o) for o in nb if o in added}
        gc_old = sum(ground_comps[r] for r in old_roots)
        new_orbits = [o for o in nb if o not in added]
        delta_v = sum(lg.node_orbits[o].size for o in new_orbits)
        num_gv += delta_v

        nodes = set(new_orbits)
        edges = [eid]
        for r in old_roots:
            nodes |= comp_nodes.pop(r)
            edges += comp_edges.pop(r)
            ground_comps.pop(r)
        for o in new_orbits:
            uf.add(o)
            added.add(o)
        it = iter(nb)
        first = next(it)
        root = uf.find(first)
        for o in it:
            root = uf.union(root, uf.find(o))
        comp_nodes[root] = nodes
        comp_edges[root] = edges

        gc_h = _ground_components_of(lg, nodes, edges)
        ground_comps[root] = gc_h
        delta_c = gc_h - gc_old
        num_gc += delta_c
        rho[eid] = (delta_v - delta_c) / eo.size
        if num_gv == total_gv and num_gc == 1:
            break

    if num_gv < total_gv or num_gc != 1:
        raise DisconnectedGraph(
            f"{total_gv - num_gv} ground nodes unreachable, "
            f"{num_gc} ground components remain")
    return rho


def lifted_mst_value(lg, weights, rho):
    """Spanning-tree weight in the lifted inner product."""
    sizes = np.array([eo.size for eo in lg.edge_orbits], dtype=float)
    return float(np.sum(sizes * np.asarray(rho) * np.asarray(weights)))


def tree_edge_total(lg, rho):
    """``sum_e |e| rho_e`` (equals |V| - 1 for spanning-tree points)."""
    sizes = np.array([eo.size for eo in lg.edge_orbits], dtype=float)
    return float(np.sum(sizes * np.asarray(rho)))


def init_rho_uniform(lg, tol=1e-8, max_iters=500):
    """Most-uniform point of the symmetrized spanning tree polytope.

    Minimizes ``sum_e |e| (rho_e - (|V|-1)/|E|)^2`` by conditional gradient;
    each direction step runs :func:`lifted_kruskal` with weights
    ``-2 (rho_e - (|V|-1)/|E|)`` and the quadratic line search is exact.
    """
    n_nodes = len(lg.model.nodes)
    n_edges = len(lg.model.edges)
    if n_edges == 0:
        if n_nodes <= 1:
            return np.zeros(len(lg.edge_orbits))
        raise DisconnectedGraph("graph has nodes but no edges")
    target = (n_nodes - 1) / n_edges
    sizes = np.array([eo.size for eo in lg.edge_orbits], dtype=float)

    rho = lifted_kruskal(lg, np.ones(len(lg.edge_orbits)))
    for _ in range(max_iters):
        w = -2.0 * (rho - target)
        d = lifted_kruskal(lg, w)
        gap = float(np.sum(sizes * 2.0 * (rho - target) * (rho - d)))
        if gap <= tol:
            break
        diff = d - rho
        denom = float(np.sum(sizes * diff * diff))
        if denom <= 0:
            break
        lam = -float(np.sum(sizes * (rho - target) * diff)) / denom
        lam = min(max(lam, 0.0), 1.0)
        if lam == 0.0:
            break
        rho = rho + lam * diff
    return np.clip(rho, 0.0, 1.0)


def orbit_entropies(lg, tau):
    """Per node-orbit and per edge-orbit entropies of a lifted vector."""
    tau = np.asarray(tau)
    node_h = np.zeros(len(lg.node_orbits))
    for orb in lg.node_orbits:
        s = lg.node_var_start[orb.id]
        vals = tau[s:s + orb.n_values]
        node_h[orb.id] = -float(np.sum(vals[vals > 0] * np.log(vals[vals > 0])))
    edge_h = np.zeros(len(lg.edge_orbits))
    for eo in lg.edge_orbits:
        acc = 0.0
        for var, count in lg.edge_orbit_vars(eo.id):
            v = float(tau[var])
            if v > 0:
                acc -= count * v * np.log(v)
        edge_h[eo.id] = acc
    return node_h, edge_h


def optimize_rho(lg, outer, rho0, outer_iters=10, bound_tol=1e-12, **fw_kwargs):
    """Improve the edge appearances by conditional gradient on the bound.

    Each outer step solves the inner problem, weighs edge orbits by their
    mutual information, moves toward the resulting spanning-tree point with a
    diminishing step, and keeps only steps that do not increase the bound.
    """
    rho = np.asarray(rho0, dtype=float)
    res = frank_wolfe(lg, outer=outer, rho=rho, **fw_kwargs)
    for k in range(outer_iters):
        node_h, edge_h = orbit_entropies(lg, res.tau)
        mi = np.zeros(len(lg.edge_orbits))
        for eo in lg.edge_orbits:
            mi[eo.id] = node_h[eo.u_orbit] + node_h[eo.v_orbit] - edge_h[eo.id]
        direction = lifted_kruskal(lg, mi)
        step = 2.0 / (k + 2.0)
        accepted = False
        while step > 1e-4:
            cand = np.clip(rho + step * (direction - rho), 0.0, 1.0)
            cand_res = frank_wolfe(lg, outer=outer, rho=cand, **fw_kwargs)
            if cand_res.bound <= res.bound + bound_tol:
                rho, res = cand, cand_res
                accepted = True
                break
            step /= 2.0
        if not accepted:
            break
    return rho, res
