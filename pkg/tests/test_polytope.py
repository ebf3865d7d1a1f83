"""Outer-bound constraint tests: projection equivalence, exchangeable
consistency with brute-force symmetrized distributions, and cycle-inequality
separation checked against exhaustive enumeration."""

import itertools

import numpy as np
import pytest

import liftedtrw as lt
from liftedtrw.lpsolve import LinearProgram, solve
from liftedtrw.polytope import (CyclePool, NotExchangeable, build_outer_system,
                                detect_exchangeable_clusters,
                                exchangeable_constraints, lifted_local,
                                separate_cycles)
from conftest import build, ground_local_feasible, symmetrized_random_moments


def lifted_feasible(cs, x, tol=1e-7):
    x = np.asarray(x)
    if (x < -tol).any():
        return False
    for row in cs.rows:
        val = sum(c * x[j] for j, c in row.coeffs)
        if row.rel == "=" and abs(val - row.rhs) > tol:
            return False
        if row.rel == "<=" and val > row.rhs + tol:
            return False
    return True


class TestLiftedLocal:
    def test_ring_stem_rows_present(self, ring_model, ring_lifted):
        """Both marginalization identities of the stem orbit must appear."""
        lg = ring_lifted
        cs = lifted_local(lg)
        stem = next(eo for eo in lg.edge_orbits if eo.key[0] == "stem")
        core = stem.u_orbit if lg.model.nodes[
            lg.node_orbits[stem.u_orbit].rep].label == "B" else stem.v_orbit
        pend = stem.v_orbit if core == stem.u_orbit else stem.u_orbit
        if core == stem.u_orbit:
            row_core = {lg.edge_var(stem.id, 0, 0): 1.0,
                        lg.edge_var(stem.id, 0, 1): 1.0,
                        lg.node_var(core, 0): -1.0}
            row_pend = {lg.edge_var(stem.id, 0, 0): 1.0,
                        lg.edge_var(stem.id, 1, 0): 1.0,
                        lg.node_var(pend, 0): -1.0}
        else:
            row_core = {lg.edge_var(stem.id, 0, 0): 1.0,
                        lg.edge_var(stem.id, 1, 0): 1.0,
                        lg.node_var(core, 0): -1.0}
            row_pend = {lg.edge_var(stem.id, 0, 0): 1.0,
                        lg.edge_var(stem.id, 0, 1): 1.0,
                        lg.node_var(pend, 0): -1.0}
        keys = {r.canonical_key() for r in cs.rows}
        from liftedtrw.lpsolve import Row
        assert Row.make(row_core, "=", 0.0).canonical_key() in keys
        assert Row.make(row_pend, "=", 0.0).canonical_key() in keys

    def test_flip_merged_normalization_identity(self):
        """e00 + e11 + 2 a01 = 1 must be implied by the emitted rows."""
        g = build("complete_graph", 4, -1.0)
        lg = lt.compute_orbits(g)
        cs = lifted_local(lg)
        eo = lg.edge_orbits[0]
        rng = np.random.default_rng(0)
        for seed in range(20):
            tau = symmetrized_random_moments(g, lg, seed)
            assert lifted_feasible(cs, tau)
            total = (tau[lg.edge_var(eo.id, 0, 0)] + tau[lg.edge_var(eo.id, 1, 1)]
                     + 2 * tau[lg.edge_var(eo.id, 0, 1)])
            assert abs(total - 1.0) < 1e-9

    def test_single_orbit_normalization(self):
        g = lt.ground(lt.parse_model("W V(x)").bind_weight(1.0), 3)
        lg = lt.compute_orbits(g)
        cs = lifted_local(lg)
        assert len(cs.rows) == 1
        assert cs.rows[0].rel == "="


class TestProjectionEquivalence:
    @pytest.mark.parametrize("name,n,w", [
        ("complete_graph", 5, -1.0),
        ("clique_cycle", 3, 1.5),
        ("friends_smokers", 2, -0.8),
    ])
    def test_lifted_iff_ground(self, name, n, w):
        g = build(name, n, w)
        lg = lt.compute_orbits(g)
        cs = lifted_local(lg)
        rng = np.random.default_rng(42)
        agree = 0
        for trial in range(120):
            if trial % 3 == 0:
                tau = symmetrized_random_moments(g, lg, trial)
            elif trial % 3 == 1:
                tau = rng.random(lg.n_vars)
            else:
                tau = symmetrized_random_moments(g, lg, trial)
                tau = tau + rng.normal(scale=0.05, size=lg.n_vars)
            lifted_ok = lifted_feasible(cs, tau) and not (
                cs.fixed_zero is not None and (tau[cs.fixed_zero] > 1e-7).any())
            ground_ok = ground_local_feasible(g, lg.expand(tau))
            assert lifted_ok == ground_ok
            agree += 1
        assert agree == 120


class TestExchangeable:
    def test_uniform_n3(self):
        g = build("complete_graph", 3, 0.0)
        lg = lt.compute_orbits(g)
        rows, n = exchangeable_constraints(lg, 0, lg.n_vars)
        assert n == 3
        eo = lg.edge_orbits[0]
        x = np.zeros(lg.n_vars + 4)
        x[lg.edge_var(eo.id, 0, 0)] = 0.25
        x[lg.edge_var(eo.id, 1, 1)] = 0.25
        x[lg.edge_var(eo.id, 0, 1)] = 0.25
        x[lg.n_vars:] = [1 / 8, 3 / 8, 3 / 8, 1 / 8]
        for row in rows:
            val = sum(c * x[j] for j, c in row.coeffs)
            assert abs(val - row.rhs) < 1e-12

    def test_point_mass_n2(self):
        g = build("complete_graph", 2, 0.0)
        lg = lt.compute_orbits(g)
        rows, n = exchangeable_constraints(lg, 0, lg.n_vars)
        eo = lg.edge_orbits[0]
        x = np.zeros(lg.n_vars + 3)
        x[lg.edge_var(eo.id, 1, 1)] = 1.0
        x[lg.n_vars + 2] = 1.0  # all mass on the two-ones class
        for row in rows:
            val = sum(c * x[j] for j, c in row.coeffs)
            assert abs(val - row.rhs) < 1e-12

    def test_random_exchangeable_n4(self):
        g = build("complete_graph", 4, 0.0)
        lg = lt.compute_orbits(g)
        rows, n = exchangeable_constraints(lg, 0, lg.n_vars)
        eo = lg.edge_orbits[0]
        for seed in range(10):
            moments, c, marg1 = lt.random_exchangeable_moments(4, seed)
            x = np.zeros(lg.n_vars + 5)
            x[lg.edge_var(eo.id, 0, 0)] = moments["e00"]
            x[lg.edge_var(eo.id, 1, 1)] = moments["e11"]
            x[lg.edge_var(eo.id, 0, 1)] = moments["a01"]
            x[lg.n_vars:] = c
            for row in rows:
                val = sum(cc * x[j] for j, cc in row.coeffs)
                assert abs(val - row.rhs) < 1e-12

    def test_not_exchangeable_raises(self, ring_model, ring_lifted):
        for orb in ring_lifted.node_orbits:
            with pytest.raises(NotExchangeable):
                exchangeable_constraints(ring_lifted, orb.id, ring_lifted.n_vars)


class TestClusterDetection:
    def test_complete_graph(self):
        g = build("complete_graph", 6, -1.0)
        lg = lt.compute_orbits(g)
        clusters = detect_exchangeable_clusters(lg)
        assert len(clusters) == 1
        assert clusters[0].size == 6

    def test_ring_model_has_none(self, ring_lifted):
        assert detect_exchangeable_clusters(ring_lifted) == []

    def test_no_unary_predicate(self):
        tm = lt.parse_model("0.5 [x != y ^ Friends(x,y)]")
        g = lt.ground(tm, 3)
        lg = lt.compute_orbits(g)
        assert detect_exchangeable_clusters(lg) == []

    def test_clique_cycle_clusters(self):
        g = build("clique_cycle", 3, 1.0)
        lg = lt.compute_orbits(g)
        clusters = detect_exchangeable_clusters(lg)
        assert len(clusters) == 3
        assert all(c.size == 3 for c in clusters)

    def test_friends_smokers_has_none(self):
        # no direct edges inside the unary orbits (influence runs through
        # auxiliary nodes), so the cluster system does not attach
        g = build("friends_smokers", 3, -1.0)
        lg = lt.compute_orbits(g)
        assert detect_exchangeable_clusters(lg) == []


class TestSoundness:
    @pytest.mark.parametrize("name,n,w", [
        ("complete_graph", 4, -1.0), ("clique_cycle", 3, 2.0),
    ])
    def test_symmetrized_moments_feasible_everywhere(self, name, n, w):
        g = build(name, n, w)
        lg = lt.compute_orbits(g)
        system = build_outer_system(lg, "cycle+exch")
        for seed in range(8):
            tau = symmetrized_random_moments(g, lg, seed)
            x = np.concatenate([tau, np.zeros(system.n_vars - lg.n_vars)])
            # recover the exact cluster count distribution from brute force
            for cl in system.clusters:
                members = lg.node_orbits[cl.node_orbit].members
                probs = _count_distribution(g, members, seed)
                x[cl.c_offset:cl.c_offset + cl.size + 1] = probs
            assert lifted_feasible(system.cs, x)
            pool = CyclePool()
            assert separate_cycles(lg, x, pool) == []


def _count_distribution(g, members, seed):
    """Pr(sum of cluster variables = k) under the seeded random distribution."""
    rng = np.random.default_rng(seed)
    atoms = g.atom_node_ids
    scores = rng.normal(size=1 << len(atoms))
    p = np.exp(scores - scores.max())
    p /= p.sum()
    pos = {i: atoms.index(i) for i in members}
    out = np.zeros(len(members) + 1)
    for idx in range(1 << len(atoms)):
        k = sum((idx >> pos[i]) & 1 for i in members)
        out[k] += p[idx]
    return out


class TestNesting:
    def test_lp_optima_ordering(self):
        g = build("complete_graph", 4, -1.0)
        lg = lt.compute_orbits(g)
        rng = np.random.default_rng(5)
        for _ in range(5):
            c = rng.normal(size=lg.n_vars)
            values = {}
            for outer in ("local", "local+exch"):
                system = build_outer_system(lg, outer)
                obj = np.concatenate([c, np.zeros(system.n_vars - lg.n_vars)])
                _, val, _, _ = solve(LinearProgram(
                    system.n_vars, system.cs.rows, obj, system.cs.fixed_zero))
                values[outer] = val
            assert values["local+exch"] <= values["local"] + 1e-9

    def test_exchangeable_exactness_on_complete_graph(self):
        """With cluster rows the LP optimum of any symmetric objective equals
        the maximum over the true lifted marginal polytope (vertex scan)."""
        for n in (3, 4):
            g = build("complete_graph", n, -1.0)
            lg = lt.compute_orbits(g)
            system = build_outer_system(lg, "local+exch")
            rng = np.random.default_rng(n)
            for _ in range(6):
                c = rng.normal(size=lg.n_vars)
                obj = np.concatenate([c, np.zeros(system.n_vars - lg.n_vars)])
                _, lp_val, _, _ = solve(LinearProgram(
                    system.n_vars, system.cs.rows, obj, system.cs.fixed_zero))
                best = -np.inf
                for state in itertools.product((0, 1), repeat=n):
                    mu = np.zeros(g.n_features)
                    for i, t in enumerate(state):
                        mu[g.node_feature(i, t)] = 1.0
                    for k, e in enumerate(g.edges):
                        mu[g.edge_feature(k, state[e.u], state[e.v])] = 1.0
                    best = max(best, float(c @ lg.project(mu)))
                assert lp_val >= best - 1e-8
                assert lp_val <= best + 1e-7


class TestSeparation:
    def test_uniform_has_no_violated_cycles(self):
        g = build("clique_cycle", 3, 2.0)
        lg = lt.compute_orbits(g)
        system = build_outer_system(lg, "cycle")
        tau = system.uniform_point()
        assert separate_cycles(lg, tau, CyclePool()) == []

    def test_tree_graph_has_no_cycles(self):
        b = lt.GroundModelBuilder(range(3))
        ids = [b.add_node("atom", "V", (i,), 2) for i in range(3)]
        for i in (1, 2):
            b.add_edge_theta(ids[0], ids[i], [[0.3, -0.3], [-0.3, 0.3]], tag="t")
        g = b.build()
        lg = lt.compute_orbits(g)
        tau = np.full(lg.n_vars, 0.5)
        tau[lg.feat_to_var] = 0.0  # fill with a fractional-but-local point
        system = build_outer_system(lg, "cycle")
        assert separate_cycles(lg, system.uniform_point(), CyclePool()) == []

    def test_clique_cycle_fractional_point_is_cut(self):
        """The local optimum at strong repulsion violates a cycle inequality;
        the separator must find the most violated one (checked exhaustively),
        and adding it must strictly lower the LP value."""
        g = build("clique_cycle", 3, 2.0)
        lg = lt.compute_orbits(g)
        system = build_outer_system(lg, "local")
        grad = lg.lifted_theta
        x, val, basis, _ = solve(LinearProgram(
            system.n_vars, system.cs.rows, grad, system.cs.fixed_zero))

        pool = CyclePool()
        rows = separate_cycles(lg, x, pool, max_rows=50)
        assert rows

        best_found = max(sum(c * x[j] for j, c in r.coeffs) - r.rhs for r in rows)
        best_exhaustive = _exhaustive_worst_violation(g, lg, x)
        assert best_exhaustive > 1e-6
        assert abs(best_found - best_exhaustive) < 1e-9

        cs2 = lt.lifted_local(lg)
        for r in rows:
            cs2.rows.append(r)
        _, val2, _, _ = solve(LinearProgram(
            lg.n_vars, cs2.rows, grad, cs2.fixed_zero))
        assert val2 < val - 1e-6


def _exhaustive_worst_violation(g, lg, tau):
    """Max cycle-inequality violation over all simple cycles and odd subsets."""
    adj = {}
    for k, e in enumerate(g.edges):
        adj.setdefault(e.u, []).append((e.v, k))
        adj.setdefault(e.v, []).append((e.u, k))
    lam = {}
    for k in range(len(g.edges)):
        lam[k] = (tau[lg.feat_to_var[g.edge_feature(k, 0, 1)]]
                  + tau[lg.feat_to_var[g.edge_feature(k, 1, 0)]])

    cycles = set()

    def dfs(start, node, visited, path_edges):
        for nxt, k in adj.get(node, []):
            if nxt == start and len(path_edges) >= 2:
                cycles.add(frozenset(path_edges + [k]))
            elif nxt not in visited and nxt > start:
                dfs(start, nxt, visited | {nxt}, path_edges + [k])

    for s in range(len(g.nodes)):
        dfs(s, s, {s}, [])

    worst = -np.inf
    for cyc in cycles:
        edges = sorted(cyc)
        lam_c = np.array([lam[k] for k in edges])
        # best odd subset: flip edges with largest (lam - (1 - lam))
        gain = 2 * lam_c - 1.0
        order = np.argsort(-gain)
        chosen = []
        for count in range(1, len(edges) + 1, 2):
            f = order[:count]
            lhs = lam_c.sum() - lam_c[f].sum() + (1 - lam_c[f]).sum()
            worst = max(worst, 1.0 - lhs)
    return worst
