"""Lifted tree-reweighted objective and its conditional-gradient optimizer.

The optimization variable is one pseudomarginal per assignment orbit (plus
cluster count variables when exchangeable constraints are active).  The
concave objective is the linear term plus an entropy combination whose
node-orbit coefficient is ``sum_e |e| d(v,e) rho_e - |v|`` and whose
edge-orbit coefficient is ``-|e| rho_e``; maximizing it over an outer bound of
the lifted marginal polytope yields a convex upper bound on the log-partition
function.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .lpsolve import Basis as LpBasis
from .lpsolve import Simplex
from .polytope import build_outer_system, separate_cycles

LOG_CLAMP = 1e-12
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def entropy_coefficients(lg, rho):
    """Per-orbit coefficients of the entropy terms in the bound.

    Returns ``(node_coefs, edge_coefs)``: the multiplier of each node orbit's
    and edge orbit's entropy inside the (negated) entropy bound, so the bound
    equals ``sum_v node_coefs[v] H(tau_v) + sum_e edge_coefs[e] H(tau_e)``.
    """
    rho = np.asarray(rho, dtype=float)
    node_coefs = np.array([-float(o.size) for o in lg.node_orbits])
    edge_coefs = np.zeros(len(lg.edge_orbits))
    for eo in lg.edge_orbits:
        edge_coefs[eo.id] = -eo.size * rho[eo.id]
        for v in (eo.u_orbit, eo.v_orbit) if eo.u_orbit != eo.v_orbit else (eo.u_orbit,):
            node_coefs[v] += eo.size * eo.d(v) * rho[eo.id]
    return node_coefs, edge_coefs


def _xlogx(x):
    x = np.asarray(x, dtype=float)
    return x * np.log(np.maximum(x, 1e-300))


class TrwObjective:
    """Vectorized value/gradient of the lifted TRW objective."""

    def __init__(self, lg, rho, n_vars=None):
        n_vars = lg.n_vars if n_vars is None else n_vars
        self.lg = lg
        self.n_tau = lg.n_vars
        self.n_vars = n_vars
        node_coefs, edge_coefs = entropy_coefficients(lg, rho)
        w = np.zeros(n_vars)
        for var in range(lg.n_vars):
            kind, oid = lg.var_orbit[var]
            coef = node_coefs[oid] if kind == "node" else edge_coefs[oid]
            w[var] = coef * lg.var_mult[var]
        self.w = w
        self.theta = np.zeros(n_vars)
        self.theta[:lg.n_vars] = lg.lifted_theta
        self._went = np.where(w != 0.0)[0]

    def entropy_bound(self, x):
        return -float(self.w @ _xlogx(np.asarray(x)[:self.n_vars]))

    def linear(self, x):
        return float(self.theta @ np.asarray(x)[:self.n_vars])

    def value(self, x):
        x = np.asarray(x)[:self.n_vars]
        return float(self.theta @ x + self.w @ _xlogx(x))

    def grad(self, x):
        x = np.maximum(np.asarray(x)[:self.n_vars], LOG_CLAMP)
        return self.theta + self.w * (1.0 + np.log(x))

    def line_function(self, x, delta):
        """Cheap evaluator of the objective along ``x + l * delta``."""
        lin0 = float(self.theta @ x)
        lin1 = float(self.theta @ delta)
        idx = self._went
        xe = x[idx]
        de = delta[idx]
        we = self.w[idx]

        def phi(l):
            u = xe + l * de
            return lin0 + l * lin1 + float(we @ (u * np.log(np.maximum(u, 1e-300))))

        return phi


def lifted_entropy_bound(tau, rho, lg):
    """The entropy bound term evaluated at ``tau`` (natural log, 0 ln 0 = 0)."""
    return TrwObjective(lg, rho).entropy_bound(tau)


def lifted_linear_term(tau, lg):
    """Inner product of the lifted parameters with ``tau``."""
    return float(np.asarray(lg.lifted_theta) @ np.asarray(tau)[:lg.n_vars])


def gradient(tau, rho, lg):
    """Gradient of the full objective (linear term minus entropy bound)."""
    return TrwObjective(lg, rho).grad(tau)


def entropy_bound_gradient(tau, rho, lg):
    """Gradient of the entropy bound alone, with logs clamped at 1e-12."""
    obj = TrwObjective(lg, rho)
    return obj.theta - obj.grad(tau)


def golden_section(f, lo=0.0, hi=1.0, tol=1e-8):
    """Golden-section search for the argmax of a unimodal ``f`` on [lo, hi].

    Returns ``(x, f(x))`` for the best point evaluated; uses about
    ``log(tol / (hi - lo)) / log(0.618)`` evaluations.
    """
    a, b = float(lo), float(hi)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    best = (c, fc) if fc >= fd else (d, fd)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
            if fc > best[1]:
                best = (c, fc)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
            if fd > best[1]:
                best = (d, fd)
    return best


@dataclass
class TrwResult:
    bound: float
    objective: float
    tau: np.ndarray
    gap_trace: list[float]
    objective_trace: list[float]
    iterations: int
    converged: bool
    node_marginals: dict
    outer: str
    rho: np.ndarray
    millis: float = 0.0
    lp_pivots: int = 0
    n_cuts: int = 0
    cluster_counts: dict = field(default_factory=dict)


def _face_newton(obj, free, active, tau, max_steps):
    """Newton iteration for the stationary point on one active face."""
    nf = free.size
    col_of = {int(j): k for k, j in enumerate(free)}
    m = len(active)
    E = np.zeros((m, nf))
    b_e = np.zeros(m)
    for i, row in enumerate(active):
        b_e[i] = row.rhs
        for j, c in row.coeffs:
            k = col_of.get(int(j))
            if k is not None:
                E[i, k] += c
            else:
                b_e[i] -= c * tau[j]

    x = np.maximum(tau[free], 1e-12)
    kkt = np.zeros((nf + m, nf + m))
    kkt[:nf, nf:] = E.T
    kkt[nf:, :nf] = E
    kkt[nf:, nf:] = 1e-10 * np.eye(m)
    rhs = np.zeros(nf + m)
    diag = np.arange(nf)
    for _ in range(max_steps):
        xs = np.maximum(x, 1e-18)
        grad = obj.theta[free] + obj.w[free] * (1.0 + np.log(xs))
        kkt[diag, diag] = obj.w[free] / xs - 1e-10
        rhs[:nf] = -grad
        rhs[nf:] = b_e - E @ x
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            return None
        dx = sol[:nf]
        if not np.isfinite(dx).all():
            return None
        neg = dx < 0
        lam = 1.0
        if neg.any():
            ratio = x[neg] / -dx[neg]
            lam = min(1.0, 0.9995 * float(ratio.min()))
        if lam <= 0:
            break
        x = x + lam * dx
        if float(np.abs(dx).max()) * lam <= 1e-13 * (1.0 + float(np.abs(x).max())):
            break
    return x


def _newton_polish(obj, rows, fixed_zero, tau, active_tol=1e-7, pin_tol=1e-10,
                   max_steps=25, max_rounds=6):
    """Refine ``tau`` by Newton steps on its active face.

    Runs an active-set loop: solve the equality-constrained stationarity
    system on the current face, then add any inequality rows the candidate
    violates and retry.  Returns a feasible candidate or None; the caller
    must still gate on objective improvement and re-certify the LP gap.
    """
    n = obj.n_vars
    tau = np.asarray(tau, dtype=float)
    pinned = np.zeros(n, dtype=bool)
    if fixed_zero is not None:
        pinned |= np.asarray(fixed_zero, dtype=bool)
    pinned |= (tau <= pin_tol) & (obj.w == 0.0)
    free = np.where(~pinned)[0]
    if free.size == 0:
        return None

    active = []
    inactive = []
    for row in rows:
        val = sum(c * tau[j] for j, c in row.coeffs)
        if row.rel == "=" or val >= row.rhs - active_tol:
            active.append(row)
        else:
            inactive.append(row)

    for _ in range(max_rounds):
        x = _face_newton(obj, free, active, tau, max_steps)
        if x is None:
            return None
        cand = np.zeros(n)
        cand[free] = np.maximum(x, 0.0)
        violated = []
        still = []
        for row in inactive:
            val = sum(c * cand[j] for j, c in row.coeffs)
            if val > row.rhs + 1e-9:
                violated.append(row)
            else:
                still.append(row)
        if not violated:
            for row in active:
                val = sum(c * cand[j] for j, c in row.coeffs)
                if row.rel == "=" and abs(val - row.rhs) > 1e-8:
                    return None
                if row.rel == "<=" and val > row.rhs + 1e-8:
                    return None
            return cand
        active = active + violated
        inactive = still
    return None


def frank_wolfe(lg, outer="local", rho=None, tol=1e-4, max_iters=1000,
                ls_tol=1e-8, cut_rounds=50, cut_batch=20, polish=True,
                polish_every=25, polish_size_cap=1500):
    """Conditional gradient on the lifted TRW objective.

    Starts from the moments of the uniform distribution, solves a direction
    LP per iteration (with a cutting-plane inner loop when cycle constraints
    are enabled), takes a golden-section step, and stops when the duality gap
    drops to ``tol``.  The returned bound is the final objective plus the
    final gap, a certified upper bound on the constrained supremum even when
    the iteration limit is hit.

    When ``polish`` is on, a Newton refinement of the current iterate on its
    active face is attempted once the gap is small; the refined point is
    adopted only when it is feasible and improves the objective, and
    convergence is still declared through the usual LP gap certificate.
    """
    if rho is None:
        raise ValueError("edge appearance vector rho is required")
    t0 = time.perf_counter()
    if lg.n_vars == 0:
        return TrwResult(0.0, 0.0, np.zeros(0), [], [], 0, True, {}, outer,
                         np.asarray(rho, dtype=float))

    system = build_outer_system(lg, outer)
    obj = TrwObjective(lg, rho, system.n_vars)
    simplex = Simplex(system.n_vars, system.cs.rows, system.cs.fixed_zero)
    tau = system.uniform_point()

    gap_trace = []
    obj_trace = []
    basis = None
    if system.start_basis is not None:
        basis = LpBasis(tuple(system.start_basis))
    pivots = 0
    converged = False
    F = obj.value(tau)
    gap = math.inf
    it = 0
    clean_vertices = set()
    last_polish = -(10 ** 9)
    n_pinned = int(system.cs.fixed_zero.sum()) if system.cs.fixed_zero is not None else 0
    kkt_dim = system.n_vars - n_pinned + len(system.cs.rows)
    may_polish = polish and kkt_dim <= polish_size_cap

    def direction(gvec, warm):
        """Solve the direction LP, running cut separation at its vertex."""
        nonlocal pivots
        res = simplex.solve(gvec, warm=warm)
        pivots += res.iterations
        s = res.x
        if system.use_cycles:
            for _ in range(cut_rounds):
                key = s.round(9).tobytes()
                if key in clean_vertices:
                    break
                new_rows = separate_cycles(lg, s, system.pool, max_rows=cut_batch)
                if not new_rows:
                    clean_vertices.add(key)
                    break
                simplex.add_rows(new_rows)
                res = simplex.solve(gvec)
                pivots += res.iterations
                s = res.x
        return res.basis, s

    def attempt_polish(g_scale):
        """Try the face refinement; adopt and report whether tau improved."""
        nonlocal tau, F
        tols = sorted({max(1e-7, min(t, 0.2)) for t in
                       (0.5 * g_scale, 0.05 * g_scale, 1e-3, 1e-7)})
        best_cand, best_f = None, F
        for act_tol in tols:
            cand = _newton_polish(obj, simplex.rows, system.cs.fixed_zero,
                                  tau, active_tol=act_tol)
            if cand is not None:
                f_cand = obj.value(cand)
                if f_cand > best_f:
                    best_cand, best_f = cand, f_cand
        if best_cand is not None:
            tau, F = best_cand, best_f
            return True
        return False

    while it < max_iters:
        it += 1
        if may_polish and (it == 1 or it - last_polish >= polish_every):
            last_polish = it
            attempt_polish(gap if math.isfinite(gap) else 1.0)

        gvec = obj.grad(tau)
        basis, s = direction(gvec, basis)
        gap = float(gvec @ (s - tau))
        gap_trace.append(gap)
        obj_trace.append(F)
        if gap <= tol:
            if system.use_cycles:
                new_rows = separate_cycles(lg, tau, system.pool, max_rows=cut_batch)
                if new_rows:
                    simplex.add_rows(new_rows)
                    last_polish = it - polish_every
                    continue
            # squeeze the certificate before declaring convergence: keep
            # refining while the face Newton still strictly improves
            if may_polish and gap > 1e-9:
                last_polish = it
                if attempt_polish(max(gap, 1e-7)):
                    continue
            converged = True
            break

        delta = s - tau
        hi = 1.0 - 1e-9 if (s[:system.n_tau] <= LOG_CLAMP).any() else 1.0
        # entropic coordinates may shrink at most 100x per step: landing hard
        # on the boundary makes the curvature explode and stalls the search
        guard = (obj.w != 0.0) & (delta < 0.0) & (tau > 1e-6)
        if guard.any():
            hi = min(hi, float(np.min(0.99 * tau[guard] / -delta[guard])))
        lam, flam = golden_section(obj.line_function(tau, delta), 0.0, hi, ls_tol)
        if flam > F:
            tau = tau + lam * delta
            F = flam

    bound = F + max(gap, 0.0) if math.isfinite(gap) else F
    marginals = lg.node_marginals(tau)
    clusters = {cl.node_orbit: tau[cl.c_offset:cl.c_offset + cl.size + 1].copy()
                for cl in system.clusters}
    return TrwResult(
        bound=float(bound),
        objective=float(F),
        tau=tau,
        gap_trace=gap_trace,
        objective_trace=obj_trace,
        iterations=it,
        converged=converged,
        node_marginals=marginals,
        outer=outer,
        rho=np.asarray(rho, dtype=float),
        millis=(time.perf_counter() - t0) * 1000.0,
        lp_pivots=pivots,
        n_cuts=len(system.pool),
        cluster_counts=clusters,
    )


def uniform_edge_appearance(lg):
    """A valid fallback rho: every edge orbit gets (|V| - 1) / |E|."""
    n_nodes = len(lg.model.nodes)
    n_edges = len(lg.model.edges)
    if n_edges == 0:
        return np.zeros(len(lg.edge_orbits))
    return np.full(len(lg.edge_orbits), (n_nodes - 1) / n_edges)
