"""Discrete Lax-Oleinik semigroup: ergodic value, weak-KAM fixed points,
pairwise-action estimates, and integrated-subaction verification."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, GridFunction, path_distance
from .kernel import ActionKernel, apply_operator, build_kernel
from .models import birkhoff_integral, periodic_orbits


class DriftError(RuntimeError):
    def __init__(self, message, drift):
        super().__init__(message)
        self.drift = drift


class NonConvergenceError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


class InconsistencyError(RuntimeError):
    pass


@dataclass
class WeakKamSolution:
    u: GridFunction
    c: float
    residual: float
    phi_bar: float
    iteration_log: list
    lipschitz: float
    stage_a_sweeps: int
    eigenvalue_refinement: float


def ergodic_value(model, phi, method, *, max_period=6, quadrature_step=0.01,
                  grid=None, h=None, c=None, reach_multiplier=2.0):
    """Ergodic minimizing value of phi by one of two estimators.

    ``periodic_orbits``: minimum Birkhoff average over enumerated periodic
    orbits of the suspension.  ``minplus_drift``: per-unit-time additive
    eigenvalue of a min-plus kernel built with reference value 0 (the drift
    rate of unnormalized Lax-Oleinik iterates).
    Returns (value, report dict).
    """
    if method == "periodic_orbits":
        orbits = periodic_orbits(model, max_period)
        averages = []
        for base, period in orbits:
            x0 = np.array([base[0], base[1], 0.0])
            avg = float(birkhoff_integral(model, phi, x0, period,
                                          quadrature_step)) / period
            averages.append(avg)
        k = int(np.argmin(averages))
        return float(averages[k]), {
            "method": method, "n_orbits": len(orbits),
            "argmin_base": orbits[k][0].tolist(), "argmin_period": orbits[k][1],
            "averages": averages,
        }
    if method == "minplus_drift":
        if grid is None:
            grid = Grid((32, 32, 16), (1.0, 1.0, model.roof), model.base_matrix)
        if h is None:
            h = model.roof / 10.0
            h = grid.spacings[2] * max(1, int(h / grid.spacings[2]))
        if c is None:
            c = 4.0 * max(1.0, phi.lipschitz_constant)
        kern = build_kernel(grid, model, phi, c, 0.0, h, reach_multiplier)
        g, bias, info = kern.solve_additive_eigenvalue()
        value = float(np.min(g)) / kern.h
        return value, {"method": method, "howard": info, "h": kern.h,
                       "c": float(c), "gain_spread": info["gain_spread"]}
    raise ValueError(f"unknown method {method!r}")


def cross_validated_ergodic_value(model, phi, tol, **kwargs):
    """Run both estimators; raise InconsistencyError beyond 5x tol."""
    v_orb, rep_orb = ergodic_value(model, phi, "periodic_orbits",
                                   max_period=kwargs.get("max_period", 6),
                                   quadrature_step=kwargs.get("quadrature_step", 0.01))
    v_drift, rep_drift = ergodic_value(
        model, phi, "minplus_drift", grid=kwargs.get("grid"),
        h=kwargs.get("h"), c=kwargs.get("c"),
        reach_multiplier=kwargs.get("reach_multiplier", 2.0))
    gap = abs(v_orb - v_drift)
    if gap > 5.0 * tol:
        raise InconsistencyError(
            f"ergodic-value estimators disagree: {v_orb} vs {v_drift} (gap {gap})")
    return v_drift, {"periodic_orbits": (v_orb, rep_orb),
                     "minplus_drift": (v_drift, rep_drift), "gap": gap}


def weak_kam_solve(kernel: ActionKernel, tol, max_iters=3000,
                   monotone_tol=1e-9, refine_eigenvalue=True):
    """Two-stage weak-KAM fixed point of the discrete semigroup.

    The kernel's reference value is first refined to its exact additive
    eigenvalue (otherwise iterates drift linearly forever and no residual
    tolerance is reachable).  Stage A takes the pointwise minimum of the first
    N_A push-forwards of 0, with N_A*h at least three diameters of travel
    time.  Stage B iterates the operator, which is then monotone nondecreasing
    up to rounding, until the sup-change drops below tol.
    """
    refinement = 0.0
    if refine_eigenvalue:
        g, _, info = kernel.solve_additive_eigenvalue()
        refinement = float(np.min(g)) / kernel.h
        if refinement != 0.0:
            kernel = kernel.with_phi_bar(kernel.phi_bar + refinement)
    diam = kernel.model.diameter()
    n_a = max(1, int(np.ceil(3.0 * diam /
                             (kernel.model.sup_norm_bound * kernel.h))))
    # Stage A: accumulate the pointwise min of push-forwards of 0 until it
    # saturates (no node improves for a full cyclicity window).  Saturation,
    # not just travel-time coverage, is what makes T[v] >= v afterwards: the
    # min over a truncated horizon can still be undercut by longer paths.
    stall_window = max(12, kernel.grid.shape[2] // kernel.flow_steps + 2)
    v = None
    cur = GridFunction.zeros(kernel.grid)
    stall = 0
    sweeps = 0
    while sweeps < n_a or (stall < stall_window and sweeps < max_iters):
        cur = kernel.apply(cur)
        if v is None:
            v = cur.copy()
            sweeps += 1
            continue
        new_v = v.minimum(cur)
        stall = stall + 1 if np.array_equal(new_v.values, v.values) else 0
        v = new_v
        sweeps += 1
    n_a = sweeps
    log = []
    u = v
    scale = max(1.0, float(np.abs(kernel.phi_nodes).max()))
    drift_run = 0
    for it in range(max_iters):
        u1 = kernel.apply(u)
        delta = u1.dense() - u.dense()
        lo, hi = float(delta.min()), float(delta.max())
        residual = max(abs(lo), abs(hi))
        log.append((lo, hi))
        if lo < -max(monotone_tol, tol):
            drift_run += 1
            if drift_run >= 10:
                raise DriftError(
                    "Stage-B iterates are not monotone: reference value "
                    "mis-estimated", drift=lo / kernel.h)
        else:
            drift_run = 0
        u = u1
        if residual < tol:
            lip = u.discrete_lipschitz()
            return WeakKamSolution(
                u=u, c=kernel.c, residual=residual, phi_bar=kernel.phi_bar,
                iteration_log=log, lipschitz=lip, stage_a_sweeps=n_a,
                eigenvalue_refinement=refinement)
    raise NonConvergenceError("weak-KAM iteration did not converge",
                              history=log)


def action_field_from(kernel: ActionKernel, source_index, n_steps):
    """A^{n h}(p, .) as a grid array, from n min-plus sweeps of a delta at p."""
    vals = np.full(kernel.grid.shape, np.inf)
    vals[tuple(source_index)] = 0.0
    u = GridFunction(kernel.grid, vals)
    for _ in range(n_steps):
        u = kernel.apply(u)
    return u.values


def action_field_to(kernel: ActionKernel, target_index, n_steps):
    """A^{n h}(., q) via the reverse sweep."""
    vals = np.full(kernel.grid.shape, np.inf)
    vals[tuple(target_index)] = 0.0
    w = GridFunction(kernel.grid, vals)
    for _ in range(n_steps):
        w = kernel.apply_reverse(w)
    return w.values


def verify_apriori(model, phi, c, t, n_pairs, *, grid=None, h=None,
                   phi_bar=0.0, seed=0, n_sources=8, reach_multiplier=3.0,
                   graph_radius=2):
    """Check the pairwise-action estimates on random point tuples.

    Item 1: |A^t(p,q) - C d(p,q)| <= t (Lip(phi) diam + C ||V||) + slack.
    Item 2: |A^t(p,q) - A^t(p,q~)| <= C d(q,q~) + slack.
    Item 3: |A^t(p,q) - A^t(p~,q)| <= C d(p,p~) + slack.
    Slack is C times one grid diagonal.  Returns a report dict; violations
    land in report['violations'].
    """
    rng = np.random.default_rng(seed)
    if grid is None:
        grid = Grid((32, 32, 16), (1.0, 1.0, model.roof), model.base_matrix)
    if h is None:
        h = grid.spacings[2] * max(1, int((model.roof / 10.0) / grid.spacings[2]))
    kern = build_kernel(grid, model, phi, c, phi_bar, h, reach_multiplier)
    n_steps = max(1, int(round(t / h)))
    t_eff = n_steps * h
    diam = model.diameter()
    envelope = t_eff * (phi.lipschitz_constant * diam
                        + c * model.sup_norm_bound)
    slack = c * grid.diagonal
    shape = grid.shape

    def rand_index():
        return tuple(int(rng.integers(0, n)) for n in shape)

    sources = [rand_index() for _ in range(n_sources)]
    targets = [rand_index() for _ in range(n_sources)]
    fields_from = {p: action_field_from(kern, p, n_steps) for p in sources}
    fields_to = {q: action_field_to(kern, q, n_steps) for q in targets}
    dist_from = {p: grid.path_distance_field(p, radius=graph_radius)
                 .reshape(shape) for p in sources}
    dist_to = {q: grid.path_distance_field(q, radius=graph_radius)
               .reshape(shape) for q in targets}

    violations = []
    worst = {"item1": -np.inf, "item2": -np.inf, "item3": -np.inf}
    checked = 0
    while checked < n_pairs:
        p = sources[int(rng.integers(0, n_sources))]
        q0 = targets[int(rng.integers(0, n_sources))]
        q = rand_index()
        A_pq = fields_from[p][q]
        A_pq0 = fields_from[p][q0]
        A_q0 = fields_to[q0]
        d_pq = dist_from[p][q]
        # item 1
        m1 = abs(A_pq - c * d_pq) - (envelope + slack)
        # item 2: vary the target between q and q0 for the same source p
        m2 = abs(A_pq - A_pq0) - (c * dist_to[q0][q] + slack)
        # item 3: vary the source between p and a fresh p~ for target q0
        p2 = rand_index()
        m3 = abs(A_pq0 - A_q0[p2]) - (c * dist_from[p][p2] + slack)
        for name, m, tup in (("item1", m1, (p, q)), ("item2", m2, (p, q, q0)),
                             ("item3", m3, (p, p2, q0))):
            worst[name] = max(worst[name], float(m))
            if m > 0:
                violations.append({"item": name, "margin": float(m),
                                   "points": tup})
        checked += 1
    return {"n_checked": checked, "worst_margins": worst,
            "violations": violations, "t": t_eff, "slack": slack,
            "envelope": envelope, "passed": len(violations) == 0}


def verify_integrated_subaction(u, model, phi, phi_bar, n_orbits, horizon,
                                *, quadrature_step=0.005, seed=0, slack=None):
    """Check u(f^t x) - u(x) <= int_0^t (phi - phi_bar) along random orbits.

    Dyadic sub-horizons of ``horizon`` are all tested.  The default slack
    budgets interpolation error (Lipschitz of u times one grid diagonal, at
    both endpoints) plus a quadrature term.
    """
    rng = np.random.default_rng(seed)
    lip_u = u.discrete_lipschitz() if hasattr(u, "discrete_lipschitz") else 0.0
    diag = u.grid.diagonal if hasattr(u, "grid") else 0.0
    if slack is None:
        slack = 2.0 * lip_u * diag + 50.0 * phi.lipschitz_constant \
            * quadrature_step ** 2 * max(1.0, horizon)
    starts = rng.random((n_orbits, 3))
    starts[:, 2] *= model.roof
    times = []
    tt = float(horizon)
    while tt > 4 * quadrature_step:
        times.append(tt)
        tt /= 2.0
    worst = np.inf
    witnesses = []
    u0 = np.asarray(u(starts), dtype=float)
    for t in times:
        ends = model.flow_map(starts, t)
        ut = np.asarray(u(ends), dtype=float)
        integ = birkhoff_integral(model, phi, starts, t, quadrature_step)
        margin = (integ - phi_bar * t) - (ut - u0)
        worst = min(worst, float(margin.min()))
        bad = np.nonzero(margin < -slack)[0]
        for b in bad[:10]:
            witnesses.append({"start": starts[b].tolist(), "t": t,
                              "margin": float(margin[b])})
    return {"worst_margin": worst, "slack": float(slack),
            "violations": witnesses, "passed": len(witnesses) == 0,
            "n_orbits": n_orbits, "horizons": times}
