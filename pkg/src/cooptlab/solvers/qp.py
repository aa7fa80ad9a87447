"""Dense primal-dual interior point (Mehrotra predictor-corrector) for concave QPs.

The maximization problem of ``QuadraticProgram`` is solved as

    min 1/2 x'Px + q'x   s.t.  Ax = b,  Gx + s = h,  s >= 0

with P = -H_eff, q = -c, and G stacking the inequality rows followed by the
finite upper and lower bounds.  After convergence an active-set polish
re-solves the equality-constrained KKT system on the identified active rows,
which recovers the vertex-accurate optimum that interior iterates only
approach.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from ..market import QuadraticProgram, SolveReport
from ..numerics import SingularMatrixError, ldl_factor, lu_factor

MAX_ITER = 200
TOL = 1e-9
GAP_TOL = 1e-13
STALL_GAP = 1e-6
POLISH_RATIOS = (1.0, 1e-2, 1e-4, 1e2)
POLISH_TARGET = 1e-12
KKT_TOL = 1e-8


@dataclass
class QPDuals:
    """Multipliers, all >= 0 except ``eq``.  Maximization sign convention:
    grad f = A_ub' ub + A_eq' eq - lower + upper at the optimum."""

    eq: np.ndarray
    ub: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def by_name(self, qp: QuadraticProgram) -> dict[str, float]:
        out = dict(zip(qp.eq_names, map(float, self.eq)))
        out.update(zip(qp.ub_names, map(float, self.ub)))
        for i, name in enumerate(qp.names):
            if self.lower[i] != 0.0:
                out[f"lb:{name}"] = float(self.lower[i])
            if self.upper[i] != 0.0:
                out[f"ub:{name}"] = float(self.upper[i])
        return out


@dataclass
class QPResult:
    x: np.ndarray
    duals: QPDuals
    report: SolveReport

    def __iter__(self):
        return iter((self.x, self.duals, self.report))


def _stack(qp: QuadraticProgram):
    n = qp.n
    up = np.flatnonzero(np.isfinite(qp.upper))
    lo = np.flatnonzero(np.isfinite(qp.lower))
    eye = np.eye(n)
    g = np.vstack([qp.a_ub, eye[up], -eye[lo]])
    h = np.concatenate([qp.b_ub, qp.upper[up], -qp.lower[lo]])
    return g, h, up, lo


def _split_duals(qp, z, y, up, lo) -> QPDuals:
    m_ub = len(qp.ub_names)
    upper = np.zeros(qp.n)
    lower = np.zeros(qp.n)
    upper[up] = z[m_ub:m_ub + len(up)]
    lower[lo] = z[m_ub + len(up):]
    return QPDuals(eq=y.copy(), ub=z[:m_ub].copy(), lower=lower, upper=upper)


def kkt_residual(qp: QuadraticProgram, x, duals: QPDuals) -> float:
    """Max scaled violation of stationarity, feasibility and complementarity."""
    x = np.asarray(x, dtype=float)
    grad = qp.effective_hessian() @ x + qp.linear
    stat = grad - qp.a_ub.T @ duals.ub - qp.a_eq.T @ duals.eq + duals.lower - duals.upper
    r_stat = np.max(np.abs(stat), initial=0.0) / (1.0 + np.max(np.abs(qp.linear), initial=0.0))

    slack_ub = qp.b_ub - qp.a_ub @ x
    scale_b = 1.0 + max(np.max(np.abs(qp.b_ub), initial=0.0), np.max(np.abs(qp.b_eq), initial=0.0))
    viol = [np.max(-slack_ub, initial=0.0),
            np.max(np.abs(qp.a_eq @ x - qp.b_eq), initial=0.0)]
    fin_lo = np.isfinite(qp.lower)
    fin_up = np.isfinite(qp.upper)
    slack_lo = np.where(fin_lo, x - np.where(fin_lo, qp.lower, 0.0), np.inf)
    slack_up = np.where(fin_up, np.where(fin_up, qp.upper, 0.0) - x, np.inf)
    viol.append(np.max(-slack_lo, initial=0.0))
    viol.append(np.max(-slack_up, initial=0.0))
    r_feas = max(viol) / scale_b

    dual_neg = max(np.max(-duals.ub, initial=0.0), np.max(-duals.lower, initial=0.0),
                   np.max(-duals.upper, initial=0.0))
    comp = max(
        np.max(np.minimum(np.abs(duals.ub), np.abs(slack_ub)), initial=0.0),
        np.max(np.minimum(np.abs(duals.lower), np.abs(slack_lo)), initial=0.0),
        np.max(np.minimum(np.abs(duals.upper), np.abs(slack_up)), initial=0.0),
    )
    return float(max(r_stat, r_feas, dual_neg, comp))


def _augmented_solver(p, a, g, w, reg=1e-12, refine: int = 3):
    """Factor the augmented Newton matrix

        [[P, A', G'], [A, 0, 0], [G, 0, -W]]

    (with a small primal/dual regularization) and return a solve function
    that refines against the unregularized matrix.  ``w`` = s / z.
    """
    n, m_eq, m = p.shape[0], a.shape[0], g.shape[0]
    size = n + m_eq + m
    k = np.zeros((size, size))
    k[:n, :n] = p
    k[:n, n:n + m_eq] = a.T
    k[:n, n + m_eq:] = g.T
    k[n:n + m_eq, :n] = a
    k[n + m_eq:, :n] = g
    k[n + m_eq:, n + m_eq:][np.diag_indices(m)] = -w
    k_reg = k.copy()
    k_reg[:n, :n][np.diag_indices(n)] += reg
    k_reg[n:n + m_eq, n:n + m_eq][np.diag_indices(m_eq)] -= reg
    k_reg[n + m_eq:, n + m_eq:][np.diag_indices(m)] -= reg
    # symmetric and quasidefinite once regularized
    fac = ldl_factor(k_reg)

    def solve(rhs):
        sol = fac.solve(rhs)
        for _ in range(refine):
            sol = sol + fac.solve(rhs - k @ sol)
        return sol

    return solve


@dataclass
class _Presolve:
    """Variables pinned by their bounds or by forcing rows, and the
    inequality rows left without free variables."""

    fixed: np.ndarray            # bool mask over variables
    value: np.ndarray            # values of the fixed variables (full length)
    dropped: np.ndarray          # bool mask over ub rows
    events: list                 # (row or -1, vars) in fixing order
    reduced: QuadraticProgram


def _presolve(qp: QuadraticProgram, tol: float = 1e-12) -> _Presolve:
    """Remove pieces with an empty interior.

    A row whose minimum activity over the current bounds already equals its
    right-hand side forces every live variable to the bound attaining that
    minimum; variables with equal bounds are fixed outright.
    """
    n = qp.n
    fixed = np.zeros(n, dtype=bool)
    value = np.zeros(n)
    dropped = np.zeros(len(qp.ub_names), dtype=bool)
    events = []

    pinned = np.flatnonzero(qp.upper - qp.lower <= tol)
    if pinned.size:
        fixed[pinned] = True
        value[pinned] = qp.lower[pinned]
        events.append((-1, pinned))
    changed = True
    while changed:
        changed = False
        for i in np.flatnonzero(~dropped):
            row = qp.a_ub[i]
            live = np.flatnonzero((row != 0.0) & ~fixed)
            rest = qp.b_ub[i] - row[fixed] @ value[fixed]
            scale = 1e-9 * (1.0 + abs(qp.b_ub[i]))
            if live.size == 0:
                if rest < -scale:
                    raise ValueError(f"constraint {qp.ub_names[i]} is infeasible")
                dropped[i] = True
                changed = True
                continue
            coef = row[live]
            at = np.where(coef > 0, qp.lower[live], qp.upper[live])
            if not np.all(np.isfinite(at)):
                continue
            slack = rest - coef @ at
            if slack < -scale:
                raise ValueError(f"constraint {qp.ub_names[i]} is infeasible")
            if slack <= tol * (1.0 + abs(rest)):
                fixed[live] = True
                value[live] = at
                dropped[i] = True
                events.append((int(i), live))
                changed = True

    free = ~fixed
    keep = ~dropped
    h = qp.effective_hessian()
    reduced = QuadraticProgram(
        names=[nm for nm, f in zip(qp.names, free) if f],
        hessian=qp.hessian[np.ix_(free, free)],
        linear=qp.linear[free] + h[np.ix_(free, fixed)] @ value[fixed],
        a_eq=qp.a_eq[:, free], b_eq=qp.b_eq - qp.a_eq[:, fixed] @ value[fixed],
        eq_names=list(qp.eq_names),
        a_ub=qp.a_ub[np.ix_(keep, free)], b_ub=qp.b_ub[keep] - qp.a_ub[np.ix_(keep, fixed)] @ value[fixed],
        ub_names=[nm for nm, k in zip(qp.ub_names, keep) if k],
        lower=qp.lower[free], upper=qp.upper[free],
        tie_break=qp.tie_break, regularized=qp.regularized[free],
    )
    return _Presolve(fixed=fixed, value=value, dropped=dropped, events=events, reduced=reduced)


def _postsolve(qp: QuadraticProgram, pre: _Presolve, xr, dr: QPDuals):
    """Expand a reduced solution.  Multipliers of the removed pieces follow
    from stationarity, resolved in reverse fixing order."""
    free = ~pre.fixed
    x = pre.value.copy()
    x[free] = xr
    ub = np.zeros(len(qp.ub_names))
    ub[~pre.dropped] = dr.ub
    lower = np.zeros(qp.n)
    upper = np.zeros(qp.n)
    lower[free] = dr.lower
    upper[free] = dr.upper
    grad = qp.effective_hessian() @ x + qp.linear
    for row, cols in reversed(pre.events):
        # r_j = grad_j - A_ub[:, j]' ub - A_eq[:, j]' eq must equal upper_j - lower_j
        r = grad[cols] - qp.a_ub[:, cols].T @ ub - qp.a_eq[:, cols].T @ dr.eq
        if row >= 0:
            coef = qp.a_ub[row, cols]
            lam = max(0.0, float(np.max(r / coef)))
            ub[row] = lam
            r = r - coef * lam
        upper[cols] = np.maximum(r, 0.0)
        lower[cols] = np.maximum(-r, 0.0)
    return x, QPDuals(eq=dr.eq.copy(), ub=ub, lower=lower, upper=upper)


def solve_qp(qp: QuadraticProgram, tol: float = TOL, max_iter: int = MAX_ITER,
             polish: bool = True) -> QPResult:
    """Maximize ``qp``; see ``QPDuals`` for the multiplier signs.

    Variables pinned by their bounds are eliminated first (such pieces have
    an empty interior, which stalls interior point methods).
    """
    t0 = time.perf_counter()
    try:
        pre = _presolve(qp)
    except ValueError as exc:
        report = SolveReport(status="numerical-failure", iterations=0, residual=float("inf"),
                             wall_time=time.perf_counter() - t0, message=str(exc))
        return QPResult(x=qp.lower.copy(), duals=QPDuals(np.zeros(len(qp.eq_names)),
                        np.zeros(len(qp.ub_names)), np.zeros(qp.n), np.zeros(qp.n)), report=report)
    if pre.reduced.n:
        xr, dr, status, it, message = _interior_point(pre.reduced, tol, max_iter, polish)
    else:
        xr = np.zeros(0)
        dr = QPDuals(np.zeros(len(qp.eq_names)), np.zeros(len(pre.reduced.ub_names)), np.zeros(0), np.zeros(0))
        status, it, message = "optimal", 0, ""
    x, duals = _postsolve(qp, pre, xr, dr)
    res = kkt_residual(qp, x, duals)
    if status == "optimal" and res > KKT_TOL:
        status = "numerical-failure"
        message = f"KKT residual {res:.3e} above {KKT_TOL:g}"
    report = SolveReport(status=status, iterations=it, residual=res,
                         wall_time=time.perf_counter() - t0, message=message)
    return QPResult(x=x, duals=duals, report=report)


def _interior_point(qp: QuadraticProgram, tol, max_iter, polish):
    """Primal-dual iteration on a presolved problem.

    The interior iteration stops once the scaled residuals are below ``tol``
    and the complementarity gap is below ``GAP_TOL``; if it stalls after
    reaching ``tol`` the last such iterate is kept.  The active-set polish
    then recovers a vertex-accurate primal and nonnegative multipliers.
    """
    p = -qp.effective_hessian()
    q = -qp.linear
    a, b = qp.a_eq, qp.b_eq
    g, h, up, lo = _stack(qp)
    n, m, m_eq = qp.n, g.shape[0], a.shape[0]

    # starting point: regularized least-squares fit to the constraints
    try:
        fac = _augmented_solver(p, a, g, np.ones(m), reg=1e-8)
        sol = fac(np.concatenate([-q, b, h]))
    except SingularMatrixError:
        sol = np.zeros(n + m_eq + m)
    x, y = sol[:n], sol[n:n + m_eq]
    s = h - g @ x
    shift = max(0.0, -s.min(initial=0.0)) + 1.0
    s = s + shift
    z = np.ones(m)

    scale_d = 1.0 + np.max(np.abs(q), initial=0.0)
    scale_p = 1.0 + max(np.max(np.abs(h), initial=0.0), np.max(np.abs(b), initial=0.0))
    status = "iteration-limit"
    message = ""
    best = None
    it = 0
    for it in range(1, max_iter + 1):
        r_d = p @ x + q + a.T @ y + g.T @ z
        r_p = a @ x - b
        r_g = g @ x + s - h
        mu = s @ z / m if m else 0.0
        obj = 0.5 * x @ p @ x + q @ x
        feasible = (np.max(np.abs(r_d), initial=0.0) <= tol * scale_d
                    and max(np.max(np.abs(r_p), initial=0.0), np.max(np.abs(r_g), initial=0.0)) <= tol * scale_p)
        gap_scale = (1.0 + abs(obj)) / max(m, 1)
        if feasible and (best is None or mu < best[0]):
            best = (mu, x.copy(), y.copy(), z.copy(), s.copy())
            if mu <= GAP_TOL * gap_scale:
                status = "optimal"
                break
        if not np.all(np.isfinite(x)) or np.max(np.abs(x), initial=0.0) > 1e12 or np.max(z, initial=0.0) > 1e14:
            status, message = "numerical-failure", "iterates diverged"
            break
        try:
            fac = _augmented_solver(p, a, g, s / z)
        except SingularMatrixError as exc:
            status, message = "numerical-failure", str(exc)
            break

        def direction(r_c):
            # z ds + s dz = -r_c,  G dx + ds = -r_g  =>  G dx - (s/z) dz = r_c/z - r_g
            sol = fac(np.concatenate([-r_d, -r_p, r_c / z - r_g]))
            dx, dy, dz = sol[:n], sol[n:n + m_eq], sol[n + m_eq:]
            ds = -r_g - g @ dx
            return dx, dy, ds, dz

        def max_step(v, dv):
            neg = dv < 0
            if not np.any(neg):
                return 1.0
            return min(1.0, float(np.min(-v[neg] / dv[neg])))

        dx, dy, ds, dz = direction(s * z)
        alpha = min(max_step(s, ds), max_step(z, dz))
        mu_aff = (s + alpha * ds) @ (z + alpha * dz) / m
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        dx, dy, ds, dz = direction(s * z + ds * dz - sigma * mu)
        if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dz))):
            status, message = "numerical-failure", "non-finite Newton direction"
            break
        alpha = min(1.0, 0.99 * min(max_step(s, ds), max_step(z, dz)))
        if alpha < 1e-10:
            status, message = "numerical-failure", "step length collapsed"
            break
        x = x + alpha * dx
        y = y + alpha * dy
        s = s + alpha * ds
        z = z + alpha * dz
    else:
        it = max_iter

    if status != "optimal" and best is not None and best[0] <= STALL_GAP * gap_scale:
        # stalled at the limits of double precision: hand the best feasible
        # iterate to the polish; the final KKT check decides the status
        _, x, y, z, s = best
        status, message = "optimal", ""

    if status == "optimal" and polish:
        # the active set is read off z_i > ratio * s_i; near-degenerate rows
        # (multipliers at tie-break scale) make the ratio matter, so try a few
        best_res = kkt_residual(qp, x, _split_duals(qp, z, y, up, lo))
        for ratio in POLISH_RATIOS:
            polished = _polish(qp, p, q, a, b, g, h, x, y, z, ratio * s)
            if polished is None:
                continue
            res = kkt_residual(qp, polished[0], _split_duals(qp, polished[2], polished[1], up, lo))
            if res < best_res:
                best_res = res
                x, y, z = polished
            if best_res <= POLISH_TARGET:
                break

    return x, _split_duals(qp, z, y, up, lo), status, it, message


def _eq_qp(p, q, a, b, ga, ha, x0, refine: int = 30, reg: float = 1e-9):
    """Primal of min 1/2 x'Px + q'x s.t. a x = b, ga x = ha (P positive definite).

    Degenerate (dependent) rows are handled by a regularized factorization
    with iterative refinement on the exact system; the primal part converges
    even when the multipliers are not unique.
    """
    n, m_eq, m_a = p.shape[0], a.shape[0], ga.shape[0]
    size = n + m_eq + m_a
    k = np.zeros((size, size))
    k[:n, :n] = p
    k[:n, n:n + m_eq] = a.T
    k[:n, n + m_eq:] = ga.T
    k[n:n + m_eq, :n] = a
    k[n + m_eq:, :n] = ga
    rhs = np.concatenate([-q, b, ha])
    k_reg = k.copy()
    k_reg[:n, :n][np.diag_indices(n)] += reg
    k_reg[n:, n:][np.diag_indices(m_eq + m_a)] -= reg
    try:
        fac = lu_factor(k_reg, rtol=0.0)
    except SingularMatrixError:
        return None
    sol = np.concatenate([x0, np.zeros(m_eq + m_a)])
    tol = 1e-15 * (1.0 + np.max(np.abs(rhs), initial=0.0))
    for _ in range(refine):
        r = rhs - k @ sol
        if np.max(np.abs(r), initial=0.0) <= tol:
            break
        sol = sol + fac.solve(r)
    return sol[:n]


def _polish(qp, p, q, a, b, g, h, x, y, z, s, rounds: int = 10):
    """Active-set refinement of an interior solution; None if it fails checks."""
    active = z > s
    scale_h = 1.0 + np.max(np.abs(h), initial=0.0)
    xp = None
    for _ in range(rounds):
        xp = _eq_qp(p, q, a, b, g[active], h[active], x)
        if xp is None:
            return None
        viol = g @ xp - h
        bad = (viol > 1e-11 * scale_h) & ~active
        if not np.any(bad):
            break
        active |= bad
    else:
        return None
    if np.max(g @ xp - h, initial=0.0) > 1e-10 * scale_h:
        return None

    # multipliers: correct the interior duals by least squares on the
    # stationarity condition; fall back to bounded least squares if the
    # correction leaves the nonnegative orthant
    idx = np.flatnonzero(active)
    m_eq = a.shape[0]
    mat = np.hstack([a.T, g[idx].T])
    target = -(p @ xp + q)
    start = np.concatenate([y, z[idx]])
    step = np.linalg.lstsq(mat, target - mat @ start, rcond=None)[0]
    sol = start + step
    if np.min(sol[m_eq:], initial=0.0) < -1e-12 * (1.0 + np.max(np.abs(sol), initial=0.0)):
        lb = np.concatenate([np.full(m_eq, -np.inf), np.zeros(idx.size)])
        sol = scipy.optimize.lsq_linear(mat, target, bounds=(lb, np.inf), method="bvls",
                                        tol=1e-14, lsmr_tol=None).x
    yp = sol[:m_eq]
    zp = np.zeros_like(z)
    zp[idx] = np.maximum(sol[m_eq:], 0.0)
    return xp, yp, zp
