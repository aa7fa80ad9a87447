"""Lemke's complementary pivoting for (box-constrained) linear complementarity.

A box MCP is first rewritten as a standard LCP

    find v >= 0 with  w = M v + q >= 0,  v'w = 0

by an affine change of variables z = c + T v: a variable with a finite lower
bound becomes l + v_j, one with only an upper bound u - v_j, a free one
v_j - v_j', and a doubly bounded one l + v_j with an extra multiplier for
its upper bound.  The transformed matrix keeps positive semidefiniteness.

The pivoting itself is the revised form (the basis inverse is kept and
refactorized periodically) with lexicographic ratio-test tie breaking and
Bland's lowest-index rule as last resort.  A basis from an earlier solve can
be passed back in to warm start: if it is still feasible for the new q it is
returned at once, otherwise it seeds the covering vector.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse

from ..market import ComplementarityProblem, SolveReport
from ..numerics import SingularMatrixError, sparse_lu_factor

RESIDUAL_TOL = 1e-8
REFACTOR_EVERY = 64
PIVOT_TOL = 1e-9
TIE_RTOL = 1e-10
FEAS_TOL = 1e-11


@dataclass(frozen=True)
class LCPReduction:
    """Standard-form LCP (m, q) equivalent to a box MCP.

    Primary LCP variable j stands for MCP variable ``source[j]`` with sign
    ``sign[j]``; z = offset + T v[:n_primary] recovers the MCP variables.
    """

    m: np.ndarray
    q: np.ndarray
    offset: np.ndarray
    source: np.ndarray
    sign: np.ndarray

    @property
    def n_primary(self) -> int:
        return self.source.size

    @property
    def transform(self) -> np.ndarray:
        t = np.zeros((self.offset.size, self.n_primary))
        t[self.source, np.arange(self.n_primary)] = self.sign
        return t

    def recover(self, v) -> np.ndarray:
        z = self.offset.copy()
        np.add.at(z, self.source, self.sign * np.asarray(v)[:self.n_primary])
        return z


def reduce_mcp(problem: ComplementarityProblem) -> LCPReduction:
    n = problem.n
    lo, up = problem.lower, problem.upper
    offset = np.zeros(n)
    cols: list[tuple[int, float]] = []      # (mcp index, sign) per primary LCP variable
    boxed: list[tuple[int, float]] = []     # (primary column, width)
    for i in range(n):
        fin_lo, fin_up = np.isfinite(lo[i]), np.isfinite(up[i])
        if fin_lo and fin_up and up[i] <= lo[i]:
            offset[i] = lo[i]               # fixed: no LCP variable
        elif fin_lo:
            offset[i] = lo[i]
            cols.append((i, 1.0))
            if fin_up:
                boxed.append((len(cols) - 1, up[i] - lo[i]))
        elif fin_up:
            offset[i] = up[i]
            cols.append((i, -1.0))
        else:
            cols.append((i, 1.0))
            cols.append((i, -1.0))
    n_p, n_b = len(cols), len(boxed)
    src = np.array([i for i, _ in cols], dtype=int)
    sgn = np.array([s for _, s in cols])
    m = np.zeros((n_p + n_b, n_p + n_b))
    # T'MT for a signed selection T
    m[:n_p, :n_p] = problem.m[np.ix_(src, src)] * np.outer(sgn, sgn)
    q = np.empty(n_p + n_b)
    q[:n_p] = sgn * (problem.m @ offset + problem.q)[src]
    for b, (j, width) in enumerate(boxed):
        m[j, n_p + b] = 1.0
        m[n_p + b, j] = -1.0
        q[n_p + b] = width
    return LCPReduction(m=m, q=q, offset=offset, source=src, sign=sgn)


@dataclass
class LCPSolution:
    z: np.ndarray
    w: np.ndarray
    status: str
    iterations: int
    basis: np.ndarray | None      # column indices into [I, -M]; None unless solved


def _complement(j: int, n: int) -> int:
    return j + n if j < n else j - n


def _is_complementary(basis, n) -> bool:
    return (basis.shape == (n,) and bool(np.all((basis >= 0) & (basis < 2 * n)))
            and np.array_equal(np.sort(basis % n), np.arange(n)))


class _Augmented:
    """The matrix [I, -M] (dense for single columns, CSC for bases)."""

    def __init__(self, m):
        n = m.shape[0]
        self.dense = np.hstack([np.eye(n), -m])
        self.sparse = scipy.sparse.csc_matrix(self.dense)

    def update(self, m):
        n = m.shape[0]
        self.dense[:, n:] = -m
        self.sparse = scipy.sparse.csc_matrix(self.dense)

    def basis(self, idx):
        return self.sparse[:, idx]


def _basic_values(a: _Augmented, q, basis, fac=None):
    """Factorization of the basis and the values of the basic variables
    (with refinement); (None, None) if the basis is singular.  ``fac`` may
    carry an existing factorization of the basis."""
    cols = a.basis(basis)
    if fac is None:
        try:
            fac = sparse_lu_factor(cols)
        except SingularMatrixError:
            return None, None
    x = fac.solve(q)
    for _ in range(2):
        x = x + fac.solve(q - cols @ x)
    return fac, x


class _EtaInverse:
    """Basis inverse in product form: the LU factors of a reference basis
    followed by one eta column per pivot since then."""

    def __init__(self, fac):
        self.fac = fac
        self.etas: list[tuple[int, np.ndarray]] = []

    def ftran(self, v) -> np.ndarray:
        """B^{-1} v."""
        x = self.fac.solve(v)
        for r, c in self.etas:
            xr = x[r] / c[r]
            x -= c * xr
            x[r] = xr
        return x

    def rows(self, idx) -> np.ndarray:
        """Rows ``idx`` of B^{-1}."""
        u = np.zeros((len(idx), self.fac.n))
        u[np.arange(len(idx)), idx] = 1.0
        for r, c in reversed(self.etas):
            u[:, r] = (2.0 * u[:, r] - u @ c) / c[r]
        return self.fac.solve(u.T, trans=True).T

    def update(self, r: int, col: np.ndarray):
        self.etas.append((r, col.copy()))


def _refined(inv: _EtaInverse, cols, q, steps: int = 2):
    """Basic values from the updated inverse, refined against the basis
    itself; None unless the refined residual is small."""
    x = inv.ftran(q)
    for _ in range(steps):
        x = x + inv.ftran(q - cols @ x)
    res = np.abs(cols @ x - q).max()
    return x if res <= 1e-9 * (1.0 + np.abs(q).max()) else None


def _feasible(xb) -> bool:
    return xb is not None and bool(np.all(xb >= -FEAS_TOL * (1.0 + np.abs(xb).max())))


def _pivot_path(a: _Augmented, q, basis, cover, max_iter, fac=None):
    """One complementary pivoting path from a complementary ``basis`` with
    covering vector ``cover``; ``fac`` may carry the basis factorization.
    Returns (status, basis, iterations, basis inverse)."""
    n = q.size
    basis = basis.copy()
    z0 = 2 * n

    full = scipy.sparse.hstack([a.sparse, scipy.sparse.csc_matrix(-cover[:, None])], format="csc")

    def column(j):
        return -cover if j == z0 else a.dense[:, j]

    def refactor(bas, fac=None):
        if fac is None:
            fac = sparse_lu_factor(full[:, bas])
        return _EtaInverse(fac), fac.solve(q)

    try:
        inv, xb = refactor(basis, fac)
    except SingularMatrixError:
        return "numerical-failure", basis, 0, None

    def choose(rows, ratios, col):
        """Lexicographic minimum ratio among near-tied rows, then lowest index."""
        best = ratios.min()
        tied = rows[ratios <= best + TIE_RTOL * (1.0 + abs(best))]
        if tied.size > 1 and np.any(basis[tied] == z0):
            return int(tied[basis[tied] == z0][0])
        if tied.size > 1:
            lex = inv.rows(tied) / col[tied, None]
            # only columns where the tied rows differ can decide
            for k in np.flatnonzero(np.ptp(lex, axis=0) > 0.0):
                vals = lex[:, k]
                lo = vals.min()
                keep = vals <= lo + TIE_RTOL * (1.0 + abs(lo))
                tied, lex = tied[keep], lex[keep]
                if tied.size == 1:
                    break
        if tied.size > 1:
            tied = tied[np.argsort(basis[tied], kind="stable")]
        return int(tied[0])

    def pivot(r, col, entering):
        nonlocal xb
        xb[r] /= col[r]
        xr = xb[r]
        xb -= col * xr
        xb[r] = xr
        inv.update(r, col)
        basis[r] = entering

    # first pivot: z0 enters at the most negative transformed q
    col = inv.ftran(column(z0))       # = -1 in exact arithmetic
    r = choose(np.arange(n), xb / -col, -col)
    leaving = int(basis[r])
    pivot(r, col, z0)
    entering = _complement(leaving, n)

    it = 1
    since_refactor = 1
    while it < max_iter:
        col = inv.ftran(column(entering))
        scale = max(1.0, float(np.abs(col).max()))
        rows = np.flatnonzero(col > PIVOT_TOL * scale)
        if rows.size == 0 and since_refactor > 0:
            # confirm the ray on a freshly factorized basis before giving up
            try:
                inv, xb = refactor(basis)
            except SingularMatrixError:
                return "numerical-failure", basis, it, None
            since_refactor = 0
            col = inv.ftran(column(entering))
            scale = max(1.0, float(np.abs(col).max()))
            rows = np.flatnonzero(col > PIVOT_TOL * scale)
        # z0 already at zero: pivot it out directly (the ratio test can miss
        # this on a degenerate step)
        r0 = int(np.flatnonzero(basis == z0)[0])
        if xb[r0] <= FEAS_TOL * (1.0 + np.abs(xb).max()):
            for cand in (entering, _complement(entering, n)):
                c = col if cand == entering else inv.ftran(column(cand))
                if abs(c[r0]) > PIVOT_TOL * max(1.0, float(np.abs(c).max())):
                    pivot(r0, c, cand)
                    return "optimal", basis, it + 1, inv
        if rows.size == 0:
            return "ray-termination", basis, it, None
        ratios = np.maximum(xb[rows], 0.0) / col[rows]
        r = choose(rows, ratios, col)
        leaving = int(basis[r])
        pivot(r, col, entering)
        it += 1
        since_refactor += 1
        if leaving == z0:
            return "optimal", basis, it, inv
        entering = _complement(leaving, n)
        if since_refactor >= REFACTOR_EVERY:
            try:
                inv, xb = refactor(basis)
            except SingularMatrixError:
                return "numerical-failure", basis, it, None
            since_refactor = 0
    return "iteration-limit", basis, it, None


def lemke_lcp(m, q, basis=None, max_iter: int | None = None, restarts: int = 3,
              augmented=None, factors=None) -> LCPSolution:
    """Solve the standard LCP  w = M z + q,  w, z >= 0,  w'z = 0.

    Rounding can leave a path ending on a basis whose fresh solve is slightly
    infeasible; the path is then restarted from that basis (covering vector
    B 1), at most ``restarts`` times.  A failed warm start falls back to the
    cold start once.  ``augmented`` may pass a prepared [I, -M] (as kept by
    ``WarmStart``) and ``factors`` an LU factorization of the ``basis``
    columns.
    """
    m = np.asarray(m, dtype=float)
    q = np.asarray(q, dtype=float)
    n = q.size
    if m.shape != (n, n):
        raise ValueError(f"M has shape {m.shape}, expected {(n, n)}")
    max_iter = 10 * max(n, 1) if max_iter is None else max_iter
    a = _Augmented(m) if augmented is None else augmented

    def done(bas, xb, it):
        v = np.zeros(2 * n)
        v[bas] = np.maximum(xb, 0.0)
        return LCPSolution(z=v[n:], w=v[:n], status="optimal", iterations=it, basis=bas.copy())

    if np.all(q >= 0.0):
        return LCPSolution(z=np.zeros(n), w=q.copy(), status="optimal", iterations=0, basis=np.arange(n))

    cold = np.arange(n)
    start = cold
    if basis is not None:
        basis = np.asarray(basis, dtype=int)
        if _is_complementary(basis, n):
            start = basis.copy()
    used = 0
    status = "numerical-failure"
    cold_tried = start is cold
    if start is cold:
        factors = None
    for _ in range(restarts + 2):
        fac, xb = _basic_values(a, q, start, factors)
        factors = None
        if xb is None:
            if cold_tried:
                break
            start, cold_tried = cold, True
            continue
        if _feasible(xb):
            return done(start, xb, used)
        cover = np.ones(n) if start is cold else a.dense[:, start] @ np.ones(n)
        status, end, it, inv = _pivot_path(a, q, start, cover, max_iter - used, fac=fac)
        used += it
        if status == "optimal":
            xb = _refined(inv, a.basis(end), q)
            if xb is not None and _feasible(xb):
                return done(end, xb, used)
            start = end                  # refactorized (or restarted) on the next pass
            continue
        if used >= max_iter:
            break
        if not cold_tried:
            start, cold_tried = cold, True
            continue
        break
    if status == "optimal":
        _, xb = _basic_values(a, q, start)
        if xb is not None and _feasible(xb):
            return done(start, xb, used)
        status = "numerical-failure"     # restarts exhausted without a verified basis
    return LCPSolution(z=np.zeros(n), w=q.copy(), status=status, iterations=used, basis=None)


@dataclass
class LemkeResult:
    z: np.ndarray
    report: SolveReport
    basis: np.ndarray | None = None

    def __iter__(self):
        return iter((self.z, self.report))


class WarmStart:
    """Memory for repeated solves of MCPs with the same bounds.

    Keeps the standard-form reduction and the final bases of the last few
    solves.  A new problem first tries each kept basis (one factorization
    and triangular solve each); only if none is feasible does the pivoting
    run, started from the most recent basis.  Problems are matched by the
    identity of their bound arrays (and of ``m``), which are held here so
    the identities stay valid.
    """

    def __init__(self, size: int = 8):
        self.size = size
        self._bounds = None
        self._m = None
        self._red: LCPReduction | None = None
        self.augmented: _Augmented | None = None
        self._bases: list[list] = []        # [basis, factors or None, columns or None]

    def reduction(self, problem: ComplementarityProblem) -> LCPReduction:
        same_bounds = (self._bounds is not None and problem.lower is self._bounds[0]
                       and problem.upper is self._bounds[1])
        if not same_bounds:
            self._bounds, self._m = (problem.lower, problem.upper), problem.m
            self._red, self._bases = reduce_mcp(problem), []
            self.augmented = _Augmented(self._red.m)
            return self._red
        red = self._red
        n_p = red.n_primary
        m = red.m
        if problem.m is not self._m:
            self._m = problem.m
            m = red.m.copy()
            m[:n_p, :n_p] = problem.m[np.ix_(red.source, red.source)] * np.outer(red.sign, red.sign)
            self.augmented.update(m)
            for entry in self._bases:
                entry[1] = entry[2] = None
        q = red.q.copy()
        q[:n_p] = red.sign * (problem.m @ red.offset + problem.q)[red.source]
        self._red = LCPReduction(m=m, q=q, offset=red.offset, source=red.source, sign=red.sign)
        return self._red

    def _factors(self, i: int):
        entry = self._bases[i]
        if entry[1] is None:
            cols = self.augmented.basis(entry[0])
            try:
                entry[1], entry[2] = sparse_lu_factor(cols), cols
            except SingularMatrixError:
                return None, None
        return entry[1], entry[2]

    def lookup(self, q) -> LCPSolution | None:
        n = q.size
        for i in range(len(self._bases)):
            fac, cols = self._factors(i)
            if fac is None:
                continue
            xb = fac.solve(q)
            xb = xb + fac.solve(q - cols @ xb)
            if _feasible(xb):
                self._bases.insert(0, self._bases.pop(i))
                basis = self._bases[0][0]
                v = np.zeros(2 * n)
                v[basis] = np.maximum(xb, 0.0)
                return LCPSolution(z=v[n:], w=v[:n], status="optimal", iterations=0,
                                   basis=basis.copy())
        return None

    @property
    def last(self) -> np.ndarray | None:
        return self._bases[0][0] if self._bases else None

    @property
    def last_factors(self):
        return self._factors(0)[0] if self._bases else None

    def add(self, basis):
        if any(np.array_equal(b[0], basis) for b in self._bases):
            return
        self._bases.insert(0, [basis.copy(), None, None])
        del self._bases[self.size:]


def lemke(problem: ComplementarityProblem, basis=None, max_iter: int | None = None,
          warm: WarmStart | None = None) -> LemkeResult:
    """Solve a box MCP by reduction to a standard LCP and Lemke's method.

    ``basis`` (from a previous ``LemkeResult`` of a problem with the same
    structure) warm-starts the pivoting; ``warm`` does the same across a
    sequence of problems sharing matrix and bounds.
    """
    t0 = time.perf_counter()
    red = reduce_mcp(problem) if warm is None else warm.reduction(problem)
    sol = None
    factors = None
    if warm is not None:
        sol = warm.lookup(red.q)
        if basis is None:
            basis, factors = warm.last, warm.last_factors
    if sol is None:
        sol = lemke_lcp(red.m, red.q, basis=basis, max_iter=max_iter,
                        augmented=None if warm is None else warm.augmented, factors=factors)
        if warm is not None and sol.status == "optimal":
            warm.add(sol.basis)
    z = red.recover(sol.z)
    if sol.status == "optimal":
        z = np.clip(z, problem.lower, problem.upper)
        res = problem.residual(z)
        status = "optimal" if res <= RESIDUAL_TOL else "numerical-failure"
        message = "" if status == "optimal" else f"complementarity residual {res:.3e}"
    else:
        res = float("inf")
        status = sol.status
        message = {"ray-termination": "secondary ray: no complementary solution on this path",
                   "iteration-limit": "pivot limit reached",
                   "numerical-failure": "singular basis"}.get(sol.status, "")
    report = SolveReport(status=status, iterations=sol.iterations, residual=res,
                         wall_time=time.perf_counter() - t0, message=message)
    return LemkeResult(z=z, report=report, basis=sol.basis)
