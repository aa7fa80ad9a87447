"""Two-stage energy-and-reserve market: data, the co-optimized QP, its KKT
system, and the separately cleared equilibrium (EQM) complementarity system.

Internal units
--------------
Matrices are built in GW (quantities) and kEUR (money).  Prices keep their
numerical value (EUR/MWh == kEUR/GWh) and so do duals of power constraints
(kEUR/GW == EUR/MW).  ``MarketSolution`` converts back to MW and EUR.

Variable layout (G generators, K scenarios)::

    d, y, x[g], ru[g], rd[g],                      first stage
    u[g,k], v[g,k], yhat[k], shed[k]  for each k,  recourse
    eta, s[k]                                      CVaR auxiliaries

so the count is 2 + 3G + K(2G + 2) + 1 + K.  The EQM system drops the
CVaR block and carries scenario weights instead.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .scenarios import ScenarioSet

MW = 1e-3        # MW -> GW
EUR = 1e-3       # EUR -> kEUR
# proximal weight (kEUR/GW^2) on all dispatch variables; selects a unique
# optimum when the linear-cost parts are degenerate
TIE_BREAK = 1e-5


@dataclass(frozen=True)
class DispatchableGen:
    id: int
    tech: str
    capacity: float      # MW
    cost: float          # EUR/MWh
    ramp_up: float       # p.u. of capacity
    ramp_down: float

    def __post_init__(self):
        if self.capacity < 0 or self.cost < 0:
            raise ValueError(f"generator {self.id}: capacity and cost must be nonnegative")
        if not (0 <= self.ramp_up <= 1 and 0 <= self.ramp_down <= 1):
            raise ValueError(f"generator {self.id}: ramp factors must lie in [0, 1]")


@dataclass(frozen=True)
class DemandCurve:
    gamma0: float        # EUR/MWh
    phi0: float          # EUR/MWh per MWh

    def __post_init__(self):
        if not (self.gamma0 > 0 and self.phi0 > 0):
            raise ValueError("demand curve needs gamma0 > 0 and phi0 > 0")

    @property
    def choke_quantity(self) -> float:
        return self.gamma0 / self.phi0

    def price(self, d: float) -> float:
        return self.gamma0 - self.phi0 * d


@dataclass(frozen=True)
class ReservePolicy:
    mx: float = 0.02
    my: float = 0.15
    a_up: float = 1.1
    a_lo: float = 0.9
    b: float = 0.4

    def __post_init__(self):
        if not (0 <= self.mx <= 1 and 0 <= self.my <= 1):
            raise ValueError("reserve factors must lie in [0, 1]")
        if self.a_lo > self.a_up:
            raise ValueError("a_lo must not exceed a_up")
        if not 0 <= self.b <= 1:
            raise ValueError("b must lie in [0, 1]")


@dataclass(frozen=True)
class SystemConfig:
    name: str
    generators: tuple[DispatchableGen, ...]
    wind_capacity: float
    demand: DemandCurve
    lam: float
    voll: float | None = None

    def __post_init__(self):
        if not self.generators:
            raise ValueError("a system needs at least one generator")
        if not 0 <= self.lam <= 1:
            raise ValueError("lambda must lie in [0, 1]")
        if self.wind_capacity < 0:
            raise ValueError("wind capacity must be nonnegative")

    @property
    def value_of_lost_load(self) -> float:
        return self.demand.gamma0 if self.voll is None else self.voll

    @property
    def dispatchable_capacity(self) -> float:
        return sum(g.capacity for g in self.generators)


@dataclass(frozen=True)
class MarketConfig:
    name: str
    mu: float
    fip: float
    psi: float
    my: float
    theta: float = 0.95
    mx: float = 0.02
    a_up: float = 1.1
    a_lo: float = 0.9
    b: float = 0.4
    n_scenarios: int = 12

    def __post_init__(self):
        if not 0 <= self.psi <= 1:
            raise ValueError("psi must lie in [0, 1]")
        if not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        self.reserve  # validates the reserve constants

    @property
    def reserve(self) -> ReservePolicy:
        return ReservePolicy(mx=self.mx, my=self.my, a_up=self.a_up, a_lo=self.a_lo, b=self.b)


def reserve_requirement(x, y: float, policy: ReservePolicy) -> float:
    """MW of upward reserve the TSO asks for: Mx * sum(x) + My * y."""
    return policy.mx * float(np.sum(x)) + policy.my * float(y)


# ---------------------------------------------------------------------------
# problem containers


@dataclass
class QuadraticProgram:
    """max  1/2 x'Hx + c'x   s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lower <= x <= upper.

    ``tie_break`` is a proximal weight applied (as -tie_break/2 * r_i * x_i^2)
    with per-variable factors r_i from ``regularized`` (a mask or nonnegative
    weights); solvers include it, the economic objective ``objective()`` does
    not.
    """

    names: list[str]
    hessian: np.ndarray
    linear: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    eq_names: list[str]
    a_ub: np.ndarray
    b_ub: np.ndarray
    ub_names: list[str]
    lower: np.ndarray
    upper: np.ndarray
    tie_break: float = 0.0
    regularized: np.ndarray | None = None
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        n = len(self.names)
        self.index = {name: i for i, name in enumerate(self.names)}
        if len(self.index) != n:
            raise ValueError("duplicate variable names")
        if self.regularized is None:
            self.regularized = np.zeros(n, dtype=bool)
        shapes = {
            "hessian": (self.hessian.shape, (n, n)),
            "linear": (self.linear.shape, (n,)),
            "a_eq": (self.a_eq.shape, (len(self.eq_names), n)),
            "b_eq": (self.b_eq.shape, (len(self.eq_names),)),
            "a_ub": (self.a_ub.shape, (len(self.ub_names), n)),
            "b_ub": (self.b_ub.shape, (len(self.ub_names),)),
            "lower": (self.lower.shape, (n,)),
            "upper": (self.upper.shape, (n,)),
        }
        for key, (got, want) in shapes.items():
            if got != want:
                raise ValueError(f"{key} has shape {got}, expected {want}")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def n(self) -> int:
        return len(self.names)

    def effective_hessian(self) -> np.ndarray:
        h = self.hessian.copy()
        h[np.diag_indices(self.n)] -= self.tie_break * self.regularized
        return h

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.hessian @ x + self.linear @ x)

    def is_concave(self, tol: float = 1e-12) -> bool:
        sym = 0.5 * (self.hessian + self.hessian.T)
        if not np.allclose(sym, self.hessian):
            return False
        return bool(np.linalg.eigvalsh(sym).max() <= tol)


@dataclass
class ComplementarityProblem:
    """Box-constrained (mixed) LCP: find lower <= z <= upper with F = Mz + q and

    z_i = lower_i -> F_i >= 0,  z_i = upper_i -> F_i <= 0,  otherwise F_i = 0.
    """

    m: np.ndarray
    q: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    names: list[str]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        n = len(self.names)
        if self.m.shape != (n, n) or self.q.shape != (n,):
            raise ValueError("inconsistent complementarity problem dimensions")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bound vectors have the wrong length")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        self.index = {name: i for i, name in enumerate(self.names)}

    @property
    def n(self) -> int:
        return len(self.names)

    def residual(self, z) -> float:
        """Max violation of the box complementarity conditions (natural residual)."""
        z = np.asarray(z, dtype=float)
        f = self.m @ z + self.q
        proj = np.clip(z - f, self.lower, self.upper)
        return float(np.max(np.abs(z - proj), initial=0.0))


def com_kkt(qp: QuadraticProgram) -> ComplementarityProblem:
    """KKT conditions of a concave QP as a box MCP over (x, dual_ub, dual_eq).

    With L = f - lam'(A_ub x - b_ub) - nu'(A_eq x - b_eq), the x rows are
    F_x = -grad f + A_ub' lam + A_eq' nu, complementary to the bounds of x.
    """
    n, m_ub, m_eq = qp.n, len(qp.ub_names), len(qp.eq_names)
    size = n + m_ub + m_eq
    mat = np.zeros((size, size))
    h = qp.effective_hessian()
    mat[:n, :n] = -h
    mat[:n, n:n + m_ub] = qp.a_ub.T
    mat[:n, n + m_ub:] = qp.a_eq.T
    mat[n:n + m_ub, :n] = -qp.a_ub
    mat[n + m_ub:, :n] = -qp.a_eq
    q = np.concatenate([-qp.linear, qp.b_ub, qp.b_eq])
    lower = np.concatenate([qp.lower, np.zeros(m_ub), np.full(m_eq, -np.inf)])
    upper = np.concatenate([qp.upper, np.full(m_ub, np.inf), np.full(m_eq, np.inf)])
    names = list(qp.names) + [f"dual:{c}" for c in qp.ub_names] + [f"dual:{c}" for c in qp.eq_names]
    return ComplementarityProblem(mat, q, lower, upper, names)


# ---------------------------------------------------------------------------
# model builder


@dataclass(frozen=True)
class ModelLayout:
    """Index bookkeeping shared by the COM and EQM builders."""

    n_gen: int
    n_scen: int
    with_cvar: bool

    @property
    def n_first_stage(self) -> int:
        return 2 + 3 * self.n_gen

    @property
    def n_vars(self) -> int:
        base = self.n_first_stage + self.n_scen * (2 * self.n_gen + 2)
        return base + (1 + self.n_scen if self.with_cvar else 0)

    d = 0
    y = 1

    def x(self, g):
        return 2 + g

    def ru(self, g):
        return 2 + self.n_gen + g

    def rd(self, g):
        return 2 + 2 * self.n_gen + g

    def _block(self, k):
        return self.n_first_stage + k * (2 * self.n_gen + 2)

    def u(self, g, k):
        return self._block(k) + g

    def v(self, g, k):
        return self._block(k) + self.n_gen + g

    def yhat(self, k):
        return self._block(k) + 2 * self.n_gen

    def shed(self, k):
        return self._block(k) + 2 * self.n_gen + 1

    @property
    def eta(self):
        return self.n_first_stage + self.n_scen * (2 * self.n_gen + 2)

    def s(self, k):
        return self.eta + 1 + k

    def names(self) -> list[str]:
        G, K = self.n_gen, self.n_scen
        out = ["d", "y"]
        out += [f"x[{g}]" for g in range(G)]
        out += [f"ru[{g}]" for g in range(G)]
        out += [f"rd[{g}]" for g in range(G)]
        for k in range(K):
            out += [f"u[{g},{k}]" for g in range(G)]
            out += [f"v[{g},{k}]" for g in range(G)]
            out += [f"yhat[{k}]", f"shed[{k}]"]
        if self.with_cvar:
            out += ["eta"] + [f"s[{k}]" for k in range(K)]
        return out


def variable_count(n_gen: int, n_scen: int) -> int:
    return ModelLayout(n_gen, n_scen, True).n_vars


def risk_bounds(sys: SystemConfig) -> tuple[float, float]:
    """A priori range (kEUR) that contains every scenario profit.

    Profits are minus dispatch cost minus shedding cost, so they lie in
    [-(sum C X + voll * d_choke), 0].
    """
    worst = sum(g.cost * g.capacity for g in sys.generators) + sys.value_of_lost_load * sys.demand.choke_quantity
    return -worst * EUR - 1.0, 0.0


def _linear(lay: ModelLayout, sys: SystemConfig, mkt: MarketConfig, scen: ScenarioSet,
            weights) -> np.ndarray:
    """Linear objective term for scenario weights ``weights``."""
    G, K = lay.n_gen, lay.n_scen
    cost = np.array([g.cost for g in sys.generators])
    w = np.asarray(weights, dtype=float)
    c = np.zeros(lay.n_vars)
    c[lay.d] = sys.demand.gamma0
    c[lay.y] = mkt.fip
    # sum_k w_k * delta_k, delta_k = -sum_g C_g (x_g + u_gk - v_gk) - voll * shed_k
    c[lay.x(0):lay.x(0) + G] = -cost * w.sum()
    block = np.zeros((K, 2 * G + 2))
    block[:, :G] = -np.outer(w, cost)
    block[:, G:2 * G] = np.outer(w, cost)
    block[:, 2 * G + 1] = -w * sys.value_of_lost_load
    c[lay.u(0, 0):lay.u(0, 0) + block.size] = block.ravel()
    if lay.with_cvar:
        p = np.asarray(scen.probabilities, dtype=float)
        c[lay.eta] = mkt.psi
        c[lay.s(0):lay.s(0) + K] = -mkt.psi * p / (1.0 - mkt.theta)
    return c


def _build(sys: SystemConfig, mkt: MarketConfig, scen: ScenarioSet,
           weights, with_cvar: bool, recourse_scale=None) -> QuadraticProgram:
    G, K = len(sys.generators), scen.n
    lay = ModelLayout(G, K, with_cvar)
    n = lay.n_vars
    pol = mkt.reserve
    cap = np.array([g.capacity for g in sys.generators]) * MW
    cost = np.array([g.cost for g in sys.generators])
    r_up = np.array([g.ramp_up for g in sys.generators])
    r_dn = np.array([g.ramp_down for g in sys.generators])
    wind = sys.wind_capacity * MW
    voll = sys.value_of_lost_load
    w = np.asarray(weights, dtype=float)

    hess = np.zeros((n, n))
    hess[lay.d, lay.d] = -sys.demand.phi0 * EUR / MW**2
    c = _linear(lay, sys, mkt, scen, w)

    rows: list[tuple[str, dict[int, float], float]] = []
    for g in range(G):
        rows.append((f"cap[{g}]", {lay.x(g): 1.0, lay.ru(g): 1.0}, cap[g]))
        rows.append((f"rd_le_x[{g}]", {lay.rd(g): 1.0, lay.x(g): -1.0}, 0.0))
        rows.append((f"ramp_up[{g}]", {lay.ru(g): 1.0, lay.x(g): r_up[g] * sys.lam}, r_up[g] * cap[g]))
        rows.append((f"ramp_dn[{g}]", {lay.rd(g): 1.0, lay.x(g): r_dn[g] * sys.lam}, r_dn[g] * cap[g]))
    # A_lo * req - sum ru <= 0  and  sum ru - A_up * req <= 0
    lo = {lay.x(g): pol.a_lo * pol.mx for g in range(G)}
    lo[lay.y] = pol.a_lo * pol.my
    for g in range(G):
        lo[lay.ru(g)] = -1.0
    rows.append(("res_up_lo", lo, 0.0))
    hi = {lay.x(g): -pol.a_up * pol.mx for g in range(G)}
    hi[lay.y] = -pol.a_up * pol.my
    for g in range(G):
        hi[lay.ru(g)] = 1.0
    rows.append(("res_up_hi", hi, 0.0))
    dn_lo = {lay.ru(g): pol.b for g in range(G)}
    dn_lo.update({lay.rd(g): -1.0 for g in range(G)})
    rows.append(("res_dn_lo", dn_lo, 0.0))
    dn_hi = {lay.ru(g): -1.0 for g in range(G)}
    dn_hi.update({lay.rd(g): 1.0 for g in range(G)})
    rows.append(("res_dn_hi", dn_hi, 0.0))
    for k in range(K):
        for g in range(G):
            rows.append((f"deploy_up[{g},{k}]", {lay.u(g, k): 1.0, lay.ru(g): -1.0}, 0.0))
        for g in range(G):
            rows.append((f"deploy_dn[{g},{k}]", {lay.v(g, k): 1.0, lay.rd(g): -1.0}, 0.0))
        rows.append((f"shed_le_d[{k}]", {lay.shed(k): 1.0, lay.d: -1.0}, 0.0))
    if with_cvar:
        # eta - delta_k - s_k <= 0, in kEUR
        for k in range(K):
            row = {lay.eta: 1.0, lay.s(k): -1.0, lay.shed(k): voll}
            for g in range(G):
                row[lay.x(g)] = cost[g]
                row[lay.u(g, k)] = cost[g]
                row[lay.v(g, k)] = -cost[g]
            rows.append((f"cvar[{k}]", row, 0.0))

    a_ub = np.zeros((len(rows), n))
    b_ub = np.zeros(len(rows))
    for i, (_, coefs, rhs) in enumerate(rows):
        for j, val in coefs.items():
            a_ub[i, j] = val
        b_ub[i] = rhs

    # demand minus supply = 0, so equality duals carry the sign of a price
    eq_names = ["da_balance"] + [f"rt_balance[{k}]" for k in range(K)]
    a_eq = np.zeros((1 + K, n))
    a_eq[0, lay.d] = 1.0
    a_eq[0, lay.y] = -1.0
    for g in range(G):
        a_eq[0, lay.x(g)] = -1.0
    for k in range(K):
        a_eq[1 + k, lay.d] = 1.0
        a_eq[1 + k, lay.yhat(k)] = -1.0
        a_eq[1 + k, lay.shed(k)] = -1.0
        for g in range(G):
            a_eq[1 + k, lay.x(g)] = -1.0
            a_eq[1 + k, lay.u(g, k)] = -1.0
            a_eq[1 + k, lay.v(g, k)] = 1.0
    b_eq = np.zeros(1 + K)

    lower = np.zeros(n)
    upper = np.full(n, np.inf)
    upper[lay.d] = sys.demand.choke_quantity * MW
    upper[lay.y] = wind
    for k in range(K):
        upper[lay.yhat(k)] = scen.values[k] * wind
    regularized = np.ones(n)
    regularized[lay.d] = 0.0
    if recourse_scale is not None:
        block = 2 * G + 2
        start = lay.n_first_stage
        regularized[start:start + K * block] = np.repeat(np.asarray(recourse_scale, dtype=float), block)
    if with_cvar:
        eta_lo, eta_hi = risk_bounds(sys)
        lower[lay.eta], upper[lay.eta] = eta_lo, eta_hi
        for k in range(K):
            upper[lay.s(k)] = eta_hi - eta_lo
        # eta and s need no tie-break: with Psi > 0 they are pinned by the
        # objective (eta at the left tail quantile, s at the hinge), with
        # Psi = 0 by the bounds below
        regularized[lay.eta:] = 0.0
        if mkt.psi == 0.0:
            # the CVaR term carries no weight: pin the auxiliaries so the
            # hinge rows stay slack and cannot steer the dispatch
            upper[lay.eta] = eta_lo
            upper[[lay.s(k) for k in range(K)]] = 0.0

    return QuadraticProgram(
        names=lay.names(), hessian=hess, linear=c,
        a_eq=a_eq, b_eq=b_eq, eq_names=eq_names,
        a_ub=a_ub, b_ub=b_ub, ub_names=[r[0] for r in rows],
        lower=lower, upper=upper, tie_break=TIE_BREAK, regularized=regularized,
    )


def build_com_qp(sys: SystemConfig, mkt: MarketConfig, scen: ScenarioSet) -> QuadraticProgram:
    """Risk-averse co-optimization of energy and reserve as a concave QP.

    Objective: consumer surplus + FiP * y + (1 - Psi) E[delta] + Psi CVaR(delta),
    with CVaR written through (eta, s_k).
    """
    p = np.asarray(scen.probabilities, dtype=float)
    return _build(sys, mkt, scen, (1.0 - mkt.psi) * p, with_cvar=True)


def _relative_weights(scen: ScenarioSet, weights) -> np.ndarray:
    """rho_k = weights_k / p_k after validating both vectors."""
    w = np.asarray(weights, dtype=float)
    p = np.asarray(scen.probabilities, dtype=float)
    if w.shape != (scen.n,) or np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("scenario weights must form a probability vector")
    if np.any(p <= 0.0):
        raise ValueError("scenario probabilities must be positive")
    return np.maximum(w, 0.0) / p


def build_weighted_qp(sys: SystemConfig, mkt: MarketConfig, scen: ScenarioSet, weights) -> QuadraticProgram:
    """Risk-neutral QP with fixed scenario weights (no CVaR block).

    The tie-break on the recourse of scenario k is scaled by weights_k / p_k
    like its costs, so a scenario's real-time dispatch stays cost-driven
    however small its weight.
    """
    rho = _relative_weights(scen, weights)
    return _build(sys, mkt, scen, np.asarray(weights, dtype=float), with_cvar=False, recourse_scale=rho)


def reweight_qp(qp: QuadraticProgram, sys: SystemConfig, mkt: MarketConfig, scen: ScenarioSet,
                weights) -> QuadraticProgram:
    """``build_weighted_qp`` at new weights, reusing the constraints of ``qp``."""
    rho = _relative_weights(scen, weights)
    lay = ModelLayout(len(sys.generators), scen.n, False)
    reg = qp.regularized.copy()
    block = 2 * lay.n_gen + 2
    start = lay.n_first_stage
    reg[start:start + lay.n_scen * block] = np.repeat(rho, block)
    return dataclasses.replace(qp, linear=_linear(lay, sys, mkt, scen, weights), regularized=reg)


COUPLING_ROWS = ("res_up_lo", "res_up_hi")


def coupling_entries(mcp: ComplementarityProblem, n_gen: int) -> list[tuple[int, int]]:
    """(row, col) positions of the reserve-requirement duals in the x and y rows."""
    rows = [mcp.index["y"]] + [mcp.index[f"x[{g}]"] for g in range(n_gen)]
    cols = [mcp.index[f"dual:{c}"] for c in COUPLING_ROWS]
    return [(r, c) for r in rows for c in cols]


SCENARIO_ROWS = ("deploy_up", "deploy_dn", "shed_le_d", "rt_balance")


def scenario_dual_columns(names, n_gen: int, n_scen: int) -> list[np.ndarray]:
    """Per scenario, the positions in ``names`` of the duals of its constraints."""
    index = {name: i for i, name in enumerate(names)}
    out = []
    for k in range(n_scen):
        cols = [index[f"dual:deploy_up[{g},{k}]"] for g in range(n_gen)]
        cols += [index[f"dual:deploy_dn[{g},{k}]"] for g in range(n_gen)]
        cols += [index[f"dual:shed_le_d[{k}]"], index[f"dual:rt_balance[{k}]"]]
        out.append(np.array(cols))
    return out


def build_eqm_mcp(sys: SystemConfig, mkt: MarketConfig, scen: ScenarioSet,
                  weights, t: float = 0.0) -> ComplementarityProblem:
    """Separately cleared market as an MCP.

    The KKT system of the weighted risk-neutral QP, with the coupling of the
    upward-reserve requirement duals into the x and y stationarity rows
    scaled by ``t``: t = 1 is co-optimization, t = 0 is EQM.

    The rows and duals of scenario k are divided by rho_k = weights_k / p_k
    (see ``reweight_eqm_mcp``), so the weights act only on the first-stage
    rows and a vanishing weight leaves a well-posed dispatch problem.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"homotopy parameter must lie in [0, 1], got {t}")
    mcp = com_kkt(build_weighted_qp(sys, mkt, scen, scen.probabilities))
    for r, c in coupling_entries(mcp, len(sys.generators)):
        mcp.m[r, c] *= t
    return reweight_eqm_mcp(mcp, sys, mkt, scen, weights)


def reweight_eqm_mcp(mcp: ComplementarityProblem, sys: SystemConfig, mkt: MarketConfig,
                     scen: ScenarioSet, weights) -> ComplementarityProblem:
    """The EQM system at scenario weights ``weights`` from the one at the
    nominal probabilities (``mcp``).

    With rho_k = weights_k / p_k, the KKT rows of the recourse of scenario k
    carry the factor rho_k (costs and tie-break alike); dividing them by
    rho_k and writing that scenario's duals as mu_k = lambda_k / rho_k leaves
    q and every scenario row unchanged and scales only the mu_k columns of
    the first-stage rows by rho_k.  The result shares q and the bounds with
    ``mcp``; its duals are mu, see ``scenario_duals``.
    """
    rho = _relative_weights(scen, weights)
    lay = ModelLayout(len(sys.generators), scen.n, False)
    m = mcp.m.copy()
    rows = np.arange(lay.n_first_stage)
    for k, cols in enumerate(scenario_dual_columns(mcp.names, lay.n_gen, lay.n_scen)):
        m[np.ix_(rows, cols)] *= rho[k]
    return ComplementarityProblem(m, mcp.q, mcp.lower, mcp.upper, mcp.names)


def scenario_duals(qp: QuadraticProgram, ub, eq, scen: ScenarioSet, weights):
    """Multipliers of the weighted QP from the scaled EQM duals: the duals
    of scenario k's constraints are multiplied by rho_k."""
    rho = _relative_weights(scen, weights)
    ub = np.array(ub, dtype=float)
    eq = np.array(eq, dtype=float)
    for names, vals in ((qp.ub_names, ub), (qp.eq_names, eq)):
        for i, name in enumerate(names):
            head, _, rest = name.partition("[")
            if head in SCENARIO_ROWS:
                vals[i] *= rho[int(rest.rstrip("]").split(",")[-1])]
    return ub, eq


# ---------------------------------------------------------------------------
# solutions


@dataclass
class SolveReport:
    status: str                  # optimal | ray-termination | iteration-limit | numerical-failure
    iterations: int
    residual: float
    wall_time: float
    message: str = ""
    fixed_point_residual: float | None = None   # EQM weight iteration only

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


@dataclass
class MarketSolution:
    """Primal schedule (MW), recourse (MW), risk auxiliaries (EUR) and duals.

    Duals of power constraints are in EUR/MW; ``duals`` maps every constraint
    name of the underlying QP to its multiplier.
    """

    model: str
    d: float
    y: float
    x: np.ndarray
    ru: np.ndarray
    rd: np.ndarray
    u: np.ndarray            # (G, K)
    v: np.ndarray
    yhat: np.ndarray         # (K,)
    shed: np.ndarray
    eta: float | None
    s: np.ndarray | None
    duals: dict[str, float]
    report: SolveReport
    vector: np.ndarray       # raw QP primal (GW / kEUR)
    weights: np.ndarray | None = None
    objective: float | None = None   # EUR, economic objective of the QP
    basis: np.ndarray | None = None   # final Lemke basis, for warm starts

    @property
    def kappa_up(self) -> float:
        return self.duals["res_up_lo"]

    @property
    def gamma_up(self) -> float:
        return self.duals["res_up_hi"]

    @property
    def kappa_dn(self) -> float:
        return self.duals["res_dn_lo"]

    @property
    def gamma_dn(self) -> float:
        return self.duals["res_dn_hi"]

    @property
    def first_stage(self) -> np.ndarray:
        return np.concatenate([[self.d, self.y], self.x, self.ru, self.rd])

    def scenario_profits(self, sys: SystemConfig) -> np.ndarray:
        """delta_k in EUR: minus dispatch cost minus shedding cost."""
        cost = np.array([g.cost for g in sys.generators])
        dispatch = self.x[:, None] + self.u - self.v
        return -(cost @ dispatch) - sys.value_of_lost_load * self.shed


def unpack(qp: QuadraticProgram, n_gen: int, n_scen: int, vec, ub_duals, eq_duals,
           report: SolveReport, model: str, weights=None) -> MarketSolution:
    with_cvar = "eta" in qp.index
    lay = ModelLayout(n_gen, n_scen, with_cvar)
    vec = np.asarray(vec, dtype=float)
    q = vec / MW
    G, K = n_gen, n_scen
    duals = dict(zip(qp.ub_names, map(float, ub_duals)))
    duals.update(zip(qp.eq_names, map(float, eq_duals)))
    return MarketSolution(
        model=model,
        d=float(q[lay.d]),
        y=float(q[lay.y]),
        x=np.array([q[lay.x(g)] for g in range(G)]),
        ru=np.array([q[lay.ru(g)] for g in range(G)]),
        rd=np.array([q[lay.rd(g)] for g in range(G)]),
        u=np.array([[q[lay.u(g, k)] for k in range(K)] for g in range(G)]),
        v=np.array([[q[lay.v(g, k)] for k in range(K)] for g in range(G)]),
        yhat=np.array([q[lay.yhat(k)] for k in range(K)]),
        shed=np.array([q[lay.shed(k)] for k in range(K)]),
        eta=float(vec[lay.eta] / EUR) if with_cvar else None,
        s=np.array([vec[lay.s(k)] / EUR for k in range(K)]) if with_cvar else None,
        duals=duals,
        report=report,
        vector=vec,
        weights=None if weights is None else np.asarray(weights, dtype=float),
        objective=qp.objective(vec) / EUR,
    )
