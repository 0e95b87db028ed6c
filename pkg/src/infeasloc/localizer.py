"""Sparse infeasibility localization.

Solves::

    min   0.5 |i_f|^2 + sum_j c_j |i_f_j|
    s.t.  I(x) + S i_f = 0

with the absolute values split through bounds ``-t <= i_f <= t`` and a
primal-dual interior-point Newton method on the perturbed KKT conditions::

    i_f + lam_inj + mu_u - mu_l = 0        stationarity in i_f
    c - mu_u - mu_l             = 0        stationarity in t
    J(x)^T lam                  = 0        stationarity in x
    I(x) + S i_f                = 0        balance
    mu_u (t - i_f)              = eps      upper bound
    mu_l (t + i_f)              = eps      lower bound

The bound variables are eliminated component by component, leaving the same
``(x, lam)`` saddle system as the least-squares solve but with a diagonal
weight ``d_j = 1 / w_j`` in place of the identity; ``d_j -> 0`` for blocked
components and ``-> 1`` for active ones.

A uniform ``c`` gives plain L1 regularization; per-bus enforcers from
:func:`assign_enforcers` give the bus-wise variant.
"""
from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import ecf
from .errors import KTooLarge, SingularMatrix, VoltageCollapse
from .linsolve import lu_solve
from .network import Network
from .pfcore import (
    InfeasibilitySolution,
    SolverOptions,
    Status,
    _limit_step,
    _state_shift,
    kkt_matrix,
    solve_l2,
)

logger = logging.getLogger(__name__)

TAU_BOUNDARY = 0.995
EPS_FACTOR = 0.2
MERIT_RHO = 10.0
MU_REG_INIT = 1e-4
MU_REG_MAX = 1e8


class Provenance(str, enum.Enum):
    UNIFORM = "UniformScalar"
    BUS_WISE = "BusWise"


@dataclass(frozen=True)
class EnforcerVector:
    """Per injection-bus enforcer, applied to both current components."""

    c: np.ndarray
    provenance: Provenance
    c_h: float | None = None
    c_l: float | None = None
    major: tuple[int, ...] = ()  # positions in the injection set

    @classmethod
    def uniform(cls, value: float, n_inj_bus: int) -> "EnforcerVector":
        if value < 0:
            raise ValueError("enforcer must be nonnegative")
        return cls(np.full(n_inj_bus, float(value)), Provenance.UNIFORM)

    def components(self) -> np.ndarray:
        """Enforcer per injection component (real block, then imaginary)."""
        return np.concatenate([self.c, self.c])


@dataclass(frozen=True)
class SparsityConfig:
    k: int = 1
    c_h: float = 10.0
    c_l: float = 0.1
    r: float = 0.75
    tau_sparse: float = 1e-4
    epsilon0: float = 1e-2
    epsilon_min: float = 1e-8
    max_outer: int = 60
    margin: float = 0.1
    # hooks for optional per-iteration adjustments in the outer loop;
    # called as hook(cfg, trace) -> cfg. Off by default.
    adjust_thresholds: object = field(default=None, compare=False)
    adjust_rate: object = field(default=None, compare=False)

    def __post_init__(self):
        if not 0 < self.c_l < self.c_h:
            raise ValueError("need 0 < c_l < c_h")
        if not 0 < self.r < 1:
            raise ValueError("shrinkage rate r must lie in (0, 1)")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.tau_sparse > 0:
            raise ValueError("tau_sparse must be > 0")
        if not 0 < self.epsilon_min <= self.epsilon0:
            raise ValueError("need 0 < epsilon_min <= epsilon0")
        if not self.margin > 0:
            raise ValueError("margin must be > 0")


@dataclass(frozen=True)
class KktReport:
    stationarity_if: float
    dual_feas: float
    comp_upper: float
    comp_lower: float
    primal_feas: float
    stationarity_x: float
    threshold_gap: float
    blocked_excess: float
    threshold_gap_bus: float

    def max_residual(self) -> float:
        return max(self.stationarity_if, self.dual_feas, self.comp_upper, self.comp_lower,
                   self.primal_feas, self.stationarity_x)


@dataclass
class OuterStep:
    k_goal: int
    k_actual: int
    objective: float
    status: Status
    iterations: int


# ---------------------------------------------------------------------------
# small building blocks
# ---------------------------------------------------------------------------


def init_bounds(i_f, margin: float = 0.1, c=None, epsilon: float = 0.0):
    """Strictly feasible bound slacks and multipliers around ``i_f``.

    ``t = |i_f| + margin``. The multipliers split ``c`` in inverse
    proportion to the two bound gaps (so ``mu_u + mu_l = c`` and each
    bound's complementarity product is equal), with a floor of
    ``epsilon / (2 t)``.
    """
    if not margin > 0:
        raise ValueError("margin must be > 0")
    i_f = np.asarray(i_f, dtype=float)
    c = np.ones_like(i_f) if c is None else np.broadcast_to(np.asarray(c, dtype=float), i_f.shape)
    t = np.abs(i_f) + margin
    gap_u = t - i_f
    gap_l = t + i_f
    mu_u = c * gap_l / (gap_u + gap_l)
    mu_l = c * gap_u / (gap_u + gap_l)
    floor = epsilon / (2 * t)
    return t, np.maximum(mu_u, floor), np.maximum(mu_l, floor)


def sparsity_count(sol: InfeasibilitySolution | np.ndarray, tau: float = 1e-4) -> int:
    """Number of injection buses whose current magnitude exceeds ``tau``."""
    if not tau > 0:
        raise ValueError("tau must be > 0")
    mag = sol.per_bus_mag if isinstance(sol, InfeasibilitySolution) else np.asarray(sol)
    return int(np.count_nonzero(mag > tau))


def assign_enforcers(sol: InfeasibilitySolution | np.ndarray, k: int, c_h: float = 10.0,
                     c_l: float = 0.1) -> EnforcerVector:
    """The ``k`` largest-magnitude buses get ``c_l``, the rest ``c_h``.

    Ties go to the lower injection index. ``k`` above the number of
    injection buses is clamped with a :class:`KTooLarge` warning.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not c_l < c_h:
        raise ValueError("need c_l < c_h")
    mag = sol.per_bus_mag if isinstance(sol, InfeasibilitySolution) else np.asarray(sol, dtype=float)
    if k > mag.size:
        warnings.warn(f"sparse goal k={k} exceeds {mag.size} injection buses; clamped", KTooLarge, stacklevel=2)
        k = mag.size
    # stable sort on -mag keeps ascending index order among equal magnitudes
    major = np.sort(np.argsort(-mag, kind="stable")[:k])
    c = np.full(mag.size, float(c_h))
    c[major] = c_l
    return EnforcerVector(c, Provenance.BUS_WISE, float(c_h), float(c_l), tuple(int(i) for i in major))


def objective(i_f, c_comp) -> float:
    i_f = np.asarray(i_f)
    return 0.5 * float(i_f @ i_f) + float(np.asarray(c_comp) @ np.abs(i_f))


# ---------------------------------------------------------------------------
# interior point
# ---------------------------------------------------------------------------


class _Ipm:
    """One sparse solve: state, residuals and the Newton step."""

    def __init__(self, net: Network, c_comp: np.ndarray, opts: SolverOptions):
        self.net = net
        self.mdl = ecf.model(net)
        self.c = c_comp
        self.bounded = c_comp > 0
        self.opts = opts
        self.inj = self.mdl.inj_rows
        mask = np.zeros(self.mdl.n_eq, dtype=bool)
        mask[self.inj] = True
        self.inj_mask = mask

    def residuals(self, z, eps):
        x, f, t, lam, mu_u, mu_l = z
        mdl = self.mdl
        g = mdl.residual(x)
        r_x = mdl.jacobian(x).T @ lam
        r_p = g.copy()
        r_p[self.inj] += f
        r_f = f + lam[self.inj] + mu_u - mu_l
        b = self.bounded
        r_t = np.where(b, self.c - mu_u - mu_l, 0.0)
        r_u = np.where(b, mu_u * (t - f) - eps, 0.0)
        r_l = np.where(b, mu_l * (t + f) - eps, 0.0)
        return r_x, r_f, r_t, r_p, r_u, r_l

    @staticmethod
    def norm(res) -> float:
        return max(float(np.abs(r).max()) if r.size else 0.0 for r in res)

    def direction(self, z, res, mu_reg):
        x, f, t, lam, mu_u, mu_l = z
        r_x, r_f, r_t, r_p, r_u, r_l = res
        b = self.bounded
        gu = np.where(b, t - f, 1.0)
        gl = np.where(b, t + f, 1.0)
        su = np.where(b, mu_u / gu, 0.0)
        sl = np.where(b, mu_l / gl, 0.0)
        ssum = np.where(b, su + sl, 1.0)
        sdif = su - sl
        rho = np.where(b, -r_u / gu - r_l / gl - r_t, 0.0)
        w = 1.0 + np.where(b, 4.0 * su * sl / ssum, 0.0)
        q = -r_f + np.where(b, r_u / gu - r_l / gl + sdif * rho / ssum, 0.0)
        d = 1.0 / w

        mdl = self.mdl
        nx = mdl.n_x
        K = kkt_matrix(mdl, x, lam, d)
        if mu_reg:
            K = K + _state_shift(mdl, mu_reg)
        rhs_p = -r_p
        rhs_p[self.inj] -= d * q
        dz = lu_solve(K, np.concatenate([-r_x, rhs_p]))
        dx, dlam = dz[:nx], dz[nx:]
        df = (q - dlam[self.inj]) * d
        dt = np.where(b, (rho + sdif * df) / ssum, 0.0)
        du = np.where(b, (-r_u - mu_u * dt + mu_u * df) / gu, 0.0)
        dl = np.where(b, (-r_l - mu_l * dt - mu_l * df) / gl, 0.0)
        return dx, df, dt, dlam, du, dl

    def max_step(self, z, dz) -> float:
        """Fraction-to-boundary step keeping gaps and multipliers positive."""
        _, f, t, _, mu_u, mu_l = z
        _, df, dt, _, du, dl = dz
        b = self.bounded
        alpha = 1.0
        for v, dv in ((t - f, dt - df), (t + f, dt + df), (mu_u, du), (mu_l, dl)):
            neg = b & (dv < 0)
            if neg.any():
                alpha = min(alpha, float(np.min(-TAU_BOUNDARY * v[neg] / dv[neg])))
        return alpha

    def merit(self, z, nu, eps):
        """Augmented Lagrangian of the barrier problem, multipliers ``nu``."""
        x, f, t, lam, mu_u, mu_l = z
        g = self.mdl.residual(x)
        g[self.inj] += f
        b = self.bounded
        barrier = -eps * (np.log(t[b] - f[b]).sum() + np.log(t[b] + f[b]).sum())
        return (0.5 * f @ f + self.c[b] @ t[b] + barrier + nu @ g + 0.5 * MERIT_RHO * g @ g)

    def stage(self, z, eps, tol, max_iter):
        """Newton iterations at fixed ``eps`` until the residual is below ``tol``."""
        res = self.residuals(z, eps)
        norm = self.norm(res)
        it = 0
        mu_reg = MU_REG_INIT
        while norm > tol and it < max_iter:
            it += 1
            accepted = False
            local = norm < 1e-4
            while mu_reg <= MU_REG_MAX:
                try:
                    dz = self.direction(z, res, 0.0 if local else mu_reg)
                except (SingularMatrix, VoltageCollapse):
                    if local:
                        local = False
                        continue
                    mu_reg = max(10 * mu_reg, 1e-6)
                    continue
                alpha = min(self.max_step(z, dz), _limit_step(self.mdl, dz[0], self.opts.damping))
                if local:
                    zn = _advance(z, dz, alpha)
                    try:
                        rn = self.residuals(zn, eps)
                        if self.norm(rn) < norm:
                            accepted = True
                            break
                    except VoltageCollapse:
                        pass
                    local = False
                    continue
                nu = z[3] + dz[3]
                m0 = self.merit(z, nu, eps)
                while alpha > 1e-3:
                    zn = _advance(z, dz, alpha)
                    try:
                        if self.merit(zn, nu, eps) <= m0 - 1e-8 * alpha * abs(m0):
                            rn = self.residuals(zn, eps)
                            accepted = True
                            break
                    except VoltageCollapse:
                        pass
                    alpha *= 0.5
                if accepted:
                    break
                mu_reg = max(10 * mu_reg, 1e-6)
            if not accepted:
                break
            z, res = zn, rn
            norm = self.norm(res)
            mu_reg = mu_reg / 10 if mu_reg > 1e-10 else 0.0
        return z, norm, it


def _advance(z, dz, alpha):
    return tuple(v + alpha * dv for v, dv in zip(z, dz))


def _purify(ipm: _Ipm, z, tol, max_rounds=8):
    """Solve the exact (eps = 0) optimality conditions on the support
    identified by the interior point, then rebuild consistent bound data.

    Components with ``|lam_j| > c_j`` are active with
    ``i_f_j = -sign(lam_j) (|lam_j| - c_j)``; the rest are held at zero.
    Returns ``None`` if the active set does not settle.
    """
    mdl = ipm.mdl
    nx = mdl.n_x
    inj = ipm.inj
    c = ipm.c
    x, f, t, lam, mu_u, mu_l = (np.array(v, copy=True) for v in z)
    active = (np.abs(lam[inj]) > c) | ~ipm.bounded
    for _ in range(max_rounds):
        sign = np.sign(lam[inj])
        for _ in range(30):
            lam_i = lam[inj]
            f = np.where(active, -lam_i + np.where(ipm.bounded, c * sign, 0.0), 0.0)
            g = mdl.residual(x)
            g[inj] += f
            F = np.concatenate([mdl.jacobian(x).T @ lam, g])
            if np.abs(F).max() <= tol * 1e-2:
                break
            try:
                dz = lu_solve(kkt_matrix(mdl, x, lam, active.astype(float)), F)
            except (SingularMatrix, VoltageCollapse):
                return None
            x = x - dz[:nx]
            lam = lam - dz[nx:]
        else:
            return None
        lam_i = lam[inj]
        new_active = (np.abs(lam_i) > c) | ~ipm.bounded
        flipped = ipm.bounded & active & (np.sign(lam_i) != sign)
        if np.array_equal(new_active, active) and not flipped.any():
            break
        active = new_active
    else:
        return None
    f = np.where(active, -lam_i + np.where(ipm.bounded, c * np.sign(lam_i), 0.0), 0.0)
    return x, f, lam


def _bound_data(ipm: _Ipm, f, lam_i, eps):
    """Bound slacks/multipliers consistent with a purified point."""
    c = ipm.c
    b = ipm.bounded
    pos = b & (f > 0)
    neg = b & (f < 0)
    blk = b & (f == 0)
    mu_u = np.zeros_like(f)
    mu_l = np.zeros_like(f)
    t = np.abs(f)
    mu_u[pos] = c[pos]
    mu_l[neg] = c[neg]
    t[pos | neg] += eps / c[pos | neg]
    mu_u[blk] = 0.5 * (c[blk] - lam_i[blk])
    mu_l[blk] = 0.5 * (c[blk] + lam_i[blk])
    t[blk] = eps / np.maximum(np.maximum(mu_u[blk], mu_l[blk]), 1e-300)
    return t, mu_u, mu_l


def solve_sparse(net: Network, c: EnforcerVector, warm: InfeasibilitySolution,
                 cfg: SparsityConfig = SparsityConfig(), opts: SolverOptions = SolverOptions(),
                 purify: bool = True) -> InfeasibilitySolution:
    """L1 / bus-wise regularized infeasibility solve, warm-started.

    Runs the interior point through the barrier schedule ``epsilon0 *
    0.2**k`` down to ``epsilon_min``. Intermediate stages stop at a KKT
    residual of ``10 eps``, the last one at ``opts.tol``. The final point is
    then refined on its identified support (``purify``) so that the
    soft-threshold relation holds exactly.
    """
    mdl = ecf.model(net)
    m = mdl.inj_rows.size
    c_comp = c.components()
    if c_comp.size != m:
        raise ValueError(f"enforcer has {c.c.size} buses, injection set has {m // 2}")
    ipm = _Ipm(net, c_comp, opts)

    f0 = np.asarray(warm.i_f, dtype=float).copy()
    t0, mu_u0, mu_l0 = init_bounds(f0, cfg.margin, c_comp, cfg.epsilon0)
    mu_u0 = np.where(ipm.bounded, mu_u0, 0.0)
    mu_l0 = np.where(ipm.bounded, mu_l0, 0.0)
    z = (warm.x.to_array(), f0, t0, np.asarray(warm.lam, dtype=float).copy(), mu_u0, mu_l0)

    eps = cfg.epsilon0
    total = 0
    status = Status.CONVERGED
    while True:
        last = eps <= cfg.epsilon_min * (1 + 1e-12)
        tol = opts.tol if last else 10 * eps
        try:
            z, norm, it = ipm.stage(z, eps, tol, opts.max_iter)
        except VoltageCollapse:
            norm, it = np.inf, 0
        total += it
        logger.debug("eps %.2e: kkt %.3e after %d iterations", eps, norm, it)
        if not norm <= tol:
            status = Status.DIVERGED
            break
        if last:
            break
        eps = max(eps * EPS_FACTOR, cfg.epsilon_min)

    x, f, t, lam, mu_u, mu_l = z
    if status is Status.CONVERGED and purify:
        pure = _purify(ipm, z, opts.tol)
        if pure is None:
            logger.info("support refinement did not settle; keeping interior-point iterate")
        else:
            x, f, lam = pure
            t, mu_u, mu_l = _bound_data(ipm, f, lam[ipm.inj], eps)
    final = ipm.norm(ipm.residuals((x, f, t, lam, mu_u, mu_l), eps))
    sol = InfeasibilitySolution(
        x=ecf.StateVector.from_array(x, mdl.n),
        i_f=f,
        lam=lam,
        injection=ecf.injection_set(net),
        status=status,
        iterations=total,
        kkt_residual=float(final),
        objective=objective(f, c_comp),
        t=t,
        mu_u=mu_u,
        mu_l=mu_l,
        epsilon=eps,
        method="l1" if c.provenance is Provenance.UNIFORM else "buswise",
    )
    return sol


def verify_kkt(sol: InfeasibilitySolution, net: Network, c: EnforcerVector,
               epsilon: float | None = None, tau: float = 1e-4) -> KktReport:
    """Residuals of the perturbed optimality conditions at ``sol``.

    ``threshold_gap`` is the component-wise soft-threshold error
    ``||i_f| - (|lam| - c)|`` over components with ``|i_f| > tau``;
    ``blocked_excess`` is ``max(|lam| - c, 0)`` over the others;
    ``threshold_gap_bus`` is the same gap taken on per-bus magnitudes.
    """
    mdl = ecf.model(net)
    eps = sol.epsilon if epsilon is None else epsilon
    cc = c.components()
    x = sol.x.to_array()
    lam = sol.lam
    f = sol.i_f
    inj = mdl.inj_rows
    lam_i = lam[inj]
    has_bounds = sol.t.size == f.size
    mu_u = sol.mu_u if has_bounds else np.zeros_like(f)
    mu_l = sol.mu_l if has_bounds else np.zeros_like(f)
    t = sol.t if has_bounds else np.abs(f)
    b = cc > 0
    g = mdl.residual(x)
    g[inj] += f
    stat_if = f + lam_i + mu_u - mu_l
    dual = np.where(b, mu_u + mu_l - cc, 0.0)
    comp_u = np.where(b, mu_u * (f - t) + eps, 0.0)
    comp_l = np.where(b, mu_l * (-f - t) + eps, 0.0)
    act = np.abs(f) > tau
    gap = np.abs(np.abs(f) - (np.abs(lam_i) - cc))
    excess = np.maximum(np.abs(lam_i) - cc, 0.0)

    m = f.size // 2
    mag = np.hypot(f[:m], f[m:])
    lmag = np.hypot(lam_i[:m], lam_i[m:])
    bus_act = mag > tau
    bus_gap = np.abs(mag - (lmag - c.c))

    def mx(v):
        return float(np.abs(v).max()) if v.size else 0.0

    return KktReport(
        stationarity_if=mx(stat_if),
        dual_feas=mx(dual),
        comp_upper=mx(comp_u),
        comp_lower=mx(comp_l),
        primal_feas=mx(g),
        stationarity_x=mx(mdl.jacobian(x).T @ lam),
        threshold_gap=mx(gap[act]),
        blocked_excess=mx(excess[~act]),
        threshold_gap_bus=mx(bus_gap[bus_act]),
    )


# ---------------------------------------------------------------------------
# localization drivers
# ---------------------------------------------------------------------------


def localize_k_sparse(net: Network, init: InfeasibilitySolution, k: int,
                      cfg: SparsityConfig = SparsityConfig(), opts: SolverOptions = SolverOptions()):
    """Assign bus-wise enforcers from ``init`` for goal ``k`` and solve.

    The result may carry more than ``k`` nonzero buses when the goal is
    not attainable.
    """
    c = assign_enforcers(init, k, cfg.c_h, cfg.c_l)
    return solve_sparse(net, c, init, cfg, opts), c


def localize(net: Network, cfg: SparsityConfig = SparsityConfig(), opts: SolverOptions = SolverOptions(),
             init: InfeasibilitySolution | None = None):
    """Shrink the sparse goal geometrically from a dense least-squares start.

    Returns ``(solution, enforcers, trace)``. Stops when the achieved
    sparsity repeats on two consecutive outer iterations, after the
    ``k = 1`` subproblem, or after ``max_outer`` iterations. A failed
    subproblem ends the loop with the last good solution marked
    ``Partial``.
    """
    if init is None:
        init = solve_l2(net, opts=opts)
    trace: list[OuterStep] = []
    if not init.converged:
        return init, None, trace
    n_inj = len(init.injection.buses)
    if sparsity_count(init, cfg.tau_sparse) == 0:
        return init, None, trace

    k = min(max(1, math.ceil(net.n_bus * cfg.r)), n_inj)
    current = init
    enforcers = None
    previous_k_actual = None
    for _ in range(cfg.max_outer):
        c = assign_enforcers(current, k, cfg.c_h, cfg.c_l)
        sol = solve_sparse(net, c, current, cfg, opts)
        if not sol.converged:
            logger.warning("sparse subproblem with k=%d failed", k)
            trace.append(OuterStep(k, -1, float("nan"), sol.status, sol.iterations))
            if enforcers is None:
                return replace(sol, status=Status.DIVERGED), c, trace
            return replace(current, status=Status.PARTIAL), enforcers, trace
        k_actual = sparsity_count(sol, cfg.tau_sparse)
        trace.append(OuterStep(k, k_actual, sol.objective, sol.status, sol.iterations))
        logger.info("outer: k_goal %d -> k_actual %d, objective %.6g", k, k_actual, sol.objective)
        if previous_k_actual is not None and k_actual > previous_k_actual:
            logger.warning("sparsity increased across outer iterations (%d -> %d)", previous_k_actual, k_actual)
        current, enforcers = sol, c
        if k == 1 or k_actual == previous_k_actual:
            break
        previous_k_actual = k_actual
        if cfg.adjust_thresholds is not None:
            cfg = cfg.adjust_thresholds(cfg, trace)
        if cfg.adjust_rate is not None:
            cfg = cfg.adjust_rate(cfg, trace)
        k = max(1, math.floor(min(k, k_actual) * cfg.r))
    return current, enforcers, trace


def calibrate_uniform(net: Network, target: int, init: InfeasibilitySolution | None = None,
                      cfg: SparsityConfig = SparsityConfig(), opts: SolverOptions = SolverOptions(),
                      c_max: float = 100.0, max_bisect: int = 40):
    """Bisect a uniform enforcer ``c`` until ``sparsity_count == target``.

    Assumes the count is non-increasing in ``c``. Returns ``(solution, c)``
    for the first ``c`` that hits the target; if none does within
    ``max_bisect`` halvings the closest solution with count ``<= target``
    is returned.

    Raises
    ------
    ValueError
        If even ``c_max`` leaves more than ``target`` buses active.
    """
    if target < 0:
        raise ValueError("target must be >= 0")
    if init is None:
        init = solve_l2(net, opts=opts)
    n = len(init.injection.buses)

    def run(value):
        c = EnforcerVector.uniform(value, n)
        sol = solve_sparse(net, c, init, cfg, opts)
        return sol, c, sparsity_count(sol, cfg.tau_sparse)

    lo, hi = 0.0, c_max
    best = run(hi)
    if best[2] > target:
        raise ValueError(f"c = {c_max} still leaves {best[2]} active buses")
    if best[2] == target:
        return best[0], best[1]
    for _ in range(max_bisect):
        mid = 0.5 * (lo + hi)
        sol, c, count = run(mid)
        logger.debug("calibrate: c = %.6g -> %d active", mid, count)
        if count == target and sol.converged:
            return sol, c
        if count > target:
            lo = mid
        else:
            hi, best = mid, (sol, c, count)
    return best[0], best[1]
