"""Newton power flow and least-squares infeasibility currents.

:func:`solve_powerflow` runs plain Newton-Raphson on the balance equations.
:func:`solve_l2` adds an infeasibility current to every non-slack KCL row and
minimizes half its squared norm. Eliminating the currents through
stationarity (``i_f = -lambda`` on the injection rows) leaves a square
Newton system in the state and the multipliers::

    [ H(x, lam)   J(x)^T ] [dx  ]     [ J^T lam          ]
    [ J(x)       -S S^T  ] [dlam] = - [ g(x) - S S^T lam ]
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import ecf
from .errors import SingularMatrix, VoltageCollapse
from .linsolve import lu_solve
from .network import Network

logger = logging.getLogger(__name__)

MAX_HALVINGS = 10


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    DIVERGED = "Diverged"
    PARTIAL = "Partial"


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 200
    damping: float = 0.5

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.damping > 0:
            raise ValueError("damping must be > 0")


@dataclass
class PowerFlowResult:
    status: Status
    x: ecf.StateVector
    iterations: int
    residual_norm: float


@dataclass
class InfeasibilitySolution:
    """Converged (or last) iterate of an infeasibility solve.

    ``i_f``, ``t``, ``mu_u`` and ``mu_l`` are indexed by injection component
    (see :class:`ecf.InjectionSet`); ``lam`` by residual row.
    """

    x: ecf.StateVector
    i_f: np.ndarray
    lam: np.ndarray
    injection: ecf.InjectionSet
    status: Status
    iterations: int
    kkt_residual: float
    objective: float
    t: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mu_u: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mu_l: np.ndarray = field(default_factory=lambda: np.zeros(0))
    epsilon: float = 0.0
    method: str = "l2"

    @property
    def per_bus_mag(self) -> np.ndarray:
        m = len(self.injection.buses)
        return np.hypot(self.i_f[:m], self.i_f[m:])

    @property
    def lam_injection(self) -> np.ndarray:
        """Multipliers of the KCL rows that carry infeasibility current."""
        n = self.x.vr.size
        b = self.injection.buses
        return np.concatenate([self.lam[b], self.lam[b + n]])

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


def _limit_step(mdl: ecf.EcfModel, dx: np.ndarray, damping: float) -> float:
    dv = np.abs(dx[:2 * mdl.n]).max()
    return min(1.0, damping / dv) if dv > 0 else 1.0


def solve_powerflow(net: Network, x0: ecf.StateVector | None = None,
                    opts: SolverOptions = SolverOptions()) -> PowerFlowResult:
    """Newton-Raphson on ``I(x) = 0``. Divergence is reported, not raised."""
    mdl = ecf.model(net)
    x = (x0.to_array() if x0 is not None else mdl.init_state(net, ecf.InitMode.FLAT)).copy()
    try:
        r = mdl.residual(x)
    except VoltageCollapse:
        return PowerFlowResult(Status.DIVERGED, ecf.StateVector.from_array(x, mdl.n), 0, np.inf)
    norm = np.abs(r).max()
    it = 0
    while norm > opts.tol and it < opts.max_iter:
        it += 1
        try:
            dx = lu_solve(mdl.jacobian(x), r)
        except SingularMatrix:
            break
        step = _limit_step(mdl, dx, opts.damping)
        for _ in range(MAX_HALVINGS + 1):
            try:
                xn = x - step * dx
                r = mdl.residual(xn)
                break
            except VoltageCollapse:
                step *= 0.5
        else:
            break
        x = xn
        norm = np.abs(r).max()
        if not np.isfinite(norm):
            break
    status = Status.CONVERGED if norm <= opts.tol else Status.DIVERGED
    logger.debug("power flow %s after %d iterations, |r| = %.3e", status.value, it, norm)
    return PowerFlowResult(status, ecf.StateVector.from_array(x, mdl.n), it, float(norm))


# ---------------------------------------------------------------------------
# reduced KKT system shared with the sparse solvers
# ---------------------------------------------------------------------------


def kkt_matrix(mdl: ecf.EcfModel, x, lam, d) -> sp.csc_matrix:
    """``[[H, J^T], [J, -S diag(d) S^T]]`` for injection weights ``d``."""
    J = mdl.jacobian(x)
    H = mdl.hessian(x, lam)
    rows = mdl.inj_rows
    D = sp.csc_matrix((-np.asarray(d, dtype=float), (rows, rows)), shape=(mdl.n_eq, mdl.n_eq))
    return sp.bmat([[H, J.T], [J, D]], format="csc")


def stationarity(mdl: ecf.EcfModel, x, lam) -> np.ndarray:
    return mdl.jacobian(x).T @ lam


def solve_l2(net: Network, x0: ecf.StateVector | None = None,
             opts: SolverOptions = SolverOptions(), retry: bool = True) -> InfeasibilitySolution:
    """Minimize ``0.5 |i_f|^2`` subject to ``I(x) + S i_f = 0``.

    Starts from ``x0`` (flat start when omitted) with zero multipliers. A
    diverged flat start is retried once from the case-file operating point.
    """
    mdl = ecf.model(net)
    start = x0.to_array() if x0 is not None else mdl.init_state(net, ecf.InitMode.FLAT)
    sol = _newton_l2(net, mdl, start, np.zeros(mdl.n_eq), opts)
    if not sol.converged and retry and x0 is None:
        logger.info("L2 solve from flat start diverged; retrying from case voltages")
        sol = _newton_l2(net, mdl, mdl.init_state(net, ecf.InitMode.FROM_CASE), np.zeros(mdl.n_eq), opts)
    return sol


def _l2_residual(mdl, x, lam):
    g = mdl.residual(x)
    g[mdl.inj_rows] -= lam[mdl.inj_rows]
    return np.concatenate([stationarity(mdl, x, lam), g])


# globalization constants for the L2 Newton iteration
MERIT_RHO = 10.0
SWITCH_TOL = 1e-6
MU_INIT = 1e-4
MU_MAX = 1e8


def _newton_l2(net, mdl, x, lam, opts) -> InfeasibilitySolution:
    """Regularized Newton with an augmented-Lagrangian line search, then a
    plain Newton polish once the KKT residual is below ``SWITCH_TOL``.

    The regularization ``mu I`` on the state block is raised until the step
    decreases ``0.5|r|^2 + nu.c + rho/2 |c|^2`` (``r`` the injection rows,
    ``c`` the PV/slack rows, ``nu`` their multipliers). Pure KKT Newton is
    attracted to saddle points past the nose; this keeps iterates descending.
    """
    nx = mdl.n_x
    inj = np.zeros(mdl.n_eq, dtype=bool)
    inj[mdl.inj_rows] = True
    ones = np.ones(mdl.inj_rows.size)
    x = x.copy()
    lam = lam.copy()
    it = 0
    try:
        g = mdl.residual(x)
    except VoltageCollapse:
        return _l2_solution(net, mdl, x, lam, Status.DIVERGED, 0, np.inf)

    def merit(xt, nu):
        gt = mdl.residual(xt)
        c = gt[~inj]
        return 0.5 * gt[inj] @ gt[inj] + nu @ c + 0.5 * MERIT_RHO * c @ c, gt

    mu = MU_INIT
    norm = np.abs(_l2_residual(mdl, x, lam)).max()
    while SWITCH_TOL < norm and it < opts.max_iter:
        it += 1
        K = kkt_matrix(mdl, x, lam, ones)
        rhs = np.concatenate([np.zeros(nx), -g])
        accepted = False
        while mu <= MU_MAX:
            try:
                z = lu_solve(K + _state_shift(mdl, mu), rhs)
            except SingularMatrix:
                mu = max(10 * mu, 1e-6)
                continue
            dx, lam_new = z[:nx], z[nx:]
            nu = lam_new[~inj]
            f0, _ = merit(x, nu)
            step = _limit_step(mdl, dx, opts.damping)
            while step > 0.1:
                try:
                    f1, g1 = merit(x + step * dx, nu)
                    if f1 <= f0 - 1e-6 * step * abs(f0):
                        accepted = True
                        break
                except VoltageCollapse:
                    pass
                step *= 0.5
            if accepted:
                break
            mu = max(10 * mu, 1e-6)
        if not accepted:
            # no descent available; let the Newton polish decide
            break
        x = x + step * dx
        lam = lam + step * (lam_new - lam)
        g = g1
        mu = mu / 10 if mu > 1e-10 else 0.0
        norm = np.abs(_l2_residual(mdl, x, lam)).max()
        logger.debug("L2 it %d: kkt %.3e, merit %.6e, step %.3f, mu %.1e", it, norm, f1, step, mu)

    # local phase: undamped Newton on the KKT conditions
    polish = 0
    while np.isfinite(norm) and norm > opts.tol and it < opts.max_iter and polish < 25:
        it += 1
        polish += 1
        try:
            dz = lu_solve(kkt_matrix(mdl, x, lam, ones), _l2_residual(mdl, x, lam))
            xn, ln = x - dz[:nx], lam - dz[nx:]
            nn = np.abs(_l2_residual(mdl, xn, ln)).max()
        except (SingularMatrix, VoltageCollapse):
            break
        if not nn < 10 * norm:
            break
        x, lam, norm = xn, ln, nn
    status = Status.CONVERGED if norm <= opts.tol else Status.DIVERGED
    logger.debug("L2 solve %s after %d iterations, kkt = %.3e", status.value, it, norm)
    return _l2_solution(net, mdl, x, lam, status, it, norm)


def _state_shift(mdl, mu):
    n = mdl.n_x + mdl.n_eq
    d = np.zeros(n)
    d[:mdl.n_x] = mu
    return sp.diags(d, format="csc")


def _l2_solution(net, mdl, x, lam, status, it, norm):
    i_f = -lam[mdl.inj_rows]
    return InfeasibilitySolution(
        x=ecf.StateVector.from_array(x, mdl.n),
        i_f=i_f,
        lam=lam,
        injection=ecf.injection_set(net),
        status=status,
        iterations=it,
        kkt_residual=float(norm),
        objective=0.5 * float(i_f @ i_f),
        method="l2",
    )
