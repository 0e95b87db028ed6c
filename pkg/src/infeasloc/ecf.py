"""Equivalent-circuit (current-voltage) formulation of the network balance.

State layout (flat array of length ``2*n_bus + n_gen + 1``)::

    [ vr (n_bus) | vi (n_bus) | qg (one per PV/slack bus) | pg_slack ]

Row layout (``n_eq = 2*n_bus + n_pv + 2``, square with the state)::

    [ real KCL (n_bus) | imag KCL (n_bus) | PV |V|^2 rows | slack vr row, slack vi row ]

Currents leaving a bus are positive in its KCL rows. Branches and shunts
contribute ``Y V``; every bus also carries one constant-power element with
net demand ``P + jQ`` whose current is ``conj(S / V)``. Generator outputs
enter that demand with a minus sign, so PV reactive power and the slack's
active and reactive power are state variables.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import VoltageCollapse
from .linsolve import PatternAssembler
from .network import BusKind, Network

V_FLOOR = 1e-4


class InitMode(str, enum.Enum):
    FLAT = "flat"
    FROM_CASE = "from_case"


@dataclass
class StateVector:
    vr: np.ndarray
    vi: np.ndarray
    qg: np.ndarray  # one per generator bus, ascending internal index
    pg_slack: float = 0.0

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.vr, self.vi, self.qg, [self.pg_slack]])

    @classmethod
    def from_array(cls, x, n_bus: int) -> "StateVector":
        x = np.asarray(x, dtype=float)
        return cls(x[:n_bus].copy(), x[n_bus:2 * n_bus].copy(), x[2 * n_bus:-1].copy(), float(x[-1]))

    @property
    def vm(self) -> np.ndarray:
        return np.hypot(self.vr, self.vi)

    @property
    def va(self) -> np.ndarray:
        return np.arctan2(self.vi, self.vr)


@dataclass(frozen=True)
class InjectionSet:
    """Buses that may carry infeasibility current.

    Component ``j < len(buses)`` is the real current at ``buses[j]``;
    component ``len(buses) + j`` is the imaginary one.
    """

    buses: np.ndarray

    @property
    def dim(self) -> int:
        return 2 * len(self.buses)


def admittance(net: Network) -> sp.csr_matrix:
    """Complex bus admittance matrix (pi model with off-nominal tap and shift)."""
    n = net.n_bus
    idx = net.index_of
    rows, cols, vals = [], [], []
    for br in net.branches:
        if not br.status:
            continue
        f, t = idx[br.from_bus], idx[br.to_bus]
        ys = 1.0 / complex(br.r, br.x)
        tap = br.tap * np.exp(1j * br.shift)
        ytt = ys + 0.5j * br.b_charging
        rows += [f, f, t, t]
        cols += [f, t, f, t]
        vals += [ytt / (br.tap * br.tap), -ys / np.conj(tap), -ys / tap, ytt]
    for i, b in enumerate(net.buses):
        if b.shunt_g or b.shunt_b:
            rows.append(i)
            cols.append(i)
            vals.append(complex(b.shunt_g, b.shunt_b))
    return sp.csr_matrix(sp.coo_matrix((vals, (rows, cols)), shape=(n, n), dtype=complex))


class EcfModel:
    """Compiled index arrays and constant data for one network."""

    def __init__(self, net: Network):
        n = net.n_bus
        self.n = n
        self.slack = net.slack_index
        kinds = [b.kind for b in net.buses]
        self.pv = np.array([i for i, k in enumerate(kinds) if k is BusKind.PV], dtype=np.int64)
        self.gen = np.array([i for i, k in enumerate(kinds) if k is not BusKind.PQ], dtype=np.int64)
        self.n_pv = len(self.pv)
        self.n_gen = len(self.gen)
        self.n_x = 2 * n + self.n_gen + 1
        self.n_eq = 2 * n + self.n_pv + 2
        assert self.n_x == self.n_eq
        self.qg_col = 2 * n + np.arange(self.n_gen)
        self.pg_col = 2 * n + self.n_gen
        self.pv_row = 2 * n + np.arange(self.n_pv)
        self.slack_rows = (2 * n + self.n_pv, 2 * n + self.n_pv + 1)

        idx = net.index_of
        p = np.zeros(n)
        q = np.zeros(n)
        for ld in net.loads:
            p[idx[ld.bus]] += ld.p
            q[idx[ld.bus]] += ld.q
        for s in net.injections:
            p[idx[s.bus]] -= s.p
            q[idx[s.bus]] -= s.q
        self.gen_of_bus = {}
        for g in net.generators:
            i = idx[g.bus]
            self.gen_of_bus[i] = g
            if i != self.slack:
                p[i] -= g.p_set
        self.p_fixed = p
        self.q_fixed = q
        b = net.buses
        self.v_set = np.array([self.gen_of_bus[i].v_set if i in self.gen_of_bus else b[i].v_set for i in range(n)])
        self.slack_v = self.v_set[self.slack] * np.exp(1j * b[self.slack].theta_set)

        Y = admittance(net).tocoo()
        G, B = Y.real, Y.imag
        self.ybus = Y.tocsr()
        r, c = Y.row, Y.col
        self.ylin = sp.csr_matrix(sp.coo_matrix(
            (np.concatenate([G.data, -B.data, B.data, G.data]),
             (np.concatenate([r, r, r + n, r + n]), np.concatenate([c, c + n, c, c + n]))),
            shape=(2 * n, 2 * n)))

        self.inj = np.array([i for i in range(n) if i != self.slack], dtype=np.int64)
        self.inj_rows = np.concatenate([self.inj, self.inj + n])
        self._build_jacobian_pattern(r, c)
        self._build_hessian_pattern()

    # ---- patterns ---------------------------------------------------------

    def _build_jacobian_pattern(self, yr, yc):
        n = self.n
        ar = np.arange(n)
        ylin = self.ylin.tocoo()
        self._jlin_vals = ylin.data
        gb = self.gen
        rows = [ylin.row, ar, ar, ar + n, ar + n,
                gb, gb + n, [self.slack, self.slack + n],
                self.pv_row, self.pv_row, list(self.slack_rows)]
        cols = [ylin.col, ar, ar + n, ar, ar + n,
                self.qg_col, self.qg_col, [self.pg_col, self.pg_col],
                self.pv, self.pv + n, [self.slack, self.slack + n]]
        self._jac = PatternAssembler(np.concatenate(rows), np.concatenate(cols), (self.n_eq, self.n_x))

    def _build_hessian_pattern(self):
        n = self.n
        ar = np.arange(n)
        gb, qc = self.gen, self.qg_col
        s, pc = self.slack, self.pg_col
        rows = [ar, ar, ar + n, ar + n,
                gb, qc, gb + n, qc,
                [s, pc, s + n, pc]]
        cols = [ar, ar + n, ar, ar + n,
                qc, gb, qc, gb + n,
                [pc, s, pc, s + n]]
        self._hes = PatternAssembler(np.concatenate(rows), np.concatenate(cols), (self.n_x, self.n_x))

    # ---- evaluation -------------------------------------------------------

    def _split(self, x):
        n = self.n
        v = x[:n] + 1j * x[n:2 * n]
        m = v.real ** 2 + v.imag ** 2
        low = np.flatnonzero(m < V_FLOOR ** 2)
        if low.size:
            raise VoltageCollapse(low, V_FLOOR)
        P = self.p_fixed.copy()
        Q = self.q_fixed.copy()
        Q[self.gen] -= x[self.qg_col]
        P[self.slack] -= x[self.pg_col]
        return v, P + 1j * Q

    def residual(self, x) -> np.ndarray:
        n = self.n
        v, S = self._split(x)
        h = np.conj(S / v)
        out = np.empty(self.n_eq)
        out[:2 * n] = self.ylin @ x[:2 * n]
        out[:n] += h.real
        out[n:2 * n] += h.imag
        vpv = v[self.pv]
        out[self.pv_row] = vpv.real ** 2 + vpv.imag ** 2 - self.v_set[self.pv] ** 2
        vs = v[self.slack]
        out[self.slack_rows[0]] = vs.real - self.slack_v.real
        out[self.slack_rows[1]] = vs.imag - self.slack_v.imag
        return out

    def jacobian(self, x) -> sp.csc_matrix:
        v, S = self._split(x)
        w = 1.0 / v
        a = -S * w * w
        dP_r, dP_i = w.real, -w.imag          # d h / d P  (real, imag parts)
        dQ_r, dQ_i = -w.imag, -w.real         # d h / d Q
        gb, s = self.gen, self.slack
        vpv = v[self.pv]
        vals = [self._jlin_vals,
                a.real, -a.imag, -a.imag, -a.real,
                -dQ_r[gb], -dQ_i[gb], [-dP_r[s], -dP_i[s]],
                2 * vpv.real, 2 * vpv.imag, [1.0, 1.0]]
        return self._jac.assemble(np.concatenate(vals))

    def hessian(self, x, lam) -> sp.csc_matrix:
        """Hessian of ``lam . residual(x)`` with respect to the state."""
        n = self.n
        v, S = self._split(x)
        L = lam[:n] + 1j * lam[n:2 * n]
        w = 1.0 / v
        A2 = 2.0 * L * S * w ** 3
        hrr = A2.real
        hri = -A2.imag
        hii = -A2.real
        lw2 = L * w * w
        # second derivatives wrt (vr, P), (vi, P), (vr, Q), (vi, Q)
        hrP, hiP = -lw2.real, lw2.imag
        hrQ, hiQ = lw2.imag, lw2.real
        pv_l = np.zeros(n)
        pv_l[self.pv] = 2.0 * lam[self.pv_row]
        hrr = hrr + pv_l
        hii = hii + pv_l
        gb, s = self.gen, self.slack
        # state qg and pg enter Q and P with a minus sign
        vals = [hrr, hri, hri, hii,
                -hrQ[gb], -hrQ[gb], -hiQ[gb], -hiQ[gb],
                [-hrP[s], -hrP[s], -hiP[s], -hiP[s]]]
        return self._hes.assemble(np.concatenate(vals))

    # ---- helpers ----------------------------------------------------------

    def init_state(self, net: Network, mode: InitMode) -> np.ndarray:
        n = self.n
        x = np.zeros(self.n_x)
        if InitMode(mode) is InitMode.FLAT:
            x[:n] = 1.0
            x[self.gen] = self.v_set[self.gen]
            x[self.slack] = self.slack_v.real
            x[n + self.slack] = self.slack_v.imag
        else:
            vm = np.array([b.vm for b in net.buses])
            va = np.array([b.va for b in net.buses])
            vm[self.gen] = self.v_set[self.gen]
            v = vm * np.exp(1j * va)
            x[:n] = v.real
            x[n:2 * n] = v.imag
            x[self.qg_col] = [self.gen_of_bus[i].q_init if i in self.gen_of_bus else 0.0 for i in self.gen]
            sg = self.gen_of_bus.get(self.slack)
            x[self.pg_col] = sg.p_set if sg is not None else 0.0
        return x

    def injection_matrix(self) -> sp.csr_matrix:
        """Scatter ``S`` mapping infeasibility components onto residual rows."""
        m = self.inj_rows.size
        return sp.csr_matrix((np.ones(m), (self.inj_rows, np.arange(m))), shape=(self.n_eq, m))


def model(net: Network) -> EcfModel:
    cached = net._cache.get("ecf")
    if cached is None:
        cached = net._cache["ecf"] = EcfModel(net)
    return cached


def init_state(net: Network, mode: InitMode | str = InitMode.FLAT) -> StateVector:
    """Initial state. ``FLAT``: vr = 1, vi = 0 except regulated buses at
    their set point; ``FROM_CASE``: voltages and generator outputs from the
    case file."""
    return StateVector.from_array(model(net).init_state(net, mode), net.n_bus)


def residual(net: Network, x: StateVector | np.ndarray) -> np.ndarray:
    if isinstance(x, StateVector):
        x = x.to_array()
    return model(net).residual(np.asarray(x, dtype=float))


def jacobian(net: Network, x: StateVector | np.ndarray) -> sp.csc_matrix:
    if isinstance(x, StateVector):
        x = x.to_array()
    return model(net).jacobian(np.asarray(x, dtype=float))


def injection_set(net: Network) -> InjectionSet:
    return InjectionSet(model(net).inj.copy())


def row_layout(net: Network) -> dict:
    """Named row ranges of the constraint system."""
    mdl = model(net)
    n = mdl.n
    return {
        "kcl_real": range(0, n),
        "kcl_imag": range(n, 2 * n),
        "pv": range(2 * n, 2 * n + mdl.n_pv),
        "slack": range(2 * n + mdl.n_pv, mdl.n_eq),
        "n_eq": mdl.n_eq,
    }


def kcl_row_of(net: Network, bus_index: int, part: str) -> int:
    """Residual row holding the real (``part='R'``) or imaginary KCL of a bus."""
    if part not in ("R", "I"):
        raise ValueError("part must be 'R' or 'I'")
    return bus_index + (net.n_bus if part == "I" else 0)


def branch_flows(net: Network, x: StateVector | np.ndarray):
    """Complex power entering each in-service branch at its from and to ends."""
    if isinstance(x, StateVector):
        x = x.to_array()
    n = net.n_bus
    v = x[:n] + 1j * x[n:2 * n]
    idx = net.index_of
    sf, st = [], []
    for br in net.branches:
        if not br.status:
            continue
        f, t = idx[br.from_bus], idx[br.to_bus]
        ys = 1.0 / complex(br.r, br.x)
        tap = br.tap * np.exp(1j * br.shift)
        ytt = ys + 0.5j * br.b_charging
        i_f = ytt / (br.tap ** 2) * v[f] - ys / np.conj(tap) * v[t]
        i_t = -ys / tap * v[f] + ytt * v[t]
        sf.append(v[f] * np.conj(i_f))
        st.append(v[t] * np.conj(i_t))
    return np.array(sf), np.array(st)
