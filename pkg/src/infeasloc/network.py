"""Per-unit network model, MATPOWER case parsing and load scaling.

The :class:`Network` is immutable once built. Index maps and other derived
lookups are computed lazily and cached on the instance, so a network can be
shared by any number of solves.
"""
from __future__ import annotations

import enum
import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import InvalidAlpha, InvalidTopology, MalformedCase

logger = logging.getLogger(__name__)

JSON_SCHEMA = "infeasloc.network/1"


class BusKind(str, enum.Enum):
    SLACK = "Slack"
    PV = "PV"
    PQ = "PQ"


@dataclass(frozen=True)
class Bus:
    id: int
    kind: BusKind
    v_set: float = 1.0
    theta_set: float = 0.0
    shunt_g: float = 0.0
    shunt_b: float = 0.0
    base_kv: float = 0.0
    # case-file operating point, used only for FromCase initialization
    vm: float = 1.0
    va: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charging: float = 0.0
    tap: float = 1.0
    shift: float = 0.0
    status: bool = True


@dataclass(frozen=True)
class Generator:
    """Aggregate voltage-regulating generation at a PV or slack bus."""

    bus: int
    p_set: float
    v_set: float
    status: bool = True
    q_init: float = 0.0
    # parsed for completeness; no solver enforces them
    q_min: float = -math.inf
    q_max: float = math.inf


@dataclass(frozen=True)
class Load:
    bus: int
    p: float
    q: float


@dataclass(frozen=True)
class FixedInjection:
    """Generation held at constant P and Q (a generator sitting on a PQ bus)."""

    bus: int
    p: float
    q: float


@dataclass(frozen=True)
class Diagnostic:
    code: str
    ref: object
    message: str


@dataclass(frozen=True)
class Network:
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...] = ()
    loads: tuple[Load, ...] = ()
    injections: tuple[FixedInjection, ...] = ()
    alpha: float = 1.0
    name: str = field(default="", compare=False)
    # derived solver data keyed by consumer module; not copied by replace()
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @cached_property
    def index_of(self) -> dict[int, int]:
        """External bus id -> internal index."""
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def bus_ids(self) -> np.ndarray:
        return np.array([b.id for b in self.buses], dtype=np.int64)

    @cached_property
    def slack_index(self) -> int:
        slacks = [i for i, b in enumerate(self.buses) if b.kind is BusKind.SLACK]
        if len(slacks) != 1:
            raise InvalidTopology(f"expected exactly one slack bus, found {len(slacks)}")
        return slacks[0]

    def bus(self, bus_id: int) -> Bus:
        return self.buses[self.index_of[bus_id]]


# ---------------------------------------------------------------------------
# MATPOWER parsing
# ---------------------------------------------------------------------------

# column indices of the MATPOWER v2 tables
BUS_I, BUS_TYPE, PD, QD, GS, BS, _AREA, VM, VA, BASE_KV = range(10)
GEN_BUS, PG, QG, QMAX, QMIN, VG, _MBASE, GEN_STATUS = range(8)
F_BUS, T_BUS, BR_R, BR_X, BR_B, _RATE_A, _RATE_B, _RATE_C, TAP, SHIFT, BR_STATUS = range(11)

_MIN_COLS = {"bus": 13, "gen": 10, "branch": 11}
_COMMENT = re.compile(r"%[^\n]*")
_SCALAR = re.compile(r"mpc\.baseMVA\s*=\s*([^;\n]+)")
_MATRIX = r"mpc\.{name}\s*=\s*\[(.*?)\]"


def _strip_comments(text: str) -> str:
    # '%' inside quoted strings only occurs in cell arrays we never read
    return _COMMENT.sub("", text)


def _read_matrix(text: str, name: str) -> np.ndarray:
    m = re.search(_MATRIX.format(name=re.escape(name)), text, re.S)
    if m is None:
        raise MalformedCase(f"missing table mpc.{name}")
    rows = []
    for chunk in m.group(1).replace(";", "\n").split("\n"):
        tokens = chunk.replace(",", " ").replace("...", " ").split()
        if not tokens:
            continue
        try:
            rows.append([float(t) for t in tokens])
        except ValueError as exc:
            raise MalformedCase(f"mpc.{name}: non-numeric entry in row {len(rows) + 1}: {exc}") from None
    if not rows:
        raise MalformedCase(f"table mpc.{name} is empty")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise MalformedCase(f"mpc.{name}: rows have inconsistent column counts")
    if width < _MIN_COLS[name]:
        raise MalformedCase(f"mpc.{name}: expected at least {_MIN_COLS[name]} columns, got {width}")
    return np.array(rows)


def parse_matpower(text: str, name: str = "") -> Network:
    """Parse MATPOWER case text into a validated per-unit :class:`Network`.

    Raises
    ------
    MalformedCase
        On syntax errors or a missing ``baseMVA``/``bus``/``gen``/``branch``.
    InvalidTopology
        If the parsed network fails :func:`validate`.
    """
    body = _strip_comments(text)
    m = _SCALAR.search(body)
    if m is None:
        raise MalformedCase("missing mpc.baseMVA")
    try:
        base = float(m.group(1))
    except ValueError:
        raise MalformedCase(f"bad baseMVA value {m.group(1)!r}") from None
    if not base > 0:
        raise MalformedCase(f"baseMVA must be positive, got {base}")
    bus = _read_matrix(body, "bus")
    gen = _read_matrix(body, "gen")
    branch = _read_matrix(body, "branch")
    if not name:
        fm = re.search(r"function\s+\w+\s*=\s*(\w+)", text)
        name = fm.group(1) if fm else ""
    net = _build(base, bus, gen, branch, name)
    diags = validate(net)
    if diags:
        raise InvalidTopology("; ".join(d.message for d in diags[:5]), diags)
    return net


def load_case(path: str | Path) -> Network:
    path = Path(path)
    return parse_matpower(path.read_text(), name=path.stem)


def _build(base, bus, gen, branch, name) -> Network:
    isolated = {int(b) for b in bus[bus[:, BUS_TYPE] == 4, BUS_I]}
    if isolated:
        logger.info("dropping %d isolated bus(es)", len(isolated))
        bus = bus[bus[:, BUS_TYPE] != 4]

    gen = gen[(gen[:, GEN_STATUS] > 0) & ~np.isin(gen[:, GEN_BUS], list(isolated))]
    gen_rows: dict[int, list[np.ndarray]] = {}
    for row in gen:
        gen_rows.setdefault(int(row[GEN_BUS]), []).append(row)

    buses, generators, loads, injections = [], [], [], []
    for row in bus:
        bid = int(row[BUS_I])
        code = int(row[BUS_TYPE])
        kind = {3: BusKind.SLACK, 2: BusKind.PV}.get(code, BusKind.PQ)
        units = gen_rows.get(bid, [])
        if kind is not BusKind.PQ and not units:
            logger.info("bus %d has no in-service generator, treating as PQ", bid)
            kind = BusKind.PQ
        v_set = float(row[VM])
        if kind is not BusKind.PQ:
            v_set = float(units[0][VG])
            generators.append(Generator(
                bus=bid,
                p_set=sum(float(u[PG]) for u in units) / base,
                v_set=v_set,
                q_init=sum(float(u[QG]) for u in units) / base,
                q_min=sum(float(u[QMIN]) for u in units) / base,
                q_max=sum(float(u[QMAX]) for u in units) / base,
            ))
        elif units:
            injections.append(FixedInjection(
                bus=bid,
                p=sum(float(u[PG]) for u in units) / base,
                q=sum(float(u[QG]) for u in units) / base,
            ))
        buses.append(Bus(
            id=bid,
            kind=kind,
            v_set=v_set,
            theta_set=math.radians(float(row[VA])) if kind is BusKind.SLACK else 0.0,
            shunt_g=float(row[GS]) / base,
            shunt_b=float(row[BS]) / base,
            base_kv=float(row[BASE_KV]),
            vm=float(row[VM]),
            va=math.radians(float(row[VA])),
        ))
        if row[PD] != 0 or row[QD] != 0:
            loads.append(Load(bus=bid, p=float(row[PD]) / base, q=float(row[QD]) / base))

    branches = []
    for row in branch:
        if row[BR_STATUS] <= 0:
            continue
        if int(row[F_BUS]) in isolated or int(row[T_BUS]) in isolated:
            continue
        branches.append(Branch(
            from_bus=int(row[F_BUS]),
            to_bus=int(row[T_BUS]),
            r=float(row[BR_R]),
            x=float(row[BR_X]),
            b_charging=float(row[BR_B]),
            tap=float(row[TAP]) if row[TAP] != 0 else 1.0,
            shift=math.radians(float(row[SHIFT])),
        ))

    return Network(
        base_mva=base,
        buses=tuple(buses),
        branches=tuple(branches),
        generators=tuple(generators),
        loads=tuple(loads),
        injections=tuple(injections),
        name=name,
    )


# ---------------------------------------------------------------------------
# validation and scaling
# ---------------------------------------------------------------------------


def validate(net: Network) -> list[Diagnostic]:
    """Check structural invariants; returns an empty list when well formed."""
    out: list[Diagnostic] = []
    ids: dict[int, int] = {}
    for i, b in enumerate(net.buses):
        if b.id in ids:
            out.append(Diagnostic("DuplicateBus", b.id, f"bus id {b.id} appears more than once"))
        ids.setdefault(b.id, i)
        if b.kind is not BusKind.PQ and not (b.v_set > 0 and math.isfinite(b.v_set)):
            out.append(Diagnostic("BadVoltageSetpoint", b.id, f"bus {b.id} has v_set {b.v_set}"))

    slacks = [b.id for b in net.buses if b.kind is BusKind.SLACK]
    if not slacks:
        out.append(Diagnostic("NoSlack", None, "network has no slack bus"))
    elif len(slacks) > 1:
        out.append(Diagnostic("MultipleSlack", tuple(slacks), f"{len(slacks)} slack buses: {slacks}"))

    edges = []
    for k, br in enumerate(net.branches):
        if br.from_bus not in ids or br.to_bus not in ids:
            out.append(Diagnostic("DanglingBranch", k,
                                  f"branch {k} ({br.from_bus}-{br.to_bus}) references an unknown bus"))
            continue
        if br.r == 0 and br.x == 0:
            out.append(Diagnostic("ZeroImpedance", k, f"branch {k} ({br.from_bus}-{br.to_bus}) has r = x = 0"))
        if not br.tap > 0:
            out.append(Diagnostic("NonPositiveTap", k, f"branch {k} has tap {br.tap}"))
        if br.status:
            edges.append((ids[br.from_bus], ids[br.to_bus]))

    for g in net.generators:
        if g.bus not in ids:
            out.append(Diagnostic("UnknownBus", g.bus, f"generator at unknown bus {g.bus}"))
        elif net.buses[ids[g.bus]].kind is BusKind.PQ:
            out.append(Diagnostic("GeneratorOnPQ", g.bus, f"regulating generator at PQ bus {g.bus}"))
    gen_buses = [g.bus for g in net.generators]
    if len(set(gen_buses)) != len(gen_buses):
        out.append(Diagnostic("DuplicateGenerator", None, "more than one generator record per bus"))
    for rec in (*net.loads, *net.injections):
        if rec.bus not in ids:
            out.append(Diagnostic("UnknownBus", rec.bus, f"load/injection at unknown bus {rec.bus}"))
        if not (math.isfinite(rec.p) and math.isfinite(rec.q)):
            out.append(Diagnostic("NonFiniteLoad", rec.bus, f"non-finite power at bus {rec.bus}"))

    if len(slacks) == 1 and net.buses:
        n = len(net.buses)
        e = np.array(edges, dtype=np.int64).reshape(-1, 2)
        adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        _, labels = connected_components(adj, directed=False)
        island = labels != labels[ids[slacks[0]]]
        if island.any():
            stray = [net.buses[i].id for i in np.flatnonzero(island)]
            out.append(Diagnostic("Island", tuple(stray),
                                  f"{len(stray)} bus(es) not connected to the slack island, e.g. {stray[:5]}"))
    return out


def scale_loading(net: Network, alpha: float, generation: bool = True) -> Network:
    """Return a copy with demand multiplied by ``alpha``.

    Every load's P and Q is scaled. With ``generation`` (the default) the
    active power of every generator and fixed injection is scaled too, so
    the slack does not absorb the whole increase; reactive outputs and
    voltage set points are never touched. ``alpha`` composes
    multiplicatively with any factor already applied.
    """
    if isinstance(alpha, bool) or not (isinstance(alpha, (int, float)) and math.isfinite(alpha) and alpha > 0):
        raise InvalidAlpha(f"loading factor must be finite and > 0, got {alpha!r}")
    out = replace(net, loads=tuple(Load(ld.bus, ld.p * alpha, ld.q * alpha) for ld in net.loads),
                  alpha=net.alpha * alpha)
    if generation:
        out = replace(out,
                      generators=tuple(replace(g, p_set=g.p_set * alpha) for g in net.generators),
                      injections=tuple(replace(s, p=s.p * alpha) for s in net.injections))
    return out


# ---------------------------------------------------------------------------
# canonical JSON
# ---------------------------------------------------------------------------


def to_dict(net: Network) -> dict:
    return {
        "schema": JSON_SCHEMA,
        "name": net.name,
        "base_mva": net.base_mva,
        "alpha": net.alpha,
        "buses": [{**asdict(b), "kind": b.kind.value} for b in net.buses],
        "branches": [asdict(b) for b in net.branches],
        "generators": [asdict(g) for g in net.generators],
        "loads": [asdict(ld) for ld in net.loads],
        "injections": [asdict(s) for s in net.injections],
    }


def from_dict(data: dict) -> Network:
    if data.get("schema") != JSON_SCHEMA:
        raise MalformedCase(f"unsupported network schema {data.get('schema')!r}")
    try:
        return Network(
            base_mva=data["base_mva"],
            buses=tuple(Bus(**{**b, "kind": BusKind(b["kind"])}) for b in data["buses"]),
            branches=tuple(Branch(**b) for b in data["branches"]),
            generators=tuple(Generator(**g) for g in data["generators"]),
            loads=tuple(Load(**ld) for ld in data["loads"]),
            injections=tuple(FixedInjection(**s) for s in data.get("injections", [])),
            alpha=data["alpha"],
            name=data.get("name", ""),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedCase(f"bad network JSON: {exc}") from None


def dump_json(net: Network) -> str:
    """Canonical JSON text (floats in shortest round-trip repr, +-inf as Infinity)."""
    return json.dumps(to_dict(net), indent=1)


def load_json(text: str) -> Network:
    return from_dict(json.loads(text))
