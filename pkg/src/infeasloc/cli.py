"""Command-line front end.

Loads a MATPOWER case, scales the loading, runs one method and writes a
report::

    infeasloc --case case14.m --alpha 4.5 --method auto --format text

Exit codes: 0 converged (feasible cases included), 2 diverged or partial,
1 input errors.
"""
from __future__ import annotations

import argparse
import csv
import enum
import io
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import localizer, pfcore
from .errors import InfeasLocError
from .network import load_case, scale_loading

SCHEMA_VERSION = 1


class Method(str, enum.Enum):
    PF = "pf"
    L2 = "l2"
    L1 = "l1"
    BUSWISE = "buswise"
    AUTO = "auto"


class OutputFormat(str, enum.Enum):
    JSON = "json"
    CSV = "csv"
    TEXT = "text"


@dataclass(frozen=True)
class RunConfig:
    case_path: str
    alpha: float = 1.0
    method: Method = Method.AUTO
    k: int = 1
    c: float = 1.0
    c_h: float = 10.0
    c_l: float = 0.1
    r: float = 0.75
    tau_sparse: float = 1e-4
    tol: float = 1e-8
    max_iter: int = 200
    output_format: OutputFormat = OutputFormat.JSON
    output_path: str | None = None
    loads_only: bool = False

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "output_format", OutputFormat(self.output_format))
        if self.c < 0:
            raise ValueError("c must be >= 0")
        # the remaining invariants are checked by the option dataclasses
        self.sparsity_config()
        self.solver_options()

    def sparsity_config(self) -> localizer.SparsityConfig:
        return localizer.SparsityConfig(k=self.k, c_h=self.c_h, c_l=self.c_l, r=self.r,
                                        tau_sparse=self.tau_sparse)

    def solver_options(self) -> pfcore.SolverOptions:
        return pfcore.SolverOptions(tol=self.tol, max_iter=self.max_iter)


@dataclass(frozen=True)
class BusRow:
    bus: str
    i_re: float
    i_im: float
    magnitude: float
    c: float | None
    dominant: bool


@dataclass
class SolveReport:
    method: str
    case: str
    n_bus: int
    alpha: float
    status: str
    sparsity_count: int
    objective: float
    kkt: dict
    table: list[BusRow] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)
    iterations: int = 0
    wall_time: float = 0.0

    @property
    def exit_code(self) -> int:
        return 0 if self.status == pfcore.Status.CONVERGED.value else 2


def _num(v) -> str | None:
    if v is None:
        return None
    return format(float(v), ".16e")


def _table(net, sol, enforcers, tau) -> list[BusRow]:
    m = len(sol.injection.buses)
    mag = sol.per_bus_mag
    order = np.argsort(-mag, kind="stable")
    ids = net.bus_ids
    rows = []
    for j in order:
        rows.append(BusRow(
            bus=str(ids[sol.injection.buses[j]]),
            i_re=float(sol.i_f[j]),
            i_im=float(sol.i_f[m + j]),
            magnitude=float(mag[j]),
            c=None if enforcers is None else float(enforcers.c[j]),
            dominant=bool(mag[j] > tau),
        ))
    return rows


def run(config: RunConfig) -> SolveReport:
    """Execute one solve. Input errors propagate as exceptions."""
    start = time.perf_counter()
    base = load_case(config.case_path)
    net = scale_loading(base, config.alpha, generation=not config.loads_only)
    opts = config.solver_options()
    cfg = config.sparsity_config()
    name = net.name or Path(config.case_path).stem

    def report(**kw):
        return SolveReport(method=config.method.value, case=name, n_bus=net.n_bus,
                           alpha=config.alpha, wall_time=time.perf_counter() - start, **kw)

    if config.method is Method.PF:
        pf = pfcore.solve_powerflow(net, opts=opts)
        return report(status=pf.status.value, sparsity_count=0, objective=0.0,
                      kkt={"residual": pf.residual_norm}, iterations=pf.iterations)

    init = pfcore.solve_l2(net, opts=opts)
    sol, enforcers, trace = init, None, []
    if init.converged and config.method is not Method.L2:
        n_inj = len(init.injection.buses)
        if config.method is Method.L1:
            enforcers = localizer.EnforcerVector.uniform(config.c, n_inj)
            sol = localizer.solve_sparse(net, enforcers, init, cfg, opts)
        elif config.method is Method.BUSWISE:
            sol, enforcers = localizer.localize_k_sparse(net, init, config.k, cfg, opts)
        else:
            sol, enforcers, trace = localizer.localize(net, cfg, opts, init=init)

    kkt = {"residual": sol.kkt_residual}
    if enforcers is not None and sol.t.size:
        rep = localizer.verify_kkt(sol, net, enforcers, tau=cfg.tau_sparse)
        kkt.update(vars(rep))
    return report(
        status=sol.status.value,
        sparsity_count=localizer.sparsity_count(sol, cfg.tau_sparse),
        objective=sol.objective,
        kkt=kkt,
        table=_table(net, sol, enforcers, cfg.tau_sparse),
        trace=[{"k_goal": s.k_goal, "k_actual": s.k_actual, "objective": s.objective,
                "status": s.status.value, "iterations": s.iterations} for s in trace],
        iterations=sol.iterations,
    )


def to_json_dict(rep: SolveReport) -> dict:
    """JSON document for ``rep``. Wall time is left out so reports are
    reproducible byte for byte."""
    return {
        "schema_version": SCHEMA_VERSION,
        "method": rep.method,
        "case": rep.case,
        "n_bus": rep.n_bus,
        "alpha": _num(rep.alpha),
        "status": rep.status,
        "sparsity_count": rep.sparsity_count,
        "objective": _num(rep.objective),
        "iterations": rep.iterations,
        "kkt": {k: _num(v) for k, v in rep.kkt.items()},
        "trace": [{**s, "objective": _num(s["objective"])} for s in rep.trace],
        "buses": [
            {"bus": r.bus, "i_re": _num(r.i_re), "i_im": _num(r.i_im),
             "magnitude": _num(r.magnitude), "c": _num(r.c), "dominant": r.dominant}
            for r in rep.table
        ],
    }


def render(rep: SolveReport, fmt: OutputFormat | str) -> bytes:
    fmt = OutputFormat(fmt)
    if fmt is OutputFormat.JSON:
        return (json.dumps(to_json_dict(rep), indent=2) + "\n").encode()
    if fmt is OutputFormat.CSV:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bus", "i_re", "i_im", "magnitude", "c", "dominant"])
        for r in rep.table:
            w.writerow([r.bus, _num(r.i_re), _num(r.i_im), _num(r.magnitude),
                        "" if r.c is None else _num(r.c), int(r.dominant)])
        return buf.getvalue().encode()
    lines = [
        f"case {rep.case}  n_bus {rep.n_bus}  alpha {rep.alpha:g}  method {rep.method}",
        f"status {rep.status}  sparsity {rep.sparsity_count}  objective {rep.objective:.8g}  "
        f"iterations {rep.iterations}  time {rep.wall_time:.2f} s",
    ]
    for s in rep.trace:
        lines.append(f"  k_goal {s['k_goal']:>6d}  k_actual {s['k_actual']:>6d}  objective {s['objective']:.8g}")
    if rep.table:
        lines.append("")
        lines.append(f"{'rank':>5} {'bus':>10} {'|I|':>14} {'Re I':>14} {'Im I':>14} {'c':>8}")
        for i, r in enumerate(rep.table, 1):
            c = "" if r.c is None else f"{r.c:g}"
            mark = " *" if r.dominant else ""
            lines.append(f"{i:>5} {r.bus:>10} {r.magnitude:>14.8f} {r.i_re:>14.8f} {r.i_im:>14.8f} {c:>8}{mark}")
    return ("\n".join(lines) + "\n").encode()


def build_parser() -> argparse.ArgumentParser:
    d = RunConfig(case_path="")
    p = argparse.ArgumentParser(prog="infeasloc", description="Locate power-flow infeasibility.")
    p.add_argument("--case", required=True, help="MATPOWER .m case file")
    p.add_argument("--alpha", type=float, default=d.alpha, help="loading factor")
    p.add_argument("--method", choices=[m.value for m in Method], default=d.method.value)
    p.add_argument("--k", type=int, default=d.k, help="sparse goal for --method buswise")
    p.add_argument("--c", type=float, default=d.c, help="uniform enforcer for --method l1")
    p.add_argument("--c-high", type=float, default=d.c_h)
    p.add_argument("--c-low", type=float, default=d.c_l)
    p.add_argument("--rate", type=float, default=d.r, help="sparse goal shrinkage rate")
    p.add_argument("--tau", type=float, default=d.tau_sparse, help="nonzero threshold")
    p.add_argument("--tol", type=float, default=d.tol)
    p.add_argument("--max-iter", type=int, default=d.max_iter)
    p.add_argument("--format", choices=[f.value for f in OutputFormat], default=d.output_format.value)
    p.add_argument("--out", default=None, help="output file (stdout when omitted)")
    p.add_argument("--loads-only", action="store_true",
                   help="scale loads only, keep generator dispatch fixed")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = RunConfig(
            case_path=args.case, alpha=args.alpha, method=args.method, k=args.k, c=args.c,
            c_h=args.c_high, c_l=args.c_low, r=args.rate, tau_sparse=args.tau, tol=args.tol,
            max_iter=args.max_iter, output_format=args.format, output_path=args.out,
            loads_only=args.loads_only,
        )
        rep = run(config)
    except (OSError, InfeasLocError, ValueError) as exc:
        print(f"infeasloc: error: {exc}", file=sys.stderr)
        return 1
    data = render(rep, config.output_format)
    if config.output_path:
        Path(config.output_path).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
