"""Monte-Carlo trials and parameter sweeps.

A *cell* is a flat dict of trial parameters (see :data:`DEFAULT_PARAMS`);
a :class:`SweepGrid` is a base cell plus axes to vary.  Every cell of a
sweep uses the same list of trial seeds, so cells differ only in the swept
parameters.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .errors import CBDSBLError, InvalidArgumentError
from .graph import generate_erdos_renyi, make_topology, select_bridges, validate_bridges
from .metrics import nmse, nser, to_db
from .model import generate_ensemble, generate_measurements
from .sbl import SolverConfig, genie_lmmse, msbl_solve
from .sim import FailureSchedule, run_cbdsbl

__all__ = ["nmse", "nser", "TrialReport", "SweepGrid", "run_trial", "run_sweep", "phase_boundary"]

SOLVERS = ("cbdsbl", "msbl", "genie")

DEFAULT_PARAMS = dict(
    n=50, m=10, k=5, L=10, snr_db=30.0, dist="rademacher",
    p_edge=0.8, solver="cbdsbl",
    r_max=2, k_max=200, eps=1e-6, rho=None, rho_scale=1.0, threshold_multiplier=4.0,
    bridge_fraction=0.0, bridges=None, topology_seed=None,
    failure_rate=0.0, failure_semantics="drop",
    target_nmse_db=-20.0,
)

_NUMERIC = ("n", "m", "k", "L", "snr_db", "p_edge", "r_max", "k_max", "eps", "rho", "rho_scale",
            "threshold_multiplier", "bridge_fraction", "topology_seed", "failure_rate", "target_nmse_db")

# derived axes that map onto the integer sizes above
RATIO_AXES = {"m_over_n": "m", "k_over_n": "k"}

RESULT_COLUMNS = ("trials", "mean_nmse_db", "std_nmse_db", "p_exact_support", "mean_nser",
                  "mean_messages", "mean_iters")
EXTRA_COLUMNS = ("avg_nmse_db", "mean_support_fraction", "mean_iters_to_target", "failed_trials", "passed")


def resolve_params(cell: dict) -> dict:
    """Fill defaults, apply ratio axes and validate."""
    unknown = set(cell) - set(DEFAULT_PARAMS) - set(RATIO_AXES)
    if unknown:
        raise InvalidArgumentError(f"unknown trial parameter(s): {', '.join(sorted(unknown))}")
    p = dict(DEFAULT_PARAMS)
    p.update({k: v for k, v in cell.items() if k not in RATIO_AXES})
    for key in (*_NUMERIC, *(a for a in RATIO_AXES if a in cell)):
        v = p.get(key, cell.get(key))
        if v is None and key in ("rho", "topology_seed"):
            continue
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise InvalidArgumentError(f"{key} must be a number, got {v!r}")
    n = int(p["n"])
    for axis, target in RATIO_AXES.items():
        if axis in cell:
            p[target] = max(1, int(round(float(cell[axis]) * n)))
    if p["solver"] not in SOLVERS:
        raise InvalidArgumentError(f"solver must be one of {SOLVERS}, got {p['solver']!r}")
    if not 1 <= int(p["k"]) <= n:
        raise InvalidArgumentError(f"k={p['k']} must satisfy 1 <= k <= n={n}")
    if not 1 <= int(p["m"]) <= n:
        raise InvalidArgumentError(f"m={p['m']} must satisfy 1 <= m <= n={n}")
    if int(p["L"]) < 1:
        raise InvalidArgumentError("L must be >= 1")
    if not 0.0 <= float(p["bridge_fraction"]) <= 1.0:
        raise InvalidArgumentError("bridge_fraction must lie in [0, 1]")
    if not 0.0 <= float(p["failure_rate"]) <= 1.0:
        raise InvalidArgumentError("failure_rate must lie in [0, 1]")
    if not 0.0 < float(p["p_edge"]) <= 1.0:
        raise InvalidArgumentError("p_edge must lie in (0, 1]")
    p["solver_config"] = SolverConfig(eps=float(p["eps"]), k_max=int(p["k_max"]), r_max=int(p["r_max"]),
                                      rho=p["rho"], rho_scale=float(p["rho_scale"]),
                                      threshold_multiplier=float(p["threshold_multiplier"]))
    return p


@dataclass
class TrialReport:
    """Metrics of one Monte-Carlo trial.

    ``nmse`` is linear; ``iters_to_target`` is the first outer iteration at
    which the NMSE reached ``target_nmse_db`` (``None`` if never, or if the
    solver keeps no per-iteration trace).
    """

    seed: int
    nmse: float
    nser: float
    exact_support: tuple
    support_fraction: float
    iters: int
    messages: int
    wall_time: float
    iters_to_target: int | None = None
    consensus_gap: float = 0.0
    failed: bool = False
    error: str = ""

    @property
    def nmse_db(self) -> float:
        return to_db(self.nmse)

    @property
    def exact_support_all(self) -> bool:
        return bool(self.exact_support) and all(self.exact_support)

    @classmethod
    def failure(cls, seed, err: Exception, wall_time=0.0):
        return cls(seed, math.nan, math.nan, (), math.nan, 0, 0, wall_time, failed=True, error=str(err))


def build_instance(p: dict, seed: int):
    """Ground truth, measurements and (for ``L > 1``) a bridged topology for one trial."""
    ens = generate_ensemble(int(p["n"]), int(p["k"]), int(p["L"]), p["dist"], seed)
    meas = generate_measurements(ens, int(p["m"]), float(p["snr_db"]), seed)
    L = int(p["L"])
    if L == 1:
        topo = make_topology(1, [])
    else:
        tseed = seed if p.get("topology_seed") is None else int(p["topology_seed"])
        topo = generate_erdos_renyi(L, float(p["p_edge"]), tseed)
    if p.get("bridges") is not None:
        topo = topo.with_bridges(tuple(int(b) for b in p["bridges"]))
        ok, why = validate_bridges(topo)
        if not ok:
            raise InvalidArgumentError("bridge override violates the covering conditions: " + "; ".join(why))
    else:
        n_b = int(math.ceil(float(p["bridge_fraction"]) * L)) or None
        topo = topo.with_bridges(select_bridges(topo, n_b))
    return ens, meas, topo


def _report(seed, signals, S, x_hat, supports, iters, messages, t0, **kw) -> TrialReport:
    exact = tuple(frozenset(s) == S for s in supports)
    frac = min(len(S & frozenset(s)) for s in supports) / len(S)
    return TrialReport(seed, nmse(signals, x_hat), nser(S, supports), exact, frac, iters, messages,
                       time.perf_counter() - t0, **kw)


def run_trial(cell: dict, seed: int) -> TrialReport:
    """Run one trial of the cell's solver; solver errors become a failed report."""
    p = cell if "solver_config" in cell else resolve_params(cell)
    cfg = p["solver_config"]
    t0 = time.perf_counter()
    ens, meas, topo = build_instance(p, seed)
    try:
        if p["solver"] == "cbdsbl":
            fails = None
            if float(p["failure_rate"]) > 0:
                fails = FailureSchedule.random(meas.L, float(p["failure_rate"]), cfg.k_max,
                                               _rng.derive_seed(seed, _rng.FAILURES), p["failure_semantics"])
            res = run_cbdsbl(meas, topo, cfg, fails, truth=ens.signals)
            keep = np.flatnonzero(res.scored)
            hit = res.iterations_to(float(p["target_nmse_db"]))
            return _report(seed, ens.signals[keep], ens.support_set, res.x_hat[keep],
                           [res.supports[j] for j in keep], res.iters, res.ledger.total, t0,
                           iters_to_target=hit, consensus_gap=res.trace[-1].consensus_gap)
        if p["solver"] == "msbl":
            res = msbl_solve(meas, cfg)
            return _report(seed, ens.signals, ens.support_set, res.x_hat, res.supports, res.iters, 0, t0)
        x = np.stack([genie_lmmse(meas.node(j), ens.support) for j in range(meas.L)])
        return _report(seed, ens.signals, ens.support_set, x, [ens.support_set] * meas.L, 0, 0, t0)
    except CBDSBLError as exc:
        return TrialReport.failure(seed, exc, time.perf_counter() - t0)


@dataclass
class SweepGrid:
    """Cartesian sweep over ``axes`` on top of ``base`` parameters.

    ``criterion`` picks the pass rule of a cell: ``"nmse"`` passes when the
    trial-averaged (linear) NMSE is at or below ``target_nmse_db``;
    ``"support"`` passes when on average at least ``support_level`` of the
    true support is found at every node.
    """

    axes: dict
    base: dict = field(default_factory=dict)
    trials: int = 100
    root_seed: int = 0
    seeds: list | None = None
    criterion: str = "nmse"
    support_level: float = 0.9
    sweep_id: str = "sweep"

    def __post_init__(self):
        if not self.axes:
            raise InvalidArgumentError("sweep grid needs at least one axis")
        for name, values in self.axes.items():
            if name not in DEFAULT_PARAMS and name not in RATIO_AXES:
                raise InvalidArgumentError(f"unknown sweep axis {name!r}")
            if len(values) == 0:
                raise InvalidArgumentError(f"sweep axis {name!r} is empty")
        if self.seeds is None and int(self.trials) < 1:
            raise InvalidArgumentError("trials must be >= 1")
        if self.seeds is not None and len(self.seeds) < 1:
            raise InvalidArgumentError("seed list is empty")
        if self.criterion not in ("nmse", "support"):
            raise InvalidArgumentError(f"unknown pass criterion {self.criterion!r}")
        for c in self.cells():
            resolve_params(c)

    @property
    def axis_names(self) -> list:
        return list(self.axes)

    def cells(self) -> list:
        names = self.axis_names
        return [dict(self.base, **dict(zip(names, combo))) for combo in itertools.product(*self.axes.values())]

    def trial_seeds(self) -> list:
        if self.seeds is not None:
            return [int(s) for s in self.seeds]
        return [_rng.derive_seed(self.root_seed, _rng.TRIAL, t) for t in range(int(self.trials))]

    @property
    def size(self) -> int:
        return len(self.cells()) * len(self.trial_seeds())


def aggregate(reports: list, cell: dict, grid: SweepGrid | None = None) -> dict:
    """Collapse one cell's reports into a result row.

    Reports are reduced in seed order, so the row does not depend on the
    order trials finished in.
    """
    p = resolve_params(cell)
    ok = sorted((r for r in reports if not r.failed), key=lambda r: r.seed)
    row = {"trials": len(reports), "failed_trials": len(reports) - len(ok)}
    if not ok:
        row.update({c: math.nan for c in RESULT_COLUMNS[1:] + EXTRA_COLUMNS[:3]})
        row["passed"] = False
        return row
    db = np.array([r.nmse_db for r in ok])
    lin = np.array([r.nmse for r in ok])
    to_target = [r.iters_to_target if r.iters_to_target is not None else int(p["k_max"]) for r in ok]
    row.update(
        mean_nmse_db=float(np.mean(db)),
        std_nmse_db=float(np.std(db)),
        p_exact_support=float(np.mean([r.exact_support_all for r in ok])),
        mean_nser=float(np.mean([r.nser for r in ok])),
        mean_messages=float(np.mean([r.messages for r in ok])),
        mean_iters=float(np.mean([r.iters for r in ok])),
        avg_nmse_db=to_db(float(np.mean(lin))),
        mean_support_fraction=float(np.mean([r.support_fraction for r in ok])),
        mean_iters_to_target=float(np.mean(to_target)),
    )
    g = grid or SweepGrid({"n": [p["n"]]}, trials=1)
    if g.criterion == "nmse":
        row["passed"] = bool(row["avg_nmse_db"] <= float(p["target_nmse_db"]))
    else:
        row["passed"] = bool(row["mean_support_fraction"] >= g.support_level)
    return row


@dataclass
class SweepResult:
    grid: SweepGrid
    rows: list
    reports: list

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def boundary(self, x_axis: str, col_axis: str | None = None) -> dict:
        return phase_boundary(self.rows, x_axis, col_axis)

    def to_csv(self, path_or_buf=None) -> str:
        return write_results_csv(self.rows, self.grid.axis_names, path_or_buf)


def _run_task(task):
    cell, seed = task
    return run_trial(cell, seed)


def run_sweep(grid: SweepGrid, jobs: int = 1, progress=None) -> SweepResult:
    """Run every (cell, seed) pair and aggregate per cell in fixed trial order.

    ``jobs > 1`` farms trials out to worker processes; results are identical
    to the serial run.
    """
    cells = grid.cells()
    seeds = grid.trial_seeds()
    tasks = [(resolve_params(c), s) for c in cells for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            flat = list(ex.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        flat = []
        for i, t in enumerate(tasks):
            flat.append(_run_task(t))
            if progress:
                progress(i + 1, len(tasks))
    rows, reports = [], []
    T = len(seeds)
    for i, cell in enumerate(cells):
        chunk = flat[i * T:(i + 1) * T]
        row = {"sweep_id": grid.sweep_id}
        row.update({a: cell[a] for a in grid.axis_names})
        row.update(aggregate(chunk, cell, grid))
        rows.append(row)
        reports.append(chunk)
    return SweepResult(grid, rows, reports)


def phase_boundary(rows: list, x_axis: str, col_axis: str | None = None) -> dict:
    """Smallest passing ``x_axis`` value per ``col_axis`` value (``None`` when no cell passes)."""
    cols = {}
    for r in rows:
        key = r[col_axis] if col_axis else None
        cols.setdefault(key, []).append(r)
    out = {}
    for key, rs in cols.items():
        passing = sorted(r[x_axis] for r in rs if r["passed"])
        out[key] = passing[0] if passing else None
    return out


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def write_results_csv(rows: list, axis_names, path_or_buf=None) -> str:
    header = ["sweep_id", *axis_names, *RESULT_COLUMNS, *EXTRA_COLUMNS]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(r.get(h)) for h in header])
    text = buf.getvalue()
    if path_or_buf is not None:
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", newline="") as fh:
                fh.write(text)
    return text


def _parse_value(s: str):
    if s == "":
        return None
    if s in ("True", "False"):
        return s == "True"
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def read_results_csv(text: str) -> list:
    return [{k: _parse_value(v) for k, v in r.items()} for r in csv.DictReader(io.StringIO(text))]
