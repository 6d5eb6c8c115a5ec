"""Command-line front end: ``cbdsbl run | sweep | topology``.

Experiments are described by a TOML file.  Every table and key is checked
before anything runs; errors point at the offending line of the file.

Exit codes: 0 success, 2 configuration error, 3 runtime or numeric error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import re
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__, _rng
from .bench import SweepGrid, build_instance, resolve_params, run_sweep
from .errors import CBDSBLError, InvalidArgumentError
from .graph import (build_constraints, cbdsbl_rate_constants, format_topology, generate_erdos_renyi,
                    select_bridges, validate_bridges)
from .metrics import nmse, nser, to_db
from .sbl import msbl_solve
from .sim import FailureSchedule, run_cbdsbl, write_trace_csv

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
SEED_ENV = "CBDSBL_SEED"

# table -> key -> trial parameter name (None: handled specially)
SCHEMA = {
    "": {"seed": None},
    "problem": {"n": "n", "m": "m", "k": "k", "L": "L", "snr_db": "snr_db", "dist": "dist"},
    "topology": {"p": "p_edge", "seed": "topology_seed", "bridges": "bridges", "bridge_fraction": "bridge_fraction"},
    "solver": {"r_max": "r_max", "k_max": "k_max", "eps": "eps", "rho": "rho", "rho_scale": "rho_scale",
               "threshold_multiplier": "threshold_multiplier", "failure_rate": "failure_rate",
               "failure_semantics": "failure_semantics", "target_nmse_db": "target_nmse_db"},
    "run": {"trials": None},
    "sweep": {"preset": None, "axes": None, "trials": None, "criterion": None, "solver": None,
              "x_axis": None, "col_axis": None, "id": None},
    "output": {"dir": None, "prefix": None},
}

PRESETS = {
    "rho": dict(axes={"rho_scale": [0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0]}, x_axis="rho_scale"),
    "phase": dict(axes={"m_over_n": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9], "L": [1, 2, 5, 10]},
                  x_axis="m_over_n", col_axis="L"),
    "snr": dict(axes={"snr_db": [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]}, x_axis="snr_db"),
    "bridges": dict(axes={"bridge_fraction": [0.1, 0.2, 0.3, 0.5],
                          "failure_rate": [0.0, 0.005, 0.01, 0.02, 0.05]},
                    x_axis="failure_rate", col_axis="bridge_fraction"),
}


class ConfigError(Exception):
    """Invalid configuration; message already carries ``path:line:`` context."""


@dataclass
class ExperimentConfig:
    path: str
    text: str
    data: dict
    seed: int = 0
    params: dict = field(default_factory=dict)
    trials: int = 1
    sweep: dict = field(default_factory=dict)
    out_dir: Path = Path("results")
    prefix: str = "cbdsbl"

    def line_of(self, table: str, key: str | None = None) -> int:
        return _locate(self.text, table, key)

    def where(self, table, key=None) -> str:
        ln = self.line_of(table, key)
        return f"{self.path}:{ln}" if ln else self.path

    def resolved(self) -> dict:
        """Everything needed to reproduce the run, defaults included."""
        p = {k: v for k, v in resolve_params(self.params).items() if k != "solver_config"}
        return {"seed": self.seed, "params": p, "trials": self.trials, "sweep": self.sweep,
                "version": __version__}

    def digest(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def _locate(text: str, table: str, key: str | None) -> int:
    """1-based line of ``[table]`` (or of ``key`` inside it); 0 if not found."""
    current = ""
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[\s*([^\]]+?)\s*\]", s)
        if m:
            current = m.group(1)
            if key is None and current == table:
                return i
            continue
        if key is not None and current == table and re.match(rf"^{re.escape(key)}\s*=", s):
            return i
    return 0


def load_config(path: str | None, seed_flag: int | None = None) -> ExperimentConfig:
    """Parse and validate a TOML experiment file (``None``: all defaults)."""
    text = ""
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg = ExperimentConfig(str(path or "<defaults>"), text, data)

    for key, val in data.items():
        if isinstance(val, dict):
            if key not in SCHEMA or key == "":
                raise ConfigError(f"{cfg.where(key)}: unknown table [{key}]")
            for sub in val:
                if sub not in SCHEMA[key]:
                    raise ConfigError(f"{cfg.where(key, sub)}: unknown key '{key}.{sub}'")
        elif key not in SCHEMA[""]:
            raise ConfigError(f"{cfg.where('', key)}: unknown top-level key '{key}'")

    params = {}
    for table, keys in SCHEMA.items():
        if table == "":
            continue
        for key, name in keys.items():
            if name is not None and key in data.get(table, {}):
                params[name] = data[table][key]
    solver = data.get("solver", {})
    if isinstance(solver.get("rho"), str):
        if solver["rho"] != "auto":
            raise ConfigError(f"{cfg.where('solver', 'rho')}: solver.rho must be \"auto\" or a positive number")
        params["rho"] = None
    cfg.params = params

    seed = data.get("seed", 0)
    if os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV}={os.environ[SEED_ENV]!r} is not an integer") from exc
    if seed_flag is not None:
        seed = seed_flag
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"{cfg.where('', 'seed')}: seed must be a non-negative integer")
    cfg.seed = seed

    run = data.get("run", {})
    cfg.trials = run.get("trials", 1)
    if not isinstance(cfg.trials, int) or cfg.trials < 1:
        raise ConfigError(f"{cfg.where('run', 'trials')}: run.trials must be a positive integer")
    out = data.get("output", {})
    cfg.out_dir = Path(out.get("dir", "results"))
    cfg.prefix = str(out.get("prefix", "cbdsbl"))
    cfg.sweep = dict(data.get("sweep", {}))
    _validate_params(cfg)
    return cfg


def _validate_params(cfg: ExperimentConfig):
    p = cfg.params
    n = p.get("n", 50)
    where = {name: (table, key) for table, keys in SCHEMA.items() for key, name in keys.items() if name}
    # k > n is the commonest mistake; name the field explicitly
    if "k" in p and isinstance(p["k"], int) and isinstance(n, int) and p["k"] > n:
        raise ConfigError(f"{cfg.where('problem', 'k')}: problem.k = {p['k']} exceeds problem.n = {n}")
    if "p_edge" in p and not (isinstance(p["p_edge"], (int, float)) and 0 < p["p_edge"] <= 1):
        raise ConfigError(f"{cfg.where('topology', 'p')}: topology.p = {p['p_edge']!r} must lie in (0, 1]")
    try:
        resolve_params(p)
    except (InvalidArgumentError, TypeError, ValueError) as exc:
        msg = str(exc)
        for name, (table, key) in where.items():
            if re.search(rf"\b{re.escape(name)}\b", msg) and name in p:
                raise ConfigError(f"{cfg.where(table, key)}: {table}.{key}: {msg}") from exc
        raise ConfigError(f"{cfg.path}: {msg}") from exc


def sweep_grid(cfg: ExperimentConfig) -> tuple[SweepGrid, dict]:
    sw = dict(cfg.sweep)
    spec = {}
    if "preset" in sw:
        if sw["preset"] not in PRESETS:
            raise ConfigError(f"{cfg.where('sweep', 'preset')}: unknown preset {sw['preset']!r}; "
                              f"choose from {', '.join(PRESETS)}")
        spec.update(PRESETS[sw["preset"]])
    if "axes" in sw:
        spec["axes"] = sw["axes"]
    for k in ("x_axis", "col_axis"):
        if k in sw:
            spec[k] = sw[k]
    if not spec.get("axes"):
        raise ConfigError(f"{cfg.where('sweep')}: sweep needs 'axes' or a 'preset'")
    base = dict(cfg.params)
    if "solver" in sw:
        base["solver"] = sw["solver"]
    try:
        grid = SweepGrid(axes={k: list(v) for k, v in spec["axes"].items()}, base=base,
                         trials=int(sw.get("trials", 100)), root_seed=cfg.seed,
                         criterion=sw.get("criterion", "nmse"), sweep_id=str(sw.get("id", cfg.prefix)))
    except (InvalidArgumentError, TypeError) as exc:
        raise ConfigError(f"{cfg.where('sweep')}: {exc}") from exc
    spec.setdefault("x_axis", grid.axis_names[0])
    return grid, spec


# ---------------------------------------------------------------- output helpers

def write_atomic(path: Path, text: str):
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(cfg: ExperimentConfig, command: str, seeds: list, outputs: list, extra=None) -> Path:
    man = {"command": command, "config_path": cfg.path, "config_sha256": cfg.digest(),
           "resolved": cfg.resolved(), "trial_seeds": seeds, "outputs": [str(o) for o in outputs]}
    if extra:
        man.update(extra)
    path = cfg.out_dir / f"{cfg.prefix}_{command}_manifest.json"
    write_atomic(path, json.dumps(man, indent=2, sort_keys=True, default=str) + "\n")
    return path


# ---------------------------------------------------------------- commands

REPORT_COLUMNS = ("trial", "seed", "nmse_db", "nser", "exact_support", "iters", "messages", "consensus_gap")


def _run_one(p: dict, seed: int, compare: bool):
    """One CB-DSBL trial (plus optional M-SBL baseline): report fields and trace CSV."""
    ens, meas, topo = build_instance(p, seed)
    fails = None
    if p["failure_rate"] > 0:
        fails = FailureSchedule.random(meas.L, p["failure_rate"], p["k_max"],
                                       _rng.derive_seed(seed, _rng.FAILURES), p["failure_semantics"])
    res = run_cbdsbl(meas, topo, p["solver_config"], fails, truth=ens.signals)
    keep = [j for j in range(meas.L) if res.scored[j]]
    sup = [res.supports[j] for j in keep]
    row = [seed, repr(to_db(nmse(ens.signals[keep], res.x_hat[keep]))), repr(nser(ens.support_set, sup)),
           all(s == ens.support_set for s in sup), res.iters, res.ledger.total,
           repr(res.trace[-1].consensus_gap)]
    if compare:
        c = msbl_solve(meas, p["solver_config"])
        row += [repr(to_db(nmse(ens.signals, c.x_hat))), repr(nser(ens.support_set, c.supports))]
    return row, write_trace_csv(res.trace)


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.seed)
    p = resolve_params(cfg.params)
    seeds = [_rng.derive_seed(cfg.seed, _rng.TRIAL, t) for t in range(cfg.trials)]
    compare = bool(args.compare_centralized)
    cols = list(REPORT_COLUMNS) + (["msbl_nmse_db", "msbl_nser"] if compare else [])
    jobs = max(1, int(args.jobs))
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_one, [p] * len(seeds), seeds, [compare] * len(seeds)))
    else:
        results = [_run_one(p, s, compare) for s in seeds]
    lines = [",".join(cols)]
    outputs = []
    for t, (row, trace_text) in enumerate(results):
        lines.append(",".join(str(v) for v in [t, *row]))
        tpath = cfg.out_dir / f"{cfg.prefix}_trace_{t:03d}.csv"
        write_atomic(tpath, trace_text)
        outputs.append(tpath)
    rpath = cfg.out_dir / f"{cfg.prefix}_report.csv"
    write_atomic(rpath, "\n".join(lines) + "\n")
    outputs.append(rpath)
    mpath = write_manifest(cfg, "run", seeds, outputs, {"compare_centralized": compare, "jobs": jobs})
    print(f"wrote {rpath} and {len(seeds)} trace file(s); manifest {mpath}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, args.seed)
    grid, spec = sweep_grid(cfg)
    if args.dry_run:
        print(f"sweep '{grid.sweep_id}': {len(grid.cells())} cells x {len(grid.trial_seeds())} trials "
              f"= {grid.size} runs")
        for name, vals in grid.axes.items():
            print(f"  {name}: {vals}")
        return EXIT_OK
    result = run_sweep(grid, jobs=max(1, int(args.jobs)))
    csv_path = cfg.out_dir / f"{cfg.prefix}_sweep.csv"
    write_atomic(csv_path, result.to_csv())
    outputs = [csv_path]
    boundary = result.boundary(spec["x_axis"], spec.get("col_axis"))
    if args.plot:
        from . import plotting

        x = spec["x_axis"]
        if "rho_scale" in grid.axes and len(grid.axes) == 1:
            svg = plotting.rho_sensitivity_plot(result.rows)
        elif spec.get("col_axis"):
            svg = plotting.heatmap_plot(result.rows, x, spec["col_axis"], boundary=boundary)
        else:
            svg = plotting.line_plot(result.rows, x)
        svg_path = csv_path.with_suffix(".svg")
        write_atomic(svg_path, svg)
        outputs.append(svg_path)
    mpath = write_manifest(cfg, "sweep", grid.trial_seeds(), outputs,
                           {"boundary": {str(k): v for k, v in boundary.items()},
                            "trials_per_cell": len(grid.trial_seeds()), "jobs": int(args.jobs)})
    print(f"wrote {csv_path} ({len(result.rows)} cells); manifest {mpath}")
    for k, v in boundary.items():
        label = f"{spec.get('col_axis')}={k}" if k is not None else "boundary"
        print(f"  {label}: first passing {spec['x_axis']} = {v}")
    return EXIT_OK


def topology_report(L: int, p: float, seed: int, bridges=None) -> str:
    topo = generate_erdos_renyi(L, p, seed)
    topo = topo.with_bridges(bridges if bridges else select_bridges(topo))
    ok, why = validate_bridges(topo)
    if not ok:
        raise InvalidArgumentError("; ".join(why))
    cons = build_constraints(topo, 1)
    rc = cbdsbl_rate_constants(cons)
    out = [format_topology(topo).rstrip("\n"),
           f"sigma2_min: {cons.sigma2_min:g}",
           f"sigma2_max: {cons.sigma2_max:g}",
           f"kappa: {cons.kappa:g}",
           f"rho_opt: {rc.rho_opt:.12g}",
           f"delta_opt: {rc.delta_opt:.12g}"]
    return "\n".join(out) + "\n"


def cmd_topology(args) -> int:
    if not 0 < args.p <= 1:
        raise ConfigError(f"--p {args.p} must lie in (0, 1]")
    if args.L < 2:
        raise ConfigError(f"--L {args.L} must be >= 2")
    seed = args.seed
    if seed is None:
        seed = int(os.environ.get(SEED_ENV, 0))
    bridges = [int(b) for b in args.bridges.split(",")] if args.bridges else None
    sys.stdout.write(topology_report(args.L, args.p, seed, bridges))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cbdsbl", description="Decentralized sparse Bayesian learning experiments.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="TOML experiment file (defaults when omitted)")
        sp.add_argument("--seed", type=int, help="root seed (overrides config and $%s)" % SEED_ENV)
        sp.add_argument("--jobs", type=int, default=1, help="worker processes for trials")

    r = sub.add_parser("run", help="run CB-DSBL trials and write traces + report")
    common(r)
    r.add_argument("--compare-centralized", action="store_true", help="also run centralized M-SBL")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="Monte-Carlo sweep over a parameter grid")
    common(s)
    s.add_argument("--plot", action="store_true", help="render an SVG next to the CSV")
    s.add_argument("--dry-run", action="store_true", help="print the grid size and exit")
    s.set_defaults(func=cmd_sweep)

    t = sub.add_parser("topology", help="print a random topology, its bridges and rate constants")
    t.add_argument("--L", type=int, default=10)
    t.add_argument("--p", type=float, default=0.8)
    t.add_argument("--seed", type=int)
    t.add_argument("--bridges", help="comma-separated bridge ids (default: greedy selection)")
    t.set_defaults(func=cmd_topology)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidArgumentError as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CBDSBLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
