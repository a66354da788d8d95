"""``easysched`` command line.

Exit codes: 0 success, 1 runtime failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import statistics
import sys
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .jobshop import (
    Instance, InstanceError, Schedule, check_feasible, dump_instance, gantt_export,
    generate_instance, load_instance,
)
from .pso import PsoParams, normalization_bounds, objective, pso_run
from .scenario import ScenarioError, load_scenario

log = logging.getLogger("easysched")

NEGOTIATION_COLUMNS = ("agent", "gamma", "makespan_s", "energy_wh", "reply")
REACTIVE_COLUMNS = ("agent", "taux", "old_mk", "old_e", "new_mk", "new_e", "penalty")


class UsageError(Exception):
    """Bad input; maps to exit code 2."""


def bundled(name: str) -> Path:
    return Path(str(resources.files("easysched") / "data" / name))


def _read_instance(path: str) -> Instance:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"instance not found: {path}")
    try:
        return load_instance(p.read_text(encoding="utf-8"))
    except InstanceError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _load_scenario(path: str, overrides: dict):
    if path == "scenario_52":
        path = str(bundled("scenario_52.toml"))
    try:
        return load_scenario(path, overrides)
    except ScenarioError as exc:
        raise UsageError(str(exc)) from None


def _pso_params(args, seed: int) -> PsoParams:
    try:
        return PsoParams(swarm_size=args.swarm, iterations=args.iterations, inertia=args.w,
                         cognitive=args.c1, social=args.c2, neighborhood_size=args.neighborhood, seed=seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_csv(path: Path, columns: Sequence[str], rows: list[dict]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: str(v).lower() if isinstance(v, bool) else v for k, v in r.items()})


def _gammas(text: str) -> list[float]:
    try:
        grid = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad gamma grid {text!r}") from None
    if not grid:
        raise UsageError("gamma grid is empty")
    bad = [g for g in grid if not 0 <= g <= 1]
    if bad:
        raise UsageError(f"gamma values outside [0, 1]: {bad}")
    return grid


# -- commands -------------------------------------------------------------------

def cmd_gen(args) -> int:
    if args.check:
        inst = _read_instance(args.check)
        print(f"{args.check}: {inst.num_machines} machines, {inst.num_jobs} jobs, "
              f"{inst.max_speed} speeds, {inst.num_operations} operations")
        return 0
    try:
        inst = generate_instance(args.machines, args.jobs, args.speeds, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = dump_instance(inst)
    if args.output == "-":
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text, encoding="utf-8")
        log.info("wrote %s", args.output)
    return 0


def cmd_predict(args) -> int:
    inst = _read_instance(args.instance)
    if not 0 <= args.gamma <= 1:
        raise UsageError("gamma must lie in [0, 1]")
    out = _out_dir(args)
    bounds = normalization_bounds(inst)
    print("gamma,makespan,energy,F,seed")
    best = None
    for s in range(args.seed, args.seed + args.runs):
        res = pso_run(inst, args.gamma, _pso_params(args, s))
        sch = res.schedule
        check_feasible(sch, inst)
        f = objective(sch.makespan_s, sch.total_energy_wh, args.gamma, bounds)
        print(f"{args.gamma:g},{sch.makespan_s},{sch.total_energy_wh:.1f},{f:.6f},{s}")
        (out / f"schedule_seed{s}.json").write_text(
            json.dumps({"instance": args.instance, "gamma": args.gamma, "seed": s, "F": f, **sch.to_dict()},
                       indent=1) + "\n", encoding="utf-8")
        (out / f"gantt_seed{s}.csv").write_text(gantt_export(sch), encoding="utf-8")
        if best is None or (f, sch.makespan_s) < (best[1], best[2].makespan_s):
            best = (s, f, sch)
    if args.runs > 1:
        s, f, sch = best
        print(f"{args.gamma:g},{sch.makespan_s},{sch.total_energy_wh:.1f},{f:.6f},best:{s}")
    return 0


def _scenario_overrides(args) -> dict:
    o: dict = {}
    for flag, key in (("horizon", "horizon_s"), ("repetitions", "repetitions"), ("gamma0", "gamma0"),
                      ("alpha", "alpha"), ("latency", "latency_s")):
        v = getattr(args, flag, None)
        if v is not None:
            o[key] = v
    periods = {k: getattr(args, k) for k in ("p1", "p2", "p3") if getattr(args, k, None) is not None}
    if periods:
        o["periods"] = periods
    if args.seed_given:
        o["seed"] = args.seed
    return o


def _write_run(out: Path, report: dict) -> None:
    from .runtime.sim import report_json
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report_json(report), encoding="utf-8")
    _write_csv(out / "negotiation.csv", NEGOTIATION_COLUMNS, report["negotiation"])
    _write_csv(out / "reactive.csv", REACTIVE_COLUMNS, report["reactive"])


def cmd_run(args) -> int:
    from .runtime.net import run_loopback
    from .runtime.sim import aggregate, run_simulation, summarize

    sc = _load_scenario(args.scenario, _scenario_overrides(args))
    out = _out_dir(args)

    def one(seed: int) -> dict:
        if args.mode == "loopback":
            return run_loopback(sc, seed)
        return run_simulation(sc, seed)

    if sc.repetitions == 1:
        report = one(sc.seed)
        _write_run(out, report)
        reports = [report]
    else:
        reports = []
        for i in range(sc.repetitions):
            r = one(sc.seed + i)
            _write_run(out / f"rep{i}", r)
            reports.append(r)
    for r in reports:
        for row in r["reactive"]:
            print(f"seed={r['seed']} {row['agent']} taux={row['taux']:.2f}% "
                  f"mk {row['old_mk']}->{row['new_mk']} E {row['old_e']}->{row['new_e']} "
                  f"penalty={str(row['penalty']).lower()} ({row['technique']})")
        for name, fin in summarize(r).items():
            if fin is None:
                print(f"seed={r['seed']} {name}: no accepted schedule")
            else:
                print(f"seed={r['seed']} {name}: makespan={fin['makespan_s']} energy={fin['energy_wh']:.1f}")
        for fault in r["faults"]:
            log.warning("fault: %s", fault)
    if sc.repetitions > 1:
        agg = aggregate(sc, reports)
        (out / "aggregate.json").write_text(json.dumps(agg, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        print(json.dumps(agg, sort_keys=True))
    return 0


def cmd_bench(args) -> int:
    grid = _gammas(args.gammas)
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    if args.family:
        try:
            m, n, v = (int(x) for x in args.family.lower().split("x"))
        except ValueError:
            raise UsageError(f"--family must look like MxNxV, got {args.family!r}") from None
        inst = generate_instance(m, n, v, args.seed)
    elif args.instance:
        inst = _read_instance(args.instance)
    else:
        raise UsageError("give an instance file or --family")
    seeds = list(range(args.seed, args.seed + args.runs))
    rows = []
    for g in grid:
        res = [pso_run(inst, g, _pso_params(args, s)).schedule for s in seeds]
        mks = [r.makespan_s for r in res]
        es = [r.total_energy_wh for r in res]
        rows.append({"gamma": g, "runs": len(res),
                     "mean_makespan_s": round(statistics.fmean(mks), 3), "best_makespan_s": min(mks),
                     "mean_energy_wh": round(statistics.fmean(es), 3), "best_energy_wh": min(es)})
    cols = ("gamma", "runs", "mean_makespan_s", "best_makespan_s", "mean_energy_wh", "best_energy_wh")
    w = csv.DictWriter(sys.stdout, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    if args.out_dir != ".":
        _write_csv(_out_dir(args) / "bench.csv", cols, rows)
    return 0


def _peers(items: Sequence[str]) -> dict[str, str]:
    out = {}
    for it in items:
        name, sep, addr = it.partition("=")
        if not sep:
            raise UsageError(f"--peer must be NAME=HOST:PORT, got {it!r}")
        out[name] = addr
    return out


def cmd_serve(args) -> int:
    from .runtime.net import run_distributed
    from .runtime.sim import report_json

    sc = _load_scenario(args.scenario, _scenario_overrides(args))
    role = "loopback" if args.role == "all" else args.role
    if role in ("aou", "aoe", "ace") and not (args.name and args.listen):
        raise UsageError(f"--role {args.role} needs --name and --listen")
    try:
        report = run_distributed(role, sc, name=args.name, listen=args.listen,
                                 peers=_peers(args.peer) or None, seed=sc.seed,
                                 clock=args.clock, time_scale=args.time_scale)
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    if report is not None:
        _write_run(_out_dir(args), report)
        sys.stdout.write(report_json({"negotiation": report["negotiation"], "reactive": report["reactive"],
                                      "faults": report["faults"]}))
    return 0


def cmd_gantt(args) -> int:
    inst = _read_instance(args.instance)
    p = Path(args.schedule)
    if not p.exists():
        raise UsageError(f"schedule not found: {args.schedule}")
    data = json.loads(p.read_text(encoding="utf-8"))
    if "factories" in data:  # a run report
        if args.factory not in data["factories"]:
            raise UsageError(f"report has no factory {args.factory!r}")
        data = data["factories"][args.factory][args.which]
        if data is None:
            raise UsageError(f"factory {args.factory!r} has no {args.which} schedule")
    sch = Schedule.from_dict(data, inst)
    check_feasible(sch, inst)
    text = gantt_export(sch)
    if args.output == "-":
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text, encoding="utf-8")
    return 0


# -- parser ---------------------------------------------------------------------

def _pso_flags(p: argparse.ArgumentParser) -> None:
    d = PsoParams()
    g = p.add_argument_group("PSO")
    g.add_argument("--swarm", type=int, default=d.swarm_size)
    g.add_argument("--iterations", type=int, default=d.iterations)
    g.add_argument("--w", type=float, default=d.inertia, help="inertia weight")
    g.add_argument("--c1", type=float, default=d.cognitive)
    g.add_argument("--c2", type=float, default=d.social)
    g.add_argument("--neighborhood", type=int, default=d.neighborhood_size)


def _scenario_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("scenario overrides")
    g.add_argument("--horizon", type=float)
    g.add_argument("--repetitions", type=int)
    g.add_argument("--gamma0", type=float)
    g.add_argument("--alpha", type=float)
    g.add_argument("--p1", type=float)
    g.add_argument("--p2", type=float)
    g.add_argument("--p3", type=float)
    g.add_argument("--latency", type=float)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out-dir", default=".")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="easysched", parents=[common],
                                 description="Energy-aware predictive/reactive job-shop scheduling.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate or check an instance")
    p.add_argument("--machines", "-m", type=int, default=3)
    p.add_argument("--jobs", "-n", type=int, default=10)
    p.add_argument("--speeds", "-V", type=int, default=5)
    p.add_argument("--output", "-o", default="-")
    p.add_argument("--check", metavar="FILE", help="validate an existing instance file instead")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("predict", parents=[common], help="predictive PSO solve of one instance")
    p.add_argument("instance")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--runs", type=int, default=1, help="seeds seed..seed+runs-1")
    _pso_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("run", parents=[common], help="run a scenario (predictive + reactive)")
    p.add_argument("scenario", help="scenario TOML file, or 'scenario_52' for the bundled one")
    p.add_argument("--mode", choices=("sim", "loopback"), default="sim")
    _scenario_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", parents=[common], help="gamma grid x seeds aggregate table")
    p.add_argument("instance", nargs="?")
    p.add_argument("--family", help="generate an MxNxV instance from --seed instead")
    p.add_argument("--gammas", default="1,0.9,0.8,0.7")
    p.add_argument("--runs", type=int, default=5)
    _pso_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", parents=[common], help="distributed roles over TCP")
    p.add_argument("scenario")
    p.add_argument("--role", choices=("aou", "aoe", "ace", "orchestrator", "all"), required=True)
    p.add_argument("--name", help="agent name (agent roles)")
    p.add_argument("--listen", help="HOST:PORT (agent roles)")
    p.add_argument("--peer", action="append", default=[], help="NAME=HOST:PORT (orchestrator)")
    p.add_argument("--clock", choices=("sim", "wall"), default="sim")
    p.add_argument("--time-scale", type=float, default=1.0)
    _scenario_flags(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("gantt", parents=[common], help="export a schedule as Gantt CSV")
    p.add_argument("schedule", help="schedule JSON from predict, or a run report.json")
    p.add_argument("--instance", required=True)
    p.add_argument("--factory", default="aou1")
    p.add_argument("--which", choices=("final", "predictive"), default="final")
    p.add_argument("--output", "-o", default="-")
    p.set_defaults(func=cmd_gantt)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"easysched: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - top-level boundary
        log.debug("failure", exc_info=True)
        print(f"easysched: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
