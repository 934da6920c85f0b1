"""Command-line front end: run, compare, replay, verify."""
from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import engine, report
from .errors import InfeasibleAllocation, ValidationError
from .learner import QTable
from .presets import PRESETS, load_config, load_preset
from .verify import suite


def _parse_modes(text: str) -> list[int]:
    try:
        modes = sorted({int(m) for m in text.split(",") if m.strip()})
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad mode list {text!r}") from None
    return modes


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=sorted(PRESETS), help="bundled grid/region configuration")
    src.add_argument("--config", type=Path, help="JSON experiment file")
    common.add_argument("--seed", type=int, default=0, help="scenario and master seed (default 0)")
    common.add_argument("--seeds", type=int, default=1, metavar="N", help="use seeds seed..seed+N-1")
    common.add_argument("--mode", type=int, default=None, help="mode 0..4 (run, replay, verify)")
    common.add_argument("--modes", type=_parse_modes, default=None, help="comma list for compare, e.g. 0,1,2,3,4")
    common.add_argument("--runs", type=int, help="override number of runs")
    common.add_argument("--episodes", type=int, help="override episodes per run")
    common.add_argument("--steps", type=int, help="override steps per episode")
    common.add_argument("--lifetime", action="store_true", help="episodes last until the relay battery is empty")
    common.add_argument("--out", type=Path, default=Path("results"), metavar="DIR", help="output root (default results/)")
    common.add_argument("--dump-qtables", action="store_true", help="save the final Q-table of every UAV")
    common.add_argument("--verify", action="store_true", help="run the invariant suite on the result")
    common.add_argument("--no-figures", action="store_true", help="skip the PNG figures")

    p = argparse.ArgumentParser(prog="uavshare", description="UAV spectrum-sharing simulator")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="simulate one configuration")
    sub.add_parser("compare", parents=[common], help="compare modes on shared scenarios")
    rp = sub.add_parser("replay", parents=[common], help="greedy execution of saved Q-tables")
    rp.add_argument("qtables", nargs="+", type=Path, help="Q-table files (one per UAV) or a directory")
    sub.add_parser("verify", parents=[common], help="invariant and oracle checks")
    return p


def experiment_from_args(args, check_learning=True):
    exp = load_config(args.config, check_learning) if args.config else load_preset(args.preset or "table1-9x9")
    changes = {}
    for key in ("runs", "episodes", "steps", "mode"):
        value = getattr(args, key)
        if value is not None:
            changes[key] = value
    if args.lifetime:
        changes["lifetime_mode"] = True
    exp = exp.with_run(**changes)
    exp.run.validate()
    return exp


def output_dir(root: Path, exp, seed: int, tag: str) -> Path:
    d = root / f"{exp.name}-{exp.digest()}" / f"{tag}-seed{seed}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _digest_line(exp, seed, result) -> str:
    thr = result.sum_throughput()[:, -1].mean()
    life = result.relay_lifetime()[:, -1].mean()
    return (f"mode={exp.run.mode} seed={seed} runs={exp.run.runs} "
            f"final_sum_throughput={thr:.4f} relay_lifetime={life:.1f}")


def _print_checks(checks) -> bool:
    for c in checks:
        print(f"  {c.status:4s} {c.name:20s} {c.detail}")
    return all(c.status != "FAIL" for c in checks)


def cmd_run(args) -> int:
    exp = experiment_from_args(args)
    ok = True
    for seed in range(args.seed, args.seed + args.seeds):
        scenario = exp.scenario_for(seed)
        cfg = replace(exp.run, master_seed=seed)
        result = engine.run(scenario, cfg, exp.learning)
        tag = f"mode{cfg.mode}" + ("-lifetime" if cfg.lifetime_mode else "")
        out = output_dir(args.out, exp, seed, tag)
        report.write_metrics_csv(result, out / "metrics.csv")
        report.write_json(exp.to_dict() | {"seed": seed}, out / "config.json")
        scenario.save(out / "scenario.json")
        report.write_json({"allocations": [{"episode": ep, "primary_region": a.primary_region,
                                            "uavs": a.records(scenario if ep == 0 else result.final_scenario)}
                                           for ep, a in result.allocations],
                           "reallocation_episodes": result.reallocation_episodes},
                          out / "allocation.json")
        report.write_json(report.run_summary(result), out / "summary.json")
        if args.dump_qtables:
            qdir = out / "qtables"
            qdir.mkdir(exist_ok=True)
            final = result.allocations[-1][1]
            for u, q in enumerate(result.final_qtables):
                q.save(qdir / f"uav{u}.txt", uav=u, region=final.region_of(u), role=final.role(u))
        if not args.no_figures:
            report.plot_run(result, out / "episodes.png", title=f"{exp.name}, {tag}, seed {seed}")
        print(_digest_line(exp, seed, result))
        print(f"  -> {out}")
        if args.verify:
            ok &= _print_checks(suite(exp, seed, result=result))
    return 0 if ok else 1


def cmd_compare(args) -> int:
    exp = experiment_from_args(args)
    modes = args.modes if args.modes is not None else [0, 1, 2, 3, 4]
    if any(m not in range(5) for m in modes):
        raise ValidationError("modes", "modes must be within 0..4")
    seeds = list(range(args.seed, args.seed + args.seeds))
    table = {"sum_throughput": {m: [] for m in modes},
             "relay_lifetime": {m: [] for m in modes},
             "energy_rate": {m: [] for m in modes}}
    curves = []
    for seed in seeds:
        scenario = exp.scenario_for(seed)
        for m in modes:
            cfg = replace(exp.run, mode=m, master_seed=seed, lifetime_mode=False)
            res = engine.run(scenario, cfg, exp.learning)
            thr = res.sum_throughput()
            rate = np.nanmean(res.metrics["energy_rate"], axis=2)
            table["sum_throughput"][m].append(float(thr[:, -5:].mean()))
            table["energy_rate"][m].append(float(np.nanmean(rate[:, -5:])))
            life = engine.run(scenario, replace(cfg, lifetime_mode=True), exp.learning).relay_lifetime()
            table["relay_lifetime"][m].append(float(life.mean()))
            for e in range(thr.shape[1]):
                curves.append((m, seed, e, repr(float(thr[:, e].mean())), repr(float(rate[:, e].mean())),
                               repr(float(life[:, e].mean()))))
    tag = "compare-modes" + "".join(map(str, modes))
    out = output_dir(args.out, exp, args.seed, f"{tag}-n{len(seeds)}")
    with open(out / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("mode", "seed", "metric", "value"))
        for metric, per_mode in table.items():
            for m in modes:
                for seed, v in zip(seeds, per_mode[m]):
                    w.writerow((m, seed, metric, repr(v)))
    with open(out / "compare_episodes.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("mode", "seed", "episode", "sum_throughput", "energy_rate", "relay_lifetime"))
        w.writerows(curves)
    summary = {metric: {str(m): report.mean_ci(per_mode[m]) for m in modes} for metric, per_mode in table.items()}
    report.write_json(summary, out / "compare_summary.json")
    if not args.no_figures:
        report.plot_compare(table, out / "compare.png", title=f"{exp.name}, {len(seeds)} seed(s)")
    print(f"{'mode':>4} {'sum_throughput':>22} {'relay_lifetime':>20} {'energy_rate':>18}")
    for m in modes:
        cells = [f"{np.mean(table[k][m]):.4g} +- {np.std(table[k][m]):.3g}" for k in table]
        print(f"{m:>4} {cells[0]:>22} {cells[1]:>20} {cells[2]:>18}")
    print(f"  -> {out}")
    return 0


def _qtable_files(paths):
    files = []
    for p in paths:
        files += sorted(p.glob("uav*.txt"), key=lambda f: int(f.stem[3:])) if p.is_dir() else [p]
    return files


def cmd_replay(args) -> int:
    exp = experiment_from_args(args)
    seed = args.seed
    scenario = exp.scenario_for(seed)
    policy = engine.apply_mode(exp.run.mode)
    alloc = engine.allocate_for_mode(scenario, policy, seed)
    tables = [QTable.load(f)[0] for f in _qtable_files(args.qtables)]
    steps = exp.run.steps
    log = engine.replay(scenario, alloc, tables, steps, np.random.default_rng([seed, 3]))
    out = output_dir(args.out, exp, seed, f"replay-mode{exp.run.mode}")
    with open(out / "trajectory.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["step", "uav", "role", "region", "action", "cell", "rate"],
                           lineterminator="\n")
        w.writeheader()
        for row in log:
            w.writerow(row | {"rate": repr(row["rate"])})
    for u in range(scenario.n_uavs):
        cells = [row["cell"] for row in log if row["uav"] == u]
        end = cells[-1] if cells else scenario.grid.region_center(alloc.region_of(u))
        print(f"uav {u} ({alloc.role(u)}, region {alloc.region_of(u)}): "
              f"{len(set(cells))} distinct cells, ends at cell {end}")
    print(f"  -> {out}")
    return 0


def cmd_verify(args) -> int:
    exp = experiment_from_args(args, check_learning=False)
    ok = True
    for seed in range(args.seed, args.seed + args.seeds):
        print(f"verify {exp.name} seed {seed}")
        ok &= _print_checks(suite(exp, seed))
    print("ALL PASS" if ok else "FAILURES")
    return 0 if ok else 1


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "replay": cmd_replay, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: invalid {exc}", file=sys.stderr)
        return 2
    except InfeasibleAllocation as exc:
        print(f"error: infeasible allocation: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
