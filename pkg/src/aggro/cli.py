"""Command-line interface: run experiments, convergence studies, steady-state
distances, energy decay monitoring, and the dual conservation-law solver."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import burgers as _burgers
from . import harness as _h
from .measures import write_csv


def _load_config(path):
    with open(path) as fh:
        data = json.load(fh)
    return data


def _cmd_run(args) -> int:
    data = _load_config(args.config)
    cfg = _h.ExperimentConfig.from_dict(data)
    if args.out:
        cfg.output_dir = args.out
    run = _h.run_experiment(cfg)
    print(json.dumps(run.summary, indent=2, sort_keys=True))
    if cfg.output_dir:
        print(f"artifacts written to {cfg.output_dir}", file=sys.stderr)
    return 0


def _scheme_variants(data):
    schemes = data.get("schemes")
    if not schemes:
        return [(data.get("flux_kind", "lax_friedrichs"), data.get("order", "second"))]
    return [(s["flux_kind"], s["order"]) for s in schemes]


def _cmd_converge(args) -> int:
    data = _load_config(args.config)
    variants = _scheme_variants(data)
    tables = []
    for flux_kind, order in variants:
        payload = dict(data)
        payload.pop("schemes", None)
        payload["flux_kind"] = flux_kind
        payload["order"] = order
        cfg = _h.ExperimentConfig.from_dict(payload)
        rows = _h.convergence_study(cfg, args.levels)
        tables.append(((flux_kind, order), rows))

    header = ["n"]
    for (flux_kind, order), _rows in tables:
        tag = f"{order[:3]}_{'lxf' if flux_kind == 'lax_friedrichs' else 'upw'}"
        header += [f"d1_{tag}", f"ooc_{tag}"]
    lines = [",".join(header)]
    for k in range(len(tables[0][1])):
        cells = [str(tables[0][1][k].n)]
        for _name, rows in tables:
            row = rows[k]
            cells.append(f"{row.d1:.17g}")
            cells.append("" if row.ooc is None else f"{row.ooc:.6g}")
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"table written to {args.out}", file=sys.stderr)
    print(text, end="")
    return 0


def _cmd_steady(args) -> int:
    cfg = _h.ExperimentConfig.from_dict(_load_config(args.config))
    result = _h.steady_state_distance(cfg)
    print(json.dumps(result, indent=2, sort_keys=True))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(result, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def _cmd_energy(args) -> int:
    data = _load_config(args.config)
    data["record_energy"] = True
    cfg = _h.ExperimentConfig.from_dict(data)
    if args.out:
        cfg.output_dir = args.out
    run = _h.run_experiment(cfg)
    out = {
        "khat": run.summary["khat"],
        "max_energy_increment": run.summary["max_energy_increment"],
        "energy_initial": float(run.energy_report.energies[0]),
        "energy_final": float(run.energy_report.energies[-1]),
        "n_steps": run.summary["n_steps"],
    }
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def _cmd_burgers(args) -> int:
    cfg = _h.ExperimentConfig.from_dict(_load_config(args.config))
    if cfg.dimension != 1:
        raise SystemExit("the burgers command needs a 1D config")
    grid = _h.build_grid(cfg)
    m0 = _h.build_initial(cfg, grid)
    t_end = _h.resolve_t_end(cfg, grid)
    sign = 1.0 if cfg.potential["name"] == "abs" else -1.0
    if cfg.potential["name"] not in ("abs", "neg_abs"):
        raise SystemExit("the burgers command needs the 'abs' or 'neg_abs' potential")
    state = _burgers.burgers_solve(_burgers.primitive(m0), t_end, sign=sign,
                                   cfl=min(cfg.cfl_number, 0.45))
    outdir = Path(args.out or "burgers_out")
    outdir.mkdir(parents=True, exist_ok=True)
    _burgers.write_u_csv(state, outdir / "u.csv")
    write_csv(_burgers.difference(state), outdir / "rho.csv")
    print(f"wrote {outdir}/u.csv and {outdir}/rho.csv", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="aggro",
        description="Finite-volume solver for nonlocal aggregation dynamics on measures",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment and print its summary")
    p.add_argument("config")
    p.add_argument("--out", help="artifact directory (overrides config output_dir)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("converge", help="grid-refinement convergence study")
    p.add_argument("config")
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=_cmd_converge)

    p = sub.add_parser("steady", help="distance to a named exact steady state")
    p.add_argument("config")
    p.add_argument("--out", help="JSON output path")
    p.set_defaults(func=_cmd_steady)

    p = sub.add_parser("energy", help="run with per-step interaction energy recording")
    p.add_argument("config")
    p.add_argument("--out", help="artifact directory")
    p.set_defaults(func=_cmd_energy)

    p = sub.add_parser("burgers", help="solve the dual conservation law for |x| kernels")
    p.add_argument("config")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=_cmd_burgers)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
