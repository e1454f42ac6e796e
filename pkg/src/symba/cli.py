"""Command line entry point: ``symba run | chain | dist | verify``.

Exit status is 0 on success, 2 for an invalid configuration and 3 when a
checked property fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

from .adversary import ConfigInvalid
from .dist import (
    ChoiceDistribution,
    PreconditionViolated,
    TailBoundParams,
    adjust,
    as_fraction,
    empirical_tail,
    exact_tail,
    tail_bound,
)
from .fsrp import make_protocol
from .harness import (
    load_config,
    records_from_text,
    run_experiment,
    summarize,
    validate_config,
)
from .lockstep import (
    GeneratorStats,
    GroupLayout,
    PropertyViolation,
    ReplayMismatch,
    chain_generator,
    read_chain,
    verify_chain,
    write_chain,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROPERTY = 3


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True, indent=2, default=str) + "\n")


def _layout(args) -> GroupLayout:
    if args.n is not None or args.t is not None:
        if args.n is None or args.t is None:
            raise ConfigInvalid("give both --n and --t, or --groups")
        try:
            return GroupLayout(args.n, args.t)
        except ValueError as err:
            raise ConfigInvalid(str(err)) from err
    if args.groups is None or args.groups < 1:
        raise ConfigInvalid("--groups must be a positive integer")
    return GroupLayout.for_groups(args.groups, args.R)


def cmd_run(args) -> int:
    overrides = {
        "n": args.n, "t": args.t, "R": args.R, "eps": args.eps and as_fraction(args.eps),
        "protocol": args.protocol, "scheduler": args.scheduler, "rounds_cap": args.rounds_cap,
        "chain_rounds": args.chain_rounds, "seeds": args.seeds, "seed_base": args.seed_base,
        "out": args.out, "format": args.format, "workers": args.workers,
    }
    cfg = load_config(args.config, **overrides)
    if args.dry_run:
        rep = validate_config(cfg)
        _emit({"errors": rep.errors, "warnings": rep.warnings})
        return EXIT_OK if rep.ok else EXIT_CONFIG
    result = run_experiment(cfg)
    for w in result.report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    _emit(
        {
            "witness": None if result.witness is None else {
                "class_index": result.witness.index,
                "horizon": result.witness.E,
                "inputs_per_group": list(result.witness.inputs),
                "undecided_groups": result.witness.undecided_groups(),
            },
            "summary": result.summary.to_dict(),
            "files": result.files,
        }
    )
    return EXIT_OK


def cmd_chain(args) -> int:
    layout = _layout(args)
    pf = make_protocol(args.protocol, layout.n, layout.t)
    eps = args.eps and as_fraction(args.eps)
    stats = GeneratorStats()
    chain = chain_generator(layout, pf, args.rounds, eps, stats)
    out = None
    if args.out:
        out = open(args.out, "w")
    try:
        if args.verify:
            def spill(cls):
                if out:
                    write_chain([cls], out)

            report = verify_chain(chain, pf, layout, eps, on_class=spill)
            result = report.as_dict()
        else:
            count = write_chain(chain, out) if out else sum(1 for _ in chain)
            result = {"classes": count}
    finally:
        if out:
            out.close()
    result.update({"n": layout.n, "t": layout.t, "groups": layout.groups, "rounds": args.rounds,
                   "protocol": args.protocol, "max_list_length": stats.max_list})
    _emit(result)
    return EXIT_OK


def cmd_dist(args) -> int:
    probs = {}
    for i, item in enumerate(x.strip() for x in args.probs.split(",") if x.strip()):
        if "=" in item:
            name, mass = item.split("=", 1)
        else:
            name, mass = f"m{i}", item
        probs[name.strip().encode()] = float(mass) if "." in mass or "e" in mass else as_fraction(mass)
    d = ChoiceDistribution.from_mapping(probs)
    try:
        a = adjust(d, args.t, as_fraction(args.eps), args.R)
    except PreconditionViolated as err:
        raise ConfigInvalid(str(err)) from err
    rec = {
        "t": args.t,
        "eps": str(a.eps),
        "R": a.R,
        "star": a.star.decode(),
        "input": {s.decode(): str(m) for s, m in zip(d.support, d.mass)},
        "adjusted": {s.decode(): str(m) for s, m in zip(a.support, a.mass)},
        "counts": {s.decode(): k for s, k in zip(a.support, a.counts)},
    }
    if args.trials:
        c = as_fraction(args.c)
        emp = empirical_tail(d, a, c, args.trials, args.seed)
        exact = exact_tail(d, a, c)
        rec["tail"] = {
            "c": str(c),
            "trials": args.trials,
            "seed": args.seed,
            "empirical": {s.decode(): v for s, v in emp.items()},
            "exact": {s.decode(): v for s, v in exact.items()},
        }
        n = Fraction(args.t) / c
        if n.denominator == 1:
            params = TailBoundParams(int(n), args.t, c, a.R, a.eps)
            try:
                rec["tail"]["bound"] = tail_bound(params)
            except PreconditionViolated as err:
                rec["tail"]["bound"] = None
                rec["tail"]["bound_inapplicable"] = str(err)
    _emit(rec)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.chain:
        layout = _layout(args)
        pf = make_protocol(args.protocol, layout.n, layout.t)
        eps = args.eps and as_fraction(args.eps)
        with open(args.chain) as fp:
            report = verify_chain(read_chain(fp, layout, pf, eps), pf, layout, eps)
        _emit(report.as_dict())
        return EXIT_OK
    if args.records:
        fmt = "csv" if args.records.endswith(".csv") else "json-lines"
        records = records_from_text(Path(args.records).read_text(), fmt)
        oracle = None
        recomputed = summarize(records, oracle)
        if args.summary:
            stored = json.loads(Path(args.summary).read_text())
            mine = recomputed.to_dict()
            keys = [k for k in mine if k not in ("per_round_success", "in_class_survival")]
            diff = [k for k in keys if stored.get(k) != json.loads(json.dumps(mine[k]))]
            for key in ("per_round_success", "in_class_survival"):
                strip = lambda rows: [{k: v for k, v in r.items() if k != "oracle"} for r in rows]
                if strip(stored.get(key, [])) != strip(json.loads(json.dumps(mine[key]))):
                    diff.append(key)
            if diff:
                raise PropertyViolation("summary", None, None, f"fields {diff} do not match the records")
        _emit({"records": len(records), "summary_matches": bool(args.summary)})
        return EXIT_OK
    raise ConfigInvalid("verify needs --chain or --records")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="symba", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="attack and baseline batches with summary statistics")
    run.add_argument("--config", help="key = value file; flags override it")
    run.add_argument("--n", type=int)
    run.add_argument("--t", type=int)
    run.add_argument("--R", type=int)
    run.add_argument("--eps")
    run.add_argument("--protocol")
    run.add_argument("--scheduler", choices=["adversary-lockstep", "benign-fair", "both"])
    run.add_argument("--rounds-cap", type=int)
    run.add_argument("--chain-rounds", type=int)
    run.add_argument("--seeds", type=int)
    run.add_argument("--seed-base", type=int)
    run.add_argument("--out")
    run.add_argument("--format", choices=["json-lines", "csv"])
    run.add_argument("--workers", type=int)
    run.add_argument("--dry-run", action="store_true", help="only validate the configuration")
    run.set_defaults(func=cmd_run)

    def layout_flags(sp):
        sp.add_argument("--groups", type=int)
        sp.add_argument("--n", type=int)
        sp.add_argument("--t", type=int)
        sp.add_argument("--R", type=int, default=2)
        sp.add_argument("--eps")
        sp.add_argument("--protocol", default="benor-style")

    chain = sub.add_parser("chain", help="generate (and optionally verify) a chain of lockstep classes")
    layout_flags(chain)
    chain.add_argument("--rounds", type=int, required=True)
    chain.add_argument("--verify", action="store_true")
    chain.add_argument("--out")
    chain.set_defaults(func=cmd_chain)

    dist = sub.add_parser("dist", help="adjust a distribution and compare tails")
    dist.add_argument("--probs", required=True, help="comma separated masses, optionally name=mass")
    dist.add_argument("--t", type=int, required=True)
    dist.add_argument("--eps", required=True)
    dist.add_argument("--R", type=int)
    dist.add_argument("--c", default="1/5")
    dist.add_argument("--trials", type=int, default=0)
    dist.add_argument("--seed", type=int, default=0)
    dist.set_defaults(func=cmd_dist)

    verify = sub.add_parser("verify", help="re-check a chain file or a records/summary pair")
    layout_flags(verify)
    verify.add_argument("--chain")
    verify.add_argument("--records")
    verify.add_argument("--summary")
    verify.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigInvalid as err:
        print(f"invalid configuration: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (PropertyViolation, ReplayMismatch) as err:
        print(f"property violation: {err}", file=sys.stderr)
        return EXIT_PROPERTY


if __name__ == "__main__":
    sys.exit(main())
