"""Command line driver.

    anchor-risk gen       --config cfg.yaml --out runs/f2
    anchor-risk train     --config cfg.yaml --out runs/f2
    anchor-risk train-ae  --config cfg.yaml --out runs/f2
    anchor-risk score     --config cfg.yaml --out runs/f2 --score 1 --anchors 10
    anchor-risk evaluate  --config cfg.yaml --out runs/f2 [--ablation uq-only]
    anchor-risk report    --config cfg.yaml --out runs/f2 --seeds 0 1 2

Flags override values from the config file. On failure a JSON error object
is written to stderr and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiment

STAGES = ("gen", "train", "train-ae", "score", "evaluate", "report")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML or JSON config file")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--force", action="store_true", help="recompute even if outputs are current")
    g = p.add_argument_group("data")
    g.add_argument("--function", help="synthetic benchmark name (f1-f4, camel, levy)")
    g.add_argument("--csv", help="tabular CSV file (header row required)")
    g.add_argument("--target", help="target column of the CSV")
    g.add_argument("--split", choices=["gaps", "tails", "custom-interval"])
    g.add_argument("--n-train", type=int)
    g.add_argument("--grid", type=int)
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int)
    g.add_argument("--lr", type=float)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--hidden", type=int, nargs="+", help="hidden layer widths")
    g = p.add_argument_group("scoring")
    g.add_argument("--anchors", type=int, help="anchors K for mean/spread")
    g.add_argument("--score", type=int, choices=[1, 2])
    g.add_argument("--anchor-batch", type=int)
    g.add_argument("--eta", type=float)
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--iters", type=int)
    g.add_argument("--conditional", action="store_true", default=None,
                   help="non-conformity quantiles within each uncertainty bin")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anchor-risk", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        p = sub.add_parser(name)
        _add_common(p)
        if name == "evaluate":
            p.add_argument("--ablation", choices=["uq-only", "mnc-only"])
            p.add_argument("--records-csv", help="also write per-sample records as CSV")
        if name == "report":
            p.add_argument("--seeds", type=int, nargs="+")
    return parser


def overrides_from_args(args) -> dict:
    o: dict = {}

    def put(path, value):
        if value is None:
            return
        d = o
        for k in path[:-1]:
            d = d.setdefault(k, {})
        d[path[-1]] = value

    put(["seed"], args.seed)
    if args.function:
        put(["data", "source"], args.function)
    if args.csv:
        put(["data", "source"], "csv")
        put(["data", "path"], args.csv)
    put(["data", "target"], args.target)
    put(["data", "split", "mode"], args.split)
    if args.split == "tails":
        put(["data", "split", "high"], 70.0)
    put(["data", "n_train"], args.n_train)
    put(["data", "grid"], args.grid)
    put(["model", "epochs"], args.epochs)
    put(["model", "learning_rate"], args.lr)
    put(["model", "batch_size"], args.batch_size)
    put(["model", "hidden_dims"], args.hidden)
    put(["uq", "n_anchors"], args.anchors)
    put(["score", "kind"], args.score)
    put(["score", "anchor_batch"], args.anchor_batch)
    put(["score", "eta"], args.eta)
    put(["score", "lambda"], args.lam)
    put(["score", "iters"], args.iters)
    put(["regimes", "conditional"], args.conditional)
    return o


def run(args) -> str:
    cfg = experiment.load_config(args.config, overrides_from_args(args))
    if args.command == "gen":
        out = experiment.cmd_gen(cfg, args.out, args.force)
    elif args.command == "train":
        out = experiment.cmd_train(cfg, args.out, args.force)
    elif args.command == "train-ae":
        out = experiment.cmd_train_ae(cfg, args.out, args.force)
    elif args.command == "score":
        out = experiment.cmd_score(cfg, args.out, args.force)
    elif args.command == "evaluate":
        out = experiment.cmd_evaluate(cfg, args.out, args.ablation, args.records_csv)
    else:
        out = experiment.cmd_report(cfg, args.out, args.seeds)
    return str(out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        print(run(args))
    except Exception as exc:  # reported as a machine-readable object
        err = {"error": type(exc).__name__, "message": str(exc),
               "stage": getattr(exc, "stage", None) or args.command}
        print(json.dumps(err), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
