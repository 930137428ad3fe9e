"""Cross-validated scores for several mark families and submodels on one dataset.

Reads the data section of a run configuration (as written by
``jointmpp simulate``), then runs k-fold cross-validation for every
family/submodel pair and prints the pooled AUC, absolute error and CRPS for
counts and sizes.

    jointmpp simulate --out sim --seed 3
    python3 scripts/crossval_study.py sim/config.ini --families lognormal gammagamma burr --submodels M1 M1_0 \
        --n-iter 20000 --burn-in 10000 --thin 10 --threads 4
"""
import argparse
import logging
import math

from jointmpp import evaluation as E
from jointmpp.cli import _ingest
from jointmpp.io import load_config, write_table
from jointmpp.model import ModelConfig
from jointmpp.sampler import ChainSettings

METRICS = ("auc_counts", "abserr_counts", "crps_counts", "auc_sizes", "abserr_sizes", "crps_sizes")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config")
    p.add_argument("--families", nargs="+", default=["lognormal"])
    p.add_argument("--submodels", nargs="+", default=["M1", "M1_0"])
    p.add_argument("--mode", default="slope-unit-kfold", choices=["slope-unit-kfold", "thinning"])
    p.add_argument("-K", type=int, default=10)
    p.add_argument("--n-iter", type=int, default=20_000)
    p.add_argument("--burn-in", type=int, default=10_000)
    p.add_argument("--thin", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default="crossval_study.csv")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = load_config(args.config)
    ing = _ingest(cfg)
    n_items = ing.graph.n if args.mode == "slope-unit-kfold" else ing.dataset.L
    plan = E.make_folds(args.mode, args.K, n_items, args.seed)
    settings = ChainSettings(n_iter=args.n_iter, burn_in=args.burn_in, thin=args.thin, seed=args.seed)
    table = []
    for fam in args.families:
        for sub in args.submodels:
            rows = E.crossval(ModelConfig.submodel(sub, family=fam), ing.dataset, ing.graph, ing.grid.su_index, plan, settings, workers=args.threads)
            pooled = E.pool_scores(rows)
            table.append([fam, sub, *(pooled.get(m, math.nan) for m in METRICS)])
            logging.info("%s %s: %s", fam, sub, ", ".join(f"{m} {pooled.get(m, math.nan):.3f}" for m in METRICS))
    write_table(args.out, ["family", "submodel", *METRICS], table, [f"{k} = {v}" for k, v in vars(args).items()])
    print(f"{'family':<12}{'submodel':<9}" + "".join(f"{m:>15}" for m in METRICS))
    for r in table:
        print(f"{r[0]:<12}{r[1]:<9}" + "".join(f"{v:15.3f}" for v in r[2:]))


if __name__ == "__main__":
    main()
