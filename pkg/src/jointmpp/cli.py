"""Command line: ``jointmpp {simulate,fit,crossval,predict,hazard}``.

Every CSV written starts with ``#`` lines echoing the subcommand, the seed and
the resolved configuration, which is enough to rerun it.  Failures exit
nonzero and print a one-line JSON error record to stderr (also written to
``<out>/error.json``).
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import evaluation as ev
from . import marks
from .exceptions import DomainError, NumericalError, UpdateError
from .io import SIMULATION_CHAIN, RunConfig, error_record, ingest, load_config, write_table, write_transforms
from .model import ModelConfig
from .sampler import ChainOutput, ChainSettings, Sampler

log = logging.getLogger("jointmpp")

EXIT_OK, EXIT_FAILURE, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2, 3


def _header(cfg: RunConfig, subcommand: str, extra=()) -> list[str]:
    return [f"jointmpp {subcommand}", f"seed = {cfg.sampler.seed}", *extra, *cfg.echo()]


def _ingest(cfg: RunConfig):
    d = cfg.data
    return ingest(
        cfg.path(d.pixels),
        cfg.path(d.landslides),
        cfg.path(d.adjacency),
        count_covariates=d.count_covariates,
        size_covariates=d.size_covariates,
        landslide_covariates=cfg.path(d.landslide_covariates) if d.landslide_covariates else None,
        standardize_covariates=d.standardize,
    )


def _model_config(cfg: RunConfig) -> ModelConfig:
    m = cfg.model
    return ModelConfig.submodel(m.submodel, family=m.family, theta_init=tuple(m.theta_init) or None, fixed_precision=cfg.sampler.fixed_precision)


def _settings(cfg: RunConfig) -> ChainSettings:
    s = cfg.sampler
    return ChainSettings(n_iter=s.n_iter, burn_in=s.burn_in, thin=s.thin, seed=s.seed)


def _progress(every: int):
    t0 = time.time()

    def cb(sampler):
        if sampler.iteration % every == 0:
            log.info("iteration %d/%d (%.0f s)", sampler.iteration, sampler.settings.n_iter, time.time() - t0)

    return cb


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg: RunConfig, out: Path, threads: int):
    sim = cfg.simulate
    rng = np.random.default_rng(cfg.sampler.seed)
    grid, graph, Z1 = ev.synthetic_landscape(sim.n_units, sim.n_side, sim.n_covariates, rng)
    names = ev.COVARIATE_NAMES[: sim.n_covariates] if sim.n_covariates <= len(ev.COVARIATE_NAMES) else tuple(f"z{p + 1}" for p in range(sim.n_covariates))
    fam = marks.MarkFamily(cfg.model.family)
    if cfg.model.theta_init:
        theta = marks.MarkParams(fam, tuple(cfg.model.theta_init))
    elif fam is marks.MarkFamily.LOGNORMAL:
        theta = ev.TruthSpec().theta
    else:
        theta = marks.default_params(fam)
    truth = ev.TruthSpec(
        beta1=tuple(np.resize(ev.TRUTH_BETA1, sim.n_covariates)),
        beta2=tuple(np.resize(ev.TRUTH_BETA2, sim.n_covariates)),
        theta=theta,
    )
    ds, state = ev.simulate_dataset(truth, graph, grid, Z1, rng, z1_names=names)
    out.mkdir(parents=True, exist_ok=True)
    head = _header(cfg, "simulate")
    pix_rows = [[int(i), float(grid.centroids[i, 0]), float(grid.centroids[i, 1]), int(grid.su_index[i]), *map(float, Z1[i])] for i in range(grid.n1)]
    write_table(out / "pixels.csv", ["id", "x", "y", "su_id", *names], pix_rows, head)
    write_table(out / "landslides.csv", ["pixel_id", "size_sqrt_m"], [[int(p), float(a)] for p, a in zip(ds.landslide_pixel, ds.sizes)], head)
    write_table(out / "adjacency.csv", ["su_a", "su_b"], [[int(a), int(b)] for a, b in graph.edges] + [[int(k), ""] for k in graph.isolated], head)
    rows = [[n, float(v)] for n, v in zip(theta.names, theta.values)]
    rows += [[n, float(getattr(truth, n))] for n in ("kappa_w1", "kappa_w2", "kappa_eta", "kappa_mu", "gamma1", "gamma2", "beta")]
    rows += [[f"beta1_{n}", float(v)] for n, v in zip(names, truth.beta1)]
    rows += [[f"beta2_{n}", float(v)] for n, v in zip(names, truth.beta2)]
    write_table(out / "truth.csv", ["parameter", "value"], rows, head)
    write_table(out / "truth_units.csv", ["su_id", "w1", "w2"], [[k, float(a), float(b)] for k, (a, b) in enumerate(zip(state.w1, state.w2))], head)
    # ready-to-run fit configuration using the simulation-length chain
    fit_cfg = RunConfig()
    fit_cfg.data.count_covariates = fit_cfg.data.size_covariates = tuple(names)
    fit_cfg.model = cfg.model
    fit_cfg.sampler.seed = cfg.sampler.seed
    for k, v in SIMULATION_CHAIN.items():
        setattr(fit_cfg.sampler, k, v)
    (out / "config.ini").write_text("".join(f"# {c}\n" for c in head) + fit_cfg.to_ini())
    log.info("simulated %d pixels, %d slope units, %d landslides", grid.n1, graph.n, ds.L)


def _fit(cfg: RunConfig, ing):
    sampler = Sampler(_model_config(cfg), ing.dataset, ing.graph, ing.projection, _settings(cfg))
    return sampler.run(callback=_progress(max(1, cfg.sampler.n_iter // 10)))


def cmd_fit(cfg: RunConfig, out: Path, threads: int):
    ing = _ingest(cfg)
    chain = _fit(cfg, ing)
    out.mkdir(parents=True, exist_ok=True)
    head = _header(cfg, "fit")
    rows = [[r["parameter"], r["median"], r["sd"], r["ci_lower"], r["ci_upper"]] for r in chain.summary()]
    write_table(out / "summary.csv", ["parameter", "median", "sd", "ci_lower", "ci_upper"], rows, head)
    diag = [[f"acceptance_{k}", float(v)] for k, v in chain.acceptance.items()]
    diag += [[f"step_{k}", float(v)] for k, v in chain.final_steps.items()]
    dic, pd = ev.chain_dic(chain, ing.dataset)
    diag += [["dic", dic], ["p_d", pd], ["n_draws", chain.n_draws]]
    write_table(out / "diagnostics.csv", ["quantity", "value"], diag, head)
    write_transforms(out / "transforms.csv", ing.transforms, {"counts": ing.dataset.z1_names, "sizes": ing.dataset.z2_names}, head)
    chain.save(out / "chain.npz", extra_meta={"config": cfg.to_ini()})
    log.info("fit done: %d draws", chain.n_draws)


def cmd_crossval(cfg: RunConfig, out: Path, threads: int):
    ing = _ingest(cfg)
    e = cfg.eval
    n_items = ing.graph.n if e.fold_mode == "slope-unit-kfold" else ing.dataset.L
    plan = ev.make_folds(e.fold_mode, e.K, n_items, cfg.sampler.seed)
    thr = None if math.isnan(e.size_threshold) else e.size_threshold
    rows = ev.crossval(_model_config(cfg), ing.dataset, ing.graph, ing.grid.su_index, plan, _settings(cfg), thr, e.count_threshold, workers=threads)
    out.mkdir(parents=True, exist_ok=True)
    head = _header(cfg, "crossval", [f"threads = {threads}"])
    keys = list(rows[0])
    write_table(out / "crossval_folds.csv", keys, [[r[k] for k in keys] for r in rows], head)
    pooled = ev.pool_scores(rows)
    write_table(out / "crossval_pooled.csv", ["metric", "value"], [[k, v] for k, v in pooled.items()], head)


def _load_chain(cfg: RunConfig, out: Path) -> ChainOutput:
    path = cfg.path(cfg.eval.chain) if cfg.eval.chain else out / "chain.npz"
    if not path.exists():
        raise DomainError(f"chain archive not found: {path} (run fit first or set eval.chain)")
    return ChainOutput.load(path)


def _check_chain(chain: ChainOutput, ing):
    if chain.draws["eta"].shape[1] != ing.dataset.n1 or chain.draws["w1"].shape[1] != ing.graph.n:
        raise DomainError("chain archive does not match the input data")


def cmd_predict(cfg: RunConfig, out: Path, threads: int):
    ing = _ingest(cfg)
    chain = _load_chain(cfg, out)
    _check_chain(chain, ing)
    su = ing.grid.su_index
    sus = ev.susceptibility(chain.draws["eta"], ing.dataset.exposure)
    lam = (ing.dataset.exposure * np.exp(chain.draws["eta"])).mean(0)
    size = np.exp(ev.pixel_mu_draws(chain, ing.Z2_pixel, su)).mean(0)
    head = _header(cfg, "predict")
    out.mkdir(parents=True, exist_ok=True)
    rows = [[int(ing.grid.ids[i]), int(ing.su_ids[su[i]]), float(sus[i]), float(lam[i]), float(size[i])] for i in range(ing.dataset.n1)]
    write_table(out / "predictions_pixels.csv", ["id", "su_id", "susceptibility", "expected_count", "median_size"], rows, head)
    pred = ev.posterior_predict(chain, ing.dataset, su, ing.graph.n)
    urows = [[int(ing.su_ids[k]), float(pred.unit_count[k]), float(pred.unit_size_mean[k])] for k in range(ing.graph.n)]
    write_table(out / "predictions_units.csv", ["su_id", "expected_count", "mean_size"], urows, head)


def cmd_hazard(cfg: RunConfig, out: Path, threads: int):
    ing = _ingest(cfg)
    chain = _load_chain(cfg, out)
    _check_chain(chain, ing)
    su = ing.grid.su_index
    rng = np.random.default_rng([cfg.sampler.seed, 7])
    mu = ev.pixel_mu_draws(chain, ing.Z2_pixel, su, rng)
    res = ev.hazard(chain.draws["eta"], mu, ing.dataset.exposure, quantiles=cfg.eval.quantiles)
    head = _header(cfg, "hazard")
    out.mkdir(parents=True, exist_ok=True)
    rows = [[int(ing.grid.ids[i]), int(ing.su_ids[su[i]]), float(res.pixel_mean[i])] for i in range(ing.dataset.n1)]
    write_table(out / "hazard_map.csv", ["id", "su_id", "hazard_mean"], rows, head)
    write_table(out / "hazard_quantiles.csv", ["quantile", "total_hazard"], [[q, v] for q, v in res.quantiles.items()], head)


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "crossval": cmd_crossval, "predict": cmd_predict, "hazard": cmd_hazard}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jointmpp", description="Joint landslide count-size model: simulate, fit, validate and map.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=fn.__name__.replace("cmd_", ""))
        sp.add_argument("--config", type=Path, help="INI file with [data] [model] [sampler] [eval] [simulate] sections")
        sp.add_argument("--seed", type=int, help="overrides sampler.seed")
        sp.add_argument("--threads", type=int, default=1, help="worker processes for cross-validation folds")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.sampler.seed = args.seed
        if args.threads < 1:
            raise DomainError("--threads must be >= 1")
        COMMANDS[args.command](cfg, args.out, args.threads)
        return EXIT_OK
    except Exception as exc:  # every failure becomes a machine-readable record
        code = EXIT_INPUT if isinstance(exc, DomainError) else EXIT_NUMERICAL if isinstance(exc, (NumericalError, UpdateError)) else EXIT_FAILURE
        rec = error_record(exc, args.command)
        print(rec, file=sys.stderr)
        try:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / "error.json").write_text(rec + "\n")
        except OSError:
            pass
        if args.verbose:
            log.exception("failed")
        return code


if __name__ == "__main__":
    sys.exit(main())
