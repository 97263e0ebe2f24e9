"""Command-line interface.

Settings come from built-in defaults, then an optional JSON file given by
``--config``, then explicit command-line flags, each overriding the last.
Exit status is 0 on success, 1 on a runtime failure and 2 on a usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dependence import dependence_report
from .ingest import (
    Records,
    build_tidal_samples,
    detrend_linear,
    parse_records,
    recenter_annual_means,
)
from .maxima import (
    VARIANTS,
    empirical_return_levels,
    month_occurrence_probs,
    observed_maxima,
    return_level,
    return_level_curve,
)
from .pipeline import SITE_PRESETS, VARIANT_SURGE, FittedPipeline, PipelineConfig, fit_pipeline
from .simulate import SimulationConfig, TideConfig, TruthSurgeModel, heysham_like_truth, simulate_records
from .surgedist.model import fit_surge_model, model_select
from .surgedist.rate import RateParams
from .surgedist.tail import TailParams
from .uncertainty import BootstrapConfig, bootstrap_return_levels, pit_transform, pp_plot_data

logger = logging.getLogger("skewsurge")

#: Normal prior on the GPD shape used by ``--prior``
DEFAULT_PRIOR = (0.0119, 0.0343)
DEFAULT_P = [0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001, 1e-4]

DEFAULTS = {
    "input": None,
    "site": None,
    "q_u": 0.95,
    "variant": "temporal_dependence",
    "K": None,
    "tide_policy": "contiguous_years",
    "run_length": None,
    "v_quantile": 0.99,
    "prior": False,
    "n_reps": 200,
    "mean_block": 10.0,
    "workers": 1,
    "seed": 0,
    "out_dir": ".",
    "detrend": False,
    "recenter": False,
    "p": None,
}


class UsageError(Exception):
    pass


def _probability(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"{text} is not a probability in (0, 1)")
    return v


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of settings; flags override it")
    p.add_argument("--input", "-i", help="CSV with columns timestamp,peak_tide,skew_surge")
    p.add_argument("--site", help="site preset (heysham, lowestoft, newlyn, sheerness)")
    p.add_argument("--q-u", dest="q_u", type=_probability, default=None, help="threshold quantile (0.95)")
    p.add_argument("--variant", choices=VARIANTS, default=None)
    p.add_argument("--K", dest="K", type=int, default=None, help="number of yearly tidal samples")
    p.add_argument("--tide-policy", dest="tide_policy", choices=("contiguous_years", "repeat_single_year"),
                   default=None)
    p.add_argument("--run-length", dest="run_length", type=int, default=None, help="run length r in cycles")
    p.add_argument("--v-quantile", dest="v_quantile", type=_probability, default=None)
    p.add_argument("--prior", action="store_true", default=None, help="penalise the GPD shape")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", dest="out_dir", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--detrend", action="store_true", default=None, help="remove a linear trend first")
    p.add_argument("--recenter", action="store_true", default=None, help="re-centre annual means first")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skewsurge", description="Extreme sea levels from skew surge and peak tide.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the surge, extremal index and maxima model")
    _common(p)

    p = sub.add_parser("return-levels", help="return levels for one or all variants")
    _common(p)
    p.add_argument("--p", type=_probability, nargs="+", default=None, help="annual exceedance probabilities")
    p.add_argument("--all-variants", action="store_true", help="compute all seven variants")
    p.add_argument("--month", type=int, choices=range(1, 13), default=None)

    p = sub.add_parser("bootstrap", help="stationary-bootstrap intervals for return levels")
    _common(p)
    p.add_argument("--p", type=_probability, nargs="+", default=None)
    p.add_argument("--n-reps", dest="n_reps", type=int, default=None)
    p.add_argument("--mean-block", dest="mean_block", type=float, default=None)

    p = sub.add_parser("diagnostics", help="model comparison, PIT tests and PP plot data")
    _common(p)

    p = sub.add_parser("seasonality", help="month-of-occurrence probabilities of annual maxima")
    _common(p)
    p.add_argument("--p", type=_probability, nargs="+", default=None)

    p = sub.add_parser("dependence", help="surge-tide dependence tests and chi measures")
    _common(p)
    p.add_argument("--n-boot", dest="n_boot", type=int, default=100)

    p = sub.add_parser("simulate", help="write synthetic records from a known truth")
    p.add_argument("--config", help="JSON truth: tail, rate, q, mu, tide, theta, years, start_year")
    p.add_argument("--years", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", "-o", default=None, help="output CSV (default stdout)")
    return parser


def _settings(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file {path} does not exist")
        cfg.update(json.loads(path.read_text()))
    for key, val in vars(args).items():
        if val is not None and key not in ("config", "command", "verbose"):
            cfg[key] = val
    if cfg["input"] is None:
        raise UsageError("an input CSV is required (--input or config 'input')")
    if not Path(cfg["input"]).exists():
        raise UsageError(f"input file {cfg['input']} does not exist")
    if cfg["variant"] not in VARIANTS:
        raise UsageError(f"unknown variant {cfg['variant']!r}")
    site = (cfg.get("site") or "").lower() or None
    if site is not None and site not in SITE_PRESETS:
        raise UsageError(f"unknown site {cfg['site']!r}; presets: {sorted(SITE_PRESETS)}")
    if cfg["run_length"] is None and site is not None:
        cfg["run_length"] = SITE_PRESETS[site]["run_length"]
    return cfg


def _needs_run_length(cfg: dict, variants) -> None:
    if "temporal_dependence" in variants and cfg["run_length"] is None:
        raise UsageError("temporal_dependence needs a run length: pass --run-length or a --site preset")


def _load(cfg: dict) -> Records:
    records = parse_records(cfg["input"])
    if cfg.get("detrend"):
        records, slope = detrend_linear(records)
        logger.info("removed linear trend of %.6f m/year", slope)
    if cfg.get("recenter"):
        records = recenter_annual_means(records)
    return records


def _pipeline_config(cfg: dict, variant: str | None = None) -> PipelineConfig:
    return PipelineConfig(
        variant=variant or cfg["variant"],
        q_u=cfg["q_u"],
        run_length=cfg["run_length"] or 1,
        v_quantile=cfg["v_quantile"],
        prior=DEFAULT_PRIOR if cfg["prior"] else None,
        seed=cfg["seed"],
    )


def _out(cfg: dict) -> Path:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fit_or_load(cfg: dict, records, tides, variant: str) -> FittedPipeline:
    """Reuse a saved fit for this variant when it matches the data, otherwise refit."""
    path = Path(cfg["out_dir"]) / f"model_{variant}.json"
    if path.exists():
        try:
            saved = json.loads(path.read_text())
            if saved["config"]["variant"] == variant:
                return FittedPipeline.from_dict(saved, records, tides)
        except (KeyError, ValueError) as exc:
            logger.info("ignoring saved model %s: %s", path, exc)
    return fit_pipeline(records, tides, _pipeline_config(cfg, variant))


def cmd_fit(cfg: dict) -> int:
    _needs_run_length(cfg, [cfg["variant"]])
    records = _load(cfg)
    tides = build_tidal_samples(records, cfg["K"], cfg["tide_policy"])
    fit = fit_pipeline(records, tides, _pipeline_config(cfg))
    out = _out(cfg)
    path = out / f"model_{cfg['variant']}.json"
    path.write_text(json.dumps(fit.to_dict(), indent=2))
    tail = fit.surge.tail.values
    print(f"variant {cfg['variant']}: tail {fit.surge.tail.variant} "
          + " ".join(f"{k}={v:.6f}" for k, v in tail.items()))
    if fit.exi is not None:
        print(f"extremal index: theta={fit.exi.theta:.6f} psi={fit.exi.psi:.6f} v={fit.exi.v:.6f}")
    print(f"wrote {path}")
    return 0


def cmd_return_levels(cfg: dict) -> int:
    variants = list(VARIANTS) if cfg.get("all_variants") else [cfg["variant"]]
    _needs_run_length(cfg, variants)
    records = _load(cfg)
    tides = build_tidal_samples(records, cfg["K"], cfg["tide_policy"])
    p = cfg["p"] or DEFAULT_P
    out = _out(cfg)
    month = cfg.get("month")
    for variant in variants:
        fit = _fit_or_load(cfg, records, tides, variant)
        curve = return_level_curve(fit.spec, p, month=month)
        suffix = f"_month{month:02d}" if month else ""
        path = out / f"return_levels_{variant}{suffix}.csv"
        curve.to_csv(path.open("w"))
        if len(p) == 1 and len(variants) == 1:
            print(f"{curve.z[0]:.6f}")
        else:
            print(f"# {variant}")
            print(curve.to_csv(), end="")
    years, maxima = observed_maxima(records, month)
    empirical_return_levels(maxima).to_csv((out / f"return_levels_empirical{'_month%02d' % month if month else ''}.csv").open("w"))
    return 0


def cmd_bootstrap(cfg: dict) -> int:
    _needs_run_length(cfg, [cfg["variant"]])
    records = _load(cfg)
    tides = build_tidal_samples(records, cfg["K"], cfg["tide_policy"])
    fit = fit_pipeline(records, tides, _pipeline_config(cfg))
    boot = BootstrapConfig(n_reps=cfg["n_reps"], mean_block=cfg["mean_block"], seed=cfg["seed"],
                           workers=cfg["workers"])
    res = bootstrap_return_levels(fit, records, boot, cfg["p"] or DEFAULT_P)
    out = _out(cfg)
    res.to_csv((out / f"bootstrap_{cfg['variant']}.csv").open("w"))
    (out / f"bootstrap_{cfg['variant']}.json").write_text(json.dumps(res.to_dict(), indent=2))
    print(res.to_csv(), end="")
    if res.n_failed:
        print(f"# {res.n_failed} replicates dropped", file=sys.stderr)
    return 0


def cmd_diagnostics(cfg: dict) -> int:
    _needs_run_length(cfg, [cfg["variant"]])
    records = _load(cfg)
    tides = build_tidal_samples(records, cfg["K"], cfg["tide_policy"])
    fit = fit_pipeline(records, tides, _pipeline_config(cfg))
    prior = DEFAULT_PRIOR if cfg["prior"] else None
    tail_fits, rate_fits = [], []
    for tail in ("S0", "S1", "S2", "S3", "S4"):
        try:
            tail_fits.append(fit_surge_model(records, "seasonal", tail=tail, q_u=cfg["q_u"], prior=prior).tail_fit)
        except Exception as exc:  # report and continue with the other models
            logger.warning("tail model %s failed: %s", tail, exc)
    for rate in ("R0", "R1"):
        rate_fits.append(fit_surge_model(records, "seasonal", rate=rate, q_u=cfg["q_u"]).rate_fit)
    pit = pit_transform(fit.surge, records)
    years, maxima = observed_maxima(records)
    report = {
        "tail_models": model_select(tail_fits).to_dict(),
        "rate_models": model_select(rate_fits).to_dict(),
        "pit": pit.to_dict(),
    }
    out = _out(cfg)
    if maxima.size >= 5:
        for mode in ("pooled", "year_specific"):
            try:
                pp = pp_plot_data(maxima, fit.spec, mode, years)
                (out / f"pp_{mode}.csv").write_text(pp.to_csv())
            except ValueError as exc:
                logger.warning("PP data (%s) skipped: %s", mode, exc)
    (out / "diagnostics.json").write_text(json.dumps(report, indent=2))
    print(f"PIT KS p-value {pit.p_value:.4g}")
    for m in report["tail_models"]["models"]:
        print(f"{m['name']:<12} AIC {m['aic']:.3f}  BIC {m['bic']:.3f}")
    return 0


def cmd_seasonality(cfg: dict) -> int:
    _needs_run_length(cfg, [cfg["variant"]])
    records = _load(cfg)
    tides = build_tidal_samples(records, cfg["K"], cfg["tide_policy"])
    fit = fit_pipeline(records, tides, _pipeline_config(cfg))
    out = _out(cfg)
    lines = ["p,z_metres," + ",".join(f"m{j:02d}" for j in range(1, 13))]
    for p in cfg["p"] or [0.5, 0.1, 0.01]:
        z = return_level(fit.spec, p)
        probs = month_occurrence_probs(fit.spec, z)
        lines.append(f"{p:.6g},{z:.6f}," + ",".join(f"{v:.6f}" for v in probs))
    text = "\n".join(lines) + "\n"
    (out / "month_occurrence.csv").write_text(text)
    print(text, end="")
    return 0


def cmd_dependence(cfg: dict) -> int:
    records = _load(cfg)
    rep = dependence_report(records, q=cfg["q_u"], site=cfg.get("site"), n_boot=cfg["n_boot"], seed=cfg["seed"])
    out = _out(cfg)
    (out / "dependence.json").write_text(json.dumps(rep.to_dict(), indent=2))
    print(rep.table())
    return 0


def _truth_from_config(d: dict) -> TruthSurgeModel:
    if not d.get("tail"):
        return heysham_like_truth()
    q = float(d.get("q", 0.95))
    tail = TailParams.from_dict(d["tail"])
    rate_d = dict(d.get("rate") or {"variant": "constant"})
    rate_d.setdefault("base_rate", 1.0 - q)
    return TruthSurgeModel(tail, RateParams.from_dict(rate_d), q=q,
                           mu=np.asarray(d.get("mu", np.zeros(12)), dtype=float),
                           reference_tide=float(d.get("reference_tide", 5.0)))


def cmd_simulate(args: argparse.Namespace) -> int:
    d = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file {path} does not exist")
        d = json.loads(path.read_text())
    truth = _truth_from_config(d)
    sim = SimulationConfig(
        truth=truth,
        years=args.years if args.years is not None else int(d.get("years", 50)),
        start_year=int(d.get("start_year", 1970)),
        tide=TideConfig(**d.get("tide", {})),
        theta=float(d.get("theta", 1.0)),
        missing_fraction=float(d.get("missing_fraction", 0.0)),
        seed=args.seed if args.seed is not None else int(d.get("seed", 0)),
    )
    records = simulate_records(sim)
    if args.output:
        with open(args.output, "w", newline="") as fh:
            records.to_csv(fh)
    else:
        records.to_csv(sys.stdout)
    return 0


COMMANDS = {
    "fit": cmd_fit,
    "return-levels": cmd_return_levels,
    "bootstrap": cmd_bootstrap,
    "diagnostics": cmd_diagnostics,
    "seasonality": cmd_seasonality,
    "dependence": cmd_dependence,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        return COMMANDS[args.command](_settings(args))
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"skewsurge: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # every module error maps to a runtime failure
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
