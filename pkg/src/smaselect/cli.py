"""Command-line front end.

Subcommands: ``calibrate``, ``select``, ``simulate``, ``sweep``, ``ratios``,
``diagnose``, ``bounds-check``.  Exit codes: 0 ok, 2 config error,
3 numeric failure, 4 property violation under ``--self-test`` or in
``bounds-check``.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .bootstrap import bootstrap_calibrate, bootstrap_joint_draws, presmooth, validity_diagnostics
from .bounds import QFParams, qf_lower, qf_upper
from .calibration import (
    critical_values,
    familywise_exceedance,
    sample_joint_draws,
)
from .errors import (
    AllZeroResiduals,
    ConfigInvalid,
    SingularGram,
    SmaError,
)
from .experiment import (
    ExperimentConfig,
    generate_scenario,
    known_noise_table,
    mdagger_sweep,
    meta_record,
    quantile_ratio_table,
    ratios_csv,
    results_csv,
    run_comparison,
    scenario_family,
    sweep_csv,
)
from .moments import all_pair_moments
from .rng import stream
from .selector import sma_select, test_statistics

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_SELFTEST = 4


def _load_config(args) -> ExperimentConfig:
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot read config: {exc}") from None
        cfg = ExperimentConfig.from_dict(raw)
    else:
        cfg = ExperimentConfig(n=200).validate()
    seeds = cfg.seeds
    for name in ("data", "noise", "calibration", "bootstrap"):
        val = getattr(args, f"seed_{name}", None)
        if val is not None:
            seeds = replace(seeds, **{name: int(val)})
    overrides = {"seeds": seeds}
    if getattr(args, "mode", None):
        overrides["mode"] = {"prob": "probabilistic", "power": "power_loss"}[args.mode]
    if getattr(args, "a", None) is not None:
        overrides["power_a"] = float(args.a)
    if getattr(args, "workers", None) is not None:
        overrides["n_workers"] = int(args.workers)
    return replace(cfg, **overrides).validate()


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _propagation_selftest(draws, table) -> list[str]:
    """In-sample exceedance checks implied by the table's construction.

    Probabilistic mode: family-wise exceedance per reference at most
    exp(-x).  Power-loss mode: per-pair exceedance at the reference level
    at most exp(-level).
    """
    failures = []
    for m_ref in draws.references():
        if table.mode == "probabilistic":
            level = table.x_level + table.corrections.get(m_ref, 0.0)
            thresholds = {
                pair: _tail_for_selftest(draws, pair, level)
                for pair in draws.comparisons(m_ref)
            }
            fwe = familywise_exceedance(draws, m_ref, thresholds)
            target = math.exp(-table.x_level)
            if fwe > target + 1e-12:
                failures.append(f"reference {m_ref}: exceedance {fwe:.4f} > {target:.4f}")
        else:
            level = table.per_model_levels[m_ref]
            target = math.exp(-level)
            for pair in draws.comparisons(m_ref):
                z = _tail_for_selftest(draws, pair, level)
                exc = float(np.mean(draws.column(*pair) > z))
                if exc > target + 1e-12:
                    failures.append(
                        f"pair {pair}: exceedance {exc:.4f} > {target:.4f}"
                    )
    return failures


def _tail_for_selftest(draws, pair, level):
    from .calibration import _quantile_at

    return _quantile_at(draws.sorted_column(*pair), level)[0]


def cmd_calibrate(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    scenario = generate_scenario(cfg)
    family = scenario_family(cfg, scenario)
    if args.noise == "known":
        draws = sample_joint_draws(
            family, scenario.sigma, cfg.n_sim, cfg.seeds.calibration, n_workers=cfg.n_workers
        )
        if cfg.mode == "power_loss":
            table = known_noise_table(cfg, family, scenario)
        else:
            table = critical_values(
                draws, all_pair_moments(family, scenario.sigma), cfg.x_level, cfg.alpha_plus
            )
    else:
        y = scenario.f_true + _noise_vector(scenario, cfg, 0)
        resid = presmooth(family, y, cfg.m_dagger)
        table = bootstrap_calibrate(
            family,
            resid,
            cfg.x_level,
            cfg.alpha_plus,
            cfg.n_sim,
            cfg.seeds.bootstrap,
            n_workers=cfg.n_workers,
            mode=cfg.mode,
            power_a=cfg.power_a,
        )
        draws = bootstrap_joint_draws(family, resid, cfg.n_sim, cfg.seeds.bootstrap)
    io.save_table(table, out / "calibration.json")
    io.save_json(meta_record(cfg), out / "meta.json")
    print(f"calibration table ({args.noise}, {table.mode}) -> {out / 'calibration.json'}")
    if args.self_test:
        failures = _propagation_selftest(draws, table)
        if failures:
            for f in failures:
                print(f"self-test FAIL: {f}", file=sys.stderr)
            return EXIT_SELFTEST
        print("self-test ok: in-sample propagation holds for every reference")
    return EXIT_OK


def _noise_vector(scenario, cfg, rep):
    sd = np.sqrt(scenario.sigma.variances)
    return stream(cfg.seeds.noise, rep).standard_normal(cfg.n) * sd


def cmd_select(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    scenario = generate_scenario(cfg)
    family = scenario_family(cfg, scenario)
    if args.data:
        y = np.asarray(json.loads(Path(args.data).read_text()), dtype=float)
        if y.shape != (cfg.n,):
            raise ConfigInvalid(f"data vector must have length n={cfg.n}")
    else:
        y = scenario.f_true + _noise_vector(scenario, cfg, 0)
    if args.noise == "known":
        table = known_noise_table(cfg, family, scenario)
    else:
        resid = presmooth(family, y, cfg.m_dagger)
        table = bootstrap_calibrate(
            family,
            resid,
            cfg.x_level,
            cfg.alpha_plus,
            cfg.n_sim,
            cfg.seeds.bootstrap,
            n_workers=cfg.n_workers,
            mode=cfg.mode,
            power_a=cfg.power_a,
        )
    result = sma_select(test_statistics(family, y), table)
    io.save_json(result.to_dict(), out / "selection.json")
    io.save_table(table, out / "calibration.json")
    io.save_json(meta_record(cfg), out / "meta.json")
    print(f"selected model: {result.m_hat} -> {out / 'selection.json'}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    result = run_comparison(cfg)
    (out / "results.csv").write_text(results_csv(result.records))
    io.save_table(result.known_table, out / "calibration.json")
    meta = meta_record(cfg)
    meta["oracle"] = {
        "m_star": result.oracle_report.m_star,
        "z_bar": result.oracle_report.z_bar,
        "z_bar_theory": result.oracle_report.z_bar_theory,
    }
    io.save_json(meta, out / "meta.json")
    known = [r.m_sma_known for r in result.records]
    boot = [r.m_sma_boot for r in result.records]
    print(
        f"{len(result.records)} replicates, m*={result.oracle_report.m_star}, "
        f"median m_hat known={sorted(known)[len(known) // 2]} "
        f"boot={sorted(boot)[len(boot) // 2]} -> {out / 'results.csv'}"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    if args.m_dagger_list:
        md_list = [int(v) for v in args.m_dagger_list.split(",")]
    else:
        md_list = sorted({max(2, cfg.m_dagger // 2), cfg.m_dagger, max(cfg.models)})
    sweep = mdagger_sweep(cfg, md_list)
    (out / "sweep.csv").write_text(sweep_csv(sweep))
    io.save_json(meta_record(cfg), out / "meta.json")
    print(f"sweep over {md_list} -> {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_ratios(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    table = quantile_ratio_table(cfg)
    (out / "ratios.csv").write_text(ratios_csv(table))
    io.save_json(
        {"summary": table.summary, "m_dagger": table.m_dagger}, out / "ratios_summary.json"
    )
    if args.m_dagger_list:
        lines = ["m_dagger,min,mean,max"]
        for md in (int(v) for v in args.m_dagger_list.split(",")):
            sweep_table = quantile_ratio_table(cfg, m_dagger=md)
            s = sweep_table.summary
            lines.append(f"{md},{s['min']!r},{s['mean']!r},{s['max']!r}")
        (out / "ratios_by_mdagger.csv").write_text("\n".join(lines) + "\n")
    io.save_json(meta_record(cfg), out / "meta.json")
    print(
        f"threshold ratios: min={table.summary['min']:.3f} "
        f"mean={table.summary['mean']:.3f} max={table.summary['max']:.3f} "
        f"-> {out / 'ratios.csv'}"
    )
    return EXIT_OK


def cmd_diagnose(args) -> int:
    if not args.validate:
        raise ConfigInvalid("diagnose uses oracle knowledge; pass --validate to confirm")
    cfg = _load_config(args)
    out = _outdir(args)
    scenario = generate_scenario(cfg)
    family = scenario_family(cfg, scenario)
    diag = validity_diagnostics(
        family, scenario.sigma, scenario.f_true, cfg.m_dagger, cfg.x_level
    )
    io.save_json(diag.to_dict(), out / "diagnostics.json")
    io.save_json(meta_record(cfg), out / "meta.json")
    print(
        f"applicability ratio {diag.applicability_ratio:.2f} "
        f"(asymptotic regime {'reached' if diag.asymptotic_regime_reached else 'NOT reached'}) "
        f"-> {out / 'diagnostics.json'}"
    )
    return EXIT_OK


BOUND_GRID_MATRICES = {
    "eye1": np.ones(1),
    "eye2": np.ones(2),
    "eye5": np.ones(5),
    "diag_1_05_01": np.array([1.0, 0.5, 0.1]),
}
BOUND_GRID_LEVELS = (0.5, 1.0, 2.0, 3.0)


def bounds_check_grid(n_mc: int = 100_000, seed: int = 90210) -> list[dict]:
    """MC falsification grid for the quadratic-form tail bounds."""
    rows = []
    for idx, (name, diag) in enumerate(sorted(BOUND_GRID_MATRICES.items())):
        gen = stream(seed, idx)
        z = gen.standard_normal((n_mc, diag.shape[0]))
        quad = (z**2 * diag).sum(axis=1)
        p_tr = float(diag.sum())
        v2 = float((diag**2).sum())
        lam = float(diag.max())
        for x in BOUND_GRID_LEVELS:
            slack = 3.0 * math.sqrt(math.exp(-x) / n_mc)
            hi = float(np.mean(quad > qf_upper(QFParams(p_tr, v2, lam, x))))
            lo = float(np.mean(quad < qf_lower(p_tr, v2, x)))
            rows.append(
                {
                    "matrix": name,
                    "x": x,
                    "upper_exceedance": hi,
                    "lower_exceedance": lo,
                    "budget": math.exp(-x) + slack,
                    "ok": hi <= math.exp(-x) + slack and lo <= math.exp(-x) + slack,
                }
            )
    return rows


def cmd_bounds_check(args) -> int:
    out = _outdir(args)
    rows = bounds_check_grid()
    io.save_json({"grid": rows}, out / "bounds.json")
    bad = [r for r in rows if not r["ok"]]
    if bad:
        for r in bad:
            print(f"bound violated: {r}", file=sys.stderr)
        return EXIT_SELFTEST
    print(f"{len(rows)} grid cells, no violations -> {out / 'bounds.json'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sma", description="Ordered model selection with calibrated thresholds"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", default="sma_out", help="output directory")
        p.add_argument("--seed-data", type=int, dest="seed_data")
        p.add_argument("--seed-noise", type=int, dest="seed_noise")
        p.add_argument("--seed-calibration", type=int, dest="seed_calibration")
        p.add_argument("--seed-bootstrap", type=int, dest="seed_bootstrap")
        p.add_argument("--mode", choices=("prob", "power"))
        p.add_argument("--a", type=float, help="power-loss exponent")
        p.add_argument("--workers", type=int, help="worker threads")
        p.add_argument("--validate", action="store_true", help="allow oracle knowledge")

    p = sub.add_parser("calibrate", help="build a calibration table")
    common(p)
    p.add_argument("--noise", choices=("known", "bootstrap"), default="known")
    p.add_argument("--self-test", action="store_true", dest="self_test")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("select", help="run the selector on one data vector")
    common(p)
    p.add_argument("--noise", choices=("known", "bootstrap"), default="bootstrap")
    p.add_argument("--data", help="JSON file with the observation vector")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("simulate", help="replicate comparison study")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="pilot-dimension sensitivity sweep")
    common(p)
    p.add_argument("--m-dagger-list", dest="m_dagger_list", help="comma-separated pilot sizes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ratios", help="multiplier vs known threshold ratios")
    common(p)
    p.add_argument(
        "--m-dagger-list",
        dest="m_dagger_list",
        help="also summarize ratios over these pilot sizes",
    )
    p.set_defaults(func=cmd_ratios)

    p = sub.add_parser("diagnose", help="multiplier validity diagnostics (needs --validate)")
    common(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("bounds-check", help="MC falsification of the tail bounds")
    common(p)
    p.set_defaults(func=cmd_bounds_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularGram, AllZeroResiduals) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SmaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
