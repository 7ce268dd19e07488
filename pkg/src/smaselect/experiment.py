"""Synthetic regression experiments: scenario generation and comparisons.

A scenario is a univariate regression on [0, 1] with a trigonometric
feature basis, random or explicit coefficients, and a configurable
heteroscedastic noise profile.  The comparison harness runs the oracle,
the known-noise selector and the residual-multiplier selector over fresh
noise replicates and records selected indices and losses.
"""

from __future__ import annotations

import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .bootstrap import bootstrap_calibrate, presmooth
from .calibration import (
    CalibrationTable,
    critical_values,
    power_loss_critical_values,
    power_loss_params,
    sample_joint_draws,
)
from .errors import ConfigInvalid, DimensionMismatch
from .family import DesignMatrix, ModelFamily, WeightingScheme, build_projection_family
from .moments import (
    NoiseSpec,
    all_pair_moments,
    best_linear_coefficients,
    single_variance,
)
from .rng import stream
from .selector import OracleReport, oracle, payment_for_adaptation, sma_select, test_statistics

WEIGHTINGS = ("prediction", "full_vector", "derivative")
MODES = ("probabilistic", "power_loss")


def fourier_values(points: np.ndarray, n_terms: int) -> np.ndarray:
    """Trigonometric basis values, one row per term.

    Term 1 is the constant; terms 2k and 2k+1 are sqrt(2) cos(2 pi k x)
    and sqrt(2) sin(2 pi k x).
    """
    out = np.empty((n_terms, points.shape[0]))
    out[0] = 1.0
    for j in range(2, n_terms + 1):
        k = j // 2
        phase = 2.0 * np.pi * k * points
        out[j - 1] = np.sqrt(2.0) * (np.cos(phase) if j % 2 == 0 else np.sin(phase))
    return out


def fourier_derivative_values(points: np.ndarray, n_terms: int) -> np.ndarray:
    """Termwise derivatives of the trigonometric basis."""
    out = np.empty((n_terms, points.shape[0]))
    out[0] = 0.0
    for j in range(2, n_terms + 1):
        k = j // 2
        w = 2.0 * np.pi * k
        phase = w * points
        if j % 2 == 0:
            out[j - 1] = -np.sqrt(2.0) * w * np.sin(phase)
        else:
            out[j - 1] = np.sqrt(2.0) * w * np.cos(phase)
    return out


@dataclass(frozen=True)
class Seeds:
    data: int = 101
    noise: int = 202
    calibration: int = 303
    bootstrap: int = 404


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment parameters; every random source is seeded."""

    n: int
    p_max: int = 200
    coefficient_rule: dict = field(default_factory=lambda: {"kind": "paper4"})
    noise_profile: dict = field(
        default_factory=lambda: {"kind": "linear", "sigma_lo": 0.5, "sigma_hi": 2.0}
    )
    models: tuple[int, ...] = tuple(range(1, 38))
    m_dagger: int = 20
    x_level: float = 2.0
    alpha_plus: float = 1.0
    n_sim: int = 1000
    n_hist: int = 100
    seeds: Seeds = field(default_factory=Seeds)
    weighting: str = "prediction"
    random_design: bool = False
    n_workers: int = 1
    mode: str = "probabilistic"
    power_a: float | None = None

    def validate(self) -> "ExperimentConfig":
        models = tuple(int(m) for m in self.models)
        if not models or any(b <= a for a, b in zip(models, models[1:])):
            raise ConfigInvalid("models must be a nonempty strictly increasing list")
        if not (1 <= self.m_dagger <= max(models) <= self.p_max):
            raise ConfigInvalid("need 1 <= m_dagger <= max(models) <= p_max")
        if self.n < 1 or self.n_sim < 1 or self.n_hist < 1 or self.n_workers < 1:
            raise ConfigInvalid("counts must be >= 1")
        if self.x_level < 0 or self.alpha_plus < 0:
            raise ConfigInvalid("x_level and alpha_plus must be >= 0")
        if self.weighting not in WEIGHTINGS:
            raise ConfigInvalid(f"weighting must be one of {WEIGHTINGS}")
        if self.mode not in MODES:
            raise ConfigInvalid(f"mode must be one of {MODES}")
        if self.mode == "power_loss" and (self.power_a is None or self.power_a <= 0):
            raise ConfigInvalid("power_loss mode needs power_a > 0")
        for name in ("data", "noise", "calibration", "bootstrap"):
            if int(getattr(self.seeds, name)) < 0:
                raise ConfigInvalid("seeds must be nonnegative integers")
        _validate_coeff_rule(self.coefficient_rule)
        _validate_noise_profile(self.noise_profile, self.n)
        return replace(self, models=models)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["models"] = list(self.models)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "seeds" in d and isinstance(d["seeds"], dict):
            d["seeds"] = Seeds(**{k: int(v) for k, v in d["seeds"].items()})
        if "models" in d:
            d["models"] = tuple(int(m) for m in d["models"])
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigInvalid(f"unknown config fields: {sorted(unknown)}")
        try:
            cfg = cls(**d)
        except TypeError as exc:
            raise ConfigInvalid(str(exc)) from None
        return cfg.validate()


def _validate_coeff_rule(rule: dict) -> None:
    kind = rule.get("kind")
    if kind == "paper4":
        return
    if kind == "explicit":
        vals = rule.get("values")
        if not isinstance(vals, (list, tuple)) or not vals:
            raise ConfigInvalid("explicit coefficient rule needs a nonempty values list")
        return
    raise ConfigInvalid("coefficient_rule.kind must be 'paper4' or 'explicit'")


def _validate_noise_profile(profile: dict, n: int) -> None:
    kind = profile.get("kind")
    if kind == "linear":
        lo, hi = profile.get("sigma_lo"), profile.get("sigma_hi")
        if lo is None or hi is None or min(lo, hi) <= 0:
            raise ConfigInvalid("linear profile needs sigma_lo, sigma_hi > 0")
    elif kind == "constant":
        if profile.get("sigma", 0) <= 0:
            raise ConfigInvalid("constant profile needs sigma > 0")
    elif kind == "explicit":
        vals = profile.get("values")
        if not isinstance(vals, (list, tuple)) or len(vals) != n:
            raise ConfigInvalid("explicit profile needs n standard deviations")
        if min(vals) <= 0:
            raise ConfigInvalid("explicit profile values must be > 0")
    else:
        raise ConfigInvalid("noise_profile.kind must be linear/constant/explicit")


@dataclass(frozen=True)
class Scenario:
    grid: np.ndarray
    design: DesignMatrix
    coefficients: np.ndarray
    f_true: np.ndarray
    sigma: NoiseSpec


def generate_scenario(config: ExperimentConfig) -> Scenario:
    """Design, true response and noise covariance implied by the config."""
    config = config.validate()
    n, p = config.n, config.p_max
    if config.random_design:
        grid = np.sort(stream(config.seeds.data, 1).uniform(0.0, 1.0, size=n))
    else:
        grid = (np.arange(1, n + 1) - 0.5) / n

    basis = fourier_values(grid, p)
    design = DesignMatrix(basis / np.sqrt(n))

    rule = config.coefficient_rule
    if rule["kind"] == "paper4":
        gamma = stream(config.seeds.data, 0).standard_normal(p)
        damp = np.ones(p)
        for j in range(11, p + 1):
            damp[j - 1] = 1.0 / (j - 10) ** 2
        coeff = gamma * damp
    else:
        vals = np.asarray(rule["values"], dtype=float)
        if vals.shape[0] > p:
            raise ConfigInvalid("explicit coefficients exceed p_max")
        coeff = np.zeros(p)
        coeff[: vals.shape[0]] = vals

    f_true = basis.T @ coeff

    profile = config.noise_profile
    if profile["kind"] == "linear":
        sd = profile["sigma_lo"] + (profile["sigma_hi"] - profile["sigma_lo"]) * grid
    elif profile["kind"] == "constant":
        sd = np.full(n, float(profile["sigma"]))
    else:
        sd = np.asarray(profile["values"], dtype=float)
    return Scenario(
        grid=grid,
        design=design,
        coefficients=coeff,
        f_true=f_true,
        sigma=NoiseSpec.known(sd**2),
    )


def scenario_family(config: ExperimentConfig, scenario: Scenario) -> ModelFamily:
    if config.weighting == "full_vector":
        weighting = WeightingScheme.full_vector()
    elif config.weighting == "prediction":
        weighting = WeightingScheme.custom(scenario.design.entries.T)
    else:
        deriv = fourier_derivative_values(scenario.grid, config.p_max)
        weighting = WeightingScheme.custom(deriv.T / np.sqrt(config.n))
    family = build_projection_family(scenario.design, weighting, config.models)
    for pair in family.pairs():
        family.pair_operator(*pair)  # warm the cache before any threading
    return family


def known_noise_table(
    config: ExperimentConfig, family: ModelFamily, scenario: Scenario
) -> CalibrationTable:
    draws = sample_joint_draws(
        family,
        scenario.sigma,
        config.n_sim,
        config.seeds.calibration,
        n_workers=config.n_workers,
    )
    moments = all_pair_moments(family, scenario.sigma)
    if config.mode == "power_loss":
        dims = {m: single_variance(family, scenario.sigma, m).p_pair for m in family.models}
        params = power_loss_params(family.models, dims, config.power_a)
        return power_loss_critical_values(draws, moments, params, config.alpha_plus)
    return critical_values(draws, moments, config.x_level, config.alpha_plus)


@dataclass(frozen=True)
class ReplicateRecord:
    rep: int
    m_oracle: int
    m_sma_known: int
    m_sma_boot: int
    loss_oracle: float
    loss_known: float
    loss_boot: float


@dataclass(frozen=True)
class ComparisonResult:
    records: list[ReplicateRecord]
    oracle_report: OracleReport
    known_table: CalibrationTable
    config: ExperimentConfig


def _noise_draw(scenario: Scenario, seed: int, rep: int) -> np.ndarray:
    sd = np.sqrt(scenario.sigma.variances)
    return stream(seed, rep).standard_normal(scenario.grid.shape[0]) * sd


def run_comparison(config: ExperimentConfig) -> ComparisonResult:
    """Oracle vs known-noise vs residual-multiplier selection over replicates.

    The true response is fixed; each replicate draws fresh noise, reuses
    the shared known-noise table, and recalibrates the multiplier path on
    its own residuals.  Replicates are independent and may run on any
    number of workers without changing the output.
    """
    config = config.validate()
    scenario = generate_scenario(config)
    family = scenario_family(config, scenario)
    table_known = known_noise_table(config, family, scenario)

    report = oracle(
        family, scenario.f_true, scenario.sigma, config.alpha_plus, mode=config.mode
    )
    report = payment_for_adaptation(family, scenario.sigma, report, table_known)
    target = family.weight_matrix @ best_linear_coefficients(family, scenario.f_true)
    outputs = {m: family.operator(m) for m in family.models}

    def run_rep(rep: int) -> ReplicateRecord:
        y = scenario.f_true + _noise_draw(scenario, config.seeds.noise, rep)
        stats = test_statistics(family, y)
        m_known = sma_select(stats, table_known, models=family.models).m_hat
        resid = presmooth(family, y, config.m_dagger)
        table_boot = bootstrap_calibrate(
            family,
            resid,
            config.x_level,
            config.alpha_plus,
            config.n_sim,
            config.seeds.bootstrap,
            mode=config.mode,
            power_a=config.power_a,
            stream_tag=rep,
        )
        m_boot = sma_select(stats, table_boot, models=family.models).m_hat

        def loss(m: int) -> float:
            return float(np.sum((outputs[m] @ y - target) ** 2))

        return ReplicateRecord(
            rep=rep,
            m_oracle=report.m_star,
            m_sma_known=m_known,
            m_sma_boot=m_boot,
            loss_oracle=loss(report.m_star),
            loss_known=loss(m_known),
            loss_boot=loss(m_boot),
        )

    reps = range(config.n_hist)
    if config.n_workers > 1:
        with ThreadPoolExecutor(max_workers=config.n_workers) as pool:
            records = list(pool.map(run_rep, reps))
    else:
        records = [run_rep(r) for r in reps]
    return ComparisonResult(
        records=records, oracle_report=report, known_table=table_known, config=config
    )


@dataclass(frozen=True)
class RatioTable:
    ratios: dict[tuple[int, int], float]
    summary: dict[str, float]
    m_dagger: int


def quantile_ratio_table(config: ExperimentConfig, m_dagger: int | None = None) -> RatioTable:
    """Squared multiplier-to-known threshold ratios on one shared scenario."""
    config = config.validate()
    scenario = generate_scenario(config)
    family = scenario_family(config, scenario)
    table_known = known_noise_table(config, family, scenario)
    y = scenario.f_true + _noise_draw(scenario, config.seeds.noise, 0)
    md = config.m_dagger if m_dagger is None else int(m_dagger)
    resid = presmooth(family, y, md)
    table_boot = bootstrap_calibrate(
        family,
        resid,
        config.x_level,
        config.alpha_plus,
        config.n_sim,
        config.seeds.bootstrap,
        mode=config.mode,
        power_a=config.power_a,
        n_workers=config.n_workers,
    )
    ratios = {}
    for pair in family.pairs():
        z_known = table_known.threshold(*pair)
        z_boot = table_boot.threshold(*pair)
        if z_known <= 0:
            raise DimensionMismatch(f"known-noise threshold vanished for pair {pair}")
        ratios[pair] = (z_boot / z_known) ** 2
    vals = np.array(list(ratios.values()))
    return RatioTable(
        ratios=ratios,
        summary={
            "min": float(vals.min()),
            "mean": float(vals.mean()),
            "max": float(vals.max()),
        },
        m_dagger=md,
    )


def mdagger_sweep(config: ExperimentConfig, m_dagger_list) -> dict[int, dict]:
    """Rerun the multiplier path over pilot dimensions on shared data.

    Degenerate pilots surface their failure in the per-entry record rather
    than aborting the sweep.
    """
    from .errors import AllZeroResiduals

    config = config.validate()
    scenario = generate_scenario(config)
    family = scenario_family(config, scenario)
    y = scenario.f_true + _noise_draw(scenario, config.seeds.noise, 0)
    stats = test_statistics(family, y)
    out: dict[int, dict] = {}
    for md in m_dagger_list:
        md = int(md)
        try:
            resid = presmooth(family, y, md)
            table = bootstrap_calibrate(
                family,
                resid,
                config.x_level,
                config.alpha_plus,
                config.n_sim,
                config.seeds.bootstrap,
                mode=config.mode,
                power_a=config.power_a,
                n_workers=config.n_workers,
            )
            out[md] = {"m_hat": sma_select(stats, table).m_hat}
        except AllZeroResiduals as exc:
            out[md] = {"error": "AllZeroResiduals", "detail": str(exc)}
    return out


def results_csv(records: list[ReplicateRecord]) -> str:
    lines = ["rep,m_oracle,m_sma_known,m_sma_boot,loss_oracle,loss_known,loss_boot"]
    for r in records:
        lines.append(
            f"{r.rep},{r.m_oracle},{r.m_sma_known},{r.m_sma_boot},"
            f"{r.loss_oracle!r},{r.loss_known!r},{r.loss_boot!r}"
        )
    return "\n".join(lines) + "\n"


def ratios_csv(table: RatioTable) -> str:
    lines = ["m,m_ref,ratio_sq"]
    for (m, m_ref), v in sorted(table.ratios.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        lines.append(f"{m},{m_ref},{v!r}")
    return "\n".join(lines) + "\n"


def sweep_csv(sweep: dict[int, dict]) -> str:
    lines = ["m_dagger,m_hat,error"]
    for md in sorted(sweep):
        entry = sweep[md]
        lines.append(f"{md},{entry.get('m_hat', '')},{entry.get('error', '')}")
    return "\n".join(lines) + "\n"


def meta_record(config: ExperimentConfig) -> dict:
    return {
        "config": config.to_dict(),
        "versions": {
            "smaselect": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
    }
