"""One repeat of each experiment: (config, N, run index) -> JSON-ready rows.

A repeat draws everything from ``RandomSource(seed, run).generator(N, purpose)``, so its rows
do not depend on which worker runs it or in what order.
"""
from __future__ import annotations

import logging
import math
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from src.bayes.credible import MarginalInterval, marginal_credible_interval
from src.config import ExperimentConfig, ExperimentKind
from src.copulas.copula import CopulaKind, CopulaSpec
from src.copulas.regimes import DependenceRegime, RegimeTag
from src.distributions import risk
from src.distributions.families import FamilyKind, RandomSource
from src.errors import ConfigError, DataError, DivisionDomainError
from src.harness.io import ingest_correlation_csv, ingest_returns_csv
from src.harness.models import (
    AssetModel,
    NormalCopulaModel,
    asset_model_from_config,
    discrete_model_from_config,
    model_kind,
)
from src.queueing.bounds import QueueModel, bayes_waiting_bound, kingman_from_samples
from src.robust_solver.metrics import (
    cumulative_return,
    deviation_metrics,
    estimate_return_percentile,
    lower_order_statistic,
    out_of_sample_return,
)
from src.robust_solver.portfolio import solve_portfolio
from src.uncertainty_sets.base import Tail
from src.uncertainty_sets.box import CoordinateBox, build_coordinate_box
from src.uncertainty_sets.discrete import build_discrete
from src.uncertainty_sets.geometry import box_hausdorff, hausdorff_distance, unit_directions

logger = logging.getLogger(__name__)

Row = Dict[str, Any]
Repeat = Callable[[ExperimentConfig, int, int], List[Row]]

# Substreams of RandomSource(seed, run).generator(N, purpose).
SAMPLE_STREAM = 0
OUT_OF_SAMPLE_STREAM = 1
MONTE_CARLO_STREAM = 2
DIRECTION_STREAM = 3

QUEUE_SERVICE_MEAN = 2.0
QUEUE_INTERARRIVAL_MEAN = 3.05
HAUSDORFF_DIRECTIONS = 64


def copula_from_config(spec: Mapping[str, Any], dimension: int) -> CopulaSpec:
    """Copula from a ``model.tail_copula`` block.

    ``kind`` is one of independence, upper_frechet, lower_bound, gaussian (needs ``correlation``)
    or block_product (needs ``blocks``, each with 0-based ``indices`` and its own copula keys).
    """
    try:
        kind = CopulaKind.from_name(str(spec.get("kind", CopulaKind.INDEPENDENCE.value)))
        if kind is CopulaKind.GAUSSIAN:
            copula = CopulaSpec.gaussian(spec["correlation"])
        elif kind is CopulaKind.BLOCK_PRODUCT:
            copula = CopulaSpec.block_product(
                [(block["indices"], copula_from_config(block, len(block["indices"]))) for block in spec["blocks"]]
            )
        else:
            copula = {
                CopulaKind.INDEPENDENCE: CopulaSpec.independence,
                CopulaKind.UPPER_FRECHET: CopulaSpec.upper_frechet,
                CopulaKind.LOWER_BOUND: CopulaSpec.lower_bound,
            }[kind](dimension)
    except KeyError as e:
        raise ConfigError(f"Tail copula '{spec.get('kind')}' needs '{e.args[0]}'")
    except DataError as e:
        raise ConfigError(f"Invalid tail copula: {e}")
    if copula.dimension != dimension:
        raise ConfigError(f"Tail copula has dimension {copula.dimension}, the model has {dimension}")
    return copula


def regime_from_name(name: str, dimension: int, model: Optional[Mapping[str, Any]] = None) -> DependenceRegime:
    """Regime for a config name.

    tail_positive reads its lower-bound copula from ``model.tail_copula`` (independence when absent)
    and the threshold β from ``model.tail_beta`` (default 0).
    """
    tag = RegimeTag.from_name(name)
    if tag is RegimeTag.INDEPENDENT:
        return DependenceRegime.independent()
    if tag is RegimeTag.NO_ASSUMPTION:
        return DependenceRegime.no_assumption()
    if tag is RegimeTag.CENTRAL_DOMAIN:
        return DependenceRegime.central_domain()
    model = model or {}
    lower_copula = copula_from_config(model.get("tail_copula", {}), dimension)
    return DependenceRegime.tail_positive(lower_copula, float(model.get("tail_beta", 0.0)))


def marginal_levels(regime: DependenceRegime, alpha: float, dimension: int) -> List[float]:
    """Per-marginal credibility levels; α = 1 keeps every interval at the posterior mode."""
    if alpha >= 1.0:
        return [1.0] * dimension
    return [regime.marginal_alpha(alpha, dimension, i) for i in range(dimension)]


def _generators(config: ExperimentConfig, n_samples: int, run_index: int):
    source = RandomSource(config.seed, run_index)
    return lambda purpose: source.generator(n_samples, purpose)


def _base_row(config: ExperimentConfig, n_samples: int, run_index: int) -> Row:
    return {"seed": config.seed, "run": run_index, "N": n_samples}


def asset_box(
    model: AssetModel,
    samples: np.ndarray,
    regime: DependenceRegime,
    config: ExperimentConfig,
    tail: Tail,
) -> CoordinateBox:
    intervals = model.marginal_intervals(samples, marginal_levels(regime, config.alpha, model.dimension))
    return build_coordinate_box(regime, intervals, config.eps, tail)


def true_asset_box(model: AssetModel, regime: DependenceRegime, eps: float, tail: Tail) -> CoordinateBox:
    return build_coordinate_box(regime, model.true_marginals(), eps, tail)


# Set geometry


def geometry_repeat(config: ExperimentConfig, n_samples: int, run_index: int) -> List[Row]:
    model = asset_model_from_config(config.model)
    coordinates = [int(c) for c in config.model.get("coordinates", [1, model.dimension])]
    tail = Tail.from_name(config.tail)
    samples = model.sample(n_samples, _generators(config, n_samples, run_index)(SAMPLE_STREAM))
    rows: List[Row] = []
    for name in config.regimes:
        regime = regime_from_name(name, model.dimension, config.model)
        box = asset_box(model, samples, regime, config, tail)
        distance = box_hausdorff(box, true_asset_box(model, regime, config.eps, tail))
        for coordinate in coordinates:
            rows.append(
                {
                    **_base_row(config, n_samples, run_index),
                    "regime": regime.tag.value,
                    "coordinate": coordinate,
                    "lower": float(box.lower[coordinate - 1]),
                    "upper": float(box.upper[coordinate - 1]),
                    "level": float(box.levels[coordinate - 1]),
                    "hausdorff": distance,
                }
            )
    return rows


# Robust portfolio


def portfolio_repeat(config: ExperimentConfig, n_samples: int, run_index: int) -> List[Row]:
    model = asset_model_from_config(config.model)
    streams = _generators(config, n_samples, run_index)
    samples = model.sample(n_samples, streams(SAMPLE_STREAM))
    fresh = model.sample(config.out_of_sample_draws, streams(OUT_OF_SAMPLE_STREAM))
    rows: List[Row] = []
    for name in config.regimes:
        regime = regime_from_name(name, model.dimension, config.model)
        box = asset_box(model, samples, regime, config, Tail.LOWER)
        solution = solve_portfolio(box)
        rows.append(
            {
                **_base_row(config, n_samples, run_index),
                "regime": regime.tag.value,
                "v_in": solution.v_in,
                "v_out": out_of_sample_return(solution.weights, fresh, config.out_of_sample_level),
                "asset": int(np.argmax(solution.weights)) + 1,
            }
        )
    return rows


# Queue


def queue_model(config: ExperimentConfig) -> QueueModel:
    return QueueModel(
        float(config.model.get("service_mean", QUEUE_SERVICE_MEAN)),
        float(config.model.get("interarrival_mean", QUEUE_INTERARRIVAL_MEAN)),
        config.n_customers,
        config.eps_bar,
    )


def queue_repeat(config: ExperimentConfig, n_samples: int, run_index: int) -> List[Row]:
    model = queue_model(config)
    generator = _generators(config, n_samples, run_index)(SAMPLE_STREAM)
    services = risk.sample(model.service_family(), n_samples, generator)
    interarrivals = risk.sample(model.interarrival_family(), n_samples, generator)
    reports = [
        bayes_waiting_bound(model, services, interarrivals, config.alpha),
        kingman_from_samples(services, interarrivals, config.eps_bar),
    ]
    return [{**_base_row(config, n_samples, run_index), **report.to_dict()} for report in reports]


# Guarantee laboratory


def _binary(flag: bool) -> int:
    return 1 if flag else 0


def guarantee_repeat(config: ExperimentConfig, n_samples: int, run_index: int) -> List[Row]:
    if model_kind(config.model) == "discrete":
        return [_discrete_guarantee(config, n_samples, run_index)]
    return [_asset_guarantee(config, n_samples, run_index)]


def _discrete_guarantee(config: ExperimentConfig, n_samples: int, run_index: int) -> Row:
    model = discrete_model_from_config(config.model)
    shape = str(config.model.get("region", "box"))
    streams = _generators(config, n_samples, run_index)
    labels = model.sample_labels(n_samples, streams(SAMPLE_STREAM))
    region = model.region(labels, config.alpha, shape)
    uncertainty_set = build_discrete(region, model.support, config.eps)
    solution = solve_portfolio(uncertainty_set)
    returns = model.support @ solution.weights
    # Exact P(ξᵀx* >= v_in) under θ^c.
    holds = float(model.probabilities[returns >= solution.v_in - 1e-9].sum())
    directions = unit_directions(model.dimension, HAUSDORFF_DIRECTIONS, RandomSource(config.seed).generator(DIRECTION_STREAM))
    return {
        **_base_row(config, n_samples, run_index),
        "model": "discrete",
        "covered": _binary(region.contains(model.probabilities)),
        "implied": _binary(holds >= 1.0 - config.eps - 1e-12),
        "probability": holds,
        "v_in": solution.v_in,
        "hausdorff": hausdorff_distance(uncertainty_set, model.true_set(config.eps), directions),
        "diameter": region.diameter(),
    }


def _asset_guarantee(config: ExperimentConfig, n_samples: int, run_index: int) -> Row:
    model = asset_model_from_config(config.model)
    name = config.regimes[0] if config.regimes else "independent"
    regime = regime_from_name(name, model.dimension, config.model)
    streams = _generators(config, n_samples, run_index)
    samples = model.sample(n_samples, streams(SAMPLE_STREAM))
    intervals = model.marginal_intervals(samples, marginal_levels(regime, config.alpha, model.dimension))
    box = build_coordinate_box(regime, intervals, config.eps, Tail.LOWER)
    solution = solve_portfolio(box)
    draws = model.sample(config.monte_carlo_draws, streams(MONTE_CARLO_STREAM))
    holds = float(np.mean(draws @ solution.weights >= solution.v_in - 1e-12))
    covered = all(interval.contains([theta]) for interval, theta in zip(intervals, model.thetas))
    return {
        **_base_row(config, n_samples, run_index),
        "model": "two_point_assets",
        "covered": _binary(covered),
        "implied": _binary(holds >= 1.0 - config.eps),
        "probability": holds,
        "v_in": solution.v_in,
        "hausdorff": box_hausdorff(box, true_asset_box(model, regime, config.eps, Tail.LOWER)),
        "diameter": float(math.sqrt(sum(interval.diameter() ** 2 for interval in intervals))),
    }


# Backtest


def load_backtest_data(config: ExperimentConfig):
    if not config.returns_csv:
        raise ConfigError("The backtest needs 'returns_csv'")
    data = ingest_returns_csv(config.returns_csv)
    if config.holdout >= data.n_periods - 1:
        raise ConfigError(f"holdout={config.holdout} leaves fewer than 2 training periods out of {data.n_periods}")
    correlation = (
        ingest_correlation_csv(config.correlation_csv, data.names)
        if config.correlation_csv
        else np.eye(len(data.names))
    )
    return data, correlation


def normal_intervals(samples: np.ndarray, levels: List[float]) -> List[MarginalInterval]:
    return [
        marginal_credible_interval(FamilyKind.NORMAL, samples[:, i], levels[i]) for i in range(samples.shape[1])
    ]


def backtest_alphas(config: ExperimentConfig) -> List[float]:
    return list(config.alphas) if config.alphas else [config.alpha]


def backtest_repeat(config: ExperimentConfig, n_samples: int, run_index: int) -> List[Row]:
    """Run index selects the credibility level from ``alphas``."""
    data, correlation = load_backtest_data(config)
    alpha = backtest_alphas(config)[run_index]
    training = data.matrix[: data.n_periods - config.holdout]
    if n_samples > training.shape[0]:
        raise ConfigError(f"N={n_samples} exceeds the {training.shape[0]} training periods")
    window = training[-n_samples:]
    d = window.shape[1]
    regime = DependenceRegime.no_assumption()
    intervals = normal_intervals(window, marginal_levels(regime, alpha, d))
    box = build_coordinate_box(regime, intervals, config.eps, Tail.LOWER)
    solution = solve_portfolio(box)

    fitted = [interval.mode_family() for interval in intervals]
    reference = NormalCopulaModel([f.theta[0] for f in fitted], [f.theta[1] for f in fitted], correlation)
    r_star = estimate_return_percentile(
        solution.weights,
        reference.sample,
        config.eps,
        RandomSource(config.seed, run_index),
        n_draws=config.percentile_draws,
        threads=config.threads,
    )
    try:
        metrics = deviation_metrics(solution.v_in, r_star)
        d_abs, d_rel = metrics.d, metrics.D
    except DivisionDomainError as e:
        logger.warning(f"Relative deviation undefined at N={n_samples}, alpha={alpha}: {e}")
        d_abs, d_rel = e.deviation, math.nan

    row = {
        **_base_row(config, n_samples, run_index),
        "alpha": alpha,
        "r_in": solution.v_in,
        "r_star": r_star,
        "d": d_abs,
        "D": d_rel,
        "weights": ";".join(f"{w:.6g}" for w in solution.weights),
    }
    if config.holdout > 0:
        holdout = data.matrix[data.n_periods - config.holdout :]
        row["cumulative_return"] = cumulative_return(solution.weights, holdout)
        row["holdout_quantile"] = lower_order_statistic(holdout @ solution.weights, config.eps)
    return [row]


REPEATS: Dict[ExperimentKind, Repeat] = {
    ExperimentKind.GEOMETRY: geometry_repeat,
    ExperimentKind.PORTFOLIO: portfolio_repeat,
    ExperimentKind.QUEUE: queue_repeat,
    ExperimentKind.GUARANTEE_LAB: guarantee_repeat,
    ExperimentKind.BACKTEST: backtest_repeat,
}


def run_repeat(kind: ExperimentKind, config: ExperimentConfig, n_samples: int, run_index: int) -> List[Row]:
    try:
        repeat = REPEATS[kind]
    except KeyError:
        raise ConfigError(f"Experiment '{kind.value}' has no repeat function")
    return repeat(config, n_samples, run_index)


def repeat_jobs(config: ExperimentConfig) -> List[Tuple[int, int]]:
    """(N, run index) pairs of an experiment; the backtest runs once per credibility level."""
    runs = len(backtest_alphas(config)) if config.experiment is ExperimentKind.BACKTEST else config.repeats
    return [(n, run) for n in config.sizes for run in range(runs)]
