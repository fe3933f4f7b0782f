"""ctbench: a walk-forward benchmark engine for crypto time-series generators.

Generators are scored on two tasks per rolling split - training a forecaster
on synthetic returns and trading the real test window, and trading
mean-reverting reconstruction-residual spreads - with a financial metric
suite spanning prediction error, rank fidelity, trading performance, tail
risk, and wall-clock efficiency.
"""

__version__ = "0.1.0"

from .config import BenchConfig, TaskSettings, load_config, parse_config
from .features import FeatureSpec, FeatureTensor, compute_features, feature_catalog
from .forecasting import (
    ForecasterConfig,
    TrainedForecaster,
    build_training_set,
    fit_forecaster,
)
from .market_data import (
    PriceTensor,
    ReturnMatrix,
    SplitPlan,
    StatsSummary,
    WindowSplit,
    descriptive_stats,
    iter_splits,
    load_ohlc,
    log_returns,
    make_splits,
    split_slices,
)
from .metrics import (
    MetricsReport,
    RankTable,
    error_metrics,
    rank_metrics,
    rank_models,
    risk_metrics,
    spearman,
    timing_metrics,
    trading_metrics,
)
from .runner import aggregate_yearly, run_benchmark
from .strategies import (
    EquityCurve,
    WeightMatrix,
    simulate,
    weights_csm,
    weights_half_ls,
    weights_lotq,
    weights_pw,
)
from .tasks import (
    OuParams,
    TaskResult,
    fit_ou,
    run_predictive_utility,
    run_stat_arb,
    s_score,
    stat_arb_weights,
)
from .tsg import (
    BlockBootstrapModel,
    BridgeCommandModel,
    ExchangeBundle,
    ExchangeDirModel,
    GaussianModel,
    PassthroughModel,
    PcaReconstructor,
    TsgModel,
    make_model,
    pca_fit_reconstruct,
    read_bundle,
    write_bundle,
)

__all__ = [name for name in dir() if not name.startswith("_")]
