"""Cross-modal retrieval training with offline hard-negative mining."""

from ._xmatch import (  # noqa: F401
    ComparisonReport,
    ConfigError,
    ContractError,
    Corpus,
    EpochMetrics,
    EvalError,
    GeneratorSpec,
    IoError,
    LossConfig,
    LossVariant,
    MiningError,
    OfflineNegativeIndex,
    OfflineSelection,
    OnlinePick,
    PairScoreGrad,
    PairScores,
    RankStats,
    RetrievalReport,
    Rng,
    RoundPlan,
    SamplerMode,
    TrainError,
    TrainPlan,
    TrainResult,
    TwoRoundResult,
    TwoTowerModel,
    build_offline_index,
    compare_runs,
    cross_retrieval_rank,
    default_h_image,
    default_h_text,
    evaluate,
    evaluate_scores,
    fd_check,
    generate,
    grad_scores,
    init_model,
    load_corpus,
    load_index,
    load_metric_log,
    load_model,
    loss_value,
    mine_online,
    parse_variant,
    rank_statistics,
    resolved_h_image,
    resolved_h_text,
    run_two_round,
    sample_offline,
    save_corpus,
    save_index,
    save_metric_log,
    save_model,
    score,
    score_matrix,
    train_round,
    variant_name,
    variant_needs_index,
)

__all__ = [name for name in dir() if not name.startswith("_")]
