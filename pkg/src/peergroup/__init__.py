"""Business-constrained peer-group clustering toolkit."""

from .dpmm import (
    ChainResult,
    DissimilarityMatrix,
    DpmmConfig,
    chain_agreement,
    euclidean_dissimilarity,
    posterior_dissimilarity,
    run_chain,
    run_dpmm,
)
from .hier import (
    LINKAGE_METHODS,
    MergeTree,
    Partition,
    agglomerate,
    cut_tree,
    kirigami1,
    kirigami2,
    pam,
)
from .indices import (
    IndexReport,
    ch_index,
    index_report,
    pcr,
    pearson_gamma,
    silhouette,
)
from .preprocess import (
    FeatureTable,
    PercentileTable,
    VariableSpec,
    percentile_table,
    pit,
    quintile_bin,
    standardize,
    transform_variable,
    vif_prune,
)
from .realloc import (
    ReallocConfig,
    TradeoffCurve,
    flag_for_reallocation,
    reallocate,
    select_stable,
    tradeoff_grid,
)

__version__ = "0.1.0"
