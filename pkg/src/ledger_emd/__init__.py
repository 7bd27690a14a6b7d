"""Earth mover's distance between balance sheets modeled as account trees."""

__version__ = "0.1.0"

from .analysis import (
    CompanyMeta,
    EligibilityParams,
    LofParams,
    eligible_companies,
    experiment1,
    jaccard,
    jaccard_score,
    knn_query,
    lof_scores,
    parse_nace_metadata,
)
from .baselines import (
    PropertyString,
    levenshtein,
    property_string,
    random_ranking,
    sbsd_distance,
    ygdm_distance,
)
from .embedding import (
    Embedding2D,
    TsneParams,
    conditional_probabilities,
    render_embedding_svg,
    tsne_embed,
)
from .emd import (
    AggregationPolicy,
    DistanceMatrix,
    FlowReport,
    MetricChoice,
    company_distance,
    distance_matrix,
    emd_lp_oracle,
    emd_tree_distance,
    explain_distance,
)
from .errors import (
    ConvergenceError,
    InfeasibleError,
    LedgerEmdError,
    MassMismatchError,
    SolverError,
    ValidationError,
)
from .model import (
    AccountNode,
    ChartOfAccounts,
    Side,
    SignConvention,
    SubtreeKind,
    TrialBalance,
    WeightedSubtrees,
    build_weighted_subtrees,
    parse_chart_of_accounts,
    parse_trial_balance,
)
from .synth import SynthConfig, generate_chart, generate_population

__all__ = [
    "AccountNode",
    "AggregationPolicy",
    "ChartOfAccounts",
    "CompanyMeta",
    "ConvergenceError",
    "DistanceMatrix",
    "EligibilityParams",
    "Embedding2D",
    "FlowReport",
    "InfeasibleError",
    "LedgerEmdError",
    "LofParams",
    "MassMismatchError",
    "MetricChoice",
    "PropertyString",
    "Side",
    "SignConvention",
    "SolverError",
    "SubtreeKind",
    "SynthConfig",
    "TrialBalance",
    "TsneParams",
    "ValidationError",
    "WeightedSubtrees",
    "build_weighted_subtrees",
    "company_distance",
    "conditional_probabilities",
    "distance_matrix",
    "eligible_companies",
    "emd_lp_oracle",
    "emd_tree_distance",
    "experiment1",
    "explain_distance",
    "generate_chart",
    "generate_population",
    "jaccard",
    "jaccard_score",
    "knn_query",
    "levenshtein",
    "lof_scores",
    "parse_chart_of_accounts",
    "parse_nace_metadata",
    "parse_trial_balance",
    "property_string",
    "random_ranking",
    "render_embedding_svg",
    "sbsd_distance",
    "tsne_embed",
    "ygdm_distance",
]
