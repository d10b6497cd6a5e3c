"""prodchoice: utterance production as cost-sensitive choice over
LM-generated contextual alternatives.

Library layout mirrors the processing flow: ``corpus`` ingests dialogue
transcripts, ``gateway``/``backends`` talk to scoring and chat models
(with record/replay fixtures), ``alternatives`` builds goal-directed and
goal-agnostic candidate sets, ``costs`` computes the four information
costs, ``align`` matches distributions by stratified sampling, ``choice``
and ``stats`` fit and test the choice models, and ``pipeline``/``cli``
orchestrate everything.
"""

__version__ = "0.1.0"

from .align import stratified_sample, distribution_tests, verify_alignment
from .alternatives import (
    AlternativeRecord,
    gen_goal_agnostic,
    gen_goal_directed,
    goal_match_proportions,
    lexical_overlap,
    reclassify,
)
from .choice import (
    Candidate,
    ChoiceSet,
    FitResult,
    PairwiseRow,
    argmin_choice,
    build_pairwise,
    fit_conditional_logit,
    fit_pairwise_logit,
    rank1_summary,
    rank_of_human,
    softmax_choice,
)
from .corpus import (
    ChoiceItem,
    RawUtterance,
    Turn,
    attach_history,
    clean_utterance,
    merge_and_filter,
    select_targets,
)
from .costs import (
    CostBundle,
    SurprisalProfile,
    cost_bundle,
    length_cost,
    surprisal_cost,
    uid_global_cost,
    uid_local_cost,
    word_surprisals,
)
from .gateway import (
    Gateway,
    GatewayConfig,
    GenRequest,
    JudgeVerdict,
    Message,
    ScoreRequest,
    ScoreResponse,
)
from .stats import (
    paired_diff_analysis,
    poisson_binomial_pmf,
    poisson_binomial_pvalue,
    t_test,
)

__all__ = [
    "__version__",
    "AlternativeRecord", "Candidate", "ChoiceItem", "ChoiceSet", "CostBundle",
    "FitResult", "Gateway", "GatewayConfig", "GenRequest", "JudgeVerdict",
    "Message", "PairwiseRow", "RawUtterance", "ScoreRequest", "ScoreResponse",
    "SurprisalProfile", "Turn",
    "argmin_choice", "attach_history", "build_pairwise", "clean_utterance",
    "cost_bundle", "distribution_tests", "fit_conditional_logit",
    "fit_pairwise_logit", "gen_goal_agnostic", "gen_goal_directed",
    "goal_match_proportions", "length_cost", "lexical_overlap",
    "merge_and_filter", "paired_diff_analysis", "poisson_binomial_pmf",
    "poisson_binomial_pvalue", "rank1_summary", "rank_of_human", "reclassify",
    "select_targets", "softmax_choice", "stratified_sample", "surprisal_cost",
    "t_test", "uid_global_cost", "uid_local_cost", "verify_alignment",
    "word_surprisals",
]
