"""geoforge: generative-engine visibility scoring, preference-rule mining,
rule-guided rewriting, reward arithmetic, and evaluation."""

from .answers import (
    AnswerDocument,
    Sentence,
    VisibilityScore,
    compute_visibility,
    outcome_reward,
    parse_citations,
    select_extreme_pair,
)
from .corpus import (
    Dataset,
    Document,
    QueryRecord,
    Split,
    curate_commercial_queries,
    load_dataset,
    write_dataset,
)
from .errors import GeoforgeError, ValidationError
from .evaluation import (
    EvalReport,
    KeywordSet,
    RewriteMethod,
    citation_recall,
    jaccard_overlap,
    judged_metric,
    run_evaluation,
)
from .gateway import (
    ChatRequest,
    Gateway,
    HTTPBackend,
    MockBackend,
    ReplayBackend,
    Transcript,
    estimate_tokens,
    generate_answer,
    request_hash,
)
from .rewards import (
    AttackMode,
    ColdStartPair,
    GroupSample,
    GrpoConfig,
    RewardBreakdown,
    RewriteCandidate,
    cold_start_filter,
    grpo_loss,
    group_reward,
    inject_adversarial,
    kl_estimate,
    rewrite_document,
    rule_reward,
    semantic_reward,
)
from .rules import (
    Explanation,
    Insight,
    RuleSet,
    explain_pair,
    extract_insights,
    extract_rules,
    filter_rule,
    hierarchical_merge,
)

__version__ = "0.1.0"
