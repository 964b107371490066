"""jitrisk: just-in-time defect risk at the commit and line level.

Pipeline: parse commit diffs into bag-of-tokens features, rebalance the
training set with DE-tuned SMOTE, fit a random forest, rank test commits
by effort-normalized defect density, and rank the lines inside a risky
commit with a local surrogate explainer.
"""

from .dataset import (
    CommitRecord,
    FileChange,
    FixLink,
    ParseError,
    Split,
    ValidationError,
    label_defective_lines,
    load_commits,
    load_fix_links,
    parse_unified_diff,
    resolve_split,
    time_split,
)
from .features import (
    FeatureMatrix,
    Vocabulary,
    assemble_feature_matrix,
    build_vocabulary,
    extract_bag_of_tokens,
    tokenize_line,
)
from .rebalance import (
    DEConfig,
    SmoteConfig,
    de_optimize,
    minkowski_distance,
    smote_oversample,
    tune_and_rebalance,
)
from .forest import (
    ForestModel,
    Tree,
    classify,
    fit_forest,
    fit_tree,
    load_model,
    predict_proba,
    predict_proba_batch,
    save_model,
)
from .explain import (
    LineExplanation,
    RankedCommit,
    SurrogateConfig,
    defect_density,
    explain_commit,
    k_lasso,
    kernel_weight,
    perturb_samples,
    rank_commits,
)
from .evaluate import (
    EvalReport,
    auc,
    cliffs_delta,
    confusion_metrics,
    distance_to_heaven,
    effort_at_recall,
    f1_score,
    line_metrics,
    pci_at_effort,
    popt,
    wilcoxon_signed_rank,
)

__version__ = "0.1.0"
