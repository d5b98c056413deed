"""gazepred: token-level eye-tracking feature prediction.

A numpy library (plus a small CLI) that predicts the five per-token gaze
measures nFix, FFD, GPT, TRT and fixProp from sentences: engineered
linguistic features, a two-path neural network with hand-derived and
finite-difference-verified gradients, and a reproducible training,
evaluation and ablation harness.
"""

from .corpus import (
    Corpus,
    GazeTargets,
    Sentence,
    TARGET_NAMES,
    Token,
    load_corpus,
    split_train_val,
    write_predictions,
)
from .errors import (
    ConfigError,
    GazePredError,
    NumericalError,
    ParseError,
    SchemaError,
    ValidationError,
)
from .evaluation import (
    AblationReport,
    Metrics,
    evaluate,
    group_stats,
    mae,
    r2,
    run_ablation,
    scatter_data,
    target_correlations,
)
from .features import (
    COLLAPSED_TAGS,
    FEATURE_COLUMNS,
    FEATURE_GROUPS,
    FeatureMatrix,
    LexiconTagger,
    RuleLemmatizer,
    SidecarLemmatizer,
    SidecarTagger,
    build_feature_matrix,
    collapse_pos_tag,
    compute_tfidf,
    is_endword,
    is_number,
    is_stopword,
    lemma_len_diff,
    pos_onehot,
    word_len,
)
from .model import (
    EmbeddingTable,
    ModelConfig,
    Pipeline,
    SidecarEmbeddings,
    SigmoidScalingWarning,
    TwoPathModel,
    load_embeddings,
    predict,
    random_embeddings,
)
from .checkpoint import load_bundle, load_tensors, manifest_hash, save_bundle, save_tensors
from .training import (
    EarlyStopper,
    TrainConfig,
    TrainHistory,
    TrainResult,
    loss_and_grad,
    make_batches,
    restore_best,
    train,
)
from .transforms import (
    ScalerParams,
    apply_scaler,
    fit_scaler,
    gpt_to_residual,
    invert_scaler,
    residual_to_gpt,
)

__version__ = "0.1.0"
