"""Photo clutter detection and removal.

Per-element counterfactual scoring (blur an element, re-score the photo,
measure the gap), clutter classification by the sign of the contribution,
removal suggestions, and confidence-gated iterative inpainting — plus the
training harness and an HTTP service for the interactive viewfinder UI.
"""

from .errors import (
    BackendUnavailableError,
    CheckpointError,
    EmptySceneError,
    ProtocolError,
)
from .imaging import (
    ElementMask,
    GaussianKernel,
    MaskSet,
    apply_mask_complement,
    blur_element,
    build_gaussian_kernel,
    composite,
    load_image,
    save_image,
)
from .inpaint import (
    Discriminator,
    Generator,
    InpaintResult,
    generate,
    iterative_inpaint,
    load_inpaint_checkpoint,
    loss_confidence,
    loss_discriminator,
    loss_generator,
    save_inpaint_checkpoint,
    tiled_generate,
)
from .policy import (
    ClutterSelection,
    OverrideLedger,
    Suggestion,
    SuggestionPolicy,
    effective_categories,
    select_clutter,
    suggest,
)
from .rle import decode_rle, encode_rle
from .scoring import (
    ElementScores,
    MixingWeights,
    SceneAssessment,
    ScoreModel,
    TinyBackbone,
    aggregate_scores,
    analyze_scene,
    contributions,
    extract_features,
    load_score_checkpoint,
    mixing_weights,
    save_score_checkpoint,
    score_element,
    total_loss,
    weights_from_logits,
)
from .segmentation import ExternalSegmenter, SyntheticSegmenter, validate_mask_set
from .service import ServiceConfig, create_app
from .synthetic import (
    PlantedScene,
    make_inpaint_corpus,
    make_planted_dataset,
    make_planted_scene,
    recovery_experiment,
    sign_recovery_accuracy,
)
from .training import (
    ScoreDatasetRecord,
    StrokeMaskSpec,
    TrainingConfig,
    clip_gradients,
    early_stop_check,
    ingest_score_dataset,
    random_stroke_mask,
    train_inpaint_model,
    train_score_model,
)

__version__ = "0.1.0"
