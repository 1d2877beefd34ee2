"""Zoom-shift study toolkit: lesion patch extraction, single-image GANs,
frozen-backbone probes, and the experiment grids measuring annotation shift."""

__version__ = "0.1.0"

from .records import (  # noqa: F401
    PATCH_SIZE,
    CLASS_ORDER,
    BiopsyLabel,
    BoundingBox,
    ClassLabel,
    LesionPatch,
    MammogramRecord,
    Modality,
    SplitAssignment,
    ZoomGroup,
    synthetic_provenance,
)
from .patches import (  # noqa: F401
    expand_bbox,
    extract_patch,
    lesion_patches,
    sample_healthy_patches,
    tight_bbox,
)
from .phantom import PhantomConfig, generate_phantom_dataset  # noqa: F401
from .splits import make_splits  # noqa: F401
from .sampling import weighted_sampler_weights  # noqa: F401
from .backbone import load_backbone, pooled_features  # noqa: F401
from .classifier import (  # noqa: F401
    TrainConfig,
    build_classifier,
    predict_labels,
    predict_proba,
    train_classifier,
)
from .metrics import (  # noqa: F401
    MetricsReport,
    accuracy,
    aggregate_folds,
    frechet_distance,
    roc_auc_ovr,
    sifid,
)
from .singan import SinGANConfig, SinGANModel, build_pyramid, train_singan  # noqa: F401
from .experiments import (  # noqa: F401
    Augmentation,
    EnsemblePredictor,
    ExperimentConfig,
    ExperimentRunner,
    RunnerSettings,
    assemble_augmented_trainset,
    default_shift_grid,
    ensemble_predict,
    oversample_images,
    random_resized_crop,
    run_augmentation_study,
    run_shift_grid,
)
from . import errors  # noqa: F401
