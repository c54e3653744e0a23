"""styleaug: style-transfer data augmentation with a desk-scale evaluation harness.

The package is organized as a small numpy library:

- `ops`: float32 layer primitives with exact gradients
- `network`: sequential CNN assembly, tagged activation capture, weight files
- `losses`: content / Gram-matrix style / total-variation losses
- `transfer`: iterative pixel-space image synthesis
- `imageio`: PNG round-trips, bilinear resize, rotation/flip augmentation
- `pipeline`: composite dataset building with rebuildable manifests
- `harness`: classifier training, TP/FP evaluation, repeated-run experiments
- `datagen`: the shipped synthetic benchmark generator
- `cli`: the `styleaug` command
"""

from .datagen import (
    adverse_image,
    benchmark_train_config,
    benchmark_transfer_config,
    clean_image,
    make_benchmark,
    negative_image,
    texture_swatch,
)
from .errors import (
    DecodeError,
    FormatError,
    InsufficientPool,
    MissingLayer,
    NumericError,
    ShapeMismatch,
    StepSizeError,
    StyleAugError,
    UnknownTag,
)
from .harness import (
    Cell,
    Classifier,
    EvalReport,
    RateSample,
    TrainConfig,
    classifier_spec,
    evaluate,
    iteration_ablation,
    load_dataset,
    run_experiment,
    train,
)
from .imageio import (
    AUGMENT_OPS,
    load_image,
    resize_bilinear,
    save_image,
    traditional_augment,
)
from .losses import (
    ContentTarget,
    LossParts,
    LossWeights,
    StyleTarget,
    content_loss,
    gram,
    style_energy,
    style_loss,
    total_loss,
    total_loss_parts,
    tv_loss,
)
from .network import (
    Network,
    NetworkSpec,
    WeightStore,
    default_network,
    default_spec,
    he_init_store,
    load_weights,
    save_weights,
)
from .pipeline import (
    AugmentationPlan,
    DatasetManifest,
    ManifestEntry,
    build_composite,
    build_composite_series,
    build_real_composite,
)
from .seeding import derive_seed, rng
from .transfer import (
    BatchItem,
    OptimizerConfig,
    TransferConfig,
    TransferResult,
    batch_synthesize,
    prepare_targets,
    synthesize,
)

__version__ = "0.1.0"

__all__ = [
    "AUGMENT_OPS",
    "AugmentationPlan",
    "BatchItem",
    "Cell",
    "Classifier",
    "ContentTarget",
    "DatasetManifest",
    "DecodeError",
    "EvalReport",
    "FormatError",
    "InsufficientPool",
    "LossParts",
    "LossWeights",
    "ManifestEntry",
    "MissingLayer",
    "Network",
    "NetworkSpec",
    "NumericError",
    "OptimizerConfig",
    "RateSample",
    "ShapeMismatch",
    "StepSizeError",
    "StyleAugError",
    "StyleTarget",
    "TrainConfig",
    "TransferConfig",
    "TransferResult",
    "UnknownTag",
    "WeightStore",
    "batch_synthesize",
    "adverse_image",
    "benchmark_train_config",
    "benchmark_transfer_config",
    "clean_image",
    "build_composite",
    "build_composite_series",
    "build_real_composite",
    "classifier_spec",
    "content_loss",
    "default_network",
    "default_spec",
    "derive_seed",
    "evaluate",
    "gram",
    "he_init_store",
    "iteration_ablation",
    "load_dataset",
    "load_image",
    "load_weights",
    "make_benchmark",
    "negative_image",
    "prepare_targets",
    "resize_bilinear",
    "rng",
    "run_experiment",
    "save_image",
    "save_weights",
    "style_energy",
    "style_loss",
    "synthesize",
    "texture_swatch",
    "total_loss",
    "total_loss_parts",
    "train",
    "traditional_augment",
    "tv_loss",
    "__version__",
]
