"""glare: black-box adversarial illumination attacks on image-text classifiers.

The toolkit searches, with a box-constrained CMA-ES, for point-light
configurations whose analytic relighting makes an embedding-based classifier
misrank an image's true label, while perceptual and light-separation
penalties keep the result looking plausible.
"""

from .attack import (
    AttackConfig,
    AttackResult,
    Prediction,
    run_attack,
    run_lights_sweep,
    run_random_baseline,
)
from .cmaes import BoxBounds, BoxedCmaes, StopCriteria, StrategyParams, bounds_for_attack, squash
from .errors import GlareError
from .lightfield import (
    ImageBuffer,
    LightMap,
    LightSource,
    LightingConfig,
    RenderParams,
    illuminance_at,
    relight,
    render_light_map,
)
from .objective import (
    LabelSet,
    LossBreakdown,
    LossWeights,
    adversarial_loss,
    distance_loss,
    fitness,
    perceptual_loss,
    similarity_vector,
)
from .persistence import (
    COCO30_LABELS,
    LabelList,
    load_image,
    load_labels,
    load_report,
    save_image,
    save_light_map,
    save_report,
)
from .providers import (
    LocalEmbeddingProvider,
    PyramidFeatureExtractor,
    RemoteEmbeddingProvider,
    RemoteEndpoint,
    local_embed_image,
    local_embed_texts,
    pyramid_features,
)
from .suite import SuiteCase, clean_truths, synthetic_suite

__version__ = "0.1.0"

__all__ = [
    "AttackConfig",
    "AttackResult",
    "BoxBounds",
    "BoxedCmaes",
    "COCO30_LABELS",
    "GlareError",
    "ImageBuffer",
    "LabelList",
    "LabelSet",
    "LightMap",
    "LightSource",
    "LightingConfig",
    "LocalEmbeddingProvider",
    "LossBreakdown",
    "LossWeights",
    "Prediction",
    "PyramidFeatureExtractor",
    "RemoteEmbeddingProvider",
    "RemoteEndpoint",
    "RenderParams",
    "StopCriteria",
    "StrategyParams",
    "SuiteCase",
    "adversarial_loss",
    "bounds_for_attack",
    "clean_truths",
    "distance_loss",
    "fitness",
    "illuminance_at",
    "load_image",
    "load_labels",
    "load_report",
    "local_embed_image",
    "local_embed_texts",
    "perceptual_loss",
    "pyramid_features",
    "relight",
    "render_light_map",
    "run_attack",
    "run_lights_sweep",
    "run_random_baseline",
    "save_image",
    "save_light_map",
    "save_report",
    "similarity_vector",
    "squash",
    "synthetic_suite",
]
