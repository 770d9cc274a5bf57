"""Optional real-model smoke check (needs network weights and labeled images).

Set GLARE_SMOKE_IMAGE_DIR to a directory of PNGs named `<label>__*.png`
(labels from the builtin coco30 list) to run it; with at least 20 images the
attack must cut top-1 clean accuracy by 15 percentage points or more.
"""

import os
from pathlib import Path

import numpy as np
import pytest

from glare.attack import AttackConfig, run_attack
from glare.objective import similarity_vector
from glare.persistence import COCO30_LABELS, load_image

IMAGE_DIR_VAR = "GLARE_SMOKE_IMAGE_DIR"
MIN_IMAGES = 20
MIN_ACCURACY_DROP = 0.15


def _load_real_encoder():
    from glare_sidecar.encoders import RealEncoder

    return RealEncoder()


@pytest.mark.skipif(IMAGE_DIR_VAR not in os.environ, reason=f"{IMAGE_DIR_VAR} not set")
def test_attack_drops_real_model_accuracy():
    try:
        encoder = _load_real_encoder()
    except Exception as exc:
        pytest.skip(f"real encoder unavailable: {exc}")

    image_dir = Path(os.environ[IMAGE_DIR_VAR])
    cases = []
    for path in sorted(image_dir.glob("*.png")):
        label = path.stem.split("__", 1)[0].replace("_", " ")
        if label in COCO30_LABELS:
            cases.append((load_image(str(path)), COCO30_LABELS.index(label)))
    if len(cases) < MIN_IMAGES:
        pytest.skip(f"need at least {MIN_IMAGES} labeled images, found {len(cases)}")

    class EncoderProvider:
        name = encoder.name
        embedding_dim = encoder.dim

        def embed_image(self, img):
            from glare.providers import image_png_bytes

            return np.asarray(encoder.embed_image_png(image_png_bytes(img)))

        def embed_texts(self, labels):
            return np.asarray(encoder.embed_texts(list(labels)))

    provider = EncoderProvider()
    text_embeddings = provider.embed_texts(COCO30_LABELS)

    clean_hits = 0
    adv_hits = 0
    for i, (image, truth) in enumerate(cases):
        sims = similarity_vector(provider.embed_image(image), text_embeddings)
        clean_hits += int(np.argmax(sims)) == truth
        result = run_attack(image, COCO30_LABELS, truth, AttackConfig(seed=i), provider=provider)
        adv_hits += result.adversarial_prediction.index == truth

    clean_acc = clean_hits / len(cases)
    adv_acc = adv_hits / len(cases)
    print(f"clean top-1 {clean_acc:.0%}, adversarial top-1 {adv_acc:.0%}")
    assert clean_acc - adv_acc >= MIN_ACCURACY_DROP
