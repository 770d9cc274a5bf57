"""Stub-mode parity: attacks through the sidecar reproduce local runs exactly."""

import threading
import time

import numpy as np
import pytest
import uvicorn

from glare.attack import AttackConfig, run_attack
from glare.persistence import COCO30_LABELS, report_to_bytes
from glare.providers import LocalEmbeddingProvider, RemoteEmbeddingProvider, RemoteEndpoint
from glare.suite import clean_truths, synthetic_suite
from glare_sidecar.app import SidecarConfig, create_app


@pytest.fixture(scope="module")
def sidecar_url():
    server = uvicorn.Server(
        uvicorn.Config(
            create_app(SidecarConfig(mode="stub")), host="127.0.0.1", port=0, log_level="warning"
        )
    )
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("sidecar did not start")
        time.sleep(0.02)
    host, port = server.servers[0].sockets[0].getsockname()[:2]
    yield f"http://{host}:{port}"
    server.should_exit = True
    thread.join(timeout=5)


def test_health_via_http(sidecar_url):
    provider = RemoteEmbeddingProvider(RemoteEndpoint(sidecar_url))
    assert provider.name == "stub"
    assert provider.embedding_dim == 96


def test_embeddings_match_local_bitwise(sidecar_url):
    provider = RemoteEmbeddingProvider(RemoteEndpoint(sidecar_url))
    local = LocalEmbeddingProvider()
    case = synthetic_suite(count=1)[0]
    np.testing.assert_array_equal(provider.embed_image(case.image), local.embed_image(case.image))
    np.testing.assert_array_equal(
        provider.embed_texts(COCO30_LABELS), local.embed_texts(COCO30_LABELS)
    )


def test_attack_trajectory_bit_identical_to_local(sidecar_url):
    cases = synthetic_suite(count=3)
    local_provider = LocalEmbeddingProvider()
    truths = clean_truths(cases, local_provider, COCO30_LABELS)
    image, truth = cases[2].image, truths[2]

    local_cfg = AttackConfig(seed=31415, max_iters=25, patience=1000)
    remote_cfg = AttackConfig(
        seed=31415, max_iters=25, patience=1000, provider="remote", endpoint=sidecar_url
    )
    local_run = run_attack(image, COCO30_LABELS, truth, local_cfg, provider=local_provider)
    remote_run = run_attack(
        image, COCO30_LABELS, truth,
        remote_cfg,
        provider=RemoteEmbeddingProvider(RemoteEndpoint(sidecar_url)),
    )

    local_report = local_run.to_report()
    remote_report = remote_run.to_report()
    # Equal apart from wall time and the provider fields of the config echo.
    local_report["wall_ms"] = remote_report["wall_ms"] = 0
    local_report["config"]["provider"] = remote_report["config"]["provider"]
    local_report["config"]["endpoint"] = remote_report["config"]["endpoint"]
    assert report_to_bytes(local_report) == report_to_bytes(remote_report)

    assert local_run.lambda_star == remote_run.lambda_star
    np.testing.assert_array_equal(
        local_run.adversarial_image.values, remote_run.adversarial_image.values
    )
