"""End-to-end attack loop and the unoptimized random baseline.

One run prepares the image/label pair (text embeddings and clean-image
features are computed once), then drives the sample/evaluate/update loop
against a provider, tracking the best candidate seen. The returned result
carries the optimized configuration, the relit image, the fitness trajectory
and the clean/adversarial predictions.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .cmaes import (
    BoxedCmaes,
    BoxTransform,
    StopCriteria,
    StrategyParams,
    bounds_for_attack,
    squash,
)
from .errors import EvaluationFaultError, InvalidArgumentError, TransportError
from .lightfield import ImageBuffer, LightingConfig, RenderParams, relight
from .objective import (
    LabelSet,
    LossBreakdown,
    LossWeights,
    adversarial_loss,
    breakdown,
    distance_loss,
    perceptual_loss,
    similarity_vector,
)
from .persistence import REPORT_SCHEMA_VERSION
from .providers import (
    EmbeddingProvider,
    LocalEmbeddingProvider,
    PyramidFeatureExtractor,
    RemoteEmbeddingProvider,
    RemoteEndpoint,
)

# A run aborts when more than this fraction of one iteration's candidates
# fault at the provider; isolated faults just rank last.
FAULT_ABORT_FRACTION = 0.25

STOP_BUDGET = "budget"


@dataclass(frozen=True)
class AttackConfig:
    """Run settings; the defaults are the experimental ones."""

    n_lights: int = 3
    population: int = 20
    max_iters: int = 200
    patience: int = 30
    min_delta: float = 1e-9
    alpha: float = 0.1
    beta: float = 0.01
    dist_threshold: float = 50.0
    ambient_gain: float = 0.6
    seed: int = 0
    provider: str = "local"
    endpoint: str | None = None
    lra_enabled: bool = False
    workers: int = 1

    def __post_init__(self) -> None:
        if self.n_lights < 1:
            raise InvalidArgumentError(f"n_lights must be >= 1, got {self.n_lights}")
        if self.max_iters < 0:
            raise InvalidArgumentError(f"max_iters must be >= 0, got {self.max_iters}")
        if self.workers < 1:
            raise InvalidArgumentError(f"workers must be >= 1, got {self.workers}")
        if self.provider not in ("local", "remote"):
            raise InvalidArgumentError(f"provider must be 'local' or 'remote', got {self.provider!r}")
        if self.provider == "remote" and not self.endpoint:
            raise InvalidArgumentError("remote provider needs an endpoint")

    def loss_weights(self) -> LossWeights:
        return LossWeights(alpha=self.alpha, beta=self.beta, dist_threshold=self.dist_threshold)

    def render_params(self) -> RenderParams:
        return RenderParams(ambient_gain=self.ambient_gain)


@dataclass(frozen=True)
class Prediction:
    label: str
    index: int
    similarity: float


@dataclass(frozen=True)
class IterationRecord:
    """One trajectory row: best-so-far fitness plus the iteration winner's terms."""

    iteration: int
    best_fitness: float
    best: LossBreakdown
    sigma: float


@dataclass(frozen=True)
class CandidateEval:
    config: LightingConfig
    result: LossBreakdown
    similarities: np.ndarray | None
    faulted: bool = False


@dataclass
class EvalContext:
    """Loop invariants shared by every candidate evaluation of one run."""

    transform: BoxTransform
    clean_image: ImageBuffer
    clean_features: list
    text_embeddings: np.ndarray
    truth_index: int
    weights: LossWeights
    render_params: RenderParams
    provider: EmbeddingProvider
    extractor: PyramidFeatureExtractor


@dataclass
class AttackResult:
    lambda_star: LightingConfig | None
    lambda_mean: LightingConfig | None
    adversarial_image: ImageBuffer
    trajectory: list[IterationRecord]
    clean_prediction: Prediction
    adversarial_prediction: Prediction
    success: bool
    evaluations: int
    stop_reason: str
    wall_ms: int
    faults: int
    seed: int
    config: AttackConfig
    n_draws: int | None = None

    def to_report(self) -> dict:
        """The run-report document (schema version 1)."""
        cfg = self.config
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "config": {
                "n_lights": cfg.n_lights,
                "population": cfg.population,
                "max_iters": cfg.max_iters,
                "patience": cfg.patience,
                "min_delta": cfg.min_delta,
                "alpha": cfg.alpha,
                "beta": cfg.beta,
                "dist_threshold": cfg.dist_threshold,
                "ambient_gain": cfg.ambient_gain,
                "seed": cfg.seed,
                "provider": cfg.provider,
                "endpoint": cfg.endpoint,
                "lra_enabled": cfg.lra_enabled,
                "workers": cfg.workers,
                "n_draws": self.n_draws,
            },
            "clean_prediction": _prediction_dict(self.clean_prediction),
            "adversarial_prediction": _prediction_dict(self.adversarial_prediction),
            "lambda_star": _vector_list(self.lambda_star),
            "lambda_mean": _vector_list(self.lambda_mean),
            "success": bool(self.success),
            "evaluations": int(self.evaluations),
            "faults": int(self.faults),
            "trajectory": [
                {
                    "iter": int(rec.iteration),
                    "best_fitness": float(rec.best_fitness),
                    "adv": float(rec.best.adv),
                    "pecp": float(rec.best.pecp),
                    "dis": float(rec.best.dis),
                    "sigma": float(rec.sigma),
                }
                for rec in self.trajectory
            ],
            "stop_reason": self.stop_reason,
            "seed": int(self.seed),
            "wall_ms": int(self.wall_ms),
        }


def _prediction_dict(pred: Prediction) -> dict:
    return {"label": pred.label, "index": int(pred.index), "similarity": float(pred.similarity)}


def _vector_list(cfg: LightingConfig | None) -> list[float]:
    if cfg is None:
        return []
    return [float(v) for v in cfg.as_vector()]


def make_provider(config: AttackConfig) -> EmbeddingProvider:
    if config.provider == "local":
        return LocalEmbeddingProvider()
    return RemoteEmbeddingProvider(RemoteEndpoint(base_url=config.endpoint or ""))


def evaluate_config(cfg: LightingConfig, ctx: EvalContext) -> CandidateEval:
    """Full loss evaluation of one lighting configuration.

    A provider transport fault yields an infinite fitness (the optimizer
    ranks it last) rather than an exception; the caller enforces the
    per-iteration fault budget.
    """
    relit = relight(ctx.clean_image, cfg, ctx.render_params)
    try:
        embedding = ctx.provider.embed_image(relit)
    except TransportError:
        return CandidateEval(
            config=cfg,
            result=LossBreakdown(adv=0.0, pecp=0.0, dis=0.0, fitness=float("inf")),
            similarities=None,
            faulted=True,
        )
    sims = similarity_vector(embedding, ctx.text_embeddings)
    adv = adversarial_loss(sims, ctx.truth_index)
    pecp = perceptual_loss(ctx.clean_features, ctx.extractor.extract(relit))
    dis = distance_loss(cfg, ctx.weights.dist_threshold)
    return CandidateEval(config=cfg, result=breakdown(adv, pecp, dis, ctx.weights), similarities=sims)


def evaluate_candidate(q: np.ndarray, ctx: EvalContext) -> CandidateEval:
    """Squash a search-space point into the box and evaluate it."""
    return evaluate_config(LightingConfig.from_vector(squash(q, ctx.transform)), ctx)


def _evaluate_population(
    configs: Sequence[LightingConfig], ctx: EvalContext, pool: ThreadPoolExecutor | None
) -> list[CandidateEval]:
    # Results join in sample-index order regardless of worker count.
    if pool is None:
        return [evaluate_config(cfg, ctx) for cfg in configs]
    return list(pool.map(lambda cfg: evaluate_config(cfg, ctx), configs))


def _argbest(evals: Sequence[CandidateEval]) -> int:
    best_idx = 0
    best_val = float("inf")
    for i, ev in enumerate(evals):
        if ev.result.fitness < best_val:
            best_idx, best_val = i, ev.result.fitness
    return best_idx


def _predict(sims: np.ndarray, labels: Sequence[str]) -> Prediction:
    idx = int(np.argmax(sims))
    return Prediction(label=labels[idx], index=idx, similarity=float(sims[idx]))


def _prepare(
    image: ImageBuffer,
    labels: Sequence[str],
    truth_index: int,
    config: AttackConfig,
    provider: EmbeddingProvider | None,
) -> tuple[LabelSet, EvalContext, Prediction]:
    label_set = LabelSet(labels=tuple(labels), truth_index=truth_index)
    if provider is None:
        provider = make_provider(config)
    extractor = PyramidFeatureExtractor()
    text_embeddings = provider.embed_texts(label_set.labels)
    bounds = bounds_for_attack(image.width, image.height, config.n_lights)
    ctx = EvalContext(
        transform=BoxTransform.from_bounds(bounds),
        clean_image=image,
        clean_features=extractor.extract(image),
        text_embeddings=text_embeddings,
        truth_index=truth_index,
        weights=config.loss_weights(),
        render_params=config.render_params(),
        provider=provider,
        extractor=extractor,
    )
    clean_sims = similarity_vector(provider.embed_image(image), text_embeddings)
    return label_set, ctx, _predict(clean_sims, label_set.labels)


def run_attack(
    image: ImageBuffer,
    labels: Sequence[str],
    truth_index: int,
    config: AttackConfig | None = None,
    provider: EmbeddingProvider | None = None,
    on_iteration: Callable[[int, LightingConfig], None] | None = None,
) -> AttackResult:
    """Optimize a lighting configuration that flips the prediction off the truth.

    `on_iteration(iteration, best_config)` fires after each generation with
    the best configuration seen so far (used for snapshot writing).
    """
    if config is None:
        config = AttackConfig()
    t0 = time.perf_counter()
    label_set, ctx, clean_pred = _prepare(image, labels, truth_index, config, provider)
    evaluations = 1

    engine = BoxedCmaes(
        bounds=bounds_for_attack(image.width, image.height, config.n_lights),
        params=StrategyParams.defaults(
            4 * config.n_lights, config.population, lra_enabled=config.lra_enabled
        ),
        criteria=StopCriteria(
            max_iters=config.max_iters, patience=config.patience, min_delta=config.min_delta
        ),
        seed=np.random.default_rng(config.seed),
    )

    pool = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    best: CandidateEval | None = None
    trajectory: list[IterationRecord] = []
    faults = 0
    try:
        while True:
            done, reason = engine.stop()
            if done:
                stop_reason = reason or "max_iters"
                break
            _, xs = engine.ask()
            configs = [LightingConfig.from_vector(x) for x in xs]
            evals = _evaluate_population(configs, ctx, pool)
            evaluations += len(evals)
            iteration_faults = sum(ev.faulted for ev in evals)
            faults += iteration_faults
            if iteration_faults > FAULT_ABORT_FRACTION * len(evals):
                raise EvaluationFaultError(
                    f"{iteration_faults}/{len(evals)} candidates faulted at iteration "
                    f"{engine.state.iteration + 1}"
                )
            snap = engine.tell([ev.result.fitness for ev in evals])
            champion = evals[_argbest(evals)]
            if best is None or champion.result.fitness < best.result.fitness:
                best = champion
            trajectory.append(
                IterationRecord(
                    iteration=snap.iteration,
                    best_fitness=snap.best_fitness,
                    best=champion.result,
                    sigma=snap.sigma,
                )
            )
            if on_iteration is not None and best is not None:
                on_iteration(snap.iteration, best.config)
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    if best is None:
        adversarial_image = image
        adversarial_pred = clean_pred
        lambda_star = None
        lambda_mean = None
    else:
        lambda_star = best.config
        lambda_mean = LightingConfig.from_vector(squash(engine.state.mean, ctx.transform))
        adversarial_image = relight(image, lambda_star, ctx.render_params)
        assert best.similarities is not None
        adversarial_pred = _predict(best.similarities, label_set.labels)

    wall_ms = int(round((time.perf_counter() - t0) * 1000))
    return AttackResult(
        lambda_star=lambda_star,
        lambda_mean=lambda_mean,
        adversarial_image=adversarial_image,
        trajectory=trajectory,
        clean_prediction=clean_pred,
        adversarial_prediction=adversarial_pred,
        success=adversarial_pred.index != truth_index,
        evaluations=evaluations,
        stop_reason=stop_reason,
        wall_ms=wall_ms,
        faults=faults,
        seed=config.seed,
        config=config,
    )


def run_random_baseline(
    image: ImageBuffer,
    labels: Sequence[str],
    truth_index: int,
    config: AttackConfig | None = None,
    n_draws: int | None = None,
) -> AttackResult:
    """Sample configurations uniformly inside the bounds and keep the best.

    The matched-budget baseline uses n_draws = population * max_iters, the
    same number of candidate evaluations the optimizer would spend.
    """
    if config is None:
        config = AttackConfig()
    if n_draws is None:
        n_draws = config.population * config.max_iters
    if n_draws < 1:
        raise InvalidArgumentError(f"n_draws must be >= 1, got {n_draws}")
    t0 = time.perf_counter()
    label_set, ctx, clean_pred = _prepare(image, labels, truth_index, config, None)

    bounds = bounds_for_attack(image.width, image.height, config.n_lights)
    rng = np.random.default_rng(config.seed)
    draws = rng.uniform(bounds.lo, bounds.hi, size=(n_draws, bounds.dim))

    best: CandidateEval | None = None
    best_fitness = float("inf")
    trajectory: list[IterationRecord] = []
    faults = 0
    for i in range(n_draws):
        ev = evaluate_config(LightingConfig.from_vector(draws[i]), ctx)
        if ev.faulted:
            faults += 1
        if ev.result.fitness < best_fitness:
            best, best_fitness = ev, ev.result.fitness
        trajectory.append(
            IterationRecord(
                iteration=i + 1, best_fitness=best_fitness, best=ev.result, sigma=0.0
            )
        )
    if best is None or best.similarities is None:
        raise EvaluationFaultError("every baseline draw faulted at the provider")

    adversarial_image = relight(image, best.config, ctx.render_params)
    adversarial_pred = _predict(best.similarities, label_set.labels)
    wall_ms = int(round((time.perf_counter() - t0) * 1000))
    return AttackResult(
        lambda_star=best.config,
        lambda_mean=None,
        adversarial_image=adversarial_image,
        trajectory=trajectory,
        clean_prediction=clean_pred,
        adversarial_prediction=adversarial_pred,
        success=adversarial_pred.index != truth_index,
        evaluations=n_draws + 1,
        stop_reason=STOP_BUDGET,
        wall_ms=wall_ms,
        faults=faults,
        seed=config.seed,
        config=config,
        n_draws=n_draws,
    )


def run_lights_sweep(
    cases: Sequence[tuple[ImageBuffer, int]],
    labels: Sequence[str],
    config: AttackConfig | None = None,
    settings: Sequence[int] = (1, 2, 3, 4),
) -> dict[int, float]:
    """Success rate of the attack per light-count setting over (image, truth) cases."""
    if config is None:
        config = AttackConfig()
    rates: dict[int, float] = {}
    for n in settings:
        sweep_config = replace(config, n_lights=n)
        wins = sum(
            run_attack(img, labels, truth, sweep_config).success for img, truth in cases
        )
        rates[n] = wins / len(cases)
    return rates
