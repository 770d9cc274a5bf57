"""Box-constrained CMA-ES engine.

The search runs in an unconstrained space q; candidates map into the feasible
box through a per-coordinate tanh squash, so every evaluated point is strictly
inside the bounds. Each generation samples K candidates from N(mean, cov *
sigma^2), ranks fitness ascending, recombines the best `parents` samples with
log-rank weights, refreshes the covariance from elite deviations around the
old mean, and adapts the scalar step size from the evolution path. An
optional extra multiplicative step-size factor exp(c_sigma / |path|) can be
enabled on top; it is off by default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidArgumentError, NumericalError

# The extra step-size factor diverges as the path norm vanishes; the norm is
# floored and the factor capped so the update stays finite.
LRA_NORM_FLOOR = 1e-3
LRA_MAX_FACTOR = 10.0

EIGEN_FLOOR_SCALE = 1e-10

STOP_MAX_ITERS = "max_iters"
STOP_STAGNATION = "stagnation"

# Attack search box per light: x in [0, W], y in [0, H], and fixed
# intensity/radius ranges.
INTENSITY_RANGE = (0.5, 1.0)
RADIUS_RANGE = (10.0, 50.0)


@dataclass(frozen=True)
class BoxBounds:
    """Per-coordinate feasible interval, lo[k] < hi[k]."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self) -> None:
        lo = np.asarray(self.lo, dtype=np.float64).ravel()
        hi = np.asarray(self.hi, dtype=np.float64).ravel()
        if lo.size == 0 or lo.shape != hi.shape:
            raise InvalidArgumentError(f"bounds shapes differ: {lo.shape} vs {hi.shape}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InvalidArgumentError("bounds must be finite")
        if not np.all(lo < hi):
            raise InvalidArgumentError("every lower bound must be strictly below its upper bound")
        lo, hi = lo.copy(), hi.copy()
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size


@dataclass(frozen=True)
class BoxTransform:
    """Squash parameters: half-widths and midpoints of the feasible box."""

    half_width: np.ndarray
    midpoint: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def from_bounds(cls, bounds: BoxBounds) -> "BoxTransform":
        return cls(
            half_width=(bounds.hi - bounds.lo) / 2.0,
            midpoint=(bounds.hi + bounds.lo) / 2.0,
            lo=bounds.lo,
            hi=bounds.hi,
        )

    @property
    def dim(self) -> int:
        return self.half_width.size


def bounds_for_attack(image_width: int, image_height: int, n_lights: int) -> BoxBounds:
    """Search box for n_lights point lights over a width x height image."""
    if image_width <= 0 or image_height <= 0:
        raise InvalidArgumentError(f"image dimensions must be positive, got {image_width}x{image_height}")
    if n_lights < 1:
        raise InvalidArgumentError(f"need at least one light, got {n_lights}")
    lo = np.tile([0.0, 0.0, INTENSITY_RANGE[0], RADIUS_RANGE[0]], n_lights)
    hi = np.tile([float(image_width), float(image_height), INTENSITY_RANGE[1], RADIUS_RANGE[1]], n_lights)
    return BoxBounds(lo=lo, hi=hi)


def squash(q: np.ndarray, transform: BoxTransform) -> np.ndarray:
    """Map unconstrained coordinates strictly inside the box.

    out = half_width * tanh(q) + midpoint, nudged one float step inside the
    bounds where tanh saturates, so the result is strictly inside (lo, hi)
    for every finite q.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape[-1] != transform.dim:
        raise InvalidArgumentError(f"expected trailing dimension {transform.dim}, got shape {q.shape}")
    out = transform.half_width * np.tanh(q) + transform.midpoint
    inner_lo = np.nextafter(transform.lo, transform.hi)
    inner_hi = np.nextafter(transform.hi, transform.lo)
    return np.clip(out, inner_lo, inner_hi)


def _default_weights(parents: int) -> np.ndarray:
    raw = np.log(parents + 0.5) - np.log(np.arange(1, parents + 1, dtype=np.float64))
    return raw / raw.sum()


def chi_norm(dim: int) -> float:
    """Closed-form approximation of E[norm of a d-dimensional standard normal]."""
    return math.sqrt(dim) * (1.0 - 1.0 / (4.0 * dim) + 1.0 / (21.0 * dim * dim))


@dataclass(frozen=True)
class StrategyParams:
    """Population shape, selection weights, and learning rates.

    `defaults` derives everything from the dimension: half the population as
    parents with normalized log-rank weights, and the usual dimension-based
    learning rates for the step-size path and the covariance refresh.
    """

    population: int
    parents: int
    weights: np.ndarray
    c_cov: float
    c_sigma: float
    chi_dim: float
    lra_enabled: bool = False

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        if self.population < 2:
            raise InvalidArgumentError(f"population must be >= 2, got {self.population}")
        if not (1 <= self.parents <= self.population):
            raise InvalidArgumentError(
                f"parents must be in [1, {self.population}], got {self.parents}"
            )
        if w.size != self.parents or np.any(w <= 0) or np.any(np.diff(w) > 0):
            raise InvalidArgumentError("weights must be positive and non-increasing, one per parent")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError(f"weights must sum to 1, got {w.sum()}")
        if not (0.0 < self.c_cov <= 1.0 and 0.0 < self.c_sigma <= 1.0):
            raise InvalidArgumentError("learning rates must lie in (0, 1]")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def defaults(cls, dim: int, population: int = 20, lra_enabled: bool = False) -> "StrategyParams":
        if dim < 1:
            raise InvalidArgumentError(f"dimension must be >= 1, got {dim}")
        parents = max(1, population // 2)
        weights = _default_weights(parents)
        mu_eff = 1.0 / float(np.sum(weights**2))
        c_sigma = (mu_eff + 2.0) / (dim + mu_eff + 5.0)
        # Rank-weighted covariance learning rate; stays positive down to a
        # single parent and well below 1 in the dimensions used here.
        c_cov = min(1.0, 2.0 * (0.25 + mu_eff + 1.0 / mu_eff - 2.0) / ((dim + 2.0) ** 2 + mu_eff))
        return cls(
            population=population,
            parents=parents,
            weights=weights,
            c_cov=c_cov,
            c_sigma=c_sigma,
            chi_dim=chi_norm(dim),
            lra_enabled=lra_enabled,
        )

    @property
    def mu_eff(self) -> float:
        return 1.0 / float(np.sum(self.weights**2))


@dataclass(frozen=True)
class StopCriteria:
    """Iteration budget plus the stagnation rule for early stopping."""

    max_iters: int
    patience: int = 30
    min_delta: float = 1e-9

    def __post_init__(self) -> None:
        if self.max_iters < 0:
            raise InvalidArgumentError(f"max_iters must be >= 0, got {self.max_iters}")
        if self.patience < 1:
            raise InvalidArgumentError(f"patience must be >= 1, got {self.patience}")
        if self.min_delta < 0 or not math.isfinite(self.min_delta):
            raise InvalidArgumentError(f"min_delta must be finite and >= 0, got {self.min_delta}")


@dataclass
class SearchState:
    """The search distribution plus progress bookkeeping."""

    mean: np.ndarray
    cov: np.ndarray
    sigma: float
    path: np.ndarray
    iteration: int = 0
    best_fitness: float = math.inf
    stagnation: int = 0

    @classmethod
    def initial(cls, dim: int) -> "SearchState":
        return cls(
            mean=np.zeros(dim),
            cov=np.eye(dim),
            sigma=1.0,
            path=np.zeros(dim),
        )


def repair_covariance(cov: np.ndarray) -> np.ndarray:
    """Symmetrize and floor the eigenvalues so Cholesky stays feasible."""
    sym = (cov + cov.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(sym)
    floor = EIGEN_FLOOR_SCALE * np.trace(sym) / sym.shape[0]
    if np.all(eigvals >= floor):
        return sym
    eigvals = np.maximum(eigvals, floor)
    repaired = eigvecs @ np.diag(eigvals) @ eigvecs.T
    return (repaired + repaired.T) / 2.0


def sample_population(
    state: SearchState, params: StrategyParams, rng: np.random.Generator
) -> np.ndarray:
    """Draw K candidates q_i = mean + sigma * chol(cov) @ xi_i, shape (K, dim).

    Standard-normal draws come out of the generator in sample-index order, so
    a fixed seed reproduces the population exactly.
    """
    try:
        chol = np.linalg.cholesky(state.cov)
    except np.linalg.LinAlgError:
        try:
            chol = np.linalg.cholesky(repair_covariance(state.cov))
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"covariance factorization failed at iteration {state.iteration}"
            ) from exc
    draws = rng.standard_normal((params.population, state.mean.size))
    return state.mean + state.sigma * (draws @ chol.T)


def rank(fitness_values: Sequence[float] | np.ndarray) -> np.ndarray:
    """Ascending stable sort of sample indices; non-finite values rank last.

    Ties break toward the lower original index. If every value is non-finite
    there is nothing to select from and the population is invalid.
    """
    f = np.asarray(fitness_values, dtype=np.float64).ravel()
    if f.size == 0:
        raise InvalidArgumentError("fitness list is empty")
    finite = np.isfinite(f)
    if not finite.any():
        raise InvalidArgumentError("every candidate fitness is non-finite")
    keyed = np.where(finite, f, np.inf)
    return np.argsort(keyed, kind="stable")


def update_mean(q_sorted: np.ndarray, params: StrategyParams) -> np.ndarray:
    """Weighted recombination of the best `parents` samples."""
    if q_sorted.shape[0] < params.parents:
        raise InvalidArgumentError(
            f"need at least {params.parents} ranked samples, got {q_sorted.shape[0]}"
        )
    return params.weights @ q_sorted[: params.parents]


def update_covariance(
    state: SearchState, q_sorted: np.ndarray, old_mean: np.ndarray, params: StrategyParams
) -> np.ndarray:
    """Blend the covariance toward elite deviations around the previous mean.

    Deviations are divided by the pre-update step size so the covariance
    carries shape only while sigma carries scale; blending raw deviations
    would fold sigma^2 into the covariance every generation and overflow it
    whenever the step size sits above 1 for long stretches.
    """
    elites = q_sorted[: params.parents]
    dev = (elites - old_mean) / state.sigma
    rank_update = (dev * params.weights[:, np.newaxis]).T @ dev
    blended = (1.0 - params.c_cov) * state.cov + params.c_cov * rank_update
    return repair_covariance(blended)


def update_path(
    state: SearchState,
    new_mean: np.ndarray,
    old_mean: np.ndarray,
    params: StrategyParams,
) -> np.ndarray:
    """Exponentially smoothed, whitened trail of mean displacements.

    Whitening uses the pre-update covariance; the displacement is divided by
    the pre-update step size, the standard cumulative step-size recursion.
    """
    eigvals, eigvecs = np.linalg.eigh(state.cov)
    if np.any(eigvals <= 0):
        raise NumericalError(f"covariance not positive definite at iteration {state.iteration}")
    inv_sqrt = eigvecs @ np.diag(1.0 / np.sqrt(eigvals)) @ eigvecs.T
    whitened = inv_sqrt @ (new_mean - old_mean) / state.sigma
    c = params.c_sigma
    return (1.0 - c) * state.path + math.sqrt(c * (2.0 - c) * params.mu_eff) * whitened


def update_step_size(state: SearchState, params: StrategyParams) -> float:
    """Multiplicative step-size update from the refreshed path norm."""
    ratio = float(np.linalg.norm(state.path)) / params.chi_dim
    return state.sigma * math.exp(params.c_sigma * (ratio - 1.0))


def lra_adapt(state: SearchState, params: StrategyParams) -> float:
    """Extra multiplicative factor exp(c_sigma / |path|), floored and capped."""
    norm = max(float(np.linalg.norm(state.path)), LRA_NORM_FLOOR)
    factor = min(math.exp(params.c_sigma / norm), LRA_MAX_FACTOR)
    return state.sigma * factor


def should_stop(state: SearchState, criteria: StopCriteria) -> tuple[bool, str | None]:
    """Stop on an exhausted iteration budget or a stagnant best fitness."""
    if state.iteration >= criteria.max_iters:
        return True, STOP_MAX_ITERS
    if state.stagnation >= criteria.patience:
        return True, STOP_STAGNATION
    return False, None


@dataclass(frozen=True)
class IterationSnapshot:
    """Distribution summary emitted after each generation."""

    iteration: int
    mean: np.ndarray
    cov_diag: np.ndarray
    sigma: float
    best_fitness: float


@dataclass
class MinimizeResult:
    best_x: np.ndarray
    best_fitness: float
    iterations: int
    evaluations: int
    stop_reason: str
    history: list[float] = field(default_factory=list)


class BoxedCmaes:
    """Ask/tell driver around the update rules above.

    `ask` returns the next population both in search space and squashed into
    the box; `tell` applies one generation of updates. Fitness results must
    arrive in sample-index order, which keeps trajectories seed-deterministic
    no matter how evaluations were parallelized.
    """

    def __init__(
        self,
        bounds: BoxBounds,
        params: StrategyParams | None = None,
        criteria: StopCriteria | None = None,
        seed: int | np.random.Generator = 0,
    ):
        self.bounds = bounds
        self.transform = BoxTransform.from_bounds(bounds)
        self.params = params if params is not None else StrategyParams.defaults(bounds.dim)
        self.criteria = criteria if criteria is not None else StopCriteria(max_iters=200)
        self.rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.state = SearchState.initial(bounds.dim)
        self.best_q: np.ndarray | None = None
        self.best_index: int | None = None
        self.evaluations = 0
        self._pending: np.ndarray | None = None

    def stop(self) -> tuple[bool, str | None]:
        return should_stop(self.state, self.criteria)

    def ask(self) -> tuple[np.ndarray, np.ndarray]:
        """Sample the next population; returns (q, squashed) of shape (K, dim)."""
        if self._pending is not None:
            raise InvalidArgumentError("tell() must consume the previous population first")
        q = sample_population(self.state, self.params, self.rng)
        self._pending = q
        return q, squash(q, self.transform)

    def tell(self, fitness_values: Sequence[float] | np.ndarray) -> IterationSnapshot:
        """Apply one generation of updates given fitness in sample-index order."""
        if self._pending is None:
            raise InvalidArgumentError("ask() must run before tell()")
        q = self._pending
        self._pending = None
        f = np.asarray(fitness_values, dtype=np.float64).ravel()
        if f.size != q.shape[0]:
            raise InvalidArgumentError(f"expected {q.shape[0]} fitness values, got {f.size}")

        order = rank(f)
        q_sorted = q[order]
        state = self.state

        old_mean = state.mean
        new_mean = update_mean(q_sorted, self.params)
        new_path = update_path(state, new_mean, old_mean, self.params)
        new_cov = update_covariance(state, q_sorted, old_mean, self.params)

        state.mean = new_mean
        state.path = new_path
        state.cov = new_cov
        new_sigma = update_step_size(state, self.params)
        state.sigma = new_sigma
        if self.params.lra_enabled:
            state.sigma = lra_adapt(state, self.params)

        best_idx = int(order[0])
        best_f = float(f[best_idx])
        improvement = state.best_fitness - best_f
        if best_f < state.best_fitness:
            state.best_fitness = best_f
            self.best_q = q[best_idx].copy()
            self.best_index = best_idx
        if improvement < self.criteria.min_delta:
            state.stagnation += 1
        else:
            state.stagnation = 0

        state.iteration += 1
        self.evaluations += q.shape[0]
        return IterationSnapshot(
            iteration=state.iteration,
            mean=state.mean.copy(),
            cov_diag=np.diag(state.cov).copy(),
            sigma=state.sigma,
            best_fitness=state.best_fitness,
        )

    @property
    def best_x(self) -> np.ndarray | None:
        """Best evaluated candidate mapped into the box."""
        if self.best_q is None:
            return None
        return squash(self.best_q, self.transform)

    def minimize(
        self,
        objective: Callable[[np.ndarray], float],
        callback: Callable[[IterationSnapshot], None] | None = None,
    ) -> MinimizeResult:
        """Run the full loop against a box-space objective."""
        history: list[float] = []
        reason = STOP_MAX_ITERS
        while True:
            done, why = self.stop()
            if done:
                reason = why or STOP_MAX_ITERS
                break
            _, xs = self.ask()
            fitness_values = [float(objective(x)) for x in xs]
            snap = self.tell(fitness_values)
            history.append(snap.best_fitness)
            if callback is not None:
                callback(snap)
        best_x = self.best_x
        return MinimizeResult(
            best_x=best_x if best_x is not None else squash(self.state.mean, self.transform),
            best_fitness=self.state.best_fitness,
            iterations=self.state.iteration,
            evaluations=self.evaluations,
            stop_reason=reason,
            history=history,
        )
