"""Weight search for the constraint projection objective.

Sequential model-based optimization over (lambda_dev, lambda_smooth) on a
log-uniform space, minimizing the deviation cost reported by csm.enforce.
The sampler is a Tree-structured Parzen Estimator: past trials are split
into a good and a bad set at a cost quantile, univariate Gaussian KDEs are
fit to each set in log10 space, and the next point maximizes the density
ratio good/bad among candidates drawn from the good-set KDE.
"""

from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import csm, qp
from .model import RobotProfile, Scene, Trajectory, flatten
from .validation import check_profile, check_scene, check_trajectory

__all__ = [
    "EmptySpace",
    "SearchSpace",
    "TrialRecord",
    "TpeConfig",
    "tpe_suggest",
    "tune",
    "TpeWeightSearch",
]

# additive cost penalty for trials whose projection did not reach Optimal
INFEASIBLE_PENALTY = 1e6


class EmptySpace(ValueError):
    pass


def _default_bounds() -> dict[str, tuple[float, float]]:
    return {"lambda_dev": (-3.0, 1.0), "lambda_smooth": (-3.0, 1.0)}


@dataclass(frozen=True)
class SearchSpace:
    """Per-parameter log10 bounds. Default: both weights in [1e-3, 1e1]."""

    bounds: dict[str, tuple[float, float]] = field(default_factory=_default_bounds)

    def __post_init__(self) -> None:
        if not self.bounds:
            raise EmptySpace("search space has no parameters")
        for name, (lo, hi) in self.bounds.items():
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError(f"bad log10 bounds for {name!r}: ({lo}, {hi})")


@dataclass(frozen=True)
class TrialRecord:
    params: dict[str, float]
    cost: float
    status: qp.QpStatus

    def __post_init__(self) -> None:
        if not np.isfinite(self.cost):
            raise ValueError(f"trial cost must be finite, got {self.cost}")

    def to_dict(self) -> dict:
        return {"params": dict(self.params), "cost": self.cost, "status": self.status.value}


@dataclass(frozen=True)
class TpeConfig:
    gamma: float = 0.25
    n_startup: int = 10
    n_candidates: int = 24
    bandwidth_floor: float = 1e-3

    def __post_init__(self) -> None:
        if not (0.0 < self.gamma < 1.0):
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")
        if self.n_startup < 1 or self.n_candidates < 1:
            raise ValueError("n_startup and n_candidates must be positive")


def _log_kde(points: np.ndarray, bandwidth: float, x: np.ndarray) -> np.ndarray:
    """Log density of an equal-weight Gaussian mixture at each x."""
    z = (x[:, None] - points[None, :]) / bandwidth
    log_terms = -0.5 * z**2 - math.log(bandwidth * math.sqrt(2.0 * math.pi))
    # logsumexp over mixture components
    m = np.max(log_terms, axis=1, keepdims=True)
    return (m[:, 0] + np.log(np.sum(np.exp(log_terms - m), axis=1))) - math.log(len(points))


def _bandwidth(points: np.ndarray, floor: float) -> float:
    # Scott's rule; the floor keeps single-point and collapsed sets usable
    if len(points) < 2:
        return floor
    sigma = float(np.std(points))
    return max(sigma * len(points) ** (-0.2), floor)


def tpe_suggest(
    history: list[TrialRecord],
    space: Optional[SearchSpace] = None,
    rng_seed=0,
    config: Optional[TpeConfig] = None,
) -> dict[str, float]:
    """Propose the next parameter point. Deterministic given the seed.

    Below n_startup history entries this is a log-uniform draw. After that,
    candidates come from the good-set KDE and are scored by density ratio.
    """
    space = space or SearchSpace()
    cfg = config or TpeConfig()
    rng = np.random.default_rng(rng_seed)
    names = list(space.bounds)

    if len(history) < cfg.n_startup:
        out = {}
        for name in names:
            lo, hi = space.bounds[name]
            out[name] = float(10.0 ** rng.uniform(lo, hi))
        return out

    costs = np.array([t.cost for t in history])
    order = np.argsort(costs, kind="stable")  # ties: oldest trial wins
    n_good = max(1, math.ceil(cfg.gamma * len(history)))
    n_good = min(n_good, len(history) - 1)  # both sets stay nonempty
    good_idx, bad_idx = order[:n_good], order[n_good:]

    candidates = np.empty((cfg.n_candidates, len(names)))
    kdes: list[tuple[np.ndarray, float, np.ndarray, float]] = []
    for j, name in enumerate(names):
        lo, hi = space.bounds[name]
        vals = np.array([math.log10(t.params[name]) for t in history])
        good, bad = vals[good_idx], vals[bad_idx]
        bw_good = _bandwidth(good, cfg.bandwidth_floor)
        bw_bad = _bandwidth(bad, cfg.bandwidth_floor)
        centers = good[rng.integers(0, len(good), size=cfg.n_candidates)]
        candidates[:, j] = np.clip(rng.normal(centers, bw_good), lo, hi)
        kdes.append((good, bw_good, bad, bw_bad))

    scores = np.zeros(cfg.n_candidates)
    for j, (good, bw_good, bad, bw_bad) in enumerate(kdes):
        scores += _log_kde(good, bw_good, candidates[:, j])
        scores -= _log_kde(bad, bw_bad, candidates[:, j])

    winner = candidates[int(np.argmax(scores))]
    return {name: float(10.0 ** winner[j]) for j, name in enumerate(names)}


def _evaluate(
    ref: Trajectory,
    scene: Scene,
    profile: RobotProfile,
    params: dict[str, float],
    solver_config: Optional[qp.SolverConfig],
) -> TrialRecord:
    cfg = csm.CsmConfig(
        lambda_dev=params["lambda_dev"], lambda_smooth=params["lambda_smooth"]
    )
    report = csm.enforce(ref, scene, profile, cfg, solver_config)
    if report.status is qp.QpStatus.OPTIMAL:
        cost = report.deviation_cost
    else:
        # pessimistic upper bound: losing the whole trajectory, plus penalty
        cost = float(np.sum(flatten(ref) ** 2)) + INFEASIBLE_PENALTY
    return TrialRecord(params=params, cost=cost, status=report.status)


def tune(
    ref: Trajectory,
    scene: Scene,
    profile: RobotProfile,
    trials: int = 50,
    seed: int = 0,
    space: Optional[SearchSpace] = None,
    config: Optional[TpeConfig] = None,
    solver_config: Optional[qp.SolverConfig] = None,
    startup_workers: int = 1,
) -> tuple[csm.CsmConfig, list[TrialRecord]]:
    """Run the weight search and return (best config, full trial history).

    Non-Optimal trials are kept with a penalized cost so the estimator
    learns to avoid them. DegenerateLinearization aborts the search: that
    is a geometry problem no weight setting can fix.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    ref = check_trajectory(ref)
    scene = check_scene(scene)
    profile = check_profile(profile)
    space = space or SearchSpace()
    cfg = config or TpeConfig()

    history: list[TrialRecord] = []
    n_startup = min(cfg.n_startup, trials)

    startup_params = [
        tpe_suggest(history, space, rng_seed=(seed, k), config=cfg) for k in range(n_startup)
    ]
    if startup_workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=startup_workers) as pool:
            futures = [
                pool.submit(_evaluate, ref, scene, profile, p, solver_config)
                for p in startup_params
            ]
            history.extend(f.result() for f in futures)  # submission order
    else:
        history.extend(
            _evaluate(ref, scene, profile, p, solver_config) for p in startup_params
        )

    for k in range(n_startup, trials):
        params = tpe_suggest(history, space, rng_seed=(seed, k), config=cfg)
        history.append(_evaluate(ref, scene, profile, params, solver_config))

    best = min(history, key=lambda t: t.cost)
    best_cfg = csm.CsmConfig(
        lambda_dev=best.params["lambda_dev"], lambda_smooth=best.params["lambda_smooth"]
    )
    return best_cfg, history


class TpeWeightSearch(BaseEstimator, TransformerMixin):
    """Estimator wrapper: fit() searches weights, transform() projects.

    After fit, ``best_config_`` holds the winning weights, ``history_`` the
    trial records, and ``best_cost_`` the winning deviation cost.
    """

    def __init__(
        self,
        scene: Scene | dict | None = None,
        profile: RobotProfile | dict | None = None,
        trials: int = 50,
        seed: int = 0,
    ):
        self.scene = scene
        self.profile = profile
        self.trials = trials
        self.seed = seed

    def fit(self, X, y=None) -> "TpeWeightSearch":
        if self.profile is None:
            raise ValueError("TpeWeightSearch requires a robot profile")
        scene = check_scene(self.scene) if self.scene is not None else Scene()
        ref = check_trajectory(X)
        self.best_config_, self.history_ = tune(
            ref, scene, check_profile(self.profile), trials=self.trials, seed=self.seed
        )
        self.best_cost_ = min(t.cost for t in self.history_)
        return self

    def transform(self, X) -> Trajectory:
        if not hasattr(self, "best_config_"):
            raise ValueError("fit must run before transform")
        scene = check_scene(self.scene) if self.scene is not None else Scene()
        report = csm.enforce(
            check_trajectory(X), scene, check_profile(self.profile), self.best_config_
        )
        self.report_ = report
        return report.solution
