"""Synthetic and embedding-backed cascade environments.

Users arrive uniformly at random, each round brings a fresh context block of
item vectors, and the user scans the recommended list clicking each item with
probability ``<theta_cluster, x>`` until the first click.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

THETA_MODES = ("orthogonal", "random_normalized")
STREAM_NAMES = ("theta", "arrivals", "items", "clicks", "protocol")


@dataclass
class SyntheticConfig:
    num_users: int = 40
    num_clusters: int = 5
    dim: int = 20
    items_per_round: int = 200
    K: int = 4
    horizon: int = 1000
    theta_mode: str = "orthogonal"
    clip_weights: bool = True

    def __post_init__(self):
        for name in ("num_users", "num_clusters", "dim", "items_per_round", "K"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        if self.theta_mode not in THETA_MODES:
            raise ValueError(f"theta_mode must be one of {THETA_MODES}, got {self.theta_mode!r}")
        if self.num_clusters > self.num_users:
            raise ValueError("num_clusters must not exceed num_users")
        if self.K > self.items_per_round:
            raise ValueError("K must not exceed items_per_round")
        if self.theta_mode == "orthogonal" and self.num_clusters > self.dim:
            raise ValueError("orthogonal theta_mode needs num_clusters <= dim")


@dataclass
class Streams:
    """Independent generators so protocol randomness never shifts the world."""
    theta: np.random.Generator
    arrivals: np.random.Generator
    items: np.random.Generator
    clicks: np.random.Generator
    protocol: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "Streams":
        children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
        return cls(*(np.random.default_rng(c) for c in children))


@dataclass(frozen=True)
class GroundTruth:
    cluster_of: np.ndarray          # (num_users,) cluster index per user
    thetas: np.ndarray              # (J, d), rows have norm <= 1
    realized_gamma: float
    item_pool: Optional[np.ndarray] = None   # (N, d) unit rows, embedding mode only

    @property
    def num_users(self) -> int:
        return len(self.cluster_of)

    @property
    def num_clusters(self) -> int:
        return len(self.thetas)

    @property
    def dim(self) -> int:
        return self.thetas.shape[1]

    def theta_of(self, user: int) -> np.ndarray:
        return self.thetas[self.cluster_of[user]]

    def partition(self) -> list[frozenset]:
        return [frozenset(np.flatnonzero(self.cluster_of == j).tolist())
                for j in range(self.num_clusters)]


@dataclass(frozen=True)
class RoundContext:
    t: int
    user: int
    item_ids: np.ndarray
    features: np.ndarray            # (I_t, d)

    @property
    def num_items(self) -> int:
        return len(self.item_ids)


@dataclass(frozen=True)
class Feedback:
    observed: int                   # number of items examined, min(O_t, len(a))
    clicks: tuple
    clicked: bool
    reward: int

    @property
    def position(self) -> float:
        """1-based first-click position, or inf when nothing was clicked."""
        return self.observed if self.clicked else math.inf


def min_pairwise_distance(vectors: np.ndarray) -> float:
    if len(vectors) < 2:
        return math.inf
    return min(float(np.linalg.norm(a - b)) for a, b in itertools.combinations(vectors, 2))


def _assign_clusters(num_users: int, num_clusters: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(np.arange(num_users) % num_clusters)


def generate_synthetic(cfg: SyntheticConfig, rng: np.random.Generator) -> GroundTruth:
    J, d = cfg.num_clusters, cfg.dim
    if cfg.theta_mode == "orthogonal":
        if J > d:
            raise ValueError("orthogonal theta_mode needs num_clusters <= dim")
        q, r = np.linalg.qr(rng.standard_normal((d, J)))
        thetas = (q * np.sign(np.diagonal(r))).T
        thetas /= np.linalg.norm(thetas, axis=1, keepdims=True)
    else:
        g = rng.standard_normal((J, d))
        thetas = g / np.linalg.norm(g, axis=1, keepdims=True)
    cluster_of = _assign_clusters(cfg.num_users, J, rng)
    return GroundTruth(cluster_of, thetas, min_pairwise_distance(thetas))


def draw_round(gt: GroundTruth, cfg: SyntheticConfig, t: int, streams: Streams) -> RoundContext:
    if t < 1:
        raise ValueError("rounds are 1-based")
    user = int(streams.arrivals.integers(gt.num_users))
    n = cfg.items_per_round
    if gt.item_pool is None:
        g = streams.items.standard_normal((n, gt.dim))
        feats = g / np.sqrt(np.einsum("ij,ij->i", g, g))[:, None]
        ids = np.arange(n)
    else:
        if len(gt.item_pool) < n:
            raise ValueError(f"item pool has {len(gt.item_pool)} items, need {n} per round")
        ids = streams.items.choice(len(gt.item_pool), size=n, replace=False)
        feats = gt.item_pool[ids]
    return RoundContext(t, user, ids, feats)


def expected_weights(gt: GroundTruth, user: int, features: np.ndarray,
                     clip: bool = True) -> np.ndarray:
    """Click probabilities of every row of ``features`` for ``user``."""
    w = features @ gt.theta_of(user)
    if clip:
        return np.clip(w, 0.0, 1.0)
    if np.any(w < 0.0) or np.any(w > 1.0):
        raise ValueError("expected weight outside [0, 1] with clip_weights disabled")
    return w


def expected_weight(gt: GroundTruth, user: int, x: np.ndarray, clip: bool = True) -> float:
    return float(expected_weights(gt, user, np.asarray(x, dtype=float)[None, :], clip)[0])


def _check_action(action: Sequence[int], num_items: int) -> None:
    if len(action) < 1:
        raise ValueError("action must contain at least one item")
    if len(set(action)) != len(action):
        raise ValueError("action contains duplicate items")
    if any(i < 0 or i >= num_items for i in action):
        raise ValueError("action refers to an item outside the round")


def play(gt: GroundTruth, ctx: RoundContext, action: Sequence[int],
         rng: np.random.Generator, clip: bool = True) -> Feedback:
    """Cascade scan: one Bernoulli draw per examined item, stop at the first click."""
    _check_action(action, ctx.num_items)
    weights = expected_weights(gt, ctx.user, ctx.features[list(action)], clip)
    clicks = []
    for w in weights:
        hit = bool(rng.random() < w)
        clicks.append(hit)
        if hit:
            return Feedback(len(clicks), tuple(clicks), True, 1)
    return Feedback(len(clicks), tuple(clicks), False, 0)


def expected_reward(weights) -> float:
    """Probability of at least one click; 0 for an empty list."""
    w = np.asarray(weights, dtype=float)
    if w.size == 0:
        return 0.0
    return float(1.0 - np.prod(1.0 - w))


def oracle_topk(values, K: int) -> list[int]:
    """Indices of the K largest values, descending; ties go to the lower index."""
    v = np.asarray(values, dtype=float)
    if len(v) < K:
        raise ValueError(f"need at least K={K} items, got {len(v)}")
    return np.argsort(-v, kind="stable")[:K].tolist()


def per_round_regret(gt: GroundTruth, ctx: RoundContext, action: Sequence[int],
                     clip: bool = True, weights: Optional[np.ndarray] = None) -> float:
    if weights is None:
        weights = expected_weights(gt, ctx.user, ctx.features, clip)
    best = oracle_topk(weights, len(action))
    gap = expected_reward(weights[best]) - expected_reward(weights[list(action)])
    return max(gap, 0.0)


@dataclass
class Environment:
    """Ground truth plus the random streams of one run."""
    gt: GroundTruth
    cfg: SyntheticConfig
    streams: Streams = field(repr=False)

    @classmethod
    def synthetic(cls, cfg: SyntheticConfig, seed: int) -> "Environment":
        streams = Streams.from_seed(seed)
        return cls(generate_synthetic(cfg, streams.theta), cfg, streams)

    @classmethod
    def from_truth(cls, gt: GroundTruth, cfg: SyntheticConfig, seed: int) -> "Environment":
        return cls(gt, cfg, Streams.from_seed(seed))

    def draw_round(self, t: int) -> RoundContext:
        return draw_round(self.gt, self.cfg, t, self.streams)

    def play(self, ctx: RoundContext, action: Sequence[int]) -> Feedback:
        return play(self.gt, ctx, action, self.streams.clicks, self.cfg.clip_weights)
