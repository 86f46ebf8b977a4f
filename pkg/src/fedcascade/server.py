"""Server side: per-agent sufficient statistics, the deletion-only user graph,
and connected-component aggregation."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import numerics
from .agent import GramSummary


def _confidence_term(count):
    count = np.asarray(count, dtype=float)
    return np.sqrt((1.0 + np.log1p(count)) / (1.0 + count))


def heterogeneity_threshold(count_a, count_b, alpha_d: float):
    """Edge-deletion threshold; works elementwise on arrays of counts."""
    if np.any(np.asarray(count_a) < 0) or np.any(np.asarray(count_b) < 0):
        raise ValueError("counts must be >= 0")
    return alpha_d * (_confidence_term(count_a) + _confidence_term(count_b))


@dataclass(frozen=True)
class ClusterModel:
    sigma: np.ndarray
    b: np.ndarray
    theta: np.ndarray


class Server:
    def __init__(self, num_users: int, dim: int, lam: float):
        self.num_users = num_users
        self.dim = dim
        self.lam = lam
        self.sigma = np.zeros((num_users, dim, dim))
        self.b = np.zeros((num_users, dim))
        self.count = np.zeros(num_users, dtype=np.int64)
        self.theta = np.zeros((num_users, dim))
        self.adjacency = ~np.eye(num_users, dtype=bool)

    def _check_user(self, user: int) -> None:
        if not 0 <= user < self.num_users:
            raise KeyError(f"unknown user id {user}")

    def fit_user(self, user: int) -> np.ndarray:
        """Ridge estimate for one user recomputed from its stored statistics."""
        f = numerics.factorize(numerics.regularized(self.dim, self.lam) + self.sigma[user])
        return numerics.solve(f, self.b[user])

    def receive_upload(self, user: int, upload: GramSummary) -> None:
        self._check_user(user)
        if upload.sigma.shape != (self.dim, self.dim) or upload.b.shape != (self.dim,):
            raise ValueError("upload dimensions do not match the server")
        self.sigma[user] += upload.sigma
        self.b[user] += upload.b
        self.count[user] += upload.count
        self.theta[user] = self.fit_user(user)

    def update_graph(self, user: int, alpha_d: float) -> list[int]:
        """Cut edges from ``user`` to neighbours whose estimates are too far apart.

        Returns the neighbours that were disconnected.
        """
        self._check_user(user)
        nbrs = np.flatnonzero(self.adjacency[user])
        if nbrs.size == 0:
            return []
        gaps = np.linalg.norm(self.theta[nbrs] - self.theta[user], axis=1)
        thresholds = heterogeneity_threshold(self.count[user], self.count[nbrs], alpha_d)
        cut = nbrs[gaps > thresholds]
        self.adjacency[user, cut] = False
        self.adjacency[cut, user] = False
        return cut.tolist()

    def connected_component(self, user: int) -> list[int]:
        self._check_user(user)
        seen = {user}
        queue = deque([user])
        while queue:
            u = queue.popleft()
            for v in np.flatnonzero(self.adjacency[u]).tolist():
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return sorted(seen)

    def components(self) -> list[frozenset]:
        left = set(range(self.num_users))
        parts = []
        while left:
            comp = self.connected_component(min(left))
            parts.append(frozenset(comp))
            left.difference_update(comp)
        return parts

    def aggregate_component(self, component) -> ClusterModel:
        members = sorted(component)
        if not members:
            raise ValueError("component must be nonempty")
        sigma = numerics.regularized(self.dim, self.lam) + self.sigma[members].sum(axis=0)
        b = self.b[members].sum(axis=0)
        theta = numerics.solve(numerics.factorize(sigma), b)
        return ClusterModel(sigma, b, theta)

    def edge_count(self) -> int:
        return int(self.adjacency.sum()) // 2
