"""Local agent: UCB scoring, cascade-feedback buffering and the upload trigger."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from . import numerics
from .environment import Feedback


class Protocol(str, Enum):
    FEDC3UCB_H = "fedc3ucb_h"
    NO_AUXILIARY = "no_auxiliary"
    FORCE_COMM = "force_comm"
    FED_LIN_UCB = "fed_lin_ucb"
    FED_IND = "fed_ind"


class Trigger(str, Enum):
    NONE = "none"
    DETERMINANT = "determinant"
    AUXILIARY_COIN = "auxiliary_coin"
    FORCED_ARRIVAL = "forced_arrival"


SERVER_ORDERS = ("upload_first", "aggregate_first")


@dataclass
class AlgorithmParams:
    num_users: int
    dim: int
    K: int
    horizon: int
    lam: float = 1.0
    alpha_c: Optional[float] = None      # None -> 1/|U|^2
    alpha_d: float = 1.0
    delta: Optional[float] = None        # None -> 1/T
    R: float = 0.5
    protocol: Protocol = Protocol.FEDC3UCB_H
    # Fixed confidence radius shared by every protocol; None uses the
    # theoretical radii (federated formula, or the single-agent one for fed_ind).
    beta: Optional[float] = None
    server_order: str = "upload_first"

    def __post_init__(self):
        self.protocol = Protocol(self.protocol)
        if self.alpha_c is None:
            self.alpha_c = 1.0 / self.num_users ** 2
        if self.delta is None:
            self.delta = 1.0 / max(self.horizon, 2)
        for name in ("num_users", "dim", "K"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        for name in ("lam", "alpha_c", "alpha_d", "R"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.beta is not None and not self.beta >= 0:
            raise ValueError("beta must be >= 0")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.protocol is Protocol.FORCE_COMM and not self.lam > self.K:
            raise ValueError(f"force_comm requires lambda > K (lambda={self.lam}, K={self.K})")
        if self.server_order not in SERVER_ORDERS:
            raise ValueError(f"server_order must be one of {SERVER_ORDERS}")


def beta_federated(p: AlgorithmParams) -> float:
    """Confidence radius shared by all clustered agents under asynchronous sync."""
    U, d, a = p.num_users, p.dim, p.alpha_c
    T = max(p.horizon, 1)
    inflation = math.sqrt(1 + U * a) + U * math.sqrt(2 * a)
    log_terms = (d * math.log(1 + p.K * T / (a * p.lam * d))
                 + 2 * math.log(1 / p.delta) + 4 * math.log(T * U))
    return math.sqrt(p.lam) + p.R * inflation * math.sqrt(log_terms)


def beta_single(count: int, p: AlgorithmParams) -> float:
    """Self-normalized radius of one agent learning alone from ``count`` pulls."""
    if count < 0:
        raise ValueError("count must be >= 0")
    if not 0 < p.delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    d = p.dim
    return (p.R * math.sqrt(d * math.log(1 + count / (p.lam * d)) + 2 * math.log(1 / p.delta))
            + math.sqrt(p.lam))


def p_aux(t: int) -> float:
    return min(1.0, 3.0 * math.log(t) / t)


def is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


@dataclass
class GramSummary:
    sigma: np.ndarray
    b: np.ndarray
    count: int = 0

    @classmethod
    def empty(cls, dim: int) -> "GramSummary":
        return cls(np.zeros((dim, dim)), np.zeros(dim), 0)

    def add(self, x: np.ndarray, w: float) -> None:
        self.sigma += np.outer(x, x)
        self.b += w * x
        self.count += 1

    def copy(self) -> "GramSummary":
        return GramSummary(self.sigma.copy(), self.b.copy(), self.count)


@dataclass
class Agent:
    user: int
    model_sigma: np.ndarray
    model_theta: np.ndarray
    local: GramSummary
    arrivals: int = 0
    last_sync_round: int = 0
    _factor: numerics.Factorization = field(init=False, repr=False)

    def __post_init__(self):
        self._factor = numerics.factorize(self.model_sigma)

    @classmethod
    def fresh(cls, user: int, dim: int, lam: float) -> "Agent":
        return cls(user, numerics.regularized(dim, lam), np.zeros(dim), GramSummary.empty(dim))

    @property
    def factor(self) -> numerics.Factorization:
        return self._factor

    def compute_ucbs(self, features: np.ndarray, beta: float) -> np.ndarray:
        if features.shape[1] != len(self.model_theta):
            raise ValueError("feature dimension does not match the agent model")
        widths = numerics.mahalanobis_inv_rows(self._factor, features)
        return np.minimum(features @ self.model_theta + beta * widths, 1.0)

    def absorb_feedback(self, features: np.ndarray, action: Sequence[int], fb: Feedback) -> None:
        for k in range(fb.observed):
            self.local.add(features[action[k]], float(fb.clicks[k]))
        self.arrivals += 1

    def determinant_fires(self, alpha_c: float) -> bool:
        if self.local.count == 0:
            return False
        return numerics.det_condition(self.model_sigma, self.local.sigma, alpha_c, self._factor)

    def communication_trigger(self, p: AlgorithmParams, t: int, coin: float) -> Trigger:
        """Which rule (if any) makes this agent sync at round ``t``.

        Randomized and forced rules are reported ahead of the determinant rule
        so their firing counts can be audited exactly.
        """
        if t < 1:
            raise ValueError("rounds are 1-based")
        proto = p.protocol
        if proto is Protocol.FED_IND:
            return Trigger.NONE
        if proto is Protocol.FEDC3UCB_H and coin < p_aux(t):
            return Trigger.AUXILIARY_COIN
        if proto is Protocol.FORCE_COMM and is_power_of_two(self.arrivals):
            return Trigger.FORCED_ARRIVAL
        if self.determinant_fires(p.alpha_c):
            return Trigger.DETERMINANT
        return Trigger.NONE

    def should_communicate(self, p: AlgorithmParams, t: int, coin: float) -> bool:
        return self.communication_trigger(p, t, coin) is not Trigger.NONE

    def apply_download(self, cluster_sigma: np.ndarray, cluster_theta: np.ndarray, t: int) -> None:
        self.model_sigma = np.array(cluster_sigma, dtype=float)
        self.model_theta = np.array(cluster_theta, dtype=float)
        self._factor = numerics.factorize(self.model_sigma)
        self.local = GramSummary.empty(len(self.model_theta))
        self.last_sync_round = t

    def refit_local(self, lam: float) -> None:
        """Independent-learner update: ridge fit on everything seen so far."""
        self.model_sigma = numerics.regularized(len(self.model_theta), lam) + self.local.sigma
        self._factor = numerics.factorize(self.model_sigma)
        self.model_theta = numerics.solve(self._factor, self.local.b)
