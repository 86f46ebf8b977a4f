"""Round-by-round simulation of the federated cascade loop and its baselines."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import environment as env_mod
from .agent import (AlgorithmParams, Agent, Protocol, Trigger, beta_federated,
                    beta_single)
from .environment import Environment, GroundTruth
from .server import ClusterModel, Server


@dataclass(slots=True)
class RoundRecord:
    t: int
    user: int
    action: tuple
    pseudo_regret: float
    communicated: bool
    trigger: Trigger
    cluster_error_rate: Optional[float] = None


@dataclass
class RunResult:
    records: list
    cumulative_regret: np.ndarray
    cumulative_comm: np.ndarray
    final_components: list
    snapshots: list = field(default_factory=list)   # (round, cluster_error_rate)

    @property
    def total_comm(self) -> int:
        return int(self.cumulative_comm[-1]) if len(self.cumulative_comm) else 0

    @property
    def total_regret(self) -> float:
        return float(self.cumulative_regret[-1]) if len(self.cumulative_regret) else 0.0


def clustering_error_rate(components, truth: GroundTruth) -> float:
    """Fraction of users whose estimated cluster is not exactly their true one."""
    n = truth.num_users
    seen: set = set()
    owner = {}
    for comp in components:
        comp = frozenset(comp)
        if comp & seen:
            raise ValueError("components overlap")
        seen |= comp
        for u in comp:
            owner[u] = comp
    if seen != set(range(n)):
        raise ValueError("components do not cover the user set")
    true_parts = truth.partition()
    wrong = sum(owner[u] != true_parts[truth.cluster_of[u]] for u in range(n))
    return wrong / n


def default_snapshot_interval(horizon: int) -> int:
    return max(1, horizon // 200)


def snapshot_rounds(horizon: int, interval: int) -> list[int]:
    if horizon <= 0:
        return []
    rounds = list(range(interval, horizon + 1, interval))
    if not rounds or rounds[-1] != horizon:
        rounds.append(horizon)
    return rounds


class Simulation:
    """All mutable state of one run: environment streams, agents and server."""

    def __init__(self, env: Environment, params: AlgorithmParams):
        if env.gt.num_users != params.num_users or env.gt.dim != params.dim:
            raise ValueError("environment and algorithm parameters disagree on |U| or d")
        if env.cfg.K != params.K:
            raise ValueError("environment and algorithm parameters disagree on K")
        self.env = env
        self.params = params
        self.agents = [Agent.fresh(u, params.dim, params.lam) for u in range(params.num_users)]
        self.server = Server(params.num_users, params.dim, params.lam)
        self.beta = params.beta if params.beta is not None else beta_federated(params)
        self.last_ucbs: Optional[np.ndarray] = None
        self.last_weights: Optional[np.ndarray] = None

    @property
    def protocol(self) -> Protocol:
        return self.params.protocol

    def components(self) -> list[frozenset]:
        if self.protocol is Protocol.FED_IND:
            return [frozenset([u]) for u in range(self.params.num_users)]
        return self.server.components()

    def cluster_error(self) -> float:
        return clustering_error_rate(self.components(), self.env.gt)

    def _beta_for(self, agent: Agent) -> float:
        if self.protocol is Protocol.FED_IND and self.params.beta is None:
            return beta_single(agent.local.count, self.params)
        return self.beta

    def _sync(self, agent: Agent, t: int) -> None:
        server, p = self.server, self.params
        clustering = self.protocol is not Protocol.FED_LIN_UCB
        model: Optional[ClusterModel] = None
        if p.server_order == "aggregate_first":
            model = server.aggregate_component(server.connected_component(agent.user))
        server.receive_upload(agent.user, agent.local)
        if clustering:
            server.update_graph(agent.user, p.alpha_d)
        if model is None:
            model = server.aggregate_component(server.connected_component(agent.user))
        agent.apply_download(model.sigma, model.theta, t)

    def step(self, t: int) -> RoundRecord:
        env, p = self.env, self.params
        ctx = env.draw_round(t)
        agent = self.agents[ctx.user]
        ucbs = agent.compute_ucbs(ctx.features, self._beta_for(agent))
        action = env_mod.oracle_topk(ucbs, p.K)
        weights = env_mod.expected_weights(env.gt, ctx.user, ctx.features, env.cfg.clip_weights)
        regret = env_mod.per_round_regret(env.gt, ctx, action, weights=weights)
        fb = env.play(ctx, action)
        agent.absorb_feedback(ctx.features, action, fb)
        if self.protocol is Protocol.FED_IND:
            agent.refit_local(p.lam)
        coin = float(env.streams.protocol.random())
        trigger = agent.communication_trigger(p, t, coin)
        if trigger is not Trigger.NONE:
            self._sync(agent, t)
        self.last_ucbs, self.last_weights = ucbs, weights
        return RoundRecord(t, ctx.user, tuple(action), regret,
                           trigger is not Trigger.NONE, trigger)


Observer = Callable[[Simulation, RoundRecord], None]


def run_simulation(sim: Simulation, snapshot_interval: Optional[int] = None,
                   observer: Optional[Observer] = None) -> RunResult:
    T = sim.params.horizon
    interval = snapshot_interval or default_snapshot_interval(T)
    marks = set(snapshot_rounds(T, interval))
    records, snaps = [], []
    for t in range(1, T + 1):
        rec = sim.step(t)
        if t in marks:
            rec.cluster_error_rate = sim.cluster_error()
            snaps.append((t, rec.cluster_error_rate))
        if observer is not None:
            observer(sim, rec)
        records.append(rec)
    regret = np.cumsum([r.pseudo_regret for r in records], dtype=float)
    comm = np.cumsum([r.communicated for r in records], dtype=np.int64)
    return RunResult(records, regret, comm, sim.components(), snaps)


def run(env_config, params: AlgorithmParams, seed: int, snapshot_interval: Optional[int] = None,
        truth: Optional[GroundTruth] = None, observer: Optional[Observer] = None) -> RunResult:
    """Simulate one replication. ``truth`` pins the world (embedding mode);
    otherwise a synthetic one is drawn from ``seed``."""
    if truth is None:
        env = Environment.synthetic(env_config, seed)
    else:
        env = Environment.from_truth(truth, env_config, seed)
    return run_simulation(Simulation(env, params), snapshot_interval, observer)
