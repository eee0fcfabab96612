"""Discrete-time SIR epidemic spreading on a network.

The reference task for the whole framework: it reads its parameters from
the swept point, builds its topology in a NetworkSet, steps a synchronous
SIR process driven entirely by the unit RNG, and records per-step and
per-run observations. The intervention variant branches a mid-epidemic
system into one clone per strategy and compares final sizes on identical
initial conditions.

Node attribute ``sir``: 0 = susceptible, 1 = infected, 2 = recovered.
Update rule per step, applied synchronously from the pre-step snapshot: a
susceptible node with k infected neighbors becomes infected with
probability 1 - (1 - beta)^k; an infected node recovers with probability
gamma.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Optional

from .engine import TaskLogic, derive_seed
from .netstruct import NetworkSet
from .tasks import register_task

S, I, R = 0, 1, 2

TOPOLOGIES = ("complete", "ring", "erdos_renyi")


@dataclass(frozen=True)
class SirParams:
    n: int
    beta: float
    gamma: float
    i0: int = 1
    topology: str = "complete"
    er_p: float = 0.1  # edge probability for erdos_renyi

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 1 <= self.i0 <= self.n:
            raise ValueError("i0 must be in [1, n]")
        for name in ("beta", "gamma", "er_p"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"topology must be one of {TOPOLOGIES}")

    @classmethod
    def from_assignments(cls, assignments) -> "SirParams":
        known = ("n", "beta", "gamma", "i0", "topology", "er_p")
        kwargs = {k: v for k, v in assignments.items() if k in known}
        if "n" not in kwargs:
            raise ValueError("sir task needs parameter 'n'")
        kwargs["n"] = int(kwargs["n"])
        if "i0" in kwargs:
            kwargs["i0"] = int(kwargs["i0"])
        return cls(**kwargs)


class SirState:
    """One epidemic system: the network set plus cached node order."""

    def __init__(self, ns: NetworkSet, net_id: int, params: SirParams):
        self.ns = ns
        self.net_id = net_id
        self.params = params
        self.node_ids = ns.members(net_id)

    def counts(self) -> tuple:
        tally = [0, 0, 0]
        for node in self.node_ids:
            tally[self.ns.node_state(node, "sir")] += 1
        return tuple(tally)

    def infected_ever(self) -> int:
        s, i, r = self.counts()
        return self.params.n - s

    def clone(self) -> "SirState":
        return SirState(self.ns.clone(), self.net_id, self.params)


def build_topology(params: SirParams, rng: random.Random) -> SirState:
    ns = NetworkSet()
    net_id = ns.new_network()
    nodes = [ns.add_node(net_id, {"sir": S}) for _ in range(params.n)]
    if params.topology == "complete":
        for a in range(params.n):
            for b in range(a + 1, params.n):
                ns.add_link(net_id, nodes[a], nodes[b])
    elif params.topology == "ring":
        if params.n == 2:
            ns.add_link(net_id, nodes[0], nodes[1])
        elif params.n > 2:
            for a in range(params.n):
                ns.add_link(net_id, nodes[a], nodes[(a + 1) % params.n])
    else:  # erdos_renyi
        for a in range(params.n):
            for b in range(a + 1, params.n):
                if rng.random() < params.er_p:
                    ns.add_link(net_id, nodes[a], nodes[b])
    return SirState(ns, net_id, params)


def sir_init(rng: random.Random, params: SirParams) -> SirState:
    """Build the topology and infect i0 distinct nodes chosen by the rng."""
    state = build_topology(params, rng)
    for node in rng.sample(state.node_ids, params.i0):
        state.ns.set_node_state(node, "sir", I)
    return state


def sir_step(rng: random.Random, state: SirState) -> tuple:
    """One synchronous update from the pre-step snapshot. Returns
    (any_infected_remain, new_infections). Node order is ascending id, so
    the draw sequence is a pure function of (seed, structure)."""
    ns = state.ns
    beta, gamma = state.params.beta, state.params.gamma
    before = {node: ns.node_state(node, "sir") for node in state.node_ids}
    new_infections = 0
    infected_left = 0
    for node in state.node_ids:
        status = before[node]
        if status == S:
            k = sum(1 for nb in ns.neighbors(state.net_id, node) if before[nb] == I)
            if k > 0 and rng.random() < 1.0 - (1.0 - beta) ** k:
                ns.set_node_state(node, "sir", I)
                new_infections += 1
                infected_left += 1
        elif status == I:
            if rng.random() < gamma:
                ns.set_node_state(node, "sir", R)
            else:
                infected_left += 1
    return infected_left > 0, new_infections


def run_to_halt(rng: random.Random, state: SirState, cap: Optional[int]) -> bool:
    """Step until no infected remain; returns False if the cap was hit."""
    steps = 0
    while True:
        if cap is not None and steps >= cap:
            return False
        alive, _ = sir_step(rng, state)
        steps += 1
        if not alive:
            return True


def step_cap(params: SirParams) -> Optional[int]:
    # halting guard: with gamma > 0 the process ends w.p. 1; cap generously
    if params.gamma <= 0:
        return None
    return int(math.ceil(10.0 * params.n / params.gamma))


@register_task("sir")
class SirTask(TaskLogic):
    """Parameter sweep over the epidemic: records new_infections per step
    and the final epidemic size per run."""

    def init_run(self, ctx):
        self.params = SirParams.from_assignments(ctx.point.assignments)
        self.state = sir_init(ctx.rng, self.params)
        self.cap = step_cap(self.params)

    def step(self, ctx) -> bool:
        if self.cap is not None and ctx.step_index >= self.cap:
            ctx.record("capped", 1)
            return False
        alive, new_infections = sir_step(ctx.rng, self.state)
        ctx.record("new_infections", new_infections)
        return alive

    def finish_run(self, ctx):
        ctx.record("final_size", self.state.infected_ever())


def vaccinate_all(state: SirState, rng: random.Random) -> None:
    for node in state.node_ids:
        if state.ns.node_state(node, "sir") == S:
            state.ns.set_node_state(node, "sir", R)


def vaccinate_top_degree(state: SirState, rng: random.Random) -> None:
    """Set the top 10% (at least one) highest-degree susceptibles to R;
    ties break by ascending node id."""
    sus = [n for n in state.node_ids if state.ns.node_state(n, "sir") == S]
    sus.sort(key=lambda n: (-state.ns.degree(state.net_id, n), n))
    for node in sus[: max(1, len(sus) // 10)]:
        state.ns.set_node_state(node, "sir", R)


def remove_random_links(state: SirState, rng: random.Random) -> None:
    links = state.ns.net_links(state.net_id)
    if not links:
        return
    for link_id in rng.sample(links, max(1, len(links) // 10)):
        state.ns.remove_link(link_id)


def isolate_infected(state: SirState, rng: random.Random) -> None:
    for node in state.node_ids:
        if state.ns.node_state(node, "sir") == I:
            for link_id in state.ns.incident_links(state.net_id, node):
                if link_id in state.ns.links:
                    state.ns.remove_link(link_id)


def do_nothing(state: SirState, rng: random.Random) -> None:
    pass


STRATEGIES = (
    ("nothing", do_nothing),
    ("vaccinate_all", vaccinate_all),
    ("vaccinate_top", vaccinate_top_degree),
    ("remove_links", remove_random_links),
    ("isolate_infected", isolate_infected),
)


def sir_intervention_demo(ctx, state: SirState, strategies=STRATEGIES) -> list:
    """Clone the mid-epidemic system once per strategy, apply each
    strategy to its own clone, and run every clone to halt. Clone j draws
    randomness from sub-seed derive_seed(unit_seed, j), so the whole
    comparison stays a pure function of the unit seed while the shared
    initial condition is exactly identical. The original is untouched.

    Records final_size (and the strategy index) at user point
    ``strategy_done``; returns [(strategy_name, final_size), ...].
    """
    results = []
    for j, (name, apply_strategy) in enumerate(strategies):
        branch = state.clone()
        rng = random.Random(derive_seed(ctx.unit.seed, j))
        apply_strategy(branch, rng)
        run_to_halt(rng, branch, step_cap(branch.params))
        final = branch.infected_ever()
        results.append((name, final))
        ctx.record("strategy", j)
        ctx.record("final_size", final)
        ctx.fire("strategy_done")
    return results


@register_task("sir_intervene")
class SirInterventionTask(TaskLogic):
    """Runs the epidemic for t_switch steps, then compares the five
    built-in intervention strategies on clones of the live system."""

    def init_run(self, ctx):
        self.params = SirParams.from_assignments(ctx.point.assignments)
        self.t_switch = int(ctx.point.assignments.get("t_switch", max(1, self.params.n // 10)))
        self.state = sir_init(ctx.rng, self.params)
        self.alive = True

    def step(self, ctx) -> bool:
        self.alive, _ = sir_step(ctx.rng, self.state)
        return self.alive and ctx.step_index + 1 < self.t_switch

    def finish_run(self, ctx):
        sir_intervention_demo(ctx, self.state)
        ctx.record("base_size", self.state.infected_ever())
