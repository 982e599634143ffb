"""Structural checkers that audit repetition-protocol runs.

Three facts about the repetition protocol carry its rate guarantees,
and each gets an executable checker here so any simulated run can be
audited against them.  All three work on finished run objects (or
anything duck-typed like one: graph, rounds, n_hist, n_vu_hist, sent,
model, seed) and query erasures independently through the channel, so
they cross-examine the simulation rather than trusting its bookkeeping.

1. Erasure witnesses.  If node v has computed only n_v(t) iterates by
   round t, the delay t - n_v(t) must be attributable to erasures: there
   is a backward-in-time path through the (node, round) trellis ending
   at (v, t) that crosses at least t - n_v(t) erased transmissions.
   `find_witness` builds one constructively by case analysis on how the
   counters moved; `max_erasure_path` finds the erasure-richest path by
   dynamic programming and serves as an exhaustive cross-check.

2. Wait loops.  A 'wait' sent in round tau can cause further waits in
   round tau+1 downstream.  Chains of causes never revisit a sending
   node, so no wait event can sustain itself: `check_no_wait_loops`
   walks every cause chain and raises LoopDetected on a revisit.

3. Wasted-round domination.  A round that fails to advance n_v cannot
   come out of thin air: if v stalls in round tau without an incident
   erasure, its bottleneck neighbor must itself have stalled in round
   tau - 1, and unrolling that (the stalled nodes along the way are
   distinct, by the same counter argument that forbids wait loops)
   blames the stall on an erasure k rounds earlier touching a node
   reachable from v by a simple path of length k.
   `wasted_round_dominator` checks, for every round, that each stall is
   covered by an erasure in one of those blame slots.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import channel as channel_mod
from .errors import (
    DominationViolated,
    InternalConsistencyError,
    LoopDetected,
    ModelMismatch,
    WitnessNotFound,
)
from .protocols import WAIT


def _require_repetition(run) -> None:
    if getattr(run, "protocol", None) != "repetition":
        raise ValueError("checkers audit repetition-protocol runs")
    if run.model.mode != "symmetric":
        raise ModelMismatch("checkers assume symmetric (shared-fate) erasures")


def _edge_erased(run, a: int, b: int, round_index: int) -> bool:
    return not channel_mod.delivered(
        run.model, run.graph.n_nodes, run.seed, a, b, round_index
    )


@dataclass(frozen=True)
class Witness:
    """A backward time-like path accounting for a node's iterate delay.

    steps[k] = (tau, a, b) is the trellis edge from (a, tau) to
    (b, tau - 1); steps run tau = t, t-1, ..., 1.  A step with a != b
    crosses the transmission b -> a of round tau and counts as erased
    when the channel erased that edge; self-steps never count.
    """

    node: int
    t: int
    steps: tuple[tuple[int, int, int], ...]
    erased: tuple[bool, ...]
    required: int

    @property
    def erased_count(self) -> int:
        return sum(self.erased)


def verify_witness(run, w: Witness) -> None:
    """Raise WitnessNotFound unless w is a valid witness for its (v, t)."""
    n_v_t = int(run.n_hist[w.t, w.node])
    if w.required != w.t - n_v_t:
        raise WitnessNotFound(
            f"witness requirement {w.required} does not match delay {w.t - n_v_t}"
        )
    if len(w.steps) != w.t:
        raise WitnessNotFound(
            f"witness must span rounds {w.t}..1, got {len(w.steps)} steps"
        )
    here = w.node
    for k, (tau, a, b) in enumerate(w.steps):
        if tau != w.t - k or a != here:
            raise WitnessNotFound(f"step {k} breaks the backward chain at {tau}")
        if a != b and b not in run.graph.neighbors[a]:
            raise WitnessNotFound(f"step {k} uses a non-edge {a}-{b}")
        if w.erased[k] != (a != b and _edge_erased(run, a, b, tau)):
            raise WitnessNotFound(f"step {k} misreports its erasure status")
        here = b
    if w.erased_count < w.required:
        raise WitnessNotFound(
            f"witness carries {w.erased_count} erasures, needs {w.required}"
        )


def find_witness(run, v: int, t: int) -> Witness:
    """Construct a witness for (v, t) by descending the counter history.

    Case analysis per round (working backward from t):
    an advancing round contributes a self-step; a wasted round either
    hands off to a strictly-behind neighbor, or crosses the erased
    transmission from a bottleneck neighbor -- stepping to that
    neighbor when it was level with v, and bouncing off it back to v
    two rounds earlier when it was ahead.
    """
    _require_repetition(run)
    if not 0 <= v < run.graph.n_nodes:
        raise ValueError(f"node {v} out of range")
    if not 0 <= t <= run.rounds:
        raise ValueError(f"round {t} out of range")
    n_hist = run.n_hist
    steps: list[tuple[int, int, int]] = []

    node, tau = v, t
    while tau > 0:
        n_now = int(n_hist[tau, node])
        n_prev = int(n_hist[tau - 1, node])
        if n_now == n_prev + 1:
            steps.append((tau, node, node))
            tau -= 1
            continue
        if n_now != n_prev:
            raise WitnessNotFound(
                f"counter of node {node} moved by {n_now - n_prev} in round {tau}"
            )
        nbrs = run.graph.neighbors[node]
        behind = [u for u in nbrs if int(n_hist[tau - 1, u]) == n_prev - 1]
        if behind:
            u = behind[0]
            steps.append((tau, node, u))
            node, tau = u, tau - 1
            continue
        bottleneck = [
            u for u in nbrs if run.n_vu_hist[(node, u)][tau - 1] == n_prev - 1
        ]
        erased_bn = [u for u in bottleneck if _edge_erased(run, node, u, tau)]
        if not erased_bn:
            raise WitnessNotFound(
                f"round {tau} wasted at node {node} with no erased bottleneck"
            )
        level = [u for u in erased_bn if int(n_hist[tau - 1, u]) == n_prev]
        if level:
            u = level[0]
            steps.append((tau, node, u))
            node, tau = u, tau - 1
            continue
        u = erased_bn[0]
        if int(n_hist[tau - 1, u]) != n_prev + 1 or tau < 2:
            raise WitnessNotFound(
                f"round {tau} at node {node}: bottleneck {u} in impossible state"
            )
        steps.append((tau, node, u))
        steps.append((tau - 1, u, node))
        tau -= 2

    erased = tuple(a != b and _edge_erased(run, a, b, s) for s, a, b in steps)
    w = Witness(
        node=v,
        t=t,
        steps=tuple(steps),
        erased=erased,
        required=t - int(n_hist[t, v]),
    )
    verify_witness(run, w)
    return w


def max_erasure_path(run, v: int, t: int) -> Witness:
    """Exhaustive oracle: the erasure-richest time-like path to (v, t)."""
    _require_repetition(run)
    if not 0 <= v < run.graph.n_nodes:
        raise ValueError(f"node {v} out of range")
    if not 0 <= t <= run.rounds:
        raise ValueError(f"round {t} out of range")
    n = run.graph.n_nodes
    best = [[0] * n for _ in range(t + 1)]
    parent = [[0] * n for _ in range(t + 1)]
    for tau in range(1, t + 1):
        for a in range(n):
            cand_best, cand_parent = best[tau - 1][a], a
            for b in run.graph.neighbors[a]:
                score = best[tau - 1][b] + (1 if _edge_erased(run, a, b, tau) else 0)
                if score > cand_best:
                    cand_best, cand_parent = score, b
            best[tau][a], parent[tau][a] = cand_best, cand_parent
    steps = []
    node = v
    for tau in range(t, 0, -1):
        nxt = parent[tau][node]
        steps.append((tau, node, nxt))
        node = nxt
    erased = tuple(a != b and _edge_erased(run, a, b, s) for s, a, b in steps)
    return Witness(
        node=v,
        t=t,
        steps=tuple(steps),
        erased=erased,
        required=t - int(run.n_hist[t, v]),
    )


# ----------------------------------------------------------------------
# Wait-cause chains.


@dataclass(frozen=True)
class WaitChainReport:
    n_events: int
    n_cause_edges: int
    longest_chain: int
    paths_explored: int


def check_no_wait_loops(run, max_steps: int = 1_000_000) -> WaitChainReport:
    """Walk every wait-cause chain; raise LoopDetected on a sender revisit.

    A wait from v to u in round tau causes a wait from u to u' in round
    tau+1 when v was pinning u's progress (n_u(tau-1) = 1 + n_uv(tau-1)).
    Chains of causes must visit distinct senders, which bounds them by
    the node count.
    """
    _require_repetition(run)
    events: list[tuple[int, int, int]] = []  # (round, sender, receiver)
    for (sender, receiver), symbols in run.sent.items():
        for idx, sym in enumerate(symbols):
            if sym == WAIT:
                tau = idx + 1
                if run.n_vu_hist[(receiver, sender)][tau - 1] != int(
                    run.n_hist[tau - 1, sender]
                ):
                    raise InternalConsistencyError(
                        f"wait logged from {sender} to {receiver} in round {tau} "
                        "contradicts the counters"
                    )
                events.append((tau, sender, receiver))
    event_set = set(events)
    causes: dict[tuple[int, int, int], list[tuple[int, int, int]]] = {}
    n_edges = 0
    for tau, v, u in events:
        succs = []
        if run.n_hist[tau - 1, u] == 1 + run.n_vu_hist[(u, v)][tau - 1]:
            for u2 in run.graph.neighbors[u]:
                if (tau + 1, u, u2) in event_set:
                    succs.append((tau + 1, u, u2))
        causes[(tau, v, u)] = succs
        n_edges += len(succs)

    longest = 0
    explored = 0
    # Iterative DFS with an explicit per-path sender set.
    for root in events:
        stack: list[tuple[tuple[int, int, int], frozenset[int], int]] = [
            (root, frozenset([root[1]]), 1)
        ]
        while stack:
            node, senders, depth = stack.pop()
            explored += 1
            if explored > max_steps:
                raise RuntimeError(
                    f"wait-cause exploration exceeded {max_steps} steps"
                )
            longest = max(longest, depth)
            for succ in causes[node]:
                if succ[1] in senders:
                    raise LoopDetected(
                        f"wait by node {succ[1]} recurs along a cause chain "
                        f"starting at round {root[0]}"
                    )
                stack.append((succ, senders | {succ[1]}, depth + 1))
    return WaitChainReport(
        n_events=len(events),
        n_cause_edges=n_edges,
        longest_chain=longest,
        paths_explored=explored,
    )


# ----------------------------------------------------------------------
# Wasted-round domination.


@dataclass(frozen=True)
class DominationReport:
    node: int
    first_round: int
    rounds_checked: int
    wasted_rounds: int
    y_bits: tuple[int, ...]


def _blame_slots(g, v: int) -> list[list[tuple[int, int]]]:
    """Edges that can be blamed for a stall at v, grouped by depth.

    slots[k] lists the edges incident to any node reachable from v by a
    simple path with exactly k hops.  A stall at v in round tau that is
    not explained by an erasure incident to v in round tau itself must
    be caused by a neighbor that stalled in round tau - 1, and the
    chain of blamed nodes never repeats, so it traces a simple path;
    the erasure that started it sits k rounds back for some such path.
    """
    depth_nodes: list[set[int]] = [set() for _ in range(g.n_nodes)]

    def walk(node: int, depth: int, visited: frozenset[int]) -> None:
        depth_nodes[depth].add(node)
        for u in g.neighbors[node]:
            if u not in visited:
                walk(u, depth + 1, visited | {u})

    walk(v, 0, frozenset([v]))
    slots = []
    for nodes in depth_nodes:
        edges = sorted(
            {e for e in g.edges if e[0] in nodes or e[1] in nodes}
        )
        slots.append(edges)
    return slots


def wasted_round_dominator(run, v: int) -> DominationReport:
    """Check that every wasted round at v is covered by a blamable erasure.

    For every round tau, n_v(tau) = n_v(tau-1) implies some edge in the
    depth-k blame slot was erased in round tau - k for some k (see
    `_blame_slots`).  The per-round cover bits Y_tau are returned so a
    caller can compare the wasted-round process against them directly.
    """
    _require_repetition(run)
    g = run.graph
    if not 0 <= v < g.n_nodes:
        raise ValueError(f"node {v} out of range")
    slots = _blame_slots(g, v)
    wasted = 0
    y_bits = []
    for tau in range(1, run.rounds + 1):
        y_tau = any(
            _edge_erased(run, a, b, tau - k)
            for k, edges in enumerate(slots)
            if tau - k >= 1
            for a, b in edges
        )
        y_bits.append(int(y_tau))
        x_tau = int(run.n_hist[tau, v]) == int(run.n_hist[tau - 1, v])
        if not x_tau:
            continue
        wasted += 1
        if not y_tau:
            raise DominationViolated(
                f"round {tau} wasted at node {v} without a covering erasure"
            )
    return DominationReport(
        node=v,
        first_round=1,
        rounds_checked=run.rounds,
        wasted_rounds=wasted,
        y_bits=tuple(y_bits),
    )
