"""Packet-erasure channel with replayable, counter-indexed draws.

Convention (used everywhere in the package): the indicator X^{ij}_k is 1
when the packet sent BY node j TO node i in round k is received, 0 when
it is erased.  Under the symmetric model the two directions of an edge
are erased together (X^{ij} = X^{ji}); under the asymmetric model every
directed pair draws independently.  Multi-packet rounds address the
packets with a slot index, each slot erased independently.

Draws are pure functions of (seed, mode, pair, round, slot), so a round
can be resampled in isolation, schedules can be dumped to CSV without
storing state, and the proof-checking oracles can re-query the exact
erasures a simulation saw.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import rng
from .graphs import Graph

MODES = ("symmetric", "asymmetric")


@dataclass(frozen=True)
class ErasureModel:
    """Channel mode plus per-packet erasure probability."""

    mode: str
    p: float

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"erasure probability must be in [0,1], got {self.p}")


def pair_key(mode: str, n_nodes: int, receiver: int, sender: int) -> int:
    """Stable integer key for a directed pair under the given mode.

    Symmetric mode collapses both directions of an edge to one key, which
    is what makes X^{ij} == X^{ji} hold by construction.
    """
    if mode == "symmetric":
        lo, hi = min(receiver, sender), max(receiver, sender)
        return lo * n_nodes + hi
    return receiver * n_nodes + sender


def delivered(
    model: ErasureModel, n_nodes: int, seed: int, receiver: int, sender: int,
    round_index: int, slot: int = 0,
) -> bool:
    """X^{receiver,sender} for one round and slot (True = received)."""
    key = pair_key(model.mode, n_nodes, receiver, sender)
    word = rng.mix(seed, rng.TAG_CHANNEL, key, round_index, slot)
    return word >= rng.threshold(model.p)


def delivered_vec(
    model: ErasureModel, n_nodes: int, seeds: np.ndarray, receiver: int,
    sender: int, round_index: int, slot: int = 0,
) -> np.ndarray:
    """Vectorized delivered() across an array of seeds (one per trial)."""
    if model.p <= 0.0:
        return np.ones(np.shape(seeds), dtype=bool)
    if model.p >= 1.0:
        return np.zeros(np.shape(seeds), dtype=bool)
    key = pair_key(model.mode, n_nodes, receiver, sender)
    words = rng.mix_vec(
        seeds, np.uint64(rng.TAG_CHANNEL), np.uint64(key),
        np.uint64(round_index), np.uint64(slot),
    )
    return words >= np.uint64(rng.threshold(model.p))


@dataclass(frozen=True)
class RoundErasures:
    """Lazy view of the erasure pattern of one round."""

    graph: Graph
    model: ErasureModel
    seed: int
    round_index: int

    def delivered(self, receiver: int, sender: int, slot: int = 0) -> bool:
        if sender not in self.graph.neighbors[receiver]:
            raise ValueError(f"({receiver},{sender}) is not an edge")
        return delivered(
            self.model, self.graph.n_nodes, self.seed, receiver, sender,
            self.round_index, slot,
        )

    def x_matrix(self, slot: int = 0) -> np.ndarray:
        """Indicator matrix with X[i, j] = 1 iff i received from j."""
        n = self.graph.n_nodes
        x = np.zeros((n, n), dtype=int)
        for i, j in self.graph.directed_pairs:
            if self.delivered(i, j, slot):
                x[i, j] = 1
        return x


def sample_round(g: Graph, model: ErasureModel, seed: int, round_index: int) -> RoundErasures:
    """Erasure pattern of round `round_index` (rounds are 1-based)."""
    if round_index < 1:
        raise ValueError(f"rounds are 1-based, got {round_index}")
    return RoundErasures(graph=g, model=model, seed=seed, round_index=round_index)


@dataclass(frozen=True)
class ErasureSchedule:
    """All rounds 1..rounds of a run, queryable and dumpable."""

    graph: Graph
    model: ErasureModel
    seed: int
    rounds: int
    slots: int = 1

    def round(self, round_index: int) -> RoundErasures:
        if not 1 <= round_index <= self.rounds:
            raise ValueError(f"round {round_index} outside 1..{self.rounds}")
        return sample_round(self.graph, self.model, self.seed, round_index)

    def write_csv(self, path: str) -> None:
        """Rows (round, i, j, slot, bit); bit = 1 means delivered.

        Symmetric schedules list each edge once as (i < j); asymmetric
        ones list both directions, (i, j) meaning "j's packet to i".
        """
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "i", "j", "slot", "bit"])
            for k in range(1, self.rounds + 1):
                view = self.round(k)
                if self.model.mode == "symmetric":
                    pairs = self.graph.edges
                else:
                    pairs = self.graph.directed_pairs
                for i, j in pairs:
                    for s in range(self.slots):
                        w.writerow([k, i, j, s, int(view.delivered(i, j, s))])


def sample_schedule(
    g: Graph, model: ErasureModel, seed: int, rounds: int, slots: int = 1
) -> ErasureSchedule:
    if rounds < 0:
        raise ValueError(f"rounds must be nonnegative, got {rounds}")
    return ErasureSchedule(graph=g, model=model, seed=seed, rounds=rounds, slots=slots)


def effective_laplacian(g: Graph, entry: RoundErasures) -> np.ndarray:
    """Laplacian of the links actually received in one round.

    Row i counts the packets node i received: diagonal (i,i) holds the
    number of delivered in-neighbors, entry (i,j) is -1 when i received
    from j.  Rows of non-receivers are zero, so the matrix annihilates
    the all-ones vector but is not symmetric under asymmetric erasures.
    """
    n = g.n_nodes
    lap = np.zeros((n, n), dtype=float)
    for i, j in g.directed_pairs:
        if entry.delivered(i, j):
            lap[i, i] += 1.0
            lap[i, j] -= 1.0
    return lap


def effective_update_matrix(g: Graph, entry: RoundErasures, eps: float) -> np.ndarray:
    """One-round update matrix I - eps * effective_laplacian."""
    return np.eye(g.n_nodes) - eps * effective_laplacian(g, entry)
