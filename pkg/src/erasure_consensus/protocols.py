"""Consensus iterations over erasure channels: uncoded, repetition, streamed.

Three protocols compute the average of the initial vector x0 on a
connected graph with the linear update

    x_v(k+1) = x_v(k) - eps * sum_u (x_v(k) - x_u(k)),   u ~ v.

* Uncoded: every node applies whatever packets happened to arrive this
  round.  Each round is one (noisy) iteration; the state drifts to a
  random limit whose mean-square distance from the true average is
  governed by the second-moment analysis in `analysis`.

* Repetition-coded (symmetric erasures): nodes run the exact iteration
  above but advance only when a full set of neighbor iterates is in.
  Each node v keeps, per neighbor u, the newest iterate index of u it
  holds (n_vu, initially -1), and can compute iterates up to
  n_v = 1 + min_u n_vu.  A sender repeats an iterate until it knows the
  receiver has it; because erasures are symmetric, the sender learns
  this for free: its own counter for the reverse direction mirrors the
  receiver's state, so u sends iterate n_vu + 1 whenever it is ahead
  (n_u > n_vu) and an explicit 'wait' packet otherwise.  Counters obey

      n_vu(t+1) = n_vu(t) + X_t+1 * 1{n_u(t) > n_vu(t)}

  (X the delivery indicator), each n_v rises by at most 1 per round and
  neighbor counters never drift more than 1 apart.

* Stream-coded (works under asymmetric erasures): each node broadcasts
  one 72-bit frame per round, either a tagged iterate value or a 'wait',
  through its own causal-code encoder (`treecode`); every neighbor runs
  a decoder on the packet stream it actually receives.  Framing forms a
  self-synchronizing stream, so no feedback is needed: n_vu counts the
  data frames inside the receiver's decoded prefix.  A node frames a new
  iterate when all neighbor iterates it needs are decoded (at most one
  new iterate per round), and separately computes iterates eagerly up to
  n_v = 1 + min_u n_vu; what has been computed but not yet framed simply
  waits its turn.

All runs are pure functions of (graph, eps, model, x0, rounds, seed);
histories carry enough state for the proof-checking oracles to audit
every counter transition against the channel draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import channel as channel_mod
from .channel import ErasureModel, RoundErasures
from .errors import HorizonExceeded, InternalConsistencyError, ModelMismatch
from .graphs import Graph
from .spectral import spectral_summary
from .treecode import (
    DEFAULT_HORIZON_CAP,
    AnytimeDecoder,
    CodeParams,
    TreeCode,
    TreeEncoder,
    frame_data,
    frame_wait,
    parse_frame,
)

WAIT = ("wait",)
ERASED = ("erased",)


def node_update(x_self: float, neighbor_values: list[float], eps: float) -> float:
    """One node's iterate update; summation order is fixed (ascending
    neighbor id) so independent replays are bit-identical."""
    acc = 0.0
    for xu in neighbor_values:
        acc += x_self - xu
    return x_self - eps * acc


def noiseless_step(x: np.ndarray, g: Graph, eps: float) -> np.ndarray:
    """One synchronous iteration with every link delivering."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for v in range(g.n_nodes):
        out[v] = node_update(float(x[v]), [float(x[u]) for u in g.neighbors[v]], eps)
    return out


def uncoded_step(x: np.ndarray, entry: RoundErasures, eps: float) -> np.ndarray:
    """One uncoded round: only delivered neighbor terms enter the sum."""
    g = entry.graph
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for v in range(g.n_nodes):
        vals = [float(x[u]) for u in g.neighbors[v] if entry.delivered(v, u)]
        out[v] = node_update(float(x[v]), vals, eps)
    return out


@dataclass
class ProtocolRun:
    """Common shape of a finished run.

    value_hist[t, v] is node v's readout after round t: its newest
    computed iterate for the coded protocols, the raw state for the
    uncoded one.  n_hist[t, v] is the iterate counter n_v(t) (for the
    uncoded protocol simply t).  err_hist is the Euclidean distance of
    the readout vector from the exact average of x0.
    """

    protocol: str
    graph: Graph
    model: ErasureModel
    eps: float
    x0: tuple[float, ...]
    rounds: int
    seed: int
    target: float
    n_hist: np.ndarray
    value_hist: np.ndarray
    err_hist: np.ndarray

    @property
    def min_rate(self) -> float:
        """min_v n_v(rounds) / rounds, the per-round iteration rate."""
        return float(np.min(self.n_hist[-1])) / self.rounds

    @property
    def final_values(self) -> np.ndarray:
        return self.value_hist[-1]


@dataclass
class UncodedRun(ProtocolRun):
    pass


@dataclass
class RepetitionRun(ProtocolRun):
    iterates: tuple[tuple[float, ...], ...]
    n_vu_hist: dict[tuple[int, int], list[int]]
    sent: dict[tuple[int, int], list[tuple]]
    received: dict[tuple[int, int], list[tuple]]


@dataclass
class TreecodeRun(ProtocolRun):
    code: CodeParams
    iterates: tuple[tuple[float, ...], ...]
    n_vu_hist: dict[tuple[int, int], list[int]]
    m_hist: np.ndarray
    frames: dict[int, list[tuple]]


def _check_x0(x0, n: int) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (n,):
        raise ValueError(f"x0 must have shape ({n},), got {x0.shape}")
    return x0


def run_uncoded(
    g: Graph, eps: float, model: ErasureModel, x0, rounds: int, seed: int
) -> UncodedRun:
    """Simulate the uncoded protocol; every round is an iteration."""
    spectral_summary(g, eps)  # validates connectivity and step size
    x0 = _check_x0(x0, g.n_nodes)
    if rounds < 0:
        raise ValueError("rounds must be nonnegative")
    target = float(np.mean(x0))
    n = g.n_nodes
    value_hist = np.empty((rounds + 1, n))
    value_hist[0] = x0
    x = x0.copy()
    for t in range(1, rounds + 1):
        x = uncoded_step(x, channel_mod.sample_round(g, model, seed, t), eps)
        value_hist[t] = x
    n_hist = np.repeat(np.arange(rounds + 1)[:, None], n, axis=1)
    err_hist = np.linalg.norm(value_hist - target, axis=1)
    return UncodedRun(
        protocol="uncoded", graph=g, model=model, eps=eps, x0=tuple(map(float, x0)),
        rounds=rounds, seed=seed, target=target, n_hist=n_hist,
        value_hist=value_hist, err_hist=err_hist,
    )


def run_repetition(
    g: Graph,
    eps: float,
    p: float,
    x0,
    rounds: int,
    seed: int,
    model: ErasureModel | None = None,
) -> RepetitionRun:
    """Simulate the repetition protocol under symmetric erasures.

    The sender-side mirror trick is only sound when both directions of an
    edge share their fate, so an asymmetric model is rejected.
    """
    if model is None:
        model = ErasureModel("symmetric", p)
    elif model.mode != "symmetric":
        raise ModelMismatch("repetition protocol requires the symmetric model")
    spectral_summary(g, eps)
    x0 = _check_x0(x0, g.n_nodes)
    if rounds < 0:
        raise ValueError("rounds must be nonnegative")
    n = g.n_nodes
    target = float(np.mean(x0))
    pairs = g.directed_pairs  # (receiver, sender)

    iterates: list[list[float]] = [[float(x0[v])] for v in range(n)]
    recv_val: dict[tuple[int, int], list[float]] = {pr: [] for pr in pairs}
    n_vu: dict[tuple[int, int], int] = {pr: -1 for pr in pairs}
    n_v = [0] * n
    n_vu_hist = {pr: [-1] for pr in pairs}
    sent: dict[tuple[int, int], list[tuple]] = {(u, v): [] for (v, u) in pairs}
    received: dict[tuple[int, int], list[tuple]] = {pr: [] for pr in pairs}
    n_hist = np.zeros((rounds + 1, n), dtype=int)
    value_hist = np.empty((rounds + 1, n))
    value_hist[0] = x0

    for t in range(1, rounds + 1):
        view = channel_mod.sample_round(g, model, seed, t)
        # All transmissions are decided from end-of-round t-1 state.
        outbox: dict[tuple[int, int], tuple] = {}
        for v, u in pairs:  # u sends to v
            mirror = n_vu[(v, u)]  # symmetric erasures keep this exact
            assert n_v[u] >= mirror, "sender fell behind its own mirror"
            if n_v[u] > mirror:
                k = mirror + 1
                outbox[(u, v)] = ("data", k, iterates[u][k])
            else:
                outbox[(u, v)] = WAIT
            sent[(u, v)].append(outbox[(u, v)])
        for v, u in pairs:
            symbol = outbox[(u, v)]
            got = view.delivered(v, u)
            old = n_vu[(v, u)]
            if not got:
                received[(v, u)].append(ERASED)
            else:
                received[(v, u)].append(symbol)
                if symbol[0] == "data":
                    _, k, val = symbol
                    assert k == old + 1, "delivered iterate must extend the counter"
                    recv_val[(v, u)].append(val)
                    n_vu[(v, u)] = k
            # Counter law: advance exactly on delivery while the sender is ahead.
            assert n_vu[(v, u)] == old + (1 if (got and n_v[u] > old) else 0)
            n_vu_hist[(v, u)].append(n_vu[(v, u)])
        for v in range(n):
            new_n = 1 + min(n_vu[(v, u)] for u in g.neighbors[v])
            assert new_n in (n_v[v], n_v[v] + 1), "n_v must grow by at most 1"
            if new_n == n_v[v] + 1:
                k = new_n
                vals = [recv_val[(v, u)][k - 1] for u in g.neighbors[v]]
                iterates[v].append(node_update(iterates[v][k - 1], vals, eps))
            n_v[v] = new_n
        for v, u in pairs:
            assert abs(n_v[v] - n_v[u]) <= 1, "neighbor counters drifted apart"
        n_hist[t] = n_v
        value_hist[t] = [iterates[v][n_v[v]] for v in range(n)]

    # Received values must equal the sender's true iterates (erasure
    # channels corrupt nothing; this guards the simulation itself).
    for v, u in pairs:
        for k, val in enumerate(recv_val[(v, u)]):
            assert val == iterates[u][k], "received value diverged from sender state"

    err_hist = np.linalg.norm(value_hist - target, axis=1)
    return RepetitionRun(
        protocol="repetition", graph=g, model=model, eps=eps,
        x0=tuple(map(float, x0)), rounds=rounds, seed=seed, target=target,
        n_hist=n_hist, value_hist=value_hist, err_hist=err_hist,
        iterates=tuple(tuple(i) for i in iterates), n_vu_hist=n_vu_hist,
        sent=sent, received=received,
    )


def run_treecode(
    g: Graph,
    eps: float,
    p: float,
    x0,
    rounds: int,
    code: CodeParams,
    seed: int,
    mode: str = "asymmetric",
    horizon_cap: int = DEFAULT_HORIZON_CAP,
    tree: TreeCode | None = None,
) -> TreecodeRun:
    """Simulate the stream-coded protocol (asymmetric or symmetric erasures).

    Every node drives one encoder (a broadcast: all neighbors receive the
    same packets, modulo their own erasures) and one decoder per incoming
    edge.  Frames are 72 bits, so the code must use lambda_bits=72; each
    of its n_packets packets is erased independently per receiver.

    Callers looping over many seeds can build `TreeCode(code, horizon=rounds)`
    once and pass it as `tree`; it must match `code` and `rounds` exactly.
    """
    if code.lambda_bits != 72:
        raise ValueError("stream framing requires lambda_bits=72")
    if rounds > horizon_cap:
        raise HorizonExceeded(f"rounds {rounds} above horizon cap {horizon_cap}")
    model = ErasureModel(mode, p)
    spectral_summary(g, eps)
    x0 = _check_x0(x0, g.n_nodes)
    if rounds < 1:
        raise ValueError("rounds must be positive")
    n = g.n_nodes
    target = float(np.mean(x0))
    pairs = g.directed_pairs
    if tree is None:
        tree = TreeCode(code, horizon=rounds)
    elif tree.params != code or tree.horizon != rounds:
        raise ValueError("prebuilt tree does not match code params and rounds")
    n_slots = code.n_packets

    encoders = [TreeEncoder(tree) for _ in range(n)]
    decoders = {pr: AnytimeDecoder(tree) for pr in pairs}
    frame_log: dict[int, list[tuple]] = {u: [] for u in range(n)}
    frame_bits: dict[int, list[int]] = {u: [] for u in range(n)}
    iterates: list[list[float]] = [[float(x0[v])] for v in range(n)]
    recv_val: dict[tuple[int, int], list[float]] = {pr: [] for pr in pairs}
    n_vu: dict[tuple[int, int], int] = {pr: -1 for pr in pairs}
    parsed: dict[tuple[int, int], int] = {pr: 0 for pr in pairs}
    n_vu_hist = {pr: [-1] for pr in pairs}
    n_v = [0] * n
    m_sent = [-1] * n
    n_hist = np.zeros((rounds + 1, n), dtype=int)
    m_hist = np.zeros((rounds + 1, n), dtype=int)
    m_hist[0] = -1
    value_hist = np.empty((rounds + 1, n))
    value_hist[0] = x0

    for t in range(1, rounds + 1):
        # 1. Frame and encode (decisions use end-of-round t-1 state).
        packets: list[list[int]] = []
        for u in range(n):
            ready = min(n_vu[(u, w)] for w in g.neighbors[u])
            if ready >= m_sent[u]:
                k = m_sent[u] + 1
                assert k < len(iterates[u]), "framing an uncomputed iterate"
                raw = frame_data(iterates[u][k])
                frame_log[u].append(("data", k, iterates[u][k]))
                m_sent[u] = k
            else:
                raw = frame_wait()
                frame_log[u].append(WAIT)
            frame_bits[u].append(raw)
            packets.append(encoders[u].encode_step(raw))
        # 2. Erase, deliver, decode.
        for v, u in pairs:
            delivered = [
                (s, packets[u][s])
                for s in range(n_slots)
                if channel_mod.delivered(model, n, seed, v, u, t, s)
            ]
            prefix = decoders[(v, u)].decoder_receive(t, delivered)
            while parsed[(v, u)] < prefix:
                idx = parsed[(v, u)] + 1
                raw = decoders[(v, u)].message(idx)
                if raw != frame_bits[u][idx - 1]:
                    raise InternalConsistencyError(
                        f"decoded frame {idx} on edge {u}->{v} differs from "
                        "what the sender emitted"
                    )
                kind, value = parse_frame(raw)
                if kind == "data":
                    k = n_vu[(v, u)] + 1
                    recv_val[(v, u)].append(value)
                    n_vu[(v, u)] = k
                parsed[(v, u)] = idx
            n_vu_hist[(v, u)].append(n_vu[(v, u)])
        # 3. Compute every iterate the new information supports.
        for v in range(n):
            new_n = 1 + min(n_vu[(v, u)] for u in g.neighbors[v])
            while len(iterates[v]) - 1 < new_n:
                k = len(iterates[v])
                vals = [recv_val[(v, u)][k - 1] for u in g.neighbors[v]]
                iterates[v].append(node_update(iterates[v][k - 1], vals, eps))
            n_v[v] = new_n
        n_hist[t] = n_v
        m_hist[t] = m_sent
        value_hist[t] = [iterates[v][n_v[v]] for v in range(n)]

    for v, u in pairs:
        for k, val in enumerate(recv_val[(v, u)]):
            assert val == iterates[u][k], "received value diverged from sender state"

    err_hist = np.linalg.norm(value_hist - target, axis=1)
    return TreecodeRun(
        protocol="treecode", graph=g, model=model, eps=eps,
        x0=tuple(map(float, x0)), rounds=rounds, seed=seed, target=target,
        n_hist=n_hist, value_hist=value_hist, err_hist=err_hist, code=code,
        iterates=tuple(tuple(i) for i in iterates), n_vu_hist=n_vu_hist,
        m_hist=m_hist, frames=frame_log,
    )
