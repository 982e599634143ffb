"""Random causal streaming code over GF(2) with anytime decoding.

One message block b_t of lambda_bits enters the encoder each round; the
round-t channel word is the causal convolution

    c_t = G_1 b_t + G_2 b_{t-1} + ... + G_t b_1        (over GF(2))

with each G_i an (n_packets * lambda_bits) x lambda_bits block drawn iid
Bernoulli(1/2) from a seeded ensemble.  c_t is split into n_packets
packets that are erased independently.  Because every received packet is
a parity constraint over the whole message prefix, late packets keep
sharpening estimates of old blocks: decoding delay, not loss, is the
failure mode, and the probability that a block is still undecoded d
rounds later decays exponentially in d.

Implementation notes, since the hot loops are unusual:

* The encoder keeps one big Python int F holding the contributions of all
  pushed blocks to every future round.  Pushing block b at time m XORs a
  precomputed "stacked column" combination shifted by (m-1) channel words;
  emitting round t is a shift-and-mask.  Stacked columns are combined
  through 256-entry byte tables, so a push costs ceil(lambda/8) table
  lookups and one big XOR instead of lambda column XORs.

* The decoder mirrors the construction: it maintains the predicted
  channel stream implied by the blocks decoded so far.  While it is
  caught up, a round is decoded by applying a precomputed GF(2) left
  inverse for the delivered packet subset to the residual (received XOR
  predicted), costing lambda parity operations.  When the delivered
  subset does not pin the block down, the round's unknowns enter an
  incremental elimination window that is retired once its blocks are
  recovered.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import (
    DimensionMismatch,
    HorizonExceeded,
    InternalConsistencyError,
    MaxRetries,
    RateOutOfRange,
)
from .gf2 import BitMatrix, IncrementalSolver, left_inverse, parity, rank
from .infomath import entropy, inv_entropy

DEFAULT_HORIZON_CAP = 512


@dataclass(frozen=True)
class CodeParams:
    """Ensemble parameters: block width, packets per round, seed."""

    lambda_bits: int
    n_packets: int
    ensemble_seed: int

    def __post_init__(self) -> None:
        if self.lambda_bits < 1:
            raise ValueError(f"lambda_bits must be positive, got {self.lambda_bits}")
        if self.n_packets < 1:
            raise ValueError(f"n_packets must be positive, got {self.n_packets}")

    @property
    def rate(self) -> float:
        """Message bits per channel bit, 1 / n_packets."""
        return 1.0 / self.n_packets


class TreeCode:
    """A concrete sampled ensemble, shared by all encoders/decoders of a run.

    The first generator block must have full column rank so that a round
    with every packet delivered always decodes immediately; ensembles
    failing that are redrawn with a bumped salt (MaxRetries after
    max_salt attempts, which for lambda_bits >= 8 is astronomically
    unlikely to be needed).
    """

    def __init__(self, params: CodeParams, horizon: int, max_salt: int = 10):
        if horizon < 1:
            raise ValueError(f"horizon must be positive, got {horizon}")
        self.params = params
        self.horizon = horizon
        lam = params.lambda_bits
        nlam = params.n_packets * lam
        self.word_bits = nlam

        for salt in range(max_salt):
            seed = rng.derive_seed(params.ensemble_seed, rng.TAG_CODE, salt)
            bits = self._sample_bits(seed, horizon, nlam, lam)
            g1_cols = [
                int.from_bytes(
                    np.packbits(bits[0, :, j], bitorder="little").tobytes(), "little"
                )
                for j in range(lam)
            ]
            if rank(g1_cols) == lam:
                self.salt = salt
                break
        else:
            raise MaxRetries(
                f"no full-rank first block in {max_salt} ensemble draws"
            )

        # Per-block row masks: row_masks[i-1][rho] = G_i[rho, :] as a
        # lambda-bit int.  Used to assemble elimination-window equations.
        packed_rows = np.packbits(bits, axis=2, bitorder="little")
        self._row_masks = [
            [int.from_bytes(packed_rows[i, r].tobytes(), "little") for r in range(nlam)]
            for i in range(horizon)
        ]

        # Stacked columns: bit (i-1)*nlam + rho of column j is G_i[rho, j].
        cols = []
        for j in range(lam):
            col_bits = bits[:, :, j].reshape(-1)
            cols.append(
                int.from_bytes(np.packbits(col_bits, bitorder="little").tobytes(), "little")
            )

        # Byte-indexed combination tables over the stacked columns.
        self._chunks: list[tuple[int, int]] = []
        off = 0
        while off < lam:
            self._chunks.append((off, min(8, lam - off)))
            off += 8
        self._tables = []
        for off, width in self._chunks:
            tbl = [0] * (1 << width)
            for v in range(1, 1 << width):
                low = v & -v
                tbl[v] = tbl[v ^ low] ^ cols[off + low.bit_length() - 1]
            self._tables.append(tbl)

        self._total_mask = (1 << (horizon * nlam)) - 1
        self._lam_mask = (1 << lam) - 1
        self._subset_cache: dict[tuple[int, ...], list[int] | None] = {}

    @staticmethod
    def _sample_bits(seed: int, horizon: int, nlam: int, lam: int) -> np.ndarray:
        """(horizon, nlam, lam) uint8 Bernoulli(1/2) array, 64 bits per draw."""
        n_words = (lam + 63) // 64
        blocks = np.arange(1, horizon + 1, dtype=np.uint64)[:, None, None]
        rows = np.arange(nlam, dtype=np.uint64)[None, :, None]
        words = np.arange(n_words, dtype=np.uint64)[None, None, :]
        drawn = rng.mix_vec(seed, blocks, rows, words)
        raw = drawn.astype("<u8").view(np.uint8).reshape(horizon, nlam, n_words * 8)
        bits = np.unpackbits(raw, axis=2, bitorder="little")
        return bits[:, :, :lam]

    def generator_block(self, i: int) -> BitMatrix:
        """G_i as an explicit (n_packets*lambda) x lambda matrix, 1-based i."""
        if not 1 <= i <= self.horizon:
            raise DimensionMismatch(f"block {i} outside 1..{self.horizon}")
        return BitMatrix(self._row_masks[i - 1], self.params.lambda_bits)

    def row_mask(self, i: int, row: int) -> int:
        return self._row_masks[i - 1][row]

    def contribution(self, message: int) -> int:
        """Stacked contribution of one message block to rounds 1..horizon."""
        if message < 0 or message >> self.params.lambda_bits:
            raise DimensionMismatch("message wider than lambda_bits")
        acc = 0
        for (off, width), tbl in zip(self._chunks, self._tables):
            acc ^= tbl[(message >> off) & ((1 << width) - 1)]
        return acc

    def segment(self, stream: int, round_index: int, slot: int) -> int:
        """Packet `slot` of round `round_index` inside a stacked stream int."""
        lam = self.params.lambda_bits
        shift = (round_index - 1) * self.word_bits + slot * lam
        return (stream >> shift) & self._lam_mask

    def subset_transform(self, slots: tuple[int, ...]) -> list[int] | None:
        """Left inverse of G_1 restricted to the given packet rows.

        None when those packets alone do not determine a block.  Cached;
        the all-packets subset always succeeds by the rank guarantee.
        """
        key = tuple(sorted(slots))
        if key not in self._subset_cache:
            lam = self.params.lambda_bits
            rows = [self._row_masks[0][s * lam + r] for s in key for r in range(lam)]
            self._subset_cache[key] = left_inverse(BitMatrix(rows, lam))
        return self._subset_cache[key]


class TreeEncoder:
    """Causal encoder: one push per round, n_packets out."""

    def __init__(self, code: TreeCode):
        self.code = code
        self._state = 0
        self._t = 0

    @property
    def rounds_pushed(self) -> int:
        return self._t

    def encode_step(self, message: int) -> list[int]:
        """Push this round's block, return the n_packets channel packets."""
        code = self.code
        self._t += 1
        if self._t > code.horizon:
            raise HorizonExceeded(
                f"encoder pushed {self._t} rounds, horizon {code.horizon}"
            )
        self._state ^= code.contribution(message) << ((self._t - 1) * code.word_bits)
        self._state &= code._total_mask
        return [
            code.segment(self._state, self._t, s)
            for s in range(code.params.n_packets)
        ]


class AnytimeDecoder:
    """Streaming decoder tracking the longest fully-decoded block prefix."""

    def __init__(self, code: TreeCode):
        self.code = code
        self._t = 0
        self._prefix = 0
        self._values: list[int] = []
        self._cum = 0  # predicted stream from decoded blocks
        self._solver: IncrementalSolver | None = None
        self._solver_base = 0
        self._base_cum = 0
        self._harvested = 0

    @property
    def prefix(self) -> int:
        """Number of leading blocks b_1..b_prefix recovered so far."""
        return self._prefix

    @property
    def rounds_seen(self) -> int:
        return self._t

    def message(self, m: int) -> int:
        """Decoded block m (1-based, m <= prefix)."""
        if not 1 <= m <= self._prefix:
            raise DimensionMismatch(f"block {m} not decoded (prefix {self._prefix})")
        return self._values[m - 1]

    def _commit(self, block: int, message: int) -> None:
        code = self.code
        self._cum ^= code.contribution(message) << ((block - 1) * code.word_bits)
        self._cum &= code._total_mask
        self._values.append(message)
        self._prefix += 1

    def decoder_receive(self, round_index: int, delivered: list[tuple[int, int]]) -> int:
        """Feed one round's surviving packets; returns the new prefix.

        `delivered` holds (slot, packet_bits) pairs for packets that got
        through; erased ones are simply absent.  Rounds must be fed in
        order, including empty ones.
        """
        code = self.code
        lam = code.params.lambda_bits
        if round_index != self._t + 1:
            raise ValueError(
                f"rounds must be fed in order: got {round_index} after {self._t}"
            )
        if round_index > code.horizon:
            raise HorizonExceeded(
                f"round {round_index} beyond decoder horizon {code.horizon}"
            )
        self._t = round_index
        delivered = sorted(delivered)
        slots = tuple(s for s, _ in delivered)
        if len(set(slots)) != len(slots):
            raise ValueError(f"duplicate slots in {slots}")
        for s, bits in delivered:
            if not 0 <= s < code.params.n_packets:
                raise DimensionMismatch(f"slot {s} of {code.params.n_packets}")
            if bits < 0 or bits >> lam:
                raise DimensionMismatch("packet wider than lambda_bits")

        if self._solver is None and self._prefix == round_index - 1 and delivered:
            transform = code.subset_transform(slots)
            if transform is not None:
                resid = 0
                for pos, (s, bits) in enumerate(delivered):
                    resid |= (bits ^ code.segment(self._cum, round_index, s)) << (pos * lam)
                message = 0
                for j, mask in enumerate(transform):
                    message |= parity(mask & resid) << j
                self._commit(round_index, message)
                for s, bits in delivered:
                    if code.segment(self._cum, round_index, s) != bits:
                        raise InternalConsistencyError(
                            "decoded block does not reproduce the received packets"
                        )
                return self._prefix

        if self._solver is None:
            self._solver = IncrementalSolver(block_bits=lam)
            self._solver_base = self._prefix
            self._base_cum = self._cum
            self._harvested = 0
        solver = self._solver
        while self._solver_base + solver.n_blocks < round_index:
            solver.append_block()
        for s, bits in delivered:
            resid = bits ^ code.segment(self._base_cum, round_index, s)
            for r in range(lam):
                mask = 0
                for w in range(solver.n_blocks):
                    i = round_index - (self._solver_base + 1 + w)
                    mask |= code.row_mask(i + 1, s * lam + r) << (w * lam)
                solver.add_equation(mask, (resid >> r) & 1)
        nblk, vals = solver.decoded_prefix()
        for m in range(self._harvested, nblk):
            self._commit(self._solver_base + 1 + m, vals[m])
        self._harvested = nblk
        if self._prefix == round_index:
            self._solver = None
        return self._prefix


# ----------------------------------------------------------------------
# Wait/data framing for the consensus protocol (72-bit blocks).

FRAME_BITS = 72
_TAG_WAIT = 0x00
_TAG_DATA = 0x01


def frame_wait() -> int:
    """A 'nothing new this round' block: zero tag, zero payload."""
    return 0


def frame_data(value: float) -> int:
    """Tag byte 0x01 followed by the IEEE-754 big-endian payload."""
    raw = bytes([_TAG_DATA]) + struct.pack(">d", value)
    return int.from_bytes(raw, "little")


def parse_frame(bits: int) -> tuple[str, float | None]:
    if bits < 0 or bits >> FRAME_BITS:
        raise DimensionMismatch(f"frame wider than {FRAME_BITS} bits")
    raw = bits.to_bytes(FRAME_BITS // 8, "little")
    tag = raw[0]
    if tag == _TAG_WAIT:
        if any(raw[1:]):
            raise InternalConsistencyError("wait frame with nonzero payload")
        return ("wait", None)
    if tag == _TAG_DATA:
        return ("data", struct.unpack(">d", raw[1:])[0])
    raise InternalConsistencyError(f"unknown frame tag {tag:#x}")


# ----------------------------------------------------------------------
# Reliability exponent of the ensemble over a bit-erasure channel.


def bit_erasure_rate(p_packet: float, lambda_bits: int) -> float:
    """Per-bit erasure probability p' with p'**lambda = packet loss p."""
    if not 0.0 <= p_packet <= 1.0:
        raise ValueError(f"packet erasure probability in [0,1], got {p_packet}")
    return p_packet ** (1.0 / lambda_bits)


def gamma1(p_prime: float) -> float:
    """Lower knee of the exponent curve: 1 - H(p'/(1+p'))."""
    _check_p_prime(p_prime)
    return 1.0 - entropy(p_prime / (1.0 + p_prime))


def gamma2(p_prime: float) -> float:
    """Upper knee of the exponent curve: (1-p')/(1+p')."""
    _check_p_prime(p_prime)
    return (1.0 - p_prime) / (1.0 + p_prime)


def _check_p_prime(p_prime: float) -> None:
    if not 0.0 < p_prime < 1.0:
        raise ValueError(f"bit erasure rate must be in (0,1), got {p_prime}")


def exponent_E(rate: float, p_prime: float) -> float:
    """Error exponent E(R) of the random causal ensemble, in bits per bit.

    Piecewise in R with knees at gamma1 and gamma2; zero exactly at the
    erasure capacity R = 1 - p', undefined above it (RateOutOfRange).
    """
    _check_p_prime(p_prime)
    if rate < 0.0:
        raise ValueError(f"rate must be nonnegative, got {rate}")
    cap = 1.0 - p_prime
    if rate > cap:
        raise RateOutOfRange(f"rate {rate} above erasure capacity {cap}")
    if rate == cap:
        return 0.0
    if rate <= gamma1(p_prime):
        return inv_entropy(1.0 - rate) * math.log2(1.0 / p_prime)
    if rate <= gamma2(p_prime):
        return 1.0 - math.log2(1.0 + p_prime) - rate
    return rate * math.log2(rate / (1.0 - p_prime)) + (1.0 - rate) * math.log2(
        (1.0 - rate) / p_prime
    )


# ----------------------------------------------------------------------
# Empirical decoding-delay exponent.


@dataclass(frozen=True)
class BetaEstimate:
    """Fit of log2 P(delay >= d) against d for one code and erasure rate.

    beta_hat is the decay in bits per round of delay; the envelope
    P(delay >= d) <= 2**(-beta_hat*(d - d0)) holds at every fitted point
    by construction of d0.
    """

    beta_hat: float
    d0: float
    r_squared: float
    rows: tuple[tuple[int, int, int, float], ...]  # (delay, n_obs, failures, p_hat)
    fit_range: tuple[int, int]
    params: CodeParams
    p: float
    rounds: int
    trials: int


def measure_beta(
    params: CodeParams,
    p: float,
    rounds: int,
    trials: int,
    seed: int,
    min_failures: int = 10,
) -> BetaEstimate:
    """Monte Carlo estimate of the anytime decay exponent.

    Streams the all-zero message (the code is linear, so decodability of
    a block depends only on the erasure pattern) over a single link with
    n_packets independent erasures per round, and histograms the decoder
    lag delay(t) = t - prefix(t).  P(delay >= d) is averaged over t in
    [d, rounds] and over trials; the exponent is the least-squares slope
    over delays with at least min_failures observed failures.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"erasure probability must be in [0,1), got {p}")
    if rounds < 1 or trials < 1:
        raise ValueError("rounds and trials must be positive")
    code = TreeCode(params, horizon=rounds)
    thr = rng.threshold(p)
    n = params.n_packets
    fail_at_least: list[int] = [0] * (rounds + 2)
    for trial in range(trials):
        tseed = rng.derive_seed(seed, rng.TAG_TRIAL, trial)
        dec = AnytimeDecoder(code)
        for t in range(1, rounds + 1):
            delivered = [
                (s, 0)
                for s in range(n)
                if rng.mix(tseed, rng.TAG_CHANNEL, 0, t, s) >= thr
            ]
            prefix = dec.decoder_receive(t, delivered)
            delay = t - prefix
            if delay > 0:
                fail_at_least[min(delay, rounds + 1)] += 1
    # fail_at_least[d] currently counts delay == d exactly; make it a tail count.
    for d in range(rounds, 0, -1):
        fail_at_least[d] += fail_at_least[d + 1]

    rows = []
    for d in range(1, rounds + 1):
        failures = fail_at_least[d]
        if failures == 0:
            break
        n_obs = trials * (rounds - d + 1)
        rows.append((d, n_obs, failures, failures / n_obs))
    if not rows:
        raise ValueError("no decoding delays observed; p too small for this bench")
    fit_rows = [r for r in rows if r[2] >= min_failures]
    if len(fit_rows) < 2:
        raise ValueError(
            f"only {len(fit_rows)} delay values with >= {min_failures} failures; "
            "increase trials or rounds"
        )
    xs = np.array([r[0] for r in fit_rows], dtype=float)
    ys = np.log2([r[3] for r in fit_rows])
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * xs + intercept
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - np.mean(ys)) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    beta_hat = -float(slope)
    if beta_hat > 0:
        d0 = max(d + math.log2(ph) / beta_hat for d, _, _, ph in fit_rows)
    else:
        d0 = math.inf
    return BetaEstimate(
        beta_hat=beta_hat,
        d0=float(d0),
        r_squared=r_squared,
        rows=tuple(rows),
        fit_range=(fit_rows[0][0], fit_rows[-1][0]),
        params=params,
        p=p,
        rounds=rounds,
        trials=trials,
    )
