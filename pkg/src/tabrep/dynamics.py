"""Recurrent transformer block over customer record sequences.

One shared refinement step (multi-head self-attention plus a position-wise
transition) is applied repeatedly; every sequence position carries its own
halting accumulator and stops refining once the accumulated halting
probability crosses 1 - epsilon, or at the step cap. The final sequence
state takes, per position, a snapshot at that position's halting step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import numeric
from .errors import AllMaskedError, ShapeMismatchError
from .numeric import NEG_MASK_VALUE, Parameter, Tensor


@dataclass(frozen=True)
class TransformerConfig:
    n_s: int = 8                 # max sequence length
    n_e: int = 32                # model width
    k: int = 4                   # attention heads
    t_max: int = 4               # refinement step cap
    act_epsilon: float = 0.01
    ponder_cost: float = 0.01
    dropout: float = numeric.DEFAULT_DROPOUT
    literal_scale: bool = False  # score scale sqrt(n_e) instead of sqrt(n_e/k)

    def __post_init__(self):
        if self.n_e % self.k:
            raise ValueError(f"width {self.n_e} not divisible by {self.k} heads")
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if not 0.0 < self.act_epsilon < 1.0:
            raise ValueError("act_epsilon must lie in (0, 1)")
        if self.ponder_cost < 0.0:
            raise ValueError("ponder_cost must be non-negative")

    @property
    def head_dim(self) -> int:
        return self.n_e // self.k

    @property
    def score_scale(self) -> float:
        return math.sqrt(self.n_e) if self.literal_scale else math.sqrt(self.head_dim)


@dataclass
class TransformerParams:
    """Step-shared weights: per-head projections, output mixer, transition
    pair, halting unit and the final sequence-to-vector mixer."""

    wq: list[Parameter]
    wk: list[Parameter]
    wv: list[Parameter]
    wo: Parameter
    ts_w1: Parameter
    ts_b1: Parameter
    ts_w2: Parameter
    ts_b2: Parameter
    halt_w: Parameter
    halt_b: Parameter
    wd: Parameter

    @classmethod
    def init(cls, config: TransformerConfig, rng: np.random.Generator, name: str,
             transition_hidden: int | None = None) -> "TransformerParams":
        n_e, hd = config.n_e, config.head_dim
        hidden = transition_hidden or 2 * n_e
        return cls(
            wq=[numeric.glorot_uniform((n_e, hd), rng, f"{name}.wq{i}") for i in range(config.k)],
            wk=[numeric.glorot_uniform((n_e, hd), rng, f"{name}.wk{i}") for i in range(config.k)],
            wv=[numeric.glorot_uniform((n_e, hd), rng, f"{name}.wv{i}") for i in range(config.k)],
            wo=numeric.glorot_uniform((n_e, n_e), rng, f"{name}.wo"),
            ts_w1=numeric.glorot_uniform((n_e, hidden), rng, f"{name}.ts_w1"),
            ts_b1=numeric.zeros_param((hidden,), f"{name}.ts_b1"),
            ts_w2=numeric.glorot_uniform((hidden, n_e), rng, f"{name}.ts_w2"),
            ts_b2=numeric.zeros_param((n_e,), f"{name}.ts_b2"),
            halt_w=numeric.glorot_uniform((n_e, 1), rng, f"{name}.halt_w"),
            halt_b=numeric.zeros_param((1,), f"{name}.halt_b"),
            wd=numeric.glorot_uniform((config.n_s * n_e, n_e), rng, f"{name}.wd"),
        )

    def parameters(self) -> list[Parameter]:
        return [*self.wq, *self.wk, *self.wv, self.wo, self.ts_w1, self.ts_b1,
                self.ts_w2, self.ts_b2, self.halt_w, self.halt_b, self.wd]


def coordinate_embedding(step: int, n_s: int, n_e: int) -> np.ndarray:
    """Constant (position, time) coordinate matrix for one refinement step.

    Sinusoidal position code plus a sinusoidal code of the step index,
    summed; rows differ by position, steps shift every row by the same
    time component. Deterministic, never learned.
    """
    if step < 1:
        raise ValueError("step index starts at 1")
    return _sinusoid(np.arange(n_s), n_e) + _sinusoid(np.array([step]), n_e)


def _sinusoid(positions: np.ndarray, width: int) -> np.ndarray:
    half = (width + 1) // 2
    freqs = np.exp(-np.log(10000.0) * (np.arange(half) / max(1, half)))
    angles = positions[:, None] * freqs[None, :]
    code = np.zeros((len(positions), width))
    code[:, 0::2] = np.sin(angles[:, : (width + 1) // 2])
    code[:, 1::2] = np.cos(angles[:, : width // 2])
    return code


def mhsa(e: Tensor, params: TransformerParams, config: TransformerConfig,
         mask: np.ndarray | None = None) -> Tensor:
    """Multi-head dot-product self-attention over the position axis.

    Accepts [n_s, n_e] or batched [b, n_s, n_e]. Masked (padded) key
    positions receive a large negative score so their softmax weight
    underflows to exactly zero; attention rows over valid keys sum to 1.
    """
    squeeze = e.ndim == 2
    if squeeze:
        e = numeric.reshape(e, (1,) + e.shape)
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)[None, :]
    if e.ndim != 3 or e.shape[-1] != config.n_e:
        raise ShapeMismatchError("mhsa", e.shape, (None, config.n_e))
    b, n_s, n_e = e.shape
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (b, n_s):
            raise ShapeMismatchError("mhsa mask", mask.shape, (b, n_s))
        if not mask.any(axis=1).all():
            raise AllMaskedError("a sequence in the batch has no valid position")

    q = numeric.matmul(e, numeric.concat(params.wq, axis=1))   # [b, n_s, n_e]
    k = numeric.matmul(e, numeric.concat(params.wk, axis=1))
    v = numeric.matmul(e, numeric.concat(params.wv, axis=1))
    heads, hd = config.k, config.head_dim

    def split(x):
        x = numeric.reshape(x, (b, n_s, heads, hd))
        return numeric.transpose(x, (0, 2, 1, 3))              # [b, k, n_s, hd]

    q, k, v = split(q), split(k), split(v)
    scores = numeric.matmul(q, numeric.swap_axes(k, -1, -2)) * (1.0 / config.score_scale)
    if mask is not None:
        key_mask = mask[:, None, None, :].astype(np.float64)   # [b, 1, 1, n_s]
        scores = scores * key_mask + (-NEG_MASK_VALUE) * (1.0 - key_mask)
    weights = numeric.softmax(scores, axis=-1)
    mixed = numeric.matmul(weights, v)                         # [b, k, n_s, hd]
    mixed = numeric.transpose(mixed, (0, 2, 1, 3))
    mixed = numeric.reshape(mixed, (b, n_s, n_e))
    out = numeric.matmul(mixed, params.wo)
    return numeric.reshape(out, (n_s, n_e)) if squeeze else out


def attention_weights(e: Tensor, params: TransformerParams, config: TransformerConfig,
                      mask: np.ndarray | None = None) -> np.ndarray:
    """Forward-only attention matrix [b, k, n_s, n_s] for inspection."""
    squeeze = e.ndim == 2
    data = e.data[None] if squeeze else e.data
    b, n_s, n_e = data.shape
    wq = np.concatenate([p.data for p in params.wq], axis=1)
    wk = np.concatenate([p.data for p in params.wk], axis=1)
    q = (data @ wq).reshape(b, n_s, config.k, config.head_dim).transpose(0, 2, 1, 3)
    k = (data @ wk).reshape(b, n_s, config.k, config.head_dim).transpose(0, 2, 1, 3)
    scores = q @ k.swapaxes(-1, -2) / config.score_scale
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if squeeze:
            m = m[None, :]
        key_mask = m[:, None, None, :]
        scores = np.where(key_mask, scores, -NEG_MASK_VALUE)
    shifted = scores - scores.max(axis=-1, keepdims=True)
    weights = np.exp(shifted)
    weights /= weights.sum(axis=-1, keepdims=True)
    return weights[0] if squeeze else weights


def transformer_step(e: Tensor, step: int, params: TransformerParams, config: TransformerConfig,
                     mask: np.ndarray | None = None, train: bool = False,
                     rng: np.random.Generator | None = None) -> Tensor:
    """One refinement: coordinates, attention and transition with residual
    layer-norm around each, dropout on the sublayer outputs in training."""
    coords = Tensor(coordinate_embedding(step, e.shape[-2], e.shape[-1]))
    x = e + coords
    attended = numeric.dropout(mhsa(x, params, config, mask), config.dropout, train, rng)
    a = numeric.layer_norm(x + attended, axis=-1)
    hidden = numeric.relu(numeric.matmul(a, params.ts_w1) + params.ts_b1)
    ts = numeric.dropout(numeric.matmul(hidden, params.ts_w2) + params.ts_b2, config.dropout, train, rng)
    return numeric.layer_norm(a + ts, axis=-1)


@dataclass
class PonderStats:
    """Halting bookkeeping for one adaptive run."""

    halt_steps: np.ndarray          # [b, n_s] int, 0 on padded positions
    mean_steps: float
    mean_remainder: float
    accumulated: np.ndarray = field(repr=False, default=None)

    @property
    def mean_ponder(self) -> float:
        return self.mean_steps + self.mean_remainder


def act_run(e0: Tensor, params: TransformerParams, config: TransformerConfig,
            mask: np.ndarray | None = None, train: bool = False,
            rng: np.random.Generator | None = None) -> tuple[Tensor, Tensor, PonderStats]:
    """Adaptive refinement with per-position halting.

    Per position, sigmoid halting probabilities accumulate across steps; the
    position halts at the first step where the accumulator reaches
    1 - epsilon (or at the cap) and its final state is the snapshot taken at
    that step. The realized halting pattern is treated as fixed during
    backpropagation; the returned ponder term (mean steps plus remainder,
    already scaled by the configured cost) is what trains the halting unit.

    Returns (final sequence state with padded rows zeroed, scalar ponder
    penalty, halting statistics).
    """
    squeeze = e0.ndim == 2
    if squeeze:
        e0 = numeric.reshape(e0, (1,) + e0.shape)
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)[None, :]
    b, n_s, n_e = e0.shape
    valid = np.ones((b, n_s), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if not valid.any():
        raise AllMaskedError("no valid position in any sequence")

    threshold = 1.0 - config.act_epsilon
    acc = np.zeros((b, n_s))
    halted = ~valid                       # padded positions never halt or count
    halt_steps = np.zeros((b, n_s), dtype=np.int64)
    e_t = e0
    final = Tensor(np.zeros((b, n_s, n_e)))
    acc_graph: Tensor | None = None
    remainder_terms: list[Tensor] = []

    for step in range(1, config.t_max + 1):
        e_t = transformer_step(e_t, step, params, config, mask=valid, train=train, rng=rng)
        logits = numeric.matmul(e_t, params.halt_w) + params.halt_b
        p = numeric.reshape(numeric.sigmoid(logits), (b, n_s))

        crossing = (~halted) & ((acc + p.data >= threshold) | (step == config.t_max))
        select = crossing.astype(np.float64)
        final = final + numeric.reshape(Tensor(select), (b, n_s, 1)) * e_t
        # remainder per the halting construction: 1 - mass accumulated before the halt step
        mass_before = acc_graph if acc_graph is not None else Tensor(np.zeros((b, n_s)))
        remainder_terms.append(Tensor(select) * (1.0 - mass_before))

        acc_graph = p if acc_graph is None else acc_graph + p
        acc = acc + p.data
        halt_steps[crossing] = step
        halted |= crossing
        if halted.all():
            break

    n_valid = int(valid.sum())
    weight = valid.astype(np.float64) / n_valid
    remainder_sum = remainder_terms[0]
    for term in remainder_terms[1:]:
        remainder_sum = remainder_sum + term
    mean_remainder = numeric.tensor_sum(remainder_sum * Tensor(weight))
    mean_steps = float((halt_steps * valid).sum() / n_valid)
    ponder = config.ponder_cost * (mean_steps + mean_remainder)

    stats = PonderStats(halt_steps=halt_steps if not squeeze else halt_steps[0],
                        mean_steps=mean_steps,
                        mean_remainder=float(mean_remainder.data),
                        accumulated=acc if not squeeze else acc[0])
    if squeeze:
        final = numeric.reshape(final, (n_s, n_e))
    return final, ponder, stats


def dynamic_embed(e_final: Tensor, wd: Tensor) -> Tensor:
    """Flatten the halted sequence row-wise and mix it to one vector."""
    if e_final.ndim == 2:
        flat = numeric.reshape(e_final, (1, e_final.shape[0] * e_final.shape[1]))
        if flat.shape[1] != wd.shape[0]:
            raise ShapeMismatchError("dynamic_embed", e_final.shape, wd.shape)
        return numeric.reshape(numeric.matmul(flat, wd), (wd.shape[1],))
    b = e_final.shape[0]
    flat = numeric.reshape(e_final, (b, e_final.shape[1] * e_final.shape[2]))
    if flat.shape[1] != wd.shape[0]:
        raise ShapeMismatchError("dynamic_embed", e_final.shape, wd.shape)
    return numeric.matmul(flat, wd)
