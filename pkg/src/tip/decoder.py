"""Pair scorers over drug embeddings.

Triples are integer arrays of shape ``(n, 3)`` holding ``(drug_i, relation,
drug_j)``.  Both decoders are symmetric in the two drugs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tip.autodiff import (
    Tensor,
    add,
    concat_cols,
    matmul,
    mul,
    pick,
    relu,
    sigmoid,
    take_rows,
)
from tip.autodiff import sum as tsum


def _triples(triples) -> np.ndarray:
    t = np.asarray(triples, dtype=np.int64)
    if t.size == 0:
        return np.zeros((0, 3), dtype=np.int64)
    return t.reshape(-1, 3)


@dataclass
class DistMultDecoder:
    """``sigma(z_i^T diag(m_r) z_j)`` with one vector ``m_r`` per relation."""

    rel: Tensor  # (R, d_z)

    def logits(self, z: Tensor, triples) -> Tensor:
        t = _triples(triples)
        if len(t) and (t[:, 1].min() < 0 or t[:, 1].max() >= self.rel.shape[0]):
            raise IndexError("relation index out of range")
        zi = take_rows(z, t[:, 0])
        zj = take_rows(z, t[:, 2])
        m = take_rows(self.rel, t[:, 1])
        # z_i * z_j first so swapping i and j is bitwise symmetric
        return tsum(mul(mul(zi, zj), m), axis=1)

    def score(self, z: Tensor, triples) -> Tensor:
        return sigmoid(self.logits(z, triples))


@dataclass
class NnDecoder:
    """Two-layer multi-label classifier on ``[z_i ; z_j]``.

    Probabilities are averaged over both input orders so that the score of
    ``(i, j)`` equals that of ``(j, i)``.
    """

    w1: Tensor  # (2 d_z, hidden)
    w2: Tensor  # (hidden, R)

    def all_logits(self, z: Tensor, left, right) -> Tensor:
        x = concat_cols(take_rows(z, left), take_rows(z, right))
        return matmul(relu(matmul(x, self.w1)), self.w2)

    def score(self, z: Tensor, triples) -> Tensor:
        t = _triples(triples)
        rows = np.arange(len(t))
        fwd = pick(self.all_logits(z, t[:, 0], t[:, 2]), rows, t[:, 1])
        rev = pick(self.all_logits(z, t[:, 2], t[:, 0]), rows, t[:, 1])
        return mul(add(sigmoid(fwd), sigmoid(rev)), 0.5)

    def score_all(self, z: Tensor, i: int, j: int) -> Tensor:
        """Probabilities of every relation for one pair."""
        fwd = sigmoid(self.all_logits(z, [i], [j]))
        rev = sigmoid(self.all_logits(z, [j], [i]))
        return mul(add(fwd, rev), 0.5)


def _as_z(z) -> Tensor:
    return z if isinstance(z, Tensor) else Tensor(z)


def score_batch(z, triples, decoder) -> np.ndarray:
    """Probabilities for each triple, in input order."""
    t = _triples(triples)
    if not len(t):
        return np.zeros(0)
    return decoder.score(_as_z(z), t).numpy()


def df_score(z, i: int, j: int, r: int, decoder: DistMultDecoder) -> float:
    return float(score_batch(z, [[i, r, j]], decoder)[0])


def nn_score(z, i: int, j: int, decoder: NnDecoder) -> np.ndarray:
    return decoder.score_all(_as_z(z), i, j).numpy().reshape(-1)
