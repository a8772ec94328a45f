"""The protein/drug multimodal graph and its preprocessing.

Node ids are contiguous and 0-based within each node type.  P-P and D-D
edges are undirected: they are stored once as canonical ``(low, high)``
pairs and exposed in both orientations for message passing.  P-D edges
are directed protein -> drug.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from tip.autodiff import EdgeIndex


class ParseError(ValueError):
    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


class ContractError(ValueError):
    """An operation precondition does not hold."""


class SaturationError(RuntimeError):
    """A relation covers nearly every drug pair, so negatives cannot be drawn."""


def _empty_pairs() -> np.ndarray:
    return np.zeros((0, 2), dtype=np.int64)


def _freeze(a) -> np.ndarray:
    arr = np.asarray(a, dtype=np.int64).reshape(-1, 2)
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


def canonical_pairs(pairs, drop_self_loops: bool = True) -> np.ndarray:
    """Sort each pair to ``(low, high)``, drop duplicates, keep first-seen order."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if not len(pairs):
        return _empty_pairs()
    lo = pairs.min(axis=1)
    hi = pairs.max(axis=1)
    canon = np.stack([lo, hi], axis=1)
    if drop_self_loops:
        canon = canon[lo != hi]
    _, first = np.unique(canon, axis=0, return_index=True)
    return canon[np.sort(first)]


def symmetric(pairs: np.ndarray) -> np.ndarray:
    """Both orientations of undirected pairs (self-loops only once)."""
    rev = pairs[pairs[:, 0] != pairs[:, 1]][:, ::-1]
    return np.concatenate([pairs, rev], axis=0)


@dataclass(frozen=True, eq=False)
class MultiModalGraph:
    """Immutable container for the P-P, P-D and per-relation D-D edge sets."""

    num_proteins: int
    num_drugs: int
    relations: tuple[str, ...]
    pp_pairs: np.ndarray
    pd_edges: np.ndarray
    dd_pairs: tuple[np.ndarray, ...]
    protein_ids: tuple[str, ...] = ()
    drug_ids: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "pp_pairs", _freeze(self.pp_pairs))
        object.__setattr__(self, "pd_edges", _freeze(self.pd_edges))
        object.__setattr__(self, "dd_pairs", tuple(_freeze(p) for p in self.dd_pairs))
        object.__setattr__(self, "relations", tuple(str(r) for r in self.relations))
        if not self.protein_ids:
            object.__setattr__(self, "protein_ids", tuple(f"P{i}" for i in range(self.num_proteins)))
        if not self.drug_ids:
            object.__setattr__(self, "drug_ids", tuple(f"D{i}" for i in range(self.num_drugs)))
        self._validate()

    def _validate(self) -> None:
        if len(self.dd_pairs) != len(self.relations):
            raise ContractError("one D-D pair list is needed per relation")
        if len(self.protein_ids) != self.num_proteins or len(self.drug_ids) != self.num_drugs:
            raise ContractError("original id tables do not match node counts")
        _check_range(self.pp_pairs, self.num_proteins, self.num_proteins, "P-P")
        _check_range(self.pd_edges, self.num_proteins, self.num_drugs, "P-D")
        for r, pairs in zip(self.relations, self.dd_pairs):
            _check_range(pairs, self.num_drugs, self.num_drugs, f"D-D[{r}]")
            if len(pairs) and np.any(pairs[:, 0] == pairs[:, 1]):
                raise ContractError(f"relation {r} contains a self-loop")

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    @property
    def pp_edges(self) -> np.ndarray:
        return symmetric(self.pp_pairs)

    def dd_edges(self, r: int) -> np.ndarray:
        return symmetric(self.dd_pairs[r])

    def relation_counts(self) -> list[int]:
        return [len(p) for p in self.dd_pairs]

    def num_dd_edges(self) -> int:
        return int(np.sum(self.relation_counts())) if self.dd_pairs else 0

    # Message-passing views, built once per graph.

    @cached_property
    def pp_index(self) -> EdgeIndex:
        return EdgeIndex.from_pairs(self.pp_edges, self.num_proteins, self.num_proteins)

    @cached_property
    def pd_index(self) -> EdgeIndex:
        return EdgeIndex.from_pairs(self.pd_edges, self.num_proteins, self.num_drugs)

    @cached_property
    def dd_index(self) -> tuple[EdgeIndex, ...]:
        return tuple(
            EdgeIndex.from_pairs(self.dd_edges(r), self.num_drugs, self.num_drugs)
            for r in range(self.num_relations)
        )

    def positive_keys(self, r: int) -> np.ndarray:
        """Sorted integer keys ``low * N^d + high`` of the relation's pairs."""
        p = self.dd_pairs[r]
        return np.sort(p[:, 0] * self.num_drugs + p[:, 1])

    def summary(self) -> dict:
        return {
            "proteins": self.num_proteins,
            "drugs": self.num_drugs,
            "pp_edges": int(len(self.pp_pairs)),
            "pd_edges": int(len(self.pd_edges)),
            "dd_edges": self.num_dd_edges(),
            "relations": self.num_relations,
        }


def _check_range(pairs: np.ndarray, n_first: int, n_second: int, what: str) -> None:
    if not len(pairs):
        return
    if pairs.min() < 0 or pairs[:, 0].max() >= n_first or pairs[:, 1].max() >= n_second:
        raise IndexError(f"{what} edge endpoint out of range")


# ---------------------------------------------------------------- ingestion


class _IdTable:
    def __init__(self):
        self.ids: dict[str, int] = {}

    def __call__(self, key: str) -> int:
        idx = self.ids.get(key)
        if idx is None:
            idx = self.ids[key] = len(self.ids)
        return idx

    def names(self) -> tuple[str, ...]:
        return tuple(self.ids)


def _read_rows(path, ncols: int):
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if row[0].lstrip().startswith("#"):
                continue
            fields = [c.strip() for c in row]
            if len(fields) < ncols or any(not c for c in fields[:ncols]):
                raise ParseError(path, lineno, f"expected {ncols} non-empty fields, got {row!r}")
            yield fields[:ncols]


def load_edge_lists(pp_path, pd_path, dd_path) -> MultiModalGraph:
    """Read the three comma-separated edge lists.

    Layouts are ``protein_a,protein_b`` / ``protein,drug`` /
    ``drug_a,drug_b,relation_id``.  Extra trailing columns are ignored and
    ``#`` lines are comments.  Ids are assigned in order of first appearance.
    """
    proteins, drugs, rels = _IdTable(), _IdTable(), _IdTable()
    pp = [(proteins(a), proteins(b)) for a, b in _read_rows(pp_path, 2)]
    pd = [(proteins(p), drugs(d)) for p, d in _read_rows(pd_path, 2)]
    per_rel: dict[int, list[tuple[int, int]]] = {}
    for a, b, r in _read_rows(dd_path, 3):
        per_rel.setdefault(rels(r), []).append((drugs(a), drugs(b)))

    pd_arr = np.asarray(pd, dtype=np.int64).reshape(-1, 2)
    if len(pd_arr):
        _, first = np.unique(pd_arr, axis=0, return_index=True)
        pd_arr = pd_arr[np.sort(first)]
    return MultiModalGraph(
        num_proteins=len(proteins.ids),
        num_drugs=len(drugs.ids),
        relations=rels.names(),
        pp_pairs=canonical_pairs(pp, drop_self_loops=False),
        pd_edges=pd_arr,
        dd_pairs=tuple(canonical_pairs(per_rel[i]) for i in range(len(rels.ids))),
        protein_ids=proteins.names(),
        drug_ids=drugs.names(),
    )


def write_mapping(g: MultiModalGraph, path) -> None:
    """Emit ``original_id,internal_id,kind`` rows for every protein and drug."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["original_id", "internal_id", "kind"])
        for i, name in enumerate(g.protein_ids):
            w.writerow([name, i, "protein"])
        for i, name in enumerate(g.drug_ids):
            w.writerow([name, i, "drug"])


# ---------------------------------------------------------------- preprocessing


def filter_rare_relations(g: MultiModalGraph, min_count: int = 500) -> MultiModalGraph:
    """Drop relations with fewer than ``min_count`` undirected edges."""
    keep = [r for r, n in enumerate(g.relation_counts()) if n >= min_count]
    return replace(
        g,
        relations=tuple(g.relations[r] for r in keep),
        dd_pairs=tuple(g.dd_pairs[r] for r in keep),
    )


@dataclass(frozen=True, eq=False)
class SplitGraph:
    """Train graph plus held-out positive and frozen negative pairs per relation."""

    train: MultiModalGraph
    test_positives: tuple[np.ndarray, ...]
    test_negatives: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "test_positives", tuple(_freeze(p) for p in self.test_positives))
        object.__setattr__(self, "test_negatives", tuple(_freeze(p) for p in self.test_negatives))

    @property
    def num_relations(self) -> int:
        return self.train.num_relations

    def full_graph(self) -> MultiModalGraph:
        """Train and test positives merged back together."""
        merged = tuple(
            np.concatenate([tr, te], axis=0)
            for tr, te in zip(self.train.dd_pairs, self.test_positives)
        )
        return replace(self.train, dd_pairs=merged)


def holdout_size(n: int, ratio: float) -> int:
    # the epsilon keeps e.g. 10 * (1 - 0.8) = 1.9999999999999996 from flooring to 1
    return int(math.floor(n * (1.0 - ratio) + 1e-9))


def split_train_test(
    g: MultiModalGraph, ratio: float = 0.8, seed: int = 0, neg_seed: int | None = None
) -> SplitGraph:
    """Per-relation uniform split of undirected D-D edges.

    ``floor(n * (1 - ratio))`` edges of each relation go to the test side.
    Test negatives are drawn once against all positives of the full graph,
    from ``neg_seed`` (defaults to ``seed``).
    """
    if not 0.0 < ratio <= 1.0:
        raise ContractError(f"ratio must be in (0, 1], got {ratio}")
    train, test = [], []
    for r, pairs in enumerate(g.dd_pairs):
        n = len(pairs)
        if n < 2:
            raise ContractError(f"relation {g.relations[r]!r} has {n} edge(s); need at least 2")
        rng = np.random.default_rng([seed, r])
        perm = rng.permutation(n)
        k = holdout_size(n, ratio)
        test.append(pairs[np.sort(perm[:k])])
        train.append(pairs[np.sort(perm[k:])])
    train_graph = replace(g, dd_pairs=tuple(train))
    negs = sample_negatives(test, g, seed if neg_seed is None else neg_seed)
    return SplitGraph(train=train_graph, test_positives=tuple(test), test_negatives=negs.pairs)


# ---------------------------------------------------------------- negatives


@dataclass(frozen=True, eq=False)
class NegativeSampleSet:
    pairs: tuple[np.ndarray, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.pairs)

    def __getitem__(self, r: int) -> np.ndarray:
        return self.pairs[r]


_MAX_CORRUPTION_ROUNDS = 100


def sample_negatives(
    positives: Sequence[np.ndarray], g: MultiModalGraph, seed
) -> NegativeSampleSet:
    """One corrupted pair per positive, relation kept, one endpoint replaced.

    Draws are rejected while they hit a self-loop or any pair that ``g``
    lists as positive for the same relation.  Pairs that stay stuck after
    many rounds (both endpoints saturated) fall back to uniform pair draws.
    """
    n = g.num_drugs
    if n < 3:
        raise ContractError(f"negative sampling needs at least 3 drugs, got {n}")
    total_pairs = n * (n - 1) // 2
    out = []
    for r, pos in enumerate(positives):
        pos = np.asarray(pos, dtype=np.int64).reshape(-1, 2)
        known = g.positive_keys(r)
        if len(known) >= 0.99 * total_pairs:
            raise SaturationError(
                f"relation {g.relations[r]!r} covers {len(known)}/{total_pairs} drug pairs"
            )
        rng = np.random.default_rng([*np.atleast_1d(seed), r])
        neg = pos.copy()
        todo = np.arange(len(pos))
        rounds = 0
        while len(todo):
            if rounds < _MAX_CORRUPTION_ROUNDS:
                side = rng.integers(0, 2, size=len(todo))
                neg[todo, side] = rng.integers(0, n, size=len(todo))
                keep_side = 1 - side
                neg[todo, keep_side] = pos[todo, keep_side]
            else:
                neg[todo] = rng.integers(0, n, size=(len(todo), 2))
            lo = neg[todo].min(axis=1)
            hi = neg[todo].max(axis=1)
            keys = lo * n + hi
            bad = (lo == hi) | np.isin(keys, known, assume_unique=False)
            todo = todo[bad]
            rounds += 1
        out.append(neg)
    return NegativeSampleSet(pairs=tuple(_freeze(p) for p in out))
