"""Planted-structure graphs for desk-scale experiments.

Proteins are split into communities with dense intra-community P-P edges.
Each drug belongs to one community and targets a few of its proteins.  A
D-D edge of relation ``r`` appears with probability ``p_hit`` when the two
drugs' communities ``a, b`` satisfy ``(a + b) % K == r % K`` and with
probability ``p_noise`` otherwise, so the only route to the relational
signal is protein community -> drug -> drug pair.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from tip.graph import MultiModalGraph, canonical_pairs


@dataclass(frozen=True)
class SynthConfig:
    num_proteins: int = 200
    num_drugs: int = 50
    num_relations: int = 5
    num_communities: int = 5
    pp_in: float = 0.15
    pp_out: float = 0.005
    targets_per_drug: int = 3
    p_hit: float = 0.5
    p_noise: float = 0.01
    seed: int = 0

    def __post_init__(self):
        for name in ("num_proteins", "num_drugs", "num_relations", "num_communities"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.num_communities > min(self.num_proteins, self.num_drugs):
            raise ValueError("more communities than proteins or drugs")


def _communities(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(np.arange(n) % k)


def compatible(ca, cb, r: int, k: int):
    return (np.asarray(ca) + np.asarray(cb)) % k == r % k


def synth_graph(
    num_proteins: int = 200,
    num_drugs: int = 50,
    num_relations: int = 5,
    seed: int = 0,
    **kwargs,
) -> MultiModalGraph:
    cfg = SynthConfig(num_proteins, num_drugs, num_relations, seed=seed, **kwargs)
    return build(cfg)[0]


def build(cfg: SynthConfig) -> tuple[MultiModalGraph, np.ndarray, np.ndarray]:
    """Return the graph plus the protein and drug community labels."""
    rng = np.random.default_rng(cfg.seed)
    k = cfg.num_communities
    pc = _communities(cfg.num_proteins, k, rng)
    dc = _communities(cfg.num_drugs, k, rng)

    iu, ju = np.triu_indices(cfg.num_proteins, k=1)
    prob = np.where(pc[iu] == pc[ju], cfg.pp_in, cfg.pp_out)
    keep = rng.random(len(iu)) < prob
    pp = [np.stack([iu[keep], ju[keep]], axis=1)]
    # chain each community so no protein is isolated (isolated ids vanish on CSV reload)
    for c in range(k):
        members = np.flatnonzero(pc == c)
        pp.append(np.stack([members[:-1], members[1:]], axis=1))
    pp = canonical_pairs(np.concatenate(pp, axis=0))

    pd = []
    for d in range(cfg.num_drugs):
        pool = np.flatnonzero(pc == dc[d])
        m = min(cfg.targets_per_drug, len(pool))
        for p in np.sort(rng.choice(pool, size=m, replace=False)):
            pd.append((p, d))
    pd = np.asarray(pd, dtype=np.int64).reshape(-1, 2)

    ia, ib = np.triu_indices(cfg.num_drugs, k=1)
    dd = []
    for r in range(cfg.num_relations):
        prob = np.where(compatible(dc[ia], dc[ib], r, k), cfg.p_hit, cfg.p_noise)
        keep = rng.random(len(ia)) < prob
        dd.append(np.stack([ia[keep], ib[keep]], axis=1))

    g = MultiModalGraph(
        num_proteins=cfg.num_proteins,
        num_drugs=cfg.num_drugs,
        relations=tuple(f"R{r}" for r in range(cfg.num_relations)),
        pp_pairs=pp,
        pd_edges=pd,
        dd_pairs=tuple(dd),
    )
    return g, pc, dc


def expected_dd_edges(cfg: SynthConfig, drug_communities: np.ndarray) -> float:
    """Expected total D-D edge count given the drug community labels."""
    ia, ib = np.triu_indices(cfg.num_drugs, k=1)
    total = 0.0
    for r in range(cfg.num_relations):
        hit = compatible(drug_communities[ia], drug_communities[ib], r, cfg.num_communities)
        total += float(np.where(hit, cfg.p_hit, cfg.p_noise).sum())
    return total


def write_csvs(g: MultiModalGraph, out_dir) -> dict[str, Path]:
    """Write ``pp.csv``, ``pd.csv`` and ``dd.csv`` in the ingestion layout."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"pp": out / "pp.csv", "pd": out / "pd.csv", "dd": out / "dd.csv"}
    with open(paths["pp"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["# protein_a", "protein_b"])
        for a, b in g.pp_pairs:
            w.writerow([g.protein_ids[a], g.protein_ids[b]])
    with open(paths["pd"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["# protein", "drug"])
        for p, d in g.pd_edges:
            w.writerow([g.protein_ids[p], g.drug_ids[d]])
    with open(paths["dd"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["# drug_a", "drug_b", "relation_id"])
        for r, rel in enumerate(g.relations):
            for a, b in g.dd_pairs[r]:
                w.writerow([g.drug_ids[a], g.drug_ids[b], rel])
    return paths
