"""Per-relation evaluation reports and best/worst rankings."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from tip.decoder import score_batch
from tip.graph import SplitGraph
from tip.metrics import ap_at_k, auprc, auroc
from tip.training import triples_from_pairs

AP_K = 50


@dataclass(frozen=True)
class RelationMetrics:
    relation: int
    relation_id: str
    auprc: float
    auroc: float
    ap50: float
    n_pos: int
    n_neg: int
    # fewer than AP_K scored pairs were available
    ap_truncated: bool = False


@dataclass
class EvalReport:
    relations: list[RelationMetrics] = field(default_factory=list)
    excluded: list[str] = field(default_factory=list)

    def macro(self) -> dict[str, float]:
        if not self.relations:
            return {}
        return {
            key: float(np.mean([getattr(m, key) for m in self.relations]))
            for key in ("auprc", "auroc", "ap50")
        }

    def summary(self) -> dict:
        return {
            "relations": len(self.relations),
            "excluded": list(self.excluded),
            "macro": self.macro(),
        }

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(m), sort_keys=True) + "\n" for m in self.relations)


def evaluate(z, split: SplitGraph, decoder) -> EvalReport:
    """Score the frozen test positives and negatives of every relation.

    Relations without test positives or negatives are excluded and listed.
    """
    pos_t = triples_from_pairs(split.test_positives)
    neg_t = triples_from_pairs(split.test_negatives)
    pos_s = score_batch(z, pos_t, decoder)
    neg_s = score_batch(z, neg_t, decoder)
    report = EvalReport()
    relations = split.train.relations
    for r, rel in enumerate(relations):
        pos = pos_s[pos_t[:, 1] == r]
        neg = neg_s[neg_t[:, 1] == r]
        if not len(pos) or not len(neg):
            report.excluded.append(rel)
            continue
        report.relations.append(
            RelationMetrics(
                relation=r,
                relation_id=rel,
                auprc=auprc(pos, neg),
                auroc=auroc(pos, neg),
                ap50=ap_at_k(pos, neg, AP_K),
                n_pos=int(len(pos)),
                n_neg=int(len(neg)),
                ap_truncated=len(pos) + len(neg) < AP_K,
            )
        )
    return report


@dataclass
class RankingReport:
    best: list[RelationMetrics]
    worst: list[RelationMetrics]
    # fewer than 2n relations: all of them are split between best and worst
    partial: bool = False

    def to_dict(self) -> dict:
        pick = lambda ms: [  # noqa: E731
            {"relation": m.relation, "relation_id": m.relation_id, "auprc": m.auprc} for m in ms
        ]
        return {"best": pick(self.best), "worst": pick(self.worst), "partial": self.partial}


def report_extremes(report: EvalReport, n: int = 20) -> RankingReport:
    """The ``n`` best and ``n`` worst relations by AUPRC, ties by relation index."""
    desc = sorted(report.relations, key=lambda m: (-m.auprc, m.relation))
    asc = sorted(report.relations, key=lambda m: (m.auprc, m.relation))
    if len(desc) >= 2 * n:
        return RankingReport(best=desc[:n], worst=asc[:n])
    half = (len(desc) + 1) // 2
    best = desc[:half]
    chosen = {m.relation for m in best}
    worst = [m for m in asc if m.relation not in chosen]
    return RankingReport(best=best, worst=worst, partial=True)
