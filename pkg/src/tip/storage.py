"""On-disk layout of a prepared (filtered + split) dataset.

A prepared directory holds plain CSV files with internal ids plus a small
JSON header.  Every file is written deterministically so that reruns with
the same inputs and seeds are byte-identical, and the content digest of the
files identifies the split inside checkpoints.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from tip.graph import MultiModalGraph, SplitGraph, write_mapping

FORMAT_VERSION = 1
HASHED_FILES = (
    "meta.json",
    "relations.csv",
    "mapping.csv",
    "pp.csv",
    "pd.csv",
    "train.csv",
    "test_pos.csv",
    "test_neg.csv",
)


class StorageError(RuntimeError):
    pass


def _write_pairs(path: Path, header: list[str], pairs: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(pairs.tolist())


def _write_triples(path: Path, per_relation) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["drug_a", "drug_b", "relation"])
        for r, pairs in enumerate(per_relation):
            for a, b in pairs.tolist():
                w.writerow([a, b, r])


def _read_int_rows(path: Path, ncols: int) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return np.asarray(rows, dtype=np.int64).reshape(-1, ncols)


def _read_triples(path: Path, num_relations: int) -> tuple[np.ndarray, ...]:
    rows = _read_int_rows(path, 3)
    return tuple(rows[rows[:, 2] == r][:, :2] for r in range(num_relations))


def save_split(split: SplitGraph, out_dir, meta: dict | None = None) -> str:
    """Write ``split`` under ``out_dir`` and return its content hash."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    g = split.train
    header = {
        "format": FORMAT_VERSION,
        "num_proteins": g.num_proteins,
        "num_drugs": g.num_drugs,
        "num_relations": g.num_relations,
        **(meta or {}),
    }
    (out / "meta.json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    counts = [len(a) + len(b) for a, b in zip(g.dd_pairs, split.test_positives)]
    with open(out / "relations.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["relation", "relation_id", "edges"])
        for r, (rel, n) in enumerate(zip(g.relations, counts)):
            w.writerow([r, rel, n])
    write_mapping(g, out / "mapping.csv")
    _write_pairs(out / "pp.csv", ["protein_a", "protein_b"], g.pp_pairs)
    _write_pairs(out / "pd.csv", ["protein", "drug"], g.pd_edges)
    _write_triples(out / "train.csv", g.dd_pairs)
    _write_triples(out / "test_pos.csv", split.test_positives)
    _write_triples(out / "test_neg.csv", split.test_negatives)
    return split_hash(out)


def split_hash(data_dir) -> str:
    d = Path(data_dir)
    h = hashlib.sha256()
    for name in HASHED_FILES:
        path = d / name
        if not path.exists():
            raise StorageError(f"prepared data is missing {path}")
        h.update(name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()


def read_meta(data_dir) -> dict:
    path = Path(data_dir) / "meta.json"
    if not path.exists():
        raise StorageError(f"{data_dir} is not a prepared dataset (no meta.json)")
    meta = json.loads(path.read_text())
    if meta.get("format") != FORMAT_VERSION:
        raise StorageError(f"unsupported prepared-data format {meta.get('format')!r}")
    return meta


def load_split(data_dir) -> SplitGraph:
    d = Path(data_dir)
    meta = read_meta(d)
    n_rel = int(meta["num_relations"])
    with open(d / "relations.csv", newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    relations = tuple(row[1] for row in rows)
    proteins: list[str] = [""] * int(meta["num_proteins"])
    drugs: list[str] = [""] * int(meta["num_drugs"])
    with open(d / "mapping.csv", newline="") as fh:
        for orig, idx, kind in list(csv.reader(fh))[1:]:
            (proteins if kind == "protein" else drugs)[int(idx)] = orig
    train = MultiModalGraph(
        num_proteins=int(meta["num_proteins"]),
        num_drugs=int(meta["num_drugs"]),
        relations=relations,
        pp_pairs=_read_int_rows(d / "pp.csv", 2),
        pd_edges=_read_int_rows(d / "pd.csv", 2),
        dd_pairs=_read_triples(d / "train.csv", n_rel),
        protein_ids=tuple(proteins),
        drug_ids=tuple(drugs),
    )
    return SplitGraph(
        train=train,
        test_positives=_read_triples(d / "test_pos.csv", n_rel),
        test_negatives=_read_triples(d / "test_neg.csv", n_rel),
    )
