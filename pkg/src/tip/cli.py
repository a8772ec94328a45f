"""``tip`` command line: synth, prepare, train, eval."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

from tip import __version__
from tip.autodiff import TrainingError
from tip.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from tip.config import ConfigError, RunConfig, resolve
from tip.encoder import ConfigError as ModelConfigError
from tip.evaluation import evaluate, report_extremes
from tip.graph import (
    ContractError,
    ParseError,
    SaturationError,
    filter_rare_relations,
    load_edge_lists,
    split_train_test,
)
from tip.model import ModelConfig, TipModel
from tip.storage import StorageError, load_split, read_meta, save_split, split_hash
from tip.synth import SynthConfig, build, write_csvs
from tip.training import TrainConfig, train

logger = logging.getLogger("tip")

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_TRAINING = 4
EXIT_MISMATCH = 5


class MismatchError(RuntimeError):
    """Checkpoint and prepared data do not belong together."""


def _out_dir(cfg: RunConfig) -> Path:
    if not cfg.out:
        raise ConfigError("--out is required")
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StorageError(f"cannot create output directory {out}: {exc}") from None
    return out


def _print_summary(title: str, summary: dict) -> None:
    print(title)
    for key in ("proteins", "drugs", "pp_edges", "pd_edges", "dd_edges", "relations"):
        print(f"  {key:<10} {summary[key]:>10}")


def cmd_synth(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    sc = SynthConfig(cfg.proteins, cfg.drugs, cfg.relations, seed=cfg.seed_synth)
    g, _, _ = build(sc)
    paths = write_csvs(g, out)
    _print_summary("synthetic graph", g.summary())
    for kind, path in paths.items():
        print(f"  wrote {kind}: {path}")
    return 0


def cmd_prepare(cfg: RunConfig) -> int:
    cfg.check_source()
    out = _out_dir(cfg)
    if cfg.synth:
        g = build(SynthConfig(cfg.proteins, cfg.drugs, cfg.relations, seed=cfg.seed_synth))[0]
        source = {"synth": [cfg.proteins, cfg.drugs, cfg.relations, cfg.seed_synth]}
    else:
        g = load_edge_lists(cfg.pp, cfg.pd, cfg.dd)
        source = {"files": [Path(p).name for p in (cfg.pp, cfg.pd, cfg.dd)]}
    _print_summary("loaded graph", g.summary())
    filtered = filter_rare_relations(g, cfg.min_count)
    if filtered.num_relations == 0:
        raise ContractError(f"no relations remain with min_count={cfg.min_count}")
    _print_summary(f"after filtering (min_count={cfg.min_count})", filtered.summary())
    split = split_train_test(filtered, cfg.ratio, seed=cfg.seed_split, neg_seed=cfg.seed_neg)
    meta = {
        "source": source,
        "min_count": cfg.min_count,
        "ratio": cfg.ratio,
        "seed_split": cfg.seed_split,
        "seed_neg": cfg.seed_neg,
    }
    digest = save_split(split, out, meta)
    n_test = sum(len(p) for p in split.test_positives)
    print(f"train edges {split.train.num_dd_edges()}, test edges {n_test}")
    print(f"graph hash {digest}")
    return 0


def _train_config(cfg: RunConfig, data_dir: str) -> TrainConfig:
    meta = read_meta(data_dir)
    return TrainConfig(
        variant=cfg.variant,
        epochs=cfg.epochs,
        lr=cfg.lr,
        seed_init=cfg.seed_init,
        seed_split=meta.get("seed_split", cfg.seed_split),
        seed_neg=cfg.seed_neg,
        nn_hidden=cfg.nn_hidden,
    )


def cmd_train(cfg: RunConfig) -> int:
    if not cfg.data:
        raise ConfigError("--data (a prepared directory) is required")
    out = _out_dir(cfg)
    split = load_split(cfg.data)
    digest = split_hash(cfg.data)
    tc = _train_config(cfg, cfg.data)
    enc = tc.encoder_config()
    print(
        f"variant {tc.variant}: protein dims {enc.ppm_dims}, fusion {enc.ggm_mode} "
        f"({enc.ggm_protein_dim},{enc.ggm_drug_dim}), drug dims {enc.ddm_dims}, bases {enc.num_bases}"
    )
    last = [time.perf_counter()]

    def echo(epoch: int, loss: float) -> None:
        now = time.perf_counter()
        print(f"epoch {epoch:4d}  loss {loss:.6f}")
        logger.info("epoch %d took %.3fs", epoch, now - last[0])
        last[0] = now

    result = train(split, tc, on_epoch=echo)
    model = result.model
    header = {
        "run_config": tc.to_dict(),
        "model_config": model.config.to_dict(),
        "epochs": len(result.losses),
        "final_loss": result.losses[-1] if result.losses else None,
        "graph_hash": digest,
    }
    save_checkpoint(out / "checkpoint.tipckpt", header, model.params.state_dict())
    with open(out / "loss.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        for epoch, loss in enumerate(result.losses):
            w.writerow([epoch, repr(loss)])
    print(f"wrote {out / 'checkpoint.tipckpt'} and {out / 'loss.csv'}")
    return 0


def model_from_checkpoint(path) -> tuple[TipModel, dict]:
    ckpt = load_checkpoint(path)
    config = ModelConfig.from_dict(ckpt.header["model_config"])
    model = TipModel.initialise(config)
    model.params.load_state_dict(ckpt.tensors)
    return model, ckpt.header


def cmd_eval(cfg: RunConfig) -> int:
    if not cfg.checkpoint or not cfg.data:
        raise ConfigError("eval needs --checkpoint and --data")
    out = _out_dir(cfg)
    model, header = model_from_checkpoint(cfg.checkpoint)
    digest = split_hash(cfg.data)
    if header.get("graph_hash") != digest:
        raise MismatchError(
            f"checkpoint was trained on graph {header.get('graph_hash')}, but {cfg.data} hashes to {digest}"
        )
    split = load_split(cfg.data)
    z, decoder = model.forward(split.train)
    report = evaluate(z, split, decoder)
    extremes = report_extremes(report, cfg.top)
    (out / "relations.jsonl").write_text(report.to_jsonl())
    (out / "summary.json").write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n")
    (out / "extremes.json").write_text(json.dumps(extremes.to_dict(), indent=2, sort_keys=True) + "\n")
    macro = report.macro()
    if macro:
        print(
            f"macro AUPRC {macro['auprc']:.4f}  AUROC {macro['auroc']:.4f}  "
            f"AP@50 {macro['ap50']:.4f}  over {len(report.relations)} relations"
        )
    else:
        print("no relation had a scorable test set")
    if report.excluded:
        print(f"excluded {len(report.excluded)} relation(s) without test pairs")
    return 0


COMMANDS = {"synth": cmd_synth, "prepare": cmd_prepare, "train": cmd_train, "eval": cmd_eval}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file; flags override it")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    seeds = argparse.ArgumentParser(add_help=False)
    seeds.add_argument("--seed-init", type=int, dest="seed_init")
    seeds.add_argument("--seed-split", type=int, dest="seed_split")
    seeds.add_argument("--seed-neg", type=int, dest="seed_neg")
    seeds.add_argument("--seed-synth", type=int, dest="seed_synth")

    shape = argparse.ArgumentParser(add_help=False)
    shape.add_argument("--proteins", type=int)
    shape.add_argument("--drugs", type=int)
    shape.add_argument("--relations", type=int)

    parser = argparse.ArgumentParser(prog="tip", description=__doc__)
    parser.add_argument("--version", action="version", version=f"tip {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", parents=[common, seeds, shape], help="write a planted synthetic dataset")

    p = sub.add_parser("prepare", parents=[common, seeds, shape], help="filter, split and freeze negatives")
    p.add_argument("--pp", help="protein_a,protein_b edge list")
    p.add_argument("--pd", help="protein,drug edge list")
    p.add_argument("--dd", help="drug_a,drug_b,relation_id edge list")
    p.add_argument("--synth", action="store_true", default=None, help="use the synthetic generator")
    p.add_argument("--min-count", type=int, dest="min_count")
    p.add_argument("--ratio", type=float)

    p = sub.add_parser("train", parents=[common, seeds], help="train one model variant")
    p.add_argument("--data", help="prepared directory")
    p.add_argument("--variant", help="tip-cat | tip-sum | ddm-df | ddm-nn | ppm-ggm-nn | df")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--nn-hidden", type=int, dest="nn_hidden")

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--data", help="prepared directory")
    p.add_argument("--top", type=int, help="size of the best/worst lists")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = resolve(args.config, vars(args))
        return COMMANDS[args.command](cfg)
    except (ConfigError, ModelConfigError) as exc:
        print(f"tip: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ContractError, SaturationError, StorageError, CheckpointError, OSError) as exc:
        print(f"tip: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"tip: training aborted: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except MismatchError as exc:
        print(f"tip: refusing to evaluate: {exc}", file=sys.stderr)
        return EXIT_MISMATCH


if __name__ == "__main__":
    sys.exit(main())
