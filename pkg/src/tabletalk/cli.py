"""Experiment driver: dataset generation, training sweeps, evaluation, and
report aggregation.

Subcommands: gen-data, train, eval, report. Flags mirror the experiment
config; ``--config file.json`` loads a flat JSON config with flag overrides.
Exit codes: 0 ok, 2 I/O or bad configuration, 3 missing/incompatible input,
4 numerical failure. Errors print a single diagnostic line on stderr; success
prints a machine-parsable key=value summary on stdout.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import game, metrics, scenegen
from .errors import (
    ConfigurationError,
    DegenerateCorpusError,
    IncompatibleDataError,
    NumericalError,
    TabletalkError,
)

EXIT_OK = 0
EXIT_IO = 2
EXIT_MISSING = 3
EXIT_NUMERICAL = 4


class _MissingInputError(TabletalkError):
    """A required input file or directory is absent (exit 3)."""


@dataclass
class ExperimentConfig:
    """Flat experiment configuration; echoed into every output artifact."""

    n_scenes: int = 2000
    catalog: str = "builtin"
    d: int = 18
    k: int = 2
    noise_sigma: float = 0.1
    master_seed: int = 0
    vocab_sizes: tuple[int, ...] = (10, 20, 80)
    msg_len: int = 10
    encoders: tuple[str, ...] = ("vag", "baseline")
    seeds: tuple[int, ...] = (0, 1, 2)
    n_distractors: int = 5
    batch_size: int = 32
    epochs: int = 100
    lr: float = 1e-3
    tau: float = 1.0
    eval_fraction: float = 0.2
    gcn_hidden: int = 32
    embed_dim: int = 32
    gru_hidden: int = 64
    token_dim: int = 32
    jobs: int = 1

    def __post_init__(self):
        if not self.vocab_sizes or not self.encoders or not self.seeds:
            raise ConfigurationError("sweep lists (vocab_sizes, encoders, seeds) must be non-empty")

    def to_json(self) -> dict:
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            out[f.name] = list(val) if isinstance(val, tuple) else val
        return out


def _config_from(args: argparse.Namespace) -> ExperimentConfig:
    base = {}
    if getattr(args, "config", None):
        if not Path(args.config).exists():
            raise _MissingInputError(f"config file not found: {args.config}")
        with open(args.config) as fh:
            base = json.load(fh)
        unknown = set(base) - {f.name for f in fields(ExperimentConfig)}
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    merged = {}
    for f in fields(ExperimentConfig):
        flag_val = getattr(args, f.name, None)
        if flag_val is not None:
            merged[f.name] = flag_val
        elif f.name in base:
            merged[f.name] = base[f.name]
    cfg = ExperimentConfig(**merged)
    return ExperimentConfig(
        **{
            f.name: tuple(getattr(cfg, f.name)) if isinstance(getattr(cfg, f.name), list) else getattr(cfg, f.name)
            for f in fields(ExperimentConfig)
        }
    )


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def cell_seed(master_seed: int, vocab: int, encoder: str, seed_index: int) -> int:
    """Stable per-cell sub-seed decorrelating sweep cells."""
    digest = hashlib.sha256(f"{master_seed}:{vocab}:{encoder}:{seed_index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _derived_seed(base: int, tag: str) -> int:
    digest = hashlib.sha256(f"{base}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def cell_name(vocab: int, encoder: str, seed_index: int) -> str:
    return f"V{vocab}_{encoder}_s{seed_index}"


def _load_catalog(spec: str) -> scenegen.ConceptCatalog:
    if spec == "builtin":
        return scenegen.builtin_catalog()
    if not Path(spec).exists():
        raise _MissingInputError(f"catalog file not found: {spec}")
    with open(spec) as fh:
        return scenegen.ConceptCatalog.from_json(json.load(fh))


# ---------------------------------------------------------------------------
# gen-data
# ---------------------------------------------------------------------------


def cmd_gen_data(cfg: ExperimentConfig, out_path: str) -> int:
    catalog = _load_catalog(cfg.catalog)
    dataset = scenegen.generate_dataset(
        n_scenes=cfg.n_scenes,
        catalog=catalog,
        d=cfg.d,
        k=cfg.k,
        noise_sigma=cfg.noise_sigma,
        seed=cfg.master_seed,
    )
    scenegen.save_dataset(dataset, out_path)
    print(f"gen-data ok scenes={len(dataset.graphs)} seed={cfg.master_seed} out={out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _cell_config(cfg: ExperimentConfig, vocab: int, encoder: str, seed_index: int) -> dict:
    return {
        "vocab_size": vocab,
        "msg_len": cfg.msg_len,
        "encoder": encoder,
        "seed_index": seed_index,
        "cell_seed": cell_seed(cfg.master_seed, vocab, encoder, seed_index),
        "master_seed": cfg.master_seed,
        "n_distractors": cfg.n_distractors,
        "batch_size": cfg.batch_size,
        "epochs": cfg.epochs,
        "lr": cfg.lr,
        "tau": cfg.tau,
        "eval_fraction": cfg.eval_fraction,
        "gcn_hidden": cfg.gcn_hidden,
        "embed_dim": cfg.embed_dim,
        "gru_hidden": cfg.gru_hidden,
        "token_dim": cfg.token_dim,
    }


def _cell_dims(cell: dict, node_dim: int) -> game.AgentDims:
    return game.AgentDims(
        node_dim=node_dim,
        gcn_hidden=cell["gcn_hidden"],
        embed_dim=cell["embed_dim"],
        gru_hidden=cell["gru_hidden"],
        token_dim=cell["token_dim"],
    )


def _train_cell(dataset_path: str, cell: dict, cell_dir: str) -> str:
    """Train one sweep cell and write its artifacts. Returns the cell dir."""
    dataset = scenegen.load_dataset(dataset_path)
    train_graphs, _ = game.split_dataset(dataset.graphs, cell["eval_fraction"])
    config = game.TrainConfig(
        vocab=game.Vocabulary(size=cell["vocab_size"], length=cell["msg_len"]),
        n_distractors=cell["n_distractors"],
        batch_size=cell["batch_size"],
        epochs=cell["epochs"],
        lr=cell["lr"],
        tau=cell["tau"],
        seed=cell["cell_seed"],
        encoder_kind=cell["encoder"],
    )
    dims = _cell_dims(cell, dataset.d)
    speaker, listener, log = game.train(train_graphs, config, dims)
    out = Path(cell_dir)
    out.mkdir(parents=True, exist_ok=True)
    game.save_agent(str(out / "speaker.json"), speaker)
    game.save_agent(str(out / "listener.json"), listener)
    with open(out / "log.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss", "train_accuracy"])
        for row in log:
            writer.writerow([row["epoch"], repr(row["mean_loss"]), repr(row["train_accuracy"])])
    with open(out / "cell.json", "w") as fh:
        json.dump(cell, fh, sort_keys=True)
        fh.write("\n")
    return cell_dir


_CELL_FILES = ("speaker.json", "listener.json", "log.csv", "cell.json")


def cmd_train(cfg: ExperimentConfig, dataset_path: str, out_dir: str) -> int:
    if not Path(dataset_path).exists():
        raise _MissingInputError(f"dataset not found: {dataset_path}")
    # fail early on version mismatch before any cell work
    scenegen.load_dataset(dataset_path)
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    pending = []
    skipped = 0
    for vocab in cfg.vocab_sizes:
        for encoder in cfg.encoders:
            for seed_index in cfg.seeds:
                cell = _cell_config(cfg, vocab, encoder, seed_index)
                cell_dir = Path(out_dir) / cell_name(vocab, encoder, seed_index)
                if all((cell_dir / name).exists() for name in _CELL_FILES):
                    skipped += 1
                    continue
                pending.append((cell, str(cell_dir)))
    if cfg.jobs > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = [pool.submit(_train_cell, dataset_path, cell, cell_dir) for cell, cell_dir in pending]
            for fut in futures:
                fut.result()
    else:
        for cell, cell_dir in pending:
            _train_cell(dataset_path, cell, cell_dir)
    print(f"train ok cells={len(pending)} skipped={skipped} out={out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def _eval_cell(dataset: scenegen.Dataset, cell_dir: Path, out_dir: Path) -> None:
    cell = json.loads((cell_dir / "cell.json").read_text())
    speaker = game.load_agent(str(cell_dir / "speaker.json"))
    listener = game.load_agent(str(cell_dir / "listener.json"))
    _, eval_graphs = game.split_dataset(dataset.graphs, cell["eval_fraction"])
    if len(eval_graphs) <= cell["n_distractors"]:
        raise ConfigurationError(
            f"held-out split of {len(eval_graphs)} graphs cannot supply {cell['n_distractors']} distractors"
        )
    config = game.TrainConfig(
        vocab=game.Vocabulary(size=cell["vocab_size"], length=cell["msg_len"]),
        n_distractors=cell["n_distractors"],
        batch_size=cell["batch_size"],
        epochs=cell["epochs"],
        lr=cell["lr"],
        tau=cell["tau"],
        seed=cell["cell_seed"],
        encoder_kind=cell["encoder"],
    )
    rng = np.random.default_rng(_derived_seed(cell["cell_seed"], "eval"))
    accuracy, corpus = game.evaluate(speaker, listener, eval_graphs, config, rng)
    echo = dict(cell)
    echo.update({"dataset_seed": dataset.seed, "d": dataset.d, "k": dataset.k, "noise_sigma": dataset.noise_sigma, "n_eval_rounds": len(corpus)})
    report = metrics.compute_report(accuracy, corpus, echo)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "report.json", "w") as fh:
        json.dump(report.to_json(), fh, sort_keys=True)
        fh.write("\n")
    metrics.save_corpus(corpus, str(out_dir / "corpus.jsonl"))


def cmd_eval(checkpoint_dir: str, dataset_path: str, out_dir: str) -> int:
    root = Path(checkpoint_dir)
    if not root.is_dir():
        raise _MissingInputError(f"checkpoint directory not found: {checkpoint_dir}")
    cell_dirs = sorted(p.parent for p in root.glob("*/cell.json"))
    if not cell_dirs:
        raise _MissingInputError(f"no trained cells under {checkpoint_dir}")
    for cell_dir in cell_dirs:
        for name in ("speaker.json", "listener.json"):
            if not (cell_dir / name).exists():
                raise _MissingInputError(f"missing checkpoint {cell_dir / name}")
    if not Path(dataset_path).exists():
        raise _MissingInputError(f"dataset not found: {dataset_path}")
    dataset = scenegen.load_dataset(dataset_path)
    for cell_dir in cell_dirs:
        _eval_cell(dataset, cell_dir, Path(out_dir) / cell_dir.name)
    print(f"eval ok cells={len(cell_dirs)} out={out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def _population_std(values: list[float]) -> float:
    mean = sum(values) / len(values)
    return math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))


def cmd_report(reports_dir: str, out_dir: str) -> int:
    root = Path(reports_dir)
    report_files = sorted(root.glob("*/report.json"))
    if not report_files:
        raise _MissingInputError(f"no reports under {reports_dir}")
    reports = []
    for path in report_files:
        rep = metrics.MetricsReport.from_json(json.loads(path.read_text()))
        reports.append(rep)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    groups: dict[tuple[int, str], list[metrics.MetricsReport]] = {}
    for rep in reports:
        key = (rep.config["vocab_size"], rep.config["encoder"])
        groups.setdefault(key, []).append(rep)

    with open(out / "aggregate.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "vocab",
                "encoder",
                "n",
                "accuracy_mean",
                "accuracy_std",
                "topsim_mean",
                "topsim_std",
                "ci_mean",
                "ci_std",
                "coverage90_mean",
                "coverage90_std",
            ]
        )
        for (vocab, encoder) in sorted(groups):
            cell_reports = groups[(vocab, encoder)]
            row = [vocab, encoder, len(cell_reports)]
            for attr in ("accuracy", "topsim", "ci", "coverage90"):
                values = [float(v) for r in cell_reports if (v := getattr(r, attr)) is not None]
                if values:
                    row.append(repr(sum(values) / len(values)))
                    row.append(repr(_population_std(values)))
                else:
                    row.extend(["", ""])
            writer.writerow(row)

    with open(out / "plotdata.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["panel", "x", "y"])
        for rep in sorted(reports, key=lambda r: (r.config["vocab_size"], r.config["encoder"], r.config["seed_index"])):
            tag = f"{rep.config['encoder']}:V{rep.config['vocab_size']}:s{rep.config['seed_index']}"
            total = sum(count for _, count in rep.zipf)
            acc = 0
            for rank, count in rep.zipf:
                writer.writerow([f"zipf:{tag}", repr(math.log10(rank)), repr(math.log10(count))])
            for rank, count in rep.zipf:
                acc += count
                writer.writerow([f"coverage:{tag}", rank, repr(acc / total)])
            for token_id, count in enumerate(rep.histogram):
                writer.writerow([f"histogram:{tag}", token_id, count])
        for (vocab, encoder) in sorted(groups):
            cell_reports = groups[(vocab, encoder)]
            for attr in ("accuracy", "topsim", "ci", "coverage90"):
                values = [float(v) for r in cell_reports if (v := getattr(r, attr)) is not None]
                if not values:
                    continue
                writer.writerow([f"metric:{attr}:{encoder}", vocab, repr(sum(values) / len(values))])
                writer.writerow([f"metric_std:{attr}:{encoder}", vocab, repr(_population_std(values))])

    print(f"report ok cells={len(reports)} groups={len(groups)} out={out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing and entry point
# ---------------------------------------------------------------------------


def _add_config_flags(parser: argparse.ArgumentParser, *names: str) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its values")
    spec = {
        "n_scenes": dict(flag="--scenes", type=int, dest="n_scenes"),
        "catalog": dict(flag="--catalog", type=str),
        "d": dict(flag="--d", type=int),
        "k": dict(flag="--k", type=int),
        "noise_sigma": dict(flag="--noise-sigma", type=float, dest="noise_sigma"),
        "master_seed": dict(flag="--seed", type=int, dest="master_seed"),
        "vocab_sizes": dict(flag="--vocab-sizes", type=_int_list, dest="vocab_sizes"),
        "msg_len": dict(flag="--msg-len", type=int, dest="msg_len"),
        "encoders": dict(flag="--encoders", type=_str_list),
        "seeds": dict(flag="--seeds", type=_int_list),
        "n_distractors": dict(flag="--distractors", type=int, dest="n_distractors"),
        "batch_size": dict(flag="--batch-size", type=int, dest="batch_size"),
        "epochs": dict(flag="--epochs", type=int),
        "lr": dict(flag="--lr", type=float),
        "tau": dict(flag="--tau", type=float),
        "eval_fraction": dict(flag="--eval-fraction", type=float, dest="eval_fraction"),
        "gcn_hidden": dict(flag="--gcn-hidden", type=int, dest="gcn_hidden"),
        "embed_dim": dict(flag="--embed-dim", type=int, dest="embed_dim"),
        "gru_hidden": dict(flag="--gru-hidden", type=int, dest="gru_hidden"),
        "token_dim": dict(flag="--token-dim", type=int, dest="token_dim"),
        "jobs": dict(flag="--jobs", type=int),
    }
    for name in names:
        opts = dict(spec[name])
        flag = opts.pop("flag")
        parser.add_argument(flag, default=None, **opts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tabletalk", description="Emergent-communication lab over synthetic dining scene graphs")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen-data", help="generate a scene-graph dataset file")
    _add_config_flags(p_gen, "n_scenes", "catalog", "d", "k", "noise_sigma", "master_seed")
    p_gen.add_argument("--out", required=True, help="output dataset path (.jsonl)")

    p_train = sub.add_parser("train", help="train the (vocab x encoder x seed) sweep")
    _add_config_flags(
        p_train,
        "master_seed",
        "vocab_sizes",
        "msg_len",
        "encoders",
        "seeds",
        "n_distractors",
        "batch_size",
        "epochs",
        "lr",
        "tau",
        "eval_fraction",
        "gcn_hidden",
        "embed_dim",
        "gru_hidden",
        "token_dim",
        "jobs",
    )
    p_train.add_argument("--dataset", required=True, help="dataset file from gen-data")
    p_train.add_argument("--out-dir", required=True, help="directory for per-cell checkpoints and logs")

    p_eval = sub.add_parser("eval", help="evaluate trained cells on the held-out split")
    p_eval.add_argument("--checkpoints", required=True, help="train output directory")
    p_eval.add_argument("--dataset", required=True, help="dataset file from gen-data")
    p_eval.add_argument("--out-dir", required=True, help="directory for per-cell reports and corpora")

    p_report = sub.add_parser("report", help="aggregate reports and emit plot data")
    p_report.add_argument("--reports", required=True, help="eval output directory")
    p_report.add_argument("--out-dir", required=True, help="directory for aggregate.csv and plotdata.csv")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "gen-data":
            return cmd_gen_data(_config_from(args), args.out)
        if args.command == "train":
            return cmd_train(_config_from(args), args.dataset, args.out_dir)
        if args.command == "eval":
            return cmd_eval(args.checkpoints, args.dataset, args.out_dir)
        if args.command == "report":
            return cmd_report(args.reports, args.out_dir)
        parser.error(f"unknown command {args.command!r}")
    except (_MissingInputError, IncompatibleDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigurationError, DegenerateCorpusError, TabletalkError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
