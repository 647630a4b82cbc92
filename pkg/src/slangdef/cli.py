"""Operator surface: prepare, train, evaluate, explain, report.

One INI-style configuration file drives a run; command-line flags override it.
All outputs land under the configured output directory in a fixed layout:

    vocabs/       word.vocab, char.vocab
    manifests/    train.jsonl, dev.jsonl, test.jsonl, summary.json
    checkpoints/  best.ckpt, last.ckpt
    logs/         train_log.jsonl
    reports/      bleu.json, examples.jsonl

Exit statuses: 0 success, 1 usage, 2 data error, 3 numeric abort.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from .data import (DataError, Entry, load_corpus, make_pairs, save_entries,
                   split_entries)
from .decoding import DecodeConfig, beam_decode, greedy_decode
from .metrics import bleu
from .model import (CONTEXT_CAP, TARGET_CAP, CheckpointError, DualEncoderModel,
                    ModelConfig, clip_ids, init_model, load_checkpoint,
                    peek_checkpoint, save_checkpoint)
from .seeding import derive_seed
from .training import (NonFiniteLossError, TrainConfig, TrainState, train)
from .vocab import Vocabulary, build as build_vocab, tokenize_chars, tokenize_words

log = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):   # route argparse failures to exit status 1
        raise UsageError(message)


@dataclass
class RunPaths:
    root: Path

    def __post_init__(self):
        self.root = Path(self.root)
        self.vocabs = self.root / "vocabs"
        self.manifests = self.root / "manifests"
        self.checkpoints = self.root / "checkpoints"
        self.logs = self.root / "logs"
        self.reports = self.root / "reports"
        self.word_vocab = self.vocabs / "word.vocab"
        self.char_vocab = self.vocabs / "char.vocab"
        self.train_manifest = self.manifests / "train.jsonl"
        self.dev_manifest = self.manifests / "dev.jsonl"
        self.test_manifest = self.manifests / "test.jsonl"
        self.summary = self.manifests / "summary.json"
        self.best_ckpt = self.checkpoints / "best.ckpt"
        self.last_ckpt = self.checkpoints / "last.ckpt"
        self.train_log = self.logs / "train_log.jsonl"
        self.bleu_report = self.reports / "bleu.json"
        self.examples_dump = self.reports / "examples.jsonl"

    def make_dirs(self):
        for d in (self.vocabs, self.manifests, self.checkpoints, self.logs,
                  self.reports):
            d.mkdir(parents=True, exist_ok=True)


@dataclass
class RunConfig:
    corpus: Path
    output_dir: Path
    seed: int = 0
    test_fraction: float = 0.2
    dev_fraction: float = 0.05
    strict: bool = False
    word_vocab_size: int = 50_000
    word_min_count: int = 2
    model: ModelConfig = None
    train: TrainConfig = None
    decode: DecodeConfig = None

    def paths(self) -> RunPaths:
        return RunPaths(self.output_dir)


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """Merge the INI file with flag overrides (flags win)."""
    cp = configparser.ConfigParser()
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file {path} not found")
        cp.read(path, encoding="utf-8")
    data = cp["data"] if cp.has_section("data") else {}
    run = cp["run"] if cp.has_section("run") else {}
    mod = cp["model"] if cp.has_section("model") else {}
    tr = cp["training"] if cp.has_section("training") else {}
    dec = cp["decoding"] if cp.has_section("decoding") else {}

    corpus = data.get("corpus")
    output_dir = run.get("output_dir")
    if corpus is None or output_dir is None:
        raise UsageError("config must provide [data] corpus and [run] output_dir")

    seed = int(run.get("seed", 0))
    if getattr(args, "seed", None) is not None:
        seed = args.seed
    variant = mod.get("variant", "dual")
    if getattr(args, "variant", None):
        variant = args.variant
    hidden = int(mod.get("hidden", 64))
    if getattr(args, "hidden", None) is not None:
        hidden = args.hidden
    strict = str(data.get("strict", "false")).lower() in ("1", "true", "yes")
    if getattr(args, "strict", False):
        strict = True

    def opt_int(section, key):
        val = section.get(key)
        return int(val) if val is not None else None

    model = ModelConfig(variant=variant, hidden=hidden,
                        word_embed=opt_int(mod, "word_embed"),
                        char_embed=opt_int(mod, "char_embed"),
                        attn=opt_int(mod, "attn"))
    train_cfg = TrainConfig(
        initial_lr=float(tr.get("lr", 0.5)),
        lr_decay=float(tr.get("lr_decay", 0.5)),
        patience=int(tr.get("patience", 1)),
        clip_norm=float(tr.get("clip_norm", 5.0)),
        batch_size=int(tr.get("batch_size", 8)),
        max_epochs=int(tr.get("max_epochs", 20)),
        seed=seed, model=model)
    decode_cfg = DecodeConfig(
        max_len=int(dec.get("max_len", 32)),
        mode=dec.get("mode", "greedy"),
        beam_width=int(dec.get("beam", 4)),
        length_norm=float(dec.get("length_norm", 0.0)))
    if getattr(args, "max_len", None) is not None:
        decode_cfg.max_len = args.max_len
    if getattr(args, "beam", None) is not None:
        decode_cfg.beam_width = args.beam
        decode_cfg.mode = "beam" if args.beam > 1 else "greedy"
    return RunConfig(corpus=Path(corpus), output_dir=Path(output_dir),
                     seed=seed,
                     test_fraction=float(data.get("test_fraction", 0.2)),
                     dev_fraction=float(data.get("dev_fraction", 0.05)),
                     strict=strict,
                     word_vocab_size=int(data.get("word_vocab_size", 50_000)),
                     word_min_count=int(data.get("word_min_count", 2)),
                     model=model, train=train_cfg, decode=decode_cfg)


def _load_vocabs(paths: RunPaths) -> tuple[Vocabulary, Vocabulary]:
    for p in (paths.word_vocab, paths.char_vocab):
        if not p.is_file():
            raise DataError(f"vocabulary {p} missing; run `slangdef prepare` first")
    return (Vocabulary.load(paths.word_vocab, kind="word"),
            Vocabulary.load(paths.char_vocab, kind="char"))


def _load_manifest(path: Path) -> list[Entry]:
    if not path.is_file():
        raise DataError(f"manifest {path} missing; run `slangdef prepare` first")
    return load_corpus(path)


def _entry_ids(entry: Entry, word_vocab: Vocabulary, char_vocab: Vocabulary,
               char_context: bool) -> tuple[list[int], list[int]] | None:
    """Encoder-side ids for one entry (context, target chars), capped; None
    when the entry tokenizes to nothing."""
    if char_context:
        context_tokens = tokenize_chars(entry.example)
        context = char_vocab.encode(context_tokens)
    else:
        context_tokens = tokenize_words(entry.example)
        context = word_vocab.encode(context_tokens)
    target = char_vocab.encode(tokenize_chars(entry.target))
    if not context or not target:
        return None
    return (clip_ids(context, CONTEXT_CAP, "context"),
            clip_ids(target, TARGET_CAP, "target"))


# -- subcommands ---------------------------------------------------------------


def cmd_prepare(args: argparse.Namespace) -> int:
    cfg = load_run_config(args)
    paths = cfg.paths()
    paths.make_dirs()
    entries = load_corpus(cfg.corpus, strict=cfg.strict)
    if not entries:
        raise DataError(f"corpus {cfg.corpus} has no usable entries")
    train_entries, test_entries = split_entries(entries, cfg.test_fraction,
                                                cfg.seed)
    train_entries, dev_entries = split_entries(
        train_entries, cfg.dev_fraction, derive_seed(cfg.seed, "dev"))
    word_vocab = build_vocab(
        (tokenize_words(e.example) + tokenize_words(e.definition)
         for e in train_entries),
        max_size=cfg.word_vocab_size, min_count=cfg.word_min_count, kind="word")
    char_vocab = build_vocab(
        (tokenize_chars(e.example) + tokenize_chars(e.target)
         for e in train_entries),
        max_size=None, min_count=1, kind="char")
    word_vocab.save(paths.word_vocab)
    char_vocab.save(paths.char_vocab)
    save_entries(train_entries, paths.train_manifest)
    save_entries(dev_entries, paths.dev_manifest)
    save_entries(test_entries, paths.test_manifest)
    char_context = cfg.model.variant == "char"
    summary = {
        "seed": cfg.seed,
        "test_fraction": cfg.test_fraction,
        "dev_fraction": cfg.dev_fraction,
        "entries": {"train": len(train_entries), "dev": len(dev_entries),
                    "test": len(test_entries),
                    "total": len(train_entries) + len(dev_entries) + len(test_entries)},
        "pairs": {name: len(make_pairs(split, word_vocab, char_vocab,
                                       char_context=char_context))
                  for name, split in (("train", train_entries),
                                      ("dev", dev_entries),
                                      ("test", test_entries))},
        "word_vocab": len(word_vocab),
        "char_vocab": len(char_vocab),
    }
    paths.summary.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")
    print(f"prepared {summary['entries']['total']} entries -> "
          f"train {summary['entries']['train']} / dev {summary['entries']['dev']}"
          f" / test {summary['entries']['test']}; word vocab {len(word_vocab)},"
          f" char vocab {len(char_vocab)}")
    return EXIT_OK


class _EpochWriter:
    """Checkpoint cadence: last.ckpt every epoch, best.ckpt on improvement,
    one JSON log line per epoch."""

    def __init__(self, paths: RunPaths, resume: bool):
        self.paths = paths
        mode = "a" if resume else "w"
        self._log = open(paths.train_log, mode, encoding="utf-8")

    def __call__(self, model: DualEncoderModel, state: TrainState,
                 improved: bool) -> None:
        extra = {"train_state": state.as_dict()}
        save_checkpoint(model, self.paths.last_ckpt, extra=extra)
        if improved:
            save_checkpoint(model, self.paths.best_ckpt, extra=extra)
        self._log.write(json.dumps(state.history[-1].as_dict(),
                                   sort_keys=True) + "\n")
        self._log.flush()

    def close(self):
        self._log.close()


def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_run_config(args)
    paths = cfg.paths()
    paths.make_dirs()
    word_vocab, char_vocab = _load_vocabs(paths)
    char_context = cfg.model.variant == "char"
    pairs_train = make_pairs(_load_manifest(paths.train_manifest), word_vocab,
                             char_vocab, char_context=char_context)
    pairs_dev = make_pairs(_load_manifest(paths.dev_manifest), word_vocab,
                           char_vocab, char_context=char_context)
    if not pairs_train:
        raise DataError("no usable training pairs")
    resume = paths.last_ckpt.is_file()
    if resume:
        model = load_checkpoint(paths.last_ckpt, word_vocab, char_vocab)
        if model.config.variant != cfg.model.variant \
                or model.config.hidden != cfg.model.hidden:
            raise CheckpointError(
                f"{paths.last_ckpt} holds a {model.config.variant}/"
                f"{model.config.hidden} model but the config asks for "
                f"{cfg.model.variant}/{cfg.model.hidden}")
        state = TrainState.from_dict(
            peek_checkpoint(paths.last_ckpt)["extra"]["train_state"])
        if state.epoch >= cfg.train.max_epochs:
            print(f"nothing to do: {state.epoch} epochs already trained")
            return EXIT_OK
        print(f"resuming from epoch {state.epoch}")
    else:
        model = init_model(cfg.model, len(word_vocab), len(char_vocab),
                           cfg.seed, word_vocab.content_hash(),
                           char_vocab.content_hash())
        state = None
    writer = _EpochWriter(paths, resume)
    try:
        model, state = train(model, pairs_train, pairs_dev, cfg.train,
                             state=state, epoch_hook=writer)
    finally:
        writer.close()
    print(f"trained {state.epoch} epochs; best dev loss {state.best_dev:.4f}; "
          f"checkpoints in {paths.checkpoints}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = load_run_config(args)
    paths = cfg.paths()
    paths.make_dirs()
    ckpt = Path(args.checkpoint) if args.checkpoint else paths.best_ckpt
    if not ckpt.is_file():
        raise DataError(f"checkpoint {ckpt} missing; run `slangdef train` first")
    word_vocab, char_vocab = _load_vocabs(paths)
    model = load_checkpoint(ckpt, word_vocab, char_vocab)
    entries = _load_manifest(paths.test_manifest)
    char_context = model.config.variant == "char"
    candidates = []
    references = []
    rows = []
    skipped = 0
    for entry in entries:
        ids = _entry_ids(entry, word_vocab, char_vocab, char_context)
        if ids is None:
            skipped += 1
            continue
        context_ids, target_ids = ids
        if cfg.decode.mode == "beam":
            ranked = beam_decode(model, context_ids, target_ids, cfg.decode)
            out_ids = ranked[0][0] if ranked else []
        else:
            out_ids = greedy_decode(model, context_ids, target_ids, cfg.decode)
        generated = word_vocab.decode(out_ids)
        reference = tokenize_words(entry.definition)
        candidates.append(generated)
        references.append(reference)
        rows.append({"context": entry.example, "target": entry.target,
                     "reference": entry.definition,
                     "generated": " ".join(generated)})
    if not candidates:
        raise DataError("test manifest produced no decodable entries")
    report = bleu(candidates, references)
    payload = report.as_dict()
    payload.update({"pairs": len(candidates), "skipped": skipped,
                    "checkpoint": str(ckpt), "decode_mode": cfg.decode.mode})
    paths.bleu_report.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    with open(paths.examples_dump, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    print(f"B1 {report.b1:.2f}  B2 {report.b2:.2f}  "
          f"(BP {report.brevity_penalty:.4f}, {len(candidates)} pairs)")
    return EXIT_OK


def cmd_explain(args: argparse.Namespace) -> int:
    if not args.sentence.strip() or not args.target.strip():
        raise UsageError("--sentence and --target must be non-empty")
    ckpt = Path(args.checkpoint)
    if not ckpt.is_file():
        raise DataError(f"checkpoint {ckpt} not found")
    header = peek_checkpoint(ckpt)
    vocab_dir = Path(args.vocab_dir) if args.vocab_dir else ckpt.parent.parent / "vocabs"
    word_path = vocab_dir / "word.vocab"
    char_path = vocab_dir / "char.vocab"
    if not word_path.is_file():
        raise DataError(f"word vocabulary {word_path} missing "
                        f"(pass --vocab-dir for a non-standard layout)")
    word_vocab = Vocabulary.load(word_path, kind="word")
    char_vocab = Vocabulary.load(char_path, kind="char") if char_path.is_file() else None
    if header["variant"] in ("dual", "char") and char_vocab is None:
        raise DataError(f"char vocabulary {char_path} missing")
    model = load_checkpoint(ckpt, word_vocab, char_vocab)
    if model.config.variant == "char":
        context_ids = char_vocab.encode(tokenize_chars(args.sentence))
    else:
        context_ids = word_vocab.encode(tokenize_words(args.sentence))
    context_ids = clip_ids(context_ids, CONTEXT_CAP, "context")
    if char_vocab is not None:
        target_ids = clip_ids(char_vocab.encode(tokenize_chars(args.target)),
                              TARGET_CAP, "target")
    else:
        target_ids = []
    max_len = args.max_len if args.max_len is not None else 32
    if args.beam is not None and args.beam > 1:
        dcfg = DecodeConfig(max_len=max_len, mode="beam", beam_width=args.beam)
        ranked = beam_decode(model, context_ids, target_ids, dcfg)
        out_ids = ranked[0][0] if ranked else []
    else:
        dcfg = DecodeConfig(max_len=max_len)
        out_ids = greedy_decode(model, context_ids, target_ids, dcfg)
    print(" ".join(word_vocab.decode(out_ids)))
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    cfg = load_run_config(args)
    log_path = cfg.paths().train_log
    if not log_path.is_file():
        raise DataError(f"training log {log_path} missing; run `slangdef train`")
    print(f"{'epoch':>5}  {'train_loss':>10}  {'dev_loss':>10}  "
          f"{'lr':>8}  {'seconds':>8}")
    for line in log_path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        print(f"{rec['epoch']:>5}  {rec['train_loss']:>10.4f}  "
              f"{rec['dev_loss']:>10.4f}  {rec['lr']:>8.4g}  "
              f"{rec['seconds']:>8.2f}")
    return EXIT_OK


# -- parser / entry point --------------------------------------------------------


def _add_common(p: _Parser, config_required: bool = True):
    p.add_argument("--config", required=config_required, metavar="PATH",
                   help="INI run configuration")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--variant", choices=("single", "dual", "char"), default=None)
    p.add_argument("--hidden", type=int, default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="slangdef",
                     description="explain non-standard English expressions")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build vocabularies and split manifests",
                       parents=[], add_help=True)
    _add_common(p)
    p.add_argument("--strict", action="store_true",
                   help="drop entries whose example does not contain the target")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a model on prepared data")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="decode the test split and report BLEU")
    _add_common(p)
    p.add_argument("--checkpoint", metavar="PATH", default=None)
    p.add_argument("--beam", type=int, default=None)
    p.add_argument("--max-len", dest="max_len", type=int, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("explain", help="explain one expression in a sentence")
    p.add_argument("--checkpoint", required=True, metavar="PATH")
    p.add_argument("--sentence", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--beam", type=int, default=None)
    p.add_argument("--max-len", dest="max_len", type=int, default=None)
    p.add_argument("--vocab-dir", dest="vocab_dir", metavar="DIR", default=None)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("report", help="pretty-print the epoch log")
    _add_common(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NonFiniteLossError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
