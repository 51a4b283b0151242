"""Command-line front end.

Exit codes: 0 success, 1 user error (bad flags, missing or invalid input),
2 internal error.  Every subcommand takes ``--seed``, ``--config`` (a JSON
file) and ``--out``.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import signal
import sys
from pathlib import Path

import numpy as np

from ..eval.f3 import ScorerConfig
from ..eval.metrics import OfflineReport
from ..eval.offline import EncoderTrainer, LogisticTrainer, OverlapError, evaluate_offline
from ..eval.reports import format_offline_table, format_online_table, reports_json
from ..events.balance import EmptySubclassError, Strategy, balance
from ..events.logio import LogParseError, read_log, write_log
from ..events.synthetic import SyntheticConfig, SyntheticConfigError, generate_synthetic
from ..events.types import InvariantViolation
from ..features import JONBERTA, MASKS, LayoutMismatch, fit_scaling, layout_for
from ..models import checkpoint as ckpt_io
from ..models.checkpoint import Checkpoint, CheckpointError
from ..models.config import ConfigError, ModelConfig, TrainConfig
from ..models.encoder import EncoderClassifier
from ..models.logistic import LogisticConfig, SingleClassError, logistic_train
from ..models.train import encode_samples, train, two_stage
from ..tokenizer import Tokenizer, WindowTooSmall
from .decide import DEFAULT_THRESHOLD, PassThrough, arm_from_checkpoint
from .replay import NONE_ARM, replay
from .serve import DecisionService

log = logging.getLogger("smartinvoke")

MODEL_KINDS = ("logistic", "encoder", "head", "attn")


class UsageError(Exception):
    pass


USER_ERRORS = (
    UsageError,
    FileNotFoundError,
    IsADirectoryError,
    PermissionError,
    json.JSONDecodeError,
    OverlapError,
    ConfigError,
    LogParseError,
    CheckpointError,
    LayoutMismatch,
    SyntheticConfigError,
    WindowTooSmall,
    EmptySubclassError,
    SingleClassError,
    InvariantViolation,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="seed for every random choice")
    p.add_argument("--config", type=Path, help="JSON file with configuration sections")
    p.add_argument("--out", type=Path, help="output file (default: standard output where sensible)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="smartinvoke", description="Completion-invocation filtering toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write a synthetic completion log")
    _common(p)
    p.add_argument("--n-events", type=int)
    p.add_argument("--mixture-weight", type=float)

    p = sub.add_parser("train", help="train a filter and write a checkpoint")
    _common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--model", choices=MODEL_KINDS, default="encoder")
    p.add_argument("--balance", choices=[s.value for s in Strategy], default="subclasses")
    p.add_argument("--mask", choices=sorted(MASKS), default="copilot", help="feature mask of the logistic filter")
    p.add_argument("--tokenization", choices=Tokenizer.STRATEGIES, default="joint")
    p.add_argument("--window", type=int)
    p.add_argument("--suffix-cap", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--switch-epoch", type=int, help="train the base model this many epochs before extending it")

    p = sub.add_parser("eval-offline", help="k-split training plus bootstrap on a held-out log")
    _common(p)
    p.add_argument("--train", type=Path, required=True, dest="train_log")
    p.add_argument("--test", type=Path, required=True, dest="test_log")
    p.add_argument("--model", choices=MODEL_KINDS, default="logistic")
    p.add_argument("--mask", choices=sorted(MASKS), default="copilot")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--n-bootstrap", type=int, default=10_000)
    p.add_argument("--window", type=int)
    p.add_argument("--suffix-cap", type=int)
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("replay", help="simulate the A/B study on a logged dataset")
    _common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--arm", action="append", default=[], metavar="NAME=CHECKPOINT",
                   help="named arm; 'none' needs no checkpoint (repeatable)")
    p.add_argument("--scorer", type=Path, help="encoder checkpoint used for the proxy score")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--mid-line-rule", action="store_true")
    p.add_argument("--include-latency", action="store_true", help="add latency percentiles to the JSON report")

    p = sub.add_parser("serve", help="answer newline-delimited JSON filter requests")
    _common(p)
    p.add_argument("--checkpoint", type=Path, help="filter checkpoint (omit for the pass-through arm)")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--mid-line-rule", action="store_true")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--stdio", action="store_true")
    mode.add_argument("--port", type=int, default=8737)
    p.add_argument("--host", default="127.0.0.1")

    p = sub.add_parser("tokenize", help="show the cursor-centred encoding of a prefix/suffix pair")
    _common(p)
    p.add_argument("--prefix-file", type=Path, required=True)
    p.add_argument("--suffix-file", type=Path, required=True)
    p.add_argument("--strategy", choices=Tokenizer.STRATEGIES, default="joint")
    p.add_argument("--window", type=int, default=512)
    p.add_argument("--suffix-cap", type=int, default=128)
    p.add_argument("--ids", action="store_true", help="also print the token ids")

    p = sub.add_parser("inspect-checkpoint", help="print a checkpoint header")
    _common(p)
    p.add_argument("checkpoint", type=Path)
    return parser


def _load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    obj = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(obj, dict):
        raise UsageError("--config must hold a JSON object")
    return obj


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        out.write_text(text, encoding="utf-8")


def _model_config(cfg: dict, args) -> ModelConfig:
    section = dict(cfg.get("model", {}))
    if getattr(args, "window", None):
        section.setdefault("max_positions", args.window)
    return ModelConfig.from_dict(section)


def _train_config(cfg: dict, args) -> TrainConfig:
    section = dict(cfg.get("train", {}))
    section["seed"] = args.seed
    if getattr(args, "epochs", None):
        section["epochs"] = args.epochs
    return TrainConfig.from_dict(section)


def _logistic_config(cfg: dict) -> LogisticConfig:
    try:
        return LogisticConfig(**cfg.get("logistic", {}))
    except TypeError as exc:
        raise ConfigError(f"bad logistic section: {exc}") from None


def _window(cfg: dict, args) -> tuple[int, int]:
    tok = cfg.get("tokenization", {})
    window = args.window or tok.get("window") or 512
    cap = args.suffix_cap or tok.get("suffix_cap") or min(128, window // 4)
    return int(window), int(cap)


EXTENSIONS = {"head": {"head_variant": "dense_concat"}, "attn": {"attn_layers": (0,)}}


def cmd_gen_data(args, cfg) -> int:
    section = dict(cfg.get("synthetic", {}))
    if args.n_events is not None:
        section["n_events"] = args.n_events
    if args.mixture_weight is not None:
        section["mixture_weight"] = args.mixture_weight
    data = generate_synthetic(SyntheticConfig.from_dict(section), seed=args.seed)
    if args.out is None:
        raise UsageError("gen-data needs --out")
    write_log(data, args.out)
    print(json.dumps({"events": len(data), "subclasses": {k.value: v for k, v in data.subclass_counts().items()}}))
    return 0


def cmd_train(args, cfg) -> int:
    if args.out is None:
        raise UsageError("train needs --out")
    data = balance(read_log(args.data), args.balance, args.seed)
    samples = list(data)
    meta = {"seed": args.seed, "samples": len(samples), "balance": args.balance, "source": str(args.data)}
    if args.model == "logistic":
        include = MASKS[args.mask]
        model = logistic_train(samples, include, _logistic_config(cfg))
        ckpt = Checkpoint(model, layout_for(include), model.scaling, meta)
    else:
        window, cap = _window(cfg, args)
        mcfg = _model_config(cfg, args)
        if mcfg.max_positions < window:
            raise UsageError(f"window {window} exceeds the model's max_positions {mcfg.max_positions}")
        tcfg = _train_config(cfg, args)
        ext = EXTENSIONS.get(args.model)
        scaling = fit_scaling(samples) if ext else None
        enc = encode_samples(samples, Tokenizer(), args.tokenization, window, cap, scaling, JONBERTA)
        model = EncoderClassifier(mcfg, seed=args.seed)
        if ext and args.switch_epoch:
            result = two_stage(model, enc, tcfg, args.switch_epoch, **ext)
        else:
            if ext:
                model = model.extend(enc.features.shape[1], seed=args.seed, **ext)
            result = train(model, enc, tcfg, on_epoch=lambda e, l: log.info("epoch %d loss %.4f", e, l))
        meta["loss_curve"] = result.epoch_losses
        meta["epochs"] = len(result.epoch_losses)
        layout = layout_for(JONBERTA) if ext else ()
        ckpt = Checkpoint(result.model, layout, scaling, meta, window, cap, args.tokenization)
    ckpt_io.save(ckpt, args.out)
    print(json.dumps({"checkpoint": str(args.out), "kind": ckpt.kind, "samples": len(samples)}))
    return 0


def cmd_eval_offline(args, cfg) -> int:
    pool, test = list(read_log(args.train_log)), list(read_log(args.test_log))
    if args.model == "logistic":
        trainer = LogisticTrainer(MASKS[args.mask], _logistic_config(cfg), name=f"logistic[{args.mask}]")
    else:
        window, cap = _window(cfg, args)
        trainer = EncoderTrainer(
            _model_config(cfg, args), _train_config(cfg, args), window=window, suffix_cap=cap,
            extensions=EXTENSIONS.get(args.model), name=args.model,
        )
    report: OfflineReport = evaluate_offline(trainer, pool, test, args.k, args.n_bootstrap, args.seed)
    print(format_offline_table([report]))
    if args.out is not None:
        args.out.write_text(reports_json([report]), encoding="utf-8")
    return 0


def _scorer(args, arms) -> ScorerConfig:
    if args.scorer is not None:
        model = ckpt_io.load(args.scorer).model
        if not isinstance(model, EncoderClassifier):
            raise UsageError("--scorer must be an encoder checkpoint")
        return ScorerConfig(model, Tokenizer())
    for arm in arms.values():
        enc = getattr(arm, "model", None)
        if isinstance(enc, EncoderClassifier):
            return ScorerConfig(enc, Tokenizer())
    # an untrained encoder seeded from --seed keeps the score defined and reproducible
    return ScorerConfig(EncoderClassifier(ModelConfig(), seed=args.seed), Tokenizer())


def cmd_replay(args, cfg) -> int:
    specs = args.arm or [NONE_ARM]
    arms = {}
    for spec in specs:
        name, _, path = spec.partition("=")
        if not name:
            raise UsageError(f"bad --arm {spec!r}; expected NAME or NAME=CHECKPOINT")
        if name in arms:
            raise UsageError(f"arm {name!r} given twice")
        if not path:
            if name != NONE_ARM:
                raise UsageError(f"arm {name!r} needs a checkpoint")
            arms[name] = PassThrough()
        else:
            arms[name] = arm_from_checkpoint(ckpt_io.load(path), name, args.threshold)
    data = read_log(args.data)
    reports = replay(list(data), arms, args.seed, _scorer(args, arms), args.mid_line_rule)
    _emit(reports_json(reports, args.include_latency), args.out)
    if args.out is not None:
        print(format_online_table(reports, args.include_latency))
    return 0


def cmd_serve(args, cfg) -> int:
    flt = PassThrough() if args.checkpoint is None else arm_from_checkpoint(ckpt_io.load(args.checkpoint), "filter", args.threshold)
    service = DecisionService(flt, args.mid_line_rule)

    def flush() -> None:
        text = json.dumps(service.histogram.to_dict(), indent=2) + "\n"
        if args.out is not None:
            args.out.write_text(text, encoding="utf-8")
        else:
            sys.stderr.write(text)

    try:
        if args.stdio:
            signal.signal(signal.SIGTERM, _interrupt)
            service.run_stdio()
        else:
            ready = lambda port: print(json.dumps({"listening": f"{args.host}:{port}"}), flush=True)
            asyncio.run(service.run_tcp(args.host, args.port, ready))
    except KeyboardInterrupt:
        pass
    finally:
        flush()
    return 0


def _interrupt(signum, frame):
    raise KeyboardInterrupt


def cmd_tokenize(args, cfg) -> int:
    tok = Tokenizer()
    prefix = args.prefix_file.read_text(encoding="utf-8")
    suffix = args.suffix_file.read_text(encoding="utf-8")
    ctx = tok.encode_context(prefix, suffix, args.strategy, args.window, args.suffix_cap)
    summary = ctx.summary()
    if args.ids:
        summary["ids"] = ctx.ids[: summary["content_length"]].tolist()
    _emit(json.dumps(summary, sort_keys=True), args.out)
    return 0


def cmd_inspect(args, cfg) -> int:
    header = ckpt_io.read_header(args.checkpoint)
    ckpt = ckpt_io.load(args.checkpoint)
    n_params = int(sum(np.prod(p["shape"]) if p["shape"] else 1 for p in header["params"]))
    summary = {
        "kind": header["kind"],
        "version": header["version"],
        "parameters": n_params,
        "config": header.get("config"),
        "layout_length": len(header.get("layout", [])),
        "tokenization": header.get("tokenization"),
        "metadata": header.get("metadata"),
        "sha256": header["sha256"],
        "checksum_ok": ckpt is not None,
    }
    _emit(json.dumps(summary, indent=2, sort_keys=True), args.out)
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval-offline": cmd_eval_offline,
    "replay": cmd_replay,
    "serve": cmd_serve,
    "tokenize": cmd_tokenize,
    "inspect-checkpoint": cmd_inspect,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, _load_config(args.config))
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        log.exception("internal error")
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
