"""Single-binary command line: synth, train-vqvae, pretrain-text, train-lm,
generate, evaluate, baseline, ablate, analyze.

Every command reads a JSON config (with dotted --set overrides), derives all
randomness from one recorded seed, writes its outputs plus a manifest, and
refuses to overwrite existing outputs without --force. Report paths emit
JSON plus delimited text and a rendered figure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import __version__, checkpoint as ckpt
from .baselines import (
    NnIndex,
    baseline_mean,
    baseline_nn_text,
    baseline_random_train,
    baseline_random_vq,
    baseline_uncond,
)
from .data import (
    DatasetError,
    DyadSegment,
    MotionSequence,
    SegmentationConfig,
    load_dataset,
    save_dataset,
)
from .experiments import (
    ABLATIONS,
    build_streams,
    generate_predictions,
    history_sweep,
    text_streams,
    train_variant,
)
from .figures import (
    save_affect_histograms,
    save_history_sweep,
    save_loss_trace,
    save_metrics_bars,
    save_nod_stats,
)
from .interleave import InterleaveConfig, Vocabulary, build_vocabulary
from .lm import LmConfig, ListenerLm, load_lm, pretrain_text_lm, save_lm
from .metrics import AffectModel, MetricsReport, evaluate
from .seeding import rng_for
from .synth import (
    SynthConfig,
    SynthCorpus,
    affect_phrase_histogram,
    generate_corpus,
    punctuation_nod_stats,
)
from .vq import MotionVqvae, VqConfig, train_vqvae


class ConfigError(ValueError):
    pass


class OutputExistsError(RuntimeError):
    pass


@dataclass(frozen=True)
class MetricsOptions:
    window: int = 32
    resamples: int = 10_000
    fd_resamples: int = 200
    diversity_pairs: int = 30


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    synth: SynthConfig = SynthConfig()
    vq: VqConfig = VqConfig()
    lm: LmConfig = LmConfig()
    interleave: InterleaveConfig = InterleaveConfig()
    segmentation: SegmentationConfig = SegmentationConfig()
    metrics: MetricsOptions = MetricsOptions()
    nn_index_min_frames: int = 240


_SECTIONS = {
    "synth": SynthConfig,
    "vq": VqConfig,
    "lm": LmConfig,
    "interleave": InterleaveConfig,
    "segmentation": SegmentationConfig,
    "metrics": MetricsOptions,
}


def _from_dict(cls, obj: dict, prefix: str):
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in obj.items():
        if key not in names:
            raise ConfigError(f"invalid config key {prefix}{key!r}")
        kwargs[key] = tuple(value) if isinstance(value, list) else value
    return cls(**kwargs)


def _set_dotted(obj: dict, dotted: str, raw: str) -> None:
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = dotted.split(".")
    cursor = obj
    for key in keys[:-1]:
        cursor = cursor.setdefault(key, {})
        if not isinstance(cursor, dict):
            raise ConfigError(f"override {dotted!r} descends through a non-section key")
    cursor[keys[-1]] = value


def load_config(path, overrides, seed=None) -> RunConfig:
    obj: dict = {}
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        _set_dotted(obj, key, raw)
    known = set(_SECTIONS) | {"seed", "nn_index_min_frames"}
    for key in obj:
        if key not in known:
            raise ConfigError(f"invalid config key {key!r}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in obj:
            if not isinstance(obj[name], dict):
                raise ConfigError(f"config section {name!r} must be an object")
            kwargs[name] = _from_dict(cls, obj[name], f"{name}.")
    if "seed" in obj:
        kwargs["seed"] = int(obj["seed"])
    if "nn_index_min_frames" in obj:
        kwargs["nn_index_min_frames"] = int(obj["nn_index_min_frames"])
    if seed is not None:
        kwargs["seed"] = int(seed)
    return RunConfig(**kwargs)


def config_to_dict(cfg: RunConfig) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(cfg), default=list))


# ---------------------------------------------------------------------------
# Output handling and manifests
# ---------------------------------------------------------------------------


def _prepare_out(out: Path, force: bool) -> Path:
    if out.exists():
        if out.is_file():
            raise OutputExistsError(f"{out} exists; pass --force to overwrite")
        if any(out.iterdir()) and not force:
            raise OutputExistsError(f"{out} is not empty; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    return out


class _Run:
    def __init__(self, args, command: str):
        self.command = command
        self.args = args
        self.cfg = load_config(args.config, getattr(args, "set", None), args.seed)
        self.out = _prepare_out(Path(args.out), args.force)
        self.started = time.time()
        self.outputs: list[str] = []

    def path(self, name: str) -> Path:
        p = self.out / name
        self.outputs.append(name)
        return p

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "argv": sys.argv[1:],
            "config": config_to_dict(self.cfg),
            "seed": self.cfg.seed,
            "outputs": self.outputs,
            "wall_time_s": round(time.time() - self.started, 3),
            "lltn_threads": torch.get_num_threads(),
            "versions": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "torch": torch.__version__,
                "lltn": __version__,
            },
        }
        with open(self.out / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)


def _write_trace_csv(trace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if isinstance(trace, dict):
            keys = list(trace)
            fh.write("step," + ",".join(keys) + "\n")
            for i in range(len(trace[keys[0]])):
                fh.write(f"{i}," + ",".join(f"{trace[k][i]:.6f}" for k in keys) + "\n")
        else:
            fh.write("step,loss\n")
            for i, v in enumerate(trace):
                fh.write(f"{i},{v:.6f}\n")


def _load_vq(path, cfg: RunConfig, input_dim: int) -> MotionVqvae:
    tensors = ckpt.import_tensors(path)
    model = MotionVqvae(cfg.vq, input_dim)
    expected = {k: tuple(v.shape) for k, v in model.state_dict().items()}
    ckpt.validate_tensors(tensors, expected)
    with torch.no_grad():
        for name, value in tensors.items():
            model.state_dict()[name].copy_(torch.from_numpy(value.copy()))
    return model


def _save_vq(model: MotionVqvae, path) -> None:
    ckpt.export_tensors(path, {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()})


def _predictions_dataset(segments, predictions) -> list[DyadSegment]:
    out = []
    for seg, pred in zip(segments, predictions):
        out.append(
            DyadSegment(
                id=seg.id,
                listener=pred,
                speaker=None,
                words=seg.words,
                history_words=seg.history_words,
            )
        )
    return out


def _align_predictions(pred_segments, dataset) -> list[MotionSequence]:
    by_id = {seg.id: seg for seg in pred_segments}
    missing = [seg.id for seg in dataset if seg.id not in by_id]
    if missing:
        raise DatasetError(f"predictions missing segment ids: {missing[:5]}")
    return [by_id[seg.id].listener for seg in dataset]


def _input_dim(dataset) -> int:
    return dataset[0].listener.dim


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    run = _Run(args, "synth")
    synth_cfg = dataclasses.replace(run.cfg.synth, seed=run.cfg.seed)
    corpus = generate_corpus(synth_cfg)
    save_dataset(run.path("train.jsonl"), list(corpus.train))
    save_dataset(run.path("val.jsonl"), list(corpus.val))
    save_dataset(run.path("test.jsonl"), list(corpus.test))
    corpus.affect_model.save(run.path("affect_model.json"))
    with open(run.path("lexicon.json"), "w", encoding="utf-8") as fh:
        json.dump(corpus.lexicon, fh, indent=0)
    run.finish()
    print(f"wrote {len(corpus.train)}/{len(corpus.val)}/{len(corpus.test)} segments to {run.out}")
    return 0


def cmd_train_vqvae(args) -> int:
    run = _Run(args, "train-vqvae")
    train = load_dataset(args.data)
    model, trace = train_vqvae(train, run.cfg.vq, run.cfg.seed)
    _save_vq(model, run.path("vq.lltn"))
    _write_trace_csv(trace, run.path("vq_loss_trace.csv"))
    save_loss_trace(trace["total"], run.path("vq_loss.png"), title="VQ training loss")
    run.finish()
    print(f"trained VQ for {len(trace['total'])} steps; final loss {trace['total'][-1]:.4f}")
    return 0


def _vocab_for(args, run: _Run) -> Vocabulary:
    if getattr(args, "vocab", None):
        return Vocabulary.load(args.vocab)
    sources = (args.vocab_from or args.data).split(",")
    datasets = [load_dataset(p) for p in sources]
    return build_vocabulary(datasets, run.cfg.vq.codebook_size)


def cmd_pretrain_text(args) -> int:
    run = _Run(args, "pretrain-text")
    train = load_dataset(args.data)
    vocab = _vocab_for(args, run)
    cfg = run.cfg.lm
    streams = text_streams(train, vocab, run.cfg.segmentation.history_seconds)
    model, trace = pretrain_text_lm(streams, vocab, cfg, run.cfg.seed)
    save_lm(model, run.path("text_lm.lltn"))
    vocab.save(run.path("vocab.json"))
    _write_trace_csv(trace, run.path("pretrain_loss_trace.csv"))
    save_loss_trace(trace, run.path("pretrain_loss.png"), title="text pretraining loss")
    run.finish()
    print(f"pretrained text LM for {len(trace)} steps; final loss {trace[-1]:.4f}")
    return 0


def _corpus_shim(train, test, affect_model, lexicon=None) -> SynthCorpus:
    return SynthCorpus(
        train=tuple(train), val=(), test=tuple(test), affect_model=affect_model, lexicon=lexicon or {}
    )


def cmd_train_lm(args) -> int:
    run = _Run(args, "train-lm")
    train = load_dataset(args.data)
    vocab = _vocab_for(args, run)
    vq_model = _load_vq(args.vq, run.cfg, _input_dim(train))
    pretrained = None
    if args.init:
        pretrained = load_lm(args.init, run.cfg.lm, vocab.text_size, vocab.v_vq, head="text")
    variant = args.ablation or "full"
    corpus = _corpus_shim(train, [], AffectModel(np.zeros(train[0].listener.d_m)))
    model, trace = train_variant(
        corpus,
        vq_model,
        vocab,
        run.cfg.lm,
        run.cfg.interleave,
        run.cfg.segmentation.history_seconds,
        variant,
        run.cfg.seed,
        pretrained=pretrained,
    )
    save_lm(model, run.path("lm.lltn"))
    vocab.save(run.path("vocab.json"))
    _write_trace_csv(trace, run.path("lm_loss_trace.csv"))
    save_loss_trace(trace, run.path("lm_loss.png"), title=f"LM training loss ({variant})")
    run.finish()
    print(f"trained {variant} LM for {len(trace)} steps; final loss {trace[-1]:.4f}")
    return 0


def _dump_streams(run: _Run, segments, streams) -> None:
    with open(run.path("streams.jsonl"), "w", encoding="utf-8") as fh:
        for seg, seq in zip(segments, streams):
            fh.write(
                json.dumps(
                    {"id": seg.id, "ids": seq.ids.tolist(), "kinds": seq.kinds.tolist()}
                )
                + "\n"
            )


def cmd_generate(args) -> int:
    run = _Run(args, "generate")
    dataset = load_dataset(args.data)
    vocab = Vocabulary.load(args.vocab)
    vq_model = _load_vq(args.vq, run.cfg, _input_dim(dataset))
    lm_model = load_lm(args.lm, run.cfg.lm, vocab.text_size, vocab.v_vq, head="motion")
    preds = generate_predictions(
        lm_model,
        vq_model,
        vocab,
        run.cfg.interleave,
        dataset,
        run.cfg.segmentation.history_seconds,
        transform=args.transform,
        seed=run.cfg.seed,
    )
    save_dataset(run.path("predictions.jsonl"), _predictions_dataset(dataset, preds))
    run.finish()
    print(f"generated {len(preds)} sequences")
    return 0


def cmd_evaluate(args) -> int:
    run = _Run(args, "evaluate")
    dataset = load_dataset(args.data)
    pred_segments = load_dataset(args.predictions)
    predictions = _align_predictions(pred_segments, dataset)
    affect_model = AffectModel.load(args.affect)
    vq_model = _load_vq(args.vq, run.cfg, _input_dim(dataset)) if args.vq else None
    m = run.cfg.metrics
    report = evaluate(
        predictions,
        dataset,
        vq_model,
        affect_model,
        seed=run.cfg.seed,
        window=m.window,
        resamples=m.resamples,
        fd_resamples=m.fd_resamples,
        diversity_pairs=m.diversity_pairs,
    )
    with open(run.path("metrics.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2)
    table = report.table(row_label=args.label)
    with open(run.path("metrics.txt"), "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    save_metrics_bars(report, run.path("metrics.png"), title=args.label)
    run.finish()
    print(table)
    return 0


def cmd_baseline(args) -> int:
    run = _Run(args, "baseline")
    train = load_dataset(args.data)
    dataset = load_dataset(args.eval)
    name = args.name
    preds: list[MotionSequence] = []
    if name == "random-train":
        rng = rng_for(run.cfg.seed, "baseline/random-train")
        preds = [baseline_random_train(train, rng, seg.num_frames) for seg in dataset]
    elif name == "random-vq":
        vq_model = _load_vq(args.vq, run.cfg, _input_dim(train))
        rng = rng_for(run.cfg.seed, "baseline/random-vq")
        preds = [
            baseline_random_vq(vq_model, rng, seg.num_frames, fps=seg.listener.fps)
            for seg in dataset
        ]
    elif name == "mean":
        gen = baseline_mean(train)
        preds = [gen.generate(seg.num_frames) for seg in dataset]
    elif name == "nn-text":
        index = NnIndex.build(
            train,
            min_frames=run.cfg.nn_index_min_frames,
            history_seconds=run.cfg.segmentation.history_seconds,
        )
        index.save(run.path("nn_index.json"))
        preds = [
            baseline_nn_text(index, seg, run.cfg.segmentation.history_seconds) for seg in dataset
        ]
    elif name == "uncond":
        vq_model = _load_vq(args.vq, run.cfg, _input_dim(train))
        vocab = _vocab_for(args, run)
        lm_model, trace = baseline_uncond(
            train, vq_model, vocab, run.cfg.lm, run.cfg.interleave, run.cfg.seed
        )
        save_lm(lm_model, run.path("lm.lltn"))
        _write_trace_csv(trace, run.path("lm_loss_trace.csv"))
        preds = generate_predictions(
            lm_model,
            vq_model,
            vocab,
            run.cfg.interleave,
            dataset,
            run.cfg.segmentation.history_seconds,
            transform="uncond",
            seed=run.cfg.seed,
        )
    else:
        raise ConfigError(f"unknown baseline {name!r}")
    save_dataset(run.path("predictions.jsonl"), _predictions_dataset(dataset, preds))
    run.finish()
    print(f"baseline {name}: {len(preds)} predictions")
    return 0


def cmd_ablate(args) -> int:
    run = _Run(args, "ablate")
    if args.name not in ABLATIONS:
        raise ConfigError(f"unknown ablation {args.name!r}; choose from {ABLATIONS}")
    train = load_dataset(args.data)
    dataset = load_dataset(args.eval)
    vocab = _vocab_for(args, run)
    vq_model = _load_vq(args.vq, run.cfg, _input_dim(train))
    pretrained = None
    if args.init:
        pretrained = load_lm(args.init, run.cfg.lm, vocab.text_size, vocab.v_vq, head="text")
    corpus = _corpus_shim(train, dataset, AffectModel(np.zeros(train[0].listener.d_m)))
    model, trace = train_variant(
        corpus,
        vq_model,
        vocab,
        run.cfg.lm,
        run.cfg.interleave,
        run.cfg.segmentation.history_seconds,
        args.name,
        run.cfg.seed,
        pretrained=pretrained,
    )
    transform = args.name if args.name != "nopt" else "full"
    streams = build_streams(
        train, vq_model, vocab, run.cfg.interleave, run.cfg.segmentation.history_seconds, transform
    )
    _dump_streams(run, train, streams)
    preds = generate_predictions(
        model,
        vq_model,
        vocab,
        run.cfg.interleave,
        dataset,
        run.cfg.segmentation.history_seconds,
        transform=transform,
        seed=run.cfg.seed,
    )
    save_lm(model, run.path("lm.lltn"))
    vocab.save(run.path("vocab.json"))
    _write_trace_csv(trace, run.path("lm_loss_trace.csv"))
    save_dataset(run.path("predictions.jsonl"), _predictions_dataset(dataset, preds))
    run.finish()
    print(f"ablation {args.name}: trained {len(trace)} steps, {len(preds)} predictions")
    return 0


def _load_corpus_dir(path, fallback_lexicon=None) -> SynthCorpus:
    root = Path(path)
    lexicon = fallback_lexicon or {}
    lex_path = root / "lexicon.json"
    if lex_path.exists():
        with open(lex_path, "r", encoding="utf-8") as fh:
            lexicon = json.load(fh)
    return SynthCorpus(
        train=tuple(load_dataset(root / "train.jsonl")),
        val=tuple(load_dataset(root / "val.jsonl")) if (root / "val.jsonl").exists() else (),
        test=tuple(load_dataset(root / "test.jsonl")),
        affect_model=AffectModel.load(root / "affect_model.json"),
        lexicon={k: int(v) for k, v in lexicon.items()},
    )


def cmd_analyze(args) -> int:
    run = _Run(args, "analyze")
    if args.which == "punctuation":
        dataset = load_dataset(args.data)
        vq_model = _load_vq(args.vq, run.cfg, _input_dim(dataset))
        stats = punctuation_nod_stats(dataset, vq_model)
        with open(run.path("nod_stats.csv"), "w", encoding="utf-8") as fh:
            fh.write(stats.to_csv())
        save_nod_stats(stats, run.path("nod_stats.png"))
        print(stats.to_csv())
    elif args.which == "affect-hist":
        dataset = load_dataset(args.data)
        affect_model = AffectModel.load(args.affect)
        with open(args.lexicon, "r", encoding="utf-8") as fh:
            lexicon = {k: int(v) for k, v in json.load(fh).items()}
        listeners = None
        if args.predictions:
            listeners = _align_predictions(load_dataset(args.predictions), dataset)
        hist = affect_phrase_histogram(dataset, affect_model, lexicon, listeners=listeners)
        with open(run.path("affect_hist.csv"), "w", encoding="utf-8") as fh:
            fh.write(hist.to_csv())
        save_affect_histograms(hist, run.path("affect_hist.png"))
        print(f"histogram over {int(hist.positive_counts.sum())} positive "
              f"and {int(hist.negative_counts.sum())} negative phrases")
    elif args.which == "history-sweep":
        corpus = _load_corpus_dir(args.corpus)
        h_values = [float(h) for h in args.h_values.split(",")]
        reports = history_sweep(
            corpus,
            h_values,
            run.cfg.vq,
            run.cfg.lm,
            run.cfg.interleave,
            run.cfg.seed,
            eval_window=run.cfg.metrics.window,
        )
        with open(run.path("history_sweep.csv"), "w", encoding="utf-8") as fh:
            fh.write("history_seconds,l2_affect_x100,se\n")
            for h in sorted(reports):
                mv = reports[h].l2_affect
                fh.write(f"{h},{mv.value:.4f},{mv.se:.4f}\n")
        with open(run.path("history_sweep.json"), "w", encoding="utf-8") as fh:
            json.dump({str(h): r.to_json() for h, r in reports.items()}, fh, indent=2)
        save_history_sweep(reports, run.path("history_sweep.png"))
        for h in sorted(reports):
            print(f"H={h:4.1f}s  L2-Affect(10^2) = {reports[h].l2_affect}")
    else:
        raise ConfigError(f"unknown analysis {args.which!r}")
    run.finish()
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _common(sub):
    sub.add_argument("--config", default=None, help="JSON config file")
    sub.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--force", action="store_true", help="overwrite existing outputs")
    sub.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted config override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lltn", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    s = subs.add_parser("synth", help="generate a synthetic dyadic corpus")
    _common(s)
    s.set_defaults(func=cmd_synth)

    s = subs.add_parser("train-vqvae", help="train the motion VQ-VAE")
    _common(s)
    s.add_argument("--data", required=True)
    s.set_defaults(func=cmd_train_vqvae)

    s = subs.add_parser("pretrain-text", help="pretrain the LM on text only")
    _common(s)
    s.add_argument("--data", required=True)
    s.add_argument("--vocab", default=None)
    s.add_argument("--vocab-from", default=None, help="comma-separated datasets")
    s.set_defaults(func=cmd_pretrain_text)

    s = subs.add_parser("train-lm", help="train the listener LM")
    _common(s)
    s.add_argument("--data", required=True)
    s.add_argument("--vq", required=True)
    s.add_argument("--init", default=None, help="text-pretrained checkpoint")
    s.add_argument("--vocab", default=None)
    s.add_argument("--vocab-from", default=None)
    s.add_argument("--ablation", default=None, choices=list(ABLATIONS))
    s.set_defaults(func=cmd_train_lm)

    s = subs.add_parser("generate", help="greedy generation over a dataset")
    _common(s)
    s.add_argument("--data", required=True)
    s.add_argument("--vq", required=True)
    s.add_argument("--lm", required=True)
    s.add_argument("--vocab", required=True)
    s.add_argument("--transform", default="full",
                   choices=["full", "uncond", "unaligned", "scrambled", "fixtok", "fixtok-punc"])
    s.set_defaults(func=cmd_generate)

    s = subs.add_parser("evaluate", help="metrics report for predictions")
    _common(s)
    s.add_argument("--predictions", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--affect", required=True)
    s.add_argument("--vq", default=None, help="VQ checkpoint for the Shannon index")
    s.add_argument("--label", default="model")
    s.set_defaults(func=cmd_evaluate)

    s = subs.add_parser("baseline", help="run a comparison system")
    _common(s)
    s.add_argument("--name", required=True,
                   choices=["random-train", "random-vq", "mean", "nn-text", "uncond"])
    s.add_argument("--data", required=True, help="training dataset")
    s.add_argument("--eval", required=True, help="evaluation dataset")
    s.add_argument("--vq", default=None)
    s.add_argument("--vocab", default=None)
    s.add_argument("--vocab-from", default=None)
    s.set_defaults(func=cmd_baseline)

    s = subs.add_parser("ablate", help="train and run an ablation variant")
    _common(s)
    s.add_argument("--name", required=True, choices=list(ABLATIONS))
    s.add_argument("--data", required=True)
    s.add_argument("--eval", required=True)
    s.add_argument("--vq", required=True)
    s.add_argument("--init", default=None)
    s.add_argument("--vocab", default=None)
    s.add_argument("--vocab-from", default=None)
    s.set_defaults(func=cmd_ablate)

    s = subs.add_parser("analyze", help="corpus analyses and sweeps")
    _common(s)
    s.add_argument("--which", required=True, choices=["punctuation", "affect-hist", "history-sweep"])
    s.add_argument("--data", default=None)
    s.add_argument("--vq", default=None)
    s.add_argument("--affect", default=None)
    s.add_argument("--lexicon", default=None)
    s.add_argument("--predictions", default=None)
    s.add_argument("--corpus", default=None, help="synth output directory (history-sweep)")
    s.add_argument("--h-values", default="0,1,3", help="comma-separated history lengths (s)")
    s.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    threads = os.environ.get("LLTN_THREADS")
    if threads:
        torch.set_num_threads(max(1, int(threads)))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetError, ckpt.CheckpointError, OutputExistsError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
