"""Experiment runner: corpus generation, training, decoding, evaluation.

One JSON config per run; command-line flags override config fields.
Every run writes a manifest sufficient to reproduce it and appends
metrics as JSONL records:
    {"run": str, "update": int, "t": float, "metric": str,
     "value": float, "method": str}
Exit codes: 0 success, 2 usage error, 3 data/configuration error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import corpus as C
from . import evaluation as E
from . import model as M
from . import objectives as O
from . import transfer as X
from .pivot import PivotChain, EmptyPivotError, two_step_decode
from .vocab import Vocabulary

USAGE_ERROR = 2
CONFIG_ERROR = 3
NUMERIC_ERROR = 4

DIRECTIONS = ("x->z", "z->y", "x->y")


class CliError(Exception):
    def __init__(self, message, code=CONFIG_ERROR):
        super().__init__(message)
        self.code = code


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_config(path):
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise CliError(f"cannot read config {path}: {e}")


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


class MetricsWriter:
    def __init__(self, path, run, method):
        self.path = path
        self.run = run
        self.method = method
        self.t0 = time.monotonic()

    def write(self, update, metric, value):
        record = {"run": self.run, "update": int(update),
                  "t": time.monotonic() - self.t0, "metric": metric,
                  "value": float(value), "method": self.method}
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(json.dumps(record) + "\n")


# ---------------------------------------------------------------------------
# gen-corpus

def cmd_gen_corpus(args):
    cfg_dict = _load_config(args.config) if args.config else {}
    if args.seed is not None:
        cfg_dict["seed"] = args.seed
    allowed = set(C.GeneratorConfig.__dataclass_fields__)
    unknown = set(cfg_dict) - allowed
    if unknown:
        raise CliError(f"unknown generator config fields: {sorted(unknown)}")
    cfg = C.GeneratorConfig(**cfg_dict)
    try:
        split = C.generate_trilingual(cfg)
    except C.CorpusError as e:
        raise CliError(str(e))
    out = args.out
    os.makedirs(out, exist_ok=True)

    files = {}

    def dump(name, sentences):
        path = os.path.join(out, name)
        C.save_sentences(sentences, path)
        files[name] = _sha256(path)

    dump("train.x-z.x", [p[0] for p in split.train_xz])
    dump("train.x-z.z", [p[1] for p in split.train_xz])
    dump("train.z-y.z", [p[0] for p in split.train_zy])
    dump("train.z-y.y", [p[1] for p in split.train_zy])
    dump("dev.x", [p[0] for p in split.dev_xz])
    dump("dev.z", [p[1] for p in split.dev_xz])
    dump("dev.y", [p[1] for p in split.dev_xy])
    dump("test.x", [p[0] for p in split.test_xy])
    dump("test.y", [p[1] for p in split.test_xy])

    vocabs = {
        "vocab.x": C.build_vocab([p[0] for p in split.train_xz]),
        "vocab.z": C.build_vocab([p[1] for p in split.train_xz]
                                 + [p[0] for p in split.train_zy]),
        "vocab.y": C.build_vocab([p[1] for p in split.train_zy]),
    }
    for name, vocab in vocabs.items():
        path = os.path.join(out, name)
        vocab.save(path)
        files[name] = _sha256(path)

    manifest = {"generator": C.config_dict(cfg), "files": files}
    _write_json(os.path.join(out, "manifest.json"), manifest)
    print(out)
    return 0


# ---------------------------------------------------------------------------
# train

def _load_corpus_pairs(corpus_dir, direction):
    def sents(name):
        path = os.path.join(corpus_dir, name)
        if not os.path.exists(path):
            raise CliError(f"corpus file missing: {path}")
        return C.load_sentences(path)

    vx = Vocabulary.load(os.path.join(corpus_dir, "vocab.x"))
    vz = Vocabulary.load(os.path.join(corpus_dir, "vocab.z"))
    vy = Vocabulary.load(os.path.join(corpus_dir, "vocab.y"))
    if direction == "z->y":
        train = list(zip(sents("train.z-y.z"), sents("train.z-y.y")))
        dev = list(zip(sents("dev.z"), sents("dev.y")))
        sv, tv = vz, vy
    elif direction == "x->z":
        train = list(zip(sents("train.x-z.x"), sents("train.x-z.z")))
        dev = list(zip(sents("dev.x"), sents("dev.z")))
        sv, tv = vx, vz
    elif direction == "x->y":
        # zero-resource: training pairs are (x, z); dev references are y
        train = list(zip(sents("train.x-z.x"), sents("train.x-z.z")))
        dev = list(zip(sents("dev.x"), sents("dev.y")))
        sv, tv = vx, vy
    else:
        raise CliError(f"unknown direction {direction!r}; valid: {DIRECTIONS}")
    return train, dev, sv, tv


def _resolved_train_config(args):
    cfg = _load_config(args.config) if args.config else {}
    for key in ("method", "seed", "epochs", "out_dir", "corpus_dir",
                "direction", "teacher", "run", "init_from"):
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            if key == "epochs":
                cfg.setdefault("schedule", {})["epochs"] = val
            else:
                cfg[key] = val
    cfg.setdefault("run", "run")
    cfg.setdefault("seed", 0)
    cfg.setdefault("model", {})
    cfg.setdefault("schedule", {})
    return cfg


def _train_subsample(train, fraction):
    if fraction is None or fraction >= 1.0:
        return train
    keep = max(1, int(len(train) * fraction))
    return train[:keep]


def cmd_train(args):
    cfg = _resolved_train_config(args)
    method_name = cfg.get("method")
    if method_name not in O.METHODS:
        raise CliError(f"invalid method {method_name!r}; valid: "
                       f"{', '.join(O.METHODS)}", USAGE_ERROR)
    direction = cfg.get("direction")
    if direction is None:
        direction = "x->y" if method_name != "mle" else None
    if direction is None:
        raise CliError("mle training requires an explicit direction")
    if method_name == "mle" and direction == "x->y":
        raise CliError("zero-resource contract: no direct (x, y) parallel data "
                       "exists; mle cannot train the x->y direction")
    if method_name != "mle" and direction != "x->y":
        raise CliError(f"method {method_name} trains the x->y student, "
                       f"got direction {direction!r}")
    corpus_dir = cfg.get("corpus_dir")
    if not corpus_dir:
        raise CliError("config needs corpus_dir")
    train_tok, dev_tok, sv, tv = _load_corpus_pairs(corpus_dir, direction)
    train_tok = _train_subsample(train_tok, cfg.get("train_fraction"))
    train_pairs = C.encode_pairs(train_tok, sv, tv)
    dev_pairs = C.encode_pairs(dev_tok, sv, tv)

    model_cfg = cfg.get("model", {})
    dims = M.DimConfig(emb=model_cfg.get("emb", 32),
                       hidden=model_cfg.get("hidden", 32),
                       src_vocab=len(sv), tgt_vocab=len(tv))
    seed = int(cfg.get("seed", 0))
    student = M.ModelParams(dims, rng=np.random.default_rng((seed, 42)))

    teacher = None
    if method_name != "mle":
        teacher_path = cfg.get("teacher")
        if not teacher_path:
            raise CliError(f"method {method_name} requires a teacher checkpoint")
        teacher = M.ModelParams.load(teacher_path)
        if teacher.dims.tgt_vocab != dims.tgt_vocab:
            raise CliError("teacher target vocabulary does not match the corpus")
        teacher.set_grad_enabled(False)

    frozen = ()
    if cfg.get("init_from"):
        donor = M.ModelParams.load(cfg["init_from"])
        plan = cfg.get("freeze_plan") or X.DEFAULT_FREEZE_PLAN
        try:
            X.init_from_teacher(student, donor, plan)
        except X.TransferError as e:
            raise CliError(str(e))
        frozen = X.frozen_groups(plan)

    sched_cfg = cfg.get("schedule", {})
    schedule = O.Schedule(
        epochs=int(sched_cfg.get("epochs", 10)),
        batch_size=int(sched_cfg.get("batch_size", 64)),
        eval_interval=int(sched_cfg.get("eval_interval", 200)),
        shuffle_seed=seed,
        sample_seed=seed + 1,
        lr=float(sched_cfg.get("lr", 1e-3)),
        clip=float(sched_cfg.get("clip", 1.0)),
        dev_bleu_limit=int(sched_cfg.get("dev_bleu_limit", 200)),
        checkpoint_updates=tuple(sched_cfg.get("checkpoint_updates", ())),
    )

    out_dir = cfg.get("out_dir") or os.path.join("runs", cfg["run"])
    os.makedirs(out_dir, exist_ok=True)
    sv.save(os.path.join(out_dir, "src.vocab"))
    tv.save(os.path.join(out_dir, "tgt.vocab"))

    manifest = dict(cfg)
    manifest["direction"] = direction
    manifest["out_dir"] = out_dir
    manifest["schedule"] = {
        "epochs": schedule.epochs, "batch_size": schedule.batch_size,
        "eval_interval": schedule.eval_interval, "lr": schedule.lr,
        "clip": schedule.clip, "dev_bleu_limit": schedule.dev_bleu_limit,
        "checkpoint_updates": list(schedule.checkpoint_updates),
    }
    manifest["seeds"] = {"init": [seed, 42], "shuffle": seed, "sample": seed + 1,
                        "corpus": None}
    corpus_manifest = os.path.join(corpus_dir, "manifest.json")
    if os.path.exists(corpus_manifest):
        with open(corpus_manifest, encoding="utf-8") as f:
            cm = json.load(f)
        manifest["seeds"]["corpus"] = cm.get("generator", {}).get("seed")
        manifest["corpus_hashes"] = cm.get("files", {})
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)

    metrics = MetricsWriter(os.path.join(out_dir, "metrics.jsonl"),
                            cfg["run"], method_name)

    state_path = os.path.join(out_dir, "train_state.json")
    resume = None
    if args.resume:
        if not os.path.exists(state_path):
            raise CliError(f"--resume: no training state at {state_path}")
        with open(state_path, encoding="utf-8") as f:
            st = json.load(f)
        student = M.ModelParams.load(st["checkpoint"])
        opt = O.OptimizerState(student, lr=schedule.lr, clip=schedule.clip,
                               frozen_groups=frozen)
        opt.load(st["optimizer"])
        resume = (opt, st["epoch"], st["batch"], st["update"])
    else:
        opt0 = O.OptimizerState(student, lr=schedule.lr, clip=schedule.clip,
                                frozen_groups=frozen)
        resume = (opt0, 0, 0, 0)

    def on_checkpoint(update, params, optimizer, epoch, batch):
        ckpt = os.path.join(out_dir, f"ckpt_{update:06d}.pdst")
        params.save(ckpt)
        opt_path = os.path.join(out_dir, "optimizer.npz")
        optimizer.save(opt_path)
        _write_json(state_path, {"update": update, "epoch": epoch,
                                 "batch": batch, "checkpoint": ckpt,
                                 "optimizer": opt_path})

    try:
        result = O.train(student, teacher, train_pairs, method_name, schedule,
                         dev_pairs=dev_pairs, on_metric=metrics.write,
                         on_checkpoint=on_checkpoint, resume=resume)
    except O.ConfigurationError as e:
        raise CliError(str(e))
    except O.NumericError as e:
        raise CliError(str(e), NUMERIC_ERROR)

    final = os.path.join(out_dir, "final.pdst")
    result.params.save(final)
    print(final)
    return 0


# ---------------------------------------------------------------------------
# decode

def _load_model_with_vocabs(path):
    params = M.ModelParams.load(path)
    d = os.path.dirname(os.path.abspath(path))
    sv = Vocabulary.load(os.path.join(d, "src.vocab"))
    tv = Vocabulary.load(os.path.join(d, "tgt.vocab"))
    if len(sv) != params.dims.src_vocab or len(tv) != params.dims.tgt_vocab:
        raise CliError(f"vocabulary files next to {path} do not match the "
                       f"checkpoint dimensions")
    return params, sv, tv


def _decode_rows(params, rows, k):
    if k == 1:
        max_len = max(M.default_max_len(r) for r in rows)
        return M.batch_generate(params, rows, "greedy", max_len)
    return [M.beam_search(params, row, k)[0][0] for row in rows]


def cmd_decode(args):
    params, sv, tv = _load_model_with_vocabs(args.model)
    sentences = C.load_sentences(args.input)
    rows = [sv.encode(s) for s in sentences]
    timings = {"mode": args.mode, "k": args.k, "sentences": len(rows)}
    if args.mode == "direct":
        t0 = time.monotonic()
        outs = _decode_rows(params, rows, args.k)
        timings["seconds_total"] = time.monotonic() - t0
        C.save_sentences([tv.decode(o) for o in outs], args.output)
    else:
        if not args.second_model:
            raise CliError("--mode via-pivot requires --second-model", USAGE_ERROR)
        second, pv, tv2 = _load_model_with_vocabs(args.second_model)
        chain = PivotChain(params, second, beam_k=args.k)
        if len(pv) != len(tv):
            raise CliError("pivot vocabularies of the two models disagree")
        z_outs, y_outs, failures = [], [], 0
        t0 = time.monotonic()
        for row in rows:
            try:
                z_hat, y_hat = two_step_decode(chain, row)
            except EmptyPivotError as e:
                print(f"warning: {e}", file=sys.stderr)
                z_hat, y_hat = [], []
                failures += 1
            z_outs.append(z_hat)
            y_outs.append(y_hat)
        timings["seconds_total"] = time.monotonic() - t0
        timings["failures"] = failures
        C.save_sentences([tv2.decode(o) for o in y_outs], args.output)
        C.save_sentences([tv.decode(o) for o in z_outs], args.output + ".pivot")
    timings["seconds_per_sentence"] = (
        timings["seconds_total"] / len(rows) if rows else 0.0)
    _write_json(args.output + ".timing.json", timings)
    print(args.output)
    return 0


# ---------------------------------------------------------------------------
# verify-kl

def cmd_verify_kl(args):
    if len(args.student) < 2:
        raise CliError("verify-kl needs at least 2 student checkpoints", USAGE_ERROR)
    teacher, tsv, ttv = _load_model_with_vocabs(args.teacher)
    teacher.set_grad_enabled(False)
    xs = [s for s in C.load_sentences(args.dev_src)]
    zs = [s for s in C.load_sentences(args.dev_pivot)]
    if len(xs) != len(zs):
        raise CliError("dev source/pivot files differ in line count")
    students = [_load_model_with_vocabs(p) for p in args.student]
    sv = students[0][1]
    pairs_tok = list(zip(xs, zs))
    if args.limit:
        pairs_tok = pairs_tok[:args.limit]
    pairs = [(sv.encode(x), tsv.encode(z)) for x, z in pairs_tok]

    rows = [("sent", "greedy"), ("sent", "beam"),
            ("word", "greedy"), ("word", "beam"), ("word", "sampling")]
    grid = {}
    for level, approx in rows:
        values = []
        for si, (params, _, _) in enumerate(students):
            rng = np.random.default_rng((args.seed, si))
            if level == "sent":
                est = E.measure_j_sent(params, teacher, pairs, approx=approx)
            else:
                est = E.measure_j_word(params, teacher, pairs, approx=approx,
                                       rng=rng)
            values.append(est.mean)
        grid[f"{level}-{approx}"] = values

    report = {"checkpoints": list(args.student), "estimates": grid}
    if args.json_out:
        _write_json(args.json_out, report)
    header = "estimator".ljust(16) + "".join(
        f"ckpt{i}".rjust(12) for i in range(len(args.student)))
    print(header)
    for key, values in grid.items():
        print(key.ljust(16) + "".join(f"{v:12.3f}" for v in values))
    return 0


# ---------------------------------------------------------------------------
# evaluate / peakedness

def cmd_evaluate(args):
    hyps = C.load_sentences(args.hypotheses)
    refs = C.load_sentences(args.references)
    try:
        report = E.corpus_bleu(hyps, refs, lowercase=args.lowercase)
    except E.EvaluationError as e:
        raise CliError(str(e))
    if args.json:
        print(json.dumps({"bleu": report.bleu,
                          "precisions": list(report.precisions),
                          "brevity_penalty": report.brevity_penalty,
                          "hyp_length": report.hyp_length,
                          "ref_length": report.ref_length}))
    else:
        print(report.summary())
    return 0


def cmd_peakedness(args):
    params, sv, _ = _load_model_with_vocabs(args.model)
    rows = [sv.encode(s) for s in C.load_sentences(args.input)]
    value = E.peakedness(params, rows)
    if args.json:
        print(json.dumps({"peakedness": value, "sentences": len(rows)}))
    else:
        print(f"peakedness = {value:.6f} over {len(rows)} sentences")
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="pivotdistill",
        description="Zero-resource NMT laboratory: teacher-student training "
                    "with a pivot baseline on synthetic trilingual corpora.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a synthetic trilingual corpus")
    p.add_argument("--config", help="generator config JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--method", choices=O.METHODS)
    p.add_argument("--direction", choices=DIRECTIONS)
    p.add_argument("--corpus-dir", dest="corpus_dir")
    p.add_argument("--teacher")
    p.add_argument("--init-from", dest="init_from")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--run")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decode", help="translate a file of sentences")
    p.add_argument("--model", required=True)
    p.add_argument("--second-model", dest="second_model",
                   help="pivot-to-target model for via-pivot decoding")
    p.add_argument("--mode", choices=("direct", "via-pivot"), default="direct")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("verify-kl", help="KL-divergence grid over checkpoints")
    p.add_argument("--teacher", required=True)
    p.add_argument("--student", nargs="+", required=True)
    p.add_argument("--dev-src", dest="dev_src", required=True)
    p.add_argument("--dev-pivot", dest="dev_pivot", required=True)
    p.add_argument("--limit", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json-out", dest="json_out")
    p.set_defaults(func=cmd_verify_kl)

    p = sub.add_parser("evaluate", help="corpus BLEU of a hypothesis file")
    p.add_argument("hypotheses")
    p.add_argument("references")
    p.add_argument("--lowercase", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("peakedness", help="average argmax probability mass")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_peakedness)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except (C.CorpusError, M.ModelError) as e:
        print(f"error: {e}", file=sys.stderr)
        return CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
