"""Training objectives: MLE, sentence-level and word-level teaching.

The teacher is always consulted under a paused tape, so its parameters
never receive gradients; every loss is differentiable in the student
parameters only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import model as M
from . import tensor as T
from .tensor import Tensor
from .vocab import EOS, PAD

METHODS = ("mle", "sent-greedy", "sent-beam", "sent-kbest",
           "word-greedy", "word-beam", "word-sampling")

KBEST_ALPHA = 5e-3   # sharpness of the k-best renormalization
KBEST_K = 5


class ConfigurationError(Exception):
    pass


class NumericError(Exception):
    pass


@dataclass(frozen=True)
class TeachingMethod:
    name: str
    k: int = KBEST_K
    alpha: float = KBEST_ALPHA

    def __post_init__(self):
        if self.name not in METHODS:
            raise ConfigurationError(
                f"unknown method {self.name!r}; valid: {', '.join(METHODS)}")

    @property
    def is_sent(self):
        return self.name.startswith("sent")

    @property
    def is_word(self):
        return self.name.startswith("word")

    @property
    def teacher_mode(self):
        suffix = self.name.split("-", 1)[1] if "-" in self.name else ""
        return {"greedy": "greedy", "beam": "beam", "kbest": "beam",
                "sampling": "sample"}.get(suffix)


@dataclass
class DistillBatchLoss:
    loss: Tensor
    token_count: int
    method: str
    skipped: int = 0


def _pad_batch(rows, pad_id):
    lengths = np.asarray([len(r) for r in rows], dtype=np.int64)
    width = max(1, int(lengths.max()))
    out = np.full((len(rows), width), pad_id, dtype=np.int64)
    for i, r in enumerate(rows):
        out[i, :len(r)] = r
    return out, lengths


def _safe_pad(vocab_size):
    return PAD if vocab_size > PAD else 0


def batch_sequence_log_probs(params, xs, ys):
    """(B,) tensor of log P(y + EOS | x), teacher-forced and differentiable."""
    src, src_len = _pad_batch(xs, _safe_pad(params.dims.src_vocab))
    enc = M.batch_encode(params, src, src_len)
    tgt_rows = [list(y) + [EOS] for y in ys]
    tgt, tgt_len = _pad_batch(tgt_rows, _safe_pad(params.dims.tgt_vocab))
    mask = (np.arange(tgt.shape[1])[None, :] < tgt_len[:, None]).astype(np.float64)
    dists = M.forced_log_dists(params, enc, tgt)
    total = None
    for t, ld in enumerate(dists):
        term = T.mul(T.pick(ld, tgt[:, t]), Tensor(mask[:, t]))
        total = term if total is None else T.add(total, term)
    return total, int(tgt_len.sum())


def mle_loss(params, batch):
    """Mean over the batch of -log P(y|x)."""
    if not batch:
        raise ConfigurationError("mle_loss: empty batch")
    xs = [p[0] for p in batch]
    ys = [p[1] for p in batch]
    logps, tokens = batch_sequence_log_probs(params, xs, ys)
    loss = T.mul(T.tsum(logps), -1.0 / len(batch))
    return DistillBatchLoss(loss=loss, token_count=tokens, method="mle")


def kbest_renormalize(scored, alpha):
    """Weights proportional to exp(alpha * log p), normalized in log domain."""
    if not scored:
        raise ConfigurationError("kbest_renormalize: empty hypothesis list")
    if alpha <= 0:
        raise ConfigurationError("kbest_renormalize: alpha must be > 0")
    logs = np.asarray([alpha * lp for _, lp in scored], dtype=np.float64)
    logs -= logs.max()
    w = np.exp(logs)
    return w / w.sum()


def _teacher_decode(teacher, zs, mode, rng=None, beam_k=KBEST_K, cache=None, keys=None):
    max_len = max(M.default_max_len(z) for z in zs)
    if cache is not None and keys is not None:
        missing = [i for i, key in enumerate(keys) if key not in cache]
        if missing:
            decoded = M.batch_generate(teacher, [zs[i] for i in missing], mode,
                                       max_len, rng=rng, beam_k=beam_k)
            for i, y in zip(missing, decoded):
                cache[keys[i]] = y
        return [cache[key] for key in keys]
    return M.batch_generate(teacher, zs, mode, max_len, rng=rng, beam_k=beam_k)


def sent_teaching_loss(student, teacher, batch, method, rng=None, cache=None, keys=None):
    """Mode/k-best approximation of the sentence-level teaching objective."""
    if method.teacher_mode is None or not method.is_sent:
        raise ConfigurationError(f"sent_teaching_loss: bad method {method.name}")
    xs = [p[0] for p in batch]
    zs = [p[1] for p in batch]
    rows_x, rows_y, rows_w = [], [], []
    skipped = 0
    n_pairs = 0
    with T.paused():
        if method.name == "sent-kbest":
            for i, (x, z) in enumerate(zip(xs, zs)):
                if cache is not None and keys is not None:
                    if keys[i] not in cache:
                        cache[keys[i]] = M.beam_search(teacher, z, method.k)
                    beam = cache[keys[i]]
                else:
                    beam = M.beam_search(teacher, z, method.k)
                hyps = [(y, lp) for y, lp in beam if y]
                if not hyps:
                    skipped += 1
                    continue
                w = kbest_renormalize(hyps, method.alpha)
                for (y, _), wi in zip(hyps, w):
                    rows_x.append(x)
                    rows_y.append(y)
                    rows_w.append(wi)
                n_pairs += 1
        else:
            decoded = _teacher_decode(teacher, zs, method.teacher_mode, rng=rng,
                                      beam_k=method.k, cache=cache, keys=keys)
            for x, y in zip(xs, decoded):
                if not y:
                    skipped += 1
                    continue
                rows_x.append(x)
                rows_y.append(y)
                rows_w.append(1.0)
                n_pairs += 1
    if n_pairs == 0:
        raise ConfigurationError("sent_teaching_loss: every teacher decode was empty")
    logps, tokens = batch_sequence_log_probs(student, rows_x, rows_y)
    weighted = T.mul(logps, Tensor(np.asarray(rows_w)))
    loss = T.mul(T.tsum(weighted), -1.0 / n_pairs)
    return DistillBatchLoss(loss=loss, token_count=tokens, method=method.name,
                            skipped=skipped)


def word_teaching_loss(student, teacher, batch, method, rng=None, cache=None, keys=None):
    """Per-position cross-entropy against the full teacher distribution."""
    if method.teacher_mode is None or not method.is_word:
        raise ConfigurationError(f"word_teaching_loss: bad method {method.name}")
    if student.dims.tgt_vocab != teacher.dims.tgt_vocab:
        raise ConfigurationError(
            f"target vocabulary mismatch: student {student.dims.tgt_vocab} "
            f"vs teacher {teacher.dims.tgt_vocab}")
    xs = [p[0] for p in batch]
    zs = [p[1] for p in batch]
    with T.paused():
        decoded = _teacher_decode(teacher, zs, method.teacher_mode, rng=rng,
                                  beam_k=method.k, cache=cache, keys=keys)
    kept = [(x, z, y) for x, z, y in zip(xs, zs, decoded) if y]
    skipped = len(batch) - len(kept)
    if not kept:
        raise ConfigurationError("word_teaching_loss: every teacher decode was empty")
    xs = [k[0] for k in kept]
    zs = [k[1] for k in kept]
    ys = [k[2] for k in kept]

    tgt_rows = [list(y) + [EOS] for y in ys]
    tgt, tgt_len = _pad_batch(tgt_rows, _safe_pad(student.dims.tgt_vocab))
    mask = (np.arange(tgt.shape[1])[None, :] < tgt_len[:, None]).astype(np.float64)

    with T.paused():
        t_src, t_len = _pad_batch(zs, _safe_pad(teacher.dims.src_vocab))
        t_enc = M.batch_encode(teacher, t_src, t_len)
        t_dists = [np.exp(ld.data) for ld in M.forced_log_dists(teacher, t_enc, tgt)]

    s_src, s_len = _pad_batch(xs, _safe_pad(student.dims.src_vocab))
    s_enc = M.batch_encode(student, s_src, s_len)
    s_dists = M.forced_log_dists(student, s_enc, tgt)

    acc = None
    for t, s_ld in enumerate(s_dists):
        weights = t_dists[t] * mask[:, t][:, None]
        term = T.tsum(T.mul(s_ld, Tensor(weights)))
        acc = term if acc is None else T.add(acc, term)
    tokens = int(tgt_len.sum())
    loss = T.mul(acc, -1.0 / tokens)
    return DistillBatchLoss(loss=loss, token_count=tokens, method=method.name,
                            skipped=skipped)


# ---------------------------------------------------------------------------
# optimizer

class OptimizerState:
    """Adam with bias correction and global-norm gradient clipping."""

    def __init__(self, params, lr=1e-3, clip=1.0, beta1=0.9, beta2=0.999,
                 eps=1e-8, frozen_groups=()):
        self.lr = lr
        self.clip = clip
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.frozen = set()
        for group in frozen_groups:
            if group not in M.PARAM_GROUPS:
                raise ConfigurationError(f"unknown parameter group {group!r}")
            self.frozen.update(M.PARAM_GROUPS[group])
        self.m = {n: np.zeros_like(params[n].data) for n in params.names()}
        self.v = {n: np.zeros_like(params[n].data) for n in params.names()}

    def step(self, params, grads):
        """grads: mapping Tensor -> Tensor from backward()."""
        by_name = {}
        for name in params.names():
            if name in self.frozen:
                continue
            t = params[name]
            g = grads.get(t)
            arr = np.zeros_like(t.data) if g is None else g.data
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"non-finite gradient for parameter {name}")
            by_name[name] = arr

        norm = np.sqrt(sum(float(np.sum(g * g)) for g in by_name.values()))
        scale = self.clip / norm if self.clip and norm > self.clip else 1.0

        self.step_count += 1
        b1c = 1.0 - self.beta1 ** self.step_count
        b2c = 1.0 - self.beta2 ** self.step_count
        for name, g in by_name.items():
            g = g * scale
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            mhat = self.m[name] / b1c
            vhat = self.v[name] / b2c
            params[name].data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def save(self, path):
        arrays = {}
        for n in self.m:
            arrays[f"m:{n}"] = self.m[n]
            arrays[f"v:{n}"] = self.v[n]
        np.savez(path, step=np.asarray(self.step_count), **arrays)

    def load(self, path):
        data = np.load(path)
        self.step_count = int(data["step"])
        for key in data.files:
            if key.startswith("m:"):
                self.m[key[2:]] = data[key]
            elif key.startswith("v:"):
                self.v[key[2:]] = data[key]


def optimizer_step(opt, params, grads):
    opt.step(params, grads)
    return params


# ---------------------------------------------------------------------------
# training loop

@dataclass
class Schedule:
    epochs: int
    batch_size: int = 64
    eval_interval: int = 200
    shuffle_seed: int = 0
    sample_seed: int = 0
    lr: float = 1e-3
    clip: float = 1.0
    dev_bleu_limit: int = 200
    checkpoint_updates: tuple = ()


@dataclass
class TrainResult:
    params: object
    metrics: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    updates: int = 0


def _dev_bleu(params, dev_pairs, limit):
    from .evaluation import corpus_bleu
    subset = dev_pairs[:limit]
    xs = [p[0] for p in subset]
    refs = [p[1] for p in subset]
    max_len = max(M.default_max_len(x) for x in xs)
    hyps = M.batch_generate(params, xs, "greedy", max_len)
    return corpus_bleu(hyps, refs).bleu


def train(student, teacher, train_pairs, method, schedule, dev_pairs=None,
          on_metric=None, on_checkpoint=None, resume=None):
    """Mini-batch training; emits metrics and checkpoints via callbacks.

    train_pairs are (x, y) for MLE or (x, z) for teaching methods.
    `on_metric(update, name, value)` and `on_checkpoint(update, params,
    optimizer)` are optional hooks. `resume` is (optimizer, epoch,
    batch_index, update) to continue an interrupted run.
    """
    if isinstance(method, str):
        method = TeachingMethod(method)
    if method.name != "mle" and teacher is None:
        raise ConfigurationError(f"method {method.name} requires a teacher model")
    if teacher is not None:
        teacher.set_grad_enabled(False)
    if not train_pairs:
        raise ConfigurationError("train: empty corpus")

    result = TrainResult(params=student)
    if resume is not None:
        opt, epoch0, batch0, update = resume
    else:
        opt = OptimizerState(student, lr=schedule.lr, clip=schedule.clip)
        epoch0, batch0, update = 0, 0, 0
    cache = {} if method.teacher_mode in ("greedy", "beam") else None
    n = len(train_pairs)
    bs = schedule.batch_size

    def emit(name, value):
        result.metrics.append((update, name, value))
        if on_metric is not None:
            on_metric(update, name, value)

    def evaluate():
        if dev_pairs:
            from .evaluation import validation_loss
            emit("val_loss", validation_loss(student, dev_pairs))
            emit("dev_bleu", _dev_bleu(student, dev_pairs, schedule.dev_bleu_limit))

    last_loss = None
    for epoch in range(epoch0, schedule.epochs):
        perm = np.random.default_rng((schedule.shuffle_seed, epoch)).permutation(n)
        start = batch0 if epoch == epoch0 else 0
        for bi in range(start, (n + bs - 1) // bs):
            idx = perm[bi * bs:(bi + 1) * bs]
            batch = [train_pairs[i] for i in idx]
            rng = np.random.default_rng((schedule.sample_seed, epoch, bi))
            with T.ComputationTape() as tape:
                if method.name == "mle":
                    out = mle_loss(student, batch)
                elif method.is_sent:
                    out = sent_teaching_loss(student, teacher, batch, method,
                                             rng=rng, cache=cache, keys=list(idx))
                else:
                    out = word_teaching_loss(student, teacher, batch, method,
                                             rng=rng, cache=cache, keys=list(idx))
            grads = T.backward(out.loss, tape)
            opt.step(student, grads)
            update += 1
            last_loss = float(out.loss.data)
            if update % schedule.eval_interval == 0:
                emit("train_loss", last_loss)
                evaluate()
            if schedule.checkpoint_updates and update in schedule.checkpoint_updates:
                if on_checkpoint is not None:
                    on_checkpoint(update, student, opt, epoch, bi + 1)
                result.checkpoints.append(update)
    if last_loss is not None:
        emit("final_train_loss", last_loss)
        evaluate()
    if on_checkpoint is not None:
        on_checkpoint(update, student, opt, schedule.epochs, 0)
    result.updates = update
    return result
