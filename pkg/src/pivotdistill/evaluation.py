"""Scoring and measurement: BLEU, validation loss, KL estimates, peakedness."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import model as M
from . import tensor as T
from .objectives import batch_sequence_log_probs
from .vocab import EOS


class EvaluationError(Exception):
    pass


@dataclass
class BleuReport:
    bleu: float
    precisions: tuple
    brevity_penalty: float
    hyp_length: int
    ref_length: int

    @property
    def ratio(self):
        return self.hyp_length / self.ref_length if self.ref_length else 0.0

    def summary(self):
        p = "/".join(f"{100 * x:.1f}" for x in self.precisions)
        return (f"BLEU = {100 * self.bleu:.2f}, {p} "
                f"(BP={self.brevity_penalty:.3f}, ratio={self.ratio:.3f}, "
                f"hyp_len={self.hyp_length}, ref_len={self.ref_length})")


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _prep(sent, lowercase):
    if lowercase:
        return [t.lower() if isinstance(t, str) else t for t in sent]
    return list(sent)


def corpus_bleu(hypotheses, references, max_order=4, lowercase=False):
    """multi-bleu-style corpus BLEU: clipped modified precisions, geometric
    mean over orders 1..max_order, brevity penalty, no smoothing."""
    if len(hypotheses) != len(references):
        raise EvaluationError(
            f"corpus_bleu: {len(hypotheses)} hypotheses vs {len(references)} references")
    matches = [0] * max_order
    possible = [0] * max_order
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp = _prep(hyp, lowercase)
        ref = _prep(ref, lowercase)
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_order + 1):
            h = _ngrams(hyp, n)
            r = _ngrams(ref, n)
            matches[n - 1] += sum(min(c, r[g]) for g, c in h.items())
            possible[n - 1] += max(0, len(hyp) - n + 1)
    precisions = tuple(m / p if p > 0 else 0.0 for m, p in zip(matches, possible))
    bp = 1.0 if hyp_len >= ref_len else (
        math.exp(1.0 - ref_len / hyp_len) if hyp_len > 0 else 0.0)
    if any(p == 0.0 for p in precisions):
        bleu = 0.0
    else:
        bleu = bp * math.exp(sum(math.log(p) for p in precisions) / max_order)
    return BleuReport(bleu=bleu, precisions=precisions, brevity_penalty=bp,
                      hyp_length=hyp_len, ref_length=ref_len)


def sentence_bleu(hypothesis, reference, max_order=4, lowercase=False):
    """Per-sentence BLEU with add-one smoothing on zero-match orders."""
    if len(reference) == 0:
        raise EvaluationError("sentence_bleu: empty reference")
    hyp = _prep(hypothesis, lowercase)
    ref = _prep(reference, lowercase)
    logs = []
    for n in range(1, max_order + 1):
        h = _ngrams(hyp, n)
        r = _ngrams(ref, n)
        m = sum(min(c, r[g]) for g, c in h.items())
        p = max(0, len(hyp) - n + 1)
        if m == 0:
            m, p = m + 1, p + 1
        logs.append(math.log(m / p))
    bp = 1.0 if len(hyp) >= len(ref) else (
        math.exp(1.0 - len(ref) / len(hyp)) if hyp else 0.0)
    return bp * math.exp(sum(logs) / max_order)


# ---------------------------------------------------------------------------
# model measurements

def validation_loss(params, dev_pairs, batch_size=64):
    """Mean negative log-likelihood of (x, y) pairs."""
    if not dev_pairs:
        raise EvaluationError("validation_loss: empty dev set")
    total = 0.0
    with T.paused():
        for i in range(0, len(dev_pairs), batch_size):
            chunk = dev_pairs[i:i + batch_size]
            logps, _ = batch_sequence_log_probs(
                params, [p[0] for p in chunk], [p[1] for p in chunk])
            total += -float(np.sum(logps.data))
    return total / len(dev_pairs)


@dataclass
class KlEstimate:
    method: str
    mean: float
    sentences: int


def _teacher_outputs(teacher, zs, approx, rng=None, beam_k=5):
    if approx not in ("greedy", "beam", "sampling"):
        raise EvaluationError(f"unknown approximation {approx!r}")
    mode = {"greedy": "greedy", "beam": "beam", "sampling": "sample"}[approx]
    max_len = max(M.default_max_len(z) for z in zs)
    return M.batch_generate(teacher, zs, mode, max_len, rng=rng, beam_k=beam_k)


def measure_j_sent(student, teacher, pairs, approx="greedy", rng=None, batch_size=64):
    """Mode surrogate of the sentence-level KL: mean of
    log P(y_hat|z; teacher) - log P(y_hat|x; student)."""
    xs = [p[0] for p in pairs]
    zs = [p[1] for p in pairs]
    with T.paused():
        decoded = _teacher_outputs(teacher, zs, approx, rng=rng)
        kept = [(x, z, y) for x, z, y in zip(xs, zs, decoded) if y]
        diffs = []
        for i in range(0, len(kept), batch_size):
            chunk = kept[i:i + batch_size]
            t_lp, _ = batch_sequence_log_probs(
                teacher, [c[1] for c in chunk], [c[2] for c in chunk])
            s_lp, _ = batch_sequence_log_probs(
                student, [c[0] for c in chunk], [c[2] for c in chunk])
            diffs.extend((t_lp.data - s_lp.data).tolist())
    return KlEstimate(method=f"sent-{approx}", mean=float(np.mean(diffs)),
                      sentences=len(kept))


def measure_j_word(student, teacher, pairs, approx="greedy", rng=None, batch_size=64):
    """Full-vocabulary word-level KL summed over positions, averaged per
    sentence. Always >= 0."""
    xs = [p[0] for p in pairs]
    zs = [p[1] for p in pairs]
    with T.paused():
        decoded = _teacher_outputs(teacher, zs, approx, rng=rng)
        kept = [(x, z, y) for x, z, y in zip(xs, zs, decoded) if y]
        totals = []
        for i in range(0, len(kept), batch_size):
            chunk = kept[i:i + batch_size]
            tgt_rows = [list(c[2]) + [EOS] for c in chunk]
            from .objectives import _pad_batch, _safe_pad
            tgt, tgt_len = _pad_batch(tgt_rows, _safe_pad(teacher.dims.tgt_vocab))
            mask = (np.arange(tgt.shape[1])[None, :] < tgt_len[:, None]).astype(float)

            t_src, t_len = _pad_batch([c[1] for c in chunk],
                                      _safe_pad(teacher.dims.src_vocab))
            t_enc = M.batch_encode(teacher, t_src, t_len)
            t_lds = M.forced_log_dists(teacher, t_enc, tgt)

            s_src, s_len = _pad_batch([c[0] for c in chunk],
                                      _safe_pad(student.dims.src_vocab))
            s_enc = M.batch_encode(student, s_src, s_len)
            s_lds = M.forced_log_dists(student, s_enc, tgt)

            kl = np.zeros(len(chunk))
            for t in range(tgt.shape[1]):
                pt = np.exp(t_lds[t].data)
                kl += mask[:, t] * np.sum(pt * (t_lds[t].data - s_lds[t].data), axis=1)
            totals.extend(kl.tolist())
    return KlEstimate(method=f"word-{approx}", mean=float(np.mean(totals)),
                      sentences=len(kept))


def peakedness(params, inputs, batch_size=64):
    """Average argmax probability mass per step along the model's own
    greedy decode path."""
    masses = []
    with T.paused():
        for i in range(0, len(inputs), batch_size):
            rows = inputs[i:i + batch_size]
            lengths = np.asarray([len(r) for r in rows], dtype=np.int64)
            from .objectives import _pad_batch, _safe_pad
            src, src_len = _pad_batch(rows, _safe_pad(params.dims.src_vocab))
            enc = M.batch_encode(params, src, src_len)
            h = enc.init_hidden
            prev = np.zeros(len(rows), dtype=np.int64)
            alive = np.ones(len(rows), dtype=bool)
            steps = np.zeros(len(rows), dtype=np.int64)
            cap = int(2 * lengths.max() + 5)
            for _ in range(cap):
                logits, h, _ = M._step_logits(params, enc, h, prev)
                logp = logits.data - logits.data.max(axis=1, keepdims=True)
                p = np.exp(logp)
                p /= p.sum(axis=1, keepdims=True)
                toks = np.argmax(p, axis=1)
                for j in range(len(rows)):
                    if alive[j]:
                        masses.append(float(p[j, toks[j]]))
                        steps[j] += 1
                        if toks[j] == EOS or steps[j] >= 2 * lengths[j] + 5:
                            alive[j] = False
                prev = np.where(alive, toks, EOS).astype(np.int64)
                if not alive.any():
                    break
    return float(np.mean(masses)) if masses else 0.0


def enumerate_sequences(vocab_size, max_len):
    """All token sequences of length <= max_len (EOS-terminated scoring
    applies to the shorter ones). Token ids exclude EOS inside the body."""
    seqs = [[]]
    frontier = [[]]
    for _ in range(max_len):
        nxt = []
        for s in frontier:
            for v in range(vocab_size):
                if v == EOS:
                    continue
                nxt.append(s + [v])
        seqs.extend(nxt)
        frontier = nxt
    return seqs


def exact_sentence_kl(teacher, student, z, x, max_len):
    """Exact sentence-level KL by full enumeration (tiny vocabularies only)."""
    vt = teacher.dims.tgt_vocab
    with T.paused():
        total = 0.0
        mass = 0.0
        for y in enumerate_sequences(vt, max_len):
            t_lp = float(M.sequence_log_prob(teacher, z, y).data)
            s_lp = float(M.sequence_log_prob(student, x, y).data)
            p = math.exp(t_lp)
            total += p * (t_lp - s_lp)
            mass += p
    # renormalize over the truncated space so the estimate is a proper KL
    return total / mass if mass > 0 else 0.0
