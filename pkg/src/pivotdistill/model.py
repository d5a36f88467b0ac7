"""Attention-based GRU encoder-decoder translation model.

One-layer bidirectional GRU encoder, one-layer GRU decoder with additive
attention, tanh readout and a softmax output projection. All math runs
on the autodiff tensors from `tensor`; decoding paths suspend tape
recording so they can be called inside a loss without polluting it.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .vocab import BOS, EOS, PAD


class ModelError(Exception):
    pass


CHECKPOINT_MAGIC = b"PDST"
CHECKPOINT_VERSION = 1

NEG_INF_SCORE = -1e9


@dataclass(frozen=True)
class DimConfig:
    emb: int = 32
    hidden: int = 32
    src_vocab: int = 0
    tgt_vocab: int = 0


def _gru_names(prefix):
    return [f"{prefix}_{w}{g}" for g in ("z", "r", "n") for w in ("W", "U", "b")]


PARAM_GROUPS = {
    "source_embed": ["src_embed"],
    "encoder": _gru_names("enc_f") + _gru_names("enc_b"),
    "attention": ["att_W", "att_U", "att_b", "att_v"],
    "decoder": _gru_names("dec") + ["dec_init_W", "dec_init_b"],
    "target_embed": ["tgt_embed"],
    "output": ["ro_W_h", "ro_W_c", "ro_W_e", "ro_b", "out_W", "out_b"],
}


class ModelParams:
    """All learnable weights of one encoder-decoder model."""

    def __init__(self, dims: DimConfig, tensors=None, rng=None, init_scale=0.08):
        self.dims = dims
        if tensors is not None:
            self.tensors = tensors
        else:
            if rng is None:
                rng = np.random.default_rng(0)
            self.tensors = {}
            for name, shape in self._shapes(dims).items():
                data = rng.uniform(-init_scale, init_scale, size=shape)
                self.tensors[name] = Tensor(data, grad_enabled=True, name=name)
        self._check_shapes()

    @staticmethod
    def _shapes(d):
        E, H = d.emb, d.hidden
        shapes = {"src_embed": (d.src_vocab, E), "tgt_embed": (d.tgt_vocab, E)}
        for prefix, xin in (("enc_f", E), ("enc_b", E), ("dec", E + 2 * H)):
            for g in ("z", "r", "n"):
                shapes[f"{prefix}_W{g}"] = (xin, H)
                shapes[f"{prefix}_U{g}"] = (H, H)
                shapes[f"{prefix}_b{g}"] = (1, H)
        shapes.update({
            "att_W": (H, H), "att_U": (2 * H, H), "att_b": (1, H), "att_v": (H, 1),
            "dec_init_W": (H, H), "dec_init_b": (1, H),
            "ro_W_h": (H, H), "ro_W_c": (2 * H, H), "ro_W_e": (E, H), "ro_b": (1, H),
            "out_W": (H, d.tgt_vocab), "out_b": (1, d.tgt_vocab),
        })
        return shapes

    def _check_shapes(self):
        expect = self._shapes(self.dims)
        if set(expect) != set(self.tensors):
            raise ModelError("parameter name set inconsistent with dimension config")
        for name, shape in expect.items():
            if self.tensors[name].shape != shape:
                raise ModelError(f"parameter {name}: shape {self.tensors[name].shape}, "
                                 f"expected {shape}")

    def __getitem__(self, name):
        return self.tensors[name]

    def names(self):
        return sorted(self.tensors)

    def group_of(self, name):
        for group, members in PARAM_GROUPS.items():
            if name in members:
                return group
        raise ModelError(f"parameter {name} belongs to no group")

    def copy(self):
        return ModelParams(self.dims, tensors={n: t.copy() for n, t in self.tensors.items()})

    def set_grad_enabled(self, flag):
        for t in self.tensors.values():
            t.grad_enabled = flag

    def save(self, path):
        with open(path, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(struct.pack("<I", CHECKPOINT_VERSION))
            d = self.dims
            f.write(struct.pack("<4I", d.emb, d.hidden, d.src_vocab, d.tgt_vocab))
            f.write(struct.pack("<I", len(self.tensors)))
            for name in self.names():
                t = self.tensors[name]
                raw = name.encode("utf-8")
                f.write(struct.pack("<I", len(raw)))
                f.write(raw)
                f.write(struct.pack("<I", len(t.shape)))
                for s in t.shape:
                    f.write(struct.pack("<I", s))
                f.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            if f.read(4) != CHECKPOINT_MAGIC:
                raise ModelError(f"{path}: not a checkpoint file")
            (version,) = struct.unpack("<I", f.read(4))
            if version != CHECKPOINT_VERSION:
                raise ModelError(f"{path}: unsupported checkpoint version {version}")
            emb, hidden, vs, vt = struct.unpack("<4I", f.read(16))
            dims = DimConfig(emb=emb, hidden=hidden, src_vocab=vs, tgt_vocab=vt)
            (n,) = struct.unpack("<I", f.read(4))
            tensors = {}
            for _ in range(n):
                (ln,) = struct.unpack("<I", f.read(4))
                name = f.read(ln).decode("utf-8")
                (rank,) = struct.unpack("<I", f.read(4))
                shape = struct.unpack(f"<{rank}I", f.read(4 * rank))
                count = int(np.prod(shape)) if rank else 1
                data = np.frombuffer(f.read(8 * count), dtype="<f8").reshape(shape)
                tensors[name] = Tensor(data.copy(), grad_enabled=True, name=name)
        return cls(dims, tensors=tensors)


# ---------------------------------------------------------------------------
# forward pieces

def _gru(params, prefix, x, h):
    B = x.shape[0]

    def lin(gate, xin):
        out = T.add(T.matmul(xin, params[f"{prefix}_W{gate}"]),
                    T.matmul(h, params[f"{prefix}_U{gate}"]))
        return T.add(out, T.expand(params[f"{prefix}_b{gate}"], 0, B))

    z = T.sigmoid(lin("z", x))
    r = T.sigmoid(lin("r", x))
    n_in = T.add(T.matmul(x, params[f"{prefix}_Wn"]),
                 T.matmul(T.mul(r, h), params[f"{prefix}_Un"]))
    n = T.tanh(T.add(n_in, T.expand(params[f"{prefix}_bn"], 0, B)))
    return T.add(T.mul(T.sub(1.0, z), n), T.mul(z, h))


def _masked_update(h_new, h_old, step_mask):
    # step_mask: constant (B, H) 0/1 array; frozen rows keep the old state
    m = Tensor(step_mask)
    return T.add(T.mul(m, h_new), T.mul(T.sub(1.0, m), h_old))


class EncodedSource:
    """Cached encoder annotations plus attention precomputation for one batch."""

    def __init__(self, annotations, proj, mask, init_hidden):
        self.annotations = annotations      # (B, S, 2H)
        self.proj = proj                    # (B, S, H) = annotations @ att_U + att_b
        self.mask = mask                    # constant ndarray (B, S), 1 = real token
        self.init_hidden = init_hidden      # (B, H)
        self.batch = annotations.shape[0]
        self.src_len = annotations.shape[1]
        self.score_bias = Tensor((1.0 - mask) * NEG_INF_SCORE)

    def row(self, i):
        """Single-sentence view (keeps full-width tensors, batch of 1)."""
        sl = int(self.mask[i].sum())
        ann = Tensor(self.annotations.data[i:i + 1, :sl])
        proj = Tensor(self.proj.data[i:i + 1, :sl])
        return EncodedSource(ann, proj, self.mask[i:i + 1, :sl],
                             Tensor(self.init_hidden.data[i:i + 1]))


def batch_encode(params, src_ids, lengths):
    """Encode a padded batch. src_ids: (B, S) int array; lengths: (B,) ints."""
    src_ids = np.asarray(src_ids, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    B, S = src_ids.shape
    if S == 0 or np.any(lengths < 1):
        raise ModelError("encode: empty source sentence")
    H = params.dims.hidden
    mask = (np.arange(S)[None, :] < lengths[:, None]).astype(np.float64)
    embs = [T.gather_rows(params["src_embed"], src_ids[:, t]) for t in range(S)]

    h = Tensor(np.zeros((B, H)))
    fwd = []
    for t in range(S):
        h = _masked_update(_gru(params, "enc_f", embs[t], h), h,
                           np.repeat(mask[:, t:t + 1], H, axis=1))
        fwd.append(h)
    h = Tensor(np.zeros((B, H)))
    bwd = [None] * S
    for t in reversed(range(S)):
        h = _masked_update(_gru(params, "enc_b", embs[t], h), h,
                           np.repeat(mask[:, t:t + 1], H, axis=1))
        bwd[t] = h
    ann_steps = [T.concat([fwd[t], bwd[t]], axis=1) for t in range(S)]
    annotations = T.stack(ann_steps, axis=1)
    proj_steps = [T.add(T.matmul(a, params["att_U"]), T.expand(params["att_b"], 0, B))
                  for a in ann_steps]
    proj = T.stack(proj_steps, axis=1)
    init = T.tanh(T.add(T.matmul(bwd[0], params["dec_init_W"]),
                        T.expand(params["dec_init_b"], 0, B)))
    return EncodedSource(annotations, proj, mask, init)


def _attend(params, enc, h):
    B, S = enc.batch, enc.src_len
    H2 = enc.annotations.shape[2]
    A = enc.proj.shape[2]
    q = T.add(T.matmul(h, params["att_W"]), T.expand(params["att_b"], 0, B))
    q3 = T.expand(T.reshape(q, (B, 1, A)), 1, S)
    e = T.tanh(T.add(q3, enc.proj))
    scores = T.reshape(T.matmul(T.reshape(e, (B * S, A)), params["att_v"]), (B, S))
    scores = T.add(scores, enc.score_bias)
    alpha = T.softmax(scores)
    a3 = T.expand(T.reshape(alpha, (B, S, 1)), 2, H2)
    context = T.tsum(T.mul(a3, enc.annotations), axis=1)
    return context, alpha


def _step_logits(params, enc, h, prev_ids):
    B = enc.batch
    e_prev = T.gather_rows(params["tgt_embed"], prev_ids)
    context, alpha = _attend(params, enc, h)
    x = T.concat([e_prev, context], axis=1)
    h_new = _gru(params, "dec", x, h)
    read = T.add(T.add(T.matmul(h_new, params["ro_W_h"]),
                       T.matmul(context, params["ro_W_c"])),
                 T.add(T.matmul(e_prev, params["ro_W_e"]),
                       T.expand(params["ro_b"], 0, B)))
    read = T.tanh(read)
    logits = T.add(T.matmul(read, params["out_W"]), T.expand(params["out_b"], 0, B))
    return logits, h_new, alpha


def forced_log_dists(params, enc, tgt_out):
    """Teacher-forced pass: log-distributions at every target position.

    tgt_out: (B, T) gold output ids; inputs are BOS-shifted. Returns a
    list of T tensors of shape (B, V) with log-probabilities.
    """
    tgt_out = np.asarray(tgt_out, dtype=np.int64)
    B, Tlen = tgt_out.shape
    h = enc.init_hidden
    prev = np.full(B, BOS, dtype=np.int64)
    dists = []
    for t in range(Tlen):
        logits, h, _ = _step_logits(params, enc, h, prev)
        dists.append(T.log_softmax(logits))
        prev = tgt_out[:, t]
    return dists


# ---------------------------------------------------------------------------
# public single-sentence API

class DecoderState:
    def __init__(self, enc, hidden, prev_token):
        self.enc = enc
        self.hidden = hidden
        self.prev_token = prev_token


def encode(params, x):
    """Annotations for one sentence: EncodedSource with batch 1."""
    if len(x) == 0:
        raise ModelError("encode: empty source sentence")
    with T.paused():
        return batch_encode(params, np.asarray([x]), np.asarray([len(x)]))


def initial_state(params, enc):
    return DecoderState(enc, enc.init_hidden, BOS)


def decoder_step(params, state):
    """One decode step: (probability vector over V_y, next state)."""
    with T.paused():
        logits, h, _ = _step_logits(params, state.enc, state.hidden,
                                    np.asarray([state.prev_token]))
        probs = T.softmax(logits).data[0]
    new_state = DecoderState(state.enc, h, None)
    return probs, new_state


def _advance(state, token):
    return DecoderState(state.enc, state.hidden, int(token))


def sequence_log_prob(params, x, y):
    """log P(y + EOS | x) under teacher forcing; differentiable."""
    enc = batch_encode(params, np.asarray([x]), np.asarray([len(x)]))
    return forced_log_prob(params, enc, y)


def forced_log_prob(params, enc, y):
    tgt = np.asarray([list(y) + [EOS]], dtype=np.int64)
    dists = forced_log_dists(params, enc, tgt)
    total = None
    for t, ld in enumerate(dists):
        term = T.pick(ld, tgt[:, t])
        total = term if total is None else T.add(total, term)
    return T.tsum(total)


def default_max_len(x):
    return 2 * len(x) + 5


def greedy_decode(params, x, max_len=None):
    if max_len is None:
        max_len = default_max_len(x)
    if max_len < 1:
        raise ModelError("greedy_decode: max_len must be >= 1")
    with T.paused():
        enc = batch_encode(params, np.asarray([x]), np.asarray([len(x)]))
        h = enc.init_hidden
        prev = BOS
        out = []
        for _ in range(max_len):
            logits, h, _ = _step_logits(params, enc, h, np.asarray([prev]))
            tok = int(np.argmax(logits.data[0]))
            if tok == EOS:
                break
            out.append(tok)
            prev = tok
    return out


def beam_search(params, x, k, max_len=None):
    """Standard beam search; returns [(tokens, log_prob)] sorted by score desc.

    Scores are exact sequence log-probabilities (EOS term included for
    finished hypotheses; none for max_len-truncated ones). Ties break
    toward the lower token id.
    """
    if k < 1:
        raise ModelError("beam_search: k must be >= 1")
    if max_len is None:
        max_len = default_max_len(x)
    with T.paused():
        enc = batch_encode(params, np.asarray([x]), np.asarray([len(x)]))
        live = [([], 0.0, enc.init_hidden, BOS)]   # (tokens, score, hidden, prev)
        finished = []
        for _ in range(max_len):
            cands = []   # (score, token, hyp_index, hidden)
            for hi, (toks, score, h, prev) in enumerate(live):
                logits, h_new, _ = _step_logits(params, enc, h, np.asarray([prev]))
                logp = T.log_softmax(logits).data[0]
                for v in range(len(logp)):
                    cands.append((score + logp[v], v, hi, h_new))
            scores = np.array([c[0] for c in cands])
            toks_v = np.array([c[1] for c in cands])
            his = np.array([c[2] for c in cands])
            order = np.lexsort((his, toks_v, -scores))
            new_live = []
            for idx in order[:k]:
                score, v, hi, h_new = cands[idx]
                toks = live[hi][0]
                if v == EOS:
                    finished.append((toks, score))
                else:
                    new_live.append((toks + [v], score, h_new, v))
            live = new_live
            if len(finished) >= k or not live:
                break
        finished.extend((toks, score) for toks, score, _, _ in live)
    finished.sort(key=lambda p: (-p[1], p[0]))
    return finished[:k]


def sample_decode(params, x, max_len=None, rng=None):
    """Ancestral sampling from the decoder; reproducible given the rng."""
    if rng is None:
        raise ModelError("sample_decode: a seeded rng is required")
    if max_len is None:
        max_len = default_max_len(x)
    with T.paused():
        enc = batch_encode(params, np.asarray([x]), np.asarray([len(x)]))
        h = enc.init_hidden
        prev = BOS
        out = []
        total = 0.0
        for _ in range(max_len):
            logits, h, _ = _step_logits(params, enc, h, np.asarray([prev]))
            logp = T.log_softmax(logits).data[0]
            probs = np.exp(logp)
            probs = probs / probs.sum()
            tok = int(rng.choice(len(probs), p=probs))
            total += logp[tok]
            if tok == EOS:
                return out, total
            out.append(tok)
            prev = tok
    return out, total


# ---------------------------------------------------------------------------
# batched generation (teacher-side, used during training)

def batch_generate(params, src_rows, mode, max_len, rng=None, beam_k=5):
    """Decode every source row: mode in {greedy, sample, beam}.

    Beam mode falls back to per-sentence search (top-1 kept); greedy and
    sampling run vectorized across the batch.
    """
    if mode == "beam":
        return [beam_search(params, row, beam_k)[0][0] if row else []
                for row in src_rows]
    lengths = np.asarray([len(r) for r in src_rows], dtype=np.int64)
    B = len(src_rows)
    S = int(lengths.max())
    padded = np.full((B, S), PAD if params.dims.src_vocab > PAD else 0, dtype=np.int64)
    for i, row in enumerate(src_rows):
        padded[i, :len(row)] = row
    with T.paused():
        enc = batch_encode(params, padded, lengths)
        h = enc.init_hidden
        prev = np.full(B, BOS, dtype=np.int64)
        alive = np.ones(B, dtype=bool)
        outs = [[] for _ in range(B)]
        cap = int(max_len)
        for _ in range(cap):
            logits, h, _ = _step_logits(params, enc, h, prev)
            logp = logits.data - logits.data.max(axis=1, keepdims=True)
            p = np.exp(logp)
            p /= p.sum(axis=1, keepdims=True)
            if mode == "greedy":
                toks = np.argmax(p, axis=1)
            elif mode == "sample":
                u = rng.random(B)
                toks = (np.cumsum(p, axis=1) < u[:, None]).sum(axis=1)
            else:
                raise ModelError(f"batch_generate: unknown mode {mode!r}")
            for i in range(B):
                if alive[i]:
                    if toks[i] == EOS or len(outs[i]) >= 2 * lengths[i] + 5:
                        alive[i] = False
                    else:
                        outs[i].append(int(toks[i]))
            prev = np.where(alive, toks, EOS).astype(np.int64)
            if not alive.any():
                break
    return outs
