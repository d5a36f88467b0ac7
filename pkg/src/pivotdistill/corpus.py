"""Synthetic trilingual corpora and plain-text parallel corpus IO.

Three surface languages X, Z, Y are deterministic renderings of shared
latent integer sentences: a per-language token bijection, local
reordering on X only, and sparse per-language function-word insertion.
Splits are carved from disjoint latent sentences, so the pivot sides of
the two training corpora never overlap and no (x, y) training pair
exists anywhere.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, asdict

import numpy as np

from .vocab import Vocabulary


class CorpusError(Exception):
    pass


class CapacityError(CorpusError):
    pass


LANGS = ("x", "z", "y")
FUNCTION_WORD_PERIOD = 8


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    n_train_xz: int = 5000
    n_train_zy: int = 5000
    n_dev: int = 500
    n_test: int = 500
    latent_vocab: int = 40
    surface_vocab: int = 50
    len_min: int = 3
    len_max: int = 9
    reorder_window: int = 2

    def validate(self):
        if self.len_min < 1 or self.len_max < self.len_min:
            raise CorpusError("sentence length range invalid")
        if self.latent_vocab < 5 or self.surface_vocab < 5:
            raise CorpusError("vocabulary sizes must be >= 5")
        if self.latent_vocab + 1 > self.surface_vocab:
            raise CorpusError("surface vocabulary too small for the latent alphabet")


@dataclass
class ParallelCorpus:
    pairs: list                 # [(left ids, right ids)]
    left_vocab: Vocabulary
    right_vocab: Vocabulary

    def __post_init__(self):
        if not self.pairs:
            raise CorpusError("parallel corpus is empty")
        for i, (l, r) in enumerate(self.pairs):
            if not l or not r:
                raise CorpusError(f"empty sentence in pair {i}")


@dataclass
class TrilingualSplit:
    train_xz: list              # [(x tokens, z tokens)]
    train_zy: list              # [(z tokens, y tokens)]
    dev_xz: list
    dev_xy: list
    test_xy: list
    config: GeneratorConfig


class Renderer:
    """Deterministic latent -> surface rendering for one generator config."""

    def __init__(self, cfg: GeneratorConfig):
        cfg.validate()
        self.cfg = cfg
        self.perms = {}
        self.inv_perms = {}
        for li, lang in enumerate(LANGS):
            rng = np.random.default_rng((cfg.seed, 1000 + li))
            perm = rng.permutation(cfg.surface_vocab)[:cfg.latent_vocab]
            self.perms[lang] = perm
            self.inv_perms[lang] = {int(s): i for i, s in enumerate(perm)}

    def word(self, lang, surface_id):
        return f"{lang}{surface_id:02d}"

    def function_word(self, lang):
        return f"{lang}fn"

    def _reorder(self, latent, lang):
        latent = list(latent)
        if lang == "x":
            w = self.cfg.reorder_window
            for i in range(0, len(latent) - w + 1, w):
                latent[i:i + w] = reversed(latent[i:i + w])
        return latent

    def render(self, latent, lang):
        ordered = self._reorder(latent, lang)
        perm = self.perms[lang]
        out = []
        for i, lat in enumerate(ordered):
            out.append(self.word(lang, int(perm[lat])))
            if (lat + i) % FUNCTION_WORD_PERIOD == 0:
                out.append(self.function_word(lang))
        return out

    def invert(self, tokens, lang):
        """Surface tokens back to the latent sentence (oracle direction)."""
        fn = self.function_word(lang)
        core = [t for t in tokens if t != fn]
        latent = []
        for t in core:
            if not t.startswith(lang):
                raise CorpusError(f"token {t!r} is not in language {lang!r}")
            latent.append(self.inv_perms[lang][int(t[len(lang):])])
        # reordering is an involution for window 2; reapply to undo
        return self._reorder(latent, lang)

    def translate(self, tokens, src_lang, dst_lang):
        return self.render(self.invert(tokens, src_lang), dst_lang)


def generate_trilingual(cfg: GeneratorConfig) -> TrilingualSplit:
    cfg.validate()
    renderer = Renderer(cfg)
    needed = cfg.n_train_xz + cfg.n_train_zy + cfg.n_dev + cfg.n_test
    capacity = sum(cfg.latent_vocab ** l
                   for l in range(cfg.len_min, cfg.len_max + 1))
    if needed > capacity // 2:
        raise CapacityError(
            f"config requests {needed} distinct sentences but the latent space "
            f"holds only {capacity}")
    rng = np.random.default_rng((cfg.seed, 0))
    seen = set()
    latents = []
    while len(latents) < needed:
        length = int(rng.integers(cfg.len_min, cfg.len_max + 1))
        sent = tuple(int(t) for t in rng.integers(0, cfg.latent_vocab, size=length))
        if sent in seen:
            continue
        seen.add(sent)
        latents.append(sent)

    a = cfg.n_train_xz
    b = a + cfg.n_train_zy
    c = b + cfg.n_dev
    xz_lat, zy_lat = latents[:a], latents[a:b]
    dev_lat, test_lat = latents[b:c], latents[c:]

    def pair(lat, l1, l2):
        return (renderer.render(lat, l1), renderer.render(lat, l2))

    return TrilingualSplit(
        train_xz=[pair(s, "x", "z") for s in xz_lat],
        train_zy=[pair(s, "z", "y") for s in zy_lat],
        dev_xz=[pair(s, "x", "z") for s in dev_lat],
        dev_xy=[pair(s, "x", "y") for s in dev_lat],
        test_xy=[pair(s, "x", "y") for s in test_lat],
        config=cfg,
    )


def pivot_sides_disjoint(split: TrilingualSplit) -> bool:
    xz_pivots = {tuple(z) for _, z in split.train_xz}
    zy_pivots = {tuple(z) for z, _ in split.train_zy}
    return not (xz_pivots & zy_pivots)


# ---------------------------------------------------------------------------
# plain-text IO and vocabulary construction

def save_sentences(sentences, path):
    with open(path, "w", encoding="utf-8") as f:
        for s in sentences:
            f.write(" ".join(s) + "\n")


def load_sentences(path):
    with open(path, encoding="utf-8") as f:
        return [line.split() for line in f if line.strip()]


def build_vocab(sentences, max_size=10000) -> Vocabulary:
    """Most frequent tokens, frequency-then-lexicographic tie-break."""
    if not sentences:
        raise CorpusError("build_vocab: empty corpus")
    counts = Counter()
    for s in sentences:
        counts.update(s)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = max(1, max_size - 4)
    return Vocabulary([t for t, _ in ranked[:keep]])


def load_parallel(left_path, right_path, left_vocab=None, right_vocab=None,
                  max_vocab=10000) -> ParallelCorpus:
    left = load_sentences(left_path)
    right = load_sentences(right_path)
    if len(left) != len(right):
        raise CorpusError(
            f"line-count mismatch: {left_path} has {len(left)} lines, "
            f"{right_path} has {len(right)}")
    if left_vocab is None:
        left_vocab = build_vocab(left, max_vocab)
    if right_vocab is None:
        right_vocab = build_vocab(right, max_vocab)
    pairs = [(left_vocab.encode(l), right_vocab.encode(r))
             for l, r in zip(left, right)]
    return ParallelCorpus(pairs=pairs, left_vocab=left_vocab, right_vocab=right_vocab)


def encode_pairs(pairs, left_vocab, right_vocab):
    return [(left_vocab.encode(l), right_vocab.encode(r)) for l, r in pairs]


def config_dict(cfg: GeneratorConfig):
    return asdict(cfg)
