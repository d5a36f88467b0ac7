"""Closed token inventories and integer-encoded sentences."""

from __future__ import annotations

BOS = 0
EOS = 1
PAD = 2
UNK = 3

RESERVED = ["<bos>", "<eos>", "<pad>", "<unk>"]


class VocabError(Exception):
    pass


class Vocabulary:
    """Bijective token<->id mapping with reserved ids 0..3."""

    def __init__(self, tokens):
        self.id_to_token = list(RESERVED) + list(tokens)
        if len(self.id_to_token) < 5:
            raise VocabError("vocabulary needs at least one non-reserved token")
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise VocabError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.id_to_token)

    def encode(self, tokens):
        return [self.token_to_id.get(t, UNK) for t in tokens]

    def decode(self, ids):
        return [self.id_to_token[i] for i in ids]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for t in self.id_to_token[len(RESERVED):]:
                f.write(t + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            tokens = [line.rstrip("\n") for line in f if line.strip()]
        return cls(tokens)
