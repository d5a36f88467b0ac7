"""Two-step pivot decoding baseline: x -> z-hat -> y-hat."""

from __future__ import annotations

from dataclasses import dataclass

from . import model as M


class PivotError(Exception):
    pass


class EmptyPivotError(PivotError):
    """The source-to-pivot stage produced an empty sentence."""


@dataclass
class PivotChain:
    src_to_pivot: M.ModelParams
    pivot_to_tgt: M.ModelParams
    beam_k: int = 5

    def __post_init__(self):
        if self.src_to_pivot.dims.tgt_vocab != self.pivot_to_tgt.dims.src_vocab:
            raise PivotError(
                f"pivot vocabulary mismatch: source-to-pivot emits "
                f"{self.src_to_pivot.dims.tgt_vocab} tokens, pivot-to-target "
                f"consumes {self.pivot_to_tgt.dims.src_vocab}")


def two_step_decode(chain: PivotChain, x):
    """Returns (z_hat, y_hat); both stages take the beam top-1."""
    z_hat = M.beam_search(chain.src_to_pivot, x, chain.beam_k)[0][0]
    if not z_hat:
        raise EmptyPivotError(
            f"source-to-pivot decode emitted an empty pivot for input of "
            f"length {len(x)}")
    y_hat = M.beam_search(chain.pivot_to_tgt, z_hat, chain.beam_k)[0][0]
    return z_hat, y_hat
