"""Teacher-initialized transfer for the small source-pivot setting."""

from __future__ import annotations

from . import model as M


class TransferError(Exception):
    pass


COPIED_GROUPS = ("attention", "decoder", "target_embed", "output")

# target-side groups frozen; the attention stays trainable so the student
# can learn to query its own encoder annotations
DEFAULT_FREEZE_PLAN = {
    "source_embed": False,
    "encoder": False,
    "attention": False,
    "decoder": True,
    "target_embed": True,
    "output": True,
}


def validate_plan(plan):
    unknown = set(plan) - set(M.PARAM_GROUPS)
    if unknown:
        raise TransferError(f"unknown parameter groups in freeze plan: {sorted(unknown)}")
    return {g: bool(plan.get(g, False)) for g in M.PARAM_GROUPS}


def frozen_groups(plan):
    plan = validate_plan(plan)
    return tuple(g for g, frozen in plan.items() if frozen)


def init_from_teacher(student: M.ModelParams, teacher: M.ModelParams,
                      plan=None) -> M.ModelParams:
    """Copy the target-side groups from the teacher into the student.

    Source embeddings and encoder keep their fresh initialization. The
    copy is idempotent; freezing itself is enforced by the optimizer via
    `frozen_groups(plan)`.
    """
    if plan is None:
        plan = DEFAULT_FREEZE_PLAN
    validate_plan(plan)
    sd, td = student.dims, teacher.dims
    if (sd.emb, sd.hidden, sd.tgt_vocab) != (td.emb, td.hidden, td.tgt_vocab):
        raise TransferError(
            f"dimension mismatch: student (emb={sd.emb}, hidden={sd.hidden}, "
            f"tgt_vocab={sd.tgt_vocab}) vs teacher (emb={td.emb}, "
            f"hidden={td.hidden}, tgt_vocab={td.tgt_vocab})")
    for group in COPIED_GROUPS:
        for name in M.PARAM_GROUPS[group]:
            src = teacher[name]
            dst = student[name]
            if src.shape != dst.shape:
                raise TransferError(f"group {group}: parameter {name} has shape "
                                    f"{dst.shape}, teacher has {src.shape}")
            dst.data[...] = src.data
    return student
