"""Markdown comparison tables: methods as rows, BLEU columns."""

from __future__ import annotations

MISSING = "—"   # em dash for absent values


def render_comparison_table(final_metrics):
    """final_metrics: {method: {"dev_bleu": float|None, "test_bleu": float}}.

    Rows sorted by test BLEU descending (method name breaks ties).
    """
    if not final_metrics:
        raise ValueError("render_comparison_table: no methods")
    rows = sorted(final_metrics.items(),
                  key=lambda kv: (-kv[1]["test_bleu"], kv[0]))
    lines = ["| method | dev BLEU | test BLEU |",
             "|---|---|---|"]
    for method, vals in rows:
        dev = vals.get("dev_bleu")
        dev_s = MISSING if dev is None else f"{100 * dev:.2f}"
        lines.append(f"| {method} | {dev_s} | {100 * vals['test_bleu']:.2f} |")
    return "\n".join(lines) + "\n"


def final_metrics_from_series(series):
    """Pick the last dev_bleu/test_bleu value per method from RunSeries."""
    out = {}
    for s in series:
        if s.metric not in ("dev_bleu", "test_bleu"):
            continue
        entry = out.setdefault(s.method, {"dev_bleu": None, "test_bleu": None})
        entry[s.metric] = s.final_value()
    return {m: v for m, v in out.items() if v["test_bleu"] is not None}
