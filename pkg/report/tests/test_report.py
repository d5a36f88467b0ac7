"""Report package tests, including the determinism acceptance check."""

import json
import os

import pytest

from distillreport import (InputError, load_metrics, render_chart,
                           render_curves, render_comparison_table,
                           final_metrics_from_series)

DATA = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r) + "\n")


def rec(run, update, metric, value, method):
    return {"run": run, "update": update, "t": 0.0, "metric": metric,
            "value": value, "method": method}


class TestLoadMetrics:
    def test_empty_file_gives_empty_list(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text("")
        assert load_metrics([p]) == []

    def test_two_runs_two_metrics_four_series(self, tmp_path):
        p = tmp_path / "m.jsonl"
        write_jsonl(p, [rec("r1", 0, "loss", 1.0, "a"),
                        rec("r1", 0, "bleu", 0.1, "a"),
                        rec("r2", 0, "loss", 2.0, "b"),
                        rec("r2", 0, "bleu", 0.2, "b")])
        assert len(load_metrics([p])) == 4

    def test_out_of_order_sorted(self, tmp_path):
        p = tmp_path / "m.jsonl"
        write_jsonl(p, [rec("r", 30, "loss", 3.0, "a"),
                        rec("r", 10, "loss", 1.0, "a"),
                        rec("r", 20, "loss", 2.0, "a")])
        (s,) = load_metrics([p])
        assert s.points == [(10, 1.0), (20, 2.0), (30, 3.0)]

    def test_duplicate_updates_collapse_to_last(self, tmp_path):
        p = tmp_path / "m.jsonl"
        write_jsonl(p, [rec("r", 10, "loss", 1.0, "a"),
                        rec("r", 10, "loss", 5.0, "a")])
        (s,) = load_metrics([p])
        assert s.points == [(10, 5.0)]

    def test_malformed_lines_skipped_not_fatal(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text('not json\n' + json.dumps(rec("r", 1, "loss", 1.0, "a"))
                     + '\n{"run": "r"}\n')
        (s,) = load_metrics([p])
        assert s.points == [(1, 1.0)]

    def test_only_malformed_lines_is_input_error(self, tmp_path):
        p = tmp_path / "m.jsonl"
        p.write_text("garbage\nmore garbage\n")
        with pytest.raises(InputError):
            load_metrics([p])


class TestRenderCurves:
    def series(self, tmp_path, n_methods=5, metrics=("loss", "bleu")):
        p = tmp_path / "m.jsonl"
        rows = []
        for mi in range(n_methods):
            for metric in metrics:
                for u in (0, 100, 200):
                    rows.append(rec(f"run{mi}", u, metric,
                                    mi + u / 100.0, f"method{mi}"))
        write_jsonl(p, rows)
        return load_metrics([p])

    def test_one_file_per_metric_one_line_per_method(self, tmp_path):
        series = self.series(tmp_path)
        out = tmp_path / "out"
        written = render_curves(series, out)
        assert sorted(os.path.basename(w) for w in written) == \
            ["bleu.svg", "loss.svg"]
        svg = (out / "loss.svg").read_text()
        assert svg.count("<polyline") == 5
        assert "update" in svg and "loss" in svg

    def test_rerender_byte_identical(self, tmp_path):
        series = self.series(tmp_path)
        a, b = tmp_path / "a", tmp_path / "b"
        render_curves(series, a)
        render_curves(series, b)
        assert (a / "loss.svg").read_bytes() == (b / "loss.svg").read_bytes()

    def test_single_point_rendered_as_marker(self, tmp_path):
        p = tmp_path / "m.jsonl"
        write_jsonl(p, [rec("r", 5, "loss", 1.0, "a")])
        svg = render_chart("loss", load_metrics([p]))
        assert "<circle" in svg
        assert "<polyline" not in svg

    def test_no_series_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            render_curves([], tmp_path / "o")


class TestComparisonTable:
    def test_one_row(self):
        md = render_comparison_table({"word-sampling": {"dev_bleu": 0.5,
                                                        "test_bleu": 0.6}})
        assert "| word-sampling | 50.00 | 60.00 |" in md

    def test_sorted_by_test_bleu_desc(self):
        md = render_comparison_table({
            "a": {"dev_bleu": 0.1, "test_bleu": 0.2},
            "b": {"dev_bleu": 0.3, "test_bleu": 0.9},
            "c": {"dev_bleu": 0.2, "test_bleu": 0.5}})
        body = md.splitlines()[2:]
        assert [r.split("|")[1].strip() for r in body] == ["b", "c", "a"]

    def test_missing_dev_rendered_as_dash(self):
        md = render_comparison_table({"pivot": {"test_bleu": 0.4}})
        assert "| pivot | — | 40.00 |" in md

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            render_comparison_table({})

    def test_final_metrics_from_series(self, tmp_path):
        p = tmp_path / "m.jsonl"
        write_jsonl(p, [rec("r1", 0, "test_bleu", 0.1, "a"),
                        rec("r1", 9, "test_bleu", 0.7, "a"),
                        rec("r1", 9, "dev_bleu", 0.6, "a"),
                        rec("r2", 9, "test_bleu", 0.4, "pivot")])
        finals = final_metrics_from_series(load_metrics([p]))
        assert finals["a"] == {"dev_bleu": 0.6, "test_bleu": 0.7}
        assert finals["pivot"]["dev_bleu"] is None


class TestAcceptanceA12:
    """Rendering the captured teaching-experiment metrics twice must be
    byte-identical, with one line per trained method."""

    @pytest.fixture
    def inputs(self):
        paths = [os.path.join(DATA, n)
                 for n in ("a5_metrics.jsonl", "a6_curves.jsonl",
                           "a6_table.jsonl")]
        missing = [p for p in paths if not os.path.exists(p)]
        if missing:
            pytest.skip(f"captured metrics not present: {missing}")
        return paths

    def test_a12_report_determinism(self, inputs, tmp_path):
        from distillreport import cli
        a, b = tmp_path / "a", tmp_path / "b"
        assert cli.main([*inputs, "--out", str(a)]) == 0
        assert cli.main([*inputs, "--out", str(b)]) == 0
        files = sorted(os.listdir(a))
        assert files == sorted(os.listdir(b))
        assert any(f.endswith(".svg") for f in files)
        assert "comparison.md" in files
        identical = all((a / f).read_bytes() == (b / f).read_bytes()
                        for f in files)

        # training curves: one line per trained method
        svg = (a / "val_loss.svg").read_text()
        methods = {"sent-greedy", "sent-beam", "sent-kbest",
                   "word-greedy", "word-beam", "word-sampling"}
        lines_ok = svg.count("<polyline") == len(methods) and \
            all(m in svg for m in methods)
        print(f"A12 {'PASS' if identical and lines_ok else 'FAIL'}: "
              f"{len(files)} files byte-identical across re-renders, "
              f"{svg.count('<polyline')} method lines in val_loss.svg")
        assert identical and lines_ok
