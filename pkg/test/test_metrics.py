# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

import numpy as np
import pytest

from socialcue.cues import CUE_ORDER, Cue, CueVector
from socialcue.detectors import CuePredictions
from socialcue.errors import ValidationError
from socialcue.metrics import (
    ConfusionMatrix,
    CueReport,
    MetricsReport,
    compare_runs,
    confusion,
    cue_metrics,
    itm,
    run_label,
    sim,
)


def brute_f1(tp, fp, fn):
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def brute_sim(cm):
    return (brute_f1(cm.tp, cm.fp, cm.fn) + brute_f1(cm.tn, cm.fn, cm.fp)) / 2


def random_matrices(n=1000, seed=3):
    rng = np.random.default_rng(seed)
    for row in rng.integers(0, 50, size=(n, 4)):
        # Zero counts are common on purpose
        row = np.where(rng.random(4) < 0.2, 0, row)
        yield ConfusionMatrix(*(int(v) for v in row))


def test_confusion():
    cm = confusion([True, True, False, False, True], [True, False, False, True, True])
    assert cm == ConfusionMatrix(tp=2, fp=1, fn=1, tn=1)
    assert cm.total == 5


def test_confusion_errors():
    with pytest.raises(ValidationError):
        confusion([True], [True, False])
    with pytest.raises(ValidationError):
        confusion([], [])
    with pytest.raises(ValidationError):
        ConfusionMatrix(tp=-1)


def test_against_brute_force():
    for cm in random_matrices():
        if cm.tn + cm.fp:
            assert abs(itm(cm) - cm.tn / (cm.tn + cm.fp)) < 1e-12
        else:
            assert itm(cm) is None
        if cm.total:
            assert abs(sim(cm) - brute_sim(cm)) < 1e-12


def test_scale_and_swap():
    """Scaling all counts changes nothing; SIM treats both classes alike."""
    for cm in random_matrices(200, seed=5):
        if not cm.total:
            continue
        scaled = ConfusionMatrix(cm.tp * 7, cm.fp * 7, cm.fn * 7, cm.tn * 7)
        assert sim(scaled) == pytest.approx(sim(cm), abs=1e-12)
        assert sim(cm.swapped()) == pytest.approx(sim(cm), abs=1e-12)
        assert cm.swapped().swapped() == cm


def test_known_values():
    cm = ConfusionMatrix(tp=40, fp=10, fn=20, tn=30)
    assert itm(cm) == 0.75
    f1_pos = 2 * 0.8 * (40 / 60) / (0.8 + 40 / 60)
    f1_neg = 2 * 0.6 * 0.75 / (0.6 + 0.75)
    assert sim(cm) == pytest.approx((f1_pos + f1_neg) / 2)


def test_degenerate():
    """Only interactions: no timing score; the empty class adds an F1 of zero."""
    only_positive = ConfusionMatrix(tp=5, fn=5)
    assert itm(only_positive) is None
    assert sim(only_positive) == pytest.approx(brute_f1(5, 0, 5) / 2)
    with pytest.raises(ValidationError):
        sim(ConfusionMatrix())


def _predictions(values_by_segment):
    return [
        CuePredictions(segment_id, "test", values=dict(values))
        for segment_id, values in values_by_segment.items()
    ]


def test_cue_metrics_oracle(assignments):
    truths = {f"s{i}": cues for i, cues in enumerate(assignments)}
    report = cue_metrics(_predictions({sid: dict(cues) for sid, cues in truths.items()}), truths)
    for cue in CUE_ORDER:
        stats = report[cue]
        assert stats.positive_accuracy == 1.0
        assert stats.negative_accuracy == 1.0
        assert stats.macro_f1 == 1.0
        assert stats.counts == ConfusionMatrix(tp=128, tn=128)


def test_cue_metrics_all_false(assignments):
    truths = {f"s{i}": cues for i, cues in enumerate(assignments)}
    never = {sid: {cue: False for cue in CUE_ORDER} for sid in truths}
    report = cue_metrics(_predictions(never), truths)
    stats = report[Cue.AUD]
    assert stats.positive_accuracy == 0.0
    assert stats.negative_accuracy == 1.0
    assert stats.macro_f1 == pytest.approx(brute_f1(128, 128, 0) / 2)


def test_cue_metrics_unasked_cue(tmp_path):
    """Cues asked on no segment have no statistics."""
    truths = {"a": CueVector(aud=True), "b": CueVector()}
    report = cue_metrics(_predictions({"a": {Cue.AUD: True}, "b": {Cue.AUD: True}}), truths)
    assert report[Cue.AUD].counts == ConfusionMatrix(tp=1, fp=1)
    assert report[Cue.SFD] is None
    assert CueReport.from_dict(report.to_dict()) == report
    lines = report.write_csv(tmp_path / "cues.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "cue,positive_accuracy,negative_accuracy,macro_f1,tp,fp,fn,tn"
    assert lines[3] == "AUD,1.0,0.0,0.3333333333333333,1,1,0,0"
    assert lines[-1] == "SFD,NA,NA,NA,NA,NA,NA,NA"
    with pytest.raises(ValidationError):
        cue_metrics(_predictions({"c": {Cue.AUD: True}}), truths)


def test_metrics_report_roundtrip():
    report = MetricsReport.build(
        [True, False, False, True],
        [True, False, True, False],
        metadata={"backend": "ORACLE", "seed": 0},
        queries_issued=12,
    )
    assert report.n_segments == 4
    assert report.is_consistent()
    data = report.to_dict()
    assert data["n_segments"] == 4
    assert MetricsReport.from_dict(data) == report
    tampered = MetricsReport.from_dict({**data, "itm": 0.9})
    assert not tampered.is_consistent()


def _report(itm_value, sim_value, **metadata):
    cm = ConfusionMatrix(tp=1, tn=1)
    return MetricsReport(itm_value, sim_value, cm, metadata=metadata)


def test_compare_runs():
    """Deltas are taken against the baseline; rows sort by settings."""
    reports = [
        _report(0.125, 0.5, backend="ORACLE", frame_budget=10),
        _report(0.5841, 0.7, backend="ORACLE", frame_budget=3),
    ]
    comparison = compare_runs(reports)
    assert [row.key[2] for row in comparison.rows] == [3, 10]
    first, second = comparison.rows
    assert first.itm_delta == pytest.approx(0.4591)
    assert first.sim_delta == pytest.approx(0.2)
    assert second.baseline and second.itm_delta == 0.0
    markdown = comparison.to_markdown().splitlines()
    assert markdown[0] == "### Intervention Timing"
    assert "| backend=ORACLE frame_budget=3 | 58.41 | +45.91 |" in markdown
    assert "| backend=ORACLE frame_budget=10 (baseline) | 12.50 | +0.00 |" in markdown
    assert "### Overall Social Interaction: Macro F1" in markdown


def test_compare_runs_missing_itm(tmp_path):
    reports = [_report(None, 0.5, seed=1), _report(0.5, 0.25, seed=2)]
    comparison = compare_runs(reports)
    assert comparison.rows[1].itm_delta is None
    assert "| seed=2 | 50.00 | n/a |" in comparison.to_markdown()
    lines = comparison.write_csv(tmp_path / "c.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("run,backend,modality,frame_budget")
    assert lines[2].endswith(",0.5,0.25,NA,-0.25,False")


def test_compare_runs_errors():
    with pytest.raises(ValidationError):
        compare_runs([])
    with pytest.raises(ValidationError):
        compare_runs([_report(0.1, 0.1, seed=1), _report(0.2, 0.2, seed=1)])


def test_compare_runs_same_settings():
    """Equal settings on two datasets are two rows; a rerun needs names."""
    datasets = [_report(0.1, 0.1, seed=1, dataset="a"), _report(0.2, 0.2, seed=1, dataset="b")]
    assert [row.label for row in compare_runs(datasets).rows] == [
        "seed=1 dataset=a",
        "seed=1 dataset=b",
    ]
    rerun = [_report(0.1, 0.1, seed=1), _report(0.3, 0.3, seed=1)]
    comparison = compare_runs(rerun, names=["runs/old", "runs/new"])
    assert [row.label for row in comparison.rows] == ["runs/new", "runs/old"]
    assert comparison.rows[0].sim_delta == pytest.approx(0.2)
    with pytest.raises(ValidationError):
        compare_runs(rerun, names=["only one"])

def test_run_label():
    assert run_label({"seed": 0, "backend": "NOISY", "unrelated": 1}) == "backend=NOISY seed=0"
