import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grainfl.datasets import Image
from grainfl.metrics import (MetricConfig, accuracy, build_report,
                             communication_efficiency, mse, peum,
                             peum_defined, privacy_score, report_to_json,
                             write_report_csv)


def img(values):
    arr = np.asarray(values, dtype=np.float64)
    return Image(arr.shape[1], arr.shape[0], arr)


def test_mse_identical_is_zero():
    a = img([[0.2, 0.8], [0.5, 0.1]])
    assert mse(a, a) == 0.0


def test_mse_extremes():
    a = img([[0.0, 0.0]])
    b = img([[1.0, 1.0]])
    assert mse(a, b) == 1.0


def test_mse_matches_loop_oracle():
    rng = np.random.default_rng(0)
    pa, pb = rng.random((3, 4)), rng.random((3, 4))
    total = 0.0
    for y in range(3):
        for x in range(4):
            total += (pa[y, x] - pb[y, x]) ** 2
    assert mse(img(pa), img(pb)) == pytest.approx(total / 12, rel=1e-12)


def test_mse_dimension_mismatch():
    with pytest.raises(ValueError):
        mse(img([[0.0]]), img([[0.0, 0.0]]))


def test_privacy_score_fixed_points():
    a = img([[0.0]])
    assert privacy_score(a, a) == 0.0
    assert privacy_score(img([[0.0]]), img([[1.0]])) == 0.5


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 10.0), st.floats(0.0, 10.0))
def test_privacy_score_monotone_in_mse(m1, m2):
    s = lambda m: 1.0 - 1.0 / (1.0 + m)
    if m1 <= m2:
        assert s(m1) <= s(m2)
    assert 0.0 <= s(m1) < 1.0


def test_ce_zero_time_is_one():
    assert communication_efficiency(0.0, 1000.0) == 1.0


def test_ce_closed_form_point():
    # phi * time / traffic = ln 3  ->  2 * sigmoid(-ln 3) = 0.5
    phi = 3e6
    time_s = math.log(3.0)
    assert communication_efficiency(time_s, phi) == pytest.approx(0.5, abs=1e-15)


def test_ce_long_time_limit():
    assert communication_efficiency(1e9, 1.0, phi=1.0) < 1e-12


def test_ce_monotonicity():
    assert communication_efficiency(2.0, 100.0, phi=10.0) \
        < communication_efficiency(1.0, 100.0, phi=10.0)
    assert communication_efficiency(1.0, 200.0, phi=10.0) \
        > communication_efficiency(1.0, 100.0, phi=10.0)


def test_ce_rejects_zero_traffic():
    with pytest.raises(ValueError):
        communication_efficiency(1.0, 0.0)


def test_peum_equal_inputs():
    assert peum(0.9, 0.9, 0.9) == pytest.approx(0.3, abs=1e-15)
    assert peum(1.0, 1.0, 1.0) == pytest.approx(1.0 / 3.0, abs=1e-15)


def test_peum_reference_point():
    # 1 / (1/0.9625 + 1/0.5 + 1/0.75), checked by independent arithmetic
    want = 1.0 / (1.0 / 0.9625 + 2.0 + 4.0 / 3.0)
    assert peum(0.9625, 0.5, 0.75) == pytest.approx(want, abs=1e-15)
    assert want == pytest.approx(0.228713, abs=1e-6)


def test_peum_zero_input_flagged():
    assert peum(0.0, 0.5, 0.5) == 0.0
    assert not peum_defined(0.0, 0.5, 0.5)
    assert peum_defined(0.1, 0.5, 0.5)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_peum_bounded_by_min(a, c, s):
    assert peum(a, c, s) <= min(a, c, s) + 1e-12


def test_accuracy_hand_counted():
    class FixedLogits:
        def __init__(self, table):
            self.table = table

        def logits(self, params, x):
            return np.asarray(self.table[x])

    table = {
        "a": [0.9, 0.1, 0.0],   # argmax 0
        "b": [0.0, 0.5, 0.5],   # tie -> lowest index 1
        "c": [0.1, 0.2, 0.7],   # argmax 2
    }
    model = FixedLogits(table)
    samples = [("a", 0), ("b", 1), ("c", 0)]
    assert accuracy(model, None, samples) == pytest.approx(2 / 3)
    assert accuracy(model, None, [("a", 0)]) == 1.0
    assert accuracy(model, None, [("a", 2)]) == 0.0


def test_accuracy_empty_set_rejected():
    with pytest.raises(ValueError):
        accuracy(None, None, [])


def test_build_report_and_export(tmp_path):
    report = build_report(
        acc=0.9, per_sample_s_p=[0.1, 0.3], round_seconds=[0.5, 0.7],
        round_traffic=[1000, 1000], config=MetricConfig(phi=100.0))
    assert report.s_p == pytest.approx(0.2)
    want_ce = communication_efficiency(0.6, 1000.0, phi=100.0)
    assert report.ce == pytest.approx(want_ce, rel=1e-12)
    assert report.peum == pytest.approx(peum(0.9, want_ce, 0.2), rel=1e-12)
    assert report.peum_defined

    payload = json.loads(report_to_json(report))
    assert payload["accuracy"] == 0.9
    assert payload["per_sample_s_p"] == [0.1, 0.3]
    path = tmp_path / "report.csv"
    write_report_csv(report, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "metric,value"
    assert any(line.startswith("peum,") for line in lines)


def test_build_report_upload_only_flag():
    both = build_report(0.9, [0.2], [1.0], [2000], MetricConfig(phi=10.0))
    up = build_report(0.9, [0.2], [1.0], [2000],
                      MetricConfig(phi=10.0, upload_only_traffic=True))
    assert up.ce < both.ce  # halving traffic worsens efficiency


def test_metric_config_validation():
    with pytest.raises(ValueError):
        MetricConfig(phi=0.0)
