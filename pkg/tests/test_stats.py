import numpy as np
import pytest

from oracles import pearson_closed_form
from stackrecon.stats import (BEHAVIOR_COLUMNS, BehavioralRecord, bootstrap_indices, compare, correlate,
                              load_behavior, pearson)

HEADER = ",".join(BEHAVIOR_COLUMNS)


def test_identical_series_correlate_perfectly():
    x = [0.1, 0.4, 0.2, 0.9]
    assert pearson(x, x) == 1.0


def test_affine_relation():
    x = np.linspace(0, 1, 12)
    assert abs(pearson(x, 2 * x + 1) - 1.0) < 1e-12
    assert abs(pearson(x, -3 * x + 0.5) + 1.0) < 1e-12


def test_matches_closed_form_on_random_data():
    rng = np.random.default_rng(2)
    for _ in range(50):
        n = int(rng.integers(3, 40))
        x = rng.uniform(size=n)
        y = 0.5 * x + rng.normal(scale=0.3, size=n)
        assert abs(pearson(x, y) - pearson_closed_form(list(x), list(y))) < 1e-12


def test_constant_series_is_undefined():
    assert pearson([1, 2, 3], [0.5, 0.5, 0.5]) is None


def test_mismatched_lengths_are_rejected():
    with pytest.raises(ValueError):
        pearson([1, 2, 3], [1, 2])


def test_bootstrap_is_bit_reproducible():
    a = bootstrap_indices(10, 1000, seed=3)
    b = bootstrap_indices(10, 1000, seed=3)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, bootstrap_indices(10, 1000, seed=4))


def test_interval_brackets_point_estimate():
    rng = np.random.default_rng(1)
    x = rng.uniform(size=15)
    y = x + rng.normal(scale=0.2, size=15)
    rep, reps = correlate("v", "lab", x, y, bootstrap_indices(15, 2000, 0))
    assert rep.low <= rep.r <= rep.high
    assert reps.shape == (2000,) and rep.iterations == 2000


def test_behavioral_values_outside_unit_interval_rejected():
    with pytest.raises(ValueError):
        BehavioralRecord(1, 1.2, 0.5)


def _behavior_file(tmp_path, rows, header=HEADER):
    path = tmp_path / "behavior.csv"
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return path


def test_load_behavior_with_missing_fields(tmp_path):
    path = _behavior_file(tmp_path, ["1,0.8,0.7,20,50", "2,,0.4,,50"])
    data = load_behavior(path)
    assert data[1].p_one_hand_lab == 0.8 and data[1].n_lab == 20
    assert data[2].p_one_hand_lab is None and data[2].target("online") == 0.4


def test_load_behavior_checks_header(tmp_path):
    path = _behavior_file(tmp_path, ["1,0.8,0.7,20,50"], header="id,lab,online,n1,n2")
    with pytest.raises(ValueError, match="expected header"):
        load_behavior(path)


def test_compare_drops_problems_missing_a_target():
    behavior = {k: BehavioralRecord(k, None if k == 2 else k / 10, k / 12) for k in range(1, 7)}
    preds = {"a": {k: k / 10 for k in range(1, 7)}, "b": {k: (7 - k) / 10 for k in range(1, 7)}}
    reports, prows = compare(preds, behavior, iterations=500, seed=0)
    lab = {r.variant: r for r in reports if r.target == "lab"}
    online = {r.variant: r for r in reports if r.target == "online"}
    assert lab["a"].n == 5 and online["a"].n == 6
    assert lab["a"].r == pytest.approx(1.0) and lab["b"].r == pytest.approx(-1.0)
    # a beats b in every replicate where both are defined
    row = next(r for r in prows if r["target"] == "lab" and r["variant_a"] == "a")
    assert float(row["p_one_sided"]) == 0.0


def test_compare_is_reproducible():
    behavior = {k: BehavioralRecord(k, (k * 7 % 10) / 10, (k * 3 % 10) / 10) for k in range(1, 11)}
    preds = {"a": {k: (k * 5 % 11) / 11 for k in range(1, 11)}}
    r1, _ = compare(preds, behavior, iterations=300, seed=9)
    r2, _ = compare(preds, behavior, iterations=300, seed=9)
    assert [r.row() for r in r1] == [r.row() for r in r2]


def test_compare_rejects_unknown_problem_ids():
    behavior = {k: BehavioralRecord(k, 0.5, 0.5) for k in range(1, 4)}
    with pytest.raises(ValueError, match="without behavioral data"):
        compare({"a": {1: 0.1, 2: 0.2, 9: 0.3}}, behavior, iterations=10)
