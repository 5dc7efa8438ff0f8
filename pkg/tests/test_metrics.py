"""
Tests for Dice, Hausdorff distance and evaluation reports.
"""

import json
import math
from fractions import Fraction

import numpy as np
import pandas as pd
import pytest

from tubeseg.errors import EmptyMask, ShapeMismatch
from tubeseg.metrics import (
    CaseResult,
    EvalReport,
    dice,
    directed_hausdorff,
    evaluate_case,
    evaluate_set,
    hausdorff,
    kfold_split,
    summarize_folds,
)
from tubeseg.models import Mask3


def _brute_directed(a: Mask3, b: Mask3) -> float:
    pa, pb = a.points_mm(), b.points_mm()
    d = np.sqrt(((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=2))
    return float(d.min(axis=1).max())


def _random_pair(rng):
    shape = tuple(int(n) for n in rng.integers(1, 17, size=3))
    spacing = tuple(float(s) for s in rng.choice([0.5, 1.0, 1.5, 2.0], size=3))
    density = rng.uniform(0.01, 0.3)
    a = Mask3(rng.random(shape) < density, spacing)
    b = Mask3(rng.random(shape) < density, spacing)
    return a, b


class TestDice:
    """Tests for dice."""

    @pytest.mark.sanity
    def test_identical(self, cube_mask):
        """Test identical masks score 1."""
        assert dice(cube_mask, cube_mask) == 1.0

    @pytest.mark.sanity
    def test_disjoint(self, cube_mask):
        """Test disjoint masks score 0."""
        other = Mask3(1 - cube_mask.data)
        assert dice(cube_mask, other) == 0.0

    @pytest.mark.sanity
    def test_both_empty(self):
        """Test two empty masks score 1."""
        assert dice(Mask3.zeros((2, 2, 2)), Mask3.zeros((2, 2, 2))) == 1.0

    @pytest.mark.sanity
    def test_shape_mismatch(self):
        """Test masks must share a shape."""
        with pytest.raises(ShapeMismatch):
            dice(Mask3.zeros((2, 2, 2)), Mask3.zeros((2, 2, 3)))

    @pytest.mark.unit
    def test_matches_rational_oracle(self, rng):
        """Test against exact rational arithmetic."""
        for _ in range(200):
            a, b = _random_pair(rng)
            x, y = a.data.astype(bool), b.data.astype(bool)
            total = int(x.sum()) + int(y.sum())
            if total == 0:
                continue
            expected = Fraction(2 * int((x & y).sum()), total)
            assert dice(a, b) == float(expected)


class TestHausdorff:
    """Tests for directed and symmetric Hausdorff distance."""

    @pytest.mark.sanity
    def test_single_points(self):
        """Test the distance between two single voxels."""
        a = Mask3(np.zeros((5, 5, 5)), (1.0, 2.0, 3.0))
        b = Mask3(np.zeros((5, 5, 5)), (1.0, 2.0, 3.0))
        a.data[0, 0, 0] = 1
        b.data[3, 4, 0] = 1
        assert hausdorff(a, b) == pytest.approx(math.sqrt(9 + 64))

    @pytest.mark.sanity
    def test_subset_is_asymmetric(self, cube_mask):
        """Test h(A, B) is zero when A is inside B."""
        small = Mask3(np.zeros(cube_mask.shape))
        small.data[5, 5, 5] = 1
        assert directed_hausdorff(small, cube_mask) == 0.0
        assert directed_hausdorff(cube_mask, small) > 0.0

    @pytest.mark.sanity
    def test_empty_raises(self, cube_mask):
        """Test an empty mask has no defined distance."""
        with pytest.raises(EmptyMask):
            hausdorff(cube_mask, Mask3.zeros(cube_mask.shape))

    @pytest.mark.unit
    def test_matches_brute_force(self, rng):
        """Test against all-pairs distances on random masks."""
        checked = 0
        while checked < 200:
            a, b = _random_pair(rng)
            if a.is_empty or b.is_empty:
                continue
            expected = max(_brute_directed(a, b), _brute_directed(b, a))
            assert hausdorff(a, b) == expected
            checked += 1

    @pytest.mark.unit
    def test_directed_matches_brute_force(self, rng):
        """Test each direction against all-pairs distances on random masks."""
        checked = 0
        while checked < 200:
            a, b = _random_pair(rng)
            if a.is_empty or b.is_empty:
                continue
            assert directed_hausdorff(a, b) == pytest.approx(_brute_directed(a, b), rel=1e-12)
            assert directed_hausdorff(b, a) == pytest.approx(_brute_directed(b, a), rel=1e-12)
            checked += 1

    @pytest.mark.unit
    def test_scales_with_spacing(self, rng):
        """Test doubling the spacing doubles the distance."""
        a, b = _random_pair(rng)
        while a.is_empty or b.is_empty:
            a, b = _random_pair(rng)
        scaled_a = Mask3(a.data, tuple(2 * s for s in a.spacing))
        scaled_b = Mask3(b.data, tuple(2 * s for s in b.spacing))
        assert hausdorff(scaled_a, scaled_b) == pytest.approx(2 * hausdorff(a, b))


class TestEvaluate:
    """Tests for per-case evaluation and reports."""

    @pytest.mark.sanity
    def test_perfect_case(self, cube_mask):
        """Test a perfect prediction."""
        result = evaluate_case(cube_mask, cube_mask, "case01")
        assert result == CaseResult("case01", 1.0, 0.0, None)

    @pytest.mark.sanity
    def test_empty_prediction_is_infinite(self, cube_mask):
        """Test an empty prediction has infinite Hausdorff distance."""
        result = evaluate_case(Mask3.zeros(cube_mask.shape), cube_mask, "c")
        assert result.dice == 0.0
        assert math.isinf(result.hd_mm)

    @pytest.mark.sanity
    def test_mismatch_recorded(self, cube_mask):
        """Test shape errors are recorded, not raised."""
        result = evaluate_case(Mask3.zeros((3, 3, 3)), cube_mask, "bad")
        assert not result.ok
        assert result.error.startswith("ShapeMismatch")

    @pytest.mark.sanity
    def test_means_exclude_errors(self, cube_mask):
        """Test errored cases do not enter the means."""
        report = evaluate_set(
            [(cube_mask, cube_mask, "a"), (Mask3.zeros((3, 3, 3)), cube_mask, "b")]
        )
        assert report.mean_dice == 1.0
        assert report.mean_hd_mm == 0.0

    @pytest.mark.unit
    def test_csv_round_trip(self, cube_mask, tmp_path):
        """Test means computed from the re-parsed CSV match the report."""
        shifted = Mask3(np.roll(cube_mask.data, 1, axis=0))
        report = evaluate_set(
            [
                (cube_mask, cube_mask, "a"),
                (shifted, cube_mask, "b"),
                (Mask3.zeros((3, 3, 3)), cube_mask, "c"),
            ],
            threads=2,
        )
        path = tmp_path / "report.csv"
        report.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "case_id,dice,hd_mm,error"
        assert lines[1].endswith(",")

        frame = pd.read_csv(path)
        ok = frame[frame["error"].isna()]
        assert ok["dice"].mean() == pytest.approx(report.mean_dice)
        assert ok["hd_mm"].mean() == pytest.approx(report.mean_hd_mm)

        back = EvalReport.from_csv(path)
        assert [c.case_id for c in back.cases] == ["a", "b", "c"]
        assert back.mean_dice == pytest.approx(report.mean_dice)
        assert back.cases[2].error == report.cases[2].error

    @pytest.mark.unit
    def test_inf_in_csv_and_json(self, cube_mask, tmp_path):
        """Test infinite distances are written as "inf"."""
        report = evaluate_set([(Mask3.zeros(cube_mask.shape), cube_mask, "empty")])
        report.to_csv(tmp_path / "r.csv")
        report.to_json(tmp_path / "r.json")
        assert ",inf," in (tmp_path / "r.csv").read_text()
        payload = json.loads((tmp_path / "r.json").read_text())
        assert payload["cases"][0]["hd_mm"] == "inf"
        assert payload["mean_hd_mm"] == "inf"
        assert math.isinf(EvalReport.from_csv(tmp_path / "r.csv").cases[0].hd_mm)


class TestCrossValidation:
    """Tests for k-fold splitting and fold summaries."""

    @pytest.mark.sanity
    def test_folds_partition_cases(self):
        """Test validation folds partition the case list."""
        ids = [f"case{i:02d}" for i in range(23)]
        splits = kfold_split(ids, k=5, seed=1)
        assert len(splits) == 5
        val = [c for _, v in splits for c in v]
        assert sorted(val) == ids
        for train, v in splits:
            assert set(train).isdisjoint(v)
            assert len(train) + len(v) == len(ids)

    @pytest.mark.sanity
    def test_split_deterministic(self):
        """Test the same seed gives the same folds."""
        ids = [str(i) for i in range(10)]
        assert kfold_split(ids, 3, seed=2) == kfold_split(ids, 3, seed=2)

    @pytest.mark.sanity
    def test_invalid_k(self):
        """Test k must lie between 2 and the case count."""
        with pytest.raises(ValueError):
            kfold_split(["a", "b"], k=3)

    @pytest.mark.sanity
    def test_summary_average_row(self):
        """Test the average row is the mean of fold means."""
        reports = [
            EvalReport([CaseResult("a", 0.8, 10.0), CaseResult("b", 0.6, 30.0)]),
            EvalReport([CaseResult("c", 0.9, 5.0)]),
        ]
        table = summarize_folds(reports)
        assert list(table["fold"]) == ["1", "2", "average"]
        assert table.iloc[0]["mean_dice"] == pytest.approx(0.7)
        assert table.iloc[2]["mean_dice"] == pytest.approx(0.8)
        assert table.iloc[2]["mean_hd_mm"] == pytest.approx(12.5)
        assert table.iloc[2]["cases"] == 3
