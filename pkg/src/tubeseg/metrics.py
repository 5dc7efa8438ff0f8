"""
Segmentation metrics: Dice, directed and symmetric Hausdorff distance, and
per-case evaluation reports.

Point sets are foreground voxel centers scaled by spacing, in millimetres.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import ndimage

from .errors import ShapeMismatch, TubesegError
from .models import Mask3, require_foreground

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["case_id", "dice", "hd_mm", "error"]

PathLike = Union[str, Path]


def _check_aligned(a: Mask3, b: Mask3) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"mask shapes differ: {a.shape} vs {b.shape}")


def dice(pred: Mask3, gt: Mask3) -> float:
    """2|X ∩ Y| / (|X| + |Y|); two empty masks score 1.0."""
    _check_aligned(pred, gt)
    x = pred.data.astype(bool)
    y = gt.data.astype(bool)
    total = int(np.count_nonzero(x)) + int(np.count_nonzero(y))
    if total == 0:
        return 1.0
    return 2 * int(np.count_nonzero(x & y)) / total


def directed_hausdorff(a: Mask3, b: Mask3) -> float:
    """
    max over a in A of min over b in B of |a - b|, in mm.

    The nearest B voxel of every A voxel comes from an exact Euclidean
    feature transform restricted to the bounding box of A ∪ B.

    Raises:
        EmptyMask: either mask has no foreground
    """
    _check_aligned(a, b)
    require_foreground(a, "first mask")
    require_foreground(b, "second mask")

    union = (a.data | b.data).astype(bool)
    crop = tuple(
        slice(int(hits[0]), int(hits[-1]) + 1)
        for hits in (
            np.flatnonzero(union.any(axis=tuple(x for x in range(3) if x != axis)))
            for axis in range(3)
        )
    )
    a_crop = a.data[crop].astype(bool)
    b_crop = b.data[crop].astype(bool)

    nearest = ndimage.distance_transform_edt(
        ~b_crop, sampling=a.spacing, return_distances=False, return_indices=True
    )
    points = np.argwhere(a_crop)
    partners = nearest[(slice(None),) + tuple(points.T)].T
    offsets = (points - partners).astype(np.float64) * np.asarray(a.spacing)
    return float(np.sqrt((offsets ** 2).sum(axis=1)).max())


def hausdorff(a: Mask3, b: Mask3) -> float:
    """Symmetric Hausdorff distance max(h(A, B), h(B, A)) in mm."""
    return max(directed_hausdorff(a, b), directed_hausdorff(b, a))


@dataclass
class CaseResult:
    """Metrics for one prediction/ground-truth pair."""

    case_id: str
    dice: float = float("nan")
    hd_mm: float = float("nan")
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def evaluate_case(pred: Mask3, gt: Mask3, case_id: str) -> CaseResult:
    """
    Score one case; errors are recorded instead of raised.

    An empty-versus-nonempty pair has an undefined Hausdorff distance and
    is reported as +inf.
    """
    try:
        score = dice(pred, gt)
        if pred.is_empty and gt.is_empty:
            hd = 0.0
        elif pred.is_empty or gt.is_empty:
            hd = math.inf
        else:
            hd = hausdorff(pred, gt)
    except (TubesegError, ValueError) as exc:
        logger.warning("case %s failed: %s", case_id, exc)
        return CaseResult(case_id, error=f"{type(exc).__name__}: {exc}")
    return CaseResult(case_id, score, hd)


def _mean(values: List[float]) -> float:
    return float(np.mean(values)) if values else float("nan")


def _json_number(value: float) -> Union[float, str, None]:
    if math.isnan(value):
        return None
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


@dataclass
class EvalReport:
    """Per-case metrics and their means; errored cases are excluded from means."""

    cases: List[CaseResult] = field(default_factory=list)

    @property
    def mean_dice(self) -> float:
        return _mean([c.dice for c in self.cases if c.ok])

    @property
    def mean_hd_mm(self) -> float:
        return _mean([c.hd_mm for c in self.cases if c.ok])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(c) for c in self.cases], columns=CSV_COLUMNS)

    def to_csv(self, path: PathLike) -> None:
        """Write case_id,dice,hd_mm,error; infinite distances become "inf"."""
        frame = self.to_frame()
        frame.to_csv(path, index=False, na_rep="")

    def to_dict(self) -> dict:
        return {
            "cases": [
                {
                    "case_id": c.case_id,
                    "dice": _json_number(c.dice),
                    "hd_mm": _json_number(c.hd_mm),
                    "error": c.error,
                }
                for c in self.cases
            ],
            "mean_dice": _json_number(self.mean_dice),
            "mean_hd_mm": _json_number(self.mean_hd_mm),
        }

    def to_json(self, path: PathLike) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path: PathLike) -> "EvalReport":
        """Read back a report written by to_csv."""
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
        cases = []
        for row in frame.itertuples(index=False):
            cases.append(
                CaseResult(
                    case_id=row.case_id,
                    dice=float(row.dice) if row.dice else float("nan"),
                    hd_mm=float(row.hd_mm) if row.hd_mm else float("nan"),
                    error=row.error or None,
                )
            )
        return cls(cases)


def evaluate_set(
    pairs: Iterable[Tuple[Mask3, Mask3, str]],
    threads: int = 1,
) -> EvalReport:
    """
    Evaluate (pred, gt, case_id) triples.

    Per-case failures are recorded in the report rather than raised.
    """
    items = list(pairs)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cases = list(pool.map(lambda item: evaluate_case(*item), items))
    else:
        cases = [evaluate_case(*item) for item in items]
    report = EvalReport(cases)
    logger.info(
        "evaluated %d cases: mean dice %.4f, mean hd %.2f mm",
        len(cases), report.mean_dice, report.mean_hd_mm,
    )
    return report


def kfold_split(
    case_ids: Sequence[str],
    k: int = 5,
    seed: int = 0,
) -> List[Tuple[List[str], List[str]]]:
    """
    Shuffle case ids and partition them into k validation folds.

    Returns:
        One (train_ids, val_ids) pair per fold
    """
    if k < 2 or k > len(case_ids):
        raise ValueError(f"k must lie in [2, {len(case_ids)}], got {k}")
    order = np.random.default_rng(seed).permutation(len(case_ids))
    folds = np.array_split(order, k)
    splits = []
    for fold in folds:
        val = set(int(i) for i in fold)
        splits.append(
            (
                [case_ids[i] for i in range(len(case_ids)) if i not in val],
                [case_ids[i] for i in sorted(val)],
            )
        )
    return splits


def summarize_folds(reports: Sequence[EvalReport]) -> pd.DataFrame:
    """
    One row per fold with mean Dice and HD, plus an "average" row holding
    the mean of the fold means.
    """
    rows = [
        {
            "fold": str(i + 1),
            "cases": sum(1 for c in r.cases if c.ok),
            "mean_dice": r.mean_dice,
            "mean_hd_mm": r.mean_hd_mm,
        }
        for i, r in enumerate(reports)
    ]
    frame = pd.DataFrame(rows, columns=["fold", "cases", "mean_dice", "mean_hd_mm"])
    average = {
        "fold": "average",
        "cases": int(frame["cases"].sum()),
        "mean_dice": float(frame["mean_dice"].mean()),
        "mean_hd_mm": float(frame["mean_hd_mm"].mean()),
    }
    return pd.concat([frame, pd.DataFrame([average])], ignore_index=True)
