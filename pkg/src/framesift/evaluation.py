"""Temporal detection scoring: greedy matching against ground-truth event
windows, per-class precision/recall/F1, and the macro-F1 summary.

A detection is a true positive when an unmatched ground-truth event of the
same video and class contains its timestamp. Unmatched detections count as
false positives under their predicted class; unmatched events as false
negatives under their true class. Zero-denominator ratios are defined as 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

if TYPE_CHECKING:
    from .detect import Detection


@dataclass(frozen=True)
class GroundTruthEvent:
    video_id: str
    class_id: int
    t_start: float
    t_end: float

    def __post_init__(self) -> None:
        if self.t_start > self.t_end:
            raise ValueError(f"event window inverted: {self.t_start} > {self.t_end}")

    def contains(self, t: float) -> bool:
        return self.t_start <= t <= self.t_end


@dataclass
class ClassCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2.0 * p * r / (p + r) if p + r else 0.0


def match(detections: Iterable["Detection"],
          gt: Iterable[GroundTruthEvent]) -> dict[int, ClassCounts]:
    """Greedy per-class TP/FP/FN counts.

    Detections are walked in time order; each matches at most one event and
    each event at most one detection. With non-overlapping same-class windows
    (the checkout case) this equals the optimal matching.
    """
    events = list(gt)
    ordered = sorted(detections, key=lambda d: (d.time_s, d.video_id, d.class_id))

    by_key: dict[tuple[str, int], list[int]] = {}
    for i, e in enumerate(events):
        by_key.setdefault((e.video_id, e.class_id), []).append(i)
    for ids in by_key.values():
        ids.sort(key=lambda i: (events[i].t_start, events[i].t_end))

    counts: dict[int, ClassCounts] = {}

    def cls(class_id: int) -> ClassCounts:
        return counts.setdefault(class_id, ClassCounts())

    matched = [False] * len(events)
    for det in ordered:
        hit = None
        for i in by_key.get((det.video_id, det.class_id), []):
            if not matched[i] and events[i].contains(det.time_s):
                hit = i
                break
        if hit is None:
            cls(det.class_id).fp += 1
        else:
            matched[hit] = True
            cls(det.class_id).tp += 1
    for i, e in enumerate(events):
        if not matched[i]:
            cls(e.class_id).fn += 1
    return counts


def macro_f1(counts: dict[int, ClassCounts], num_classes: int | None = None,
             weighted: bool = False) -> float:
    """Mean per-class F1.

    By default Q is the union of classes present in detections or ground
    truth. ``num_classes`` fixes Q to a full label space instead (absent
    classes contribute 0). ``weighted`` averages with ground-truth support
    weights rather than uniformly.
    """
    if num_classes is not None:
        universe = {c: counts.get(c, ClassCounts()) for c in range(1, num_classes + 1)}
    else:
        universe = dict(counts)
    if not universe:
        raise ValueError("macro_f1 needs at least one class in detections or ground truth")
    ordered = sorted(universe)  # fixed summation order: permutation-invariant
    if not weighted:
        return sum(universe[k].f1 for k in ordered) / len(ordered)
    support = {k: universe[k].tp + universe[k].fn for k in ordered}
    total = sum(support.values())
    if total == 0:
        return 0.0
    return sum(universe[k].f1 * support[k] for k in ordered) / total


@dataclass
class EvalReport:
    per_class: dict[int, ClassCounts]
    macro_f1: float
    weighted_f1: float

    @staticmethod
    def build(counts: dict[int, ClassCounts],
              num_classes: int | None = None) -> "EvalReport":
        return EvalReport(
            per_class=dict(sorted(counts.items())),
            macro_f1=macro_f1(counts, num_classes=num_classes),
            weighted_f1=macro_f1(counts, num_classes=num_classes, weighted=True),
        )


def evaluate(detections: Iterable["Detection"], gt: Iterable[GroundTruthEvent],
             num_classes: int | None = None) -> EvalReport:
    return EvalReport.build(match(detections, gt), num_classes=num_classes)


# ---------------------------------------------------------------------------
# Ground-truth and report files.

def read_gt_csv(path: str | Path) -> list[GroundTruthEvent]:
    path = Path(path)
    events = []
    with path.open(newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0] == "video_id":
                continue
            if len(row) != 4:
                raise ValueError(f"{path}: malformed ground-truth row {row!r}")
            events.append(GroundTruthEvent(video_id=row[0], class_id=int(row[1]),
                                           t_start=float(row[2]), t_end=float(row[3])))
    return events


def write_gt_csv(path: str | Path, events: list[GroundTruthEvent]) -> None:
    lines = ["video_id,class_id,t_start,t_end"]
    for e in events:
        lines.append(f"{e.video_id},{e.class_id},{e.t_start:.9g},{e.t_end:.9g}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_report_csv(path: str | Path, report: EvalReport) -> None:
    lines = ["class_id,tp,fp,fn,precision,recall,f1"]
    for class_id, c in report.per_class.items():
        lines.append(f"{class_id},{c.tp},{c.fp},{c.fn},"
                     f"{c.precision:.9g},{c.recall:.9g},{c.f1:.9g}")
    lines.append(f"macro_f1,,,,,,{report.macro_f1:.9g}")
    Path(path).write_text("\n".join(lines) + "\n")


def format_report(report: EvalReport) -> str:
    rows = [f"{'class':>6} {'tp':>5} {'fp':>5} {'fn':>5} "
            f"{'precision':>10} {'recall':>10} {'f1':>10}"]
    for class_id, c in report.per_class.items():
        rows.append(f"{class_id:>6} {c.tp:>5} {c.fp:>5} {c.fn:>5} "
                    f"{c.precision:>10.4f} {c.recall:>10.4f} {c.f1:>10.4f}")
    rows.append(f"macro_f1 = {report.macro_f1:.4f}  (support-weighted: {report.weighted_f1:.4f})")
    return "\n".join(rows)
