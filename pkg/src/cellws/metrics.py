"""Segmentation quality measures used by the cell tracking benchmarks.

A reference region matches the segment covering more than half of its
pixels; at most one such segment can exist.  SEG averages the Jaccard index
of matched pairs (zero for unmatched references), DET is the normalized
detection cost over matching events, and their mean is the overall score.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import raster

__all__ = [
    "jaccard",
    "FrameMatch",
    "match_frame",
    "seg_measure",
    "det_measure",
    "op_csb",
    "DetEvents",
    "EvalReport",
    "evaluate_frames",
]

# detection event penalties: missed reference, spurious segment, needed split
FN_COST = 10
FP_COST = 1
NS_COST = 5


def jaccard(a: np.ndarray, b: np.ndarray) -> float:
    """Jaccard index of two masks; the first must be nonempty."""
    a = raster.as_mask(a)
    b = raster.as_mask(b)
    if a.shape != b.shape:
        raise ValueError("masks must share one shape")
    if not a.any():
        raise ValueError("reference mask is empty")
    inter = int(np.logical_and(a, b).sum())
    union = int(np.logical_or(a, b).sum())
    return inter / union


@dataclass(frozen=True)
class FrameMatch:
    """Majority-overlap matching of one frame.

    ``ref_ids``/``seg_ids`` are the original label values.  ``ref_match``
    holds, per reference, the index into ``seg_ids`` of its matching
    segment or -1; ``ref_jaccard`` the corresponding scores (0 when
    unmatched); ``seg_match_counts`` how many references each segment
    majority-covers.
    """

    ref_ids: np.ndarray
    seg_ids: np.ndarray
    ref_match: np.ndarray
    ref_jaccard: np.ndarray
    seg_match_counts: np.ndarray


def match_frame(refs: np.ndarray, segs: np.ndarray) -> FrameMatch:
    """Build the majority-overlap match table for one frame."""
    refs = raster.as_labels(refs)
    segs = raster.as_labels(segs)
    if refs.shape != segs.shape:
        raise ValueError("reference and result label maps must share one shape")

    ref_ids, ref_inv = np.unique(refs, return_inverse=True)
    seg_ids, seg_inv = np.unique(segs, return_inverse=True)
    # force a background row/column so ids and matrix indices line up
    if ref_ids.size == 0 or ref_ids[0] != 0:
        ref_ids = np.concatenate([[0], ref_ids])
        ref_inv = ref_inv + 1
    if seg_ids.size == 0 or seg_ids[0] != 0:
        seg_ids = np.concatenate([[0], seg_ids])
        seg_inv = seg_inv + 1
    nr = ref_ids.size
    ns = seg_ids.size
    pair = ref_inv.astype(np.int64) * ns + seg_inv
    counts = np.bincount(pair.ravel(), minlength=nr * ns).reshape(nr, ns)

    ref_sizes = counts.sum(axis=1)
    seg_sizes = counts.sum(axis=0)
    ref_match = np.full(nr - 1, -1, np.int64)
    ref_jac = np.zeros(nr - 1, np.float64)
    seg_match_counts = np.zeros(ns - 1, np.int64)
    for r in range(1, nr):
        if ns == 1:
            continue
        row = counts[r, 1:]
        s = int(np.argmax(row)) + 1
        if 2 * counts[r, s] > ref_sizes[r]:
            ref_match[r - 1] = s - 1
            union = ref_sizes[r] + seg_sizes[s] - counts[r, s]
            ref_jac[r - 1] = counts[r, s] / union
            seg_match_counts[s - 1] += 1
    return FrameMatch(
        ref_ids=ref_ids[1:],
        seg_ids=seg_ids[1:],
        ref_match=ref_match,
        ref_jaccard=ref_jac,
        seg_match_counts=seg_match_counts,
    )


@dataclass(frozen=True)
class DetEvents:
    """Counts of the three penalized detection events."""

    missed_refs: int = 0
    spurious_segs: int = 0
    needed_splits: int = 0

    def cost(self) -> int:
        return (
            FN_COST * self.missed_refs
            + FP_COST * self.spurious_segs
            + NS_COST * self.needed_splits
        )

    def __add__(self, other: "DetEvents") -> "DetEvents":
        return DetEvents(
            self.missed_refs + other.missed_refs,
            self.spurious_segs + other.spurious_segs,
            self.needed_splits + other.needed_splits,
        )


def _events(match: FrameMatch) -> DetEvents:
    return DetEvents(
        missed_refs=int((match.ref_match < 0).sum()),
        spurious_segs=int((match.seg_match_counts == 0).sum()),
        needed_splits=int(np.maximum(match.seg_match_counts - 1, 0).sum()),
    )


def seg_measure(refs: np.ndarray, segs: np.ndarray) -> tuple[float, list[dict]]:
    """Mean Jaccard over reference regions with the majority-match rule.

    Returns the score and a per-region detail list (reference id, matched
    segment id or 0, jaccard).
    """
    match = match_frame(refs, segs)
    if match.ref_ids.size == 0:
        raise ValueError("reference map has no regions")
    detail = [
        {
            "ref": int(match.ref_ids[i]),
            "seg": int(match.seg_ids[match.ref_match[i]]) if match.ref_match[i] >= 0 else 0,
            "jaccard": float(match.ref_jaccard[i]),
        }
        for i in range(match.ref_ids.size)
    ]
    return float(match.ref_jaccard.mean()), detail


def det_measure(refs: np.ndarray, segs: np.ndarray) -> tuple[float, DetEvents]:
    """Normalized detection accuracy from penalized matching events."""
    match = match_frame(refs, segs)
    n_refs = match.ref_ids.size
    if n_refs == 0:
        raise ValueError("reference map has no regions")
    ev = _events(match)
    det = max(0.0, 1.0 - ev.cost() / (FN_COST * n_refs))
    return det, ev


def op_csb(seg: float, det: float) -> float:
    """Overall performance: arithmetic mean of the two measures."""
    if not (0.0 <= seg <= 1.0 and 0.0 <= det <= 1.0):
        raise ValueError("seg and det must lie in [0, 1]")
    return (seg + det) / 2.0


@dataclass(frozen=True)
class EvalReport:
    """Sequence-level evaluation: pooled scores plus diagnostics."""

    seg: float
    det: float
    op_csb: float
    per_region_jaccard: list[float]
    det_event_counts: dict[str, int]
    n_refs: int
    n_frames: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "seg": self.seg,
                "det": self.det,
                "op_csb": self.op_csb,
                "per_region_jaccard": self.per_region_jaccard,
                "det_event_counts": self.det_event_counts,
                "n_refs": self.n_refs,
                "n_frames": self.n_frames,
            },
            indent=2,
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "EvalReport":
        d = json.loads(text)
        return EvalReport(
            seg=d["seg"],
            det=d["det"],
            op_csb=d["op_csb"],
            per_region_jaccard=list(d["per_region_jaccard"]),
            det_event_counts=dict(d["det_event_counts"]),
            n_refs=d["n_refs"],
            n_frames=d["n_frames"],
        )

    def csv_line(self) -> str:
        ev = self.det_event_counts
        return (
            f"{self.seg:.6f},{self.det:.6f},{self.op_csb:.6f},"
            f"{self.n_refs},{self.n_frames},{ev['fn']},{ev['fp']},{ev['ns']}"
        )

    CSV_HEADER = "seg,det,op_csb,n_refs,n_frames,fn,fp,ns"


def evaluate_frames(frames) -> EvalReport:
    """Pool matches over (reference, result) frame pairs into one report.

    Regions pool across frames for SEG (mean over all reference regions);
    detection costs sum across frames and normalize by the pooled reference
    count, with the floor applied once at the end.
    """
    scores: list[float] = []
    events = DetEvents()
    n_frames = 0
    for refs, segs in frames:
        match = match_frame(refs, segs)
        scores.extend(match.ref_jaccard.tolist())
        events = events + _events(match)
        n_frames += 1
    if n_frames == 0:
        raise ValueError("no frames to evaluate")
    n_refs = len(scores)
    if n_refs == 0:
        raise ValueError("no reference regions across all frames")
    seg = float(np.mean(scores))
    det = max(0.0, 1.0 - events.cost() / (FN_COST * n_refs))
    return EvalReport(
        seg=seg,
        det=det,
        op_csb=op_csb(seg, det),
        per_region_jaccard=[float(s) for s in scores],
        det_event_counts={
            "fn": events.missed_refs,
            "fp": events.spurious_segs,
            "ns": events.needed_splits,
        },
        n_refs=n_refs,
        n_frames=n_frames,
    )
