"""Cell Tracking Challenge directory layout.

A dataset root holds one directory per sequence (``01``, ``02``, ...) with
frames ``t*.tif``, ground truth under ``01_GT/SEG/man_seg*.tif`` (full
instance annotations) and ``01_GT/TRA/man_track*.tif`` (weak markers), and
results under ``01_RES/mask*.tif``.  Frames pair up by the number embedded
in the file name.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

_FRAME_RE = re.compile(r"(\d+)$")
_RASTER_SUFFIXES = (".tif", ".tiff", ".png")


def frame_id(path: str | Path) -> int:
    """Frame number embedded at the end of a raster file stem."""
    m = _FRAME_RE.search(Path(path).stem)
    if m is None:
        raise ValueError(f"no frame number in file name: {path}")
    return int(m.group(1))


def scan_frames(directory: str | Path, prefix: str) -> dict[int, Path]:
    """Map frame number -> path for rasters named ``<prefix><number>.<ext>``.

    Missing directory yields an empty mapping; ambiguous frame numbers are
    rejected.
    """
    directory = Path(directory)
    out: dict[int, Path] = {}
    if not directory.is_dir():
        return out
    for p in sorted(directory.iterdir()):
        if p.suffix.lower() not in _RASTER_SUFFIXES or not p.stem.startswith(prefix):
            continue
        fid = frame_id(p)
        if fid in out:
            raise ValueError(f"duplicate frame {fid} in {directory}")
        out[fid] = p
    return out


@dataclass(frozen=True)
class SequenceLayout:
    """Paths of one sequence inside a dataset root."""

    root: Path
    seq: str

    @property
    def image_dir(self) -> Path:
        return self.root / self.seq

    @property
    def seg_dir(self) -> Path:
        return self.root / f"{self.seq}_GT" / "SEG"

    @property
    def tra_dir(self) -> Path:
        return self.root / f"{self.seq}_GT" / "TRA"

    @property
    def res_dir(self) -> Path:
        return self.root / f"{self.seq}_RES"

    def images(self) -> dict[int, Path]:
        return scan_frames(self.image_dir, "t")

    def seg_annotations(self) -> dict[int, Path]:
        return scan_frames(self.seg_dir, "man_seg")

    def tra_annotations(self) -> dict[int, Path]:
        return scan_frames(self.tra_dir, "man_track")

    def result_masks(self) -> dict[int, Path]:
        return scan_frames(self.res_dir, "mask")


def list_sequences(root: str | Path) -> list[str]:
    """Sequence ids present under a dataset root (directories with frames
    that are not _GT/_RES side-directories)."""
    root = Path(root)
    out = []
    for p in sorted(root.iterdir()):
        if p.is_dir() and not p.name.endswith(("_GT", "_RES", "_PRED", "_PREP")):
            out.append(p.name)
    return out


def write_manifest(path: str | Path, rows: list[dict]) -> None:
    """Write one JSON object per line; key order fixed for stable hashes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_manifest(path: str | Path) -> list[dict]:
    with Path(path).open() as fh:
        return [json.loads(line) for line in fh if line.strip()]
