"""Flat key=value dataset configuration with bundled per-dataset presets.

A config file holds one ``key = value`` pair per line; ``#`` starts a
comment.  A ``preset = <name>`` line pulls the named bundled preset first,
with explicit keys overriding it.  Two values are deferred sentinels:
``foreground_threshold = calibrate`` (resolved by the calibrate command)
and ``min_cell_diameter = measure`` (resolved from training annotations).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from .dataprep import NORMALIZE_METHODS, WeightParams
from .errors import DataError, UsageError
from .markerseg import PipelineParams

PRESETS = ("dic-hela", "fluo-sim", "phc-psc")
MARKER_SOURCES = ("eroded_full", "weak")


def parse_kv(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` lines; later keys override earlier ones."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_preset(name: str) -> dict[str, str]:
    if name not in PRESETS:
        raise UsageError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("cellws.presets").joinpath(f"{name}.cfg").read_text()
    return parse_kv(text)


def _as_float(raw: str, key: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise UsageError(f"config key {key}: expected a number, got {raw!r}") from None


def _as_int(raw: str, key: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"config key {key}: expected an integer, got {raw!r}") from None


def _as_bool(raw: str, key: str) -> bool:
    low = raw.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise UsageError(f"config key {key}: expected true/false, got {raw!r}")


@dataclass(frozen=True)
class DatasetConfig:
    """Everything the pipeline needs to know about one dataset."""

    root: Path | None = None
    sequences: tuple[str, ...] = ("01",)
    normalization: str = "he"
    marker_source: str = "eroded_full"
    size_ratio: float | None = None
    marker_threshold: float = 0.6
    contrast: int = 5
    foreground_threshold: int | None = None  # None = calibrate first
    min_cell_diameter: float | None = None  # None = measure from training cells
    marker_diameter: float | None = None
    connectivity: int = 8
    remove_border: bool = False
    seed: int = 0
    weight_magnitude: float = 0.075
    weight_border: float = 20.0
    weight_balance: str = "none"
    oracle_sigma: float = 2.0
    oracle_size_ratio: float = 0.6
    oracle_noise: float = 0.0

    def __post_init__(self):
        if self.normalization not in NORMALIZE_METHODS:
            raise UsageError(f"unknown normalization {self.normalization!r}")
        if self.marker_source not in MARKER_SOURCES:
            raise UsageError(f"unknown marker_source {self.marker_source!r}")
        if not 0.0 <= self.oracle_noise < 0.5:
            raise UsageError("oracle_noise must lie in [0, 0.5)")
        if self.oracle_sigma < 0:
            raise UsageError("oracle_sigma must be >= 0")

    def pipeline_params(self) -> PipelineParams:
        if self.foreground_threshold is None:
            raise UsageError(
                "foreground_threshold is unresolved; run the calibrate command first"
            )
        try:
            return PipelineParams(
                contrast=self.contrast,
                foreground_threshold=self.foreground_threshold,
                marker_threshold=self.marker_threshold,
                size_ratio=self.size_ratio,
                min_cell_diameter=self.min_cell_diameter,
                marker_diameter=self.marker_diameter,
                connectivity=self.connectivity,
                remove_border=self.remove_border,
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from None

    def weight_params(self) -> WeightParams:
        try:
            return WeightParams(
                magnitude=self.weight_magnitude,
                border_width=self.weight_border,
                balance=self.weight_balance,
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from None

    def require_root(self) -> Path:
        if self.root is None:
            raise UsageError("config has no dataset root")
        if not self.root.is_dir():
            raise DataError(f"dataset root does not exist: {self.root}")
        return self.root


def config_from_dict(kv: dict[str, str], base_dir: Path | None = None) -> DatasetConfig:
    kv = dict(kv)
    if "preset" in kv:
        preset = load_preset(kv.pop("preset"))
        preset.update(kv)
        kv = preset

    fields: dict = {}
    if "root" in kv:
        root = Path(kv.pop("root"))
        if base_dir is not None and not root.is_absolute():
            root = Path(os.path.normpath(base_dir / root))
        fields["root"] = root
    if "sequences" in kv:
        fields["sequences"] = tuple(
            s.strip() for s in kv.pop("sequences").split(",") if s.strip()
        )
    for key in ("normalization", "marker_source", "weight_balance"):
        if key in kv:
            fields[key] = kv.pop(key)
    for key in (
        "size_ratio",
        "marker_threshold",
        "weight_magnitude",
        "weight_border",
        "oracle_sigma",
        "oracle_size_ratio",
        "oracle_noise",
        "marker_diameter",
    ):
        if key in kv:
            fields[key] = _as_float(kv.pop(key), key)
    if "min_cell_diameter" in kv:
        raw = kv.pop("min_cell_diameter")
        fields["min_cell_diameter"] = None if raw == "measure" else _as_float(raw, "min_cell_diameter")
    if "foreground_threshold" in kv:
        raw = kv.pop("foreground_threshold")
        fields["foreground_threshold"] = None if raw == "calibrate" else _as_int(raw, "foreground_threshold")
    for key in ("contrast", "connectivity", "seed"):
        if key in kv:
            fields[key] = _as_int(kv.pop(key), key)
    if "remove_border" in kv:
        fields["remove_border"] = _as_bool(kv.pop("remove_border"), "remove_border")
    if kv:
        raise UsageError(f"unknown config keys: {', '.join(sorted(kv))}")
    return DatasetConfig(**fields)


def load_config(path: str | Path, check_root: bool = True) -> DatasetConfig:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    cfg = config_from_dict(parse_kv(path.read_text()), base_dir=path.parent)
    if check_root and cfg.root is not None and not cfg.root.is_dir():
        raise DataError(f"dataset root does not exist: {cfg.root}")
    return cfg


def save_config(cfg: DatasetConfig, path: str | Path) -> None:
    """Write a config in canonical key order (comments are not preserved).

    The root is stored relative to the config file, mirroring how load
    resolves it, so a saved config reloads to the same dataset."""
    path = Path(path)
    lines = []
    if cfg.root is not None:
        try:
            root = os.path.relpath(cfg.root, path.parent)
        except ValueError:
            root = str(cfg.root)
        lines.append(f"root = {root}")
    lines.append(f"sequences = {','.join(cfg.sequences)}")
    lines.append(f"normalization = {cfg.normalization}")
    lines.append(f"marker_source = {cfg.marker_source}")
    if cfg.size_ratio is not None:
        lines.append(f"size_ratio = {cfg.size_ratio}")
    lines.append(f"marker_threshold = {cfg.marker_threshold}")
    lines.append(f"contrast = {cfg.contrast}")
    ft = "calibrate" if cfg.foreground_threshold is None else cfg.foreground_threshold
    lines.append(f"foreground_threshold = {ft}")
    md = "measure" if cfg.min_cell_diameter is None else cfg.min_cell_diameter
    lines.append(f"min_cell_diameter = {md}")
    if cfg.marker_diameter is not None:
        lines.append(f"marker_diameter = {cfg.marker_diameter}")
    lines.append(f"connectivity = {cfg.connectivity}")
    lines.append(f"remove_border = {str(cfg.remove_border).lower()}")
    lines.append(f"seed = {cfg.seed}")
    lines.append(f"weight_magnitude = {cfg.weight_magnitude}")
    lines.append(f"weight_border = {cfg.weight_border}")
    lines.append(f"weight_balance = {cfg.weight_balance}")
    lines.append(f"oracle_sigma = {cfg.oracle_sigma}")
    lines.append(f"oracle_size_ratio = {cfg.oracle_size_ratio}")
    lines.append(f"oracle_noise = {cfg.oracle_noise}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def with_updates(cfg: DatasetConfig, **changes) -> DatasetConfig:
    return replace(cfg, **changes)
