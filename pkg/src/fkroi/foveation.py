"""Sampling-density gain and token accounting for global + ROI views."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .records import Rect

DEFAULT_PATCH = 16


def global_footprint(w0: float, wg: float, w_roi: float) -> float:
    """Width in pixels that a raw-frame region of ``w_roi`` occupies after downsampling ``w0 -> wg``."""
    return wg * w_roi / w0


def density_gain(w0: float, wg: float, w_roi: float, wr: float) -> float:
    """Local detail scale of the crop-then-resize branch relative to the global view.

    With ``s = wg / w0`` this is ``wr / (s * w_roi)``, evaluated as
    ``wr * w0 / (wg * w_roi)`` to avoid rounding ``s`` first.
    """
    if min(w0, wg, w_roi, wr) <= 0:
        raise ValueError("all widths must be positive")
    if wg > w0:
        raise ValueError(f"global width {wg} exceeds raw width {w0}")
    return wr * w0 / (wg * w_roi)


@dataclass(frozen=True)
class View:
    resolution: int
    is_roi: bool = False
    footprint: Rect | None = None  # raw-frame rect; None means full frame


@dataclass(frozen=True)
class TokenStats:
    tokens_per_view: tuple[int, ...]
    n_total: int
    roi_tokens: int
    roi_token_fraction: Fraction
    duplication_overlap: float

    @property
    def n_per_view(self) -> int | None:
        """Tokens per view when every view has the same count, else ``None``."""
        if self.tokens_per_view and len(set(self.tokens_per_view)) == 1:
            return self.tokens_per_view[0]
        return None


def union_coverage(rects: Sequence[Rect], raw_size: tuple[int, int]) -> float:
    """Fraction of the ``(width, height)`` raw frame covered by the union of ``rects``."""
    W, H = raw_size
    mask = np.zeros((H, W), dtype=bool)
    for u0, v0, w, h in rects:
        x0, x1 = max(u0, 0), min(u0 + w, W)
        y0, y1 = max(v0, 0), min(v0 + h, H)
        if x1 > x0 and y1 > y0:
            mask[y0:y1, x0:x1] = True
    return int(mask.sum()) / (W * H)


def token_accounting(views: Sequence[View], patch: int = DEFAULT_PATCH, raw_size: tuple[int, int] = (1280, 720)) -> TokenStats:
    """Count patch tokens per square view and the ROI share of the sequence.

    ``duplication_overlap`` is the raw-frame area fraction covered by ROI
    footprints, a geometric diagnostic of duplicated content only.
    """
    per_view = []
    for i, v in enumerate(views):
        if v.resolution <= 0 or v.resolution % patch:
            raise ValueError(f"view {i}: resolution {v.resolution} not divisible by patch {patch}")
        per_view.append((v.resolution // patch) ** 2)
    total = sum(per_view)
    roi = sum(n for n, v in zip(per_view, views) if v.is_roi)
    W, H = raw_size
    footprints = [v.footprint or Rect(0, 0, W, H) for v in views if v.is_roi]
    return TokenStats(
        tokens_per_view=tuple(per_view),
        n_total=total,
        roi_tokens=roi,
        roi_token_fraction=Fraction(roi, total) if total else Fraction(0),
        duplication_overlap=union_coverage(footprints, raw_size),
    )
