"""Ideal ratio / binary masks on CI-resolution power grids, and mask application."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ci_frontend import TfGrid

MASK_KINDS = ("irm", "ibm", "estimated")


class MaskError(ValueError):
    pass


@dataclass
class Mask:
    values: np.ndarray
    kind: str = "estimated"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise MaskError("mask must be a 2-D frames x bins matrix")
        if self.kind not in MASK_KINDS:
            raise MaskError(f"unknown mask kind {self.kind!r}")
        if np.any(~np.isfinite(v)) or np.any(v < 0) or np.any(v > 1):
            raise MaskError("mask values must lie in [0, 1]")
        if self.kind == "ibm" and not np.all((v == 0) | (v == 1)):
            raise MaskError("binary mask must be 0/1")
        self.values = v

    @property
    def shape(self):
        return self.values.shape


def _check_pair(a: TfGrid, b: TfGrid):
    if a.values.shape != b.values.shape:
        raise MaskError(f"shape mismatch: {a.values.shape} vs {b.values.shape}")


def compute_irm(direct: TfGrid, residual: TfGrid) -> Mask:
    """sqrt(X^2 / (X^2 + N^2)); bins where both powers vanish get 0."""
    _check_pair(direct, residual)
    x2, n2 = direct.values, residual.values
    total = x2 + n2
    out = np.zeros_like(total)
    nz = total > 0
    out[nz] = np.sqrt(x2[nz] / total[nz])
    return Mask(np.clip(out, 0.0, 1.0), "irm")


def overall_srr_db(direct: TfGrid, residual: TfGrid) -> float:
    e_res = float(np.sum(residual.values))
    if e_res <= 0:
        raise MaskError("residual has zero total energy: binary mask undefined")
    e_dir = float(np.sum(direct.values))
    if e_dir <= 0:
        return -math.inf
    return 10.0 * math.log10(e_dir / e_res)


def compute_ibm(direct: TfGrid, residual: TfGrid, rel_threshold_db: float = -6.0) -> Mask:
    """Keep bins whose local SRR is at least the overall SRR plus the threshold."""
    _check_pair(direct, residual)
    threshold = overall_srr_db(direct, residual) + rel_threshold_db
    x2, n2 = direct.values, residual.values
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        local = 10.0 * np.log10(x2 / n2)
    local = np.where(n2 == 0, np.inf, local)
    local = np.where((x2 == 0) & (n2 > 0), -np.inf, local)
    return Mask((local >= threshold).astype(np.float64), "ibm")


def apply_mask(reverberant_mag: TfGrid, m: Mask) -> TfGrid:
    if reverberant_mag.values.shape != m.shape:
        raise MaskError(f"shape mismatch: {reverberant_mag.values.shape} vs {m.shape}")
    if reverberant_mag.kind != "amplitude":
        raise MaskError("masks apply to amplitude grids")
    return TfGrid(reverberant_mag.values * m.values, "amplitude")
