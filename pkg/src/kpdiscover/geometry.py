"""Differentiable geometric kernels: heatmap normalization, coordinate
extraction, Gaussian rendering, flipping, and thin-plate-spline warping.

Conventions used throughout the package:

* Keypoints are tensors of shape ``(..., K, 2)`` holding ``(u, v)``
  coordinates in ``[0, 1] x [0, 1]``; ``u`` is horizontal, ``v`` vertical.
* Heatmaps are tensors of shape ``(..., K, H, W)``. Grid positions are the
  cell centers, i.e. column ``j`` sits at ``u = (j + 0.5) / W``. This keeps
  horizontal flipping as ``u -> 1 - u`` and makes sigma independent of the
  rendering resolution.

All operations are pure functions of their inputs and safe to call
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

__all__ = [
    "Heatmaps",
    "TpsWarp",
    "spatial_softmax",
    "soft_argmax",
    "render_gaussian",
    "flip_keypoints",
    "make_tps",
    "tps_from_control_points",
    "apply_warp",
    "grid_centers",
]


@dataclass
class Heatmaps:
    """A stack of per-part spatial maps plus a flag telling whether the
    values are raw logits or per-channel probabilities."""

    values: torch.Tensor  # (..., K, H, W)
    kind: str  # "logits" | "normalized"

    def __post_init__(self):
        if self.kind not in ("logits", "normalized"):
            raise ValueError(f"unknown heatmap kind: {self.kind!r}")
        if self.values.ndim < 3:
            raise ValueError("heatmaps must have shape (..., K, H, W)")


def grid_centers(height: int, width: int, dtype=torch.float32, device=None):
    """Return ``(u, v)`` cell-center coordinate maps, each ``(H, W)``."""
    us = (torch.arange(width, dtype=dtype, device=device) + 0.5) / width
    vs = (torch.arange(height, dtype=dtype, device=device) + 0.5) / height
    gv, gu = torch.meshgrid(vs, us, indexing="ij")
    return gu, gv


def spatial_softmax(logits, temperature: float = 1.0) -> Heatmaps:
    """Per-channel softmax over the full H x W grid.

    Accepts a raw tensor or a ``Heatmaps`` of kind ``"logits"``. Each output
    channel is nonnegative and sums to one.
    """
    if isinstance(logits, Heatmaps):
        if logits.kind != "logits":
            raise ValueError("spatial_softmax expects logits, got normalized maps")
        logits = logits.values
    if not torch.isfinite(logits).all():
        flat = logits.reshape(-1, logits.shape[-2] * logits.shape[-1])
        bad = (~torch.isfinite(flat)).any(dim=-1).nonzero()[0].item()
        raise ValueError(f"non-finite logits in heatmap channel {bad}")
    h, w = logits.shape[-2:]
    flat = (logits / temperature).reshape(*logits.shape[:-2], h * w)
    probs = F.softmax(flat, dim=-1).reshape(logits.shape)
    return Heatmaps(probs, "normalized")


def soft_argmax(heatmaps: Heatmaps) -> torch.Tensor:
    """Expected ``(u, v)`` coordinate under each probability channel.

    Returns ``(..., K, 2)``. Rejects heatmaps that have not been normalized;
    callers must apply :func:`spatial_softmax` first.
    """
    if not isinstance(heatmaps, Heatmaps):
        raise TypeError("soft_argmax takes a Heatmaps instance")
    if heatmaps.kind != "normalized":
        raise ValueError("soft_argmax requires normalized heatmaps, got logits")
    vals = heatmaps.values
    h, w = vals.shape[-2:]
    gu, gv = grid_centers(h, w, dtype=vals.dtype, device=vals.device)
    u = (vals * gu).sum(dim=(-2, -1))
    v = (vals * gv).sum(dim=(-2, -1))
    return torch.stack([u, v], dim=-1)


def render_gaussian(keypoints: torch.Tensor, sigma: float, height: int, width: int) -> torch.Tensor:
    """Render one isotropic Gaussian per keypoint on an ``H x W`` grid.

    The map for part k is ``(1 / sqrt(2 pi sigma^2)) * exp(-|x - p_k|^2 /
    (2 sigma^2))`` with distances measured in normalized coordinates, so the
    peak value depends on sigma only. Returns ``(..., K, H, W)``.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    keypoints = torch.as_tensor(keypoints)
    gu, gv = grid_centers(height, width, dtype=keypoints.dtype, device=keypoints.device)
    du = gu - keypoints[..., 0:1].unsqueeze(-1)  # (..., K, H, W)
    dv = gv - keypoints[..., 1:2].unsqueeze(-1)
    coeff = 1.0 / np.sqrt(2.0 * np.pi * sigma * sigma)
    return coeff * torch.exp(-(du * du + dv * dv) / (2.0 * sigma * sigma))


def flip_keypoints(keypoints: torch.Tensor) -> torch.Tensor:
    """Mirror keypoints horizontally: ``u -> 1 - u``, ``v`` unchanged.

    Channel order is preserved; no left/right part permutation is applied.
    """
    keypoints = torch.as_tensor(keypoints)
    flipped = keypoints.clone()
    flipped[..., 0] = 1.0 - keypoints[..., 0]
    return flipped


def _tps_kernel(r2: np.ndarray) -> np.ndarray:
    # U(r) = r^2 log r = 0.5 r^2 log r^2, with U(0) = 0.
    out = np.zeros_like(r2)
    mask = r2 > 0
    out[mask] = 0.5 * r2[mask] * np.log(r2[mask])
    return out


def _solve_tps(src: np.ndarray, dst: np.ndarray):
    """Solve the TPS interpolation system mapping src points onto dst points.

    Returns ``(weights (N, 2), affine (3, 2))`` such that
    ``f(x) = [1, x] @ affine + U(|x - src|) @ weights`` interpolates exactly.
    """
    n = src.shape[0]
    d2 = ((src[:, None, :] - src[None, :, :]) ** 2).sum(-1)
    k = _tps_kernel(d2)
    p = np.concatenate([np.ones((n, 1)), src], axis=1)
    lhs = np.zeros((n + 3, n + 3))
    lhs[:n, :n] = k
    lhs[:n, n:] = p
    lhs[n:, :n] = p.T
    rhs = np.concatenate([dst, np.zeros((3, 2))], axis=0)
    try:
        sol = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"singular TPS system (degenerate control grid): {exc}") from exc
    return sol[:n], sol[n:]


def _eval_tps(points: np.ndarray, src: np.ndarray, weights: np.ndarray, affine: np.ndarray):
    d2 = ((points[:, None, :] - src[None, :, :]) ** 2).sum(-1)
    u = _tps_kernel(d2)
    p = np.concatenate([np.ones((points.shape[0], 1)), points], axis=1)
    return p @ affine + u @ weights


@dataclass
class TpsWarp:
    """A thin-plate-spline deformation of the unit square.

    ``transform_points`` evaluates the forward map (control_src lands exactly
    on control_dst). ``field`` is the dense backward *sampling displacement*
    used for image warping: the output pixel at normalized position x reads
    the source image at ``x + field[x]``, so image content at control_src
    moves to control_dst.
    """

    control_src: np.ndarray  # (N, 2)
    control_dst: np.ndarray  # (N, 2)
    field: torch.Tensor  # (H, W, 2), last dim (du, dv)
    affine: np.ndarray  # (2, 3) forward affine part, rows (u, v)
    _fwd_weights: np.ndarray = None
    _fwd_affine: np.ndarray = None

    def transform_points(self, points) -> np.ndarray:
        """Forward-map ``(..., 2)`` normalized points through the warp."""
        pts = np.asarray(points, dtype=np.float64)
        flat = pts.reshape(-1, 2)
        out = _eval_tps(flat, self.control_src, self._fwd_weights, self._fwd_affine)
        return out.reshape(pts.shape)


def tps_from_control_points(src, dst, height: int, width: int) -> TpsWarp:
    """Solve the TPS systems for explicit control-point pairs and
    materialize the dense sampling field at ``height x width``."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    fwd_w, fwd_a = _solve_tps(src, dst)
    bwd_w, bwd_a = _solve_tps(dst, src)

    us = (np.arange(width) + 0.5) / width
    vs = (np.arange(height) + 0.5) / height
    pix_u, pix_v = np.meshgrid(us, vs)
    pix = np.stack([pix_u.ravel(), pix_v.ravel()], axis=1)
    sample_at = _eval_tps(pix, dst, bwd_w, bwd_a)
    field = (sample_at - pix).reshape(height, width, 2)

    return TpsWarp(
        control_src=src,
        control_dst=dst,
        field=torch.from_numpy(field.astype(np.float32)),
        affine=fwd_a.T.copy(),
        _fwd_weights=fwd_w,
        _fwd_affine=fwd_a,
    )


def make_tps(
    grid_size: int,
    scale: float,
    rng: np.random.Generator,
    height: int,
    width: int,
) -> TpsWarp:
    """Build a random TPS warp from a ``grid_size x grid_size`` control grid.

    Each control point is displaced by an iid uniform perturbation in
    ``[-scale, scale]^2``. ``scale`` must stay below half the control-grid
    spacing so control points cannot cross. The dense field is materialized
    at ``height x width`` for :func:`apply_warp`.
    """
    if grid_size < 2:
        raise ValueError(f"grid_size must be >= 2, got {grid_size}")
    spacing = 1.0 / (grid_size - 1)
    if not 0.0 <= scale < 0.5 * spacing:
        raise ValueError(f"scale must lie in [0, {0.5 * spacing:.4g}) for grid_size={grid_size}")
    axis = np.linspace(0.0, 1.0, grid_size)
    gu, gv = np.meshgrid(axis, axis)
    src = np.stack([gu.ravel(), gv.ravel()], axis=1)
    dst = src + rng.uniform(-scale, scale, size=src.shape)
    return tps_from_control_points(src, dst, height, width)


def apply_warp(image: torch.Tensor, warp: TpsWarp) -> torch.Tensor:
    """Bilinearly sample ``image`` through the warp's dense field.

    ``image`` is ``(C, H, W)`` or ``(B, C, H, W)`` and must match the field
    resolution. Samples falling outside the image clamp to the border.
    """
    image = torch.as_tensor(image)
    squeeze = image.ndim == 3
    if squeeze:
        image = image.unsqueeze(0)
    if image.ndim != 4:
        raise ValueError("image must be (C, H, W) or (B, C, H, W)")
    h, w = image.shape[-2:]
    if warp.field.shape[:2] != (h, w):
        raise ValueError(
            f"warp field is {tuple(warp.field.shape[:2])} but image is {(h, w)}"
        )
    field = warp.field.to(dtype=image.dtype, device=image.device)
    gu, gv = grid_centers(h, w, dtype=image.dtype, device=image.device)
    sample_u = gu + field[..., 0]
    sample_v = gv + field[..., 1]
    grid = torch.stack([2.0 * sample_u - 1.0, 2.0 * sample_v - 1.0], dim=-1)
    grid = grid.unsqueeze(0).expand(image.shape[0], -1, -1, -1)
    out = F.grid_sample(image, grid, mode="bilinear", padding_mode="border", align_corners=False)
    return out.squeeze(0) if squeeze else out
