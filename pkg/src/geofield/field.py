"""Volume rendering along camera rays.

Rays are parameterized with unnormalized directions whose camera-frame z
component is 1, so the ray parameter t is exactly camera-frame depth and
composited depths line up with geometry.back_project. Quadrature follows
the standard transmittance rule over piecewise-constant density, with the
final interval closed at t_far.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine, network
from .engine import value_of


@dataclass
class Ray:
    """Single ray with its integration bounds."""

    o: np.ndarray
    d: np.ndarray
    t_near: float
    t_far: float

    def __post_init__(self):
        self.o = np.asarray(self.o, dtype=np.float64)
        self.d = np.asarray(self.d, dtype=np.float64)
        if self.o.shape != (3,) or self.d.shape != (3,):
            raise ValueError("ray origin and direction must be 3-vectors")
        if np.linalg.norm(self.d) < 1e-12:
            raise ValueError("ray direction is zero")
        if not (0.0 < self.t_near < self.t_far):
            raise ValueError(f"need 0 < t_near < t_far, got ({self.t_near}, {self.t_far})")


def pixel_rays(ps, intrinsics, pose):
    """World-space rays through continuous pixel coords ps, shape (n, 2).

    Returns (origins (n, 3), directions (n, 3)); directions have unit z in
    the camera frame so t measures camera depth.
    """
    ps = np.atleast_2d(np.asarray(ps, dtype=np.float64))
    x = (ps[:, 0] - intrinsics.cx) / intrinsics.fx
    y = (ps[:, 1] - intrinsics.cy) / intrinsics.fy
    cam = np.stack([x, y, np.ones_like(x)], axis=1)
    dirs = cam @ pose.r.T
    origins = np.broadcast_to(pose.t, dirs.shape).copy()
    return origins, dirs


def pixel_ray(p, intrinsics, pose, t_near, t_far):
    o, d = pixel_rays(np.asarray(p)[None], intrinsics, pose)
    return Ray(o[0], d[0], t_near, t_far)


def stratified_samples(t_near, t_far, n, count, rng):
    """One uniform draw per equal-width bin: (count, n), ascending rows."""
    if n < 1 or count < 1:
        raise ValueError("need at least one sample and one ray")
    edges = np.linspace(t_near, t_far, n + 1)
    width = (t_far - t_near) / n
    u = rng.uniform(0.0, 1.0, size=(count, n))
    return edges[:-1][None, :] + u * width


def importance_samples(t_vals, weights, n, rng):
    """Draw n extra samples per ray from the coarse weight profile.

    The pdf is piecewise constant over bins between adjacent coarse
    midpoints (interior weights only, floored at 1e-5), sampled by
    inverse CDF. Returns the merged, sorted (rows, s + n) array; inputs
    are plain arrays, so no gradient flows through sample positions.
    """
    t_vals = np.asarray(t_vals, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    rows, s = t_vals.shape
    if s < 4:
        raise ValueError("importance sampling needs at least 4 coarse samples")
    mids = 0.5 * (t_vals[:, 1:] + t_vals[:, :-1])          # (rows, s-1)
    w = weights[:, 1:-1] + 1e-5                             # (rows, s-2) bins
    pdf = w / w.sum(axis=1, keepdims=True)
    cdf = np.concatenate([np.zeros((rows, 1)), np.cumsum(pdf, axis=1)], axis=1)

    u = rng.uniform(0.0, 1.0, size=(rows, n))
    # row-offset trick keeps searchsorted a single vectorized call
    offs = 2.0 * np.arange(rows)[:, None]
    idx = np.searchsorted((cdf + offs).ravel(), (u + offs).ravel(), side="right")
    idx = idx.reshape(rows, n) - np.arange(rows)[:, None] * cdf.shape[1]
    k = np.clip(idx - 1, 0, s - 3)

    cdf_lo = np.take_along_axis(cdf, k, axis=1)
    denom = np.maximum(np.take_along_axis(pdf, k, axis=1), 1e-12)
    frac = np.clip((u - cdf_lo) / denom, 0.0, 1.0)
    lo = np.take_along_axis(mids, k, axis=1)
    hi = np.take_along_axis(mids, k + 1, axis=1)
    t_new = lo + frac * (hi - lo)
    return np.sort(np.concatenate([t_vals, t_new], axis=1), axis=1)


def make_deltas(t_vals, t_far):
    """Inter-sample spacings with the last interval closed at t_far."""
    t_vals = np.asarray(t_vals)
    return np.concatenate([np.diff(t_vals, axis=-1),
                           t_far - t_vals[..., -1:]], axis=-1)


@dataclass
class RaySampleBatch:
    """Inputs to compositing for a batch of rays sharing sample count."""

    t_vals: np.ndarray   # (rows, s), ascending
    deltas: np.ndarray   # (rows, s)
    sigmas: object       # (rows, s) Var or array
    colors: object       # (rows, s, 3) Var or array


@dataclass
class RenderResult:
    """Per-ray compositing outputs; Vars when the field was taped."""

    color: object          # (rows, 3)
    depth: object          # (rows,)
    point: object          # (rows, 3) expected 3-d position
    weight_sum: object     # (rows,)
    weights: object        # (rows, s)
    transmittance: object  # (rows, s)

    def degenerate_mask(self, eps=1e-6):
        """Rays whose weights have all but vanished; geometry is unusable."""
        return value_of(self.weight_sum) < eps


DEPTH_NORM_EPS = 1e-8


def composite(batch, origins, dirs):
    """Transmittance-weighted quadrature over one batch of rays.

    weights w_j = T_j (1 - exp(-sigma_j delta_j)) with T_j the exclusive
    product of survival factors; color, depth, and the expected 3-d point
    are weight averages. Depth alone is normalized by the clamped weight
    sum so empty rays stay finite.
    """
    t_vals = np.asarray(value_of(batch.t_vals))
    deltas = np.asarray(value_of(batch.deltas))
    colors = batch.colors
    rows, s = t_vals.shape

    sd = engine.mul(batch.sigmas, deltas)  # Var even for constant inputs
    trans = (engine.exclusive_cumsum(sd, axis=-1) * -1.0).exp()
    alpha = 1.0 - (sd * -1.0).exp()
    w = trans * alpha

    color = (w.reshape(rows, s, 1) * colors).sum(axis=1)
    wsum = w.sum(axis=1)
    depth = (w * t_vals).sum(axis=1) / engine.maximum(wsum, DEPTH_NORM_EPS)

    origins = np.atleast_2d(np.asarray(value_of(origins), dtype=t_vals.dtype))
    dirs = np.atleast_2d(np.asarray(value_of(dirs), dtype=t_vals.dtype))
    pts = origins[:, None, :] + t_vals[:, :, None] * dirs[:, None, :]
    point = (w.reshape(rows, s, 1) * pts).sum(axis=1)

    return RenderResult(color=color, depth=depth, point=point,
                        weight_sum=wsum, weights=w, transmittance=trans)


@dataclass
class RenderOutputs:
    """Coarse and fine passes for one ray batch."""

    coarse: RenderResult
    fine: RenderResult
    t_coarse: np.ndarray
    t_fine: np.ndarray


def _field_pass(weights, origins, dirs, t_vals, t_far):
    """Evaluate one network over all samples and composite."""
    cfg = weights.config
    dtype = value_of(weights.trunk[0][0]).dtype
    rows, s = t_vals.shape
    pts = origins[:, None, :] + t_vals[:, :, None] * dirs[:, None, :]
    unit = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    x_enc = network.encode(pts.reshape(-1, 3).astype(dtype), cfg.pos_freqs)
    d_enc = network.encode(
        np.repeat(unit.astype(dtype), s, axis=0), cfg.dir_freqs)
    rgb, sigma = network.forward(weights, x_enc, d_enc)
    batch = RaySampleBatch(
        t_vals=t_vals.astype(dtype),
        deltas=make_deltas(t_vals, t_far).astype(dtype),
        sigmas=sigma.reshape(rows, s),
        colors=rgb.reshape(rows, s, 3),
    )
    return composite(batch, origins.astype(dtype), dirs.astype(dtype))


def render_field(coarse, fine, origins, dirs, t_near, t_far,
                 n_coarse, n_fine, rng):
    """Hierarchical render: stratified coarse pass, then a fine pass over
    the union of coarse and importance samples. Sample placement uses
    detached coarse weights, so gradients never flow through positions.
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    rows = dirs.shape[0]
    t_c = stratified_samples(t_near, t_far, n_coarse, rows, rng)
    res_c = _field_pass(coarse, origins, dirs, t_c, t_far)
    t_f = importance_samples(t_c, value_of(res_c.weights), n_fine, rng)
    res_f = _field_pass(fine, origins, dirs, t_f, t_far)
    return RenderOutputs(coarse=res_c, fine=res_f, t_coarse=t_c, t_fine=t_f)


def render_image(coarse, fine, intrinsics, pose, t_near, t_far,
                 n_coarse, n_fine, rng, chunk=1024):
    """Full-frame render at integer pixel centers, without a tape.

    Returns float64 arrays: rgb (h, w, 3), depth (h, w), and accumulated
    opacity (h, w).
    """
    h, w = intrinsics.height, intrinsics.width
    uu, vv = np.meshgrid(np.arange(w), np.arange(h))
    ps = np.stack([uu.ravel(), vv.ravel()], axis=1).astype(np.float64)
    origins, dirs = pixel_rays(ps, intrinsics, pose)
    rgb = np.zeros((h * w, 3))
    depth = np.zeros(h * w)
    acc = np.zeros(h * w)
    for lo in range(0, h * w, chunk):
        hi = min(lo + chunk, h * w)
        out = render_field(coarse, fine, origins[lo:hi], dirs[lo:hi],
                           t_near, t_far, n_coarse, n_fine, rng)
        rgb[lo:hi] = value_of(out.fine.color)
        depth[lo:hi] = value_of(out.fine.depth)
        acc[lo:hi] = value_of(out.fine.weight_sum)
    return rgb.reshape(h, w, 3), depth.reshape(h, w), acc.reshape(h, w)
