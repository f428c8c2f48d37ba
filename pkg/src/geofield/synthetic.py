"""Analytic test scenes: constant-density primitives with closed-form renders.

Every primitive is a homogeneous emissive medium, so transmittance, color,
expected depth, and visibility along any ray have exact exponential-integral
solutions. These renders are the independent oracle that the learned field
and the quadrature renderer are checked against; nothing here shares code
with the field module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry, imaging
from .geometry import Intrinsics, Pose, look_at, project_points

RAY_EPS = 1e-9


@dataclass
class Sphere:
    center: np.ndarray
    radius: float
    color: np.ndarray
    density: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        self.color = np.asarray(self.color, dtype=np.float64)
        if self.radius <= 0 or self.density < 0:
            raise ValueError("radius must be positive and density nonnegative")

    def intervals(self, o, d):
        """Entry/exit params per ray: (t0, t1, hit), each (n,)."""
        oc = o - self.center
        a = np.einsum("ij,ij->i", d, d)
        b = 2.0 * np.einsum("ij,ij->i", d, oc)
        c = np.einsum("ij,ij->i", oc, oc) - self.radius ** 2
        disc = b * b - 4.0 * a * c
        hit = disc > 0
        sq = np.sqrt(np.maximum(disc, 0.0))
        t0 = (-b - sq) / (2.0 * a)
        t1 = (-b + sq) / (2.0 * a)
        hit &= t1 > RAY_EPS
        return t0, t1, hit

    def surface_area(self):
        return 4.0 * np.pi * self.radius ** 2

    def sample_surface(self, n, rng):
        v = rng.normal(size=(n, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return self.center + self.radius * v


@dataclass
class Box:
    lo: np.ndarray
    hi: np.ndarray
    color: np.ndarray
    density: float

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        self.color = np.asarray(self.color, dtype=np.float64)
        if np.any(self.hi <= self.lo):
            raise ValueError("box needs lo < hi on every axis")
        if self.density < 0:
            raise ValueError("density must be nonnegative")

    def intervals(self, o, d):
        safe = np.where(np.abs(d) > 1e-15, d, 1.0)
        ta = (self.lo - o) / safe
        tb = (self.hi - o) / safe
        lo_t = np.minimum(ta, tb)
        hi_t = np.maximum(ta, tb)
        # a zero direction component hits iff the origin sits inside the slab
        inside = (o >= self.lo) & (o <= self.hi)
        degen = np.abs(d) <= 1e-15
        lo_t = np.where(degen, np.where(inside, -np.inf, np.inf), lo_t)
        hi_t = np.where(degen, np.where(inside, np.inf, -np.inf), hi_t)
        t0 = lo_t.max(axis=1)
        t1 = hi_t.min(axis=1)
        hit = (t0 < t1) & (t1 > RAY_EPS)
        return t0, t1, hit

    def surface_area(self):
        e = self.hi - self.lo
        return 2.0 * (e[0] * e[1] + e[1] * e[2] + e[0] * e[2])

    def sample_surface(self, n, rng):
        e = self.hi - self.lo
        # axis-pair areas for the two faces normal to each axis
        areas = np.array([e[1] * e[2], e[0] * e[2], e[0] * e[1]])
        probs = np.repeat(areas, 2) / (2.0 * areas.sum())
        face = rng.choice(6, size=n, p=probs)
        u = rng.uniform(size=(n, 3))
        pts = self.lo + u * e
        axis = face // 2
        side = face % 2
        bound = np.where(side[:, None] == 0, self.lo, self.hi)
        pts[np.arange(n), axis] = bound[np.arange(n), axis]
        return pts


@dataclass
class SyntheticScene:
    """Collection of primitives plus the integration band used by training."""

    primitives: list
    near: float
    far: float

    def __post_init__(self):
        if not self.primitives:
            raise ValueError("scene needs at least one primitive")
        if not (0.0 < self.near < self.far):
            raise ValueError(f"need 0 < near < far, got ({self.near}, {self.far})")

    def intervals(self, o, d):
        """Stacked per-primitive intervals: (k, n) arrays t0, t1, hit."""
        outs = [p.intervals(o, d) for p in self.primitives]
        t0 = np.stack([x[0] for x in outs])
        t1 = np.stack([x[1] for x in outs])
        hit = np.stack([x[2] for x in outs])
        return t0, t1, hit

    def bounding_box(self):
        los, his = [], []
        for p in self.primitives:
            if isinstance(p, Sphere):
                los.append(p.center - p.radius)
                his.append(p.center + p.radius)
            else:
                los.append(p.lo)
                his.append(p.hi)
        return np.min(los, axis=0), np.max(his, axis=0)

    def diameter(self):
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(hi - lo))


def _segment_depth_mass(a, sigma, length):
    """Integral of t sigma e^{-sigma (t - a)} over [a, a + length]."""
    e = np.exp(-sigma * length)
    one_minus_e = -np.expm1(-sigma * length)
    return a * one_minus_e + (one_minus_e - e * sigma * length) / sigma


def integrate_rays(scene, origins, dirs):
    """Exact volume rendering of the scene along rays.

    Returns (color (n, 3), depth (n,), opacity (n,)). Depth is the
    opacity-normalized expected ray parameter; rays with opacity below
    1e-6 get the invalid sentinel 0. Overlapping primitives mix by
    density-weighted emission.
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    n = dirs.shape[0]
    t0s, t1s, hits = scene.intervals(origins, dirs)
    t0s = np.maximum(t0s, RAY_EPS)
    dens = np.array([p.density for p in scene.primitives])
    cols = np.stack([p.color for p in scene.primitives])

    color = np.zeros((n, 3))
    depth = np.zeros(n)
    opacity = np.zeros(n)
    for r in range(n):
        idx = np.nonzero(hits[:, r])[0]
        if idx.size == 0:
            continue
        a = t0s[idx, r]
        b = t1s[idx, r]
        events = np.unique(np.concatenate([a, b]))
        trans = 1.0
        col = np.zeros(3)
        mass = 0.0
        for e0, e1 in zip(events[:-1], events[1:]):
            cover = (a <= e0 + 1e-12) & (b >= e1 - 1e-12)
            sig = float(dens[idx][cover].sum())
            if sig <= 0.0:
                continue
            seg_col = (dens[idx][cover, None] * cols[idx][cover]).sum(0) / sig
            length = e1 - e0
            absorbed = -np.expm1(-sig * length)
            col += seg_col * trans * absorbed
            mass += trans * _segment_depth_mass(e0, sig, length)
            trans *= np.exp(-sig * length)
        opa = 1.0 - trans
        color[r] = col
        opacity[r] = opa
        depth[r] = mass / opa if opa > 1e-6 else 0.0
    return color, depth, opacity


def transmittance_to(scene, origins, points, shrink=1e-6):
    """Fraction of light surviving from each origin to each point.

    The segment is shortened by `shrink` (parameter units) at the far end
    so a point lying exactly on a surface is not occluded by itself.
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    d = points - origins
    t0s, t1s, hits = scene.intervals(np.broadcast_to(origins, d.shape), d)
    upper = 1.0 - shrink
    lo = np.clip(t0s, RAY_EPS, upper)
    hi = np.clip(t1s, RAY_EPS, upper)
    lengths = np.where(hits, np.maximum(hi - lo, 0.0), 0.0)
    dens = np.array([p.density for p in scene.primitives])[:, None]
    scale = np.linalg.norm(d, axis=1)[None, :]
    optical = (dens * lengths * scale).sum(axis=0)
    return np.exp(-optical)


def render_ground_truth(scene, intrinsics, pose):
    """Closed-form render at integer pixel centers.

    Returns (Image, depth (h, w), opacity (h, w)); depth 0 marks rays
    that hit nothing.
    """
    h, w = intrinsics.height, intrinsics.width
    uu, vv = np.meshgrid(np.arange(w), np.arange(h))
    ps = np.stack([uu.ravel(), vv.ravel()], axis=1).astype(np.float64)
    from .field import pixel_rays  # ray convention lives in one place
    origins, dirs = pixel_rays(ps, intrinsics, pose)
    color, depth, opacity = integrate_rays(scene, origins, dirs)
    img = imaging.Image(np.clip(color, 0.0, 1.0).reshape(h, w, 3))
    return img, depth.reshape(h, w), opacity.reshape(h, w)


# -- ground-truth correspondences ----------------------------------------


def _surface_samples(scene, n, rng):
    areas = np.array([p.surface_area() for p in scene.primitives])
    counts = rng.multinomial(n, areas / areas.sum())
    pts = [p.sample_surface(c, rng) for p, c in zip(scene.primitives, counts) if c]
    return np.concatenate(pts, axis=0)


def visible_in_camera(scene, intrinsics, pose, pts,
                      min_transmittance=0.98, depth_rtol=0.02):
    """Pixels and a visibility mask for world points in one camera.

    A point counts as visible when it projects in bounds, the path from
    the camera is nearly unoccluded, and the rendered depth along its
    pixel ray agrees with the point's camera depth (rejects silhouette
    grazes and back faces).
    """
    pix, z, valid = project_points(pts, intrinsics, pose)
    valid = valid & (pix[:, 0] >= 0) & (pix[:, 0] <= intrinsics.width - 1) \
        & (pix[:, 1] >= 0) & (pix[:, 1] <= intrinsics.height - 1)
    if valid.any():
        trans = transmittance_to(scene, pose.t[None], pts[valid])
        ok = trans >= min_transmittance
        sub = np.where(valid)[0]
        valid[sub[~ok]] = False
    if valid.any():
        from .field import pixel_rays
        sub = np.where(valid)[0]
        o, d = pixel_rays(pix[sub], intrinsics, pose)
        _, depth, _ = integrate_rays(scene, o, d)
        ok = np.abs(depth - z[sub]) <= depth_rtol * z[sub]
        valid[sub[~ok]] = False
    return pix, valid


def toy_match(scene, cameras, count, rng):
    """Three-view-consistent correspondences from known scene geometry.

    cameras is a sequence of three (Intrinsics, Pose) pairs; returns
    (m, 6) float pixels [u_ref v_ref u_i v_i u_j v_j] with m <= count.
    """
    if len(cameras) != 3:
        raise ValueError("toy_match needs exactly three cameras")
    pts = _surface_samples(scene, count * 6, rng)
    pix_all = []
    ok = np.ones(len(pts), dtype=bool)
    for intr, pose in cameras:
        pix, valid = visible_in_camera(scene, intr, pose, pts)
        pix_all.append(pix)
        ok &= valid
    rows = np.concatenate([p[ok] for p in pix_all], axis=1)
    if rows.shape[0] > count:
        keep = rng.choice(rows.shape[0], size=count, replace=False)
        rows = rows[np.sort(keep)]
    return rows


# -- presets --------------------------------------------------------------

WALL_EXTENT = 3.0
WALL_Z = (2.8, 3.0)
WALL_TILES = 10
WALL_DENSITY = 60.0


def _tile_colors(rng, n, amp=0.13, jitter=0.012):
    """Smooth per-tile palette: low-frequency ramps plus tiny jitter.

    Neighboring tiles stay within a small color distance so epipolar
    color gating keeps true correspondences, while the jitter makes
    tiles locally distinguishable.
    """
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    freqs = [(1.0, 0.4), (0.5, 1.1), (0.9, -0.7)]
    phases = [0.0, 2.1, 4.2]
    chans = []
    for (fi, fj), ph in zip(freqs, phases):
        base = 0.5 + amp * np.sin(2.0 * np.pi * (fi * ii + fj * jj) / n + ph)
        chans.append(base + rng.uniform(-jitter, jitter, size=base.shape))
    return np.clip(np.stack(chans, axis=-1), 0.05, 0.95)


def tiled_wall(rng, amp=0.13, jitter=0.012):
    """Square wall of flat-colored tile boxes behind the scene."""
    n = WALL_TILES
    size = 2.0 * WALL_EXTENT / n
    colors = _tile_colors(rng, n, amp=amp, jitter=jitter)
    tiles = []
    for i in range(n):
        for j in range(n):
            lo = np.array([-WALL_EXTENT + i * size, -WALL_EXTENT + j * size, WALL_Z[0]])
            hi = lo + np.array([size, size, WALL_Z[1] - WALL_Z[0]])
            tiles.append(Box(lo, hi, colors[i, j], WALL_DENSITY))
    return tiles


def preset_cameras(n_images, seed, width=64, height=64):
    """Arc of inward-looking cameras in front of the wall.

    Focal length and arc width are matched so every ray of every camera
    lands on scene geometry (the wall backs the whole frustum).
    """
    rng = np.random.default_rng([seed, 101])
    cams = []
    xs = np.linspace(-0.8, 0.8, n_images)
    for k in range(n_images):
        eye = np.array([
            xs[k],
            0.22 * np.sin(2.4 * k + 0.3) + rng.uniform(-0.04, 0.04),
            -3.1 + 0.18 * np.cos(1.7 * k) + rng.uniform(-0.04, 0.04),
        ])
        target = np.array([
            rng.uniform(-0.12, 0.12), rng.uniform(-0.12, 0.12), 2.9,
        ])
        pose = look_at(eye, target)
        intr = Intrinsics(fx=80.0, fy=80.0, cx=(width - 1) / 2.0,
                          cy=(height - 1) / 2.0, width=width, height=height)
        cams.append((intr, pose))
    return cams


def two_spheres_scene(seed):
    """Two opaque spheres floating in front of the tiled wall."""
    rng = np.random.default_rng([seed, 7])
    prims = tiled_wall(rng)
    prims.append(Sphere([-0.55, 0.18, 1.55], 0.42, [0.82, 0.31, 0.23], 80.0))
    prims.append(Sphere([0.62, -0.22, 2.05], 0.5, [0.2, 0.4, 0.78], 80.0))
    return SyntheticScene(prims, near=3.2, far=7.6)


def textured_box_scene(seed):
    """Tiled wall plus one foreground box, for warp and epipolar checks."""
    rng = np.random.default_rng([seed, 8])
    prims = tiled_wall(rng)
    prims.append(Box([-0.15, -0.75, 1.5], [0.55, -0.05, 2.2],
                     [0.75, 0.68, 0.25], 70.0))
    return SyntheticScene(prims, near=3.2, far=7.6)


PRESETS = {
    "two-spheres": two_spheres_scene,
    "textured-box": textured_box_scene,
}


def build_preset(name, seed=0, n_images=9):
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    scene = PRESETS[name](seed)
    cams = preset_cameras(n_images, seed)
    return scene, cams


# -- dataset emission -----------------------------------------------------


def _match_blocks(scene, cams, train_idx, names, seed,
                  samples=2600, max_matches=220, min_matches=8):
    """One match block per training view against its best covisible pair."""
    rng = np.random.default_rng([seed, 55])
    pts = _surface_samples(scene, samples, rng)
    pix = np.zeros((len(cams), len(pts), 2))
    vis = np.zeros((len(cams), len(pts)), dtype=bool)
    for c in train_idx:
        intr, pose = cams[c]
        pix[c], vis[c] = visible_in_camera(scene, intr, pose, pts)

    blocks = []
    for ref in train_idx:
        best = None
        others = [c for c in train_idx if c != ref]
        for ai in range(len(others)):
            for aj in range(ai + 1, len(others)):
                i, j = others[ai], others[aj]
                mask = vis[ref] & vis[i] & vis[j]
                score = int(mask.sum())
                if best is None or score > best[0]:
                    best = (score, i, j, mask)
        score, i, j, mask = best
        if score < min_matches:
            continue
        rows = np.concatenate([pix[ref][mask], pix[i][mask], pix[j][mask]], axis=1)
        if rows.shape[0] > max_matches:
            keep = rng.choice(rows.shape[0], size=max_matches, replace=False)
            rows = rows[np.sort(keep)]
        blocks.append(((names[ref], names[i], names[j]), rows))
    return blocks


def write_dataset(root, preset, seed=0, n_images=9):
    """Materialize a preset as a full on-disk dataset.

    Layout: images/*.png, depth/*.pfm (0 marks empty pixels), poses.txt,
    matches.txt between training views, and scene.cfg with the shared
    integration band and scene diameter.
    """
    import pathlib

    from . import data

    root = pathlib.Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "depth").mkdir(parents=True, exist_ok=True)
    scene, cams = build_preset(preset, seed=seed, n_images=n_images)
    names = [f"img_{k:03d}.png" for k in range(n_images)]

    records = []
    for name, (intr, pose) in zip(names, cams):
        img, depth, _ = render_ground_truth(scene, intr, pose)
        imaging.write_png(root / "images" / name, img)
        imaging.write_pfm(root / "depth" / (name[:-4] + ".pfm"), depth)
        records.append(geometry.PoseRecord(name, intr.fx, intr.fy, intr.cx,
                                           intr.cy, pose))
    geometry.write_poses(root / "poses.txt", records)

    train_idx, _ = data.train_test_split(n_images)
    blocks = _match_blocks(scene, cams, train_idx, names, seed)
    data.write_matches(root / "matches.txt", blocks)

    with open(root / "scene.cfg", "w") as fh:
        fh.write(f"near={scene.near}\n")
        fh.write(f"far={scene.far}\n")
        fh.write(f"seed={seed}\n")
        fh.write(f"diameter={scene.diameter():.6f}\n")
    return root
