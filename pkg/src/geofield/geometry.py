"""Pinhole cameras, rigid poses, and two-view epipolar geometry.

Conventions used throughout the package:
  * camera frame: x right, y down, z forward (optical axis); depth is the
    camera-frame z coordinate, not ray length
  * global (per-image) poses are camera-to-world: r maps camera coords to
    world coords and t is the camera center in world coordinates
  * pixel coordinates are continuous, (u, v) = (column, row), with integer
    coordinates sitting exactly on pixel centers
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHONORMAL_TOL = 1e-9


class BehindCameraError(ValueError):
    """Point at or behind the camera plane, projection undefined."""


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics; all quantities in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got ({self.fx}, {self.fy})")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"bad image size ({self.width}, {self.height})")

    @property
    def matrix(self):
        """3x3 calibration matrix K."""
        return np.array([
            [self.fx, 0.0, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ])


@dataclass
class Pose:
    """Rigid transform x -> r @ x + t with a proper rotation r."""

    r: np.ndarray  # (3, 3)
    t: np.ndarray  # (3,)

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=np.float64)
        self.t = np.asarray(self.t, dtype=np.float64)
        if self.r.shape != (3, 3) or self.t.shape != (3,):
            raise ValueError(f"bad pose shapes {self.r.shape}, {self.t.shape}")
        err = np.abs(self.r.T @ self.r - np.eye(3)).max()
        if err > ORTHONORMAL_TOL:
            raise ValueError(f"rotation is not orthonormal (|r^T r - I| = {err:.3e})")
        det = np.linalg.det(self.r)
        if abs(det - 1.0) > ORTHONORMAL_TOL:
            raise ValueError(f"rotation must have det +1, got {det!r}")

    def apply(self, x):
        """Transform points, shape (3,) or (n, 3)."""
        x = np.asarray(x, dtype=np.float64)
        return x @ self.r.T + self.t

    def inverse(self):
        return Pose(self.r.T, -(self.r.T @ self.t))

    def compose(self, other):
        """self applied after other: (self @ other)(x) = self(other(x))."""
        return Pose(self.r @ other.r, self.r @ other.t + self.t)


def identity_pose():
    return Pose(np.eye(3), np.zeros(3))


def look_at(eye, target, up=(0.0, 1.0, 0.0)):
    """Camera-to-world pose for a camera at eye looking toward target.

    The camera y axis points against world up so images come out upright.
    """
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    nz = np.linalg.norm(z)
    if nz < 1e-12:
        raise ValueError("eye and target coincide")
    z = z / nz
    x = np.cross(-np.asarray(up, dtype=np.float64), z)
    nx = np.linalg.norm(x)
    if nx < 1e-9:
        raise ValueError("view direction is parallel to up")
    x = x / nx
    y = np.cross(z, x)
    return Pose(np.stack([x, y, z], axis=1), eye)


def relative_pose(ref, other):
    """Transform taking ref-camera coordinates to other-camera coordinates.

    Both arguments are global camera-to-world poses.
    """
    r = other.r.T @ ref.r
    t = other.r.T @ (ref.t - other.t)
    return Pose(r, t)


def project_points(xs, intrinsics, pose, z_eps=1e-9):
    """Project world points through a camera with the given global pose.

    Returns (pixels (n, 2), depths (n,), valid (n,)); entries with camera
    z <= z_eps are marked invalid and their pixels are unusable.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    cam = (xs - pose.t) @ pose.r  # == r.T @ (x - t) per point
    z = cam[:, 2]
    valid = z > z_eps
    zsafe = np.where(valid, z, 1.0)
    u = intrinsics.fx * cam[:, 0] / zsafe + intrinsics.cx
    v = intrinsics.fy * cam[:, 1] / zsafe + intrinsics.cy
    return np.stack([u, v], axis=1), z, valid


def project(x, intrinsics, pose):
    """Single-point projection; raises BehindCameraError instead of masking."""
    pix, z, valid = project_points(np.asarray(x, dtype=np.float64)[None], intrinsics, pose)
    if not valid[0]:
        raise BehindCameraError(f"point has camera depth {z[0]:.3e}")
    return pix[0]


def back_project(p, depth, intrinsics, pose):
    """World point seen at pixel p with camera-frame depth (z), shape-matched.

    p may be (2,) or (n, 2) with depth scalar or (n,).
    """
    p = np.asarray(p, dtype=np.float64)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    depth = np.broadcast_to(np.asarray(depth, dtype=np.float64), p.shape[0])
    x = (p[:, 0] - intrinsics.cx) / intrinsics.fx
    y = (p[:, 1] - intrinsics.cy) / intrinsics.fy
    cam = np.stack([x * depth, y * depth, depth], axis=1)
    world = cam @ pose.r.T + pose.t
    return world[0] if single else world


def fundamental_matrix(intrinsics, rel):
    """Fundamental matrix of a relative pose (ref camera -> other camera).

    For a world point seen at p_ref and p_other (homogeneous pixels),
    p_other^T F p_ref = 0. Scaled to unit Frobenius norm.
    """
    t = rel.t
    tx = np.array([
        [0.0, -t[2], t[1]],
        [t[2], 0.0, -t[0]],
        [-t[1], t[0], 0.0],
    ])
    k_inv = np.linalg.inv(intrinsics.matrix)
    f = k_inv.T @ tx @ rel.r @ k_inv
    norm = np.linalg.norm(f)
    if norm < 1e-12:
        raise ValueError("degenerate epipolar geometry (zero baseline)")
    return f / norm


@dataclass
class EpipolarCandidateSet:
    """Pixels on an epipolar line whose color matches the reference pixel."""

    ref_pixel: np.ndarray    # (2,)
    line: np.ndarray         # (a, b, c) with a^2 + b^2 = 1
    points: np.ndarray       # (k, 2) surviving pixels in the other image
    colors: np.ndarray       # (k, c) their sampled colors
    n_line_points: int       # pixels walked before color filtering

    def __len__(self):
        return self.points.shape[0]


def _clip_line_to_rect(line, width, height, eps=1e-9):
    """Parameter interval of a unit-normalized line inside the pixel rect.

    Returns (origin, direction, s_lo, s_hi) or None if the line misses
    [0, width-1] x [0, height-1].
    """
    a, b, c = line
    origin = np.array([-a * c, -b * c])  # closest point to (0, 0)
    direction = np.array([-b, a])
    ss = []
    for axis, bound in ((0, 0.0), (0, width - 1.0), (1, 0.0), (1, height - 1.0)):
        if abs(direction[axis]) < 1e-14:
            continue
        s = (bound - origin[axis]) / direction[axis]
        p = origin + s * direction
        o = 1 - axis
        hi = (width - 1.0) if o == 0 else (height - 1.0)
        if -eps <= p[o] <= hi + eps:
            ss.append(s)
    if len(ss) < 2:
        return None
    s_lo, s_hi = min(ss), max(ss)
    if s_hi - s_lo < eps:
        return None
    return origin, direction, s_lo, s_hi


def epipolar_candidates(p_ref, ref_image, other_image, f_matrix, threshold):
    """Walk p_ref's epipolar line in the other image and filter by color.

    The line is stepped at one-pixel spacing across its span inside the
    image; points whose bilinearly sampled color is within `threshold`
    (Euclidean RGB distance) of the reference pixel color survive.
    """
    from . import imaging  # local import, imaging depends on nothing here

    p_ref = np.asarray(p_ref, dtype=np.float64)
    ref_color = imaging.bilinear_sample(ref_image, p_ref)
    line = f_matrix @ np.array([p_ref[0], p_ref[1], 1.0])
    norm = np.hypot(line[0], line[1])
    empty = EpipolarCandidateSet(
        p_ref, np.zeros(3), np.zeros((0, 2)), np.zeros((0, ref_color.shape[0])), 0)
    if norm < 1e-12:
        return empty  # ref pixel is the epipole, direction undefined
    line = line / norm

    h, w = imaging.array_of(other_image).shape[:2]
    span = _clip_line_to_rect(line, w, h)
    if span is None:
        return empty
    origin, direction, s_lo, s_hi = span
    steps = np.arange(s_lo, s_hi + 1e-9, 1.0)
    pts = origin[None, :] + steps[:, None] * direction[None, :]
    # guard against epsilon overshoot from the rect clip
    pts[:, 0] = np.clip(pts[:, 0], 0.0, w - 1.0)
    pts[:, 1] = np.clip(pts[:, 1], 0.0, h - 1.0)

    colors = imaging.bilinear_sample_many(other_image, pts)
    keep = np.linalg.norm(colors - ref_color[None, :], axis=1) <= threshold
    return EpipolarCandidateSet(p_ref, line, pts[keep], colors[keep], len(steps))


@dataclass
class PoseRecord:
    """One poses.txt entry; width and height come from the image file."""

    name: str
    fx: float
    fy: float
    cx: float
    cy: float
    pose: Pose


def read_poses(path):
    """Parse a poses.txt file into PoseRecords (blank lines and # skipped)."""
    records = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 17:
                raise ValueError(f"{path}:{lineno}: expected 17 fields, got {len(parts)}")
            name = parts[0]
            vals = [float(p) for p in parts[1:]]
            r = np.array(vals[4:13]).reshape(3, 3)
            t = np.array(vals[13:16])
            records.append(PoseRecord(name, vals[0], vals[1], vals[2], vals[3], Pose(r, t)))
    return records


def write_poses(path, records):
    with open(path, "w") as fh:
        for rec in records:
            if any(ch.isspace() for ch in rec.name):
                raise ValueError(f"image name {rec.name!r} contains whitespace")
            nums = [rec.fx, rec.fy, rec.cx, rec.cy]
            nums += list(rec.pose.r.reshape(-1)) + list(rec.pose.t)
            fh.write(rec.name + " " + " ".join(f"{v:.17g}" for v in nums) + "\n")
