"""Dataset loading: images, poses, matches, the train/test split, triplets."""

from __future__ import annotations

import logging
import pathlib
from dataclasses import dataclass

import numpy as np

from . import geometry, imaging
from .geometry import Intrinsics

log = logging.getLogger(__name__)


def train_test_split(n_images):
    """Every eighth image (1-indexed, sorted order) is held out for test."""
    test = [i for i in range(n_images) if (i + 1) % 8 == 0]
    train = [i for i in range(n_images) if (i + 1) % 8 != 0]
    return train, test


def read_scene_cfg(path):
    """key=value pairs; near and far are required, extras pass through."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    for key in ("near", "far"):
        if key not in values:
            raise ValueError(f"{path}: missing required key {key!r}")
    near = float(values["near"])
    far = float(values["far"])
    if not (0.0 < near < far):
        raise ValueError(f"{path}: need 0 < near < far, got ({near}, {far})")
    return values


@dataclass
class SceneDataset:
    """Everything the trainer needs from one dataset directory."""

    root: pathlib.Path
    names: list
    images: list          # imaging.Image, aligned with names
    intrinsics: list
    poses: list
    near: float
    far: float
    train_indices: list
    test_indices: list
    depths: list          # per-image (h, w) array or None
    extras: dict

    def __len__(self):
        return len(self.names)

    def index_of(self, name):
        return self.names.index(name)

    def camera(self, idx):
        return self.intrinsics[idx], self.poses[idx]

    @property
    def diameter(self):
        val = self.extras.get("diameter")
        return float(val) if val is not None else None


def load_dataset(root):
    """Read a dataset directory: scene.cfg, poses.txt, images/, depth/.

    Images are ordered by sorted filename; the split keys off that order.
    """
    root = pathlib.Path(root)
    cfg = read_scene_cfg(root / "scene.cfg")
    records = {r.name: r for r in geometry.read_poses(root / "poses.txt")}

    names = sorted(p.name for p in (root / "images").glob("*.png"))
    if not names:
        raise ValueError(f"no PNG images under {root / 'images'}")
    missing = [n for n in names if n not in records]
    if missing:
        raise ValueError(f"{root}: images without pose entries: {missing}")

    images, intrinsics, poses, depths = [], [], [], []
    for name in names:
        img = imaging.read_png(root / "images" / name)
        rec = records[name]
        images.append(img)
        intrinsics.append(Intrinsics(fx=rec.fx, fy=rec.fy, cx=rec.cx, cy=rec.cy,
                                     width=img.width, height=img.height))
        poses.append(rec.pose)
        dpath = root / "depth" / (name[:-4] + ".pfm")
        depths.append(imaging.read_pfm(dpath) if dpath.exists() else None)

    train_idx, test_idx = train_test_split(len(names))
    extras = {k: v for k, v in cfg.items() if k not in ("near", "far")}
    return SceneDataset(root=root, names=names, images=images,
                        intrinsics=intrinsics, poses=poses,
                        near=float(cfg["near"]), far=float(cfg["far"]),
                        train_indices=train_idx, test_indices=test_idx,
                        depths=depths, extras=extras)


# -- matches --------------------------------------------------------------


def write_matches(path, blocks):
    """Blocks of (names, rows): header line `triplet ref i j`, then one
    line of six floats per match."""
    with open(path, "w") as fh:
        for (ref, vi, vj), rows in blocks:
            rows = np.asarray(rows, dtype=np.float64)
            if rows.ndim != 2 or rows.shape[1] != 6:
                raise ValueError(f"match rows must be (m, 6), got {rows.shape}")
            fh.write(f"triplet {ref} {vi} {vj}\n")
            for row in rows:
                fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
            fh.write("\n")


def read_matches(path):
    """Parse matches.txt into [(names, (m, 6) array), ...]."""
    blocks = []
    names = None
    rows = []

    def flush():
        nonlocal names, rows
        if names is not None:
            blocks.append((names, np.array(rows, dtype=np.float64).reshape(-1, 6)))
        names, rows = None, []

    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("triplet"):
                flush()
                parts = line.split()
                if len(parts) != 4:
                    raise ValueError(f"{path}:{lineno}: bad triplet header {line!r}")
                names = tuple(parts[1:])
                continue
            if names is None:
                raise ValueError(f"{path}:{lineno}: match row before any header")
            vals = line.split()
            if len(vals) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 floats, got {len(vals)}")
            rows.append([float(v) for v in vals])
    flush()
    return blocks


@dataclass
class TrainTriplet:
    """A reference view, two support views, and their shared matches."""

    ref: int
    view_i: int
    view_j: int
    pixels: np.ndarray        # (m, 6) [ref, i, j] x (u, v)
    mask_rect: imaging.MaskRect


def build_triplets(dataset, blocks, min_matches=8):
    """Validated training triplets from parsed match blocks.

    Blocks touching unknown or held-out images, with too few matches, or
    with out-of-bounds pixels are skipped with a log message; nothing
    downstream ever sees them.
    """
    triplets = []
    train = set(dataset.train_indices)
    for names, rows in blocks:
        try:
            idx = [dataset.index_of(n) for n in names]
        except ValueError:
            log.warning("matches reference unknown image %s; block skipped", names)
            continue
        if len(set(idx)) != 3:
            log.warning("triplet %s reuses an image; block skipped", names)
            continue
        if any(k not in train for k in idx):
            log.warning("triplet %s touches held-out images; block skipped", names)
            continue
        if rows.shape[0] < min_matches:
            log.warning("triplet %s has %d matches (< %d); block skipped",
                        names, rows.shape[0], min_matches)
            continue
        ok = True
        for slot, k in enumerate(idx):
            intr = dataset.intrinsics[k]
            uv = rows[:, 2 * slot:2 * slot + 2]
            if (np.any(uv[:, 0] < 0) or np.any(uv[:, 0] > intr.width - 1)
                    or np.any(uv[:, 1] < 0) or np.any(uv[:, 1] > intr.height - 1)):
                log.warning("triplet %s has out-of-bounds pixels; block skipped",
                            names)
                ok = False
                break
        if not ok:
            continue
        rect = imaging.mask_rect_from_matches(rows[:, :2])
        triplets.append(TrainTriplet(idx[0], idx[1], idx[2], rows, rect))
    return triplets
