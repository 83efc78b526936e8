"""Contact transfer: depth lifting, cloud cleanup, semantic-pool rigid
registration, and 2D-to-3D contact mapping.

The registration half recovers the rigid transform between an object as it
appears in a generated image (metric depth estimate) and the same object in
the simulator (rendered depth).  Candidate pixel correspondences come with
similarity scores; a sampling loop draws one candidate per entry, fits a
rigid transform (SVD), refines it with ICP, and keeps the draw with the best
geometric overlap.  Contact pixels are then lifted, transformed, and snapped
to the simulated object surface.
"""

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

PROMPT_SUFFIX = ("The person has dark hair and is wearing casual clothes "
                 "such a shirt, jeans, and sneakers.")

ICP_MAX_ITERS = 50
ICP_TOL = 1.0e-6
ICP_GATE = 0.05          # correspondence rejection distance (m)
OVERLAP_EPS = 0.01       # inlier radius for the overlap score (m)


def build_prompt(predicate, remainder=""):
    """Image-generation prompt from an action predicate and its objects."""
    if not predicate:
        raise ValueError("empty predicate")
    action = f"{predicate}ing"
    scene = f"{action} {remainder}" if remainder else action
    return f"A scene of person {scene}. {PROMPT_SUFFIX}"


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got "
                             f"({self.fx}, {self.fy})")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")


def default_generated_intrinsics(width, height):
    """Assumed pinhole model for generated imagery: resolution as focal
    length, image center as principal point."""
    if width <= 0 or height <= 0:
        raise ValueError(f"invalid image size {width}x{height}")
    return CameraIntrinsics(fx=float(width), fy=float(height),
                            cx=width / 2.0, cy=height / 2.0,
                            width=width, height=height)


@dataclass
class PointCloud:
    points: np.ndarray                 # (n, 3)
    pixels: Optional[np.ndarray] = None  # (n, 2) source (u, v) per point

    def __post_init__(self):
        self.points = np.asarray(self.points, float).reshape(-1, 3)
        if self.pixels is not None:
            self.pixels = np.asarray(self.pixels, int).reshape(-1, 2)

    def __len__(self):
        return len(self.points)

    def pixel_index(self):
        """(u, v) -> row lookup for pixel-addressed clouds."""
        if self.pixels is None:
            raise ValueError("cloud carries no source pixels")
        return {(int(u), int(v)): i
                for i, (u, v) in enumerate(self.pixels)}


@dataclass(frozen=True)
class RigidTransform:
    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", np.asarray(self.R, float))
        object.__setattr__(self, "t", np.asarray(self.t, float).reshape(3))
        err = np.linalg.norm(self.R.T @ self.R - np.eye(3))
        if err > 1e-9 or np.linalg.det(self.R) < 0:
            raise ValueError(f"not a rotation (orthonormality error {err:.2e},"
                             f" det {np.linalg.det(self.R):.3f})")

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    def apply(self, pts):
        return np.asarray(pts, float) @ self.R.T + self.t

    def compose(self, other):
        """self ∘ other (apply `other` first)."""
        return RigidTransform(self.R @ other.R, self.R @ other.t + self.t)

    def inverse(self):
        return RigidTransform(self.R.T, -self.R.T @ self.t)


@dataclass
class PoolEntry:
    pixel: np.ndarray                # (2,) in the generated image
    candidates: np.ndarray           # (n, 2) in the simulated image
    scores: np.ndarray               # (n,) descending

    def __post_init__(self):
        self.pixel = np.asarray(self.pixel, int).reshape(2)
        self.candidates = np.asarray(self.candidates, int).reshape(-1, 2)
        self.scores = np.asarray(self.scores, float).reshape(-1)
        if len(self.candidates) != len(self.scores) or not len(self.scores):
            raise ValueError("candidate/score length mismatch")
        if np.any(np.diff(self.scores) > 0):
            raise ValueError("scores must be sorted descending")


@dataclass
class SemanticPool:
    entries: list = field(default_factory=list)

    def __post_init__(self):
        ns = {len(e.candidates) for e in self.entries}
        if len(ns) > 1:
            raise ValueError(f"candidate count differs across entries: {ns}")

    @classmethod
    def from_json(cls, path):
        data = json.loads(Path(path).read_text())
        return cls([PoolEntry(e["pixel"], e["candidates"], e["scores"])
                    for e in data["entries"]])

    def to_json(self, path):
        data = {"entries": [{"pixel": e.pixel.tolist(),
                             "candidates": e.candidates.tolist(),
                             "scores": e.scores.tolist()}
                            for e in self.entries]}
        Path(path).write_text(json.dumps(data, indent=1))


# ---------------------------------------------------------------------------
# depth lifting and cleanup


def lift(depth, mask, K: CameraIntrinsics):
    """Back-project masked valid depth pixels through the pinhole model."""
    depth = np.asarray(depth, float)
    mask = np.asarray(mask, bool)
    if depth.shape != mask.shape:
        raise ValueError(f"depth {depth.shape} vs mask {mask.shape}")
    if depth.shape != (K.height, K.width):
        raise ValueError(f"depth {depth.shape} vs intrinsics "
                         f"{(K.height, K.width)}")
    valid = mask & (depth > 0.0) & np.isfinite(depth)
    v, u = np.nonzero(valid)
    if len(u) == 0:
        raise ValueError("no valid masked depth pixels to lift")
    z = depth[v, u]
    x = (u - K.cx) * z / K.fx
    y = (v - K.cy) * z / K.fy
    return PointCloud(np.stack([x, y, z], axis=1),
                      np.stack([u, v], axis=1))


def lift_pixel(depth, pixel, K: CameraIntrinsics):
    """Back-project a single (u, v) pixel; raises on invalid depth."""
    u, v = int(pixel[0]), int(pixel[1])
    depth = np.asarray(depth, float)
    if not (0 <= v < depth.shape[0] and 0 <= u < depth.shape[1]):
        raise ValueError(f"pixel ({u}, {v}) outside the image")
    z = depth[v, u]
    if not (z > 0.0 and np.isfinite(z)):
        raise ValueError(f"invalid depth at pixel ({u}, {v})")
    return np.array([(u - K.cx) * z / K.fx, (v - K.cy) * z / K.fy, z])


def remove_outliers(cloud: PointCloud, k=16, m=2.0):
    """Statistical filter: drop points whose mean k-NN distance lies more
    than m standard deviations above the cloud mean.  Degenerate clouds
    (fewer than k+1 points) pass through unchanged with a warning."""
    n = len(cloud)
    if n < k + 1:
        warnings.warn(f"cloud of {n} points too small for k={k} outlier "
                      "filter; returning unchanged")
        return cloud
    tree = cKDTree(cloud.points)
    dists, _ = tree.query(cloud.points, k=k + 1)
    mean_d = dists[:, 1:].mean(axis=1)     # drop self-match
    keep = mean_d <= mean_d.mean() + m * mean_d.std()
    return PointCloud(cloud.points[keep],
                      None if cloud.pixels is None else cloud.pixels[keep])


# ---------------------------------------------------------------------------
# rigid registration


def kabsch(src, dst):
    """Least-squares rigid transform mapping src onto dst (SVD, reflection
    corrected)."""
    src = np.asarray(src, float).reshape(-1, 3)
    dst = np.asarray(dst, float).reshape(-1, 3)
    if len(src) < 3 or len(src) != len(dst):
        raise ValueError(f"need >= 3 paired points, got {len(src)}/{len(dst)}")
    sc = src - src.mean(axis=0)
    dc = dst - dst.mean(axis=0)
    H = sc.T @ dc
    U, S, Vt = np.linalg.svd(H)
    if S[1] <= 1e-12 + 1e-9 * S[0]:
        raise ValueError("degenerate point geometry (collinear or "
                         "coincident)")
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    t = dst.mean(axis=0) - R @ src.mean(axis=0)
    return RigidTransform(R, t)


def overlap_score(src: PointCloud, dst: PointCloud, transform,
                  eps=OVERLAP_EPS, tree=None):
    """Fraction of src points whose nearest neighbor in dst lies within eps
    after applying the transform."""
    if tree is None:
        tree = cKDTree(dst.points)
    d, _ = tree.query(transform.apply(src.points),
                      distance_upper_bound=eps)
    return float(np.count_nonzero(np.isfinite(d))) / len(src)


def icp_refine(src: PointCloud, dst: PointCloud, init: RigidTransform,
               max_iters=ICP_MAX_ITERS, tol=ICP_TOL, gate=ICP_GATE,
               eps=OVERLAP_EPS):
    """Point-to-point ICP from an initial transform.

    Correspondences beyond the gate are rejected; returns the refined
    transform and its overlap score (the initial transform if no
    correspondences survive)."""
    tree = cKDTree(dst.points)
    T = init
    for _ in range(max_iters):
        moved = T.apply(src.points)
        d, idx = tree.query(moved)
        sel = d < gate
        if np.count_nonzero(sel) < 3:
            return init, overlap_score(src, dst, init, eps, tree)
        try:
            T_new = kabsch(src.points[sel], dst.points[idx[sel]])
        except ValueError:
            break
        delta = np.linalg.norm(T_new.R - T.R) + np.linalg.norm(T_new.t - T.t)
        T = T_new
        if delta < tol:
            break
    return T, overlap_score(src, dst, T, eps, tree)


def sample_semantic_transform(pool: SemanticPool, gen_cloud: PointCloud,
                              sim_cloud: PointCloud, iterations=10, seed=0,
                              gate=ICP_GATE, eps=OVERLAP_EPS, details=None):
    """Search the correspondence pool for the best-overlap rigid transform.

    Each iteration draws one candidate per pool entry with probability
    proportional to its score, fits a rigid transform to the lifted pairs,
    and refines it with ICP; the transform with the highest overlap wins
    (ties go to the earliest iteration).  Deterministic for a fixed seed.
    """
    gen_lut = gen_cloud.pixel_index()
    sim_lut = sim_cloud.pixel_index()
    children = np.random.SeedSequence(seed).spawn(iterations)
    best = None
    for it in range(iterations):
        rng = np.random.default_rng(children[it])
        src_pts, dst_pts = [], []
        for e in pool.entries:
            gi = gen_lut.get((int(e.pixel[0]), int(e.pixel[1])))
            if gi is None:
                continue
            s = np.clip(e.scores, 0.0, None)
            prob = s / s.sum() if s.sum() > 0 else None
            c = rng.choice(len(e.candidates), p=prob)
            si = sim_lut.get((int(e.candidates[c, 0]),
                              int(e.candidates[c, 1])))
            if si is None:
                continue
            src_pts.append(gen_cloud.points[gi])
            dst_pts.append(sim_cloud.points[si])
        if len(src_pts) < 3:
            continue
        try:
            T0 = kabsch(np.array(src_pts), np.array(dst_pts))
        except ValueError:
            continue
        T, score = icp_refine(gen_cloud, sim_cloud, T0, gate=gate, eps=eps)
        if best is None or score > best[1]:
            best = (T, score, it)
        if details is not None:
            details.setdefault("scores", []).append(score)
    if best is None:
        raise ValueError("no iteration produced >= 3 liftable pairs")
    if details is not None:
        details["best_iteration"] = best[2]
    return best[0], best[1]


def baseline_transform(pool: SemanticPool, gen_cloud: PointCloud,
                       sim_cloud: PointCloud):
    """Geometry-unaware comparison path: take every entry's top-scoring
    candidate and fit a single rigid transform (no ICP, no resampling)."""
    gen_lut = gen_cloud.pixel_index()
    sim_lut = sim_cloud.pixel_index()
    src_pts, dst_pts = [], []
    for e in pool.entries:
        gi = gen_lut.get((int(e.pixel[0]), int(e.pixel[1])))
        si = sim_lut.get((int(e.candidates[0, 0]), int(e.candidates[0, 1])))
        if gi is None or si is None:
            continue
        src_pts.append(gen_cloud.points[gi])
        dst_pts.append(sim_cloud.points[si])
    return kabsch(np.array(src_pts), np.array(dst_pts))


def map_contacts(transform: RigidTransform, contact_pixels, depth,
                 K: CameraIntrinsics, sim_cloud: PointCloud):
    """Lift contact pixels, move them into the simulator frame, and snap
    each to the nearest simulated-object surface point."""
    pts = np.array([lift_pixel(depth, px, K) for px in contact_pixels])
    moved = transform.apply(pts)
    tree = cKDTree(sim_cloud.points)
    _, idx = tree.query(moved)
    return sim_cloud.points[idx]


# ---------------------------------------------------------------------------
# fixture file formats


def write_depth(path, depth):
    """Float32 row-major binary grid next to a JSON header."""
    path = Path(path)
    depth = np.asarray(depth, np.float32)
    bin_path = path.with_suffix(".bin")
    bin_path.write_bytes(depth.tobytes(order="C"))
    header = {"type": "depth", "width": depth.shape[1],
              "height": depth.shape[0], "dtype": "<f4", "units": "m",
              "order": "row-major", "data": bin_path.name}
    path.write_text(json.dumps(header, indent=1))


def read_depth(path):
    path = Path(path)
    header = json.loads(path.read_text())
    if header.get("type") != "depth":
        raise ValueError(f"{path}: not a depth header")
    raw = (path.parent / header["data"]).read_bytes()
    arr = np.frombuffer(raw, dtype=header["dtype"])
    return arr.reshape(header["height"], header["width"]).astype(float)


def write_mask(path, mask):
    """Boolean grid as row-major run lengths (first run counts zeros)."""
    mask = np.asarray(mask, bool)
    flat = mask.ravel()
    edges = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], edges, [len(flat)]])
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs = [0] + runs
    header = {"type": "mask", "width": int(mask.shape[1]),
              "height": int(mask.shape[0]), "rle": runs}
    Path(path).write_text(json.dumps(header))


def read_mask(path):
    data = json.loads(Path(path).read_text())
    if data.get("type") != "mask":
        raise ValueError(f"{path}: not a mask header")
    flat = np.zeros(data["width"] * data["height"], bool)
    pos, val = 0, False
    for run in data["rle"]:
        if val:
            flat[pos:pos + run] = True
        pos += run
        val = not val
    return flat.reshape(data["height"], data["width"])


def write_ply(path, cloud: PointCloud):
    lines = ["ply", "format ascii 1.0",
             f"element vertex {len(cloud)}",
             "property float x", "property float y", "property float z",
             "end_header"]
    for p in cloud.points:
        lines.append(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_ply(path):
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != "ply":
        raise ValueError(f"{path}: not a PLY file")
    n = None
    body = 0
    for i, line in enumerate(text):
        if line.startswith("element vertex"):
            n = int(line.split()[-1])
        if line.strip() == "end_header":
            body = i + 1
            break
    pts = np.array([[float(v) for v in line.split()[:3]]
                    for line in text[body:body + n]])
    return PointCloud(pts)
