"""Avocado pose estimation from segmentation masks and depth images.

Pipeline: back-project masked depth pixels to a camera-frame cloud, split it
into per-fruit clusters by camera-distance histogram filtering, then estimate
each fruit's center (cluster mean), orientation (PCA bounding box re-aligned
to the camera axes) and finally express everything in the arm base frame via
the fixed camera-to-arm calibration.

Camera-frame computations use meters; the arm side of the calibration is in
meters as well, and callers convert to millimeters at the planning boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

# Default intrinsics for synthetic scenes: representative 848x480 stereo depth
# module; every value is configurable.
DEFAULT_FX = 615.0
DEFAULT_FY = 615.0
DEFAULT_CX = 424.0
DEFAULT_CY = 240.0
DEFAULT_WIDTH = 848
DEFAULT_HEIGHT = 480

DEFAULT_BIN_WIDTH_M = 0.05  # camera-distance histogram bin
CAMERA_TILT_RAD = np.deg2rad(15.0)

# Camera origin offset in the arm base frame (m).
V_ARM_M = (0.0, 0.08653, 0.06436)


class PipelineError(RuntimeError):
    """Failure of one pose-estimation stage, labeled with the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float = DEFAULT_FX
    fy: float = DEFAULT_FY
    cx: float = DEFAULT_CX
    cy: float = DEFAULT_CY
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


def _rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class ExtrinsicCalibration:
    """Fixed camera-to-arm transform: p_arm = v_arm + rotation @ p_cam (meters)."""

    v_arm: np.ndarray = field(default_factory=lambda: np.array(V_ARM_M))
    rotation: np.ndarray = field(
        default_factory=lambda: _rot_x(CAMERA_TILT_RAD) @ _rot_z(np.pi)
    )

    def __post_init__(self):
        object.__setattr__(self, "v_arm", np.asarray(self.v_arm, dtype=float))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        R = self.rotation
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9) or np.linalg.det(R) < 0:
            raise ValueError("calibration rotation must be orthonormal with det +1")


@dataclass(frozen=True)
class DetectionSet:
    """Binary instance masks for one frame, all of identical (height, width)."""

    masks: tuple[np.ndarray, ...]
    width: int
    height: int

    @classmethod
    def from_masks(cls, masks) -> "DetectionSet":
        masks = tuple(np.asarray(m, dtype=bool) for m in masks)
        if not masks:
            raise ValueError("DetectionSet needs image dimensions when empty; "
                             "use DetectionSet(masks=(), width=w, height=h)")
        h, w = masks[0].shape
        for m in masks:
            if m.shape != (h, w):
                raise ValueError("all masks must share one shape")
        return cls(masks=masks, width=w, height=h)

    @property
    def count(self) -> int:
        return len(self.masks)


@dataclass
class ClusterSet:
    clusters: list[np.ndarray]
    rejected: np.ndarray


@dataclass(frozen=True)
class AvocadoEstimate:
    """Fruit pose: center (m), aligned orientation, intrinsic Z-Y-X Euler angles
    (rad) and distance-to-origin (m) in the tagged frame."""

    center: np.ndarray
    rotation: np.ndarray
    euler: np.ndarray
    distance: float
    frame: str = "camera"


def _make_estimate(center: np.ndarray, rotation: np.ndarray, frame: str) -> AvocadoEstimate:
    return AvocadoEstimate(
        center=np.asarray(center, dtype=float),
        rotation=np.asarray(rotation, dtype=float),
        euler=Rotation.from_matrix(rotation).as_euler("ZYX"),
        distance=float(np.linalg.norm(center)),
        frame=frame,
    )


def backproject(mask: np.ndarray, depth: np.ndarray,
                intr: CameraIntrinsics) -> np.ndarray:
    """Pinhole back-projection of masked depth pixels to an (N, 3) cloud (m).

    The depth image must already be aligned to the mask's pixel grid.  Pixels
    with zero, negative or non-finite depth are skipped.  Points come out in
    row-major pixel order.
    """
    mask = np.asarray(mask, dtype=bool)
    depth = np.asarray(depth, dtype=float)
    if mask.shape != depth.shape:
        raise ValueError(f"mask shape {mask.shape} != depth shape {depth.shape}")
    if mask.shape != (intr.height, intr.width):
        raise ValueError(
            f"image shape {mask.shape} does not match intrinsics "
            f"({intr.height}, {intr.width})"
        )
    valid = mask & np.isfinite(depth) & (depth > 0.0)
    v, u = np.nonzero(valid)
    z = depth[v, u]
    x = (u - intr.cx) * z / intr.fx
    y = (v - intr.cy) * z / intr.fy
    return np.stack([x, y, z], axis=1)


def project(points: np.ndarray, intr: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Pinhole projection: (N, 3) camera points -> (N, 2) pixel coords + depths."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    if np.any(p[:, 2] <= 0):
        raise ValueError("all points must have positive depth")
    u = intr.fx * p[:, 0] / p[:, 2] + intr.cx
    v = intr.fy * p[:, 1] / p[:, 2] + intr.cy
    return np.stack([u, v], axis=1), p[:, 2].copy()


def histogram_filter(cloud: np.ndarray, k: int,
                     bin_width: float = DEFAULT_BIN_WIDTH_M) -> ClusterSet:
    """Split a cloud into the k dominant camera-distance modes.

    The k most-populated distance bins are selected (ties toward the nearer
    bin).  A bin with points joins the cluster of the selected bin at most one
    bin away - nearer selected bin wins a tie - and everything else is
    rejected.  Clusters come back ordered by ascending distance.
    """
    pts = np.asarray(cloud, dtype=float).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise ValueError("cannot filter an empty cloud")
    if k < 1:
        raise ValueError("k must be >= 1")
    if bin_width <= 0:
        raise ValueError("bin_width must be > 0")
    dist = np.linalg.norm(pts, axis=1)
    bins = np.floor(dist / bin_width).astype(int)
    uniq, counts = np.unique(bins, return_counts=True)
    if len(uniq) < k:
        raise ValueError(
            f"only {len(uniq)} non-empty distance bins; cannot form {k} clusters"
        )
    # k most populated bins with adjacency suppression: a mode that straddles
    # a bin boundary is one physical fruit, not two.  Ties go to the nearer
    # bin (np.unique returns bins ascending, the stable sort keeps that).
    order = np.argsort(-counts, kind="stable")
    peaks = []
    for i in order:
        b = uniq[i]
        if all(abs(b - p) > 1 for p in peaks):
            peaks.append(int(b))
            if len(peaks) == k:
                break
    if len(peaks) < k:
        raise ValueError(
            f"only {len(peaks)} separated distance modes; cannot form {k} clusters"
        )
    peaks = np.sort(np.array(peaks))

    # claim each non-empty bin for the nearest peak within one bin
    assign = {}
    for b in uniq:
        gaps = np.abs(peaks - b)
        j = int(np.argmin(gaps))  # argmin takes the first (= nearer) peak on ties
        if gaps[j] <= 1:
            assign[int(b)] = j
    labels = np.full(pts.shape[0], -1, dtype=int)
    for b, j in assign.items():
        labels[bins == b] = j
    clusters = [pts[labels == j] for j in range(len(peaks))]
    rejected = pts[labels == -1]
    return ClusterSet(clusters=clusters, rejected=rejected)


def cluster_centroid(cluster: np.ndarray) -> np.ndarray:
    """Arithmetic mean of the cluster points."""
    pts = np.asarray(cluster, dtype=float).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise ValueError("empty cluster has no centroid")
    return pts.mean(axis=0)


def fit_obb(cluster: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """PCA oriented bounding box: (rotation, center, extents).

    Axes are the covariance eigenvectors ordered by descending eigenvalue and
    flipped to a deterministic sign (largest-magnitude component positive),
    with the last axis negated if needed for right-handedness.  Extents are
    the full max-min projection spans, so the box contains every point.
    """
    pts = np.asarray(cluster, dtype=float).reshape(-1, 3)
    if pts.shape[0] < 4:
        raise ValueError(f"need at least 4 points, got {pts.shape[0]}")
    centered = pts - pts.mean(axis=0)
    rank = np.linalg.matrix_rank(centered, tol=1e-12)
    if rank < 3:
        raise ValueError(f"degenerate cloud of rank {rank}; need rank 3")
    cov = centered.T @ centered / pts.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    axes = evecs[:, order]
    for i in range(3):
        j = int(np.argmax(np.abs(axes[:, i])))
        if axes[j, i] < 0:
            axes[:, i] = -axes[:, i]
    if np.linalg.det(axes) < 0:
        axes[:, 2] = -axes[:, 2]
    proj = centered @ axes
    lo, hi = proj.min(axis=0), proj.max(axis=0)
    extents = hi - lo
    center = pts.mean(axis=0) + axes @ ((hi + lo) / 2.0)
    return axes, center, extents


def align_frame(obb_rotation: np.ndarray) -> np.ndarray:
    """Deterministically re-label OBB axes to best match the camera axes.

    For camera x, y, z in that order, the unassigned +/-column with the
    largest dot product is taken (ties: larger dot, then lower column index,
    then positive sign).  If the result is left-handed the y-axis is negated,
    which preserves the required dot(z, camera z) >= 0.
    """
    R = np.asarray(obb_rotation, dtype=float)
    if R.shape != (3, 3) or not np.allclose(R.T @ R, np.eye(3), atol=1e-9):
        raise ValueError("input must be a 3x3 orthonormal matrix")
    remaining = [0, 1, 2]
    out = np.zeros((3, 3))
    for axis in range(3):
        best = None
        for col in remaining:
            for sign in (1.0, -1.0):
                d = sign * R[axis, col]
                key = (d, -col, sign)
                if best is None or key > best[0]:
                    best = (key, col, sign)
        _, col, sign = best
        remaining.remove(col)
        out[:, axis] = sign * R[:, col]
    if np.linalg.det(out) < 0:
        out[:, 1] = -out[:, 1]
    return out


def camera_to_arm(p_cam, calib: ExtrinsicCalibration | None = None) -> np.ndarray:
    """Express a camera-frame point (m) in the arm base frame (m)."""
    if calib is None:
        calib = ExtrinsicCalibration()
    return calib.v_arm + calib.rotation @ np.asarray(p_cam, dtype=float)


def arm_to_camera(p_arm, calib: ExtrinsicCalibration | None = None) -> np.ndarray:
    """Inverse of camera_to_arm."""
    if calib is None:
        calib = ExtrinsicCalibration()
    return calib.rotation.T @ (np.asarray(p_arm, dtype=float) - calib.v_arm)


def estimate_to_arm(est: AvocadoEstimate,
                    calib: ExtrinsicCalibration | None = None) -> AvocadoEstimate:
    """Transform a camera-frame estimate into the arm base frame."""
    if calib is None:
        calib = ExtrinsicCalibration()
    if est.frame != "camera":
        raise ValueError(f"expected a camera-frame estimate, got {est.frame!r}")
    return _make_estimate(camera_to_arm(est.center, calib),
                          calib.rotation @ est.rotation, "arm")


def select_target(estimates: list[AvocadoEstimate]) -> AvocadoEstimate:
    """The estimate nearest the frame origin; ties go to the lowest index."""
    if not estimates:
        raise ValueError("no estimates to select from")
    best = estimates[0]
    for e in estimates[1:]:
        if e.distance < best.distance:
            best = e
    return best


def estimate_poses(detections: DetectionSet, depth: np.ndarray,
                   intr: CameraIntrinsics | None = None,
                   calib: ExtrinsicCalibration | None = None,
                   bin_width: float = DEFAULT_BIN_WIDTH_M) -> list[AvocadoEstimate]:
    """Full pipeline: masks + depth -> arm-frame estimates sorted by camera distance.

    Pure function of its inputs, so periodic callers (the 1 Hz publisher)
    always see complete, self-consistent estimate lists.
    """
    if intr is None:
        intr = CameraIntrinsics()
    if calib is None:
        calib = ExtrinsicCalibration()
    if detections.count == 0:
        return []
    if (detections.height, detections.width) != (intr.height, intr.width):
        raise PipelineError("backproject",
                            "detection dimensions do not match intrinsics")
    try:
        clouds = [backproject(m, depth, intr) for m in detections.masks]
        cloud = np.concatenate(clouds, axis=0)
    except ValueError as e:
        raise PipelineError("backproject", str(e)) from e
    if cloud.shape[0] == 0:
        raise PipelineError("backproject", "no valid depth under any mask")
    try:
        clusters = histogram_filter(cloud, k=detections.count, bin_width=bin_width)
    except ValueError as e:
        raise PipelineError("histogram_filter", str(e)) from e

    cam_estimates = []
    for i, cluster in enumerate(clusters.clusters):
        try:
            center = cluster_centroid(cluster)
        except ValueError as e:
            raise PipelineError("cluster_centroid", f"cluster {i}: {e}") from e
        try:
            axes, _, _ = fit_obb(cluster)
        except ValueError as e:
            raise PipelineError("fit_obb", f"cluster {i}: {e}") from e
        try:
            aligned = align_frame(axes)
        except ValueError as e:
            raise PipelineError("align_frame", f"cluster {i}: {e}") from e
        cam_estimates.append(_make_estimate(center, aligned, "camera"))
    cam_estimates.sort(key=lambda e: e.distance)
    return [estimate_to_arm(e, calib) for e in cam_estimates]
