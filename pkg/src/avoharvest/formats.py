"""File formats: masks, depth images, estimates, grids, trajectories, reports.

Byte-level layouts are documented in docs/formats.md.  Every writer here has
a matching parser and all outputs are deterministic, so repeated runs produce
byte-identical files.
"""

from __future__ import annotations

import io
import struct

import numpy as np

from . import kinematics as kin
from . import perception as pc
from . import planner as pl
from . import workspace as ws

MASK_MAGIC = b"AVOMASK1"
GRID_MAGIC = b"AVOGRID1"

DEPTH_UNIT_M = 0.001  # depth PGM stores millimeters per unit


class FormatError(ValueError):
    """Malformed input file; message carries the byte offset or line."""


# -- mask interchange --------------------------------------------------------
#
# AVOMASK1 | u32 width | u32 height | u32 count | count * mask
# mask: u32 n_runs | n_runs * u32 run lengths
# Runs are row-major over width*height pixels, alternating zero-run then
# one-run, starting with a (possibly empty) zero-run; runs sum to width*height.
# All integers little-endian.

def encode_mask_rle(mask: np.ndarray) -> list[int]:
    flat = np.asarray(mask, dtype=bool).reshape(-1)
    if flat.size == 0:
        return []
    changes = np.nonzero(np.diff(flat))[0] + 1
    bounds = np.concatenate([[0], changes, [flat.size]])
    runs = [] if not flat[0] else [0]  # leading one-run needs an empty zero-run
    runs.extend(int(x) for x in np.diff(bounds))
    return runs


def decode_mask_rle(runs, width: int, height: int) -> np.ndarray:
    total = width * height
    if sum(runs) != total:
        raise FormatError(
            f"mask runs sum to {sum(runs)}, expected {total}")
    flat = np.zeros(total, dtype=bool)
    pos = 0
    value = False
    for r in runs:
        if value:
            flat[pos:pos + r] = True
        pos += r
        value = not value
    return flat.reshape(height, width)


def write_masks(path, detections: pc.DetectionSet) -> None:
    with open(path, "wb") as f:
        f.write(MASK_MAGIC)
        f.write(struct.pack("<III", detections.width, detections.height,
                            detections.count))
        for mask in detections.masks:
            runs = encode_mask_rle(mask)
            f.write(struct.pack("<I", len(runs)))
            f.write(struct.pack(f"<{len(runs)}I", *runs))


def read_masks(path) -> pc.DetectionSet:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 20:
        raise FormatError(f"mask file truncated at byte {len(data)} (need 20)")
    if data[:8] != MASK_MAGIC:
        raise FormatError(f"bad magic {data[:8]!r} at byte 0")
    width, height, count = struct.unpack_from("<III", data, 8)
    offset = 20
    masks = []
    for i in range(count):
        if offset + 4 > len(data):
            raise FormatError(f"mask {i}: truncated run count at byte {offset}")
        (n_runs,) = struct.unpack_from("<I", data, offset)
        offset += 4
        end = offset + 4 * n_runs
        if end > len(data):
            raise FormatError(f"mask {i}: truncated runs at byte {offset}")
        runs = struct.unpack_from(f"<{n_runs}I", data, offset)
        offset = end
        masks.append(decode_mask_rle(runs, width, height))
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes at {offset}")
    return pc.DetectionSet(masks=tuple(masks), width=width, height=height)


# -- depth images ------------------------------------------------------------
#
# Binary PGM (P5), maxval 65535, big-endian 16-bit samples, millimeters per
# unit; zero means no measurement.  Loaded as float meters.

def write_depth(path, depth_m: np.ndarray) -> None:
    depth_m = np.asarray(depth_m, dtype=float)
    mm = np.clip(np.round(depth_m / DEPTH_UNIT_M), 0, 65535).astype(">u2")
    h, w = mm.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        f.write(mm.tobytes())


def read_depth(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    stream = io.BytesIO(data)

    def token():
        # netpbm tokens separated by whitespace, '#' starts a comment
        out = b""
        while True:
            ch = stream.read(1)
            if not ch:
                raise FormatError(f"depth header truncated at byte {stream.tell()}")
            if ch == b"#":
                while ch not in (b"\n", b""):
                    ch = stream.read(1)
                continue
            if ch.isspace():
                if out:
                    return out
                continue
            out += ch

    magic = token()
    if magic != b"P5":
        raise FormatError(f"expected P5 depth image, got {magic!r} at byte 0")
    try:
        w, h, maxval = int(token()), int(token()), int(token())
    except ValueError as e:
        raise FormatError(f"bad depth header near byte {stream.tell()}: {e}") from e
    if maxval != 65535:
        raise FormatError(f"depth maxval must be 65535, got {maxval}")
    need = w * h * 2
    raw = stream.read(need)
    if len(raw) != need:
        raise FormatError(
            f"depth payload truncated at byte {stream.tell()}: "
            f"got {len(raw)} of {need} bytes")
    mm = np.frombuffer(raw, dtype=">u2").reshape(h, w)
    return mm.astype(float) * DEPTH_UNIT_M


# -- estimate records --------------------------------------------------------
#
# One line per estimate:
#   cx cy cz ez ey ex distance frame
# (centers in m, intrinsic Z-Y-X Euler angles in rad, camera|arm frame tag);
# lines starting with '#' are comments.

def format_estimates(estimates: list[pc.AvocadoEstimate]) -> str:
    lines = ["# cx_m cy_m cz_m euler_z_rad euler_y_rad euler_x_rad distance_m frame"]
    for e in estimates:
        fields = [repr(float(v)) for v in (*e.center, *e.euler, e.distance)]
        lines.append(" ".join(fields + [e.frame]))
    return "\n".join(lines) + "\n"


def write_estimates(path, estimates) -> None:
    with open(path, "w") as f:
        f.write(format_estimates(estimates))


def parse_estimates(text: str) -> list[pc.AvocadoEstimate]:
    from scipy.spatial.transform import Rotation

    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise FormatError(f"line {lineno}: expected 8 fields, got {len(parts)}")
        try:
            vals = [float(x) for x in parts[:7]]
        except ValueError as e:
            raise FormatError(f"line {lineno}: {e}") from e
        frame = parts[7]
        if frame not in ("camera", "arm"):
            raise FormatError(f"line {lineno}: unknown frame {frame!r}")
        euler = np.array(vals[3:6])
        out.append(pc.AvocadoEstimate(
            center=np.array(vals[:3]),
            rotation=Rotation.from_euler("ZYX", euler).as_matrix(),
            euler=euler,
            distance=vals[6],
            frame=frame,
        ))
    return out


def read_estimates(path) -> list[pc.AvocadoEstimate]:
    with open(path) as f:
        return parse_estimates(f.read())


# -- workspace grids ---------------------------------------------------------
#
# AVOGRID1 | f64 origin[3] | f64 voxel_size | u32 dims[3] | u32 arm_count
# per arm: u8 name_len | name | u32 dof | u32 n_samples | u32 steps_per_joint
#          | packed occupancy bits (ceil(nvox/8) bytes, C order)
#          | u32 witness_count | witness * (u32 flat_index, f64 angles[dof])
# Witnesses are sorted by flat index.  Little-endian throughout.

def write_grid(path, grid: ws.WorkspaceGrid) -> None:
    with open(path, "wb") as f:
        f.write(GRID_MAGIC)
        f.write(struct.pack("<3d", *grid.origin))
        f.write(struct.pack("<d", grid.voxel_size))
        f.write(struct.pack("<3I", *grid.dims))
        f.write(struct.pack("<I", len(grid.arms)))
        for name in sorted(grid.arms):
            occ = grid.arms[name]
            nb = name.encode("ascii")
            dof = len(next(iter(occ.witnesses.values()))) if occ.witnesses else 0
            f.write(struct.pack("<B", len(nb)))
            f.write(nb)
            f.write(struct.pack("<III", dof, occ.n_samples, occ.steps_per_joint))
            f.write(np.packbits(occ.occupied.reshape(-1)).tobytes())
            f.write(struct.pack("<I", len(occ.witnesses)))
            for idx in sorted(occ.witnesses):
                f.write(struct.pack("<I", idx))
                f.write(struct.pack(f"<{dof}d", *occ.witnesses[idx]))


def read_grid(path) -> ws.WorkspaceGrid:
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != GRID_MAGIC:
        raise FormatError(f"bad grid magic {data[:8]!r} at byte 0")
    off = 8
    origin = np.array(struct.unpack_from("<3d", data, off)); off += 24
    (voxel,) = struct.unpack_from("<d", data, off); off += 8
    dims = struct.unpack_from("<3I", data, off); off += 12
    (n_arms,) = struct.unpack_from("<I", data, off); off += 4
    grid = ws.WorkspaceGrid(origin=origin, voxel_size=voxel, dims=dims)
    nvox = grid.n_voxels
    nbytes = (nvox + 7) // 8
    for _ in range(n_arms):
        (nlen,) = struct.unpack_from("<B", data, off); off += 1
        name = data[off:off + nlen].decode("ascii"); off += nlen
        dof, n_samples, steps = struct.unpack_from("<III", data, off); off += 12
        if off + nbytes > len(data):
            raise FormatError(f"grid occupancy truncated at byte {off}")
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8,
                                           count=nbytes, offset=off))
        occupied = bits[:nvox].astype(bool).reshape(dims)
        off += nbytes
        (n_wit,) = struct.unpack_from("<I", data, off); off += 4
        witnesses = {}
        for _ in range(n_wit):
            (idx,) = struct.unpack_from("<I", data, off); off += 4
            q = np.array(struct.unpack_from(f"<{dof}d", data, off)); off += 8 * dof
            witnesses[idx] = q
        grid.arms[name] = ws.ArmOccupancy(occupied=occupied, witnesses=witnesses,
                                          n_samples=n_samples,
                                          steps_per_joint=steps)
    if off != len(data):
        raise FormatError(f"{len(data) - off} trailing bytes at {off}")
    return grid


def verify_grid_witnesses(grid: ws.WorkspaceGrid,
                          arms: dict[str, kin.ArmModel] | None = None) -> None:
    """Re-run FK on every stored witness; raises FormatError on any mismatch."""
    if arms is None:
        arms = {kin.GRIPPER: kin.gripper_arm(), kin.FIXER: kin.fixer_arm()}
    for name, occ in grid.arms.items():
        arm = arms[name]
        if int(occ.occupied.sum()) != len(occ.witnesses):
            raise FormatError(f"{name}: occupancy and witness counts differ")
        for idx, q in occ.witnesses.items():
            if not arm.within_limits(q):
                raise FormatError(f"{name}: witness {idx} violates joint limits")
            if grid.voxel_of(kin.fk(arm, q).position) != idx:
                raise FormatError(f"{name}: witness {idx} fails FK re-verification")


def grid_points_csv(grid: ws.WorkspaceGrid) -> str:
    """Occupied voxel centers for plotting: arm,x_mm,y_mm,z_mm."""
    lines = ["arm,x_mm,y_mm,z_mm"]
    for name in sorted(grid.arms):
        occupied = grid.arms[name].occupied
        for flat in np.nonzero(occupied.reshape(-1))[0]:
            c = grid.voxel_center(int(flat))
            lines.append(f"{name},{c[0]!r},{c[1]!r},{c[2]!r}")
    return "\n".join(lines) + "\n"


# -- trajectories and reports ------------------------------------------------

def trajectory_csv(traj: pl.JointTrajectory) -> str:
    dof = traj.waypoints.shape[1]
    header = "time_s," + ",".join(f"q{i + 1}_rad" for i in range(dof))
    lines = [header]
    for i, q in enumerate(traj.waypoints):
        t = i * traj.dt
        lines.append(",".join([repr(float(t))] + [repr(float(v)) for v in q]))
    return "\n".join(lines) + "\n"


def parse_trajectory_csv(text: str, dt: float | None = None) -> pl.JointTrajectory:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("time_s"):
        raise FormatError("line 1: missing trajectory header")
    rows = []
    times = []
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        try:
            vals = [float(x) for x in parts]
        except ValueError as e:
            raise FormatError(f"line {lineno}: {e}") from e
        times.append(vals[0])
        rows.append(vals[1:])
    waypoints = np.array(rows)
    if dt is None:
        dt = times[1] - times[0] if len(times) > 1 else pl.DEFAULT_TRAJ_DT_S
    return pl.JointTrajectory(waypoints=waypoints, dt=dt)


def report_text(report) -> str:
    lines = [
        f"outcome: {report.outcome}",
        f"wrist_rotation_used_rad: {report.wrist_rotation_used!r}",
        f"phases: {len(report.timeline)}",
    ]
    if report.detail:
        lines.append(f"detail: {report.detail}")
    return "\n".join(lines) + "\n"


def timeline_csv(report) -> str:
    lines = ["phase,enter_time_s"]
    for phase, t in report.timeline:
        lines.append(f"{phase},{t!r}")
    return "\n".join(lines) + "\n"
