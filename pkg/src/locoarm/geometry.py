"""Rotation algebra, included-angle chart, spherical end-effector poses, pose errors.

Angles follow the included-angle convention used throughout the package:
``alpha`` is the azimuth of the rotated x-axis in the world xy-plane,
``beta`` the azimuth of the rotated y-axis in the world yz-plane, and
``gamma`` the azimuth of the rotated z-axis in the world zx-plane.
All functions are pure and safe for unrestricted concurrent use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateRotation

ORTHO_TOL = 1e-9
_DEGENERATE_EPS = 1e-12


class AxisAngles(NamedTuple):
    """Included angles (rad) of the rotated x/y/z axes, each in (-pi, pi]."""

    alpha: float
    beta: float
    gamma: float


@dataclass(frozen=True)
class TargetEEPose:
    """Spherical 6D end-effector goal: radius l, latitude p, longitude y, included angles."""

    l: float
    p: float
    y: float
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        if self.l < 0.0:
            raise ValueError(f"radius must be >= 0, got {self.l}")
        if not -math.pi / 2 <= self.p <= math.pi / 2:
            raise ValueError(f"latitude must be in [-pi/2, pi/2], got {self.p}")

    def as_array(self) -> np.ndarray:
        return np.array([self.l, self.p, self.y, self.alpha, self.beta, self.gamma])

    @staticmethod
    def from_array(v) -> "TargetEEPose":
        return TargetEEPose(*(float(x) for x in v))


@dataclass(frozen=True)
class SE3Pose:
    """Frame-level pose carrier: position (m) plus a rotation matrix."""

    position: np.ndarray
    rotation: np.ndarray

    @staticmethod
    def identity() -> "SE3Pose":
        return SE3Pose(np.zeros(3), np.eye(3))

    def transform_point(self, p: np.ndarray) -> np.ndarray:
        return self.position + self.rotation @ p

    def compose(self, other: "SE3Pose") -> "SE3Pose":
        return SE3Pose(self.position + self.rotation @ other.position,
                       self.rotation @ other.rotation)

    def inverse(self) -> "SE3Pose":
        rt = self.rotation.T
        return SE3Pose(-(rt @ self.position), rt)


class PoseError(NamedTuple):
    distance: float          # Euclidean position error D (m)
    angle: float             # geodesic orientation error theta (rad)
    delta_lpy: np.ndarray    # |d radius|, |d latitude|, |d longitude|
    delta_abg: np.ndarray    # wrapped |d alpha|, |d beta|, |d gamma|


def wrap_angle(x):
    """Wrap to (-pi, pi]."""
    wrapped = np.mod(-np.asarray(x) + math.pi, 2.0 * math.pi)
    return -(wrapped - math.pi)


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def compose_rotation(euler_z: float, euler_y: float, euler_x: float) -> np.ndarray:
    """Rotation matrix from elementary rotations applied in z, y, x order."""
    return rot_z(euler_z) @ rot_y(euler_y) @ rot_x(euler_x)


def compose_rotation_batch(euler_z, euler_y, euler_x) -> np.ndarray:
    """Vectorized compose_rotation for equal-length angle arrays; returns (B, 3, 3)."""
    cz, sz = np.cos(euler_z), np.sin(euler_z)
    cy, sy = np.cos(euler_y), np.sin(euler_y)
    cx, sx = np.cos(euler_x), np.sin(euler_x)
    row = lambda *cols: np.stack(np.broadcast_arrays(*cols), axis=-1)
    return np.stack([
        row(cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx),
        row(sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx),
        row(-sy, cy * sx, cy * cx),
    ], axis=-2)


def is_rotation(R: np.ndarray, tol: float = ORTHO_TOL) -> bool:
    R = np.asarray(R)
    if R.shape != (3, 3):
        return False
    return (np.abs(R.T @ R - np.eye(3)).max() <= tol
            and abs(np.linalg.det(R) - 1.0) <= tol)


def axis_angles_from_rotation(R: np.ndarray) -> AxisAngles:
    """Extract included angles from a rotation matrix.

    Uses the two-argument arctangent on (r21, r11), (r32, r22), (r13, r33)
    so the full quadrant is recovered. Raises DegenerateRotation when one of
    the entry pairs is numerically zero and the angle is undefined.
    """
    R = np.asarray(R, dtype=float)
    pairs = ((R[1, 0], R[0, 0]), (R[2, 1], R[1, 1]), (R[0, 2], R[2, 2]))
    names = ("alpha", "beta", "gamma")
    out = []
    for (num, den), name in zip(pairs, names):
        if abs(num) + abs(den) < _DEGENERATE_EPS:
            raise DegenerateRotation(f"{name} is undefined: projection has zero length")
        out.append(math.atan2(num, den))
    return AxisAngles(*out)


def axis_angles_batch(R: np.ndarray) -> np.ndarray:
    """Vectorized, lenient included-angle extraction for (..., 3, 3) stacks.

    Degenerate entries yield atan2(0, 0) = 0 instead of raising; callers on
    hot paths (reward evaluation) prefer a defined value over an exception.
    """
    R = np.asarray(R)
    return np.stack([np.arctan2(R[..., 1, 0], R[..., 0, 0]),
                     np.arctan2(R[..., 2, 1], R[..., 1, 1]),
                     np.arctan2(R[..., 0, 2], R[..., 2, 2])], axis=-1)


def _candidate_frames(alpha, beta, gamma, u):
    """Orthonormal frame whose x-axis has azimuth alpha and elevation u.

    The y-axis is forced into the plane orthogonal to n2 = (0, -sin b, cos b);
    arrays broadcast, and both y-sign branches are returned as (+R, -y/-z R).
    """
    ca, sa = np.cos(alpha), np.sin(alpha)
    cu, su = np.cos(u), np.sin(u)
    x = np.stack([ca * cu, sa * cu, su], axis=-1)
    n2 = np.stack([np.zeros_like(beta), -np.sin(beta), np.cos(beta)], axis=-1)
    y_raw = np.cross(np.broadcast_to(n2, x.shape), x)
    norm = np.linalg.norm(y_raw, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        y = y_raw / norm
    z = np.cross(x, y)
    return x, y, z, norm[..., 0]


def _zdotn3(gamma, z):
    n3 = np.stack([np.cos(gamma), np.zeros_like(gamma), -np.sin(gamma)], axis=-1)
    return np.sum(np.broadcast_to(n3, z.shape) * z, axis=-1)


def _solve_axis_angles(angles: np.ndarray, grid: int) -> tuple[np.ndarray, np.ndarray]:
    """One bracketing-scan pass of the included-angle inversion.

    Returns (R, err) where err is the max wrapped component error of the best
    candidate found for each sample (inf when no candidate exists at all).
    """
    B = angles.shape[0]
    alpha, beta, gamma = angles[:, 0], angles[:, 1], angles[:, 2]

    margin = 1e-9
    us = np.linspace(-math.pi / 2 + margin, math.pi / 2 - margin, grid)
    a_g = alpha[:, None]
    b_g = beta[:, None]
    g_g = gamma[:, None]
    u_g = np.broadcast_to(us, (B, grid))
    x, y, z, norm = _candidate_frames(a_g, b_g, g_g, u_g)
    gv = _zdotn3(g_g, z)
    gv = np.where(norm > _DEGENERATE_EPS, gv, np.nan)

    # brackets: sign change between adjacent finite grid values, plus exact zeros
    left, right = gv[:, :-1], gv[:, 1:]
    bracket = (left * right < 0.0) & np.isfinite(left) & np.isfinite(right)
    samples, cells = np.nonzero(bracket)
    lo = np.broadcast_to(us[:-1], (B, grid - 1))[samples, cells].copy()
    hi = np.broadcast_to(us[1:], (B, grid - 1))[samples, cells].copy()
    glo = left[samples, cells].copy()
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        _, _, zm, _ = _candidate_frames(alpha[samples], beta[samples], gamma[samples], mid)
        gm = _zdotn3(gamma[samples], zm)
        take_lo = (glo * gm) > 0.0
        lo = np.where(take_lo, mid, lo)
        glo = np.where(take_lo, gm, glo)
        hi = np.where(take_lo, hi, mid)
    roots = 0.5 * (lo + hi)

    zero_samples, zero_cells = np.nonzero((gv == 0.0) & np.isfinite(gv))
    if zero_samples.size:
        samples = np.concatenate([samples, zero_samples])
        roots = np.concatenate([roots, np.broadcast_to(us, (B, grid))[zero_samples, zero_cells]])

    # both y-sign branches of every root are candidates; validate by re-extraction
    x, y, z, norm = _candidate_frames(alpha[samples], beta[samples], gamma[samples], roots)
    cands_R = np.concatenate([np.stack([x, y, z], axis=-1),
                              np.stack([x, -y, -z], axis=-1)], axis=0)
    cand_samples = np.concatenate([samples, samples])
    cand_u = np.concatenate([roots, roots])
    got = axis_angles_batch(cands_R)
    want = angles[cand_samples]
    err = np.abs(wrap_angle(got - want)).max(axis=-1)

    out = np.tile(np.eye(3), (B, 1, 1))
    best_err = np.full(B, np.inf)
    if cand_samples.size:
        # valid candidates win by smallest |u|; otherwise keep smallest error
        key = np.where(err < 1e-7, np.abs(cand_u), 1e6 + err)
        order = np.lexsort((key, cand_samples))
        uniq, first = np.unique(cand_samples[order], return_index=True)
        out[uniq] = cands_R[order][first]
        best_err[uniq] = err[order][first]
    return out, best_err


def rotation_from_axis_angles_batch(angles: np.ndarray, strict: bool = True) -> np.ndarray:
    """Rotations whose included angles equal the given (B, 3) batch.

    The x-axis elevation u is the single remaining degree of freedom once the
    alpha and beta constraints are built into the frame; the gamma constraint
    becomes a scalar root-finding problem in u, solved by a bracketing scan
    plus vectorized bisection. Among the valid roots the one with the smallest
    |u| is kept, which makes the map deterministic.

    Not every angle triple is realizable by a rotation. With strict=True,
    unrealizable inputs raise DegenerateRotation; with strict=False, the
    closest candidate produced by the scan is returned instead.
    """
    angles = np.asarray(angles, dtype=float)
    if angles.ndim != 2 or angles.shape[1] != 3:
        raise ValueError(f"expected (B, 3) angles, got {angles.shape}")
    out, err = _solve_axis_angles(angles, grid=65)
    for grid in (257, 1025):
        bad = np.nonzero(err >= 1e-7)[0]
        if bad.size == 0:
            break
        out_bad, err_bad = _solve_axis_angles(angles[bad], grid=grid)
        better = err_bad < err[bad]
        out[bad[better]] = out_bad[better]
        err[bad[better]] = err_bad[better]
    if strict:
        bad = np.nonzero(err >= 1e-7)[0]
        if bad.size:
            raise DegenerateRotation(
                f"no rotation realizes included angles {tuple(angles[bad[0]])}")
    return out


def rotation_from_axis_angles(angles: AxisAngles, strict: bool = True) -> np.ndarray:
    """Rotation matrix whose included angles are exactly the given triple."""
    return rotation_from_axis_angles_batch(
        np.asarray(angles, dtype=float)[None, :], strict=strict)[0]


def realizable_target_rotation(angles) -> tuple[np.ndarray, bool]:
    """Rotation for an arbitrary included-angle triple, projecting when needed.

    Returns (rotation, exact). Exact inversion is attempted first; triples no
    rotation can realize (possible for hand-entered targets) are replaced by a
    least-squares fit over the wrapped angle residuals so long-running
    consumers never have to handle an exception.
    """
    from scipy.optimize import least_squares

    target = np.asarray(angles, dtype=float)
    R = rotation_from_axis_angles_batch(target[None, :], strict=False)[0]
    err = np.abs(wrap_angle(axis_angles_batch(R) - target)).max()
    if err < 1e-7:
        return R, True

    def resid(e):
        return np.asarray(wrap_angle(
            axis_angles_batch(compose_rotation(e[0], e[1], e[2])) - target))

    best_R = R
    best_cost = float(np.sum(np.abs(wrap_angle(axis_angles_batch(R) - target)) ** 2))
    for x0 in ((target[0], target[2], target[1]), (0.0, 0.0, 0.0)):
        fit = least_squares(resid, x0, method="lm")
        if 2.0 * fit.cost < best_cost:
            best_cost = 2.0 * fit.cost
            best_R = compose_rotation(*fit.x)
    return best_R, False


def spherical_from_cartesian(position: np.ndarray) -> tuple[float, float, float]:
    """(radius, latitude, longitude) of a point; zero radius maps to (0, 0, 0)."""
    x, y, z = (float(v) for v in position)
    l = math.sqrt(x * x + y * y + z * z)
    if l < _DEGENERATE_EPS:
        return 0.0, 0.0, 0.0
    return l, math.asin(max(-1.0, min(1.0, z / l))), math.atan2(y, x)


def spherical_to_cartesian(pose: TargetEEPose, base_yaw_frame: SE3Pose) -> SE3Pose:
    """Cartesian target pose in the world, given the gravity-aligned yaw-only base frame."""
    cp = math.cos(pose.p)
    local = np.array([pose.l * cp * math.cos(pose.y),
                      pose.l * cp * math.sin(pose.y),
                      pose.l * math.sin(pose.p)])
    local_rot = rotation_from_axis_angles(AxisAngles(pose.alpha, pose.beta, pose.gamma))
    return base_yaw_frame.compose(SE3Pose(local, local_rot))


def geodesic_angle(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Rotation angle of Ra^T Rb, in [0, pi]."""
    tr = float(np.trace(np.asarray(Ra).T @ np.asarray(Rb)))
    return math.acos(max(-1.0, min(1.0, (tr - 1.0) / 2.0)))


def pose_error(target: SE3Pose, actual: SE3Pose) -> PoseError:
    """Aggregate and per-component tracking errors between two poses.

    Positions are compared both as Euclidean distance and component-wise in
    spherical coordinates; orientations as the geodesic angle and as wrapped
    included-angle differences (lenient extraction, no exceptions).
    """
    d = float(np.linalg.norm(np.asarray(target.position) - np.asarray(actual.position)))
    theta = geodesic_angle(target.rotation, actual.rotation)
    lt, pt, yt = spherical_from_cartesian(target.position)
    la, pa, ya = spherical_from_cartesian(actual.position)
    delta_lpy = np.array([abs(lt - la), abs(pt - pa), abs(float(wrap_angle(yt - ya)))])
    abg_t = axis_angles_batch(np.asarray(target.rotation))
    abg_a = axis_angles_batch(np.asarray(actual.rotation))
    delta_abg = np.abs(wrap_angle(abg_t - abg_a))
    return PoseError(d, theta, delta_lpy, delta_abg)


def yaw_from_rotation(R: np.ndarray) -> float:
    """Heading of the body x-axis projected into the ground plane."""
    return math.atan2(R[1, 0], R[0, 0])


def roll_pitch_from_rotation(R: np.ndarray) -> tuple[float, float]:
    """Roll and pitch of a body frame, z-up world, yaw-roll-pitch factored out."""
    roll = math.atan2(R[2, 1], R[2, 2])
    pitch = -math.asin(max(-1.0, min(1.0, float(R[2, 0]))))
    return roll, pitch


def yaw_frame_of(position: np.ndarray, rotation: np.ndarray) -> SE3Pose:
    """Gravity-aligned frame at `position` keeping only the yaw of `rotation`."""
    return SE3Pose(np.asarray(position, dtype=float), rot_z(yaw_from_rotation(rotation)))
