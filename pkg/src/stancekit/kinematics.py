"""Floating-base kinematic trees: model loading, forward kinematics, mass
properties, and analytic Jacobians.

Conventions
-----------
* A joint moves its child link relative to its parent link: the child frame is
  ``parent_frame * joint.origin * Rot(axis, q)`` for revolute joints, or just
  ``parent_frame * joint.origin`` for fixed joints.
* Joint vectors are plain float arrays with one entry per revolute joint, in
  the order the joints are declared in the model file.
* Jacobian columns are ordered ``[base rotation (3), base translation (3),
  actuated joints (n)]``. The base is perturbed by a local twist: rotation is
  applied multiplicatively on the right (``R <- R Exp(dtheta)``) while the
  translation offset is additive in world coordinates.

Model files are JSON with top-level ``{"links": [...], "joints": [...],
"base_link": ...}``; lengths in meters, masses in kilograms, angles in
radians.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .geometry import (
    Pose,
    quat_from_axis_angle,
    quat_identity,
    quat_multiply,
    quat_rotate,
    quat_to_matrix,
    skew,
)


class ModelError(ValueError):
    """Raised when a model description violates the schema or tree invariants."""


@dataclass(frozen=True)
class Link:
    name: str
    mass: float
    com: np.ndarray  # center of mass in the link frame
    parent_joint: str | None
    foot: bool = False


@dataclass(frozen=True)
class Joint:
    name: str
    type: str  # "revolute" | "fixed"
    parent: str
    axis: np.ndarray | None
    origin: Pose
    limits: tuple[float, float] | None


class KinematicModel:
    """Validated rooted tree of links and joints with precomputed FK tables."""

    def __init__(self, name: str, links: list[Link], joints: list[Joint], base_link: str):
        self.name = name
        self.links = tuple(links)
        self.joints = tuple(joints)
        self.base_link = base_link
        self._validate()
        self._build_tables()

    # -- validation ---------------------------------------------------------

    def _validate(self):
        link_names = [l.name for l in self.links]
        joint_names = [j.name for j in self.joints]
        for names, kind in ((link_names, "link"), (joint_names, "joint")):
            seen = set()
            for n in names:
                if n in seen:
                    raise ModelError(f"duplicate {kind} name '{n}'")
                seen.add(n)
        links_by_name = {l.name: l for l in self.links}
        if self.base_link not in links_by_name:
            raise ModelError(f"base_link '{self.base_link}' is not a declared link")

        child_of = {}
        for link in self.links:
            if link.name == self.base_link:
                if link.parent_joint is not None:
                    raise ModelError(f"base link '{link.name}' must not have a parent joint")
                continue
            if link.parent_joint is None:
                raise ModelError(f"link '{link.name}' has no parent joint")
            if link.parent_joint not in joint_names:
                raise ModelError(f"link '{link.name}' references unknown joint '{link.parent_joint}'")
            if link.parent_joint in child_of:
                raise ModelError(f"joint '{link.parent_joint}' drives more than one link")
            child_of[link.parent_joint] = link.name

        for joint in self.joints:
            if joint.type not in ("revolute", "fixed"):
                raise ModelError(f"joint '{joint.name}' has unsupported type '{joint.type}'")
            if joint.parent not in links_by_name:
                raise ModelError(f"joint '{joint.name}' references unknown parent link '{joint.parent}'")
            if joint.name not in child_of:
                raise ModelError(f"joint '{joint.name}' has no child link")
            if joint.type == "revolute":
                if joint.axis is None:
                    raise ModelError(f"revolute joint '{joint.name}' is missing an axis")
                if abs(np.linalg.norm(joint.axis) - 1.0) > 1e-9:
                    raise ModelError(f"joint '{joint.name}' axis is not unit norm")
                if joint.limits is None:
                    raise ModelError(f"revolute joint '{joint.name}' is missing limits")
                lower, upper = joint.limits
                if lower > upper:
                    raise ModelError(f"joint '{joint.name}' has inverted limits [{lower}, {upper}]")

        for link in self.links:
            if link.mass < 0.0:
                raise ModelError(f"link '{link.name}' has negative mass")
        if sum(l.mass for l in self.links) <= 0.0:
            raise ModelError("total model mass must be positive")

        # Reachability doubles as the cycle check: every link must be reachable
        # from the base by walking the child_of map.
        joints_by_name = {j.name: j for j in self.joints}
        parent_link_of = {child_of[j.name]: joints_by_name[j.name].parent for j in self.joints}
        reached = {self.base_link}
        frontier = [self.base_link]
        children = {}
        for child, parent in parent_link_of.items():
            children.setdefault(parent, []).append(child)
        while frontier:
            cur = frontier.pop()
            for child in children.get(cur, ()):
                if child in reached:
                    raise ModelError(f"link '{child}' is reached twice (cyclic graph)")
                reached.add(child)
                frontier.append(child)
        missing = set(link_names) - reached
        if missing:
            raise ModelError(f"links not connected to base: {sorted(missing)} (cyclic or detached graph)")

        self._child_of_joint = child_of
        self._parent_link_of = parent_link_of

    # -- precomputed tables --------------------------------------------------

    def _build_tables(self):
        self.link_index = {l.name: i for i, l in enumerate(self.links)}
        joints_by_name = {j.name: j for j in self.joints}

        self.actuated_joints = tuple(j.name for j in self.joints if j.type == "revolute")
        self.joint_cols = {n: i for i, n in enumerate(self.actuated_joints)}
        n = len(self.actuated_joints)
        self.lower_limits = np.array(
            [joints_by_name[j].limits[0] for j in self.actuated_joints], dtype=np.float64
        )
        self.upper_limits = np.array(
            [joints_by_name[j].limits[1] for j in self.actuated_joints], dtype=np.float64
        )

        L = len(self.links)
        self._parent_idx = np.full(L, -1, dtype=np.int64)
        self._origin_quat = np.tile(quat_identity(), (L, 1))
        self._origin_trans = np.zeros((L, 3))
        self._axis = np.zeros((L, 3))
        self._joint_col = np.full(L, -1, dtype=np.int64)
        for link in self.links:
            if link.name == self.base_link:
                continue
            i = self.link_index[link.name]
            joint = joints_by_name[link.parent_joint]
            self._parent_idx[i] = self.link_index[joint.parent]
            self._origin_quat[i] = joint.origin.quaternion
            self._origin_trans[i] = joint.origin.translation
            if joint.type == "revolute":
                self._axis[i] = joint.axis
                self._joint_col[i] = self.joint_cols[joint.name]

        # Topological order: sort links by depth so parents come first.
        depth = np.zeros(L, dtype=np.int64)
        for i in range(L):
            d, cur = 0, i
            while self._parent_idx[cur] >= 0:
                cur = self._parent_idx[cur]
                d += 1
            depth[i] = d
        self.topo_order = tuple(int(i) for i in np.argsort(depth, kind="stable"))

        self.masses = np.array([l.mass for l in self.links], dtype=np.float64)
        self.local_com = np.stack([np.asarray(l.com, dtype=np.float64) for l in self.links])
        self.total_mass = float(self.masses.sum())

        # ancestry[l, c]: actuated joint column c lies on the path base -> link l
        self.ancestry = np.zeros((L, n), dtype=bool)
        for i in range(L):
            cur = i
            while cur >= 0:
                c = self._joint_col[cur]
                if c >= 0:
                    self.ancestry[i, c] = True
                cur = int(self._parent_idx[cur])
        # descendant_mass[c, l]: mass of link l if joint c moves it, else 0
        self.descendant_mass = (self.ancestry * self.masses[:, None]).T.copy()

        self.foot_links = tuple(l.name for l in self.links if l.foot)

    # -- convenience ---------------------------------------------------------

    @property
    def n_joints(self) -> int:
        return len(self.actuated_joints)

    def joint_limits(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lower_limits.copy(), self.upper_limits.copy()

    def check_joint_vector(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64)
        if q.shape[-1] != self.n_joints:
            raise ValueError(
                f"joint vector has {q.shape[-1]} entries, model '{self.name}' has {self.n_joints}"
            )
        return q


# ---------------------------------------------------------------------------
# model loading
# ---------------------------------------------------------------------------


def _pose_from_dict(data, where: str) -> Pose:
    if data is None:
        return Pose.identity()
    if not isinstance(data, dict):
        raise ModelError(f"{where}: origin must be an object")
    t = data.get("translation", (0.0, 0.0, 0.0))
    q = data.get("quaternion", (1.0, 0.0, 0.0, 0.0))
    try:
        return Pose(np.asarray(q, dtype=np.float64), np.asarray(t, dtype=np.float64))
    except (ValueError, TypeError) as exc:
        raise ModelError(f"{where}: invalid origin ({exc})") from exc


def load_model(description) -> KinematicModel:
    """Build a validated KinematicModel from JSON text or an already-parsed dict.

    Raises ModelError naming the offending element for schema violations,
    cyclic graphs, non-unit axes, and inverted limits.
    """
    if isinstance(description, (str, bytes)):
        try:
            data = json.loads(description)
        except json.JSONDecodeError as exc:
            raise ModelError(f"model description is not valid JSON: {exc}") from exc
    else:
        data = description
    if not isinstance(data, dict):
        raise ModelError("model description must be a JSON object")
    for key in ("links", "joints", "base_link"):
        if key not in data:
            raise ModelError(f"model description is missing '{key}'")

    links = []
    for entry in data["links"]:
        if "name" not in entry:
            raise ModelError("link entry is missing 'name'")
        name = entry["name"]
        if "mass" not in entry:
            raise ModelError(f"link '{name}' is missing 'mass'")
        com = np.asarray(entry.get("com", (0.0, 0.0, 0.0)), dtype=np.float64)
        if com.shape != (3,):
            raise ModelError(f"link '{name}' com must be a 3-vector")
        links.append(
            Link(
                name=name,
                mass=float(entry["mass"]),
                com=com,
                parent_joint=entry.get("parent_joint"),
                foot=bool(entry.get("foot", False)),
            )
        )

    joints = []
    for entry in data["joints"]:
        if "name" not in entry:
            raise ModelError("joint entry is missing 'name'")
        name = entry["name"]
        jtype = entry.get("type", "revolute")
        axis = entry.get("axis")
        if axis is not None:
            axis = np.asarray(axis, dtype=np.float64)
            if axis.shape != (3,):
                raise ModelError(f"joint '{name}' axis must be a 3-vector")
        limits = entry.get("limits")
        if limits is not None:
            if len(limits) != 2:
                raise ModelError(f"joint '{name}' limits must be [lower, upper]")
            limits = (float(limits[0]), float(limits[1]))
        if "parent" not in entry:
            raise ModelError(f"joint '{name}' is missing 'parent'")
        joints.append(
            Joint(
                name=name,
                type=jtype,
                parent=entry["parent"],
                axis=axis,
                origin=_pose_from_dict(entry.get("origin"), f"joint '{name}'"),
                limits=limits,
            )
        )

    return KinematicModel(
        name=data.get("name", "model"),
        links=links,
        joints=joints,
        base_link=data["base_link"],
    )


def load_model_file(path) -> KinematicModel:
    return load_model(Path(path).read_text())


def default_model_path() -> Path:
    """Path of the bundled 23-DoF humanoid model."""
    return Path(resources.files("stancekit") / "models" / "humanoid23.json")


# ---------------------------------------------------------------------------
# forward kinematics (batched over frames internally)
# ---------------------------------------------------------------------------


@dataclass
class FkData:
    """World-frame FK results for a batch of N frames.

    ``link_quats``/``link_trans`` are indexed ``[link, frame]``;
    ``axis_world``/``joint_origin_world`` are indexed ``[joint column, frame]``.
    """

    link_quats: np.ndarray  # (L, N, 4)
    link_trans: np.ndarray  # (L, N, 3)
    axis_world: np.ndarray  # (n, N, 3)
    joint_origin_world: np.ndarray  # (n, N, 3)
    base_quat: np.ndarray  # (N, 4)
    base_trans: np.ndarray  # (N, 3)
    _base_rot: np.ndarray | None = None
    _link_coms: np.ndarray | None = None

    def base_rot(self) -> np.ndarray:
        if self._base_rot is None:
            self._base_rot = quat_to_matrix(self.base_quat)
        return self._base_rot


def fk_batch(model: KinematicModel, base_quat, base_trans, joints) -> FkData:
    """Forward kinematics for N frames at once.

    base_quat: (N, 4), base_trans: (N, 3), joints: (N, n).
    """
    base_quat = np.asarray(base_quat, dtype=np.float64)
    base_trans = np.asarray(base_trans, dtype=np.float64)
    joints = model.check_joint_vector(joints)
    N = base_quat.shape[0]
    L = len(model.links)
    n = model.n_joints

    lq = np.empty((L, N, 4))
    lt = np.empty((L, N, 3))
    ax = np.empty((n, N, 3))
    ao = np.empty((n, N, 3))

    base_idx = model.link_index[model.base_link]
    lq[base_idx] = base_quat
    lt[base_idx] = base_trans
    for i in model.topo_order:
        if i == base_idx:
            continue
        p = model._parent_idx[i]
        pq, pt = lq[p], lt[p]
        t = pt + quat_rotate(pq, model._origin_trans[i])
        q = quat_multiply(pq, model._origin_quat[i])
        col = model._joint_col[i]
        if col >= 0:
            q = quat_multiply(q, quat_from_axis_angle(model._axis[i], joints[:, col]))
            ao[col] = t
            ax[col] = quat_rotate(q, model._axis[i])
        lq[i] = q
        lt[i] = t
    return FkData(lq, lt, ax, ao, base_quat, base_trans)


def link_coms_world(model: KinematicModel, fk: FkData) -> np.ndarray:
    """World positions of every link's center of mass, shape (L, N, 3)."""
    if fk._link_coms is None:
        fk._link_coms = fk.link_trans + quat_rotate(fk.link_quats, model.local_com[:, None, :])
    return fk._link_coms


def com_batch(model: KinematicModel, fk: FkData) -> np.ndarray:
    """Whole-body center of mass per frame, shape (N, 3)."""
    coms = link_coms_world(model, fk)
    return np.einsum("l,lnc->nc", model.masses, coms) / model.total_mass


def link_jacobian_batch(
    model: KinematicModel, fk: FkData, link_idx: int, optimize_base: bool = True
) -> np.ndarray:
    """Geometric Jacobian of one link's pose for every frame, (N, 6, m).

    Rows are [angular; linear] world-frame velocities; columns follow the
    module-level ordering (base twist first when optimize_base).
    """
    N = fk.base_quat.shape[0]
    n = model.n_joints
    w = fk.link_trans[link_idx]  # (N, 3)
    mask = model.ancestry[link_idx].astype(np.float64)  # (n,)

    axT = fk.axis_world.transpose(1, 0, 2)  # (N, n, 3)
    aoT = fk.joint_origin_world.transpose(1, 0, 2)
    ang_j = axT * mask[None, :, None]
    lin_j = np.cross(axT, w[:, None, :] - aoT) * mask[None, :, None]

    m = 6 + n if optimize_base else n
    J = np.zeros((N, 6, m))
    off = 6 if optimize_base else 0
    J[:, 0:3, off:] = ang_j.transpose(0, 2, 1)
    J[:, 3:6, off:] = lin_j.transpose(0, 2, 1)
    if optimize_base:
        R = fk.base_rot()
        J[:, 0:3, 0:3] = R
        J[:, 3:6, 0:3] = -skew(w - fk.base_trans) @ R
        J[:, 3:6, 3:6] = np.eye(3)
    return J


def com_jacobian_batch(model: KinematicModel, fk: FkData, optimize_base: bool = True) -> np.ndarray:
    """Jacobian of the whole-body CoM for every frame, (N, 3, m)."""
    N = fk.base_quat.shape[0]
    n = model.n_joints
    coms = link_coms_world(model, fk)
    com = np.einsum("l,lnc->nc", model.masses, coms) / model.total_mass

    # Per-joint subtree aggregates: weighted CoM sum and swept mass.
    s = np.einsum("cl,lnx->cnx", model.descendant_mass, coms)  # (n, N, 3)
    mu = model.descendant_mass.sum(axis=1)  # (n,)
    lever = s - mu[:, None, None] * fk.joint_origin_world
    cols = np.cross(fk.axis_world, lever) / model.total_mass  # (n, N, 3)

    m = 6 + n if optimize_base else n
    J = np.zeros((N, 3, m))
    off = 6 if optimize_base else 0
    J[:, :, off:] = cols.transpose(1, 2, 0)
    if optimize_base:
        R = fk.base_rot()
        J[:, :, 0:3] = -skew(com - fk.base_trans) @ R
        J[:, :, 3:6] = np.eye(3)
    return J


# ---------------------------------------------------------------------------
# single-configuration public API
# ---------------------------------------------------------------------------


def forward_kinematics(model: KinematicModel, base: Pose, q) -> dict[str, Pose]:
    """World pose of every link; the base link's pose equals `base` exactly."""
    q = model.check_joint_vector(q)
    fk = fk_batch(model, base.quaternion[None], base.translation[None], q[None])
    out = {}
    for name, idx in model.link_index.items():
        out[name] = Pose(
            fk.link_quats[idx, 0] / np.linalg.norm(fk.link_quats[idx, 0]),
            fk.link_trans[idx, 0],
        )
    base_idx = model.link_index[model.base_link]
    out[model.base_link] = Pose(
        fk.link_quats[base_idx, 0] / np.linalg.norm(fk.link_quats[base_idx, 0]),
        fk.link_trans[base_idx, 0].copy(),
    )
    return out


def center_of_mass(model: KinematicModel, base: Pose, q) -> np.ndarray:
    """Mass-weighted mean of world-frame link CoM positions."""
    q = model.check_joint_vector(q)
    fk = fk_batch(model, base.quaternion[None], base.translation[None], q[None])
    return com_batch(model, fk)[0]


def project_xy(v) -> np.ndarray:
    """Drop the z component of a 3-vector (or batch thereof)."""
    return np.asarray(v, dtype=np.float64)[..., :2].copy()


def pose_jacobian(model: KinematicModel, base: Pose, q, link_name: str) -> np.ndarray:
    """6x(6+n) Jacobian of a link pose w.r.t. base twist and joint angles."""
    if link_name not in model.link_index:
        raise ValueError(f"unknown link '{link_name}'")
    q = model.check_joint_vector(q)
    fk = fk_batch(model, base.quaternion[None], base.translation[None], q[None])
    return link_jacobian_batch(model, fk, model.link_index[link_name])[0]


def com_jacobian(model: KinematicModel, base: Pose, q) -> np.ndarray:
    """3x(6+n) Jacobian of the whole-body CoM (linear part only)."""
    q = model.check_joint_vector(q)
    fk = fk_batch(model, base.quaternion[None], base.translation[None], q[None])
    return com_jacobian_batch(model, fk)[0]
