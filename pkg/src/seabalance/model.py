"""Robot model description: kinematic tree, inertias, contact frames.

Model files are TOML documents with three arrays of tables::

    name = "pole3"
    gravity = 9.81

    [[link]]
    name = "body"
    parent = -1                     # index into the link list, -1 for the base
    mass = 5.0                      # kg
    com = [0.0, 0.0, 0.0]           # m, link frame
    inertia = [0.1, 0.1, 0.02, 0.0, 0.0, 0.0]   # ixx iyy izz ixy ixz iyz, kg m^2, about CoM

    [[joint]]
    name = "ankle_roll"
    type = "revolute"
    link = "foot"                   # the child link this joint drives
    axis = [1.0, 0.0, 0.0]
    xyz = [0.0, 0.0, -0.5]          # joint frame origin in the parent link frame, m
    rpy = [0.0, 0.0, 0.0]           # joint frame orientation, rad (R = Rz Ry Rx)
    armature = 0.0                  # optional added joint-space inertia, kg m^2

    [[contact]]
    name = "sole"
    link = "foot"
    xyz = [0.0, 0.0, -0.05]
    rpy = [0.0, 0.0, 0.0]
    half_extents = [0.08, 0.04]     # sole rectangle half sizes along contact x, y (m)

Link order is the document order; the base must come first and every link
must follow its parent. Joint order (the ordering of ``s``) is the joint
document order.
"""

import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .kernels import KernelModel


class ModelError(ValueError):
    """Invalid robot model description."""


class ModelParseError(ModelError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class CyclicTreeError(ModelError):
    pass


class InertiaError(ModelError):
    pass


class AxisError(ModelError):
    pass


@dataclass(frozen=True)
class Link:
    name: str
    parent: int
    mass: float
    com: tuple
    inertia: tuple  # ixx, iyy, izz, ixy, ixz, iyz

    def inertia_matrix(self):
        ixx, iyy, izz, ixy, ixz, iyz = self.inertia
        return np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])


@dataclass(frozen=True)
class Joint:
    name: str
    link: str
    axis: tuple
    xyz: tuple = (0.0, 0.0, 0.0)
    rpy: tuple = (0.0, 0.0, 0.0)
    type: str = "revolute"
    armature: float = 0.0


@dataclass(frozen=True)
class Contact:
    name: str
    link: str
    xyz: tuple = (0.0, 0.0, 0.0)
    rpy: tuple = (0.0, 0.0, 0.0)
    half_extents: tuple = (0.05, 0.05)


def rpy_to_rot(rpy):
    r, p, y = rpy
    cr, sr = np.cos(r), np.sin(r)
    cp, sp = np.cos(p), np.sin(p)
    cy, sy = np.cos(y), np.sin(y)
    Rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    Ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    Rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


@dataclass(frozen=True, eq=False)
class RobotModel:
    """Immutable floating-base kinematic tree (link 0 is the base)."""

    links: tuple
    joints: tuple
    contacts: tuple = ()
    gravity: float = 9.81
    name: str = "robot"
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {l.name: i for i, l in enumerate(self.links)})
        _validate(self)

    @property
    def n(self):
        return len(self.joints)

    @property
    def nc(self):
        return len(self.contacts)

    @property
    def total_mass(self):
        return float(sum(l.mass for l in self.links))

    @property
    def joint_names(self):
        return [j.name for j in self.joints]

    def link_index(self, name):
        try:
            return self._index[name]
        except KeyError:
            raise ModelError(f"unknown link {name!r}") from None

    def joint_index(self, name):
        for k, j in enumerate(self.joints):
            if j.name == name:
                return k
        raise ModelError(f"unknown joint {name!r}")

    def contact_index(self, name):
        for k, c in enumerate(self.contacts):
            if c.name == name:
                return k
        raise ModelError(f"unknown contact {name!r}")

    @property
    def armature(self):
        return np.array([j.armature for j in self.joints])

    def with_armature(self, armature):
        armature = np.broadcast_to(np.asarray(armature, dtype=float), (self.n,))
        joints = tuple(replace(j, armature=float(a)) for j, a in zip(self.joints, armature))
        return replace(self, joints=joints)

    def with_contacts(self, names):
        """Copy keeping only the named contacts (in the given order)."""
        contacts = tuple(self.contacts[self.contact_index(c)] for c in names)
        return replace(self, contacts=contacts)

    @cached_property
    def kernel(self):
        nl = len(self.links)
        joint_of_link = np.full(nl, -1)
        for k, j in enumerate(self.joints):
            joint_of_link[self.link_index(j.link)] = k
        axis = np.array([j.axis for j in self.joints], dtype=float).reshape(-1, 3)
        axis = axis / np.linalg.norm(axis, axis=1, keepdims=True) if self.n else axis
        return KernelModel(
            parent=[l.parent for l in self.links],
            joint=joint_of_link,
            axis=axis,
            jrot=np.array([rpy_to_rot(j.rpy) for j in self.joints]).reshape(-1, 3, 3),
            jpos=np.array([j.xyz for j in self.joints], dtype=float).reshape(-1, 3),
            mass=[l.mass for l in self.links],
            lcom=np.array([l.com for l in self.links], dtype=float),
            linertia=np.array([l.inertia_matrix() for l in self.links]),
            clink=[self.link_index(c.link) for c in self.contacts],
            cpos=np.array([c.xyz for c in self.contacts], dtype=float).reshape(-1, 3),
            crot=np.array([rpy_to_rot(c.rpy) for c in self.contacts]).reshape(-1, 3, 3),
            armature=self.armature,
            gravity=self.gravity,
        )

    def __eq__(self, other):
        if not isinstance(other, RobotModel):
            return NotImplemented
        return (self.links, self.joints, self.contacts, self.gravity, self.name) == \
            (other.links, other.joints, other.contacts, other.gravity, other.name)

    __hash__ = object.__hash__


def _validate(model):
    links = model.links
    if not links:
        raise ModelError("model has no links")
    for i, l in enumerate(links):
        if l.parent == i:
            raise CyclicTreeError(f"link {l.name!r} is its own parent")
    # walk each parent chain; a chain that revisits a link is a cycle
    for i in range(len(links)):
        seen = {i}
        j = links[i].parent
        while j != -1:
            if not 0 <= j < len(links):
                raise ModelError(f"link {links[i].name!r}: parent index {j} out of range")
            if j in seen:
                raise CyclicTreeError(f"cycle through link {links[j].name!r}")
            seen.add(j)
            j = links[j].parent
    roots = [i for i, l in enumerate(links) if l.parent == -1]
    if roots != [0]:
        raise ModelError("exactly one base link (parent = -1) is required and it must come first")
    for i, l in enumerate(links):
        if i > 0 and l.parent > i:
            raise ModelError(f"link {l.name!r} is listed before its parent")
        if not l.mass > 0:
            raise InertiaError(f"link {l.name!r}: mass must be positive")
        I = l.inertia_matrix()
        try:
            np.linalg.cholesky(I)
        except np.linalg.LinAlgError:
            raise InertiaError(f"link {l.name!r}: rotational inertia is not positive definite") from None
    if len(model._index) != len(links):
        raise ModelError("duplicate link names")
    driven = {}
    for k, j in enumerate(model.joints):
        if j.type != "revolute":
            raise ModelError(f"joint {j.name!r}: unsupported type {j.type!r}")
        if not np.linalg.norm(j.axis) > 1e-12:
            raise AxisError(f"joint {j.name!r}: zero-norm axis")
        if abs(np.linalg.norm(j.axis) - 1.0) > 1e-9:
            raise AxisError(f"joint {j.name!r}: axis must be a unit vector")
        li = model.link_index(j.link)
        if li == 0:
            raise ModelError(f"joint {j.name!r} drives the base link")
        if li in driven:
            raise ModelError(f"link {j.link!r} is driven by two joints")
        driven[li] = k
    if len(driven) != len(links) - 1:
        missing = [l.name for i, l in enumerate(links) if i > 0 and i not in driven]
        raise ModelError(f"links without a joint: {missing}")
    for c in model.contacts:
        model.link_index(c.link)
        hx, hy = c.half_extents
        if not (hx > 0 and hy > 0):
            raise ModelError(f"contact {c.name!r}: half extents must be positive")


_LINE_RE = re.compile(r"line (\d+)")


def _vec(entry, key, size, where, default=None):
    if key not in entry:
        if default is None:
            raise ModelParseError(f"{where}: missing field {key!r}")
        return default
    val = entry[key]
    if not isinstance(val, list) or len(val) != size:
        raise ModelParseError(f"{where}: field {key!r} must be a list of {size} numbers")
    return tuple(float(x) for x in val)


def _num(entry, key, where, default=None):
    if key not in entry:
        if default is None:
            raise ModelParseError(f"{where}: missing field {key!r}")
        return default
    return float(entry[key])


def loads(text):
    """Parse a model document."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = _LINE_RE.search(str(exc))
        raise ModelParseError(str(exc), line=int(m.group(1)) if m else None) from None
    unknown = set(doc) - {"name", "gravity", "link", "joint", "contact"}
    if unknown:
        raise ModelParseError(f"unknown top-level keys {sorted(unknown)}")
    links = []
    for i, e in enumerate(doc.get("link", [])):
        where = f"link #{i}"
        if "name" not in e or "parent" not in e:
            raise ModelParseError(f"{where}: 'name' and 'parent' are required")
        links.append(Link(
            name=str(e["name"]), parent=int(e["parent"]),
            mass=_num(e, "mass", where), com=_vec(e, "com", 3, where),
            inertia=_vec(e, "inertia", 6, where),
        ))
    joints = []
    for i, e in enumerate(doc.get("joint", [])):
        where = f"joint #{i}"
        if "name" not in e or "link" not in e:
            raise ModelParseError(f"{where}: 'name' and 'link' are required")
        joints.append(Joint(
            name=str(e["name"]), link=str(e["link"]), type=str(e.get("type", "revolute")),
            axis=_vec(e, "axis", 3, where), xyz=_vec(e, "xyz", 3, where, (0.0, 0.0, 0.0)),
            rpy=_vec(e, "rpy", 3, where, (0.0, 0.0, 0.0)),
            armature=_num(e, "armature", where, 0.0),
        ))
    contacts = []
    for i, e in enumerate(doc.get("contact", [])):
        where = f"contact #{i}"
        if "name" not in e or "link" not in e:
            raise ModelParseError(f"{where}: 'name' and 'link' are required")
        contacts.append(Contact(
            name=str(e["name"]), link=str(e["link"]),
            xyz=_vec(e, "xyz", 3, where, (0.0, 0.0, 0.0)),
            rpy=_vec(e, "rpy", 3, where, (0.0, 0.0, 0.0)),
            half_extents=_vec(e, "half_extents", 2, where),
        ))
    return RobotModel(links=tuple(links), joints=tuple(joints), contacts=tuple(contacts),
                      gravity=float(doc.get("gravity", 9.81)), name=str(doc.get("name", "robot")))


def load_model(path):
    return loads(Path(path).read_text())


def _fmt(x):
    return repr(float(x))


def _fvec(v):
    return "[" + ", ".join(_fmt(x) for x in v) + "]"


def dumps(model):
    """Serialise a model; ``loads(dumps(m)) == m`` holds exactly."""
    out = [f"name = {_quote(model.name)}", f"gravity = {_fmt(model.gravity)}", ""]
    for l in model.links:
        out += ["[[link]]", f"name = {_quote(l.name)}", f"parent = {l.parent}",
                f"mass = {_fmt(l.mass)}", f"com = {_fvec(l.com)}", f"inertia = {_fvec(l.inertia)}", ""]
    for j in model.joints:
        out += ["[[joint]]", f"name = {_quote(j.name)}", f"type = {_quote(j.type)}",
                f"link = {_quote(j.link)}", f"axis = {_fvec(j.axis)}", f"xyz = {_fvec(j.xyz)}",
                f"rpy = {_fvec(j.rpy)}"]
        if j.armature != 0.0:
            out.append(f"armature = {_fmt(j.armature)}")
        out.append("")
    for c in model.contacts:
        out += ["[[contact]]", f"name = {_quote(c.name)}", f"link = {_quote(c.link)}",
                f"xyz = {_fvec(c.xyz)}", f"rpy = {_fvec(c.rpy)}",
                f"half_extents = {_fvec(c.half_extents)}", ""]
    return "\n".join(out)


def _quote(s):
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def single_body(mass=1.0, inertia=(0.1, 0.2, 0.3, 0.0, 0.0, 0.0), gravity=9.81):
    """Free-floating single rigid body with no joints."""
    return RobotModel(links=(Link("body", -1, float(mass), (0.0, 0.0, 0.0), tuple(inertia)),),
                      joints=(), gravity=gravity, name="single_body")
