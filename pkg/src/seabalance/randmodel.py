"""Random kinematic trees for property tests and benchmarks."""

import numpy as np

from .model import Contact, Joint, Link, RobotModel


def _random_inertia(rng, mass):
    # principal moments satisfying the triangle inequality, random orientation
    d = rng.uniform(0.5, 1.5, 3) * mass * 0.01
    d[2] = min(d[2], 0.95 * (d[0] + d[1]))
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    I = Q @ np.diag(d) @ Q.T
    return (I[0, 0], I[1, 1], I[2, 2], I[0, 1], I[0, 2], I[1, 2])


def random_model(rng, n=None, nc=1):
    """Spatial tree with ``n`` revolute joints and ``nc`` contacts on random links."""
    n = int(rng.integers(1, 8)) if n is None else n
    links = [Link("l0", -1, float(rng.uniform(1, 5)), tuple(rng.normal(size=3) * 0.05),
                  _random_inertia(rng, 3.0))]
    joints = []
    for i in range(1, n + 1):
        parent = int(rng.integers(0, i))
        mass = float(rng.uniform(0.2, 3.0))
        links.append(Link(f"l{i}", parent, mass, tuple(rng.normal(size=3) * 0.1),
                          _random_inertia(rng, mass)))
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        joints.append(Joint(f"j{i}", f"l{i}", tuple(axis), tuple(rng.normal(size=3) * 0.2),
                            tuple(rng.uniform(-np.pi, np.pi, 3))))
    contacts = []
    for c in range(nc):
        li = int(rng.integers(1, n + 1)) if n else 0
        contacts.append(Contact(f"c{c}", f"l{li}", tuple(rng.normal(size=3) * 0.1),
                                tuple(rng.uniform(-0.5, 0.5, 3)), (0.08, 0.04)))
    return RobotModel(tuple(links), tuple(joints), tuple(contacts), name="random")
