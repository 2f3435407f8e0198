"""Surface samplers for the parametric toy shape families."""
from __future__ import annotations

import math

import numpy as np


def _allocate(n: int, areas) -> np.ndarray:
    areas = np.asarray(areas, dtype=np.float64)
    counts = np.floor(n * areas / areas.sum()).astype(int)
    counts[np.argmax(areas)] += n - counts.sum()
    return counts


def sphere(rng, n, radius=1.0):
    v = rng.standard_normal((n, 3))
    return radius * v / np.linalg.norm(v, axis=1, keepdims=True)


def box(rng, n, half, center=(0.0, 0.0, 0.0)):
    hx, hy, hz = half
    areas = [hy * hz, hy * hz, hx * hz, hx * hz, hx * hy, hx * hy]
    parts = []
    for face, m in enumerate(_allocate(n, areas)):
        p = rng.uniform(-1, 1, size=(m, 3)) * np.array(half)
        axis = face // 2
        p[:, axis] = half[axis] * (1 if face % 2 == 0 else -1)
        parts.append(p)
    return np.concatenate(parts) + np.asarray(center)


def cylinder(rng, n, radius, height, caps=True, center=(0.0, 0.0, 0.0), axis=1):
    """Cylinder along ``axis`` (0=x, 1=y, 2=z)."""
    areas = [2 * math.pi * radius * height] + ([math.pi * radius**2] * 2 if caps else [])
    counts = _allocate(n, areas)
    th = rng.uniform(0, 2 * math.pi, counts[0])
    side = np.stack([radius * np.cos(th), rng.uniform(-height / 2, height / 2, counts[0]), radius * np.sin(th)], 1)
    parts = [side]
    if caps:
        for sign, m in zip((1, -1), counts[1:]):
            r = radius * np.sqrt(rng.random(m))
            t = rng.uniform(0, 2 * math.pi, m)
            parts.append(np.stack([r * np.cos(t), np.full(m, sign * height / 2), r * np.sin(t)], 1))
    p = np.concatenate(parts)
    p = p[:, _axis_perm(axis)]
    return p + np.asarray(center)


def _axis_perm(axis):
    return {0: [1, 0, 2], 1: [0, 1, 2], 2: [0, 2, 1]}[axis]


def cone(rng, n, radius, height):
    slant = math.hypot(radius, height)
    m_side, m_base = _allocate(n, [math.pi * radius * slant, math.pi * radius**2])
    # uniform on the lateral surface: distance from apex ~ sqrt(u)
    s = np.sqrt(rng.random(m_side))
    th = rng.uniform(0, 2 * math.pi, m_side)
    side = np.stack([s * radius * np.cos(th), height / 2 - s * height, s * radius * np.sin(th)], 1)
    r = radius * np.sqrt(rng.random(m_base))
    t = rng.uniform(0, 2 * math.pi, m_base)
    base = np.stack([r * np.cos(t), np.full(m_base, -height / 2), r * np.sin(t)], 1)
    return np.concatenate([side, base])


def torus(rng, n, major, minor):
    out = np.empty((0, 3))
    while len(out) < n:
        u = rng.uniform(0, 2 * math.pi, 2 * n)
        v = rng.uniform(0, 2 * math.pi, 2 * n)
        keep = rng.random(2 * n) < (major + minor * np.cos(v)) / (major + minor)
        u, v = u[keep], v[keep]
        ring = major + minor * np.cos(v)
        out = np.concatenate([out, np.stack([ring * np.cos(u), minor * np.sin(v), ring * np.sin(u)], 1)])
    return out[:n]


def plane_cross(rng, n, span, length, chord):
    """Fuselage along z crossed by a thin wing along x."""
    fuselage_r = 0.12 * length
    areas = [2 * math.pi * fuselage_r * length, 2 * span * chord]
    m_body, m_wing = _allocate(n, areas)
    body = cylinder(rng, m_body, fuselage_r, length, axis=2)
    wing = box(rng, m_wing, (span / 2, 0.03, chord / 2), center=(0.0, 0.0, 0.1 * length))
    return np.concatenate([body, wing])


def l_bracket(rng, n, arm, thickness, depth):
    h = (arm / 2, thickness / 2, depth / 2)
    v = (thickness / 2, arm / 2, depth / 2)
    m_h, m_v = _allocate(n, [1.0, 1.0])
    return np.concatenate([box(rng, m_h, h, center=(arm / 2, 0.0, 0.0)),
                           box(rng, m_v, v, center=(0.0, arm / 2, 0.0))])


def capsule(rng, n, radius, length):
    m_side, m_caps = _allocate(n, [2 * math.pi * radius * length, 4 * math.pi * radius**2])
    side = cylinder(rng, m_side, radius, length, caps=False)
    caps = sphere(rng, m_caps, radius)
    caps[:, 1] += np.where(caps[:, 1] >= 0, length / 2, -length / 2)
    return np.concatenate([side, caps])


FAMILIES = ("sphere", "cube", "cylinder", "cone", "torus", "plane", "l_bracket", "capsule")


def sample_family(name: str, rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` surface points of one family member with randomly perturbed proportions."""
    j = lambda lo, hi: rng.uniform(lo, hi)  # noqa: E731
    if name == "sphere":
        return sphere(rng, n) * np.array([j(0.9, 1.1), j(0.9, 1.1), j(0.9, 1.1)])
    if name == "cube":
        return box(rng, n, (j(0.85, 1.15), j(0.85, 1.15), j(0.85, 1.15)))
    if name == "cylinder":
        return cylinder(rng, n, j(0.4, 0.55), j(1.6, 2.2))
    if name == "cone":
        return cone(rng, n, j(0.7, 0.9), j(1.4, 1.8))
    if name == "torus":
        return torus(rng, n, 1.0, j(0.25, 0.4))
    if name == "plane":
        return plane_cross(rng, n, j(1.6, 2.0), j(1.8, 2.2), j(0.3, 0.45))
    if name == "l_bracket":
        return l_bracket(rng, n, j(1.3, 1.7), j(0.2, 0.3), j(0.6, 0.9))
    if name == "capsule":
        return capsule(rng, n, j(0.35, 0.45), j(1.0, 1.4))
    raise KeyError(name)
