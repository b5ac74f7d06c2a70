"""Evolving ellipsoid domain and ambient calculus for smooth fields.

The unit ball is stretched along x1 by ``G(x, t) = (sqrt(a(t)) x1, x2, x3)``
with ``a(t) = 1 + sin(t)/4``.  Exact fields live in R^3 (they are their own
extensions) and carry hand-coded derivatives; every operator here works on
batches of points, shape (..., 3).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError

ON_SURFACE_TOL = 1e-8


@dataclass(frozen=True)
class AmbientField:
    """Smooth scalar field with value, spatial gradient and time derivative."""
    value: Callable
    gradient: Callable
    time_derivative: Callable
    name: str = ""

    def __call__(self, x, t):
        return self.value(np.asarray(x, dtype=float), t)


def _zero(x, t):
    return np.zeros(np.shape(x)[:-1])


def constant_field(c: float) -> AmbientField:
    return AmbientField(
        lambda x, t: np.full(np.shape(x)[:-1], float(c)),
        lambda x, t: np.zeros(np.shape(x)),
        _zero,
        name=f"const({c})",
    )


class EllipsoidEvolution:
    """The stretching ellipsoid: flow, velocity and level set."""

    def scale(self, t):
        return 1.0 + 0.25 * np.sin(t)

    def scale_rate(self, t):
        return 0.25 * np.cos(t)

    def flow(self, x, t):
        y = np.array(x, dtype=float, copy=True)
        y[..., 0] *= np.sqrt(self.scale(t))
        return y

    def velocity(self, x, t):
        x = np.asarray(x, dtype=float)
        w = np.zeros_like(x)
        w[..., 0] = np.cos(t) * x[..., 0] / (8.0 * self.scale(t))
        return w

    def velocity_jacobian(self, x, t):
        x = np.asarray(x, dtype=float)
        J = np.zeros(x.shape + (3,))
        J[..., 0, 0] = np.cos(t) / (8.0 * self.scale(t))
        return J

    def level_set(self, x, t):
        x = np.asarray(x, dtype=float)
        return x[..., 0] ** 2 / self.scale(t) + x[..., 1] ** 2 + x[..., 2] ** 2 - 1.0

    def level_set_gradient(self, x, t):
        g = 2.0 * np.array(x, dtype=float, copy=True)
        g[..., 0] /= self.scale(t)
        return g

    def normal(self, x, t):
        """Unit level-set normal; also defined off the surface."""
        g = self.level_set_gradient(x, t)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)


DEFAULT_EVOLUTION = EllipsoidEvolution()


def flow(x, t, evolution=DEFAULT_EVOLUTION):
    return evolution.flow(x, t)


def velocity(x, t, evolution=DEFAULT_EVOLUTION):
    return evolution.velocity(x, t)


def outward_normal(x, t, evolution=DEFAULT_EVOLUTION):
    """Outward unit normal of the surface at time ``t``; points must lie on it."""
    psi = evolution.level_set(x, t)
    if np.any(np.abs(psi) > ON_SURFACE_TOL):
        raise DomainError(f"point not on the surface (|psi| = {np.abs(psi).max():.3e})")
    return evolution.normal(x, t)


def project_tangential(v, nu):
    return v - np.sum(v * nu, axis=-1, keepdims=True) * nu


def tangential_gradient(f: AmbientField, x, t, evolution=DEFAULT_EVOLUTION, normal=None):
    """(I - nu nu^T) grad f.  Pass ``normal`` to skip the on-surface check."""
    x = np.asarray(x, dtype=float)
    nu = outward_normal(x, t, evolution) if normal is None else normal
    return project_tangential(f.gradient(x, t), nu)


def tangential_divergence_velocity(x, t, evolution=DEFAULT_EVOLUTION, normal=None):
    x = np.asarray(x, dtype=float)
    nu = outward_normal(x, t, evolution) if normal is None else normal
    J = evolution.velocity_jacobian(x, t)
    return np.trace(J, axis1=-2, axis2=-1) - np.einsum("...i,...ij,...j->...", nu, J, nu)


def bulk_divergence_velocity(x, t, evolution=DEFAULT_EVOLUTION):
    return np.trace(evolution.velocity_jacobian(x, t), axis1=-2, axis2=-1)


def material_derivative(f: AmbientField, x, t, evolution=DEFAULT_EVOLUTION):
    x = np.asarray(x, dtype=float)
    return f.time_derivative(x, t) + np.sum(evolution.velocity(x, t) * f.gradient(x, t), axis=-1)


def initial_surface_projection(x):
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(r <= 0.5):
        raise DomainError("point too close to the origin for radial projection")
    return x / r
