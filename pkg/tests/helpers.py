"""Shared test utilities."""

import numpy as np

from evolfem.geometry import EllipsoidEvolution


class StaticSphere(EllipsoidEvolution):
    """The unit sphere at rest."""

    def scale(self, t):
        return 1.0

    def scale_rate(self, t):
        return 0.0

    def velocity(self, x, t):
        return np.zeros(np.shape(x))

    def velocity_jacobian(self, x, t):
        return np.zeros(np.shape(x) + (3,))
