"""The three benchmark problems on the stretching ellipsoid (T = 1)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import CoefficientSet, CoupledData, ManufacturedData, identity_coefficients
from .geometry import DEFAULT_EVOLUTION, AmbientField, EllipsoidEvolution

PROBLEM_IDS = ("surface", "bulk", "coupled")


@dataclass(frozen=True)
class ProblemDefinition:
    id: str
    evolution: EllipsoidEvolution
    coefficients: dict   # "bulk" / "surface" -> CoefficientSet
    exact: dict          # "bulk" / "surface" -> AmbientField
    alpha: float = 1.0
    beta: float = 1.0
    final_time: float = 1.0
    supported_orders: frozenset = frozenset({1, 2})

    def data(self, part: str) -> ManufacturedData:
        return ManufacturedData(self.exact[part], self.coefficients[part])

    def coupled_data(self) -> CoupledData:
        return CoupledData(self.data("bulk"), self.data("surface"), self.alpha, self.beta)


# ------------------------------------------------------------ exact fields

def _product_field(i: int, j: int, name: str) -> AmbientField:
    """sin(t) x_i x_j."""
    def value(x, t):
        return np.sin(t) * x[..., i] * x[..., j]

    def gradient(x, t):
        g = np.zeros(np.shape(x))
        g[..., i] += np.sin(t) * x[..., j]
        g[..., j] += np.sin(t) * x[..., i]
        return g

    def dt(x, t):
        return np.cos(t) * x[..., i] * x[..., j]

    return AmbientField(value, gradient, dt, name)


def _cosine_field() -> AmbientField:
    """sin(t) cos(pi x1) cos(pi x2)."""
    pi = np.pi

    def value(x, t):
        return np.sin(t) * np.cos(pi * x[..., 0]) * np.cos(pi * x[..., 1])

    def gradient(x, t):
        g = np.zeros(np.shape(x))
        g[..., 0] = -pi * np.sin(t) * np.sin(pi * x[..., 0]) * np.cos(pi * x[..., 1])
        g[..., 1] = -pi * np.sin(t) * np.cos(pi * x[..., 0]) * np.sin(pi * x[..., 1])
        return g

    def dt(x, t):
        return np.cos(t) * np.cos(pi * x[..., 0]) * np.cos(pi * x[..., 1])

    return AmbientField(value, gradient, dt, "sin(t)cos(pi x1)cos(pi x2)")


# ------------------------------------------------------------ coefficients

def _scaled_identity(x, t):
    s = 1.0 + x[..., 0] ** 2
    return s[..., None, None] * np.eye(3)


_B = np.array([1.0, 2.0, 0.0])


def _tangential_b(x, t, nu):
    return _B - (nu @ _B)[..., None] * nu


def _constant_b(x, t, nu=None):
    return np.broadcast_to(_B, np.shape(x)).copy()


def surface_coefficients() -> CoefficientSet:
    return CoefficientSet(_scaled_identity, _tangential_b,
                          lambda x, t: np.sin(x[..., 0] * x[..., 1]),
                          tangential_advection=True)


def bulk_coefficients() -> CoefficientSet:
    return CoefficientSet(_scaled_identity, _constant_b,
                          lambda x, t: np.cos(x[..., 0] * x[..., 1]))


# ------------------------------------------------------------ problems

def surface_problem() -> ProblemDefinition:
    return ProblemDefinition(
        "surface", DEFAULT_EVOLUTION,
        {"surface": surface_coefficients()},
        {"surface": _product_field(1, 2, "sin(t)x2x3")},
        supported_orders=frozenset({1, 2, 3}),
    )


def bulk_problem() -> ProblemDefinition:
    return ProblemDefinition(
        "bulk", DEFAULT_EVOLUTION,
        {"bulk": bulk_coefficients()},
        {"bulk": _cosine_field()},
    )


def coupled_problem() -> ProblemDefinition:
    return ProblemDefinition(
        "coupled", DEFAULT_EVOLUTION,
        {"bulk": identity_coefficients(), "surface": identity_coefficients()},
        {"bulk": _product_field(0, 1, "sin(t)x1x2"),
         "surface": _product_field(1, 2, "sin(t)x2x3")},
        alpha=1.0, beta=1.0,
    )


def get_problem(problem_id: str) -> ProblemDefinition:
    try:
        return {"surface": surface_problem, "bulk": bulk_problem,
                "coupled": coupled_problem}[problem_id]()
    except KeyError:
        from .errors import ConfigurationError
        raise ConfigurationError(f"unknown problem {problem_id!r}") from None
