"""Deterministic quadrature rules on a truncated ordinate interval and
Gauss-Hermite rules for the stability audits.

The truncated rule is a composite 4-point Gauss-Legendre rule on a
uniform partition of [-L, L]; it is exact for piecewise polynomials of
degree <= 7 per cell, which covers the polynomial-times-Gaussian
integrands the projection assembly produces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss

from .errors import ParameterError

__all__ = [
    "QuadratureRule",
    "gauss_hermite_rule",
    "truncated_rule",
    "integrate",
    "default_half_width",
]


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and strictly positive weights on [-L, L] or the Hermite line.

    ``domain`` is ``"truncated"`` (Lebesgue measure on [-L, L], with
    ``half_width`` = L) or ``"hermite"`` (weight e^{-x^2} on R,
    ``half_width`` is None).
    """

    nodes: np.ndarray
    weights: np.ndarray
    domain: str
    half_width: float | None = None
    cells: int = field(default=0, compare=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise ParameterError("nodes and weights must be 1D and aligned")
        if not np.all(weights > 0.0):
            raise ParameterError("all quadrature weights must be positive")
        if not np.all(np.diff(nodes) > 0.0):
            raise ParameterError("nodes must be strictly increasing")
        if self.domain == "truncated":
            if self.half_width is None or self.half_width <= 0.0:
                raise ParameterError("truncated rule needs half_width > 0")
            if np.any(np.abs(nodes) > self.half_width):
                raise ParameterError("nodes escape [-L, L]")
        elif self.domain != "hermite":
            raise ParameterError(f"unknown quadrature domain {self.domain!r}")

    def __len__(self):
        return self.nodes.size


def gauss_hermite_rule(n: int) -> QuadratureRule:
    """n-point Gauss-Hermite rule: exact for polynomials of degree
    <= 2n-1 against the weight e^{-x^2}."""
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= 64:
        raise ParameterError(f"Gauss-Hermite order must be in [1, 64], got {n}")
    nodes, weights = hermgauss(int(n))
    return QuadratureRule(nodes, weights, domain="hermite")


def truncated_rule(L: float, cells: int) -> QuadratureRule:
    """Composite 4-point Gauss-Legendre rule on ``cells`` uniform
    subintervals of [-L, L]; use >= 4 cells for production accuracy."""
    if not L > 0.0:
        raise ParameterError(f"half width must be positive, got {L}")
    if not isinstance(cells, (int, np.integer)) or cells < 1:
        raise ParameterError(f"cell count must be a positive integer, got {cells}")
    ref_nodes, ref_weights = leggauss(4)
    h = 2.0 * L / cells
    left = -L + h * np.arange(cells)
    nodes = (left[:, None] + 0.5 * h * (ref_nodes[None, :] + 1.0)).ravel()
    weights = np.tile(0.5 * h * ref_weights, cells)
    return QuadratureRule(nodes, weights, domain="truncated", half_width=float(L), cells=int(cells))


def integrate(values, rule: QuadratureRule) -> float:
    """Sum of weights*values in a fixed reduction order (bit reproducible)."""
    values = np.asarray(values, dtype=float)
    if values.shape != rule.nodes.shape:
        raise ParameterError(
            f"values length {values.shape} does not match rule nodes {rule.nodes.shape}"
        )
    return float(np.add.reduce(values * rule.weights))


def default_half_width(u_max: float, theta_max: float) -> float:
    """Truncation bound |u|max + 8*sqrt(theta_max): Gaussian tails below
    1e-14, so truncation error is subdominant to scheme error."""
    if theta_max <= 0.0:
        raise ParameterError("theta_max must be positive")
    return abs(u_max) + 8.0 * np.sqrt(theta_max)
