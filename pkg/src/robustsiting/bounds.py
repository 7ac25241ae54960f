"""A-priori bound on the relative error introduced by discretizing the service area on a lattice."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ZeroOptimum
from .geometry import DistanceMetric, ell_of_sigma

CSV_FIELDS = ("Z_D", "sigma_m", "beta", "ell_m", "epsilon", "Z_C_upper")


@dataclass(frozen=True)
class BoundCertificate:
    z_d: float
    sigma: float
    beta: float
    ell: float
    epsilon: float
    z_c_upper: float

    @property
    def epsilon_pct(self) -> float:
        return 100.0 * self.epsilon

    def rounded(self) -> tuple[float, float]:
        """(epsilon in percent to 0.1 pp, upper bound to 0.1 m), the usual report precision."""
        return round(self.epsilon_pct, 1), round(self.z_c_upper, 1)

    def as_row(self) -> dict:
        return dict(zip(CSV_FIELDS, (self.z_d, self.sigma, self.beta, self.ell, self.epsilon, self.z_c_upper)))


def discretization_bound(z_d: float, sigma: float, metric: DistanceMetric | str = "euclidean",
                         beta: float = 0.0) -> BoundCertificate:
    """Relative error bound eps = ell(sigma) / (Z_D (1 - beta)) and the implied ceiling Z_D (1 + eps)."""
    if not 0.0 <= beta < 1.0:
        raise ValueError("beta must lie in [0, 1)")
    if sigma < 0:
        raise ValueError("lattice spacing must be non-negative")
    if z_d < 0:
        raise ValueError("the discretized optimum cannot be negative")
    if z_d == 0:
        raise ZeroOptimum("relative error bound is undefined when the discretized optimum is 0")
    ell = ell_of_sigma(metric, sigma)
    eps = ell / (z_d * (1.0 - beta))
    return BoundCertificate(float(z_d), float(sigma), float(beta), ell, eps, z_d * (1.0 + eps))
