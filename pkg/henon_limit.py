"""
Limit endomorphisms of the renormalization scheme.

G is the center-unstable Henon-like family
    G(x, y, z) = (y, mu + y^2 + kappa1 z^2 + kappa2 y z, xi z + y)
and E the endomorphism family the renormalized return maps converge to
    E(x, y, z) = (xi x + s1 y, mu + s2 y^2 + s3 x^2 + s4 x y, s5 y).
Theta is the linear change of coordinates relating the two.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from errors import DegenerateSigma
from precision import Vec3

logger = logging.getLogger(__name__)

BLENDER_XI = (1.18, 1.19)
BLENDER_MU = (-10.0, -9.0)
DEFAULT_REGION_EPS = 0.1
DEFAULT_ESCAPE_BOUND = 1e6


@dataclass(frozen=True)
class HenonParams:
    """Parameters (xi, mu, kappa1, kappa2) of G"""

    xi: float
    mu: float
    kappa1: float = 0.0
    kappa2: float = 0.0

    def __post_init__(self):
        if not self.xi > 0:
            raise ValueError(f"xi must be positive, got {self.xi}")


@dataclass(frozen=True)
class SigmaVector:
    """The five coefficients bridging the model to the limit family E"""

    s1: float
    s2: float
    s3: float
    s4: float
    s5: float

    def as_tuple(self) -> Tuple[float, float, float, float, float]:
        return (self.s1, self.s2, self.s3, self.s4, self.s5)

    def require_nondegenerate(self):
        if self.s1 * self.s2 * self.s5 == 0:
            raise DegenerateSigma(f"s1*s2*s5 must be non-zero, got {self.as_tuple()}")


@dataclass(frozen=True)
class EParams:
    xi: float
    mu: float
    sv: SigmaVector

    def __post_init__(self):
        if not self.xi > 0:
            raise ValueError(f"xi must be positive, got {self.xi}")


def eval_G(p: HenonParams, v: Vec3) -> Vec3:
    x, y, z = v
    return Vec3(y, p.mu + y * y + p.kappa1 * z * z + p.kappa2 * y * z, p.xi * z + y)


def eval_E(e: EParams, v: Vec3) -> Vec3:
    """E ignores the z input."""
    x, y, _ = v
    s = e.sv
    return Vec3(e.xi * x + s.s1 * y, e.mu + s.s2 * y * y + s.s3 * x * x + s.s4 * x * y, s.s5 * y)


def theta_conjugacy(sv: SigmaVector, w: Tuple[float, float, float, float]) -> Tuple[float, float, float, float]:
    """Theta(mu, x, y, z) = (mu/s2, s1 z/s2, y/s2, s5 x/s2)"""
    if sv.s2 == 0:
        raise DegenerateSigma("theta_conjugacy needs s2 != 0")
    mu, x, y, z = w
    return (mu / sv.s2, sv.s1 * z / sv.s2, y / sv.s2, sv.s5 * x / sv.s2)


def derived_limit_params(sv: SigmaVector) -> Tuple[float, float, float]:
    """Return (kappa, eta4, eta5).

    eta4 = s1 s4 / s2 is the value under which Theta conjugates G to E; eta5 = s1 s5 / s2 is
    the value tested for membership of the blender region. Both are always reported.
    """
    sv.require_nondegenerate()
    kappa = sv.s1 * sv.s1 * sv.s3 / sv.s2
    eta4 = sv.s1 * sv.s4 / sv.s2
    eta5 = sv.s1 * sv.s5 / sv.s2
    return kappa, eta4, eta5


def conjugacy_defect(sv: SigmaVector, xi: float, mu: float, w: Vec3, eta: float) -> float:
    """Relative sup-norm gap in Theta(mu, G(w)) = (mu/s2, E(Theta(w))).

    G uses kappa = s1^2 s3 / s2 and the supplied eta; the gap vanishes for eta = s1 s4 / s2.
    """
    kappa, _, _ = derived_limit_params(sv)
    g = eval_G(HenonParams(xi, mu, kappa, eta), w)
    lhs = theta_conjugacy(sv, (mu, g.x, g.y, g.z))
    mu_e, ex, ey, ez = theta_conjugacy(sv, (mu, w.x, w.y, w.z))
    rhs = (mu_e,) + tuple(eval_E(EParams(xi, mu_e, sv), Vec3(ex, ey, ez)))
    scale = max(1.0, max(abs(c) for c in rhs))
    return max(abs(a - b) for a, b in zip(lhs, rhs)) / scale


def in_blender_region(xi: float, mu: float, kappa: float, eta: float, eps: float = DEFAULT_REGION_EPS) -> bool:
    """Strict membership in (1.18, 1.19) x (-10, -9) x (-eps, eps)^2"""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    return (BLENDER_XI[0] < xi < BLENDER_XI[1]
            and BLENDER_MU[0] < mu < BLENDER_MU[1]
            and abs(kappa) < eps
            and abs(eta) < eps)


def limit_jacobian(e: EParams, v: Vec3) -> np.ndarray:
    x, y, _ = (float(c) for c in v)
    s = e.sv
    return np.array([
        [e.xi, s.s1, 0.0],
        [2 * s.s3 * x + s.s4 * y, 2 * s.s2 * y + s.s4 * x, 0.0],
        [0.0, s.s5, 0.0],
    ])


def limit_hessian(e: EParams) -> np.ndarray:
    """Second derivatives of E as an array indexed [component, i, j]"""
    s = e.sv
    hess = np.zeros((3, 3, 3))
    hess[1] = [[2 * s.s3, s.s4, 0.0], [s.s4, 2 * s.s2, 0.0], [0.0, 0.0, 0.0]]
    return hess


@dataclass
class OrbitResult:
    points: List[Vec3]
    escaped: bool = False
    escape_step: Optional[int] = None


Family = Union[HenonParams, EParams, Callable[[Vec3], Vec3]]


def _as_map(family: Family) -> Callable[[Vec3], Vec3]:
    if isinstance(family, HenonParams):
        return lambda v: eval_G(family, v)
    if isinstance(family, EParams):
        return lambda v: eval_E(family, v)
    if callable(family):
        return family
    raise ValueError(f"Unknown endomorphism family: {family!r}")


def iterate_endomorphism(family: Family, v0: Vec3, steps: int,
                         escape_bound: float = DEFAULT_ESCAPE_BOUND) -> OrbitResult:
    """Orbit of v0 under G, E or any map of Vec3.

    Stops after the first point with a coordinate beyond escape_bound (that point is kept).
    """
    if steps < 0:
        raise ValueError(f"steps must be non-negative, got {steps}")
    step = _as_map(family)
    points = [Vec3(*v0)]
    for i in range(1, steps + 1):
        nxt = step(points[-1])
        points.append(nxt)
        if any(not math.isfinite(c) or abs(c) > escape_bound for c in nxt):
            logger.debug(f"orbit escaped at step {i}")
            return OrbitResult(points, True, i)
    return OrbitResult(points)
