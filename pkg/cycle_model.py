"""
Model diffeomorphism near a heterodimensional cycle with two saddle-foci P and Q.

f is kept as a labelled chart-transition system: linear local maps in the charts of P and Q,
exact quadratic transition maps from a neighbourhood of X = (0,1,0) (Q-chart) to one of
X~ = (1,0,0) (P-chart) and from Y = (0,1,1) (P-chart) to Y~ = (1,0,1) (Q-chart), and the
8-parameter unfolding family built from bump-function perturbations.
"""
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import (
    ConfigError,
    DegenerateModel,
    DomainEscape,
    ModelInvariantError,
    OutOfNeighbourhood,
    PlateauViolation,
)
from precision import PrecisionSetting, ScalarContext, Vec3, resolve

logger = logging.getLogger(__name__)

X_POINT = Vec3(0.0, 1.0, 0.0)
X_TILDE = Vec3(1.0, 0.0, 0.0)
Y_POINT = Vec3(0.0, 1.0, 1.0)
Y_TILDE = Vec3(1.0, 0.0, 1.0)

FD_STEP = 1e-5
FD_TOLERANCE = 1e-6


class QuadCoeffs:
    """Three symmetric 3x3 Hessians; component i is the quadratic form H_i(v) = v.M_i.v / 2"""

    def __init__(self, blocks: Sequence[Sequence[Sequence[float]]]):
        arr = np.asarray(blocks, dtype=float)
        if arr.shape != (3, 3, 3):
            raise ConfigError(f"Hessian blocks must have shape (3, 3, 3), got {arr.shape}")
        for i in range(3):
            if not np.array_equal(arr[i], arr[i].T):
                raise ConfigError(f"Hessian block {i} is not symmetric")
        self.blocks = tuple(tuple(tuple(float(c) for c in row) for row in block) for block in arr)

    @classmethod
    def zeros(cls) -> "QuadCoeffs":
        return cls(np.zeros((3, 3, 3)))

    @classmethod
    def from_nested(cls, nested: Optional[Sequence]) -> "QuadCoeffs":
        return cls.zeros() if nested is None else cls(nested)

    def to_nested(self) -> List[List[List[float]]]:
        return [[list(row) for row in block] for block in self.blocks]

    def __eq__(self, other) -> bool:
        return isinstance(other, QuadCoeffs) and self.blocks == other.blocks

    def __hash__(self) -> int:
        return hash(self.blocks)

    def __repr__(self) -> str:
        return "QuadCoeffs(zero)" if self.is_zero() else f"QuadCoeffs({self.to_nested()})"

    def entry(self, i: int, a: int, b: int) -> float:
        return self.blocks[i][a][b]

    def is_zero(self, i: Optional[int] = None) -> bool:
        comps = range(3) if i is None else (i,)
        return all(c == 0.0 for j in comps for row in self.blocks[j] for c in row)

    def evaluate(self, i: int, v: Vec3) -> Any:
        """H_i(v); works on scalars and on equally shaped arrays"""
        block = self.blocks[i]
        total = 0
        for a in range(3):
            if block[a][a]:
                total = total + 0.5 * block[a][a] * v[a] * v[a]
            for b in range(a + 1, 3):
                if block[a][b]:
                    total = total + block[a][b] * v[a] * v[b]
        return total

    def evaluate_all(self, v: Vec3) -> Vec3:
        return Vec3(*(self.evaluate(i, v) for i in range(3)))

    def bilinear(self, i: int, u: Vec3, v: Vec3) -> Any:
        """u.M_i.v, so that H_i(u + v) = H_i(u) + bilinear(u, v) + H_i(v)"""
        block = self.blocks[i]
        total = 0
        for a in range(3):
            for b in range(3):
                if block[a][b]:
                    total = total + block[a][b] * u[a] * v[b]
        return total


@dataclass(frozen=True)
class SaddleSpectrum:
    """Moduli and arguments of the saddle-foci; arguments in full turns"""

    lambda_P: float
    sigma_P: float
    phi_P: float
    lambda_Q: float
    sigma_Q: float
    phi_Q: float


@dataclass(frozen=True)
class TransitionQP:
    alpha1: float
    alpha2: float
    alpha3: float
    beta2: float
    gamma3: float
    hqp: QuadCoeffs = field(default_factory=QuadCoeffs.zeros)


@dataclass(frozen=True)
class TransitionPQ:
    a1: float
    a2: float
    a3: float
    b1: float
    b2: float
    b3: float
    b4: float
    c1: float
    c2: float
    hpq: QuadCoeffs = field(default_factory=QuadCoeffs.zeros)

    @property
    def c3(self) -> float:
        return self.c2


@dataclass(frozen=True)
class InvariantCheck:
    tag: str
    description: str
    passed: bool
    detail: str = ""


def model_checks(spectrum: SaddleSpectrum, qp: TransitionQP, pq: TransitionPQ, rho: float,
                 r: int, neighbourhood: float, rotation_radius: float,
                 chart_half_width: float) -> List[InvariantCheck]:
    s = spectrum
    h2 = pq.hpq
    mixed = [h2.entry(1, 1, 1), h2.entry(1, 2, 2), h2.entry(1, 1, 2)]
    return [
        InvariantCheck(
            "spectrum", "0 < lambda < 1 < sigma at P and Q",
            0 < s.lambda_P < 1 < s.sigma_P and 0 < s.lambda_Q < 1 < s.sigma_Q,
            f"lambda_P={s.lambda_P}, sigma_P={s.sigma_P}, lambda_Q={s.lambda_Q}, sigma_Q={s.sigma_Q}",
        ),
        InvariantCheck(
            "arguments", "phi_P != phi_Q, both in [0, 1]",
            s.phi_P != s.phi_Q and 0 <= s.phi_P <= 1 and 0 <= s.phi_Q <= 1,
            f"phi_P={s.phi_P}, phi_Q={s.phi_Q}",
        ),
        InvariantCheck(
            "e.dd", "alpha1 * beta2 * gamma3 != 0",
            qp.alpha1 * qp.beta2 * qp.gamma3 != 0,
            f"alpha1={qp.alpha1}, beta2={qp.beta2}, gamma3={qp.gamma3}",
        ),
        InvariantCheck(
            "e.d", "b1 * c2 * (a3 - a2) != 0",
            pq.b1 * pq.c2 * (pq.a3 - pq.a2) != 0,
            f"b1={pq.b1}, c2={pq.c2}, a3-a2={pq.a3 - pq.a2}",
        ),
        InvariantCheck(
            "e.>", "gamma3 * (a3 - a2) > 0",
            qp.gamma3 * (pq.a3 - pq.a2) > 0,
            f"gamma3*(a3-a2)={qp.gamma3 * (pq.a3 - pq.a2)}",
        ),
        InvariantCheck(
            "e.hs", "H2 of the P-to-Q transition has no yy, zz, yz terms",
            not any(mixed),
            f"H2_yy={mixed[0]}, H2_zz={mixed[1]}, H2_yz={mixed[2]}",
        ),
        InvariantCheck(
            "support", "0 < rho < neighbourhood < 1, r >= 1, rotation_radius < chart_half_width",
            0 < rho < neighbourhood < 1 and r >= 1 and 0 < rotation_radius < chart_half_width,
            f"rho={rho}, neighbourhood={neighbourhood}, r={r}, "
            f"rotation_radius={rotation_radius}, chart_half_width={chart_half_width}",
        ),
    ]


@dataclass(frozen=True)
class ModelConfig:
    """Complete description of the model f. Construction enforces every invariant."""

    spectrum: SaddleSpectrum
    qp: TransitionQP
    pq: TransitionPQ
    rho: float = 0.2
    r: int = 2
    precision: PrecisionSetting = PrecisionSetting()
    neighbourhood: float = 0.5
    rotation_radius: float = 8.0
    chart_half_width: float = 10.0

    def __post_init__(self):
        checks = self.checks()
        if not all(c.passed for c in checks):
            raise ModelInvariantError(checks)
        for i, name in ((1, "H~2"), (2, "H~3")):
            if self.qp.hqp.entry(i, 0, 2):
                logger.warning(
                    f"{name} has a non-zero xz entry ({self.qp.hqp.entry(i, 0, 2)}); "
                    f"the return maps keep a constant term from it and will not converge to E"
                )

    def checks(self) -> List[InvariantCheck]:
        return model_checks(self.spectrum, self.qp, self.pq, self.rho, self.r,
                            self.neighbourhood, self.rotation_radius, self.chart_half_width)

    def context(self) -> ScalarContext:
        return self.precision.context()

    def to_dict(self) -> Dict[str, Any]:
        qp = asdict(self.qp)
        pq = asdict(self.pq)
        qp.pop("hqp")
        pq.pop("hpq")
        qp["hessians"] = self.qp.hqp.to_nested()
        pq["hessians"] = self.pq.hpq.to_nested()
        return {
            "spectrum": asdict(self.spectrum),
            "qp": qp,
            "pq": pq,
            "rho": self.rho,
            "r": self.r,
            "neighbourhood": self.neighbourhood,
            "rotation_radius": self.rotation_radius,
            "chart_half_width": self.chart_half_width,
            "precision": {"mode": self.precision.mode, "dps": self.precision.dps},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelConfig":
        """Build from the JSON layout; an optional "run" section is ignored here"""
        if not isinstance(data, dict):
            raise ConfigError(f"Config must be a JSON object, got {type(data).__name__}")
        known = {"spectrum", "qp", "pq", "rho", "r", "neighbourhood", "rotation_radius",
                 "chart_half_width", "precision", "run"}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"Unknown config keys: {sorted(extra)}")
        try:
            spectrum = SaddleSpectrum(**_section(data, "spectrum", SaddleSpectrum))
            qp_fields = _section(data, "qp", TransitionQP, optional={"hessians"})
            qp = TransitionQP(hqp=QuadCoeffs.from_nested(qp_fields.pop("hessians", None)), **qp_fields)
            pq_fields = _section(data, "pq", TransitionPQ, optional={"hessians"})
            pq = TransitionPQ(hpq=QuadCoeffs.from_nested(pq_fields.pop("hessians", None)), **pq_fields)
            precision = PrecisionSetting(**data.get("precision", {}))
            scalars = {
                name: data[name]
                for name in ("rho", "r", "neighbourhood", "rotation_radius", "chart_half_width")
                if name in data
            }
            for name, value in scalars.items():
                if not isinstance(value, (int, float)):
                    raise ConfigError(f"'{name}' must be a number, got {value!r}")
        except TypeError as e:
            raise ConfigError(f"Malformed config: {e}") from e
        return cls(spectrum=spectrum, qp=qp, pq=pq, precision=precision, **scalars)

    @classmethod
    def from_json(cls, path) -> "ModelConfig":
        try:
            data = json.loads(Path(path).read_text())
        except OSError as e:
            raise ConfigError(f"Cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config {path} is not valid JSON: {e}") from e
        return cls.from_dict(data)


def _section(data: Dict[str, Any], name: str, cls, optional=frozenset()) -> Dict[str, Any]:
    if name not in data:
        raise ConfigError(f"Config is missing the '{name}' section")
    section = dict(data[name])
    required = {f.name for f in fields(cls) if f.name not in ("hqp", "hpq")}
    missing = required - set(section)
    extra = set(section) - required - set(optional)
    if missing:
        raise ConfigError(f"Section '{name}' is missing {sorted(missing)}")
    if extra:
        raise ConfigError(f"Section '{name}' has unknown fields {sorted(extra)}")
    for key, value in section.items():
        if key not in optional and not isinstance(value, (int, float)):
            raise ConfigError(f"'{name}.{key}' must be a number, got {value!r}")
    return section


@dataclass(frozen=True)
class UnfoldingParams:
    """The 8 unfolding parameters (mu_bar, nu_bar, alpha, beta)"""

    mu_bar: Vec3
    nu_bar: Vec3
    alpha: Any
    beta: Any

    @classmethod
    def zero(cls) -> "UnfoldingParams":
        return cls(Vec3(0.0, 0.0, 0.0), Vec3(0.0, 0.0, 0.0), 0.0, 0.0)


class ChartRegion(Enum):
    P_LOCAL = "P-local"
    Q_LOCAL = "Q-local"
    QP_TRANSITION = "QP-transition"
    PQ_TRANSITION = "PQ-transition"


# -- bump functions ----------------------------------------------------------


def _glue(s, ctx: ScalarContext):
    return ctx.exp(-1 / s) if s > 0 else 0


def bump1(rho: float, x: Any, ctx: Optional[ScalarContext] = None) -> Any:
    """C-infinity bump: 1 on |x| <= rho/2, 0 on |x| >= rho, strictly between otherwise"""
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    ctx = resolve(ctx)
    ax = abs(x)
    if ax >= rho:
        return ctx.scalar(0)
    if 2 * ax <= rho:
        return ctx.scalar(1)
    t = (rho - ax) / (ctx.scalar(rho) / 2)
    a = _glue(t, ctx)
    return a / (a + _glue(1 - t, ctx))


def bump3(rho: float, v: Vec3, ctx: Optional[ScalarContext] = None) -> Any:
    return bump1(rho, v[0], ctx) * bump1(rho, v[1], ctx) * bump1(rho, v[2], ctx)


def plateau_state(rho: float, r: Any) -> str:
    """Where a radius falls relative to a bump of radius rho"""
    if 2 * r <= rho:
        return "plateau"
    if r >= rho:
        return "support_free"
    return "transition"


# -- local maps and transitions ----------------------------------------------


def _turn(ctx: ScalarContext, turns: Any) -> Tuple[Any, Any]:
    angle = 2 * ctx.pi * ctx.scalar(turns)
    return ctx.cos(angle), ctx.sin(angle)


def local_P(spec: SaddleSpectrum, alpha: Any, v: Vec3, ctx: Optional[ScalarContext] = None) -> Vec3:
    """x -> lambda_P x, (y, z) -> sigma_P rotation by 2 pi (phi_P + alpha)"""
    ctx = resolve(ctx)
    c, s = _turn(ctx, ctx.scalar(spec.phi_P) + alpha)
    x, y, z = v
    return Vec3(spec.lambda_P * x, spec.sigma_P * (c * y - s * z), spec.sigma_P * (s * y + c * z))


def local_Q(spec: SaddleSpectrum, beta: Any, v: Vec3, ctx: Optional[ScalarContext] = None) -> Vec3:
    """y -> sigma_Q y, (x, z) -> lambda_Q rotation by 2 pi (phi_Q + beta)"""
    ctx = resolve(ctx)
    c, s = _turn(ctx, ctx.scalar(spec.phi_Q) + beta)
    x, y, z = v
    return Vec3(spec.lambda_Q * (c * x - s * z), spec.sigma_Q * y, spec.lambda_Q * (s * x + c * z))


def _check_neighbourhood(v: Vec3, d: Vec3, half_width: float, label: str):
    for c in d:
        if np.any(np.abs(c) > half_width):
            raise OutOfNeighbourhood(
                f"{label} argument leaves the transition box of half-width {half_width}",
                point=None if np.ndim(c) else v,
            )


def trans_QP(qp: TransitionQP, v: Vec3, half_width: float = 0.5) -> Vec3:
    """Transition from near X = (0,1,0) to near X~ = (1,0,0)"""
    d = v.minus(X_POINT)
    _check_neighbourhood(v, d, half_width, "QP-transition")
    x, y, z = d
    h = qp.hqp
    return Vec3(
        1 + qp.alpha1 * x + qp.alpha2 * y + qp.alpha3 * z + h.evaluate(0, d),
        qp.beta2 * y + h.evaluate(1, d),
        qp.gamma3 * z + h.evaluate(2, d),
    )


def trans_PQ(pq: TransitionPQ, v: Vec3, half_width: float = 0.5) -> Vec3:
    """Transition from near Y = (0,1,1) to near Y~ = (1,0,1); no linear y or z term in the second row"""
    d = v.minus(Y_POINT)
    _check_neighbourhood(v, d, half_width, "PQ-transition")
    x, y, z = d
    h = pq.hpq
    return Vec3(
        1 + pq.a1 * x + pq.a2 * y + pq.a3 * z + h.evaluate(0, d),
        pq.b1 * x + pq.b2 * y * y + pq.b3 * z * z + pq.b4 * y * z + h.evaluate(1, d),
        1 + pq.c1 * x + pq.c2 * y + pq.c3 * z + h.evaluate(2, d),
    )


# -- perturbations -----------------------------------------------------------

TRANSLATION_CUBE_FRACTION = 0.5


def translation_perturb(center: Vec3, w: Vec3, rho: float, v: Vec3,
                        ctx: Optional[ScalarContext] = None) -> Vec3:
    """v + B(v - center) w, with B the product bump of radius rho/2.

    Its support is the cube of half-width rho/2 inside the ball of radius rho about center;
    it is exact translation by w on the cube of half-width rho/4.
    """
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    value = bump3(TRANSLATION_CUBE_FRACTION * rho, v.minus(center), ctx)
    if value == 0:
        return v
    return v.plus(w.scaled(value))


def _rotate(axis: str, c: Any, s: Any, v: Vec3) -> Vec3:
    x, y, z = v
    if axis == "x":
        return Vec3(x, c * y - s * z, s * y + c * z)
    if axis == "y":
        return Vec3(c * x - s * z, y, s * x + c * z)
    raise ValueError(f"Unknown rotation axis: {axis!r}")


def rotation_perturb(axis: str, omega: Any, rho: float, v: Vec3,
                     ctx: Optional[ScalarContext] = None) -> Vec3:
    """Rotate about the x or y axis by 2 pi omega b_rho(|v|)"""
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    ctx = resolve(ctx)
    if axis not in ("x", "y"):
        raise ValueError(f"Unknown rotation axis: {axis!r}")
    if omega == 0:
        return v
    value = bump1(rho, ctx.sqrt(v.norm_sq()), ctx)
    if value == 0:
        return v
    c, s = _turn(ctx, omega * value)
    return _rotate(axis, c, s, v)


# -- reports -----------------------------------------------------------------


def _central_difference(fn, base: Vec3, direction: Vec3, h: float) -> np.ndarray:
    up = fn(base.plus(direction.scaled(h)))
    dn = fn(base.minus(direction.scaled(h)))
    return (np.array(up, dtype=float) - np.array(dn, dtype=float)) / (2 * h)


def _richardson(fn, base: Vec3, direction: Vec3, h: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    coarse = _central_difference(fn, base, direction, h)
    fine = _central_difference(fn, base, direction, h / 2)
    return coarse, fine, (4 * fine - coarse) / 3


@dataclass
class TransversalityReport:
    vector: np.ndarray
    fd_vector: np.ndarray
    fd_half_vector: np.ndarray
    expected: np.ndarray
    deviation: float
    step: float
    passed: bool


@dataclass
class TangencyReport:
    images: Tuple[np.ndarray, np.ndarray]
    fd_images: Tuple[np.ndarray, np.ndarray]
    fd_half_images: Tuple[np.ndarray, np.ndarray]
    expected: Tuple[np.ndarray, np.ndarray]
    deviation: float
    step: float
    passed: bool


def check_quasi_transverse(cfg: ModelConfig, h: float = FD_STEP,
                           tolerance: float = FD_TOLERANCE) -> TransversalityReport:
    """Df^{N1}(X)(0,1,0) should be (alpha2, beta2, 0) with beta2 != 0"""
    qp = cfg.qp
    if abs(qp.beta2) <= tolerance:
        raise DegenerateModel(f"beta2={qp.beta2} is below tolerance {tolerance}")
    fd, fd_half, vector = _richardson(lambda v: trans_QP(qp, v, cfg.neighbourhood),
                                      X_POINT, Vec3(0.0, 1.0, 0.0), h)
    expected = np.array([qp.alpha2, qp.beta2, 0.0])
    deviation = float(np.max(np.abs(vector - expected)))
    return TransversalityReport(vector, fd, fd_half, expected, deviation, h, deviation <= tolerance)


def check_tangency(cfg: ModelConfig, h: float = FD_STEP, tolerance: float = FD_TOLERANCE) -> TangencyReport:
    """Df^{N2}(Y) maps (0,1,0) and (0,0,1) to (a2,0,c2) and (a3,0,c2)"""
    pq = cfg.pq
    fn = lambda v: trans_PQ(pq, v, cfg.neighbourhood)
    fd_y, half_y, rich_y = _richardson(fn, Y_POINT, Vec3(0.0, 1.0, 0.0), h)
    fd_z, half_z, rich_z = _richardson(fn, Y_POINT, Vec3(0.0, 0.0, 1.0), h)
    expected = (np.array([pq.a2, 0.0, pq.c2]), np.array([pq.a3, 0.0, pq.c3]))
    deviation = float(max(np.max(np.abs(rich_y - expected[0])), np.max(np.abs(rich_z - expected[1]))))
    if deviation > tolerance:
        raise DegenerateModel(
            f"Df(Y) images {rich_y.tolist()}, {rich_z.tolist()} differ from "
            f"(a2,0,c2), (a3,0,c2) by {deviation:.3e}"
        )
    return TangencyReport((rich_y, rich_z), (fd_y, fd_z), (half_y, half_z), expected, deviation, h, True)


# -- unfolding family --------------------------------------------------------


def _select(mask, a, b):
    if np.ndim(mask) == 0:
        return a if mask else b
    return np.where(mask, a, b)


def _pointwise(fn, v: Vec3) -> Vec3:
    """Apply a scalar Vec3 -> Vec3 map to every point of a Vec3 of arrays"""
    if not any(np.ndim(c) for c in v):
        return fn(v)
    xs, ys, zs = np.broadcast_arrays(*(np.asarray(c) for c in v))
    images = [fn(Vec3(*p)) for p in zip(xs.ravel(), ys.ravel(), zs.ravel())]
    return Vec3(*(np.array([q[i] for q in images], dtype=xs.dtype).reshape(xs.shape) for i in range(3)))


class UnfoldedModel:
    """f perturbed by the unfolding parameters, evaluated chart by chart.

    Works on Vec3 of scalars or of equally shaped numpy arrays. With strict=True every
    perturbation argument must sit on a bump plateau or outside its support, and local
    maps must stay inside the chart cube; violations raise instead of blending.
    With strict=False arrays are blended point by point.
    """

    def __init__(self, cfg: ModelConfig, up: UnfoldingParams,
                 ctx: Optional[ScalarContext] = None, strict: bool = True):
        self.cfg = cfg
        self.up = up
        self.ctx = resolve(ctx)
        self.strict = strict
        ctx = self.ctx
        spec = cfg.spectrum
        self.lam_P, self.sig_P = ctx.scalar(spec.lambda_P), ctx.scalar(spec.sigma_P)
        self.lam_Q, self.sig_Q = ctx.scalar(spec.lambda_Q), ctx.scalar(spec.sigma_Q)
        self.rot_P = _turn(ctx, spec.phi_P)
        self.rot_Q = _turn(ctx, spec.phi_Q)
        self.rot_alpha = _turn(ctx, up.alpha)
        self.rot_beta = _turn(ctx, up.beta)
        self.mu_bar = ctx.vec(up.mu_bar)
        self.nu_bar = ctx.vec(up.nu_bar)
        self.x_tilde = ctx.vec(X_TILDE)
        self.y_tilde = ctx.vec(Y_TILDE)

    def _in_chart(self, v: Vec3, label: str):
        bound = self.cfg.chart_half_width
        for c in v:
            if np.any(np.abs(c) >= bound):
                raise DomainEscape(f"{label} point leaves the chart cube of half-width {bound}",
                                   point=None if np.ndim(c) else v)

    def _rotation(self, axis: str, omega: Any, cs: Tuple[Any, Any], v: Vec3) -> Vec3:
        if omega == 0:
            return v
        rho = self.cfg.rotation_radius
        if not self.strict:
            return _pointwise(lambda p: rotation_perturb(axis, omega, rho, p, self.ctx), v)
        state = np.frompyfunc(lambda q: plateau_state(rho, self.ctx.sqrt(q)), 1, 1)(v.norm_sq())
        if np.any(state == "transition"):
            raise PlateauViolation(f"{axis}-rotation argument lies on the bump slope {rho / 2} < |v| < {rho}",
                                   point=None if np.ndim(v.x) else v)
        plateau = np.asarray(state == "plateau", dtype=bool)
        rotated = _rotate(axis, cs[0], cs[1], v)
        return Vec3(*(_select(plateau, a, b) for a, b in zip(rotated, v)))

    def _translation(self, center: Vec3, w: Vec3, v: Vec3, label: str) -> Vec3:
        if all(c == 0 for c in w):
            return v
        if not self.strict:
            return _pointwise(lambda p: translation_perturb(center, w, self.cfg.rho, p, self.ctx), v)
        d = v.minus(center)
        reach = np.maximum(np.maximum(np.abs(d.x), np.abs(d.y)), np.abs(d.z))
        support = TRANSLATION_CUBE_FRACTION * self.cfg.rho
        inside = np.asarray(reach <= support / 2, dtype=bool)
        outside = np.asarray(reach >= support, dtype=bool)
        if not np.all(inside | outside):
            raise PlateauViolation(f"{label} translation argument lies on the bump slope",
                                   point=None if np.ndim(v.x) else v)
        return Vec3(*(_select(inside, c + dw, c) for c, dw in zip(v, w)))

    def p_local(self, v: Vec3) -> Vec3:
        self._in_chart(v, "P-local")
        c, s = self.rot_P
        x, y, z = v
        out = Vec3(self.lam_P * x, self.sig_P * (c * y - s * z), self.sig_P * (s * y + c * z))
        out = self._rotation("x", self.up.alpha, self.rot_alpha, out)
        self._in_chart(out, "P-local")
        return out

    def q_local(self, v: Vec3) -> Vec3:
        self._in_chart(v, "Q-local")
        c, s = self.rot_Q
        x, y, z = v
        out = Vec3(self.lam_Q * (c * x - s * z), self.sig_Q * y, self.lam_Q * (s * x + c * z))
        out = self._rotation("y", self.up.beta, self.rot_beta, out)
        self._in_chart(out, "Q-local")
        return out

    def qp_transition(self, v: Vec3) -> Vec3:
        out = trans_QP(self.cfg.qp, v, self.cfg.neighbourhood)
        return self._translation(self.x_tilde, self.nu_bar, out, "QP-transition")

    def pq_transition(self, v: Vec3) -> Vec3:
        out = trans_PQ(self.cfg.pq, v, self.cfg.neighbourhood)
        return self._translation(self.y_tilde, self.mu_bar, out, "PQ-transition")

    def apply(self, region: ChartRegion, v: Vec3) -> Vec3:
        region = ChartRegion(region)
        if region is ChartRegion.P_LOCAL:
            return self.p_local(v)
        if region is ChartRegion.Q_LOCAL:
            return self.q_local(v)
        if region is ChartRegion.QP_TRANSITION:
            return self.qp_transition(v)
        return self.pq_transition(v)


def apply_unfolded(cfg: ModelConfig, up: UnfoldingParams, v: Vec3, region: ChartRegion,
                   ctx: Optional[ScalarContext] = None, strict: bool = True) -> Vec3:
    return UnfoldedModel(cfg, up, ctx, strict).apply(region, v)


def heteroclinic_images(cfg: ModelConfig, up: UnfoldingParams,
                        ctx: Optional[ScalarContext] = None) -> Tuple[Vec3, Vec3]:
    """Images of X and Y under the perturbed transitions: (X~ + nu_bar, Y~ + mu_bar)"""
    model = UnfoldedModel(cfg, up, ctx)
    ctx = model.ctx
    return model.qp_transition(ctx.vec(X_POINT)), model.pq_transition(ctx.vec(Y_POINT))
