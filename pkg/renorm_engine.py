"""
Renormalization of the unfolded model.

At schedule index k with sojourn pair (m, n) the return map
    Psi^-1 o [PQ transition] o [P-local]^m o [QP transition] o [Q-local]^n o Psi
is computed two ways: by direct composition through the chart system (DirectMap path) and by
the closed-form coordinates (ClosedFormMap). The closed form is also compared against the
limit endomorphism E to measure C^0 and C^1 convergence.
"""
import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from cycle_model import ModelConfig, UnfoldedModel, UnfoldingParams
from errors import CompositionError, DomainEscape, OutOfNeighbourhood, PlateauViolation
from henon_limit import EParams, eval_E, limit_hessian, limit_jacobian
from precision import ScalarContext, Vec3, resolve
from sojourn_search import (
    SojournPair,
    SojournSchedule,
    TrigSequences,
    adapted_arguments,
    rho_tilde,
    tau_of,
    trig_sequences,
)

logger = logging.getLogger(__name__)

DEFAULT_GRID_POINTS = 11
DEFAULT_FD_STEP = 1e-5
SECOND_DIFF_STEP = 1e-3
DIRECT_GUARD_DIGITS = 20
CSV_COLUMNS = [
    "k", "m", "n", "sup_c0_error", "sup_c1_error", "cross_check_error",
    "prod_target_gap", "lp_s2m_s2n", "hot1", "hot2", "hot3",
]
INADMISSIBLE = (DomainEscape, OutOfNeighbourhood, PlateauViolation)


# -- rescaling charts ----------------------------------------------------------


def psi(spec, pair: SojournPair, v: Vec3, ctx: Optional[ScalarContext] = None) -> Vec3:
    """(1 + S x, sigma_Q^-n + S^2 y, 1 + S z) with S = sigma_P^-m sigma_Q^-n"""
    ctx = resolve(ctx)
    scale = ctx.power((spec.sigma_P, -pair.m), (spec.sigma_Q, -pair.n))
    scale_y = ctx.power((spec.sigma_P, -2 * pair.m), (spec.sigma_Q, -2 * pair.n))
    offset = ctx.power((spec.sigma_Q, -pair.n))
    x, y, z = v
    return Vec3(1 + scale * x, offset + scale_y * y, 1 + scale * z)


def psi_inv(spec, pair: SojournPair, v: Vec3, ctx: Optional[ScalarContext] = None) -> Vec3:
    ctx = resolve(ctx)
    inv_scale = ctx.power((spec.sigma_P, pair.m), (spec.sigma_Q, pair.n))
    inv_scale_y = ctx.power((spec.sigma_P, 2 * pair.m), (spec.sigma_Q, 2 * pair.n))
    offset = ctx.power((spec.sigma_Q, -pair.n))
    x, y, z = v
    return Vec3(inv_scale * (x - 1), inv_scale_y * (y - offset), inv_scale * (z - 1))


def psi_image_radius(spec, pair: SojournPair, half_width: float = 1.0) -> float:
    """Largest distance from Psi([-h, h]^3) to Y~ = (1, 0, 1)"""
    s = spec.sigma_P ** -pair.m * spec.sigma_Q ** -pair.n
    offset = spec.sigma_Q ** -pair.n
    return math.sqrt(2 * (s * half_width) ** 2 + (offset + s * s * half_width) ** 2)


def required_digits(cfg: ModelConfig, pair: SojournPair, base: int = DIRECT_GUARD_DIGITS) -> int:
    """Working digits for the direct composition: base plus log10(sigma_P^2m sigma_Q^2n)"""
    spec = cfg.spectrum
    growth = 2 * pair.m * math.log10(spec.sigma_P) + 2 * pair.n * math.log10(spec.sigma_Q)
    return base + math.ceil(growth)


# -- bifurcation parameters ----------------------------------------------------


def mu_bar_k(cfg: ModelConfig, pair: SojournPair, mu: Any, ctx: Optional[ScalarContext] = None) -> Vec3:
    ctx = resolve(ctx)
    spec, pq = cfg.spectrum, cfg.pq
    lp_m = ctx.power((spec.lambda_P, pair.m))
    return Vec3(
        -lp_m * pq.a1,
        ctx.power((spec.sigma_Q, -pair.n))
        + ctx.power((spec.sigma_Q, -2 * pair.n), (spec.sigma_P, -2 * pair.m)) * ctx.scalar(mu)
        - lp_m * pq.b1,
        -lp_m * pq.c1,
    )


def nu_bar_k(cfg: ModelConfig, pair: SojournPair, trig: TrigSequences, rho_t: Tuple[Any, Any],
             ctx: Optional[ScalarContext] = None) -> Vec3:
    ctx = resolve(ctx)
    spec, qp = cfg.spectrum, cfg.qp
    ct, st, c, s = trig
    r2, r3 = rho_t
    lq_n = ctx.power((spec.lambda_Q, pair.n))
    lq_2n = ctx.power((spec.lambda_Q, 2 * pair.n))
    sp_m = ctx.power((spec.sigma_P, -pair.m))
    return Vec3(
        -lq_n * (qp.alpha1 * (c - s) + qp.alpha3 * (s + c)),
        sp_m * (ct + st) - lq_2n * r2,
        sp_m * (ct - st) - lq_n * qp.gamma3 * (c + s) - lq_2n * r3,
    )


@dataclass(frozen=True)
class RenormParams:
    """Unfolding parameters for schedule index k at the free parameter mu"""

    k: int
    pair: SojournPair
    mu: float
    mu_bar: Vec3
    nu_bar: Vec3
    alpha: Any
    beta: Any
    trig: TrigSequences
    rho_t: Tuple[Any, Any]
    ctx: ScalarContext = field(compare=False)

    @classmethod
    def build(cls, cfg: ModelConfig, schedule: SojournSchedule, k: int, mu: float,
              ctx: Optional[ScalarContext] = None) -> "RenormParams":
        ctx = resolve(ctx)
        pair = schedule.pairs[k]
        zeta, vartheta = schedule.offsets[k]
        spec = cfg.spectrum
        alpha, beta = adapted_arguments(pair.m, pair.n, spec.phi_P, spec.phi_Q, zeta, vartheta, ctx)
        trig = trig_sequences(pair.m, pair.n, ctx.scalar(spec.phi_P) + alpha,
                              ctx.scalar(spec.phi_Q) + beta, ctx)
        rho_t = rho_tilde(cfg.qp, trig.c, trig.s)
        return cls(
            k=k,
            pair=pair,
            mu=mu,
            mu_bar=mu_bar_k(cfg, pair, mu, ctx),
            nu_bar=nu_bar_k(cfg, pair, trig, rho_t, ctx),
            alpha=alpha,
            beta=beta,
            trig=trig,
            rho_t=rho_t,
            ctx=ctx,
        )

    def verify(self, cfg: ModelConfig):
        """Recompute mu_bar and nu_bar from the other fields"""
        tol = 10.0 ** (5 - self.ctx.dps)
        expected = (mu_bar_k(cfg, self.pair, self.mu, self.ctx),
                    nu_bar_k(cfg, self.pair, self.trig, self.rho_t, self.ctx))
        for name, stored, fresh in zip(("mu_bar", "nu_bar"), (self.mu_bar, self.nu_bar), expected):
            if any(abs(a - b) > tol * max(1, abs(b)) for a, b in zip(stored, fresh)):
                raise ValueError(f"{name} at k={self.k} drifted: stored {stored}, recomputed {fresh}")

    def unfolding(self) -> UnfoldingParams:
        return UnfoldingParams(self.mu_bar, self.nu_bar, self.alpha, self.beta)


def context_for(cfg: ModelConfig, pair: SojournPair, ctx: ScalarContext) -> ScalarContext:
    return ctx.with_digits(required_digits(cfg, pair))


# -- the two return-map evaluations ----------------------------------------------


def renorm_direct(cfg: ModelConfig, rp: RenormParams, v: Vec3) -> Vec3:
    """Psi^-1 o f^N2 o f^m o f^N1 o f^n o Psi through the perturbed chart system"""
    ctx = rp.ctx
    model = UnfoldedModel(cfg, rp.unfolding(), ctx)
    spec, pair = cfg.spectrum, rp.pair
    w = psi(spec, pair, Vec3(*v), ctx)
    for _ in range(pair.n):
        w = model.q_local(w)
    w = model.qp_transition(w)
    for _ in range(pair.m):
        w = model.p_local(w)
    w = model.pq_transition(w)
    return psi_inv(spec, pair, w, ctx)


class ClosedFormMap:
    """Closed-form renormalized coordinates at one schedule index.

    Accepts a Vec3 of scalars or of equally shaped arrays. `terms` also returns the three
    rescaled higher-order groups.
    """

    def __init__(self, cfg: ModelConfig, rp: RenormParams, ctx: Optional[ScalarContext] = None):
        self.cfg = cfg
        self.rp = rp
        ctx = self.ctx = resolve(ctx) if ctx is not None else rp.ctx
        spec = cfg.spectrum
        m, n = rp.pair.m, rp.pair.n
        lp, sp, lq, sq = spec.lambda_P, spec.sigma_P, spec.lambda_Q, spec.sigma_Q
        power = ctx.power
        self.ct, self.st, self.c, self.s = (ctx.scalar(t) for t in rp.trig)
        self.mu = ctx.scalar(rp.mu)

        self.A = power((sp, -m), (lq, n), (sq, -n))
        self.B = power((sp, -2 * m), (sq, -n))
        self.lq_n = power((lq, n))
        self.lq_2n = power((lq, 2 * n))
        self.lp_m = power((lp, m))
        self.lp_A = power((lp, m), (sp, -m), (lq, n), (sq, -n))
        self.lp_B = power((lp, m), (sp, -2 * m), (sq, -n))
        self.sp_m = power((sp, m))
        self.g = power((sp, 2 * m), (sq, n))
        self.u = power((sp, m), (sq, n))
        self.U = power((sp, 2 * m), (sq, 2 * n))
        self.y_scale = power((sp, -m), (sq, -n))
        self.q_scale = power((lq, n), (sq, -n))

        self.P1 = power((lp, m), (lq, n))
        self.P2 = power((lp, m), (sp, -m))
        self.P3 = power((sp, m), (lq, n))
        self.P4 = power((lp, m), (sq, n))
        self.P5 = power((lp, m), (sp, m), (lq, n), (sq, n))
        self.P6 = power((sp, 2 * m), (lq, 2 * n))
        self.lp_u = power((lp, m), (sp, m), (sq, n))
        self.landau = power((lp, m), (sp, 2 * m), (sq, 2 * n))

        c, s = self.c, self.s
        self.e = Vec3(self.lq_n * (c - s), ctx.scalar(0), self.lq_n * (c + s))
        hqp = cfg.qp.hqp
        self.xz_constant = tuple(self.lq_2n * hqp.entry(i, 0, 2) * (c - s) * (c + s) for i in range(3))

    def terms(self, v: Vec3) -> Tuple[Vec3, Tuple[Any, Any, Any]]:
        qp, pq = self.cfg.qp, self.cfg.pq
        hqp, hpq = qp.hqp, pq.hpq
        ct, st, c, s = self.ct, self.st, self.c, self.s
        x, y, z = v
        p = c * x - s * z
        q = s * x + c * z
        d = Vec3(self.A * p, self.B * y, self.A * q)
        ht1 = hqp.evaluate(0, d.plus(self.e))
        hat2 = hqp.evaluate(1, d) + hqp.bilinear(1, d, self.e) + self.xz_constant[1]
        hat3 = hqp.evaluate(2, d) + hqp.bilinear(2, d, self.e) + self.xz_constant[2]
        rot2 = ct * hat2 - st * hat3
        rot3 = st * hat2 + ct * hat3
        g2s, g3s = self.g * rot2, self.g * rot3

        beta_y = qp.beta2 * y
        gamma_q = qp.gamma3 * q
        y_lin = self.y_scale * ct * beta_y - self.q_scale * st * gamma_q
        z_lin = self.y_scale * st * beta_y + self.q_scale * ct * gamma_q
        uy_lin = ct * beta_y - self.P3 * st * gamma_q
        uz_lin = st * beta_y + self.P3 * ct * gamma_q
        aq = qp.alpha1 * p + qp.alpha3 * q
        hat = Vec3(
            self.lp_m + self.lp_A * aq + self.lp_B * qp.alpha2 * y + self.lp_m * ht1,
            y_lin + self.sp_m * rot2,
            z_lin + self.sp_m * rot3,
        )

        hot1 = (pq.a1 * self.lp_u * ht1 + pq.a2 * g2s + pq.a3 * g3s
                + self.u * hpq.evaluate(0, hat))
        hot2 = (pq.b1 * self.landau * ht1
                + pq.b2 * (g2s * g2s + 2 * g2s * uy_lin)
                + pq.b3 * (g3s * g3s + 2 * g3s * uz_lin)
                + pq.b4 * (g2s * g3s + g2s * uz_lin + g3s * uy_lin)
                + self.U * hpq.evaluate(1, hat))
        hot3 = (pq.c1 * self.lp_u * ht1 + pq.c2 * g2s + pq.c3 * g3s
                + self.u * hpq.evaluate(2, hat))

        b2, b3, b4 = pq.b2, pq.b3, pq.b4
        x_b = (pq.a1 * self.P1 * aq + pq.a1 * self.P2 * qp.alpha2 * y
               + (ct * pq.a2 + st * pq.a3) * beta_y
               + self.P3 * (ct * pq.a3 - st * pq.a2) * gamma_q + hot1)
        y_b = (self.mu + pq.b1 * self.P4 * qp.alpha2 * y + pq.b1 * self.P5 * aq
               + (ct * ct * b2 + st * st * b3 + ct * st * b4) * beta_y * beta_y
               + self.P6 * (st * st * b2 + ct * ct * b3 - ct * st * b4) * gamma_q * gamma_q
               + self.P3 * (2 * ct * st * (b3 - b2) + (ct * ct - st * st) * b4) * beta_y * gamma_q
               + hot2)
        z_b = (pq.c1 * self.P1 * aq + pq.c1 * self.P2 * qp.alpha2 * y
               + (ct * pq.c2 + st * pq.c3) * beta_y
               + self.P3 * (ct * pq.c3 - st * pq.c2) * gamma_q + hot3)
        return Vec3(x_b, y_b, z_b), (hot1, hot2, hot3)

    def __call__(self, v: Vec3) -> Vec3:
        return self.terms(v)[0]


def renorm_closed_form(cfg: ModelConfig, rp: RenormParams, v: Vec3) -> Vec3:
    return ClosedFormMap(cfg, rp)(v)


def limit_map(cfg: ModelConfig, xi: float, mu: float) -> EParams:
    from blender_cert import sigma_vector

    return EParams(xi, mu, sigma_vector(cfg, xi))


def mu_response_ratio(cfg: ModelConfig, rp_mu1: RenormParams, rp_mu2: RenormParams, v: Vec3) -> float:
    """(y(mu1) - y(mu2)) / (mu1 - mu2) of the directly composed return map"""
    y1 = renorm_direct(cfg, rp_mu1, v).y
    y2 = renorm_direct(cfg, rp_mu2, v).y
    return float((y1 - y2) / (rp_mu1.ctx.scalar(rp_mu1.mu) - rp_mu1.ctx.scalar(rp_mu2.mu)))


# -- convergence measurement -----------------------------------------------------


def make_grid(points_per_axis: int = DEFAULT_GRID_POINTS, half_width: float = 1.0) -> Vec3:
    """Uniform grid on [-h, h]^3 as three flat arrays; a single point is the origin"""
    if points_per_axis < 1:
        raise ValueError(f"points_per_axis must be positive, got {points_per_axis}")
    axis = np.zeros(1) if points_per_axis == 1 else np.linspace(-half_width, half_width, points_per_axis)
    xs, ys, zs = np.meshgrid(axis, axis, axis, indexing="ij")
    return Vec3(xs.ravel(), ys.ravel(), zs.ravel())


def _floats(value: Any, size: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(value, dtype=float), (size,))


def _as_ctx(grid: Vec3, ctx: ScalarContext) -> Vec3:
    return Vec3(*(ctx.array(c) for c in grid))


def _shifted(grid: Vec3, axis: int, h: float) -> Vec3:
    return Vec3(*(c + h if j == axis else c for j, c in enumerate(grid)))


def _jacobian_fd(fn, grid: Vec3, h: float, size: int) -> np.ndarray:
    """Richardson-extrapolated central differences, shape (size, 3, 3)"""
    jac = np.zeros((size, 3, 3))
    for j in range(3):
        def column(step):
            up = fn(_shifted(grid, j, step))
            dn = fn(_shifted(grid, j, -step))
            return np.stack([(_floats(a, size) - _floats(b, size)) for a, b in zip(up, dn)], axis=1) / (2 * step)

        coarse, fine = column(h), column(h / 2)
        jac[:, :, j] = (4 * fine - coarse) / 3
    return jac


def _hessian_fd(fn, grid: Vec3, h: float, size: int) -> np.ndarray:
    """Second central differences, shape (size, 3, 3, 3) indexed [point, component, i, j]"""
    hess = np.zeros((size, 3, 3, 3))
    centre = np.stack([_floats(c, size) for c in fn(grid)], axis=1)
    for i in range(3):
        for j in range(i, 3):
            if i == j:
                up = np.stack([_floats(c, size) for c in fn(_shifted(grid, i, h))], axis=1)
                dn = np.stack([_floats(c, size) for c in fn(_shifted(grid, i, -h))], axis=1)
                value = (up - 2 * centre + dn) / (h * h)
            else:
                corners = []
                for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                    moved = _shifted(_shifted(grid, i, si * h), j, sj * h)
                    corners.append(np.stack([_floats(c, size) for c in fn(moved)], axis=1))
                value = (corners[0] - corners[1] - corners[2] + corners[3]) / (4 * h * h)
            hess[:, :, i, j] = value
            hess[:, :, j, i] = value
    return hess


@dataclass
class RenormRecord:
    k: int
    pair: SojournPair
    sup_c0_error: float
    sup_c1_error: float
    cross_check_error: Optional[float]
    prod_target_gap: float
    lp_s2m_s2n: float
    hot1: float
    hot2: float
    hot3: float
    digits: int
    sup_c2_error: Optional[float] = None

    def row(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "m": self.pair.m,
            "n": self.pair.n,
            "sup_c0_error": self.sup_c0_error,
            "sup_c1_error": self.sup_c1_error,
            "cross_check_error": self.cross_check_error,
            "prod_target_gap": self.prod_target_gap,
            "lp_s2m_s2n": self.lp_s2m_s2n,
            "hot1": self.hot1,
            "hot2": self.hot2,
            "hot3": self.hot3,
        }


@dataclass
class RenormReport:
    records: List[RenormRecord]
    skipped: List[int]
    xi: float
    mu: float
    precision: Dict[str, Any]

    @property
    def first_admissible(self) -> Optional[int]:
        return self.records[0].k if self.records else None

    def column(self, name: str) -> List[Any]:
        return [getattr(r, name) for r in self.records]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for record in self.records:
            row = record.row()
            writer.writerow(["" if row[c] is None else _cell(row[c]) for c in CSV_COLUMNS])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_dict(self) -> Dict[str, Any]:
        records = []
        for r in self.records:
            row = r.row()
            row["digits"] = r.digits
            if r.sup_c2_error is not None:
                row["sup_c2_error"] = r.sup_c2_error
            records.append(row)
        return {
            "xi": self.xi,
            "mu": self.mu,
            "precision": self.precision,
            "first_admissible": self.first_admissible,
            "skipped": list(self.skipped),
            "records": records,
        }


def _cell(value: Any) -> str:
    return str(value) if isinstance(value, int) else f"{value:.17g}"


def _locate_failure(cfg: ModelConfig, rp: RenormParams, grid: Vec3, size: int) -> Optional[Vec3]:
    for i in range(size):
        point = Vec3(*(float(c[i]) for c in grid))
        try:
            renorm_direct(cfg, rp, rp.ctx.vec(point))
        except CompositionError:
            return point
    return None


def _measure(cfg: ModelConfig, schedule: SojournSchedule, k: int, xi: float, mu: float, grid: Vec3,
             fd_step: float, ctx: ScalarContext, cross_check: bool, order: int, limit: EParams) -> RenormRecord:
    pair = schedule.pairs[k]
    spec = cfg.spectrum
    work = context_for(cfg, pair, ctx) if cross_check else ctx
    rp = RenormParams.build(cfg, schedule, k, mu, work)
    closed = ClosedFormMap(cfg, rp, ctx)
    size = len(grid.x)
    values, hot = closed.terms(_as_ctx(grid, ctx))
    closed_f = np.stack([_floats(c, size) for c in values], axis=1)
    limit_f = np.stack([_floats(c, size) for c in eval_E(limit, grid)], axis=1)
    c0 = float(np.max(np.abs(closed_f - limit_f)))

    def evaluate(g: Vec3) -> Vec3:
        return closed(_as_ctx(g, ctx))

    jac = _jacobian_fd(evaluate, grid, fd_step, size)
    limit_jac = np.stack([limit_jacobian(limit, Vec3(*(c[i] for c in grid))) for i in range(size)])
    c1 = float(np.max(np.abs(jac - limit_jac)))

    c2 = None
    if order >= 2:
        hess = _hessian_fd(evaluate, grid, SECOND_DIFF_STEP, size)
        c2 = float(np.max(np.abs(hess - limit_hessian(limit)[None])))

    cross = None
    if cross_check:
        try:
            direct = renorm_direct(cfg, rp, _as_ctx(grid, work))
        except CompositionError as err:
            if err.point is None:
                err.point = _locate_failure(cfg, rp, grid, size)
            raise
        direct_f = np.stack([_floats(c, size) for c in direct], axis=1)
        cross = float(np.max(np.abs(direct_f - closed_f) / np.maximum(1.0, np.abs(closed_f))))

    gap = abs(work.power((spec.sigma_P, pair.m), (spec.lambda_Q, pair.n)) - xi / tau_of(cfg))
    landau = work.power((spec.lambda_P, pair.m), (spec.sigma_P, 2 * pair.m), (spec.sigma_Q, 2 * pair.n))
    hot_sups = [float(np.max(np.abs(_floats(h, size)))) for h in hot]
    record = RenormRecord(k, pair, c0, c1, cross, float(gap), float(landau), *hot_sups,
                          digits=work.dps, sup_c2_error=c2)
    logger.info(
        f"k={k} (m={pair.m}, n={pair.n}) C0={c0:.3e} C1={c1:.3e}"
        + (f" cross={cross:.3e}" if cross is not None else "")
        + f" digits={work.dps}"
    )
    return record


def convergence_report(cfg: ModelConfig, schedule: SojournSchedule, xi: float, mu: float,
                       grid: Optional[Vec3] = None, fd_step: float = DEFAULT_FD_STEP,
                       ctx: Optional[ScalarContext] = None, cross_check: bool = True,
                       order: int = 1) -> RenormReport:
    """Per-k C0/C1 errors against E, the direct/closed-form cross-check and decay diagnostics.

    Leading indices whose composition leaves the charts are recorded as skipped; a failure after
    the first admissible index is raised with its k and grid point.
    """
    if len(schedule) == 0:
        raise ValueError("convergence_report needs a non-empty schedule")
    if order not in (1, 2):
        raise ValueError(f"Unknown derivative order: {order}")
    ctx = ctx if ctx is not None else cfg.context()
    grid = make_grid() if grid is None else Vec3(*(np.asarray(c, dtype=float).ravel() for c in grid))
    limit = limit_map(cfg, xi, mu)
    records: List[RenormRecord] = []
    skipped: List[int] = []
    last_error: Optional[CompositionError] = None
    for k in range(len(schedule)):
        try:
            records.append(_measure(cfg, schedule, k, xi, mu, grid, fd_step, ctx, cross_check, order, limit))
        except INADMISSIBLE as err:
            err.at(k)
            if records:
                raise
            logger.warning(f"index {k} is not admissible: {err}")
            skipped.append(k)
            last_error = err
        except CompositionError as err:
            raise err.at(k)
    if not records:
        raise last_error
    return RenormReport(records, skipped, xi, mu, ctx.describe())
