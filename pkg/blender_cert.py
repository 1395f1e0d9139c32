"""
Blender certification for the limit family.

sigma_vector turns a configuration into the coefficients of E, gamma_xi reads off the Henon-like
parameters (kappa, eta), solve_targets inverts gamma_xi along one explicit linear section, and
certify_scheme assembles the evidence: spectral condition, blender-region membership and the
numerical convergence of the renormalization.
"""
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from convergence_metrics import decay_summary
from cycle_model import ModelConfig
from errors import InfeasibleTargets, ModelInvariantError
from henon_limit import BLENDER_MU, BLENDER_XI, SigmaVector, derived_limit_params, in_blender_region
from renorm_engine import DEFAULT_FD_STEP, RenormReport, convergence_report
from sojourn_search import check_spectral

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
DEFAULT_C0_THRESHOLD = 0.05
GRADE = "numerical-evidence"


def sigma_vector(cfg: ModelConfig, xi: float) -> SigmaVector:
    qp, pq = cfg.qp, cfg.pq
    b2, gap = qp.beta2, pq.a3 - pq.a2
    return SigmaVector(
        b2 * (pq.a2 + pq.a3) / SQRT2,
        b2 * b2 * (pq.b2 + pq.b3 + pq.b4) / 2,
        xi * xi * (pq.b2 + pq.b3 - pq.b4) / (gap * gap),
        xi * SQRT2 * b2 * (pq.b3 - pq.b2) / gap,
        b2 * (pq.c2 + pq.c3) / SQRT2,
    )


def gamma_xi(cfg: ModelConfig, xi: float) -> Tuple[float, float]:
    """(kappa, eta) = (s1^2 s3 / s2, s1 s5 / s2)"""
    kappa, _, eta5 = derived_limit_params(sigma_vector(cfg, xi))
    return kappa, eta5


def solve_targets(xi: float, kappa0: float, eta0: float, base: ModelConfig, nudge: bool = False,
                  nudge_magnitude: float = 1e-9) -> ModelConfig:
    """A config with gamma_xi = (kappa0, eta0).

    beta2, a2, a3, b2 + b3 + b4 and b3 - b2 stay fixed; b2 + b3 - b4 is solved from kappa0 and
    c2 from eta0. A zero c2 is only accepted as a nudge of size nudge_magnitude.
    """
    sv = sigma_vector(base, xi)
    if sv.s1 == 0 or sv.s2 == 0:
        raise InfeasibleTargets(f"the base config has s1={sv.s1}, s2={sv.s2}; both must be non-zero")
    pq, beta2 = base.pq, base.qp.beta2
    gap = pq.a3 - pq.a2
    total = pq.b2 + pq.b3 + pq.b4
    spread = pq.b3 - pq.b2
    sym = kappa0 * sv.s2 * gap * gap / (sv.s1 * sv.s1 * xi * xi)
    b23 = (total + sym) / 2
    c2 = eta0 * sv.s2 / (sv.s1 * SQRT2 * beta2)
    if c2 == 0:
        if not nudge:
            raise InfeasibleTargets(f"eta0={eta0} forces c2=0, which breaks b1*c2*(a3-a2) != 0")
        c2 = nudge_magnitude
        logger.warning(f"c2 nudged from 0 to {c2:g} to keep b1*c2*(a3-a2) != 0")
    try:
        return replace(base, pq=replace(pq, b2=(b23 - spread) / 2, b3=(b23 + spread) / 2,
                                        b4=(total - sym) / 2, c2=c2))
    except ModelInvariantError as e:
        raise InfeasibleTargets(f"targets (kappa0={kappa0}, eta0={eta0}) break the model: {e}") from e


@dataclass
class CertReport:
    sigma_vec: SigmaVector
    kappa: float
    eta4: float
    eta5: float
    spectral_ok: bool
    restriction_ok: bool
    restriction_ok_alt: bool
    xi: float
    mu: float
    eps: float
    schedule_summary: Optional[RenormReport] = None
    final_c0_error: Optional[float] = None
    c0_threshold: float = DEFAULT_C0_THRESHOLD
    decay: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    grade: str = GRADE

    @property
    def convergence_ok(self) -> bool:
        return self.final_c0_error is not None and self.final_c0_error < self.c0_threshold

    @property
    def verdict(self) -> str:
        return GRADE if passes(self, self.c0_threshold) else "not-certified"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "verdict": self.verdict,
            "grade": self.grade,
            "xi": self.xi,
            "mu": self.mu,
            "eps": self.eps,
            "sigma_vec": list(self.sigma_vec.as_tuple()),
            "kappa": self.kappa,
            "eta4": self.eta4,
            "eta5": self.eta5,
            "spectral_ok": self.spectral_ok,
            "restriction_ok": self.restriction_ok,
            "restriction_ok_alt": self.restriction_ok_alt,
            "final_c0_error": self.final_c0_error,
            "c0_threshold": self.c0_threshold,
            "decay": self.decay,
            "warnings": list(self.warnings),
            "schedule_summary": self.schedule_summary.to_dict() if self.schedule_summary else None,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def passes(report: CertReport, c0_threshold: float = DEFAULT_C0_THRESHOLD) -> bool:
    final = report.final_c0_error
    return report.spectral_ok and report.restriction_ok and final is not None and final < c0_threshold


def certify_scheme(cfg: ModelConfig, xi: float, mu: float, eps: float, schedule=None, grid=None,
                   ctx=None, c0_threshold: float = DEFAULT_C0_THRESHOLD,
                   fd_step: float = DEFAULT_FD_STEP) -> CertReport:
    """Collect the certification evidence; without a schedule the convergence part is left empty"""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    warnings = []
    if not BLENDER_XI[0] < xi < BLENDER_XI[1]:
        warnings.append(f"xi={xi} lies outside the blender interval {BLENDER_XI}")
    if not BLENDER_MU[0] < mu < BLENDER_MU[1]:
        warnings.append(f"mu={mu} lies outside the blender interval {BLENDER_MU}")
    for message in warnings:
        logger.warning(message)

    spectral = check_spectral(cfg.spectrum)
    sv = sigma_vector(cfg, xi)
    kappa, eta4, eta5 = derived_limit_params(sv)

    report = None
    final_c0 = None
    decay = {}
    if schedule is not None and len(schedule) > 0:
        report = convergence_report(cfg, schedule, xi, mu, grid=grid, fd_step=fd_step, ctx=ctx)
        final_c0 = report.records[-1].sup_c0_error
        decay = decay_summary(report)

    cert = CertReport(
        sigma_vec=sv,
        kappa=kappa,
        eta4=eta4,
        eta5=eta5,
        spectral_ok=spectral.ok,
        restriction_ok=in_blender_region(xi, mu, kappa, eta5, eps),
        restriction_ok_alt=in_blender_region(xi, mu, kappa, eta4, eps),
        xi=xi,
        mu=mu,
        eps=eps,
        schedule_summary=report,
        final_c0_error=final_c0,
        c0_threshold=c0_threshold,
        decay=decay,
        warnings=warnings,
    )
    logger.info(f"certificate: {cert.verdict} (spectral={cert.spectral_ok}, "
                f"restriction={cert.restriction_ok}, final C0={final_c0})")
    return cert
