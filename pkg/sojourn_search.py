"""
Sojourn times and adapted arguments.

A sojourn pair (m, n) makes sigma_P^m lambda_Q^n close to the target xi / tau while keeping
|m - n eta - eta~| < 1. Along a schedule of such pairs the rotation arguments are adjusted so
that the m-th and n-th iterated rotations land on pi/4 + zeta and pi/2 + vartheta.
"""
import json
import logging
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, List, NamedTuple, Optional, Tuple

import mpmath

from errors import ConfigError, NotInZTilde, SojournNotFound
from precision import GUARD_BITS, ScalarContext, resolve

logger = logging.getLogger(__name__)

SEARCH_DIGITS = 30
VERIFY_DIGITS = 50
RESONANCE_TOLERANCE = 1e-9
RESONANCE_MAX_DENOMINATOR = 100


class SpectralCheck(NamedTuple):
    ok: bool
    eta: float
    value: float


def check_spectral(spec) -> SpectralCheck:
    """0 < (lambda_P^(1/2) sigma_P)^eta sigma_Q < 1 with eta = log(1/lambda_Q) / log(sigma_P)"""
    eta = math.log(1 / spec.lambda_Q) / math.log(spec.sigma_P)
    value = (math.sqrt(spec.lambda_P) * spec.sigma_P) ** eta * spec.sigma_Q
    return SpectralCheck(0 < value < 1, eta, value)


def sigma_interval(lt: float, st: float, l: float) -> Tuple[float, float]:
    """(1, sigma*) of the sigma_Q values that satisfy the spectral condition"""
    base = math.sqrt(lt) * st
    if not (lt > 0 and st > 1 and 0 < base < 1):
        raise NotInZTilde(f"(lambda={lt}, sigma={st}) needs 0 < lambda^(1/2) sigma < 1, got {base}")
    if not 0 < l < 1:
        raise NotInZTilde(f"lambda_Q must lie in (0, 1), got {l}")
    eta = math.log(1 / l) / math.log(st)
    return 1.0, math.exp(-eta * math.log(base))


def tau_of(cfg) -> float:
    return cfg.qp.gamma3 * (cfg.pq.a3 - cfg.pq.a2) / math.sqrt(2)


@dataclass(frozen=True)
class SojournPair:
    m: int
    n: int
    product: float
    slack: float

    def __post_init__(self):
        if not self.product > 0:
            raise ValueError(f"product must be positive, got {self.product}")


def _resonance(eta: float) -> Optional[Fraction]:
    approx = Fraction(eta).limit_denominator(RESONANCE_MAX_DENOMINATOR)
    if abs(eta - approx.numerator / approx.denominator) < RESONANCE_TOLERANCE:
        return approx
    return None


def search_diagnostic(sigma: float, lam: float, tau: float, xi: float, eps: float, n_max: int) -> str:
    """Why no sojourn pair turned up"""
    eta = math.log(1 / lam) / math.log(sigma)
    notes = []
    ratio = _resonance(eta)
    if ratio is not None:
        notes.append(
            f"resonance: log(1/lambda)/log(sigma) = {eta:.12g} is within {RESONANCE_TOLERANCE:g} of "
            f"{ratio.numerator}/{ratio.denominator}, so sigma^m lambda^n takes values on a lattice"
        )
    window = 2 * abs(math.log(xi / tau)) / math.log(sigma)
    if window >= 1:
        notes.append(
            f"window: an exact hit has slack 2|log(xi/tau)|/log(sigma) = {window:.4f} >= 1, "
            f"so the two conditions cannot hold together"
        )
    if not notes:
        notes.append(f"no pair within eps={eps:g} of the target before n_max={n_max}")
    return "; ".join(notes)


def find_sojourn(sigma: float, lam: float, tau: float, xi: float, eps: float, n0: int = 10,
                 n_max: int = 2000, precision_digits: int = SEARCH_DIGITS) -> SojournPair:
    """First (m, n) with m, n > n0, |tau sigma^m lambda^n - xi| < eps and |m - n eta - eta~| < 1.

    The slack condition leaves only floor and ceil of n eta + eta~ as candidates for each n.
    """
    if not (sigma > 1 and 0 < lam < 1 and tau > 0 and xi > 0 and 0 < eps < xi):
        raise ValueError(
            f"find_sojourn needs sigma > 1, 0 < lambda < 1, tau > 0, xi > 0, 0 < eps < xi; "
            f"got sigma={sigma}, lambda={lam}, tau={tau}, xi={xi}, eps={eps}"
        )
    mp = mpmath.MPContext()
    mp.dps = precision_digits
    log_sigma = mp.log(mp.mpf(sigma))
    log_lam = mp.log(mp.mpf(lam))
    eta = -log_lam / log_sigma
    eta_t = mp.log(mp.mpf(tau) / mp.mpf(xi)) / log_sigma
    target = mp.mpf(xi)
    for n in range(n0 + 1, n_max + 1):
        t = n * eta + eta_t
        lower = int(mp.floor(t))
        for m in (lower, lower + 1):
            if m <= n0:
                continue
            slack = abs(m - t)
            if slack >= 1:
                continue
            product = mp.exp(m * log_sigma + n * log_lam)
            if abs(tau * product - target) < eps:
                logger.debug(f"sojourn hit (m={m}, n={n}), product={mp.nstr(product, 10)}")
                return SojournPair(m, n, float(product), float(slack))
    raise SojournNotFound(n_max, search_diagnostic(sigma, lam, tau, xi, eps, n_max))


@dataclass(frozen=True)
class SojournSchedule:
    """Sojourn pairs with argument offsets (zeta_k, vartheta_k) adapted to target = xi / tau"""

    pairs: Tuple[SojournPair, ...]
    offsets: Tuple[Tuple[float, float], ...]
    target: float

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        object.__setattr__(self, "offsets", tuple(tuple(o) for o in self.offsets))
        if len(self.pairs) != len(self.offsets):
            raise ValueError(f"{len(self.pairs)} pairs but {len(self.offsets)} offsets")
        for prev, cur in zip(self.pairs, self.pairs[1:]):
            if not (cur.m > prev.m and cur.n > prev.n):
                raise ValueError(f"pairs must increase strictly in m and n: {prev} then {cur}")
        for k, (zeta, vartheta) in enumerate(self.offsets):
            if max(abs(zeta), abs(vartheta)) > 1 / (k + 1):
                raise ValueError(f"offset {k} = {(zeta, vartheta)} exceeds the decay bound 1/{k + 1}")

    def __len__(self) -> int:
        return len(self.pairs)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "entries": [
                dict(asdict(pair), zeta=zeta, vartheta=vartheta)
                for pair, (zeta, vartheta) in zip(self.pairs, self.offsets)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SojournSchedule":
        try:
            entries = data["entries"]
            pairs = [SojournPair(e["m"], e["n"], e["product"], e["slack"]) for e in entries]
            offsets = [(e["zeta"], e["vartheta"]) for e in entries]
            return cls(tuple(pairs), tuple(offsets), data["target"])
        except KeyError as e:
            raise ConfigError(f"Schedule is missing field {e}") from e
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Malformed schedule: {e}") from e

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, path) -> "SojournSchedule":
        try:
            data = json.loads(Path(path).read_text())
        except OSError as e:
            raise ConfigError(f"Cannot read schedule {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"Schedule {path} is not valid JSON: {e}") from e
        return cls.from_dict(data)


def build_schedule(sigma: float, lam: float, tau: float, xi: float, count: int, eps0: float,
                   n0: int = 10, n_max: int = 2000, offset_scale: float = 1.0) -> SojournSchedule:
    """`count` sojourn pairs, the k-th within eps0 / 2^k of xi, with offsets offset_scale/(k+2)"""
    if count < 0:
        raise ValueError(f"count must be non-negative, got {count}")
    if not 0 <= offset_scale <= 1:
        raise ValueError(f"offset_scale must lie in [0, 1], got {offset_scale}")
    target = xi / tau
    pairs: List[SojournPair] = []
    offsets = []
    start = n0

    def behind(pair: SojournPair) -> bool:
        if not pairs:
            return False
        prev = pairs[-1]
        return pair.m <= prev.m or abs(pair.product - target) > abs(prev.product - target)

    for k in range(count):
        eps = eps0 / 2 ** k
        pair = find_sojourn(sigma, lam, tau, xi, eps, start, n_max)
        while behind(pair):
            pair = find_sojourn(sigma, lam, tau, xi, eps, pair.n, n_max)
        logger.info(f"schedule entry {k}: (m={pair.m}, n={pair.n}), eps={eps:g}")
        pairs.append(pair)
        offsets.append((offset_scale / (k + 2), offset_scale / (k + 2)))
        start = pair.n
    return SojournSchedule(tuple(pairs), tuple(offsets), target)


def verify_schedule(schedule: SojournSchedule, sigma: float, lam: float, tau: float, xi: float,
                    eps0: float) -> List[str]:
    """Re-check every lemma inequality at VERIFY_DIGITS; returns the problems found"""
    mp = mpmath.MPContext()
    mp.dps = VERIFY_DIGITS
    log_sigma = mp.log(mp.mpf(sigma))
    log_lam = mp.log(mp.mpf(lam))
    eta = -log_lam / log_sigma
    eta_t = mp.log(mp.mpf(tau) / mp.mpf(xi)) / log_sigma
    target = mp.mpf(xi) / mp.mpf(tau)
    problems = []
    previous_gap = None
    for k, pair in enumerate(schedule.pairs):
        product = mp.exp(pair.m * log_sigma + pair.n * log_lam)
        slack = abs(pair.m - pair.n * eta - eta_t)
        gap = abs(product - target)
        if slack >= 1:
            problems.append(f"k={k}: slack {mp.nstr(slack, 6)} >= 1")
        if abs(tau * product - xi) >= eps0 / 2 ** k:
            problems.append(f"k={k}: |tau*product - xi| = {mp.nstr(abs(tau * product - xi), 6)} "
                            f">= {eps0 / 2 ** k:g}")
        if previous_gap is not None and gap > previous_gap:
            problems.append(f"k={k}: gap to the target grew from {mp.nstr(previous_gap, 6)}")
        if abs(product - pair.product) > 1e-12 * product:
            problems.append(f"k={k}: stored product {pair.product} disagrees with {mp.nstr(product, 15)}")
        previous_gap = gap
    return problems


class AdaptedArguments(NamedTuple):
    alpha: Any
    beta: Any


def adapted_arguments(m: int, n: int, theta: Any, omega: Any, zeta: Any, vartheta: Any,
                      ctx: Optional[ScalarContext] = None) -> AdaptedArguments:
    """Arguments alpha, beta with 2 pi m (theta + alpha) = pi/4 + zeta and
    2 pi n (omega + beta) = pi/2 + vartheta modulo 2 pi"""
    if m < 1 or n < 1:
        raise ValueError(f"m and n must be positive, got m={m}, n={n}")
    ctx = resolve(ctx)
    with ctx.mp.extraprec(GUARD_BITS):
        pi = +ctx.mp.pi
        two_pi = 2 * pi
        m_theta = m * ctx.mp.mpf(theta)
        n_omega = n * ctx.mp.mpf(omega)
        alpha = (pi / 4 - two_pi * m_theta + two_pi * ctx.mp.floor(m_theta) + zeta) / (two_pi * m)
        beta = (pi / 2 - two_pi * n_omega + two_pi * ctx.mp.floor(n_omega) + vartheta) / (two_pi * n)
    return AdaptedArguments(ctx.scalar(alpha), ctx.scalar(beta))


def congruence_residuals(m: int, n: int, theta: Any, omega: Any, alpha: Any, beta: Any,
                         zeta: Any, vartheta: Any) -> Tuple[float, float]:
    """Distance of m(theta+alpha) - (pi/4+zeta)/2pi and n(omega+beta) - (pi/2+vartheta)/2pi to the integers"""
    mp = mpmath.MPContext()
    mp.dps = VERIFY_DIGITS
    two_pi = 2 * mp.pi
    turns_P = m * (mp.mpf(theta) + mp.mpf(alpha)) - (mp.pi / 4 + mp.mpf(zeta)) / two_pi
    turns_Q = n * (mp.mpf(omega) + mp.mpf(beta)) - (mp.pi / 2 + mp.mpf(vartheta)) / two_pi
    return (float(abs(turns_P - mp.nint(turns_P))), float(abs(turns_Q - mp.nint(turns_Q))))


class TrigSequences(NamedTuple):
    ct: Any
    st: Any
    c: Any
    s: Any


def _reduced_turns(ctx: ScalarContext, count: int, phi: Any) -> Any:
    bits = GUARD_BITS + max(count, 1).bit_length()
    with ctx.mp.extraprec(bits):
        turns = count * ctx.mp.mpf(phi)
        turns = turns - ctx.mp.floor(turns)
        return 2 * ctx.mp.pi * turns


def trig_sequences(m: int, n: int, phi_P_adj: Any, phi_Q_adj: Any,
                   ctx: Optional[ScalarContext] = None) -> TrigSequences:
    """cos and sin of 2 pi m phi_P_adj and 2 pi n phi_Q_adj, taken on the angle reduced mod 2 pi"""
    ctx = resolve(ctx)
    angle_P = _reduced_turns(ctx, m, phi_P_adj)
    angle_Q = _reduced_turns(ctx, n, phi_Q_adj)
    with ctx.mp.extraprec(GUARD_BITS):
        values = (ctx.mp.cos(angle_P), ctx.mp.sin(angle_P), ctx.mp.cos(angle_Q), ctx.mp.sin(angle_Q))
    return TrigSequences(*(ctx.scalar(v) for v in values))


def rho_tilde(qp, c: Any, s: Any) -> Tuple[Any, Any]:
    h = qp.hqp
    r2 = h.entry(1, 0, 0) * (c - s) ** 2 / 2 + h.entry(1, 2, 2) * (s + c) ** 2 / 2
    r3 = h.entry(2, 0, 0) * (s - c) ** 2 / 2 + h.entry(2, 2, 2) * (s + c) ** 2 / 2
    return r2, r3
