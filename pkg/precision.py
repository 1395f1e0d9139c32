"""Scalar contexts: Python floats for native runs, a private mpmath context for extended ones.

Renormalization at index k multiplies and divides by sigma_P^(2m) sigma_Q^(2n), which
leaves the double range after a few dozen iterates. Every numeric routine in the lab
takes a ScalarContext and does its arithmetic through it.
"""
import logging
import math
import os
from dataclasses import dataclass
from typing import Any, Iterable, NamedTuple, Optional, Tuple

import mpmath
import numpy as np

from errors import ConfigError, PrecisionLoss

logger = logging.getLogger(__name__)

PRECISION_ENV_VAR = "HETREN_PRECISION"
PRECISION_MODES = ("native", "extended")
DEFAULT_DPS = 40
NATIVE_DIGITS = 15
GUARD_BITS = 64


class Vec3(NamedTuple):
    """A point of R^3. The fields may also hold equally shaped numpy arrays."""

    x: Any
    y: Any
    z: Any

    def plus(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def minus(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def scaled(self, factor: Any) -> "Vec3":
        return Vec3(factor * self.x, factor * self.y, factor * self.z)

    def norm_sq(self) -> Any:
        return self.x * self.x + self.y * self.y + self.z * self.z

    def sup_norm(self) -> float:
        return max(float(np.max(np.abs(np.asarray(c)))) for c in self)

    def as_floats(self) -> "Vec3":
        return Vec3(*(np.asarray(c, dtype=float) if np.ndim(c) else float(c) for c in self))


class ScalarContext:
    """Arithmetic at a fixed working precision.

    native   -> Python floats (53-bit mantissa, double exponent range)
    extended -> mpf numbers of a private mpmath context with `dps` digits
    """

    def __init__(self, mode: str = "extended", dps: int = DEFAULT_DPS):
        if mode not in PRECISION_MODES:
            raise ConfigError(f"Unknown precision mode: {mode!r} (expected one of {PRECISION_MODES})")
        self.mode = mode
        self.mp = mpmath.MPContext()
        if mode == "native":
            self.dps = NATIVE_DIGITS
            self.mp.prec = 53
        else:
            if int(dps) < 32:
                raise ConfigError(f"Extended precision needs at least 32 digits, got {dps}")
            self.dps = int(dps)
            self.mp.dps = self.dps

    def __repr__(self) -> str:
        return f"ScalarContext(mode={self.mode!r}, dps={self.dps})"

    @property
    def is_native(self) -> bool:
        return self.mode == "native"

    def describe(self) -> dict:
        return {"mode": self.mode, "dps": self.dps}

    # -- conversions -------------------------------------------------------

    def scalar(self, value: Any) -> Any:
        if self.is_native:
            return float(value)
        return self.mp.mpf(value)

    def array(self, values: Any) -> np.ndarray:
        """Convert an array of floats to the working scalar (object dtype when extended)"""
        arr = np.asarray(values, dtype=float)
        if self.is_native:
            return arr
        return np.frompyfunc(self.mp.mpf, 1, 1)(arr).astype(object)

    def vec(self, v: Iterable[Any]) -> Vec3:
        return Vec3(*(self.scalar(c) for c in v))

    def to_float(self, value: Any) -> float:
        return float(value)

    # -- elementary functions ----------------------------------------------

    @property
    def pi(self) -> Any:
        return math.pi if self.is_native else +self.mp.pi

    def sqrt(self, x: Any) -> Any:
        return math.sqrt(x) if self.is_native else self.mp.sqrt(x)

    def exp(self, x: Any) -> Any:
        return math.exp(x) if self.is_native else self.mp.exp(x)

    def log(self, x: Any) -> Any:
        return math.log(x) if self.is_native else self.mp.log(x)

    def cos(self, x: Any) -> Any:
        return math.cos(x) if self.is_native else self.mp.cos(x)

    def sin(self, x: Any) -> Any:
        return math.sin(x) if self.is_native else self.mp.sin(x)

    def floor(self, x: Any) -> int:
        return math.floor(x) if self.is_native else int(self.mp.floor(x))

    def isfinite(self, x: Any) -> bool:
        return math.isfinite(x) if self.is_native else bool(self.mp.isfinite(x))

    def power(self, *factors: Tuple[float, int]) -> Any:
        """Grouped product of base**exponent pairs.

        Evaluated as exp of the summed logs with GUARD_BITS extra bits and rounded
        once, so sigma^m lambda^n never passes through a huge or tiny intermediate.
        """
        with self.mp.extraprec(GUARD_BITS):
            total = self.mp.fsum(self.mp.mpf(exponent) * self.mp.log(self.mp.mpf(base))
                                 for base, exponent in factors)
            value = self.mp.exp(total)
        if not self.is_native:
            return +value
        try:
            result = float(value)
        except OverflowError:
            result = math.inf
        if result == 0.0 or math.isinf(result):
            raise PrecisionLoss(f"power product {factors} leaves the double range (log = {float(total):.1f})")
        return result

    def with_digits(self, digits: int) -> "ScalarContext":
        """A context carrying at least `digits` significant digits"""
        if digits <= self.dps:
            return self
        if self.is_native:
            raise PrecisionLoss(
                f"native precision carries {NATIVE_DIGITS} digits, {digits} are needed; "
                f"use extended precision"
            )
        logger.debug(f"raising working precision from {self.dps} to {digits} digits")
        return ScalarContext("extended", digits)


NATIVE = ScalarContext("native")


def resolve(ctx: Optional[ScalarContext]) -> ScalarContext:
    return NATIVE if ctx is None else ctx


@dataclass(frozen=True)
class PrecisionSetting:
    """Serializable precision selector stored in ModelConfig"""

    mode: str = "extended"
    dps: int = DEFAULT_DPS

    def __post_init__(self):
        if self.mode not in PRECISION_MODES:
            raise ConfigError(f"Unknown precision mode: {self.mode!r}")

    def context(self) -> ScalarContext:
        return ScalarContext(self.mode, self.dps)

    def with_env(self) -> "PrecisionSetting":
        """Apply the HETREN_PRECISION override, if set"""
        override = os.environ.get(PRECISION_ENV_VAR)
        if not override:
            return self
        override = override.strip().lower()
        if override not in PRECISION_MODES:
            raise ConfigError(f"{PRECISION_ENV_VAR}={override!r} is not one of {PRECISION_MODES}")
        return PrecisionSetting(override, self.dps)
