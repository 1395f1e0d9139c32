import math
import os
from unittest import mock

import numpy as np
import pytest

from errors import ConfigError, PrecisionLoss
from precision import NATIVE, PRECISION_ENV_VAR, PrecisionSetting, ScalarContext, Vec3


def test_native_power_matches_float():
    assert NATIVE.power((2.0, 10), (0.5, 3)) == pytest.approx(128.0, rel=1e-14)


def test_extended_power_survives_double_overflow():
    ctx = ScalarContext("extended", 40)
    big = ctx.power((2.0, 2000), (2.5, 1000))
    expected = ctx.mp.mpf(2) ** 2000 * ctx.mp.mpf("2.5") ** 1000
    assert abs(big / expected - 1) < ctx.mp.mpf(10) ** -35


def test_native_power_overflow_is_precision_loss():
    with pytest.raises(PrecisionLoss):
        NATIVE.power((2.0, 2000))
    with pytest.raises(PrecisionLoss):
        NATIVE.power((0.04, 400))


def test_with_digits():
    ctx = ScalarContext("extended", 40)
    assert ctx.with_digits(30) is ctx
    assert ctx.with_digits(90).dps == 90
    with pytest.raises(PrecisionLoss):
        NATIVE.with_digits(20)


def test_array_conversion():
    ctx = ScalarContext("extended", 40)
    arr = ctx.array([0.5, -1.0])
    assert arr.dtype == object
    assert isinstance(arr[0], type(ctx.mp.mpf(1)))
    assert NATIVE.array([0.5]).dtype == np.float64


def test_vec3_helpers():
    v = Vec3(1.0, -2.0, 3.0)
    assert v.plus(v) == Vec3(2.0, -4.0, 6.0)
    assert v.minus(v) == Vec3(0.0, 0.0, 0.0)
    assert v.norm_sq() == 14.0
    assert v.sup_norm() == 3.0
    grid = Vec3(np.array([1.0, -5.0]), np.zeros(2), np.zeros(2))
    assert grid.sup_norm() == 5.0


def test_unknown_mode_rejected():
    with pytest.raises(ConfigError):
        ScalarContext("quad")
    with pytest.raises(ConfigError):
        PrecisionSetting("quad")


def test_env_override():
    with mock.patch.dict(os.environ, {PRECISION_ENV_VAR: "native"}):
        assert PrecisionSetting("extended", 40).with_env().mode == "native"
    with mock.patch.dict(os.environ, {PRECISION_ENV_VAR: "double"}):
        with pytest.raises(ConfigError):
            PrecisionSetting().with_env()
    with mock.patch.dict(os.environ, {}, clear=True):
        assert PrecisionSetting("extended", 50).with_env() == PrecisionSetting("extended", 50)


def test_trig_in_both_modes():
    ext = ScalarContext("extended", 40)
    assert float(ext.cos(ext.pi / 4)) == pytest.approx(math.sqrt(0.5), rel=1e-15)
    assert NATIVE.sin(NATIVE.pi / 2) == 1.0


def main():
    tests = [
        test_native_power_matches_float,
        test_extended_power_survives_double_overflow,
        test_native_power_overflow_is_precision_loss,
        test_with_digits,
        test_array_conversion,
        test_vec3_helpers,
        test_unknown_mode_rejected,
        test_env_override,
        test_trig_in_both_modes,
    ]
    print("=" * 60)
    print("PRECISION TESTS")
    print("=" * 60)
    failed = 0
    for test in tests:
        try:
            test()
            print(f"✅ {test.__name__}")
        except Exception as e:
            failed += 1
            print(f"❌ {test.__name__}: {e}")
    print(f"\n{len(tests) - failed}/{len(tests)} passed")


if __name__ == "__main__":
    main()
