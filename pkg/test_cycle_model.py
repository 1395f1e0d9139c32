import copy
import math
from dataclasses import replace
from pathlib import Path
from unittest import mock

import numpy as np
import pytest

import cycle_model
from cycle_model import (
    X_POINT,
    X_TILDE,
    Y_POINT,
    Y_TILDE,
    ChartRegion,
    ModelConfig,
    QuadCoeffs,
    UnfoldedModel,
    UnfoldingParams,
    apply_unfolded,
    bump1,
    bump3,
    check_quasi_transverse,
    check_tangency,
    heteroclinic_images,
    local_P,
    local_Q,
    plateau_state,
    rotation_perturb,
    trans_PQ,
    trans_QP,
    translation_perturb,
)
from errors import (
    ConfigError,
    DegenerateModel,
    DomainEscape,
    ModelInvariantError,
    OutOfNeighbourhood,
    PlateauViolation,
)
from precision import ScalarContext, Vec3

DEFAULT_CONFIG = Path(__file__).with_name("default_model.json")


def load_default() -> ModelConfig:
    return ModelConfig.from_json(DEFAULT_CONFIG)


def hessian(entries) -> QuadCoeffs:
    """Blocks from {(component, a, b): value}, symmetrised"""
    blocks = np.zeros((3, 3, 3))
    for (i, a, b), value in entries.items():
        blocks[i, a, b] = value
        blocks[i, b, a] = value
    return QuadCoeffs(blocks)


# -- bumps ---------------------------------------------------------------------


def test_bump1_shape():
    assert bump1(1.0, 2.0) == 0
    assert bump1(1.0, 1.0) == 0
    assert bump1(1.0, 0.25) == 1
    assert bump1(1.0, -0.5) == 1
    assert 0 < bump1(1.0, 0.75) < 1
    assert bump1(1.0, 0.75) == bump1(1.0, -0.75)
    xs = np.linspace(0.5, 1.0, 101)
    values = [bump1(1.0, x) for x in xs]
    assert all(a >= b for a, b in zip(values, values[1:]))
    with pytest.raises(ValueError):
        bump1(0.0, 0.1)


def test_bump3_product():
    rho = 0.4
    assert bump3(rho, Vec3(0.0, 0.0, 0.0)) == 1
    assert bump3(rho, Vec3(rho, 0.0, 0.0)) == 0
    v = Vec3(0.75 * rho, 0.75 * rho, 0.0)
    assert bump3(rho, v) == pytest.approx(bump1(rho, 0.75 * rho) ** 2)
    assert 0 < bump3(rho, v) < 1


def test_bump_in_extended_precision():
    ctx = ScalarContext("extended", 40)
    value = bump1(1.0, ctx.scalar(0.75), ctx)
    assert float(value) == pytest.approx(bump1(1.0, 0.75), rel=1e-14)


def test_plateau_state():
    assert plateau_state(1.0, 0.5) == "plateau"
    assert plateau_state(1.0, 0.7) == "transition"
    assert plateau_state(1.0, 1.0) == "support_free"


# -- local maps ----------------------------------------------------------------


def test_local_P_examples():
    spec = load_default().spectrum
    assert local_P(spec, 0.0, Vec3(1.0, 0.0, 0.0)) == pytest.approx((0.04, 0.0, 0.0))
    assert local_P(spec, -spec.phi_P, Vec3(0.0, 1.0, 0.0)) == (0.0, 2.0, 0.0)
    quarter = local_P(spec, 0.25 - spec.phi_P, Vec3(0.0, 1.0, 0.0))
    assert quarter == pytest.approx((0.0, 0.0, 2.0), abs=1e-14)


def test_local_Q_examples():
    spec = load_default().spectrum
    assert local_Q(spec, 0.0, Vec3(0.0, 1.0, 0.0)) == pytest.approx((0.0, 2.5, 0.0))
    assert local_Q(spec, -spec.phi_Q, Vec3(1.0, 0.0, 0.0)) == (0.4, 0.0, 0.0)
    quarter = local_Q(spec, 0.25 - spec.phi_Q, Vec3(1.0, 0.0, 0.0))
    assert quarter == pytest.approx((0.0, 0.0, 0.4), abs=1e-14)


def test_local_maps_preserve_splittings():
    spec = load_default().spectrum
    rng = np.random.default_rng(5)
    for y, z in rng.uniform(-1, 1, (50, 2)):
        out = local_P(spec, 0.01, Vec3(0.0, y, z))
        assert out.x == 0.0
        assert math.hypot(out.y, out.z) == pytest.approx(spec.sigma_P * math.hypot(y, z), rel=1e-14)
        out = local_Q(spec, 0.01, Vec3(y, 0.0, z))
        assert out.y == 0.0
        assert math.hypot(out.x, out.z) == pytest.approx(spec.lambda_Q * math.hypot(y, z), rel=1e-14)
    assert local_P(spec, 0.3, Vec3(0.7, 0.0, 0.0))[1:] == (0.0, 0.0)
    assert local_Q(spec, 0.3, Vec3(0.0, 0.7, 0.0)) == (0.0, 0.7 * spec.sigma_Q, 0.0)


# -- transitions ---------------------------------------------------------------


def test_trans_QP_examples():
    cfg = load_default()
    qp = cfg.qp
    assert trans_QP(qp, X_POINT) == X_TILDE
    delta = 0.01
    out = trans_QP(qp, X_POINT.plus(Vec3(0.0, delta, 0.0)))
    assert out == pytest.approx((1 + qp.alpha2 * delta, qp.beta2 * delta, 0.0))
    curved = replace(qp, hqp=hessian({(1, 0, 0): 2.0}))
    out = trans_QP(curved, X_POINT.plus(Vec3(delta, 0.0, 0.0)))
    assert out == pytest.approx((1 + qp.alpha1 * delta, delta * delta, 0.0))
    with pytest.raises(OutOfNeighbourhood):
        trans_QP(qp, Vec3(0.0, 1.6, 0.0))


def test_trans_PQ_examples():
    pq = load_default().pq
    assert trans_PQ(pq, Y_POINT) == Y_TILDE
    delta = 0.02
    out = trans_PQ(pq, Y_POINT.plus(Vec3(0.0, delta, 0.0)))
    assert out == pytest.approx((1 + pq.a2 * delta, pq.b2 * delta ** 2, 1 + pq.c2 * delta))
    out = trans_PQ(pq, Y_POINT.plus(Vec3(delta, 0.0, 0.0)))
    assert out == pytest.approx((1 + pq.a1 * delta, pq.b1 * delta, 1 + pq.c1 * delta))
    with pytest.raises(OutOfNeighbourhood):
        trans_PQ(pq, Vec3(0.0, 0.0, 1.0))


def test_transition_jacobians_match_linear_parts():
    cfg = load_default()
    h = 1e-5
    for fn, base, linear in (
        (lambda v: trans_QP(cfg.qp, v), X_POINT,
         [[cfg.qp.alpha1, cfg.qp.alpha2, cfg.qp.alpha3], [0, cfg.qp.beta2, 0], [0, 0, cfg.qp.gamma3]]),
        (lambda v: trans_PQ(cfg.pq, v), Y_POINT,
         [[cfg.pq.a1, cfg.pq.a2, cfg.pq.a3], [cfg.pq.b1, 0, 0], [cfg.pq.c1, cfg.pq.c2, cfg.pq.c3]]),
    ):
        jac = np.zeros((3, 3))
        for j in range(3):
            e = [0.0, 0.0, 0.0]
            e[j] = h
            jac[:, j] = (np.array(fn(base.plus(Vec3(*e)))) - np.array(fn(base.minus(Vec3(*e))))) / (2 * h)
        assert np.allclose(jac, linear, atol=1e-9)


# -- perturbations -------------------------------------------------------------


def test_translation_perturb_examples():
    center = Vec3(1.0, 0.0, 1.0)
    w = Vec3(0.01, -0.02, 0.005)
    rho = 0.2
    assert translation_perturb(center, w, rho, center) == pytest.approx(center.plus(w))
    far = center.plus(Vec3(0.0, rho, 0.0))
    assert translation_perturb(center, w, rho, far) == far
    v = center.plus(Vec3(0.03, 0.01, 0.0))
    assert translation_perturb(center, Vec3(0.0, 0.0, 0.0), rho, v) == v


def test_translation_preserves_ball():
    rng = np.random.default_rng(7)
    center = Vec3(1.0, 0.0, 1.0)
    rho = 0.2
    limit = (1 - math.sqrt(3) / 2) * rho
    for _ in range(10):
        direction = rng.normal(size=3)
        w = Vec3(*(0.95 * limit * direction / np.linalg.norm(direction)))
        for p in rng.normal(size=(1000, 3)):
            radius = rho * rng.uniform() ** (1 / 3)
            v = center.plus(Vec3(*(radius * p / np.linalg.norm(p))))
            assert math.sqrt(translation_perturb(center, w, rho, v).minus(center).norm_sq()) < rho
        for p in rng.normal(size=(20, 3)):
            edge = center.plus(Vec3(*(rho * p / np.linalg.norm(p))))
            assert translation_perturb(center, w, rho, edge) == edge


def test_rotation_perturb_examples():
    v = Vec3(0.1, 0.2, -0.3)
    assert rotation_perturb("x", 0.0, 1.0, v) == v
    far = Vec3(0.0, 1.0, 0.5)
    assert rotation_perturb("y", 0.3, 1.0, far) == far
    omega = 0.2
    c, s = math.cos(2 * math.pi * omega), math.sin(2 * math.pi * omega)
    assert rotation_perturb("x", omega, 1.0, v) == pytest.approx((0.1, c * 0.2 + s * 0.3, s * 0.2 - c * 0.3))
    assert rotation_perturb("y", omega, 1.0, v) == pytest.approx((c * 0.1 + s * 0.3, 0.2, s * 0.1 - c * 0.3))
    with pytest.raises(ValueError):
        rotation_perturb("z", omega, 1.0, v)


def test_rotation_preserves_cube():
    rng = np.random.default_rng(8)
    rho = 1.0
    for axis in ("x", "y"):
        for omega in (0.1, 0.37):
            for p in rng.uniform(-rho, rho, (5000, 3)):
                out = rotation_perturb(axis, omega, rho, Vec3(*p))
                assert max(abs(c) for c in out) <= rho + 1e-12
                assert math.sqrt(Vec3(*out).norm_sq()) == pytest.approx(np.linalg.norm(p), rel=1e-12)


# -- reports -------------------------------------------------------------------


def test_quasi_transverse_report():
    cfg = load_default()
    report = check_quasi_transverse(cfg)
    assert report.passed
    assert report.vector == pytest.approx([cfg.qp.alpha2, 1.41421356, 0.0], abs=1e-6)
    curved = replace(cfg, qp=replace(cfg.qp, hqp=hessian({(0, 1, 1): 3.0, (1, 0, 1): 0.5})))
    assert check_quasi_transverse(curved).vector == pytest.approx(report.vector, abs=1e-6)
    flat = replace(cfg, qp=replace(cfg.qp, beta2=1e-8))
    with pytest.raises(DegenerateModel):
        check_quasi_transverse(flat)
    with pytest.raises(ModelInvariantError):
        replace(cfg, qp=replace(cfg.qp, beta2=0.0))


def test_tangency_report():
    cfg = load_default()
    report = check_tangency(cfg)
    assert report.passed
    assert report.images[0] == pytest.approx([cfg.pq.a2, 0.0, cfg.pq.c2], abs=1e-9)
    assert report.images[1] == pytest.approx([cfg.pq.a3, 0.0, cfg.pq.c2], abs=1e-9)
    curved = replace(cfg, pq=replace(cfg.pq, hpq=hessian({(1, 0, 1): 0.7, (0, 1, 2): 0.4})))
    images = check_tangency(curved).images
    assert images[0][1] == pytest.approx(0.0, abs=1e-9)
    halved = check_tangency(cfg, h=0.5e-5)
    assert np.max(np.abs(halved.images[0] - report.images[0])) < 1e-8
    assert np.max(np.abs(report.fd_images[0] - report.fd_half_images[0])) < 1e-8


# -- unfolding family ------------------------------------------------------------


def test_zero_unfolding_is_unperturbed():
    cfg = load_default()
    zero = UnfoldingParams.zero()
    v = Vec3(0.3, 0.2, -0.1)
    assert apply_unfolded(cfg, zero, v, ChartRegion.P_LOCAL) == pytest.approx(local_P(cfg.spectrum, 0.0, v))
    assert apply_unfolded(cfg, zero, v, ChartRegion.Q_LOCAL) == pytest.approx(local_Q(cfg.spectrum, 0.0, v))
    near_x = X_POINT.plus(v.scaled(0.1))
    assert apply_unfolded(cfg, zero, near_x, ChartRegion.QP_TRANSITION) == trans_QP(cfg.qp, near_x)
    near_y = Y_POINT.plus(v.scaled(0.1))
    assert apply_unfolded(cfg, zero, near_y, "PQ-transition") == trans_PQ(cfg.pq, near_y)


def test_translation_realises_heteroclinic_offsets():
    cfg = load_default()
    up = UnfoldingParams(Vec3(0.0, 0.004, -0.002), Vec3(0.01, 0.0, 0.0), 0.0, 0.0)
    assert apply_unfolded(cfg, up, X_POINT, ChartRegion.QP_TRANSITION) == pytest.approx((1.01, 0.0, 0.0))
    x_image, y_image = heteroclinic_images(cfg, up)
    assert x_image == pytest.approx(X_TILDE.plus(up.nu_bar))
    assert y_image == pytest.approx(Y_TILDE.plus(up.mu_bar))


def test_rotation_plateau_matches_matrix():
    cfg = load_default()
    up = UnfoldingParams(Vec3(0.0, 0.0, 0.0), Vec3(0.0, 0.0, 0.0), 0.013, -0.021)
    rng = np.random.default_rng(9)
    for p in rng.uniform(-1, 1, (200, 3)):
        v = Vec3(*p)
        assert apply_unfolded(cfg, up, v, ChartRegion.P_LOCAL) == pytest.approx(
            local_P(cfg.spectrum, up.alpha, v), abs=1e-13)
        assert apply_unfolded(cfg, up, v, ChartRegion.Q_LOCAL) == pytest.approx(
            local_Q(cfg.spectrum, up.beta, v), abs=1e-13)


def test_support_and_plateau_checks():
    cfg = load_default()
    up = UnfoldingParams(Vec3(0.01, 0.0, 0.0), Vec3(0.0, 0.0, 0.0), 0.0, 0.0)
    outside = Y_POINT.plus(Vec3(0.3, 0.0, 0.0))
    assert apply_unfolded(cfg, up, outside, ChartRegion.PQ_TRANSITION) == trans_PQ(cfg.pq, outside)
    slope = Y_POINT.plus(Vec3(0.15, 0.0, 0.0))
    with pytest.raises(PlateauViolation):
        apply_unfolded(cfg, up, slope, ChartRegion.PQ_TRANSITION)
    blended = apply_unfolded(cfg, up, slope, ChartRegion.PQ_TRANSITION, strict=False)
    shift = blended.x - trans_PQ(cfg.pq, slope).x
    assert 0 < shift < 0.01
    spinning = UnfoldingParams(Vec3(0.0, 0.0, 0.0), Vec3(0.0, 0.0, 0.0), 0.01, 0.0)
    with pytest.raises(PlateauViolation):
        apply_unfolded(cfg, spinning, Vec3(0.0, 1.5, 1.5), ChartRegion.P_LOCAL)
    with pytest.raises(DomainEscape):
        apply_unfolded(cfg, UnfoldingParams.zero(), Vec3(0.0, 8.0, 0.0), ChartRegion.P_LOCAL)


def test_rotation_outside_support_is_unperturbed():
    cfg = load_default()
    spinning = UnfoldingParams(Vec3(0.0, 0.0, 0.0), Vec3(0.0, 0.0, 0.0), 0.01, 0.02)
    far_p = Vec3(0.0, 4.5, 0.0)
    far_q = Vec3(0.0, 3.6, 0.0)
    assert apply_unfolded(cfg, spinning, far_p, ChartRegion.P_LOCAL) == pytest.approx(
        local_P(cfg.spectrum, 0.0, far_p))
    assert apply_unfolded(cfg, spinning, far_q, ChartRegion.Q_LOCAL) == pytest.approx(
        local_Q(cfg.spectrum, 0.0, far_q))

    model = UnfoldedModel(cfg, spinning)
    grid = Vec3(np.array([0.0, 0.0]), np.array([0.5, 4.5]), np.array([0.0, 0.0]))
    out = model.p_local(grid)
    near = Vec3(0.0, 0.5, 0.0)
    assert [c[0] for c in out] == pytest.approx(local_P(cfg.spectrum, spinning.alpha, near), abs=1e-13)
    assert [c[1] for c in out] == pytest.approx(local_P(cfg.spectrum, 0.0, far_p))


def test_non_strict_blends_arrays_pointwise():
    cfg = load_default()
    up = UnfoldingParams(Vec3(0.02, 0.0, 0.01), Vec3(0.0, 0.0, 0.0), 0.01, 0.02)
    model = UnfoldedModel(cfg, up, strict=False)
    rng = np.random.default_rng(11)
    local = Vec3(*rng.uniform(-2.5, 2.5, (3, 8)))
    near_y = Vec3(*rng.uniform(-0.1, 0.1, (3, 8))).plus(Y_POINT)
    for apply, grid in ((model.p_local, local), (model.q_local, local), (model.pq_transition, near_y)):
        out = apply(grid)
        assert all(np.shape(c) == (8,) for c in out)
        for i in range(8):
            single = apply(Vec3(*(float(c[i]) for c in grid)))
            assert [c[i] for c in out] == pytest.approx(single, abs=1e-12)


def test_vectorised_matches_pointwise():
    cfg = load_default()
    ctx = ScalarContext("extended", 40)
    up = UnfoldingParams(Vec3(0.0, 0.0, 0.0), Vec3(0.001, 0.0, 0.002), 0.004, 0.003)
    model = UnfoldedModel(cfg, up, ctx)
    rng = np.random.default_rng(10)
    pts = rng.uniform(-0.01, 0.01, (3, 6))
    grid = Vec3(*(ctx.array(row) for row in pts)).plus(ctx.vec(X_POINT))
    local = model.q_local(grid)
    moved = model.qp_transition(grid)
    for i in range(6):
        point = Vec3(*(c[i] for c in grid))
        for out, single in ((local, model.q_local(point)), (moved, model.qp_transition(point))):
            assert all(abs(out[j][i] - single[j]) < 1e-35 for j in range(3))


def test_config_round_trip_and_errors():
    cfg = load_default()
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
    data = cfg.to_dict()
    bad = copy.deepcopy(data)
    bad["pq"]["b1"] = 0.0
    with pytest.raises(ModelInvariantError) as err:
        ModelConfig.from_dict(bad)
    assert [c.tag for c in err.value.failed] == ["e.d"]
    bad = copy.deepcopy(data)
    bad["qp"]["gamma3"] = -1.7
    with pytest.raises(ModelInvariantError) as err:
        ModelConfig.from_dict(bad)
    assert "e.>" in str(err.value)
    bad = copy.deepcopy(data)
    bad["pq"]["hessians"][1][1][1] = 1.0
    with pytest.raises(ModelInvariantError):
        ModelConfig.from_dict(bad)
    for broken in ({"spectrum": data["spectrum"]}, dict(data, extra=1), dict(data, rho="big")):
        with pytest.raises(ConfigError):
            ModelConfig.from_dict(broken)
    bad = copy.deepcopy(data)
    bad["qp"]["hessians"][0][0][1] = 1.0
    with pytest.raises(ConfigError):
        ModelConfig.from_dict(bad)


def test_mixed_xz_term_warns():
    cfg = load_default()
    with mock.patch.object(cycle_model.logger, "warning") as warn:
        replace(cfg, qp=replace(cfg.qp, hqp=hessian({(2, 0, 2): 0.3})))
    assert warn.called
    with mock.patch.object(cycle_model.logger, "warning") as warn:
        replace(cfg, qp=replace(cfg.qp, hqp=hessian({(2, 0, 0): 0.3, (1, 2, 2): 0.2})))
    assert not warn.called


def main():
    tests = [
        test_bump1_shape,
        test_bump3_product,
        test_bump_in_extended_precision,
        test_plateau_state,
        test_local_P_examples,
        test_local_Q_examples,
        test_local_maps_preserve_splittings,
        test_trans_QP_examples,
        test_trans_PQ_examples,
        test_transition_jacobians_match_linear_parts,
        test_translation_perturb_examples,
        test_translation_preserves_ball,
        test_rotation_perturb_examples,
        test_rotation_preserves_cube,
        test_quasi_transverse_report,
        test_tangency_report,
        test_zero_unfolding_is_unperturbed,
        test_translation_realises_heteroclinic_offsets,
        test_rotation_plateau_matches_matrix,
        test_support_and_plateau_checks,
        test_rotation_outside_support_is_unperturbed,
        test_non_strict_blends_arrays_pointwise,
        test_vectorised_matches_pointwise,
        test_config_round_trip_and_errors,
        test_mixed_xz_term_warns,
    ]
    print("=" * 60)
    print("CYCLE MODEL TESTS")
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
