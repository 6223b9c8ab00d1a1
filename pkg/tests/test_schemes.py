"""Time-stepping schemes: BDF coefficients, configuration validation, step
roots against an independent solver, invariants, startup and the
threshold-switch run loop."""

import math
from fractions import Fraction

import numpy as np
import pytest

from curveflow.femcore import initial_curvature
from curveflow.geometry import generate_ellipse, generate_mikula, perimeter, signed_area
from curveflow.linalg import EquilibriumDegeneracyError
from curveflow.schemes import (
    AP_PARTNER,
    SCHEMES,
    NewtonDivergenceError,
    SchemeConfig,
    SchemeError,
    bdf_coefficients,
    run,
    run_modified,
    scheme_kind,
    startup,
    step_ap_bdfk,
    step_pd_bdf2,
    step_sp_bdf2,
    step_sp_bdf2_variant,
    step_sp_cn,
    step_sp_euler,
)

import oracles

rng = np.random.default_rng(9127)


# ---------------------------------------------------------------------------
# BDF coefficients


def test_bdf_coefficients_textbook_values():
    assert bdf_coefficients(1) == (Fraction(1), Fraction(-1))
    assert bdf_coefficients(2) == (Fraction(3, 2), Fraction(-2), Fraction(1, 2))
    assert bdf_coefficients(3) == (Fraction(11, 6), Fraction(-3), Fraction(3, 2), Fraction(-1, 3))
    assert bdf_coefficients(4) == (
        Fraction(25, 12),
        Fraction(-4),
        Fraction(3),
        Fraction(-4, 3),
        Fraction(1, 4),
    )


def test_bdf_coefficients_consistency_identities():
    # sum delta_i = 0 (constants are stationary) and sum i*delta_i = -1
    # (exact derivative of linear functions), both as exact rationals
    for k in range(1, 7):
        delta = bdf_coefficients(k)
        assert sum(delta) == 0
        assert sum(i * d for i, d in enumerate(delta)) == -1


def test_bdf_coefficients_order_range():
    with pytest.raises(ValueError):
        bdf_coefficients(0)
    with pytest.raises(ValueError):
        bdf_coefficients(7)


def test_scheme_kind():
    assert scheme_kind("sp-euler") == "SP"
    assert scheme_kind("pd-bdf2") == "PD"
    assert scheme_kind("ap-bdf4") == "AP"
    with pytest.raises(ValueError):
        scheme_kind("xx-euler")


# ---------------------------------------------------------------------------
# configuration


def test_config_validation():
    good = dict(scheme="sp-euler", N=16, tau=0.01, T=0.1)
    SchemeConfig(**good)
    with pytest.raises(ValueError):
        SchemeConfig(**{**good, "scheme": "upwind"})
    with pytest.raises(ValueError):
        SchemeConfig(**{**good, "shape": "triangle"})
    with pytest.raises(ValueError):
        SchemeConfig(**{**good, "N": 2})
    with pytest.raises(ValueError):
        SchemeConfig(**{**good, "tau": -0.01})
    with pytest.raises(ValueError):
        SchemeConfig(**{**good, "T": 0.035})  # T / tau = 3.5
    with pytest.raises(ValueError):
        SchemeConfig(**{**good, "gamma": -1.0})
    with pytest.raises(ValueError):
        SchemeConfig(**{**good, "max_newton": 0})


def test_config_derived_values():
    cfg = SchemeConfig(scheme="ap-bdf3", N=27, tau=0.02, T=0.1)
    assert cfg.n_steps == 5
    assert cfg.kind == "AP"
    assert cfg.bdf_order == 3
    assert cfg.history_depth == 3
    assert cfg.gamma_value == pytest.approx(50 * 0.02)
    assert SchemeConfig(scheme="sp-cn", N=8, tau=0.01, T=0.02, gamma=0.0).gamma_value == 0.0


def test_config_initial_curve_override():
    curve = generate_ellipse(1.0, 1.0, 12)
    cfg = SchemeConfig(scheme="sp-euler", N=12, tau=0.01, T=0.01, shape="whatever-ignored", initial_curve=curve)
    assert cfg.make_initial_curve() is curve


# ---------------------------------------------------------------------------
# one-step roots against an independent root finder
#
# The production path solves the implicit step with its own Newton iteration
# on hand-assembled Jacobians; the oracle solves the same equations (written
# out with plain loops) with scipy's hybrd on finite differences.  Both must
# land on the same root.

TAU = 0.002
N8 = 8


def fresh_state(scheme):
    cfg = SchemeConfig(scheme=scheme, N=N8, tau=TAU, T=4 * TAU, tol=1e-12, gamma=0.0)
    return cfg, startup(cfg)


def assert_same_root(entry, sol):
    assert np.abs(entry.curve.vertices - sol["X"]).max() < 1e-7
    assert np.abs(entry.kappa - sol["kappa"]).max() < 1e-7
    # multipliers are O(1) on this coarse mesh and a little more sensitive
    assert abs(entry.lam - sol["lam"]) < 1e-5
    assert abs(entry.eta - sol["eta"]) < 1e-5


def test_euler_steps_match_oracle():
    v0 = generate_ellipse(2.0, 1.0, N8).vertices
    a0 = oracles.loop_shoelace(v0)
    for scheme, flavor in (("sp-euler", "sp"), ("pd-bdf2", "pd"), ("ap-bdf1", "ap")):
        cfg, state = fresh_state(scheme)
        if scheme == "sp-euler":
            state, _ = step_sp_euler(state, cfg)
            entry = state.history[-1]
        elif scheme == "ap-bdf1":
            state, _ = step_ap_bdfk(state, cfg, 1)
            entry = state.history[-1]
        else:
            # pd-bdf2 startup is exactly one pd-euler step
            entry = state.history[-1]
        sol = oracles.oracle_euler_step(v0, TAU, flavor, A0=a0)
        assert_same_root(entry, sol)


def test_crank_nicolson_step_matches_oracle():
    cfg, state = fresh_state("sp-cn")
    v0 = state.history[-1].curve.vertices
    kappa0 = state.history[-1].kappa
    state, _ = step_sp_cn(state, cfg)
    sol = oracles.oracle_cn_step(v0, kappa0, 0.0, 0.0, TAU, oracles.loop_shoelace(v0))
    assert_same_root(state.history[-1], sol)


def test_bdf2_steps_match_oracle():
    for scheme, flavor, variant, stepper in (
        ("sp-bdf2", "sp", False, step_sp_bdf2),
        ("sp-bdf2-variant", "sp", True, step_sp_bdf2_variant),
        ("pd-bdf2", "pd", False, step_pd_bdf2),
        ("ap-bdf2", "ap", False, lambda s, c: step_ap_bdfk(s, c, 2)),
    ):
        cfg, state = fresh_state(scheme)
        v0 = state.history[-2].curve.vertices
        v1 = state.history[-1].curve.vertices
        state, _ = stepper(state, cfg)
        sol = oracles.oracle_bdf2_step(v1, v0, TAU, flavor, A0=oracles.loop_shoelace(v0), variant=variant)
        assert_same_root(state.history[-1], sol)


def test_tiny_steps_move_tangentially_only():
    # The curvature equation forces the mesh into its compatible distribution
    # on the very first step, a tau-independent tangential adjustment, so raw
    # displacement does not shrink with tau.  What the velocity law controls
    # is motion along the reference normals: that must stay small while the
    # total motion stays visibly larger.
    from curveflow.femcore import normal_weights

    v0 = generate_ellipse(2.0, 1.0, 16).vertices
    om0 = normal_weights(v0)
    for scheme in ("sp-euler", "sp-cn", "sp-bdf2", "sp-bdf2-variant", "pd-bdf2", "ap-bdf1", "ap-bdf2"):
        cfg = SchemeConfig(scheme=scheme, N=16, tau=1e-6, T=4e-6, tol=1e-8, gamma=0.0)
        result = run(cfg)
        assert result.ok, f"{scheme}: {result.failure}"
        v = result.state.history[-1].curve.vertices
        total = np.abs(v - v0).max()
        normal = np.abs((om0 * (v - v0)).sum(axis=1)).max()
        assert normal < 2e-3, f"{scheme}: normal motion {normal:.2e}"
        assert total > 5e-3, f"{scheme}: expected a tangential mesh adjustment, moved {total:.2e}"


def test_high_order_ap_schemes_run_with_substepped_startup():
    # startup substepping scales like tau^(-1/(k-1)), so use moderate steps;
    # the tangential motion redistributes the mesh toward equal edge lengths
    from curveflow.geometry import mesh_ratio

    psi0 = mesh_ratio(generate_ellipse(2.0, 1.0, 16))
    for scheme, tau in (("ap-bdf3", 1e-4), ("ap-bdf4", 1e-3)):
        cfg = SchemeConfig(scheme=scheme, N=16, tau=tau, T=4 * tau, gamma=0.0)
        result = run(cfg)
        assert result.ok, f"{scheme}: {result.failure}"
        assert all(abs(r.dA) < 1e-9 for r in result.series.rows)
        assert result.series.rows[-1].psi < psi0
        assert 0.9 < result.series.rows[-1].L_norm < 1.005


# ---------------------------------------------------------------------------
# invariants on short runs


def test_sp_euler_preserves_area_and_shrinks_perimeter_stepwise():
    cfg = SchemeConfig(scheme="sp-euler", N=32, tau=1e-3, T=5e-3, gamma=0.0)
    state = startup(cfg)
    a0, l_prev = state.A0, state.L0
    for _ in range(5):
        state, rep = step_sp_euler(state, cfg)
        entry = state.history[-1]
        assert abs(entry.A - a0) < 1e-9 * abs(a0)
        assert entry.L <= l_prev + 1e-9
        l_prev = entry.L


def test_pd_bdf2_shrinks_perimeter_but_drifts_area():
    cfg = SchemeConfig(scheme="pd-bdf2", N=32, tau=1e-3, T=0.05, gamma=0.0)
    result = run(cfg)
    assert result.ok
    last = result.series.rows[-1]
    assert last.L_norm < 1.0
    assert 1e-12 < abs(last.dA) < 1e-3  # no area law: drift is small but real
    assert all(r.eta == 0.0 for r in result.series.rows)


def test_ap_bdf2_preserves_area_but_not_perimeter_law():
    cfg = SchemeConfig(scheme="ap-bdf2", N=32, tau=1e-3, T=0.05, gamma=0.0)
    result = run(cfg)
    assert result.ok
    assert all(abs(r.dA) < 1e-9 for r in result.series.rows)
    assert all(r.lam == 0.0 for r in result.series.rows)
    assert result.series.rows[-1].L_norm < 1.0


def test_regular_polygon_is_ap_equilibrium():
    # (X0, 1/(R cos(pi/N)), eta=0) solves the area-preserving step exactly,
    # so the discrete circle must not move
    cfg = SchemeConfig(scheme="ap-bdf1", N=64, tau=0.01, T=0.1, shape="ellipse", a=1.0, b=1.0, gamma=0.0)
    result = run(cfg)
    assert result.ok
    v0 = generate_ellipse(1.0, 1.0, 64).vertices
    assert np.abs(result.state.history[-1].curve.vertices - v0).max() < 1e-8
    assert all(abs(r.eta) < 1e-8 for r in result.series.rows)


def test_translation_equivariance():
    base = generate_mikula(24)
    shifted = type(base)(base.vertices + np.array([1.7, -0.4]))
    kw = dict(scheme="sp-euler", N=24, tau=1e-3, T=3e-3, gamma=0.0)
    r1 = run(SchemeConfig(initial_curve=base, **kw))
    r2 = run(SchemeConfig(initial_curve=shifted, **kw))
    assert r1.ok and r2.ok
    delta = r2.state.history[-1].curve.vertices - r1.state.history[-1].curve.vertices
    assert np.abs(delta - np.array([1.7, -0.4])).max() < 5e-9


def test_runs_are_deterministic():
    cfg = SchemeConfig(scheme="sp-bdf2", N=24, tau=1e-3, T=5e-3, gamma=0.0)
    va = run(cfg).state.history[-1].curve.vertices
    vb = run(cfg).state.history[-1].curve.vertices
    assert np.array_equal(va, vb)


def test_oscillatory_curve_run_completes():
    # strong curvature spikes force the step solver through its continuation
    # ladder; the run must still conserve area and dissipate length
    cfg = SchemeConfig(scheme="sp-euler", N=64, tau=1e-3, T=5e-3, shape="mikula", gamma=0.0)
    result = run(cfg)
    assert result.ok
    rows = result.series.rows
    assert abs(rows[-1].dA) < 1e-9
    assert rows[-1].L_norm < 1.0


# ---------------------------------------------------------------------------
# startup


def test_two_level_startup_shapes():
    cfg = SchemeConfig(scheme="sp-bdf2", N=16, tau=0.01, T=0.05, gamma=0.0)
    state = startup(cfg)
    assert state.step_index == 1
    assert len(state.history) == 2
    assert len(state.startup_reports) == 1
    assert np.array_equal(state.history[0].curve.vertices, cfg.make_initial_curve().vertices)


def test_substepped_startup_covers_history():
    cfg = SchemeConfig(scheme="ap-bdf3", N=16, tau=0.01, T=0.05, gamma=0.0)
    state = startup(cfg)
    assert state.step_index == 2
    assert len(state.history) == 3
    assert len(state.startup_reports) == 2
    # area conservation holds through every substepped level
    for entry in state.history:
        assert abs(entry.A - state.A0) < 1e-9
    cfg4 = SchemeConfig(scheme="ap-bdf4", N=16, tau=0.01, T=0.05, gamma=0.0)
    state4 = startup(cfg4)
    assert state4.step_index == 3
    assert len(state4.history) == 4


# ---------------------------------------------------------------------------
# run loop, degeneracy handling, mode switching


def test_circle_under_sp_without_threshold_fails_degenerate():
    # constant curvature makes the two multiplier borders parallel
    cfg = SchemeConfig(scheme="sp-euler", N=32, tau=0.01, T=0.05, a=1.0, b=1.0, gamma=0.0)
    result = run(cfg)
    assert not result.ok
    assert isinstance(result.failure, EquilibriumDegeneracyError)
    assert result.switch_time is None


def test_circle_under_sp_with_threshold_switches_and_survives():
    cfg = SchemeConfig(scheme="sp-euler", N=32, tau=0.01, T=0.05, a=1.0, b=1.0)  # gamma -> 50 tau
    result = run(cfg)
    assert result.ok
    assert result.forced_switch
    assert result.switch_time == 0.0
    assert result.series.rows[-1].mode == "AP"
    v0 = generate_ellipse(1.0, 1.0, 32).vertices
    assert np.abs(result.state.history[-1].curve.vertices - v0).max() < 1e-7


def test_huge_threshold_switches_on_first_report():
    cfg = SchemeConfig(scheme="sp-bdf2", N=24, tau=1e-3, T=5e-3, gamma=1e9)
    result = run(cfg)
    assert result.ok
    assert not result.forced_switch
    assert result.switch_time == pytest.approx(1e-3)
    modes = [r.mode for r in result.series.rows]
    assert modes[0] == "SP" and modes[1] == "SP"  # t=0 row and the startup step
    assert set(modes[2:]) == {"AP"}
    assert result.series.switch_time == result.switch_time


def test_gamma_zero_never_switches():
    cfg = SchemeConfig(scheme="sp-bdf2", N=24, tau=1e-3, T=5e-3, gamma=0.0)
    result = run(cfg)
    assert result.ok
    assert result.switch_time is None
    assert set(r.mode for r in result.series.rows) == {"SP"}


def test_run_modified_requires_sp_scheme():
    with pytest.raises(ValueError):
        run_modified(SchemeConfig(scheme="pd-bdf2", N=16, tau=0.01, T=0.02))
    with pytest.raises(ValueError):
        run_modified(SchemeConfig(scheme="ap-bdf2", N=16, tau=0.01, T=0.02))
    cfg = SchemeConfig(scheme="sp-euler", N=16, tau=0.01, T=0.02, gamma=0.0)
    assert np.array_equal(
        run_modified(cfg).state.history[-1].curve.vertices,
        run(cfg).state.history[-1].curve.vertices,
    )


def test_ap_partner_table_is_consistent():
    for sp_scheme, ap_scheme in AP_PARTNER.items():
        assert scheme_kind(sp_scheme) == "SP"
        assert ap_scheme in SCHEMES
        assert scheme_kind(ap_scheme) == "AP"


def test_failure_is_captured_not_raised():
    cfg = SchemeConfig(scheme="sp-euler", N=32, tau=0.01, T=0.05, shape="mikula", max_newton=1, gamma=0.0)
    result = run(cfg)
    assert not result.ok
    assert isinstance(result.failure, (NewtonDivergenceError, SchemeError))
    assert len(result.series.rows) >= 1  # at least the t=0 row survives
    if isinstance(result.failure, NewtonDivergenceError):
        assert result.failure.last_norm > 0


def test_snapshot_times_round_to_grid():
    cfg = SchemeConfig(scheme="sp-euler", N=16, tau=0.025, T=0.2, gamma=0.0)
    result = run(cfg, snapshot_times=[0.0, 0.1001, 99.0, -3.0])
    assert result.ok
    times = [s.t for s in result.snapshots]
    assert times == [0.0, pytest.approx(0.1), pytest.approx(0.2)]
    for snap in result.snapshots:
        assert snap.kappa.shape == (16,)
    assert np.array_equal(result.snapshots[0].curve.vertices, cfg.make_initial_curve().vertices)


def test_diagnostics_rows_one_per_level():
    cfg = SchemeConfig(scheme="sp-bdf2", N=16, tau=0.01, T=0.05, gamma=0.0)
    result = run(cfg)
    assert result.ok
    rows = result.series.rows
    assert len(rows) == 6  # t = 0 .. 0.05
    assert rows[0].t == 0.0 and rows[0].newton_iters == 0
    assert rows[0].L_norm == 1.0 and rows[0].dA == 0.0
    assert [r.t for r in rows] == pytest.approx([0.01 * j for j in range(6)])
    assert all(r.newton_iters >= 1 for r in rows[1:])
