import math

import numpy as np
import pytest

from adimaxwell.maxwell import SchemeConfig, assemble_operators, l2_project, EMState, zero_state
from adimaxwell.splines import make_open_knot_vector
from adimaxwell.verify import (GAMMA_A, ErrorReport, ErrorRow, FieldEvaluator, ManufacturedSolution,
                               Mode, OracleSizeError, convergence_study, dense_oracle_step,
                               divergence_norm, error_norms, fit_order, scaling_study,
                               simulate_manufactured)

from conftest import cube

U_A = ManufacturedSolution.u_A()


def test_u_A_at_centre():
    v = U_A.evaluate((0.5, 0.5, 0.5), 0.0)
    np.testing.assert_allclose(v, [GAMMA_A, 2 * GAMMA_A, 3 * GAMMA_A, 0, 0, 0], atol=1e-14)


def test_H_vanishes_initially(rng):
    x = rng.uniform(0, 1, (3, 50))
    assert np.abs(U_A.evaluate(x, 0.0)[3:]).max() <= 1e-15


def test_mode_validation():
    with pytest.raises(ValueError):
        Mode(4)
    with pytest.raises(ValueError):
        Mode(1, kappa=0)


@pytest.mark.parametrize("ms", [U_A, ManufacturedSolution.single(1, 2, 1),
                                ManufacturedSolution.single(2, 1, 3), ManufacturedSolution.single(3, 2, 2)])
def test_curl_matches_finite_differences(rng, ms):
    x = rng.uniform(0.05, 0.95, (3, 100))
    t = 0.37
    h = 1e-5
    cE, cH = ms.curl(x, t)
    for base, c in ((0, cE), (3, cH)):
        def d(comp, axis):
            xp, xm = x.copy(), x.copy()
            xp[axis] += h
            xm[axis] -= h
            return (ms.evaluate(xp, t)[base + comp] - ms.evaluate(xm, t)[base + comp]) / (2 * h)
        fd = np.stack([d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)])
        assert np.abs(fd - c).max() <= 1e-6


@pytest.mark.parametrize("ms", [U_A, ManufacturedSolution.single(1, 1, 2),
                                ManufacturedSolution.single(2, 3, 1), ManufacturedSolution.single(3, 1, 1)])
def test_maxwell_residuals(rng, ms):
    x = rng.uniform(0, 1, (3, 200))
    for t in (0.0, 0.3, 1.1):
        dt = ms.evaluate(x, t, time_derivative=True)
        cE, cH = ms.curl(x, t)
        assert np.abs(dt[:3] - cH).max() <= 1e-10
        assert np.abs(dt[3:] + cE).max() <= 1e-10


@pytest.mark.parametrize("ms", [U_A, ManufacturedSolution.single(2, 2, 3)])
def test_tangential_E_vanishes_on_faces(rng, ms):
    for axis in range(3):
        for side in (0.0, 1.0):
            x = rng.uniform(0, 1, (3, 60))
            x[axis] = side
            v = ms.evaluate(x, 0.4)
            for comp in range(3):
                if comp != axis:
                    assert np.abs(v[comp]).max() <= 1e-12


def test_u_A_has_unit_norm():
    kv = make_open_knot_vector(4, 2)
    ev = FieldEvaluator((kv, kv, kv), q=12)
    vals = U_A.evaluate(ev.grid, 0.0)
    assert math.sqrt(ev.sq_norm(list(vals[:3]))) == pytest.approx(1.0, abs=1e-10)


def test_error_norms_of_zero_state():
    sp = cube(4, 2)
    st = zero_state(tuple(k.n_basis for k in sp))
    row = error_norms(st, U_A, sp)
    assert row.l2_E == pytest.approx(1.0, abs=1e-6)
    assert row.l2_H == 0.0
    assert row.hcurl_E >= row.l2_E
    assert error_norms(st, None, sp).hcurl_H == 0.0


def test_projection_error_small():
    cfg = SchemeConfig(tau=0.1, spaces=cube(8, 2))
    ops = assemble_operators(cfg)
    st = EMState(l2_project(U_A.initial("E"), ops, "E"), l2_project(U_A.initial("H"), ops, "H"))
    row = error_norms(st, U_A, cfg.spaces)
    assert row.l2_E < 5e-3 and row.hcurl_E >= row.l2_E and row.l2_H < 1e-14


def test_divergence_of_zero():
    sp = cube(2, 1)
    assert divergence_norm(zero_state((3, 3, 3)), sp) == 0.0


def test_report_columns():
    rep = ErrorReport()
    rep.append(ErrorRow(0, 0.0, 1.0, 2.0, 3.0, 4.0))
    rep.append(ErrorRow(1, 0.1, 0.5, 5.0, 1.0, 1.0))
    assert len(rep) == 2
    assert list(rep.column("l2_H")) == [2.0, 5.0]
    assert rep.max_over_steps()["l2_E"] == 1.0
    assert rep.at_final()["l2_H"] == 5.0


def test_simulate_records_every_step():
    cfg = SchemeConfig(tau=0.1, spaces=cube(3, 2), n_steps=4)
    _, rep = simulate_manufactured(cfg, U_A)
    assert [r.step for r in rep.rows] == [0, 1, 2, 3, 4]
    _, rep = simulate_manufactured(cfg, U_A, every=0)
    assert [r.step for r in rep.rows] == [0, 4]


def test_oracle_size_guard():
    cfg = SchemeConfig(tau=0.1, spaces=cube(12, 2))
    with pytest.raises(OracleSizeError):
        dense_oracle_step(cfg, zero_state(cfg.shape))


def test_fit_order_exact():
    taus = [0.1, 0.05, 0.025]
    assert fit_order(taus, [3 * t ** 2 for t in taus]) == pytest.approx(2.0)
    assert math.isnan(fit_order([0.1], [1.0]))


def test_convergence_study_shapes():
    cfg = SchemeConfig(tau=0.1, spaces=cube(4, 2), T=0.2)
    rows, orders = convergence_study(cfg, [0.1])
    assert len(rows) == 1 and rows[0]["n_steps"] == 2 and orders == {}
    with pytest.raises(ValueError):
        convergence_study(cfg, [0.1, 0.2])
    with pytest.raises(ValueError):
        convergence_study(cfg, [0.15])


def test_convergence_study_order_on_coarse_taus():
    cfg = SchemeConfig(tau=0.1, spaces=cube(16, 2), T=1.0)
    _, orders = convergence_study(cfg, [0.1, 0.05, 0.025])
    assert orders["l2_E"] > 1.7 and orders["l2_H"] > 1.7


def test_scaling_study_rows():
    rows = scaling_study([2, 3], steps=1)
    assert [r["elements"] for r in rows] == [2, 3]
    assert rows[0]["N"] == 64 and "ratio" in rows[1]
    assert all(r["seconds_per_step"] > 0 for r in rows)
    with pytest.raises(ValueError):
        scaling_study([3, 2])
