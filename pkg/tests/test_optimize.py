"""Coefficient optimizer and sweep helper tests.

The optimizer cases are built around links where the right answer is known
from physics: on a linear link the best taps are zero, and on a nonlinear
link a tap-shaped rotation fitted from data should land near the analytic
shape. The never-degrade guard is exercised with deliberately mismatched
train/validation splits.
"""

from dataclasses import replace

import numpy as np
import pytest

from fiberdbp import (DbpConfig, LinkConfig, SimSettings, SweepResult,
                      TrainingSet, WdmConfig, build_training_set, generate_wdm,
                      make_dbp_coefficient_set, optimize_coefficients,
                      propagate_link, standard_ssfm_coefficient_set,
                      sweep_launch_power, sweep_splitting_ratio)

WDM = WdmConfig(32e9, 1, 0.0, 0.1, "64-qam", 2.0)
LINK_LIN = LinkConfig(2, 80.0, gamma_w_km=0.0)
LINK_NL = LinkConfig(2, 80.0)
SIM_OFF = SimSettings(max_phase_rad=2e-3, noise_enabled=False)
RATE = 1.125 * 32e9

CFG_LIN = DbpConfig(link=LINK_LIN, variant="ESSFM", n_steps=2, block_size=576,
                    overlap=0, oversampling=1.125)
CFG_NL = replace(CFG_LIN, link=LINK_NL)


@pytest.fixture(scope="module")
def train_linear():
    return build_training_set(LINK_LIN, WDM, 512, sim=SIM_OFF)


@pytest.fixture(scope="module")
def train_nonlinear():
    return build_training_set(LINK_NL, WDM, 512, sim=SIM_OFF)


@pytest.fixture(scope="module")
def analytic_nl():
    return make_dbp_coefficient_set(CFG_NL, RATE, WDM.launch_power_w,
                                    oversample=16, memory=6)


def test_linear_link_drives_taps_to_zero(train_linear, analytic_nl):
    # start from taps fitted to a nonlinear link; on a linear one the
    # optimizer should discover they only hurt and null them out
    res = optimize_coefficients(train_linear, CFG_LIN, analytic_nl)
    assert res.improved
    assert res.final_val_mse < 1e-3 * res.init_val_mse
    peak = np.max(np.abs(res.coeffs.coeffs[0]))
    assert peak < 1e-6 * np.max(np.abs(analytic_nl.coeffs[0]))


def test_guard_returns_init_when_validation_degrades(analytic_nl):
    # train split sees a nonlinear channel, validation split a linear one:
    # zero taps are perfect for validation, so whatever the fit learns from
    # the train split must degrade it and the guard has to fire
    tx_nl, rec_nl = generate_wdm(WDM, 512, seed=1)
    rx_nl = propagate_link(tx_nl, LINK_NL, SIM_OFF)
    tx_lin, rec_lin = generate_wdm(WDM, 512, seed=2)
    rx_lin = propagate_link(tx_lin, LINK_LIN, SIM_OFF)
    mixed = TrainingSet(WDM, rx_nl, rec_nl, rx_lin, rec_lin)
    zero = replace(analytic_nl, coeffs={h: np.zeros_like(c)
                                        for h, c in analytic_nl.coeffs.items()})

    res = optimize_coefficients(mixed, CFG_LIN, zero)
    assert not res.improved
    assert res.coeffs is zero
    assert res.final_val_mse == res.init_val_mse


def test_recovers_analytic_tap_shape_from_spike_init(train_nonlinear,
                                                     analytic_nl):
    # a single-tap rotation is the generic starting point; the fitted
    # vector should line up with the analytic shape, not some arbitrary
    # minimum of the training objective
    spike = standard_ssfm_coefficient_set(CFG_NL, RATE, WDM.launch_power_w,
                                          memory=6)
    res = optimize_coefficients(train_nonlinear, CFG_NL, spike)
    assert res.improved
    a = analytic_nl.coeffs[0]
    b = res.coeffs.coeffs[0]
    corr = np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b))
    assert corr > 0.9


def test_tuned_taps_stay_even_symmetric(train_nonlinear, analytic_nl):
    res = optimize_coefficients(train_nonlinear, CFG_NL, analytic_nl)
    c0 = res.coeffs.coeffs[0]
    assert np.array_equal(c0, c0[::-1])


def test_optimizer_is_deterministic(train_nonlinear, analytic_nl):
    r1 = optimize_coefficients(train_nonlinear, CFG_NL, analytic_nl)
    r2 = optimize_coefficients(train_nonlinear, CFG_NL, analytic_nl)
    assert r1.improved == r2.improved
    assert r1.final_val_mse == r2.final_val_mse
    for h in r1.coeffs.coeffs:
        assert np.array_equal(r1.coeffs.coeffs[h], r2.coeffs.coeffs[h])
    assert r1.train_mse_path == r2.train_mse_path


def test_training_set_rejects_shared_seed():
    tx, rec = generate_wdm(WDM, 64, seed=5)
    rx = propagate_link(tx, LINK_LIN, SIM_OFF)
    with pytest.raises(ValueError, match="different seeds"):
        TrainingSet(WDM, rx, rec, rx, rec)


def test_sweep_result_rows_and_best():
    sw = SweepResult("rho", np.array([0.1, 0.5, 0.9]),
                     np.array([20.0, 22.5, 21.0]), 0.5, 22.5)
    rows = sw.csv_rows()
    assert [list(r) for r in rows] == [["rho", "SNR_dB"]] * 3
    assert rows[1] == {"rho": 0.5, "SNR_dB": 22.5}
    assert sw.best_value == sw.values[np.argmax(sw.snr_db)]


def test_splitting_ratio_sweep_reports_grid_argmax(train_nonlinear):
    tx, rec = generate_wdm(WDM, 256, seed=9)
    rx = propagate_link(tx, LINK_NL, SIM_OFF)
    cfg = replace(CFG_NL, block_size=288, n_steps=1)
    sw = sweep_splitting_ratio([0.1, 0.5], rx, rec, WDM, cfg)
    assert sw.parameter == "rho"
    assert np.all(np.isfinite(sw.snr_db))
    assert sw.best_value == sw.values[np.argmax(sw.snr_db)]
    assert sw.best_snr_db == np.max(sw.snr_db)


def test_launch_power_sweep_fresh_simulation_per_point():
    cfg = DbpConfig(link=LINK_NL, variant="EDC", n_steps=0, block_size=288,
                    overlap=0, oversampling=1.125)
    sw = sweep_launch_power([-2.0, 2.0], LINK_NL, WDM, cfg, num_symbols=256,
                            sim=SIM_OFF)
    assert sw.parameter == "power_dbm"
    assert np.all(np.isfinite(sw.snr_db))
    # noise off: higher launch power means more uncompensated distortion
    assert sw.snr_db[0] > sw.snr_db[1]
    assert sw.best_value == -2.0
