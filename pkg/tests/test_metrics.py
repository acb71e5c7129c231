import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bfpa.constellation import GaussianInput, make_psk, make_qam
from bfpa.errors import InfeasibleError, RangeError, ValidationError
from bfpa.table import GridSpec, get_table
from bfpa.metrics import log_metrics, mi_inv, mmse, mmse_inv, mutual_information, pam_log_metrics

from oracles import bpsk_quad, mc_metrics

QPSK = make_psk(2)
BPSK = make_psk(1)


def test_zero_snr():
    assert mutual_information(QPSK, 0) == 0
    assert mmse(QPSK, 0) == 1


def test_saturation():
    assert abs(mutual_information(QPSK, 1e4) - 2) < 1e-6


def test_gaussian_closed_forms(gauss):
    rho = np.logspace(-4, 5, 50)
    assert np.allclose(gauss.mi_at(rho), np.log2(1 + rho), rtol=1e-12, atol=0)
    assert np.allclose(gauss.mmse_at(rho), 1 / (1 + rho), rtol=1e-12, atol=0)
    assert mmse(GaussianInput(), 1.0) == 0.5
    assert mmse_inv(GaussianInput(), 0.25) == 3.0
    assert mi_inv(GaussianInput(), 1.0) == 1.0


def test_negative_snr_rejected():
    for f in (mutual_information, mmse):
        with pytest.raises(ValidationError):
            f(QPSK, -1.0)


@pytest.mark.parametrize("rho", [0.5, 3.0])
def test_against_monte_carlo(rho):
    I, E = mc_metrics(QPSK.as_array(), rho, 1_000_000, seed=int(rho * 10))
    assert abs(mutual_information(QPSK, rho) - I) < 3e-3
    assert abs(mmse(QPSK, rho) - E) < 3e-3


@pytest.mark.parametrize("rho", [0.01, 0.3, 2.0, 10.0, 40.0])
def test_qpsk_is_two_bpsk_channels(rho):
    # each rail of QPSK carries a BPSK symbol at half the energy
    assert abs(mutual_information(QPSK, rho) - 2 * mutual_information(BPSK, rho / 2)) < 1e-6
    assert abs(mmse(QPSK, rho) - mmse(BPSK, rho / 2)) < 1e-9


@pytest.mark.parametrize("inp", [make_psk(1), make_psk(2), make_qam(4)], ids=lambda c: c.label)
@pytest.mark.parametrize("rho", [0.1, 1.0, 3.0])
def test_composite_matches_gauss_hermite(inp, rho):
    ll_c, le_c = log_metrics(inp, rho, "composite")
    ll_g, le_g = log_metrics(inp, rho, "gh", order=48)
    # the tensor Gauss-Hermite rule is the looser of the two routes and degrades with rho
    assert abs(math.exp(ll_c) - math.exp(ll_g)) < 2e-4
    assert abs(math.exp(le_c) - math.exp(le_g)) < 2e-4


@pytest.mark.parametrize("rho", [1e-3, 0.2, 1.0, 4.0, 15.0, 60.0])
def test_bpsk_against_adaptive_quadrature(rho):
    ref_loss, ref_e = bpsk_quad(rho)
    ll, le = log_metrics(BPSK, rho)
    # compare the lost bits and the error in relative terms; both decay like exp(-rho)
    assert abs(math.exp(ll) / ref_loss - 1) < 1e-8
    assert abs(math.exp(le) / ref_e - 1) < 1e-8


def test_log_domain_stays_finite_at_high_snr():
    # MMSE underflows as a float long before its log does
    ll, le = log_metrics(QPSK, 5e4)
    assert math.isfinite(ll) and math.isfinite(le)
    assert le < -1e4


def test_pam_single_level():
    assert pam_log_metrics([0.0], 3.0) == (-math.inf, -math.inf)


@pytest.fixture(scope="module")
def short_table():
    # the default grid tops out where MMSE and M - I are below double precision,
    # so the range errors are exercised on a table that stops at rho = 10
    return get_table(QPSK, GridSpec(1e-4, 10.0, 128), use_disk=False)


def test_mmse_inv_boundary_and_errors(short_table):
    assert mmse_inv(QPSK, 1.0) == 0.0
    for bad in (0.0, -0.1, 1.1):
        with pytest.raises(ValidationError):
            mmse_inv(QPSK, bad)
    with pytest.raises(RangeError):
        mmse_inv(QPSK, 1e-6, short_table)
    r = mmse_inv(QPSK, 0.1, short_table)
    assert abs(mmse(QPSK, r) / 0.1 - 1) < 1e-12


def test_mi_inv_errors(short_table):
    assert mi_inv(QPSK, 0.0) == 0.0
    with pytest.raises(InfeasibleError):
        mi_inv(QPSK, 2.0)
    with pytest.raises(RangeError, match="extend"):
        mi_inv(QPSK, 1.9999, short_table)


@settings(max_examples=40, deadline=None)
@given(m=st.floats(1e-6, 0.9999))
def test_mmse_round_trip(qpsk, m):
    rho = mmse_inv(QPSK, m, qpsk)
    assert abs(mmse(QPSK, rho) / m - 1) < 1e-9


@settings(max_examples=40, deadline=None)
@given(t=st.floats(1e-3, 1.9999))
def test_mi_round_trip(qpsk, t):
    rho = mi_inv(QPSK, t, qpsk)
    assert abs(mutual_information(QPSK, rho) / t - 1) < 1e-9
