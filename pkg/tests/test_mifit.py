import json

import numpy as np
import pytest

from bfpa.errors import ValidationError
from bfpa.mifit import MiFit, default_fit_grid, fit_mi_approx, fitted_mi


@pytest.fixture(scope="module")
def qfit(qpsk):
    return fit_mi_approx(qpsk)


def test_qpsk_fit_quality(qpsk, qfit):
    g = default_fit_grid(400)
    rms = np.sqrt(np.mean((qfit(g) - qpsk.mi_at(g)) ** 2))
    assert rms < 0.01
    assert 0 <= qfit.delta_R <= 0.007
    # delta_R really bounds the overshoot, also between fitting nodes
    dense = np.logspace(-2, 2, 5000)
    assert np.max(qfit(dense) - qpsk.mi_at(dense)) <= qfit.delta_R + 1e-6


def test_coefficients_near_default_start(qfit):
    assert qfit.c1 == pytest.approx(0.77, abs=0.05)
    assert qfit.c2 == pytest.approx(0.87, abs=0.05)
    assert qfit.c3 == pytest.approx(1.16, abs=0.06)


def test_bpsk_golden(bpsk):
    f = fit_mi_approx(bpsk)
    # regression value from the first run of this fit
    assert f.delta_R == pytest.approx(0.000491, abs=5e-5)
    assert f.M == 1.0


def test_limits(qfit):
    assert fitted_mi(qfit, 0.0) == 0.0
    assert fitted_mi(qfit, 1e8) == pytest.approx(qfit.M)
    r = np.logspace(-3, 3, 300)
    assert np.all(np.diff(fitted_mi(qfit, r)) >= 0)
    with pytest.raises(ValidationError):
        fitted_mi(qfit, -1.0)


@pytest.mark.parametrize(
    "grid",
    [np.logspace(-2, 2, 20), np.logspace(-1, 2, 200), np.logspace(-2, 1, 200)],
)
def test_grid_validation(qpsk, grid):
    with pytest.raises(ValidationError):
        fit_mi_approx(qpsk, grid)


def test_gaussian_rejected(gauss):
    with pytest.raises(ValidationError):
        fit_mi_approx(gauss)


def test_json_roundtrip(qfit):
    d = json.loads(json.dumps(qfit.to_json()))
    assert MiFit.from_json(d) == qfit


@pytest.mark.parametrize("bad", [dict(c1=0.0), dict(c3=-1.0), dict(delta_R=-0.1)])
def test_bad_coefficients(bad):
    kw = dict(c1=0.77, c2=0.87, c3=1.16, M=2.0, delta_R=0.0) | bad
    with pytest.raises(ValidationError):
        MiFit(**kw)
