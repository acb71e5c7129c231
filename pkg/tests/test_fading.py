import math

import numpy as np
import pytest
from scipy import stats

from bfpa.errors import ValidationError
from bfpa.fading import CHUNK, FadingSpec, chunk_sizes, gamma_chunks, rician_to_m, sample_gamma, stream_rng

N = 1_000_000


def draws(m, seed=0):
    return sample_gamma(FadingSpec(m, 1), stream_rng(seed, 0, 0), N)[:, 0]


def test_rayleigh_is_exponential():
    g = draws(1.0)
    assert stats.kstest(g, "expon").statistic < 0.002


@pytest.mark.parametrize("m", [0.5, 1.0, 2.0, 4.0])
def test_unit_mean(m):
    assert abs(draws(m).mean() - 1) < 0.005


def test_variance_m2():
    assert abs(draws(2.0).var() - 0.5) < 0.01


@pytest.mark.parametrize("m", [0.5, 1.0, 2.0, 4.0])
def test_histogram_matches_pdf(m):
    g = draws(m, seed=5)
    dist = stats.gamma(m, scale=1 / m)
    edges = dist.ppf(np.linspace(0, 1, 41))
    obs, _ = np.histogram(g, edges)
    expect = np.full(40, len(g) / 40)
    assert stats.chisquare(obs, expect).pvalue > 0.001


@pytest.mark.parametrize("K,m", [(0, 1.0), (1, 4 / 3), (10, 121 / 21)])
def test_rician(K, m):
    assert rician_to_m(K) == pytest.approx(m, rel=1e-15)


def test_bad_specs():
    with pytest.raises(ValidationError):
        FadingSpec(0.4, 2)
    with pytest.raises(ValidationError):
        FadingSpec(1.0, 0)
    with pytest.raises(ValidationError):
        rician_to_m(-1)


def test_streams_reproducible_and_chunk_indexed():
    spec = FadingSpec(1.5, 3)
    a = np.vstack(list(gamma_chunks(spec, CHUNK + 100, seed=9)))
    b = np.vstack(list(gamma_chunks(spec, CHUNK + 100, seed=9)))
    assert np.array_equal(a, b)
    # a prefix of a longer run is identical: draw index, not run length, decides the values
    c = np.vstack(list(gamma_chunks(spec, 3 * CHUNK, seed=9)))
    assert np.array_equal(a[:CHUNK], c[:CHUNK])
    d = np.vstack(list(gamma_chunks(spec, CHUNK + 100, seed=9, stream=1)))
    assert not np.array_equal(a, d)


def test_chunk_sizes():
    assert chunk_sizes(10, 4) == [4, 4, 2]
    assert sum(chunk_sizes(CHUNK * 3 + 1)) == CHUNK * 3 + 1
    assert chunk_sizes(0) == []
