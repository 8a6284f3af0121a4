import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from vqexposure.sampling import (
    MAX_SOBOL_DIM,
    DimensionError,
    NormalStream,
    draw_normals,
    sobol_uniforms,
)


def test_pseudo_stream_is_reproducible():
    a = draw_normals(NormalStream.pseudo(7, 3), 100)
    b = draw_normals(NormalStream.pseudo(7, 3), 100)
    c = draw_normals(NormalStream.pseudo(8, 3), 100)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.shape == (100, 3)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 50), st.integers(1, 50), st.sampled_from(["pseudo", "sobol"]))
def test_draws_concatenate(m, n, kind):
    s1 = NormalStream.pseudo(3, 4) if kind == "pseudo" else NormalStream.sobol(4)
    s2 = NormalStream.pseudo(3, 4) if kind == "pseudo" else NormalStream.sobol(4)
    split = np.vstack([draw_normals(s1, m), draw_normals(s1, n)])
    np.testing.assert_array_equal(split, draw_normals(s2, m + n))


def test_pseudo_uniforms_stay_inside_open_interval():
    u = NormalStream.pseudo(11, 2).uniforms(200_000)
    assert u.min() > 0.0 and u.max() < 1.0


def test_pseudo_normals_pass_ks():
    z = draw_normals(NormalStream.pseudo(2024, 1), 100_000).ravel()
    assert stats.kstest(z, "norm").pvalue > 1e-3


def test_substreams_are_distinct_and_reproducible():
    base = NormalStream.pseudo(5, 2)
    a = draw_normals(base.substream(1), 50)
    b = draw_normals(NormalStream.pseudo(5, 2).substream(1), 50)
    c = draw_normals(base.substream(2), 50)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, draw_normals(NormalStream.pseudo(5, 2), 50))
    with pytest.raises(ValueError):
        NormalStream.sobol(2).substream(1)


def test_sobol_first_points():
    u = sobol_uniforms(3, 4)
    np.testing.assert_array_equal(u[0], [0.0, 0.0, 0.0])
    np.testing.assert_array_equal(u[1], [0.5, 0.5, 0.5])
    np.testing.assert_array_equal(u[2:, 0], [0.75, 0.25])
    np.testing.assert_array_equal(u[2:, 1], [0.25, 0.75])


def test_sobol_default_skip_starts_at_centre():
    z = draw_normals(NormalStream.sobol(5), 1)
    np.testing.assert_array_equal(z, np.zeros((1, 5)))


def test_sobol_zero_point_cannot_be_mapped():
    with pytest.raises(ValueError):
        draw_normals(NormalStream.sobol(2, skip=0), 1)


@pytest.mark.parametrize("m", [4, 7, 10])
def test_sobol_aligned_blocks_stratify_each_coordinate(m):
    n = 2**m
    u = sobol_uniforms(9, n)
    for k in range(9):
        counts = np.bincount(np.floor(u[:, k] * n).astype(int), minlength=n)
        assert np.all(counts == 1)


def test_sobol_normal_moments():
    z = draw_normals(NormalStream.sobol(9), 1024)
    assert np.all(np.abs(z.mean(axis=0)) < 0.01)
    assert np.all(np.abs(z.var(axis=0) - 1.0) < 0.05)


def test_stream_argument_checks():
    with pytest.raises(DimensionError):
        NormalStream.sobol(MAX_SOBOL_DIM + 1)
    with pytest.raises(ValueError):
        NormalStream.pseudo(1, 0)
    with pytest.raises(ValueError):
        NormalStream("halton", 2, 0)
    with pytest.raises(ValueError):
        NormalStream.sobol(2, skip=-1)
    with pytest.raises(ValueError):
        NormalStream.pseudo(1, 2).uniforms(0)
