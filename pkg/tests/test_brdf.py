import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from multilight.brdf import (MaterialSample, eval_brdf, eval_brdf_arrays, fresnel_schlick, ggx_ndf, lobe_alpha,
                             shade_arrays, shade_point, smith_g)

unit_vec = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.05, 1)).filter(
    lambda v: np.linalg.norm(v) > 0.1).map(lambda v: np.asarray(v) / np.linalg.norm(v))
material = st.builds(MaterialSample,
                     st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)),
                     st.floats(0, 1), st.floats(0, 1))


def test_fresnel_examples():
    assert fresnel_schlick(1.0, 0.04) == pytest.approx(0.04)
    assert fresnel_schlick(0.0, 0.04) == pytest.approx(1.0)
    assert fresnel_schlick(0.5, 0.04) == pytest.approx(0.07)


def test_ndf_examples():
    assert ggx_ndf(1.0, 1.0) == pytest.approx(1 / math.pi)
    assert ggx_ndf(1.0, 0.5) == pytest.approx(4 / math.pi)
    assert ggx_ndf(0.0, 0.5) == pytest.approx(0.25 / math.pi)


def test_smith_examples():
    assert smith_g(1, 1, 0.37) == pytest.approx(1.0)
    assert smith_g(0.5, 0, 0.5) == 0.0
    assert smith_g(0.5, 1, 0.5) == pytest.approx(0.8)


def test_alpha_floor():
    assert lobe_alpha(0.0) == 1e-3
    assert MaterialSample(roughness=0.5).alpha == pytest.approx(0.25)


def test_eval_brdf_examples():
    z = [0, 0, 1.0]
    d, _ = eval_brdf(z, z, z, MaterialSample((0.3, 0.7, 0.1), 0.4, 1.0))
    np.testing.assert_array_equal(d, 0.0)
    d, s = eval_brdf(z, z, z, MaterialSample((0.6, 0.6, 0.6), 1.0, 0.0))
    np.testing.assert_allclose(d, 0.6 / math.pi)
    np.testing.assert_allclose(s, 0.003183, atol=1e-6)


def test_eval_brdf_degenerate_half_vector():
    _, s = eval_brdf([0, 0, 1.0], [1.0, 0, 0], [-1.0, 0, 0], MaterialSample())
    np.testing.assert_array_equal(s, 0.0)


def test_material_bounds():
    with pytest.raises(ValueError):
        MaterialSample(albedo=(1.2, 0, 0))
    with pytest.raises(ValueError):
        MaterialSample(roughness=-0.1)


def test_shade_point_examples():
    z = np.array([0, 0, 1.0])
    mat = MaterialSample((0.6, 0.6, 0.6), 1.0, 0.0)
    assert not np.any(shade_point(z, z, [0, 0, 0], mat, [0, 0, 1], [1, 1, 1], visible=False))
    assert not np.any(shade_point(z, z, [0, 0, 0], mat, [0, 0, -1], [1, 1, 1]))
    out = shade_point(z, z, [0, 0, 0], mat, [0, 0, 1], [math.pi] * 3)
    ref = oracles.shade(z, z, [0, 0, 0], [0.6] * 3, 1.0, 0.0, [0, 0, 1], [math.pi] * 3)
    np.testing.assert_allclose(out, ref, rtol=1e-12)
    np.testing.assert_allclose(out, 0.610, atol=1e-3)


@settings(max_examples=300, deadline=None)
@given(unit_vec, unit_vec, unit_vec, material)
def test_matches_scalar_oracle(n, v, l, mat):
    d, s = eval_brdf(n, v, l, mat)
    rd, rs = oracles.brdf(list(n), list(v), list(l), list(mat.albedo), mat.roughness, mat.metallic)
    np.testing.assert_allclose(d, rd, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(s, rs, rtol=1e-8, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(unit_vec, unit_vec, unit_vec, material)
def test_reciprocity_and_positivity(n, v, l, mat):
    d1, s1 = eval_brdf(n, v, l, mat)
    d2, s2 = eval_brdf(n, l, v, mat)
    np.testing.assert_allclose(d1, d2)
    np.testing.assert_allclose(s1, s2, rtol=1e-9, atol=1e-12)
    assert np.all(d1 >= 0) and np.all(s1 >= 0)


@settings(max_examples=100, deadline=None)
@given(unit_vec, material, st.floats(0.1, 10))
def test_shade_linear_in_intensity(n, mat, k):
    args = (n, np.array([0, 0, 1.0]), [0, 0, 0], mat, [0.3, 0.5, 2.0])
    a = shade_point(*args, [1.0, 2.0, 3.0])
    b = shade_point(*args, [k, 2 * k, 3 * k])
    np.testing.assert_allclose(b, k * a, rtol=1e-12, atol=1e-300)
    assert np.all(a >= 0)


def test_diffuse_linear_in_albedo():
    n = np.array([0, 0.6, 0.8])
    v = np.array([0, 0, 1.0])
    p = np.zeros(3)
    outs = []
    for a in (0.0, 0.3, 0.6):
        full = shade_arrays(n, v, p, np.full(3, a), 0.5, 0.0, [1.0, 1.0, 3.0], [5.0] * 3)
        _, spec = eval_brdf_arrays(n, v, oracles.unit([1, 1, 3]), np.full(3, a), 0.5, 0.0)
        l = np.array(oracles.unit([1, 1, 3]))
        outs.append(full - spec * (n @ l) * 5.0 / 11.0)
    np.testing.assert_allclose(outs[2] - outs[1], outs[1] - outs[0], atol=1e-14)
    np.testing.assert_allclose(outs[0], 0.0, atol=1e-14)


def test_white_furnace_diffuse():
    # midpoint quadrature over (cos theta, phi) on the hemisphere
    k = 100
    mu = (np.arange(k) + 0.5) / k
    ph = 2 * math.pi * (np.arange(k) + 0.5) / k
    mm, pp = np.meshgrid(mu, ph, indexing="ij")
    s = np.sqrt(1 - mm ** 2)
    l = np.stack([s * np.cos(pp), s * np.sin(pp), mm], axis=-1).reshape(-1, 3)
    n = np.broadcast_to([0, 0, 1.0], l.shape)
    d, _ = eval_brdf_arrays(n, n, l, np.ones(3), 1.0, 0.0)
    total = np.sum(d[:, 0] * l[:, 2]) * (2 * math.pi / l.shape[0])
    assert 0.95 <= total <= 1.0
