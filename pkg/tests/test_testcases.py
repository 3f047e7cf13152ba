import numpy as np
import pytest

from nnspod.testcases import (
    GaussianWaveSpec,
    StepInterfaceSpec,
    VortexSpec,
    gen_gaussian,
    gen_step_interface,
    gen_vortex_density,
    vortex_center,
    vortex_density,
)


def test_gaussian_default_shape_and_range():
    data = gen_gaussian()
    assert data.fields.shape == (20, 256)
    assert np.all(data.fields > 0) and np.all(data.fields <= 1)
    t = data.params[:, 0]
    assert t.min() >= 0 and t.max() <= 10.25
    assert np.isclose(t, 3.25).any()


def test_gaussian_peak_and_symmetry():
    spec = GaussianWaveSpec(x_range=(0.0, 4.0), n_nodes=41, params=np.array([2.0]))
    u = gen_gaussian(spec).fields[0]
    x = np.linspace(0, 4, 41)
    assert u[20] == 1.0 and x[20] == 2.0
    np.testing.assert_allclose(u[20 + np.arange(1, 20)], u[20 - np.arange(1, 20)], rtol=1e-13)


def test_gaussian_is_exact_translate():
    spec = GaussianWaveSpec()
    data = gen_gaussian(spec)
    x = data.grid.coords[:, 0]
    t = data.params[:, 0]
    ref = 6
    for i in range(len(t)):
        shifted_ref = spec.alpha * np.exp(-((x - (t[i] - t[ref])) - t[ref]) ** 2 / (2 * spec.sigma**2))
        assert np.max(np.abs(data.fields[i] - shifted_ref)) < 1e-12


def test_gaussian_spec_validation():
    with pytest.raises(ValueError):
        GaussianWaveSpec(sigma=0.0)
    with pytest.raises(ValueError):
        GaussianWaveSpec(n_nodes=1)


def test_vortex_default_shape():
    spec = VortexSpec()
    assert spec.cells[0] * spec.cells[1] == 28800
    data = gen_vortex_density(VortexSpec(times=spec.times[:2]))
    assert data.fields.shape == (2, 28800)
    np.testing.assert_allclose(spec.times[[0, -1]], [0.625, 62.5])


def test_vortex_center_value_oracle():
    spec = VortexSpec()
    g = spec.gamma
    expected = (1 - (g - 1) * spec.b**2 * np.e / (8 * g * np.pi**2)) ** (1 / (g - 1))
    xc, yc = vortex_center(spec, 3.0)
    assert vortex_density(spec, xc, yc, 3.0) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.99386, abs=1e-5)


def test_vortex_far_field():
    spec = VortexSpec()
    assert vortex_density(spec, 39.0, 1.0, 0.0) == pytest.approx(1.0, abs=1e-12)


def test_vortex_argmin_tracks_center():
    spec = VortexSpec(times=np.array([62.5]))
    data = gen_vortex_density(spec)
    xc, yc = vortex_center(spec, 62.5)
    assert (xc, yc) == pytest.approx((11.25, 10.0))
    j = np.argmin(data.fields[0])
    dx = 40 / 240
    assert abs(data.grid.coords[j, 0] - xc) <= dx and abs(data.grid.coords[j, 1] - yc) <= dx


def test_vortex_mass_proxy_invariant():
    spec = VortexSpec(cells=(120, 60))
    data = gen_vortex_density(spec)
    mass = (1 - data.fields).sum(axis=1)
    assert np.ptp(mass) / mass.mean() < 5e-3
    assert np.all(np.isfinite(data.fields))


def test_vortex_validation():
    with pytest.raises(ValueError):
        VortexSpec(gamma=1.0)
    with pytest.raises(ValueError):
        VortexSpec(b=0.0)


def test_step_limits_and_translation():
    spec = StepInterfaceSpec(sharpness=0.01, n_nodes=401)
    data = gen_step_interface(spec)
    y = data.grid.coords[:, 0]
    h = spec.interface(data.params[:, 0])
    for row, hi in zip(data.fields, h):
        assert np.all(row[y < hi - 0.1] > 0.999)
        assert np.all(row[y > hi + 0.1] < 1e-3)
    # each profile is the reference profile translated by h(t_i) - h(t_ref)
    ref = 0
    for i in (5, 17, 39):
        d = h[i] - h[ref]
        expected = 0.5 * (1 + np.tanh((h[ref] - (y - d)) / spec.sharpness))
        np.testing.assert_allclose(data.fields[i], expected, atol=1e-12)


def test_step_constant_interface():
    spec = StepInterfaceSpec(velocity=0.0)
    data = gen_step_interface(spec)
    assert np.all(data.fields == data.fields[0])


def test_step_2d_varies_only_along_y():
    spec = StepInterfaceSpec(nx=4, n_nodes=50)
    data = gen_step_interface(spec)
    assert data.grid.shape == (4, 50)
    f = data.fields.reshape(len(data), 4, 50)
    assert np.all(f == f[:, :1, :])
