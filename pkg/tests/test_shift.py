import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnspod import neuralnet as nn
from nnspod._container import ModelFormatError
from nnspod.rom import rel_l2
from nnspod.shift import (
    NetPreset,
    RegridWarning,
    ShiftModel,
    apply_shift_to_reference,
    centroid_shifts,
    fit_shift_scalers,
    fixed_shift_baseline,
    interp_loss,
    inverse_shift,
    regrid,
    shift_loss,
    train_interpnet,
    train_shiftnet,
    transform_to_reference_by_interpolation,
)
from nnspod.snapshots import Grid, SnapshotSet
from nnspod.testcases import StepInterfaceSpec, gen_gaussian, gen_step_interface


def exact_translation_model(data: SnapshotSet, ref: int, axis: int = 0, velocity: float = 1.0) -> ShiftModel:
    """Shift model whose shift net is the exact affine map v * (t - t_ref)."""
    cs, ps, fs = fit_shift_scalers(data)
    mask = np.zeros(data.grid.dim, dtype=bool)
    mask[axis] = True
    span_x, span_t = cs.span[axis], ps.span[0]
    w = np.zeros((1, data.grid.dim + 1))
    w[0, -1] = velocity * span_t / span_x
    b = np.array([velocity * (ps.mins[0] - data.params[ref, 0]) / span_x])
    shift_net = nn.MLP([nn.Layer(w, b, "identity")], trained=True)
    interp = nn.init_params([data.grid.dim, 4, 1], "sigmoid", 0)
    interp.trained = True
    return ShiftModel(interp, shift_net, mask, ref, data.params[ref].copy(), data.grid,
                      data.fields[ref].copy(), cs, ps, fs)


def sv_ratio(fields):
    s = np.linalg.svd(fields, compute_uv=False)
    return s[1] / s[0]


# losses ----------------------------------------------------------------------


def tiny_problem(seed=0):
    rng = np.random.default_rng(seed)
    xs = np.linspace(0.1, 0.9, 16)[:, None]
    mus = np.array([[0.0], [0.5], [1.0]])
    us = rng.uniform(0, 1, (3, 16))
    interp = nn.init_params([1, 6, 6, 1], "softplus", seed)
    interp.trained = True
    shift = nn.init_params([2, 5, 4, 1], "leakyrelu", seed + 1)
    # keep shifted coordinates inside the unit box so the clamp is inactive
    for p in shift.params():
        p *= 0.1
    return interp, shift, xs, mus, us


def fd_grads(net, loss, h=1e-6):
    out = []
    for p in net.params():
        g = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + h
            lp = loss()
            p[i] = old - h
            lm = loss()
            p[i] = old
            g[i] = (lp - lm) / (2 * h)
        out.append(g)
    return out


def rel_err(a, b):
    a = np.concatenate([x.ravel() for x in a])
    b = np.concatenate([x.ravel() for x in b])
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_interp_loss_gradient():
    interp, _, xs, _, us = tiny_problem()
    _, g = interp_loss(interp, xs, us[0])
    fd = fd_grads(interp, lambda: interp_loss(interp, xs, us[0])[0])
    assert rel_err(g, fd) < 1e-6


def test_shift_loss_gradient_through_interp_input():
    interp, shift, xs, mus, us = tiny_problem()
    mask = np.array([True])
    _, g = shift_loss(shift, interp, xs, mus, us, mask)
    fd = fd_grads(shift, lambda: shift_loss(shift, interp, xs, mus, us, mask)[0])
    assert rel_err(g, fd) < 1e-6


def test_shift_loss_at_zero_shift_is_interp_residual():
    interp, shift, xs, mus, us = tiny_problem()
    for p in shift.params():
        p[...] = 0.0
    loss, _ = shift_loss(shift, interp, xs, mus, us, np.array([True]))
    direct = np.mean((interp(xs)[:, 0][None, :] - us) ** 2)
    assert loss == pytest.approx(direct, rel=1e-14)


def test_shift_loss_subsample_matches_full_when_all_nodes():
    interp, shift, xs, mus, us = tiny_problem()
    idx = np.tile(np.arange(16), (3, 1))
    a = shift_loss(shift, interp, xs, mus, us, np.array([True]))[0]
    b = shift_loss(shift, interp, xs, mus, us, np.array([True]), idx)[0]
    assert a == pytest.approx(b, rel=1e-14)


# training ----------------------------------------------------------------------


def test_interpnet_learns_constant_field_quickly():
    g = Grid.line(np.linspace(0, 1, 20))
    data = SnapshotSet(g, [0.0, 1.0], np.vstack([np.full(20, 2.0), np.full(20, 2.0) + 1e-3]))
    res = train_interpnet(data, 0, NetPreset((5,), "sigmoid", 0.05, 1e-6, 3000))
    assert res.converged and res.epochs < 3000


def test_shiftnet_requires_trained_interp():
    data = gen_gaussian()
    with pytest.raises(ValueError, match="trained"):
        train_shiftnet(data, nn.init_params([1, 3, 1], "sigmoid"), NetPreset((4,), "leakyrelu", 0.01, 1e-3, 5),
                       [True], 0)


def test_shiftnet_on_reference_only_learns_zero_shift():
    data = gen_gaussian().subset([6, 7])
    ir = train_interpnet(data, 0, NetPreset((10, 10), "softplus", 0.03, 1e-5, 20000))
    one = data.subset([0])
    # a one-snapshot set has a degenerate parameter scaler; the shift must vanish
    res = train_shiftnet(one, ir.net, NetPreset((10, 4), "leakyrelu", 0.0023, 1e-5, 300), [True], 0)
    cs, ps, _ = fit_shift_scalers(one)
    rows = np.column_stack([cs.transform(one.grid.coords), np.zeros(one.grid.n)])
    t = nn.forward(res.net, rows)[:, 0] * cs.span[0]
    assert np.mean(np.abs(t)) < 0.05
    assert res.loss <= ir.loss * 2 + 1e-5


def test_centroid_shifts_recover_translation():
    data = gen_gaussian()
    est = centroid_shifts(data, 6, [True])[:, 0]
    np.testing.assert_allclose(est, data.params[:, 0] - 3.25, atol=1e-3)


def test_mask_validation():
    data = gen_gaussian()
    with pytest.raises(ValueError):
        centroid_shifts(data, 0, [False])
    with pytest.raises(ValueError):
        centroid_shifts(data, 0, [True, True])


# regridding ----------------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.3, 0.3), st.floats(-2, 2), st.floats(-1, 1))
def test_regrid_exact_for_affine_fields(d, a, b):
    x = np.linspace(0, 1, 41)
    g = Grid.line(x)
    moved = x + d
    u = a * moved + b  # the field carried by the moved nodes is affine in position
    out = regrid(g, moved[:, None], u)
    interior = (x >= moved.min()) & (x <= moved.max())
    np.testing.assert_allclose(out[interior], (a * x + b)[interior], atol=1e-10)


def test_regrid_edge_fill_and_2d_axis():
    g = Grid.tensor(np.linspace(0, 1, 5), np.linspace(0, 1, 4))
    vals = g.coords[:, 0] * 10 + g.coords[:, 1]
    pts = g.coords.copy()
    pts[:, 0] += 0.25
    out = regrid(g, pts, vals).reshape(5, 4)
    # nodes left of the moved range take the first value (edge fill)
    np.testing.assert_allclose(out[0], vals.reshape(5, 4)[0])
    np.testing.assert_allclose(out[2], vals.reshape(5, 4)[1])
    # y axis untouched
    np.testing.assert_allclose(out[:, 1] - out[:, 0], 1 / 3)


def test_regrid_non_monotone_warns_and_sorts():
    x = np.linspace(0, 1, 5)
    pts = np.array([0.0, 0.5, 0.25, 0.75, 1.0])
    with pytest.warns(RegridWarning):
        out = regrid(Grid.line(x), pts[:, None], pts * 2)
    np.testing.assert_allclose(out, x * 2)


# transport ----------------------------------------------------------------------


def test_exact_shift_collapses_gaussian():
    data = gen_gaussian()
    model = exact_translation_model(data, 6)
    moved = apply_shift_to_reference(model, data)
    ref = data.fields[6]
    for row in moved.snapshots.fields:
        assert rel_l2(ref, row) < 0.1
    assert sv_ratio(moved.snapshots.fields) < 1e-2
    # t = 6.05 peaks near the reference peak after transport
    i = int(np.argmin(np.abs(data.params[:, 0] - 6.05)))
    assert abs(np.argmax(moved.snapshots.fields[i]) - np.argmax(ref)) <= 2


def test_reference_snapshot_unchanged():
    data = gen_gaussian()
    model = exact_translation_model(data, 6)
    moved = apply_shift_to_reference(model, data.subset([6]))
    assert rel_l2(data.fields[6], moved.snapshots.fields[0]) < 5e-2
    assert rel_l2(data.fields[6], inverse_shift(model, data.fields[6], data.params[6])) < 5e-2


def test_inverse_roundtrip_and_peak():
    data = gen_gaussian()
    model = exact_translation_model(data, 6)
    moved = apply_shift_to_reference(model, data)
    for i in range(len(data)):
        back = inverse_shift(model, moved.snapshots.fields[i], data.params[i])
        assert rel_l2(data.fields[i], back) < 0.05
    back = inverse_shift(model, data.fields[6], [5.0])
    x = data.grid.coords[:, 0]
    assert abs(x[np.argmax(back)] - 5.0) <= 2 * (x[1] - x[0])


def test_shift_axis_mask_zero_on_unshifted_axis():
    data = gen_step_interface(StepInterfaceSpec(nx=3, n_nodes=30))
    model = exact_translation_model(data, 0, axis=1, velocity=0.6)
    s = model.shifts(data.params)
    assert np.all(s[:, :, 0] == 0.0)
    np.testing.assert_allclose(s[:, 0, 1], 0.6 * (data.params[:, 0] - data.params[0, 0]), atol=1e-12)


def test_interpolation_variant_is_rank_one():
    data = gen_step_interface()
    model = exact_translation_model(data, 39, velocity=0.6)
    moved = transform_to_reference_by_interpolation(model, data)
    assert sv_ratio(moved.snapshots.fields) < 0.05
    assert rel_l2(data.fields[39], moved.snapshots.fields[39]) < 5e-2
    with pytest.raises(ValueError):
        transform_to_reference_by_interpolation(model, data, source="magic")


def test_fixed_shift_baseline():
    data = gen_gaussian()
    assert sv_ratio(fixed_shift_baseline(data, 1.0, 6).snapshots.fields) < 1e-2
    same = fixed_shift_baseline(data, 0.0, 6)
    np.testing.assert_array_equal(same.snapshots.fields, data.fields)


def test_grid_mismatch_rejected():
    data = gen_gaussian()
    model = exact_translation_model(data, 6)
    other = gen_gaussian().__class__(Grid.line(np.linspace(0, 1, 256)), data.params, data.fields)
    with pytest.raises(ValueError, match="grid"):
        apply_shift_to_reference(model, other)


def test_shift_model_bytes_roundtrip():
    data = gen_gaussian()
    model = exact_translation_model(data, 6)
    back = ShiftModel.from_bytes(model.to_bytes())
    np.testing.assert_array_equal(back.shifts(data.params), model.shifts(data.params))
    assert back.to_bytes() == model.to_bytes()
    with pytest.raises(ModelFormatError):
        ShiftModel.from_bytes(b"garbage")
    with pytest.raises(ModelFormatError):
        ShiftModel.from_bytes(model.to_bytes()[:-10])


def test_no_warnings_on_smooth_transport():
    data = gen_gaussian()
    model = exact_translation_model(data, 6)
    with warnings.catch_warnings():
        warnings.simplefilter("error", RegridWarning)
        apply_shift_to_reference(model, data)
