import numpy as np

from nnspod.config import load_config
from nnspod.pipeline import load_data, split_data


def test_split_keeps_reference_and_extremes():
    cfg = load_config(preset="wave1d")
    data = load_data(cfg)
    _, _, ti, te = split_data(cfg, data)
    assert {0, 6, 19} <= set(ti)
    assert len(ti) == len(te) == 10
    # test parameters never leave the training range
    t = data.params[:, 0]
    assert t[te].min() > t[ti].min() and t[te].max() < t[ti].max()


def test_random_split_is_seeded():
    cfg = load_config(preset="vortex2d", overrides=["case.cells=8,4"])
    data = load_data(cfg)
    a = split_data(cfg, data)[2]
    b = split_data(cfg, data)[2]
    np.testing.assert_array_equal(a, b)
    assert 0 in a and len(a) == 80
