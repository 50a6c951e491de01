import numpy as np
import pytest

from posecast import autodiff as ad
from posecast.body import BodyParams
from posecast.regressor import NonFiniteOutput, Regressor, RegressorConfig, mean_params_vector
from posecast.rotations import axis_angle_to_matrix


def make(rng, d=8, **kw):
    mean = BodyParams(0.1 * rng.normal(size=(24, 3)), rng.normal(size=10), np.array([0.9, 0.01, -0.02]))
    return Regressor(d, 24, 10, mean_params_vector(mean), rng, RegressorConfig(**kw)), mean


def test_output_shapes_and_valid_rotations(rng):
    reg, _ = make(rng)
    p = reg(rng.normal(size=(5, 8)))
    assert p.rot6d.shape == (5, 24, 6) and p.rotmat.shape == (5, 24, 3, 3)
    assert p.beta.shape == (5, 10) and p.cam.shape == (5, 3)
    R = p.rotmat.value
    np.testing.assert_allclose(R @ np.swapaxes(R, -1, -2), np.broadcast_to(np.eye(3), R.shape), atol=1e-12)


def test_zero_last_layer_returns_the_mean(rng):
    reg, mean = make(rng)
    reg.layers[-1].zero_()
    p = reg(rng.normal(size=(3, 8)))
    np.testing.assert_allclose(p.rotmat.value, np.broadcast_to(axis_angle_to_matrix(mean.theta), (3, 24, 3, 3)),
                               atol=1e-12)
    np.testing.assert_array_equal(p.beta.value, np.tile(mean.beta, (3, 1)))
    np.testing.assert_array_equal(p.cam.value, np.tile(mean.cam, (3, 1)))


def test_iterations_compound(rng):
    a, _ = make(np.random.default_rng(3), n_iter=1, final_gain=1.0)
    b, _ = make(np.random.default_rng(3), n_iter=3, final_gain=1.0)
    x = rng.normal(size=(2, 8))
    assert not np.allclose(a(x).beta.value, b(x).beta.value)


def test_shared_weights_across_branches(rng):
    reg, _ = make(rng)
    x = rng.normal(size=(4, 8))
    stacked = reg(np.concatenate([x, x]), branch=("past", "int"))
    alone = reg(x, branch="future")
    np.testing.assert_allclose(stacked.beta.value[:4], alone.beta.value, atol=1e-14)
    assert reg.calls == {"past": 1, "int": 1, "future": 1}


def test_to_params_round_trip(rng):
    reg, _ = make(rng, final_gain=1.0)
    p = reg(rng.normal(size=(3, 8)))
    bp = p.to_params()
    np.testing.assert_allclose(axis_angle_to_matrix(bp.theta), p.rotmat.value, atol=1e-10)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_output_reports_rows(rng):
    reg, _ = make(rng)
    x = rng.normal(size=(3, 8))
    x[1, 0] = np.inf
    with pytest.raises(NonFiniteOutput) as err:
        reg(x)
    assert err.value.rows == [1]


def test_shape_checks(rng):
    reg, _ = make(rng)
    with pytest.raises(ad.ShapeError):
        reg(np.zeros((2, 7)))
    with pytest.raises(ad.ShapeError):
        Regressor(8, 24, 10, np.zeros(5), rng)
