import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from satfield.config import Config
from satfield.estimator import TensorFieldRegressor

BOUNDS = (-1.0, -1.0, 0.0, 1.0, 1.0, 1.0)
SMALL = dict(bounds=BOUNDS, n_levels=1, rank=2, base_resolution=4, max_resolution=4, ambient_resolution=4,
             head_a_depth=2, head_a_width=8, head_bd_width=8, n_lobes=2, asg_dim=2, n_samples=8, batch=128,
             lr_tensor=0.01, lr_mlp=1e-3, w_tv=0.0, w_normal=0.0, w_lamb=0.0, w_ds=0.0)


def nadir_rays(n, seed=0):
    rng = np.random.default_rng(seed)
    return np.column_stack([rng.uniform(-1, 1, (n, 2)), np.ones(n), np.zeros((n, 2)), -np.ones(n)])


def test_params_mirror_config():
    names = set(TensorFieldRegressor().get_params()) - {"bounds"}
    cfg = set(Config.__dataclass_fields__) - {"data", "out", "threads"}
    assert names == cfg


def test_clone_keeps_params():
    est = TensorFieldRegressor(**SMALL)
    assert clone(est).get_params() == est.get_params()


def test_fit_predict_score():
    X = nadir_rays(512)
    y = np.tile([0.6, 0.4, 0.3], (512, 1))
    est = TensorFieldRegressor(**SMALL, steps=150).fit(X, y)
    pred = est.predict(X[:10])
    assert pred.shape == (10, 3)
    assert est.score(X, y) > 25
    assert est.predict_height(X[:4]).shape == (4,)


def test_fit_with_depth_and_eval_set():
    X = nadir_rays(256)
    y = np.full((256, 3), 0.5)
    depth = np.full(256, np.nan)
    depth[:20] = 0.7
    est = TensorFieldRegressor(**dict(SMALL, w_ds=0.1), steps=5, validate_every=5)
    est.fit(X, y, depth=depth, eval_set=(nadir_rays(64, 1), np.full((64, 3), 0.5)))
    assert est.result_.val_history and est.result_.steps_done == 5


def test_not_fitted():
    with pytest.raises(NotFittedError):
        TensorFieldRegressor(**SMALL).predict(nadir_rays(2))


def test_input_validation():
    est = TensorFieldRegressor(**dict(SMALL, steps=0))
    with pytest.raises(ValueError):
        est.fit(np.zeros((4, 5)), np.zeros((4, 3)))
    with pytest.raises(ValueError):
        est.fit(nadir_rays(4), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        TensorFieldRegressor(**dict(SMALL, bounds=None, steps=0)).fit(nadir_rays(4), np.zeros((4, 3)))
    X = nadir_rays(4)
    X[0, 3:] = 0
    with pytest.raises(ValueError):
        est.fit(X, np.zeros((4, 3)))
