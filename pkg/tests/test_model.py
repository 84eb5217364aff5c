import numpy as np
import pytest

from cqrkit import data
from cqrkit.model import CQRModel, cross_validate, derive_seed, format_mean_sd
from cqrkit.net import NetConfig

FAST = NetConfig(epochs=2, mc_samples=50)


@pytest.fixture(scope="module")
def fitted():
    ds, _ = data.synth_heteroscedastic(1500, seed=4, n_features=2)
    return CQRModel.fit(ds, FAST, cal_size=500, seed=1), ds


def test_fit_calibrates(fitted):
    model, _ = fitted
    assert model.table is not None and model.table.n == 500
    assert model.network.config.mc_samples == 50


def test_predictions_monotone(fitted):
    model, ds = fitted
    cq = model.predict(ds)
    assert cq.values.shape == (1500, 101)
    assert np.all(np.diff(cq.values, axis=1) >= 0)


def test_save_load_bit_identical(fitted, tmp_path):
    model, ds = fitted
    path = tmp_path / "m.json"
    model.save(path)
    back = CQRModel.load(path)
    np.testing.assert_array_equal(back.predict(ds, mc_seed=3).values,
                                  model.predict(ds, mc_seed=3).values)
    assert path.read_text().count('"format": "cqr-v1"') == 1


def test_load_rejects_other_format(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        CQRModel.load(p)


def test_column_order_independent(fitted):
    model, ds = fitted
    swapped = data.Dataset(ds.features[:, ::-1], ds.targets, feature_names=ds.feature_names[::-1])
    np.testing.assert_array_equal(model.predict(swapped, mc_seed=0).values,
                                  model.predict(ds, mc_seed=0).values)


def test_missing_feature(fitted):
    model, ds = fitted
    with pytest.raises(data.DataError):
        model.predict(data.Dataset(ds.features[:, :1], ds.targets, feature_names=["x0"]))


def test_fit_deterministic():
    ds, _ = data.synth_heteroscedastic(800, seed=2)
    a = CQRModel.fit(ds, FAST, cal_size=300, seed=5)
    b = CQRModel.fit(ds, FAST, cal_size=300, seed=5)
    assert a.to_dict() == b.to_dict()


def test_fit_needs_targets():
    ds = data.Dataset(np.random.default_rng(0).normal(size=(50, 1)), None)
    with pytest.raises(data.DataError):
        CQRModel.fit(ds, FAST, cal_size=10)


def test_derive_seed():
    assert derive_seed(0, "split") == derive_seed(0, "split")
    assert derive_seed(0, "split") != derive_seed(0, "network")
    assert derive_seed(0, "split") != derive_seed(1, "split")


def test_cross_validate():
    ds, _ = data.synth_heteroscedastic(1200, seed=0)
    folds = data.kfold(len(ds), 3, seed=0)
    res = cross_validate(ds, folds, FAST, cal_size=300, seed=0)
    assert len(res) == 3
    assert all(r["mad"] > 0 for r in res)
    assert sorted(np.concatenate([r["index"] for r in res]).tolist()) == list(range(1200))


def test_cross_validate_too_small():
    ds, _ = data.synth_heteroscedastic(100, seed=0)
    with pytest.raises(data.DataError):
        cross_validate(ds, data.kfold(100, 2), FAST, cal_size=60)


def test_format_mean_sd():
    assert format_mean_sd([2.81, 3.03]) == "2.92 (0.16)"
    assert format_mean_sd([1.0]) == "1.00 (0.00)"
