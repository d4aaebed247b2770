import numpy as np
import pytest
from sklearn.base import clone

from phaseseg.estimator import ToolSegmenter
from phaseseg.metrics import ClassMetrics
from phaseseg.synthworld import build_world


@pytest.fixture(scope="module")
def arrays():
    world = build_world(
        n_videos=1, frames_per_video=80, n_classes=2, n_phases=2, seed=2, resolution=(48, 48)
    )
    ts = list(range(0, 80, 10))
    X = np.stack([world.render_image("video000", t) for t in ts])
    y = np.stack([world.label_map("video000", t) for t in ts]).astype(np.int64)
    phases = np.array([world.phase_at("video000", t) for t in ts], dtype=np.int64)
    return X, y, phases


def fast_params(**overrides):
    params = dict(base_width=8, num_stages=2, max_epochs=6, batch_size=4, seed=0)
    params.update(overrides)
    return params


class TestEstimatorProtocol:
    def test_params_round_trip_and_clone(self):
        est = ToolSegmenter(conditioning="gated", lr=5e-4, seed=7)
        assert ToolSegmenter(**est.get_params()).get_params() == est.get_params()
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()

    def test_fit_returns_self_and_sets_state(self, arrays):
        X, y, _ = arrays
        est = ToolSegmenter(**fast_params())
        assert est.fit(X, y) is est
        assert est.n_classes_ == 2
        assert est.n_phases_ == 1
        assert est.in_channels_ == 1
        assert est.best_epoch_ == len(est.history_)

    def test_predict_before_fit_rejected(self, arrays):
        X, _, _ = arrays
        with pytest.raises(RuntimeError, match="not fitted"):
            ToolSegmenter().predict(X)

    def test_deterministic_per_seed(self, arrays):
        X, y, _ = arrays
        a = ToolSegmenter(**fast_params()).fit(X, y).predict(X)
        b = ToolSegmenter(**fast_params()).fit(X, y).predict(X)
        assert np.array_equal(a, b)


class TestEstimatorValidation:
    def test_label_shape_and_dtype_checks(self, arrays):
        X, y, _ = arrays
        est = ToolSegmenter(**fast_params())
        with pytest.raises(ValueError, match="must be"):
            est.fit(X, y[:, :24, :24])
        with pytest.raises(ValueError, match="integer"):
            est.fit(X, y.astype(np.float32))
        with pytest.raises(ValueError, match="negative"):
            est.fit(X, y - 1)
        with pytest.raises(ValueError, match="no tool pixels"):
            est.fit(X, np.zeros_like(y))

    def test_conditioning_requires_phases(self, arrays):
        X, y, phases = arrays
        with pytest.raises(ValueError, match="phase ids"):
            ToolSegmenter(conditioning="gated", **fast_params()).fit(X, y)
        ToolSegmenter(conditioning="gated", **fast_params()).fit(X, y, phases=phases)

    def test_phase_range_checked(self, arrays):
        X, y, phases = arrays
        est = ToolSegmenter(conditioning="basic", **fast_params()).fit(X, y, phases=phases)
        bad = phases.copy()
        bad[0] = 7
        with pytest.raises(ValueError, match="phases"):
            est.predict(X, phases=bad)

    def test_channel_mismatch_at_predict(self, arrays):
        X, y, _ = arrays
        est = ToolSegmenter(**fast_params()).fit(X, y)
        rgb = np.repeat(X[..., None], 3, axis=-1)
        with pytest.raises(ValueError, match="channels"):
            est.predict(rgb)

    def test_validation_tuple_arity(self, arrays):
        X, y, _ = arrays
        with pytest.raises(ValueError, match="validation"):
            ToolSegmenter(**fast_params()).fit(X, y, validation=(X,))


class TestEstimatorBehavior:
    def test_predict_shapes_and_score(self, arrays):
        X, y, _ = arrays
        est = ToolSegmenter(**fast_params(max_epochs=80, lr=3e-3, batch_size=8)).fit(X, y)
        pred = est.predict(X)
        assert pred.shape == y.shape and pred.dtype == np.int64
        assert set(np.unique(pred)) <= {0, 1, 2}
        assert est.score(X, y) >= 0.95  # memorizes a tiny training set
        scores = est.predict_scores(X)
        assert scores.shape == (len(X), 3, 48, 48)
        metrics = est.evaluate(X, y)
        assert isinstance(metrics, ClassMetrics)
        assert metrics.mean_dsc == pytest.approx(est.score(X, y))

    def test_validation_drives_best_state(self, arrays):
        X, y, _ = arrays
        est = ToolSegmenter(**fast_params(max_epochs=10, patience=10))
        est.fit(X[:6], y[:6], validation=(X[6:], y[6:]))
        assert est.best_val_dsc_ is not None
        recorded = [h["val_mean_dsc"] for h in est.history_]
        assert est.best_val_dsc_ == max(recorded)

    def test_unknown_phase_allowed_at_predict(self, arrays):
        X, y, phases = arrays
        est = ToolSegmenter(conditioning="gated", **fast_params()).fit(X, y, phases=phases)
        null_phases = np.full(len(X), -1, dtype=np.int64)
        assert est.predict(X, phases=null_phases).shape == y.shape
        assert est.predict(X).shape == y.shape  # omitted phases fall back to null

    def test_training_loss_decreases(self, arrays):
        X, y, _ = arrays
        est = ToolSegmenter(**fast_params(max_epochs=30, lr=3e-3)).fit(X, y)
        losses = [h["train_loss"] for h in est.history_]
        assert losses[-1] < losses[0]
