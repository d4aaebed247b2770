"""Array-facing estimator around the phase-conditioned segmentation net.

The manifest-driven runners in train/ handle whole datasets; this wrapper
exists for the common interactive loop: a stack of images, a stack of
label maps, fit, predict. It follows the scikit-learn estimator protocol
(constructor stores hyperparameters verbatim, fit returns self, fitted
state lives in trailing-underscore attributes), so it composes with
parameter search and cloning utilities.
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator

from .metrics import PROTOCOL_PER_FRAME, evaluate_label_maps
from .nn import NetworkConfig
from .train.config import TrainConfig
from .train.runner import TensorBundle, evaluate_bundle, fit_loop, predict_label_maps
from .validation import check_images, check_phase_ids


def _check_label_stack(y, n: int, shape: tuple[int, int], name: str = "y") -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 3 or arr.shape[0] != n or arr.shape[1:] != shape:
        raise ValueError(f"{name} must be ({n}, {shape[0]}, {shape[1]}), got {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"{name} must hold integer class ids, got dtype {arr.dtype}")
    if arr.min() < 0:
        raise ValueError(f"{name} contains negative class ids")
    return arr.astype(np.int64)


class ToolSegmenter(BaseEstimator):
    """Tool segmentation on image stacks, optionally phase-conditioned.

    Parameters mirror the training configuration: conditioning selects the
    decoder conditioning mode ("none", "basic" or "gated"; anything but
    "none" requires per-frame phase ids at fit time), and the rest are the
    usual optimization knobs. Class count and phase count are inferred
    from the training labels and phases.
    """

    def __init__(
        self,
        conditioning: str = "none",
        base_width: int = 32,
        num_stages: int = 4,
        condition_bottleneck: bool = False,
        lr: float = 1e-4,
        weight_decay: float = 1e-2,
        batch_size: int = 16,
        max_epochs: int = 100,
        patience: int = 10,
        class_weighting: bool = False,
        seed: int = 0,
    ):
        self.conditioning = conditioning
        self.base_width = base_width
        self.num_stages = num_stages
        self.condition_bottleneck = condition_bottleneck
        self.lr = lr
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.class_weighting = class_weighting
        self.seed = seed

    # -- internals ----------------------------------------------------------

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            conditioning=self.conditioning,
            phase_source="none" if self.conditioning == "none" else "true",
            semi_supervised=False,
            condition_bottleneck=self.condition_bottleneck,
            base_width=self.base_width,
            num_stages=self.num_stages,
            lr=self.lr,
            weight_decay=self.weight_decay,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            class_weighting=self.class_weighting,
            seed=self.seed,
        )

    def _bundle(self, X, y, phases, n_classes: int | None, fitted: bool) -> TensorBundle:
        in_channels = self.in_channels_ if fitted else None
        images = check_images(X, in_channels=in_channels)
        n, _, h, w = images.shape
        labels = _check_label_stack(y, n, (h, w)) if y is not None else np.zeros(
            (n, h, w), dtype=np.int64
        )
        if n_classes is not None and labels.max() > n_classes:
            raise ValueError(
                f"labels contain class id {labels.max()} but the model has {n_classes} classes"
            )
        if phases is None:
            phase_arr = np.full(n, -1, dtype=np.int64)
        else:
            num_phases = self.n_phases_ if fitted else max(int(np.max(phases)) + 1, 1)
            phase_arr = check_phase_ids(phases, n, num_phases)
        return TensorBundle(
            images=torch.from_numpy(images),
            labels=torch.from_numpy(labels),
            phases=torch.from_numpy(phase_arr),
        )

    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("this estimator is not fitted yet; call fit first")

    # -- estimator surface -----------------------------------------------------

    def fit(self, X, y, phases=None, validation=None):
        """Fit on images X and label maps y.

        phases: per-frame phase ids, required for conditioned models
        (unknown frames may carry -1) and ignored by unconditioned ones.
        validation: optional (X_val, y_val) or (X_val, y_val, phases_val);
        when present, early stopping and best-state selection follow the
        validation mean DSC, otherwise the final state is kept.
        """
        config = self._train_config()  # validates the conditioning/phase pairing
        if config.phase_source == "true" and phases is None:
            raise ValueError(
                f"conditioning {self.conditioning!r} needs per-frame phase ids"
            )
        images = check_images(X)
        n = images.shape[0]
        labels = _check_label_stack(y, n, images.shape[2:])
        n_classes = int(labels.max())
        if n_classes < 1:
            raise ValueError("y contains no tool pixels; nothing to learn")
        if phases is not None:
            phase_arr = check_phase_ids(phases, n, max(int(np.max(phases)) + 1, 1))
            n_phases = max(int(phase_arr.max()) + 1, 1)
        else:
            phase_arr = np.full(n, -1, dtype=np.int64)
            n_phases = 1

        self.n_classes_ = n_classes
        self.n_phases_ = n_phases
        self.in_channels_ = images.shape[1]
        net_config = NetworkConfig(
            num_classes=n_classes,
            num_phases=n_phases,
            in_channels=self.in_channels_,
            base_width=self.base_width,
            num_stages=self.num_stages,
            conditioning=self.conditioning,
            condition_bottleneck=self.condition_bottleneck,
        )
        train_bundle = TensorBundle(
            images=torch.from_numpy(images),
            labels=torch.from_numpy(labels),
            phases=torch.from_numpy(phase_arr),
        )
        val_bundle = None
        if validation is not None:
            if len(validation) not in (2, 3):
                raise ValueError("validation must be (X, y) or (X, y, phases)")
            val_phases = validation[2] if len(validation) == 3 else None
            val_bundle = self._bundle(
                validation[0], validation[1], val_phases, n_classes, fitted=False
            )

        result = fit_loop(net_config, config, train_bundle, val_bundle, stage="estimator")
        self.model_ = result.model
        self.net_config_ = net_config
        self.train_config_ = config
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.best_val_dsc_ = result.best_val_dsc
        return self

    def predict(self, X, phases=None) -> np.ndarray:
        """Label maps for an image stack, shape (N, H, W), int64."""
        self._require_fitted()
        bundle = self._bundle(X, None, phases, None, fitted=True)
        maps = predict_label_maps(self.model_, bundle, batch_size=self.batch_size)
        return np.stack(maps)

    def predict_scores(self, X, phases=None) -> np.ndarray:
        """Raw per-class score maps, shape (N, num_classes + 1, H, W)."""
        self._require_fitted()
        bundle = self._bundle(X, None, phases, None, fitted=True)
        outputs = []
        self.model_.eval()
        with torch.no_grad():
            for start in range(0, len(bundle), self.batch_size):
                stop = start + self.batch_size
                outputs.append(
                    self.model_(bundle.images[start:stop], bundle.phases[start:stop])
                )
        return torch.cat(outputs).numpy()

    def score(self, X, y, phases=None) -> float:
        """Mean DSC over tool classes, frame-averaged."""
        self._require_fitted()
        bundle = self._bundle(X, y, phases, self.n_classes_, fitted=True)
        return evaluate_bundle(
            self.model_, bundle, self.n_classes_, protocol=PROTOCOL_PER_FRAME,
            batch_size=self.batch_size,
        ).mean_dsc

    def evaluate(self, X, y, phases=None, protocol: str = PROTOCOL_PER_FRAME):
        """Full per-class metrics instead of the single score number."""
        self._require_fitted()
        bundle = self._bundle(X, y, phases, self.n_classes_, fitted=True)
        preds = predict_label_maps(self.model_, bundle, batch_size=self.batch_size)
        gts = [np.asarray(m) for m in bundle.labels.numpy()]
        return evaluate_label_maps(preds, gts, num_classes=self.n_classes_, protocol=protocol)
