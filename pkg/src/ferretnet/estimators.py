"""scikit-learn style wrappers around LPD extraction and FerretNet."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .data import ArrayDataset, eval_transform
from .lpd import NeighborhoodSpec, lpd_map
from .model import build_ferretnet
from .nn import functional as F
from .training import TrainConfig, model_input, predict_logits, train
from .validation import check_binary_labels, check_images


class LPDTransformer(TransformerMixin, BaseEstimator):
    """Map (N, C, H, W) images in [0, 1] (or uint8) to their LPD maps.

    Stateless: `fit` only validates the configuration.
    """

    def __init__(self, size: int = 3, center: str = "mask", statistic: str = "median"):
        self.size = size
        self.center = center
        self.statistic = statistic

    def _spec(self) -> NeighborhoodSpec:
        return NeighborhoodSpec(self.size, self.center, self.statistic)

    def fit(self, X, y=None):
        self.spec_ = self._spec()
        self.n_channels_ = check_images(X, "X").shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        arr = check_images(X, "X", dtype=np.float64)
        if arr.shape[1] != self.n_channels_:
            raise ValueError(f"X has {arr.shape[1]} channels, fitted on {self.n_channels_}")
        return lpd_map(arr, self.spec_)


class FerretNetClassifier(ClassifierMixin, BaseEstimator):
    """Binary real (0) / fake (1) classifier: LPD preprocessing plus FerretNet.

    X is an (N, 3, H, W) stack of images. Training applies the random
    crop/flip policy; prediction uses the centre crop.
    """

    def __init__(self, variant: str = "B", dropout: float = 0.2, epochs: int = 100, batch_size: int = 32,
                 lr: float = 2e-4, betas=(0.937, 0.999), weight_decay: float = 5e-4, size: int = 3,
                 center: str = "mask", statistic: str = "median", raw_input: bool = False, train_crop: int = 224,
                 eval_crop: int = 256, seed: int = 0):
        self.variant = variant
        self.dropout = dropout
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.betas = betas
        self.weight_decay = weight_decay
        self.size = size
        self.center = center
        self.statistic = statistic
        self.raw_input = raw_input
        self.train_crop = train_crop
        self.eval_crop = eval_crop
        self.seed = seed

    def _spec(self):
        return None if self.raw_input else NeighborhoodSpec(self.size, self.center, self.statistic)

    def fit(self, X, y):
        images = check_images(X, "X")
        labels = check_binary_labels(y)
        if len(labels) != len(images):
            raise ValueError(f"X has {len(images)} samples but y has {len(labels)}")
        config = TrainConfig(lr=self.lr, betas=self.betas, weight_decay=self.weight_decay,
                             batch_size=self.batch_size, epochs=self.epochs, seed=self.seed,
                             crop_size=self.train_crop)
        self.spec_ = self._spec()
        self.model_ = build_ferretnet(self.variant, in_channels=images.shape[1], dropout_p=self.dropout,
                                      seed=self.seed)
        self.history_ = train(self.model_, ArrayDataset(images, labels), config, self.spec_).history
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        images = check_images(X, "X")
        inputs = np.stack([model_input(eval_transform(im, self.eval_crop), self.spec_) for im in images])
        return predict_logits(self.model_, inputs, self.batch_size).astype(np.float64)

    def predict_proba(self, X):
        p = F.sigmoid(self.decision_function(X))
        return np.stack([1.0 - p, p], axis=1)

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)
