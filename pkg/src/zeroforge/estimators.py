"""Scikit-learn style estimators wrapping the training and decoding API.

The learners are generative: ``fit`` draws its own training batches from
the configured channel, so ``X`` and ``y`` are accepted only for
pipeline compatibility and may be None.  Decoders follow the usual
``fit``/``predict`` contract on arrays of received coefficient rows.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .constellation import Constellation, _encode_batch, canonical_constellation
from .decoders import MlpParams, _dizet_decode_batch, _nn_decode_batch
from .errors import InvalidArgumentError
from .training import TrainConfig, train_dizet, train_nn


def _check_bit_matrix(X, K: int | None = None) -> np.ndarray:
    X = np.asarray(X)
    if X.ndim != 2:
        raise InvalidArgumentError(f"expected a 2d bit array, got shape {X.shape}")
    if not np.isin(X, (0, 1)).all():
        raise InvalidArgumentError("bits must be 0 or 1")
    if K is not None and X.shape[1] != K:
        raise InvalidArgumentError(f"expected {K} bits per row, got {X.shape[1]}")
    return X.astype(np.int64)


def _check_coeff_matrix(Y, K: int) -> np.ndarray:
    Y = np.asarray(Y, dtype=np.complex128)
    if Y.ndim != 2 or Y.shape[1] != K + 1:
        raise InvalidArgumentError(
            f"expected received blocks of shape (n, {K + 1}), got {Y.shape}"
        )
    return Y


def _resolve_constellation(constellation, K, lam) -> Constellation:
    if constellation is not None:
        if not isinstance(constellation, Constellation):
            raise InvalidArgumentError("constellation must be a Constellation instance")
        return constellation
    if K is None:
        raise InvalidArgumentError("either a constellation or K must be given")
    return canonical_constellation(int(K), lam)


class BmoczEncoder(BaseEstimator, TransformerMixin):
    """Map rows of K bits to energy-normalized polynomial coefficients.

    Parameters
    ----------
    constellation : Constellation, optional
        Explicit zero constellation; wins over (K, lam).
    K : int, optional
        Message length when no constellation is given.
    lam : float, default=0.5
        Separation parameter of the canonical radius rule.
    """

    def __init__(self, constellation=None, K=None, lam=0.5):
        self.constellation = constellation
        self.K = K
        self.lam = lam

    def fit(self, X=None, y=None):
        K = self.K
        if K is None and X is not None:
            K = np.asarray(X).shape[1]
        self.constellation_ = _resolve_constellation(self.constellation, K, self.lam)
        self.n_features_in_ = self.constellation_.K
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "constellation_")
        c = self.constellation_
        bits = _check_bit_matrix(X, c.K)
        return _encode_batch(bits, c.radius, c.phases)


class DizetDecoder(BaseEstimator):
    """Direct zero-test decoder over rows of received coefficients."""

    def __init__(self, constellation=None, K=None, lam=0.5):
        self.constellation = constellation
        self.K = K
        self.lam = lam

    def fit(self, X=None, y=None):
        self.constellation_ = _resolve_constellation(self.constellation, self.K, self.lam)
        self.n_features_in_ = self.constellation_.K + 1
        return self

    def predict(self, Y) -> np.ndarray:
        check_is_fitted(self, "constellation_")
        c = self.constellation_
        Y = _check_coeff_matrix(Y, c.K)
        return _dizet_decode_batch(Y, c.radius, c.phases)


class NeuralDecoder(BaseEstimator):
    """Root-feature MLP decoder over rows of received coefficients."""

    def __init__(self, mlp=None):
        self.mlp = mlp

    def fit(self, X=None, y=None):
        if not isinstance(self.mlp, MlpParams):
            raise InvalidArgumentError("mlp must be a trained MlpParams instance")
        self.mlp_ = self.mlp
        self.n_features_in_ = self.mlp_.K + 1
        return self

    def predict(self, Y) -> np.ndarray:
        check_is_fitted(self, "mlp_")
        Y = _check_coeff_matrix(Y, self.mlp_.K)
        return _nn_decode_batch(Y, self.mlp_)


class DizetConstellationLearner(BaseEstimator):
    """Learn (radius, phases) for the zero-test decoder by gradient descent.

    Fitting draws hinge-loss batches at the configured Eb/N0; ``X`` and
    ``y`` are ignored.  After ``fit`` the result lives in
    ``constellation_``, ``radius_``, ``phases_`` and ``losses_``.
    """

    def __init__(self, K=4, n_epoch=30000, batch_size=256, ebn0_db=10.0,
                 margin=1.0, lr_initial=1e-2, lr_final=1e-4, seed=0,
                 hinge_label_flip=False):
        self.K = K
        self.n_epoch = n_epoch
        self.batch_size = batch_size
        self.ebn0_db = ebn0_db
        self.margin = margin
        self.lr_initial = lr_initial
        self.lr_final = lr_final
        self.seed = seed
        self.hinge_label_flip = hinge_label_flip

    def _config(self) -> TrainConfig:
        return TrainConfig(
            K=self.K, n_epoch=self.n_epoch, batch_size=self.batch_size,
            ebn0_db=self.ebn0_db, margin=self.margin,
            lr_initial=self.lr_initial, lr_final=self.lr_final,
            seed=self.seed, hinge_label_flip=self.hinge_label_flip,
        )

    def fit(self, X=None, y=None):
        res = train_dizet(self._config())
        self.constellation_ = res.constellation
        self.radius_ = float(res.constellation.radius)
        self.phases_ = res.constellation.phases.copy()
        self.losses_ = res.losses
        return self

    def predict(self, Y) -> np.ndarray:
        check_is_fitted(self, "constellation_")
        return DizetDecoder(constellation=self.constellation_).fit().predict(Y)


class JointConstellationLearner(BaseEstimator):
    """Jointly learn a constellation and an MLP decoder in two stages.

    Stage one trains both at ``ebn0_db``; stage two freezes the
    constellation and retrains the network at ``ebn0_db_stage2``.
    Results land in ``constellation_``, ``mlp_``, ``radius_``,
    ``phases_``, ``losses_stage1_`` and ``losses_stage2_``.
    """

    def __init__(self, K=4, n_epoch=15000, batch_size=256, ebn0_db=10.0,
                 ebn0_db_stage2=5.0, margin=1.0, lr_initial=1e-2,
                 lr_final=1e-4, l_hidden=None, seed=0, dropout=0.25,
                 slope=0.01):
        self.K = K
        self.n_epoch = n_epoch
        self.batch_size = batch_size
        self.ebn0_db = ebn0_db
        self.ebn0_db_stage2 = ebn0_db_stage2
        self.margin = margin
        self.lr_initial = lr_initial
        self.lr_final = lr_final
        self.l_hidden = l_hidden
        self.seed = seed
        self.dropout = dropout
        self.slope = slope

    def _config(self) -> TrainConfig:
        return TrainConfig(
            K=self.K, n_epoch=self.n_epoch, batch_size=self.batch_size,
            ebn0_db=self.ebn0_db, ebn0_db_stage2=self.ebn0_db_stage2,
            margin=self.margin, lr_initial=self.lr_initial,
            lr_final=self.lr_final, l_hidden=self.l_hidden,
            seed=self.seed, dropout=self.dropout, slope=self.slope,
        )

    def fit(self, X=None, y=None):
        res = train_nn(self._config())
        self.constellation_ = res.constellation
        self.mlp_ = res.mlp
        self.radius_ = float(res.constellation.radius)
        self.phases_ = res.constellation.phases.copy()
        self.losses_stage1_ = res.losses_stage1
        self.losses_stage2_ = res.losses_stage2
        self.skipped_batches_ = (res.skipped_stage1, res.skipped_stage2)
        return self

    def predict(self, Y) -> np.ndarray:
        check_is_fitted(self, "mlp_")
        return NeuralDecoder(mlp=self.mlp_).fit().predict(Y)
