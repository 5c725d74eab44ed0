"""scikit-learn compatible regressor trained with the rank-similarity regularizer."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import baselines
from ._validation import check_choice, check_features, check_positive, check_training_data
from .network import Adam, DivergedError, RegressorNet, regression_loss
from .regularizer import RankSimConfig, make_subset, ranksim_loss_and_grad
from .similarity import FEATURE_SIMILARITIES, PENALTIES

__all__ = ["RankSimRegressor"]


class RankSimRegressor(RegressorMixin, TransformerMixin, BaseEstimator):
    """Dense ReLU regressor with optional imbalance handling.

    ``predict`` returns scalar predictions and ``transform`` returns the
    penultimate feature vectors the regularizer acts on.

    Parameters
    ----------
    hidden : tuple of int
        Hidden layer widths; the last one is the feature dimension.
    epochs, batch_size, lr, lr_milestones, lr_decay, weight_decay
        Optimization schedule. The learning rate is multiplied by
        ``lr_decay`` at every epoch listed in ``lr_milestones``.
    loss : {"l1", "mse"}
        Task loss. The L1 gradient is bounded, so with a large ``gamma`` the
        regularizer can dominate it and collapse the features.
    ranksim : bool
        Add ``gamma`` times the rank-similarity loss on each batch.
    gamma, lam, penalty, huber_delta, feature_sim, unique_label_sampling
        Regularizer settings, see :class:`ranksim.regularizer.RankSimConfig`.
    reweight : {"none", "inv", "sqinv"}
        Per-sample loss re-weighting from binned label frequencies.
    lds, lds_size, lds_sigma
        Smooth the label histogram before re-weighting.
    focal_r, focal_beta, focal_gamma
        Scale per-sample losses by ``sigmoid(beta * |e|) ** gamma``.
    rrt, rrt_epochs, rrt_reweight, rrt_lr
        After the main training, re-train only the head for ``rrt_epochs``
        with ``rrt_reweight`` weights. The main stage then runs unweighted.
    bin_width, label_range
        Label binning grid; ``label_range=None`` spans the training labels.
    restore_best : bool
        With an ``eval_set``, keep the parameters of the epoch with the
        lowest validation MAE.
    random_state : int
    rank_scale : {"unit", "raw"}
        ``"unit"`` divides ranks by the row length before the penalty, which
        keeps ``gamma=100`` stable with this small network; ``"raw"`` uses
        integer ranks.
    include_diagonal : bool
        Keep each item's self-similarity in its rank row.
    """

    def __init__(
        self,
        hidden=(64, 64),
        epochs=90,
        batch_size=64,
        lr=1e-3,
        lr_milestones=(60, 80),
        lr_decay=0.1,
        weight_decay=1e-4,
        loss="mse",
        ranksim=False,
        gamma=100.0,
        lam=2.0,
        penalty="mse",
        huber_delta=1.0,
        feature_sim="cosine",
        unique_label_sampling=True,
        reweight="none",
        lds=False,
        lds_size=5,
        lds_sigma=2.0,
        focal_r=False,
        focal_beta=0.2,
        focal_gamma=1.0,
        rrt=False,
        rrt_epochs=30,
        rrt_reweight="inv",
        rrt_lr=1e-3,
        bin_width=1.0,
        label_range=None,
        restore_best=True,
        random_state=0,
        rank_scale="unit",
        include_diagonal=True,
    ):
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.lr_milestones = lr_milestones
        self.lr_decay = lr_decay
        self.weight_decay = weight_decay
        self.loss = loss
        self.ranksim = ranksim
        self.gamma = gamma
        self.lam = lam
        self.penalty = penalty
        self.huber_delta = huber_delta
        self.feature_sim = feature_sim
        self.unique_label_sampling = unique_label_sampling
        self.reweight = reweight
        self.lds = lds
        self.lds_size = lds_size
        self.lds_sigma = lds_sigma
        self.focal_r = focal_r
        self.focal_beta = focal_beta
        self.focal_gamma = focal_gamma
        self.rrt = rrt
        self.rrt_epochs = rrt_epochs
        self.rrt_reweight = rrt_reweight
        self.rrt_lr = rrt_lr
        self.bin_width = bin_width
        self.label_range = label_range
        self.restore_best = restore_best
        self.random_state = random_state
        self.rank_scale = rank_scale
        self.include_diagonal = include_diagonal

    def _validate_params(self):
        check_choice("loss", self.loss, ("l1", "mse"))
        check_choice("reweight", self.reweight, baselines.REWEIGHT_SCHEMES)
        check_choice("rrt_reweight", self.rrt_reweight, baselines.REWEIGHT_SCHEMES)
        check_choice("penalty", self.penalty, PENALTIES)
        check_choice("feature_sim", self.feature_sim, FEATURE_SIMILARITIES)
        check_choice("rank_scale", self.rank_scale, ("raw", "unit"))
        check_positive("lr", self.lr)
        check_positive("bin_width", self.bin_width)
        check_positive("weight_decay", self.weight_decay, strict=False)
        if int(self.epochs) < 0 or int(self.rrt_epochs) < 0:
            raise ValueError("epoch counts must be nonnegative")
        if int(self.batch_size) < 1:
            raise ValueError("batch_size must be positive")
        if self.lds and self.reweight == "none" and not self.rrt:
            raise ValueError("lds smooths the density used for re-weighting; set reweight to 'inv' or 'sqinv'")

    def _ranksim_config(self):
        return RankSimConfig(
            gamma=float(self.gamma),
            lam=float(self.lam),
            penalty=self.penalty,
            huber_delta=float(self.huber_delta),
            feature_sim=self.feature_sim,
            unique_label_sampling=bool(self.unique_label_sampling),
            rank_scale=self.rank_scale,
            include_diagonal=bool(self.include_diagonal),
        )

    def _density(self, y):
        if self.label_range is None:
            return baselines.bin_labels(y, self.bin_width)
        lo, hi = self.label_range
        n_bins = int(np.ceil((hi - lo) / self.bin_width - 1e-9))
        return baselines.bin_labels(y, self.bin_width, lo=lo, n_bins=n_bins)

    def _label_weights(self, density, y, scheme):
        if scheme == "none":
            return np.ones(y.size)
        if self.lds:
            density = baselines.lds_smooth(density, baselines.LdsKernel(int(self.lds_size), float(self.lds_sigma)))
        bin_w = baselines.reweight(density, scheme, use_smoothed=bool(self.lds))
        return baselines.sample_weights(density, bin_w, y)

    def _lr_at(self, epoch, base):
        drops = sum(1 for m in self.lr_milestones if epoch >= m)
        return base * self.lr_decay**drops

    def fit(self, X, y, sample_weight=None, eval_set=None, callback=None):
        """Train on ``(X, y)``.

        ``eval_set=(X_val, y_val)`` enables per-epoch validation MAE and
        best-epoch selection. ``callback(epoch_record, estimator)`` is called
        after every epoch.

        A non-finite loss or gradient raises :class:`ranksim.network.DivergedError`
        carrying ``last_good_net`` (parameters at the start of the failing
        epoch), ``epoch`` and ``history``.
        """
        self._validate_params()
        X, y, sample_weight = check_training_data(X, y, sample_weight)
        if eval_set is not None:
            X_val = check_features(eval_set[0], X.shape[1])
            y_val = np.asarray(eval_set[1], dtype=np.float64).ravel()
        self.n_features_in_ = X.shape[1]

        init_ss, shuffle_ss, subset_ss = np.random.SeedSequence(self.random_state).spawn(3)
        seed = int(init_ss.generate_state(1)[0])
        net = RegressorNet(X.shape[1], tuple(self.hidden), seed=seed)
        net.params["head_b"][:] = np.median(y)
        shuffle_rng = np.random.default_rng(shuffle_ss)
        subset_rng = np.random.default_rng(subset_ss)

        self.density_ = self._density(y)
        plan = baselines.RRTPlan(int(self.epochs), int(self.rrt_epochs), self.rrt_reweight, self.rrt_lr) if self.rrt else None
        stages = baselines.rrt_schedule(plan)
        cfg = self._ranksim_config() if self.ranksim else None
        focal = baselines.FocalRConfig(self.focal_beta, self.focal_gamma) if self.focal_r else None

        self.history_ = []
        self.best_epoch_ = None
        best_mae = np.inf
        best_params = None
        epoch_counter = 0
        for stage in stages:
            scheme = self.reweight if stage.reweight is None else stage.reweight
            weights = self._label_weights(self.density_, y, scheme)
            if sample_weight is not None:
                weights = weights * sample_weight
            if stage.trainable == "all":
                names, base_lr, n_epochs = list(net.params), self.lr, int(self.epochs)
            else:
                names, base_lr, n_epochs = list(net.head_names), self.rrt_lr, stage.epochs
            opt = Adam(lr=base_lr, weight_decay=self.weight_decay)
            stage_cfg = cfg if stage.ranksim else None
            for epoch in range(n_epochs):
                opt.lr = self._lr_at(epoch, base_lr)
                last_good = {k: v.copy() for k, v in net.params.items()}
                try:
                    record = self._run_epoch(net, opt, names, X, y, weights, stage_cfg, focal, shuffle_rng, subset_rng)
                except DivergedError as err:
                    net.params = last_good
                    err.last_good_net = net
                    err.epoch = epoch_counter
                    err.history = self.history_
                    raise
                record.update(epoch=epoch_counter, stage=stage.name, lr=opt.lr)
                if eval_set is not None:
                    record["val_mae"] = float(np.mean(np.abs(net.predict(X_val) - y_val)))
                    if record["val_mae"] < best_mae:
                        best_mae = record["val_mae"]
                        best_params = {k: v.copy() for k, v in net.params.items()}
                        self.best_epoch_ = epoch_counter
                self.history_.append(record)
                if callback is not None:
                    callback(record, self)
                epoch_counter += 1

        self.final_net_ = net
        self.best_net_ = None
        if best_params is not None:
            self.best_net_ = net.copy()
            self.best_net_.params = best_params
        self.net_ = self.best_net_ if (self.restore_best and self.best_net_ is not None) else net
        return self

    def _run_epoch(self, net, opt, names, X, y, weights, cfg, focal, shuffle_rng, subset_rng):
        n = y.size
        order = shuffle_rng.permutation(n)
        task_total = reg_total = 0.0
        n_batches = degenerate = 0
        gamma = 0.0 if cfg is None else cfg.gamma
        for start in range(0, n, int(self.batch_size)):
            idx = order[start : start + int(self.batch_size)]
            xb, yb = X[idx], y[idx]
            z, pred = net.forward(xb)
            w = weights[idx]
            if focal is not None:
                w = w * baselines.focal_r_weights(pred - yb, focal)
            task, grad_pred = regression_loss(pred, yb, w, self.loss)
            grad_feat = None
            reg = 0.0
            if cfg is not None:
                subset = make_subset(yb, z, cfg, subset_rng)
                keep = _non_degenerate(subset.features, cfg.feature_sim)
                res = ranksim_loss_and_grad(subset.labels[keep], subset.features[keep], cfg)
                if res.degenerate:
                    degenerate += 1
                else:
                    reg = res.loss
                    grad_feat = np.zeros_like(z)
                    grad_feat[subset.indices[keep]] = gamma * res.grad
            total = task + gamma * reg
            if not np.isfinite(total):
                raise DivergedError("diverged: non-finite loss")
            grads = net.backward(grad_pred, grad_feat)
            opt.step(net.params, grads, names)
            task_total += task
            reg_total += reg
            n_batches += 1
        return {
            "task_loss": task_total / max(n_batches, 1),
            "ranksim_loss": reg_total / max(n_batches, 1),
            "degenerate_batches": degenerate,
        }

    def predict(self, X):
        check_is_fitted(self, "net_")
        return self.net_.predict(check_features(X, self.n_features_in_, type(self).__name__))

    def transform(self, X):
        """Penultimate-layer features."""
        check_is_fitted(self, "net_")
        return self.net_.forward(check_features(X, self.n_features_in_, type(self).__name__))[0]

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.non_deterministic = False
        return tags


def _non_degenerate(features, kind):
    """Rows with a defined angle-based similarity (all rows for distance similarities)."""
    if kind == "cosine":
        return np.linalg.norm(features, axis=1) > 0
    if kind == "correlation":
        return np.ptp(features, axis=1) > 0
    return np.ones(features.shape[0], dtype=bool)
