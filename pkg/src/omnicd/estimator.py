"""Scikit-learn style estimator wrapping the network: fit / predict / score."""

from __future__ import annotations

import csv
import logging
import os

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .checkpoint import load_checkpoint, read_header, save_checkpoint
from .config import coerce_config
from .datakit.manifest import load_manifest
from .exceptions import DataError
from .metrics import confusion, metrics
from .model import OmniCDNet
from .objectives import LOSS_COLUMNS
from .validation import check_masks, check_pairs, check_prompts

log = logging.getLogger(__name__)


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)


class PromptedChangeDetector(BaseEstimator):
    """Prompt-guided bi-temporal change detector.

    Parameters
    ----------
    config : ModelConfig, dict, path or None
        Network hyperparameters; None selects the desk-scale default.
    steps : int
        Optimiser steps run by ``fit``.
    lr : float
        Adam learning rate (1e-4 is the full-scale setting).
    batch_size : int
    seed : int
        Seeds weight initialisation, dropout and batch order.
    threshold : float
        Cut-off on the ROI-filtered probability used by ``predict``.
    lambdas : tuple of three floats or None
        Weights of the separation, content-similarity and reconstruction
        losses; None uses ``config.lambdas``.
    lr_schedule : "constant" or "cosine"
        Cosine decays the learning rate to zero over ``steps``.
    checkpoint_path, checkpoint_every : where and how often ``fit`` saves
        weights (always at the end when a path is given).
    loss_log : path or None
        CSV receiving one LossReport row per step.
    """

    def __init__(self, config=None, steps=500, lr=1e-4, batch_size=2, seed=0, threshold=0.5,
                 lambdas=None, lr_schedule="constant", checkpoint_path=None, checkpoint_every=0,
                 loss_log=None, verbose=False):
        self.config = config
        self.steps = steps
        self.lr = lr
        self.batch_size = batch_size
        self.seed = seed
        self.threshold = threshold
        self.lambdas = lambdas
        self.lr_schedule = lr_schedule
        self.checkpoint_path = checkpoint_path
        self.checkpoint_every = checkpoint_every
        self.loss_log = loss_log
        self.verbose = verbose

    # -- fitting -------------------------------------------------------------------

    def _init_net(self):
        self.config_ = coerce_config(self.config)
        seed_everything(self.seed)
        self.net_ = OmniCDNet(self.config_)
        return self.net_

    def fit(self, X, y, prompts):
        """Train on pairs ``X`` (n, 2, 3, S, S), masks ``y`` (n, S, S) and one prompt per pair."""
        net = self._init_net()
        size = self.config_.input_size
        X = check_pairs(X, size)
        y = check_masks(y, len(X), size)
        prompts = check_prompts(prompts, len(X))
        lambdas = self.config_.lambdas if self.lambdas is None else tuple(self.lambdas)

        images = torch.from_numpy(X)
        targets = torch.from_numpy(y).float()
        rng = np.random.default_rng(self.seed)
        opt = torch.optim.Adam(net.parameters(), lr=self.lr)
        if self.lr_schedule == "cosine":
            sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=max(self.steps, 1))
        elif self.lr_schedule == "constant":
            sched = None
        else:
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")
        self.loss_history_ = []
        writer = None
        log_fh = None
        if self.loss_log:
            os.makedirs(os.path.dirname(os.path.abspath(self.loss_log)), exist_ok=True)
            log_fh = open(self.loss_log, "w", newline="", encoding="utf-8")
            writer = csv.writer(log_fh, lineterminator="\n")
            writer.writerow(LOSS_COLUMNS)
        try:
            order = np.empty(0, dtype=int)
            net.train()
            for step in range(1, self.steps + 1):
                if len(order) < self.batch_size:
                    order = np.concatenate([order, rng.permutation(len(X))])
                idx, order = order[: self.batch_size], order[self.batch_size:]
                img1, img2 = images[idx, 0], images[idx, 1]
                target = targets[idx]
                result = net(img1, img2, [prompts[i] for i in idx])
                report = net.losses(result, img1, img2, target, lambdas)
                opt.zero_grad()
                report.total.backward()
                opt.step()
                if sched:
                    sched.step()
                values = report.as_floats()
                self.loss_history_.append(values)
                if writer:
                    writer.writerow([step] + [repr(values[k]) for k in LOSS_COLUMNS[1:]])
                if self.verbose and (step % 50 == 0 or step == 1):
                    log.info("step %d %s", step, {k: round(v, 4) for k, v in values.items()})
                if self.checkpoint_path and self.checkpoint_every and step % self.checkpoint_every == 0:
                    save_checkpoint(net, self.checkpoint_path, {"step": step})
        finally:
            if log_fh:
                log_fh.close()
            net.eval()
        self.n_steps_ = self.steps
        if self.checkpoint_path:
            save_checkpoint(net, self.checkpoint_path, {"step": self.steps})
        return self

    def fit_manifest(self, path):
        samples = list(load_manifest(path))
        if not samples:
            raise DataError(f"manifest {path} holds no samples")
        X = np.stack([np.stack([s.image1, s.image2]) for s in samples])
        y = np.stack([s.mask for s in samples])
        return self.fit(X, y, [s.prompt for s in samples])

    # -- inference -----------------------------------------------------------------

    def _check_fitted(self):
        if not hasattr(self, "net_"):
            raise NotFittedError("PromptedChangeDetector is not fitted; call fit or load first")

    @torch.no_grad()
    def predict_maps(self, X, prompts=None, confidence=None, batch_size=8):
        """ROI, raw and ROI-filtered probability maps, each (n, S, S) float32.

        Give ``prompts`` (text mode) or ``confidence`` ((n, h, w) reference
        confidence maps, dense mode).
        """
        self._check_fitted()
        net = self.net_.eval()
        X = check_pairs(X, self.config_.input_size)
        if (prompts is None) == (confidence is None):
            raise ValueError("give exactly one of prompts or confidence")
        if prompts is not None:
            prompts = check_prompts(prompts, len(X))
        out = {"roi": [], "raw_prob": [], "filtered_prob": []}
        dtype = next(net.parameters()).dtype
        for start in range(0, len(X), batch_size):
            chunk = torch.from_numpy(X[start:start + batch_size]).to(dtype)
            kwargs = {"with_style": False}
            if prompts is not None:
                kwargs["texts"] = prompts[start:start + batch_size]
            else:
                kwargs["confidence"] = torch.as_tensor(confidence[start:start + batch_size])
            res = net(chunk[:, 0], chunk[:, 1], **kwargs)
            for key in out:
                out[key].append(getattr(res, key).float().numpy())
        return {k: np.concatenate(v) for k, v in out.items()}

    def predict_proba(self, X, prompts=None, confidence=None):
        return self.predict_maps(X, prompts, confidence)["filtered_prob"]

    def predict(self, X, prompts=None, confidence=None):
        return (self.predict_proba(X, prompts, confidence) > self.threshold).astype(np.uint8)

    def score(self, X, y, prompts):
        """Micro-averaged F1 of ``predict`` against ``y``."""
        pred = self.predict(X, prompts)
        y = check_masks(y, len(pred), pred.shape[-1])
        return metrics(confusion(pred, y)).f1

    @torch.no_grad()
    def reference_confidence(self, ref_image, ref_mask, test_image, how="mean"):
        self._check_fitted()
        dtype = next(self.net_.parameters()).dtype
        conf = self.net_.eval().reference_confidence(
            torch.as_tensor(ref_image, dtype=dtype), torch.as_tensor(ref_mask),
            torch.as_tensor(test_image, dtype=dtype), how)
        return conf.float().numpy()

    # -- persistence ---------------------------------------------------------------

    def save(self, path):
        self._check_fitted()
        save_checkpoint(self.net_, path)

    @classmethod
    def load(cls, path, **params):
        config, _ = read_header(path)
        est = cls(config=config, **params)
        est.config_ = config
        est.net_ = load_checkpoint(path)
        return est

