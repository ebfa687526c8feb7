"""Training loop with warmup schedule, dev-loss early stopping and best-state restore."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import numeric as nm
from ..ensemble import EnsembleConfig
from ..errors import ConfigurationError, DataError, ParameterError
from ..parser import ModelConfig, batch_loss, make_batch
from ..transformer import Dropout
from .decode import greedy_decode
from .optim import Adam, noam_lr


@dataclass
class TrainConfig:
    system: str = "seq2seq"
    seed: int = 0
    epochs: int = 200
    lr: float = 0.001
    warmup_epochs: int = 10
    patience: int = 30
    batch_size: int = 32
    dropout: float = 0.1
    beam: int = 5
    length_norm: bool = True
    layers: int = 6
    d_model: int = 128
    heads: int = 8
    d_ff: int = 0
    positional: str = "sinusoidal"
    max_len: int = 128
    feature_dim: int = 64
    feature_seed: int = 0
    bpe_merges: int = 300
    clip_norm: float = 0.0
    ensemble: EnsembleConfig = field(default_factory=lambda: EnsembleConfig(3, "gated", 0.4))

    def __post_init__(self):
        if isinstance(self.ensemble, dict):
            self.ensemble = EnsembleConfig(**self.ensemble)
        for name in ("epochs", "batch_size", "warmup_epochs", "beam", "layers", "d_model", "heads", "max_len"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.patience < 0:
            raise ParameterError(f"patience must be >= 0, got {self.patience}")
        if not 0.0 <= self.dropout < 1.0:
            raise ParameterError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.lr <= 0:
            raise ParameterError(f"lr must be positive, got {self.lr}")

    def model_config(self, architecture="plain", features=False):
        ens = self.ensemble if architecture == "ensemble" else EnsembleConfig(1, self.ensemble.comb_mode, 0.0)
        return ModelConfig(
            d_model=self.d_model, heads=self.heads, layers=self.layers, d_ff=self.d_ff,
            dropout=self.dropout, positional=self.positional, max_len=self.max_len,
            architecture=architecture, ensemble=ens,
            feature_dim=self.feature_dim if features else 0, feature_seed=self.feature_seed,
        )

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainResult:
    best_epoch: int
    best_dev_loss: float
    curves: list  # one dict per epoch
    steps: int
    wall_time: float
    stopped_early: bool


def dev_loss(model, items, batch_size=64):
    """Token-mean cross-entropy over ``items`` with dropout off."""
    if not items:
        raise DataError("development set is empty")
    total = 0.0
    count = 0
    with nm.no_grad():
        for i in range(0, len(items), batch_size):
            batch = make_batch(items[i:i + batch_size], model, training=False)
            n = int((batch.tgt_out != model.tgt_vocab.pad_id).sum())
            total += batch_loss(model, batch).item() * n
            count += n
    return total / count


class _Stepper:
    """Shared per-epoch update logic: shuffling, routing, dropout and the lr schedule."""

    def __init__(self, model, items, config):
        self.model, self.items, self.config = model, items, config
        rng = nm.Rng(config.seed).child("train")
        self.order_rng, self.route_rng = rng.child("order"), rng.child("route")
        self.drop = Dropout(config.dropout, True, rng.child("dropout"))
        self.per_epoch = math.ceil(len(items) / config.batch_size)
        self.warmup = config.warmup_epochs * self.per_epoch
        self.opt = Adam(model.parameters(), clip_norm=config.clip_norm)
        self.step = 0
        self.lr = 0.0

    def epoch(self):
        """One pass over the shuffled items; returns the token-mean training loss."""
        cfg, model = self.config, self.model
        perm = self.order_rng.permutation(len(self.items))
        tot, ntok = 0.0, 0
        for b in range(self.per_epoch):
            idx = perm[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            batch = make_batch([self.items[i] for i in idx], model, self.route_rng, training=True)
            self.step += 1
            self.lr = noam_lr(self.step, cfg.d_model, self.warmup, cfg.lr)
            model.zero_grad()
            loss = batch_loss(model, batch, self.drop)
            loss.backward()
            self.opt.step(self.lr)
            n = int((batch.tgt_out != model.tgt_vocab.pad_id).sum())
            tot += loss.item() * n
            ntok += n
        return tot / ntok


def train(model, train_items, dev_items, config, on_epoch_end=None, log=None):
    """Train ``model`` in place; the parameters of the best dev-loss epoch are restored.

    Stops after ``config.patience`` consecutive epochs without dev improvement
    were followed by one more (patience 0 stops at the first non-improving
    epoch). ``on_epoch_end(epoch, model)`` may return True to stop.
    """
    if not train_items:
        raise DataError("training set is empty")
    if not dev_items:
        raise DataError("development set is empty")
    if model.config.d_model != config.d_model:
        raise ConfigurationError("model width does not match training config")
    start = time.perf_counter()
    stepper = _Stepper(model, train_items, config)
    best, best_state, best_epoch, bad = math.inf, model.state_dict(), 0, 0
    curves = []
    stopped = False
    for epoch in range(1, config.epochs + 1):
        tl = stepper.epoch()
        dl = dev_loss(model, dev_items)
        curves.append({"epoch": epoch, "train_loss": tl, "dev_loss": dl, "lr": stepper.lr})
        if log:
            log(f"epoch {epoch:3d}  train {tl:.4f}  dev {dl:.4f}  lr {stepper.lr:.2e}")
        if dl < best:
            best, best_state, best_epoch, bad = dl, model.state_dict(), epoch, 0
        else:
            bad += 1
        if bad > config.patience:
            stopped = True
            break
        if on_epoch_end is not None and on_epoch_end(epoch, model):
            stopped = True
            break
    model.load_state_dict(best_state)
    return TrainResult(best_epoch, best, curves, stepper.step, time.perf_counter() - start, stopped)


def train_to_fit(model, items, config, max_epochs=None, check_every=10, decode=None):
    """Train on ``items`` with dev = train until every item decodes exactly; returns epochs used.

    Used for memorization checks: no early stopping on loss, the final
    parameters are kept.
    """
    decode = decode or (lambda m, its: greedy_decode(m, its, max_len=max(len(i.lf) for i in its) + 2))
    stepper = _Stepper(model, items, config)
    for epoch in range(1, (max_epochs or config.epochs) + 1):
        stepper.epoch()
        if epoch % check_every == 0:
            preds = decode(model, items)
            if all(p == it.lf for p, it in zip(preds, items)):
                return epoch
    return None


def exact_match(preds, items):
    return float(np.mean([p == it.lf for p, it in zip(preds, items)])) if items else 0.0
