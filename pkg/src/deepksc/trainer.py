"""Training loops: autoencoder pretraining, subspace initialisation, and the
two fine-tuning schemes (per-epoch SVD refits or per-epoch Grassmann
gradient steps).
"""

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from . import metrics
from .autoencoder import CaeArch, adam_step, as_images, backward, decode, encode, init_params
from .baselines import kmeans
from .grassmann import robust_step
from .ksc import (
    assign,
    euclidean_subspace_grad,
    fit_basis,
    objective,
    reseed_empty,
    update_subspaces,
)

log = logging.getLogger(__name__)

VARIANTS = ("svd", "grassmann")


@dataclass
class TrainConfig:
    k: int = 10
    p: int = 7
    lam: float = 0.08
    batch_size: int = 100
    epochs: int = 50
    pretrain_epochs: int = 200
    lr: float = 1e-3
    grass_eta: float = 1e-3
    outlier_fraction: float = 0.1
    seed: int = 0
    variant: str = "svd"
    kmeans_restarts: int = 20
    eval_batch_size: int = 1000
    arch: CaeArch = field(default_factory=CaeArch)

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise ValueError("outlier_fraction must lie in [0, 1)")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.p > self.arch.latent_dim:
            raise ValueError(f"p={self.p} exceeds latent dimension {self.arch.latent_dim}")
        if self.k < 1 or self.p < 1 or self.batch_size < 1:
            raise ValueError("k, p and batch_size must be positive")


@dataclass
class EpochRecord:
    epoch: int
    loss_total: float
    loss_ae: float
    loss_ksc: float
    acc: float = None
    nmi: float = None
    ari: float = None
    seconds: float = 0.0
    phase: str = "finetune"


JSON_KEYS = ("epoch", "loss_total", "loss_ae", "loss_ksc", "acc", "nmi", "ari", "seconds")


def record_json(rec):
    return json.dumps({k: getattr(rec, k) for k in JSON_KEYS})


@dataclass
class TrainReport:
    """Per-epoch records; ``sink`` (if set) is called with each new record."""

    records: list = field(default_factory=list)
    sink: object = field(default=None, repr=False)

    def append(self, rec):
        self.records.append(rec)
        if self.sink is not None:
            self.sink(rec)
        log.info("%s epoch %d: total %.4g ae %.4g ksc %.4g acc %s", rec.phase, rec.epoch,
                 rec.loss_total, rec.loss_ae, rec.loss_ksc, rec.acc)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def column(self, key):
        return [getattr(r, key) for r in self.records]

    def to_jsonl(self):
        return "".join(record_json(r) + "\n" for r in self.records)

    def as_dicts(self):
        return [asdict(r) for r in self.records]


class TrainResult(NamedTuple):
    params: object
    subspaces: list
    labels: np.ndarray
    report: TrainReport


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i:i + batch_size]


def _score(labels, truth):
    if truth is None:
        return {}
    return metrics.evaluate(labels, truth).as_dict()


def pretrain(x, cfg, params=None, report=None):
    """Train the autoencoder on reconstruction alone for ``cfg.pretrain_epochs``.

    ``loss_ae`` in the report is accumulated over the epoch's mini-batches.
    """
    if len(x) == 0:
        raise ValueError("no training data")
    params = params if params is not None else init_params(cfg.arch, cfg.seed)
    rng = np.random.default_rng([cfg.seed, 1])
    for epoch in range(cfg.pretrain_epochs):
        t0 = time.perf_counter()
        total = 0.0
        for idx in _batches(len(x), cfg.batch_size, rng):
            grads, info = backward(params, x[idx])
            adam_step(params, grads, cfg.lr)
            total += info["ae"]
        if report is not None:
            report.append(EpochRecord(epoch, total, total, 0.0, seconds=time.perf_counter() - t0, phase="pretrain"))
    return params


def init_subspaces(latents, cfg):
    """k-means on the latent codes, then one PCA basis per cluster.

    Returns ``(subspaces, labels)``.
    """
    z = np.asarray(latents, dtype=np.float64)
    if z.shape[0] < cfg.k * cfg.p:
        raise ValueError(f"need at least k*p={cfg.k * cfg.p} points, got {z.shape[0]}")
    labels = kmeans(z, cfg.k, cfg.kmeans_restarts, cfg.seed).labels
    subs = []
    for i in range(cfg.k):
        zi = z[labels == i]
        # empty clusters get a placeholder basis that reseeding replaces
        subs.append(fit_basis(zi if len(zi) else np.zeros((1, z.shape[1])), cfg.p))
    return reseed_empty(z, subs, labels)


def _prepare(x, cfg, params, init, report):
    x = np.asarray(x)
    if x.dtype != np.uint8:
        x = as_images(x, cfg.arch)
    if params is None:
        params = pretrain(x, cfg, report=report)
    if init is None:
        z = encode(params, x, cfg.eval_batch_size)
        subs, labels = init_subspaces(z, cfg)
    else:
        subs, labels = list(init), None
    return x, params, subs, labels


def train_kscn_svd(x, cfg, params=None, init=None, truth=None, report=None):
    """Fine-tune with one trimmed SVD refit of every subspace per epoch.

    Each epoch runs Adam over shuffled mini-batches on the joint loss, the
    batch memberships coming from the current (fixed) subspaces. Then all
    data is re-encoded and reassigned, and each subspace is refitted from
    its members minus the farthest ``outlier_fraction``.

    Parameters
    ----------
    x : ndarray
        Images ``(n, H, W, C)``, float in [0, 1] or raw ``uint8``.
    params : CaeParams, optional
        Pretrained model, updated in place. Pretrained here if omitted.
    init : sequence of SubspaceBasis, optional
        Initial subspaces; k-means + PCA on the latents if omitted.
    truth : array_like, optional
        Ground-truth labels used only for per-epoch metrics.

    Returns
    -------
    TrainResult
        Final parameters, subspaces, the memberships they were fitted
        from, and the per-epoch report. ``loss_ksc`` of an epoch is the
        objective of that reassignment against the pre-refit subspaces.
    """
    report = report if report is not None else TrainReport()
    x, params, subs, labels = _prepare(x, cfg, params, init, report)
    rng = np.random.default_rng([cfg.seed, 2])
    n = len(x)
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        for idx in _batches(n, cfg.batch_size, rng):
            grads, _ = backward(params, x[idx], subs, None, cfg.lam)
            adam_step(params, grads, cfg.lr)
        z = encode(params, x, cfg.eval_batch_size)
        labels = assign(z, subs)
        loss_ksc = objective(z, subs, labels)
        loss_ae = _recon_from_latents(params, x, z, cfg.eval_batch_size)
        subs, labels = update_subspaces(z, labels, subs, cfg.outlier_fraction)
        report.append(EpochRecord(epoch, loss_ae + cfg.lam * loss_ksc, loss_ae, loss_ksc,
                                  seconds=time.perf_counter() - t0, **_score(labels, truth)))
    if labels is None:
        labels = assign(encode(params, x, cfg.eval_batch_size), subs)
    return TrainResult(params, subs, labels, report)


def _recon_from_latents(params, x, z, batch_size):
    total = 0.0
    for i in range(0, len(x), batch_size):
        xb = as_images(x[i:i + batch_size], params.arch)
        total += float(np.sum((xb - decode(params, z[i:i + batch_size])) ** 2))
    return total


def accumulate_subspace_grads(z, labels, subs, grads=None, counts=None):
    """Add each cluster's Euclidean subspace gradient for one batch."""
    k = len(subs)
    if grads is None:
        grads = [np.zeros_like(s.basis) for s in subs]
        counts = np.zeros(k, dtype=np.int64)
    for i in range(k):
        grads[i] += euclidean_subspace_grad(z, labels, i, subs[i])
    counts += np.bincount(labels, minlength=k)
    return grads, counts


def apply_grassmann_updates(subs, grads, counts, grass_eta):
    """One Riemannian step per subspace with ``eta = grass_eta / n_i``.

    Subspaces that received no points are left alone.
    """
    out = []
    for s, g, c in zip(subs, grads, counts):
        out.append(robust_step(s, g, grass_eta / c)[0] if c else s)
    return out


def train_kscn_grassmann(x, cfg, params=None, init=None, truth=None, report=None):
    """Fine-tune with one Grassmann gradient step per subspace per epoch.

    During the batch loop each batch is assigned to the current subspaces,
    the per-subspace Euclidean gradients are accumulated, and the encoder
    and decoder take an Adam step. After the loop every subspace moves
    along its projected accumulated gradient and is retracted with QR.

    Returns
    -------
    TrainResult
        Memberships and ``loss_ksc`` refer to a full re-encoding at the end
        of each epoch, assigned against the updated subspaces.
    """
    report = report if report is not None else TrainReport()
    x, params, subs, labels = _prepare(x, cfg, params, init, report)
    rng = np.random.default_rng([cfg.seed, 2])
    n = len(x)
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        acc_grads, counts = None, None
        for idx in _batches(n, cfg.batch_size, rng):
            grads, info = backward(params, x[idx], subs, None, cfg.lam)
            acc_grads, counts = accumulate_subspace_grads(info["z"], info["labels"], subs, acc_grads, counts)
            adam_step(params, grads, cfg.lr)
        subs = apply_grassmann_updates(subs, acc_grads, counts, cfg.grass_eta)
        z = encode(params, x, cfg.eval_batch_size)
        labels = assign(z, subs)
        loss_ksc = objective(z, subs, labels)
        loss_ae = _recon_from_latents(params, x, z, cfg.eval_batch_size)
        report.append(EpochRecord(epoch, loss_ae + cfg.lam * loss_ksc, loss_ae, loss_ksc,
                                  seconds=time.perf_counter() - t0, **_score(labels, truth)))
    if labels is None:
        labels = assign(encode(params, x, cfg.eval_batch_size), subs)
    return TrainResult(params, subs, labels, report)


def run_grassmann_ksc(points, init, epochs, batch_size=100, grass_eta=1e-3, seed=0):
    """Encoder-free Grassmann k-subspace clustering on fixed points.

    Same subspace schedule as :func:`train_kscn_grassmann` with the encoder
    frozen: per-batch assignment and gradient accumulation, one retraction
    step per subspace per epoch. Returns ``(subspaces, labels, trace)``,
    the trace holding the objective after every epoch.
    """
    z = np.asarray(points, dtype=np.float64)
    subs = list(init)
    rng = np.random.default_rng([seed, 2])
    trace = []
    for _ in range(epochs):
        grads, counts = None, None
        for idx in _batches(len(z), batch_size, rng):
            zb = z[idx]
            grads, counts = accumulate_subspace_grads(zb, assign(zb, subs), subs, grads, counts)
        subs = apply_grassmann_updates(subs, grads, counts, grass_eta)
        labels = assign(z, subs)
        trace.append(objective(z, subs, labels))
    return subs, assign(z, subs), trace


def train(x, cfg, params=None, init=None, truth=None, report=None):
    """Dispatch to the fine-tuning loop selected by ``cfg.variant``."""
    fn = train_kscn_svd if cfg.variant == "svd" else train_kscn_grassmann
    return fn(x, cfg, params=params, init=init, truth=truth, report=report)
