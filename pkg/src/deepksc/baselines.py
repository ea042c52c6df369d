"""Reference clusterers: k-means, PCA followed by k-subspaces, and k-means
on autoencoder features.
"""

import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import metrics
from .autoencoder import encode
from .ksc import KscConfig, fit_basis, objective, run_plain_ksc
from .linalg import top_p_left_singular_vectors


class KMeansResult(NamedTuple):
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    history: list


@dataclass(frozen=True)
class BaselineResult:
    name: str
    metrics: metrics.ClusterMetrics
    seconds: float


def _sq_dists(x, centers, x_sq):
    c_sq = np.einsum("kd,kd->k", centers, centers)
    return np.maximum(x_sq[:, None] - 2.0 * x @ centers.T + c_sq[None, :], 0.0)


def kmeans_plusplus(x, k, rng):
    """k-means++ seeding: each new centre is sampled with probability
    proportional to the squared distance to the nearest chosen centre."""
    n = x.shape[0]
    x_sq = np.einsum("nd,nd->n", x, x)
    centers = [x[rng.integers(n)]]
    closest = _sq_dists(x, np.array(centers), x_sq)[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))
        centers.append(x[idx])
        closest = np.minimum(closest, _sq_dists(x, x[idx][None, :], x_sq)[:, 0])
    return np.array(centers)


def _lloyd(x, centers, max_iter, x_sq):
    history = []
    labels = None
    for _ in range(max_iter):
        dist = _sq_dists(x, centers, x_sq)
        new = np.argmin(dist, axis=1)
        history.append(float(dist[np.arange(x.shape[0]), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        counts = np.bincount(labels, minlength=centers.shape[0])
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, x)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            own = dist[np.arange(x.shape[0]), labels]
            for c in empty:
                # hand the worst-fitted point of a cluster that can spare it
                own_ok = np.where(counts[labels] > 1, own, -np.inf)
                j = int(np.argmax(own_ok))
                counts[labels[j]] -= 1
                sums[labels[j]] -= x[j]
                labels[j] = c
                counts[c] = 1
                sums[c] = x[j]
                own[j] = -np.inf
        centers = sums / counts[:, None]
    labels = np.argmin(_sq_dists(x, centers, x_sq), axis=1)
    inertia = float(np.sum((x - centers[labels]) ** 2))
    return labels, centers, inertia, history


def kmeans(points, k, restarts=20, seed=0, max_iter=300):
    """Lloyd's algorithm with k-means++ seeding; best of ``restarts`` runs.

    The run with the lowest inertia wins; ties go to the earliest restart.
    """
    x = np.asarray(points, dtype=np.float64).reshape(len(points), -1)
    if x.shape[0] < k:
        raise ValueError(f"need at least k={k} points, got {x.shape[0]}")
    x_sq = np.einsum("nd,nd->n", x, x)
    best = None
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        res = KMeansResult(*_lloyd(x, kmeans_plusplus(x, k, rng), max_iter, x_sq))
        if best is None or res.inertia < best.inertia:
            best = res
    return best


def random_point_init(points, k, p, rng):
    """Initial subspaces, each fitted to ``p`` randomly chosen points."""
    z = np.asarray(points, dtype=np.float64)
    picks = rng.choice(z.shape[0], size=(k, p), replace=z.shape[0] < k * p)
    return [fit_basis(z[idx], p) for idx in picks]


def pca_project(points, target_dim):
    """Mean-centre and project onto the top ``target_dim`` principal axes."""
    x = np.asarray(points, dtype=np.float64).reshape(len(points), -1)
    if target_dim > x.shape[1]:
        raise ValueError(f"target_dim={target_dim} exceeds data dimension {x.shape[1]}")
    xc = x - x.mean(axis=0)
    axes = top_p_left_singular_vectors(xc.T, target_dim)
    return xc @ axes


def pca_ks(points, target_dim, cfg, restarts=10, seed=0):
    """PCA to ``target_dim`` dimensions, then k-subspace clustering.

    Each restart starts from :func:`random_point_init`; the restart with
    the lowest final objective is kept.
    """
    y = pca_project(points, target_dim)
    best, best_obj = None, np.inf
    for r in range(restarts):
        init = random_point_init(y, cfg.k, cfg.p, np.random.default_rng([seed, r]))
        res = run_plain_ksc(y, cfg, init)
        obj = objective(y, res.subspaces, res.labels)
        if obj < best_obj:
            best, best_obj = res, obj
    return best.labels


def cae_km(params, images, k, restarts=20, seed=0, batch_size=500):
    """k-means on the encoder's latent codes."""
    return kmeans(encode(params, images, batch_size=batch_size), k, restarts, seed).labels


def run_baselines(images, truth, k, which=("kmeans", "pca-ks", "cae-km"), params=None,
                  pca_dim=80, p=7, seed=0, kmeans_restarts=20, pca_restarts=10):
    """Run the selected baselines and score them against ``truth``."""
    flat = None
    out = []
    for name in which:
        t0 = time.perf_counter()
        if name in ("kmeans", "pca-ks") and flat is None:
            flat = np.asarray(images).reshape(len(images), -1)
            if flat.dtype == np.uint8:
                flat = flat / 255.0
        if name == "kmeans":
            pred = kmeans(flat, k, kmeans_restarts, seed).labels
        elif name == "pca-ks":
            pred = pca_ks(flat, pca_dim, KscConfig(k=k, p=p), pca_restarts, seed)
        elif name == "cae-km":
            if params is None:
                raise ValueError("cae-km needs trained autoencoder parameters")
            pred = cae_km(params, images, k, kmeans_restarts, seed)
        else:
            raise ValueError(f"unknown baseline {name!r}")
        out.append(BaselineResult(name, metrics.evaluate(pred, truth), time.perf_counter() - t0))
    return out
