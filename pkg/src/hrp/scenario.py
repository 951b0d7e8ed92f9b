"""Reproducible urban topologies: UE drops, Lloyd's BS placement and the
fixed HAPS / control-station geometry."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import NetworkConfig

MAX_REJECTION_ATTEMPTS = 1_000_000
LLOYD_SHIFT_TOL = 1e-6
LLOYD_MAX_ITER = 1000
LLOYD_RESTARTS = 10

# substream tags, combined with the run seed
STREAM_UES = 0
STREAM_LLOYD = 1
STREAM_LINKS = 2


class PackingError(RuntimeError):
    pass


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``; order of creation is irrelevant."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


@dataclass(frozen=True)
class Topology:
    ues: np.ndarray        # (K, 3) x, y, h in metres
    bs_sites: np.ndarray   # (L, 3)
    haps_pos: tuple
    cs_pos: tuple

    @property
    def num_ues(self) -> int:
        return len(self.ues)

    @property
    def num_bs(self) -> int:
        return len(self.bs_sites)


def distance_3d(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b))


def generate_ues(config: NetworkConfig, rng: np.random.Generator) -> np.ndarray:
    """Uniform UE drop over the square with a hard minimum separation.

    Rejection sampling: each candidate is uniform over the area and is
    discarded if it falls closer than ``min_ue_separation_m`` to an accepted
    UE.  Returns a ``(K, 3)`` array with the UE height in the last column.
    """
    k = config.num_ues
    side = config.area_side_m
    min_sep2 = config.min_ue_separation_m ** 2
    pts = np.empty((k, 2))
    n = 0
    attempts = 0
    while n < k:
        if attempts >= MAX_REJECTION_ATTEMPTS:
            raise PackingError(
                f"packing infeasible: placed {n}/{k} UEs after {attempts} attempts"
            )
        attempts += 1
        cand = rng.uniform(0.0, side, size=2)
        if n and np.min(np.sum((pts[:n] - cand) ** 2, axis=1)) < min_sep2:
            continue
        pts[n] = cand
        n += 1
    return np.column_stack([pts, np.full(k, config.ue_height_m)])


@dataclass
class LloydResult:
    centroids: np.ndarray
    labels: np.ndarray
    objective: float
    history: list        # sum of squared distances after each assignment step
    iterations: int


def _sq_dists(points, centroids):
    return np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2)


def kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    first = int(rng.integers(n))
    centroids = [points[first]]
    d2 = np.sum((points - points[first]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with chosen centroids
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids.append(points[idx])
        d2 = np.minimum(d2, np.sum((points - points[idx]) ** 2, axis=1))
    return np.array(centroids, dtype=float)


def lloyd_kmeans(points, k: int, rng: np.random.Generator, init=None) -> LloydResult:
    """Lloyd's iteration with k-means++ seeding.

    Stops when assignments stop changing or the largest centroid move is
    below 1e-6 m.  An empty cluster is re-seeded at the point farthest from
    its currently assigned centroid.  Ties in assignment go to the lowest
    centroid index.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= number of points, got k={k}, n={n}")
    centroids = kmeanspp_init(points, k, rng) if init is None else np.array(init, dtype=float)

    labels = None
    history = []
    it = 0
    for it in range(1, LLOYD_MAX_ITER + 1):
        d2 = _sq_dists(points, centroids)
        new_labels = np.argmin(d2, axis=1)
        obj = float(d2[np.arange(n), new_labels].sum())
        if history and obj > history[-1] * (1 + 1e-12) + 1e-9:
            raise AssertionError(f"Lloyd objective increased: {history[-1]} -> {obj}")
        history.append(obj)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels

        new_centroids = centroids.copy()
        point_d2 = d2[np.arange(n), labels]
        for j in range(k):
            members = labels == j
            if members.any():
                new_centroids[j] = points[members].mean(axis=0)
            else:
                far = int(np.argmax(point_d2))
                new_centroids[j] = points[far]
                labels[far] = j
                point_d2[far] = 0.0
        shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if shift < LLOYD_SHIFT_TOL:
            d2 = _sq_dists(points, centroids)
            labels = np.argmin(d2, axis=1)
            obj = float(d2[np.arange(n), labels].sum())
            history.append(min(obj, history[-1]))
            break

    return LloydResult(centroids, labels, history[-1], history, it)


def lloyd_best_of(points, k: int, rng: np.random.Generator,
                  restarts: int = LLOYD_RESTARTS) -> LloydResult:
    """Lowest-objective result of ``restarts`` independently seeded Lloyd runs.

    A single k-means++ start still stops at a worse fixed point fairly often
    on small point sets; every run draws its seeding from ``rng`` in turn,
    and ties keep the earliest run.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    best = None
    for _ in range(restarts):
        res = lloyd_kmeans(points, k, rng)
        if best is None or res.objective < best.objective:
            best = res
    return best


def place_bs_lloyd(ues, num_bs: int, rng: np.random.Generator, height: float = 25.0,
                   restarts: int = LLOYD_RESTARTS) -> np.ndarray:
    """BS sites at the k-means centroids of the UE ground positions, ``(L, 3)``."""
    ues = np.asarray(ues, dtype=float)
    if num_bs == 0:
        return np.empty((0, 3))
    res = lloyd_best_of(ues[:, :2], num_bs, rng, restarts)
    return np.column_stack([res.centroids, np.full(num_bs, height)])


def build_topology(config: NetworkConfig, seed: int | None = None) -> Topology:
    seed = config.seed if seed is None else seed
    ues = generate_ues(config, substream(seed, STREAM_UES))
    sites = place_bs_lloyd(ues, config.num_bs, substream(seed, STREAM_LLOYD), config.bs_height_m)
    return Topology(ues=ues, bs_sites=sites, haps_pos=config.haps_position, cs_pos=config.cs_position)
