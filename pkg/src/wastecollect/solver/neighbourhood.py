"""Prize-aware granular neighbourhoods."""

from __future__ import annotations

import numpy as np

from ..model import RoutingInstance


def correlation(
    i: int,
    j: int,
    instance: RoutingInstance,
    beta_wait: float = 0.2,
    beta_tw: float = 1.0,
) -> float:
    """Correlation of the arc (i, j) between two cluster nodes; lower is
    more attractive. Required clusters count with prize zero."""
    if i == j:
        raise ValueError("correlation needs two distinct clusters")
    e, l, s = instance.earliest, instance.latest, instance.service
    tau = int(instance.duration[i, j])
    min_wait = max(0, e[j] - l[i] - s[i] - tau)
    min_tw = max(0, e[i] + s[i] + tau - l[j])
    prize = 0 if instance.is_required(j) else instance.prize(j)
    return int(instance.distance[i, j]) + beta_wait * min_wait + beta_tw * min_tw - prize


def correlation_matrix(
    instance: RoutingInstance, beta_wait: float = 0.2, beta_tw: float = 1.0
) -> np.ndarray:
    """Cluster-by-cluster correlation values, vectorised."""
    idx = np.arange(instance.first_cluster, instance.num_nodes)
    e = np.asarray(instance.earliest)[idx]
    l = np.asarray(instance.latest)[idx]
    s = np.asarray(instance.service)[idx]
    tau = instance.duration[np.ix_(idx, idx)]
    dist = instance.distance[np.ix_(idx, idx)]
    prize = np.where(instance.required, 0, instance.prizes) if len(idx) else np.zeros(0)

    min_wait = np.maximum(0, e[None, :] - l[:, None] - s[:, None] - tau)
    min_tw = np.maximum(0, e[:, None] + s[:, None] + tau - l[None, :])
    return dist + beta_wait * min_wait + beta_tw * min_tw - prize[None, :]


def build_neighbourhoods(
    instance: RoutingInstance,
    k: int = 40,
    beta_wait: float = 0.2,
    beta_tw: float = 1.0,
) -> dict[int, list[int]]:
    """Map each cluster node to its ``k`` most correlated other clusters,
    ordered by correlation and then by node id."""
    if k < 1:
        raise ValueError("neighbourhood size must be at least 1")

    first = instance.first_cluster
    nc = instance.num_clusters
    gamma = correlation_matrix(instance, beta_wait, beta_tw)
    size = min(k, nc - 1)
    out: dict[int, list[int]] = {}
    ids = np.arange(nc)
    for i in range(nc):
        row = gamma[i]
        others = ids[ids != i]
        # lexsort sorts by the last key first: correlation, then id.
        order = others[np.lexsort((others, row[others]))]
        out[first + i] = [first + int(j) for j in order[:size]]
    return out
