## services/scene/clustering.py

"""
DBSCAN and the cell-local clustering of stuff classes into instances.
"""
import logging
from typing import List

import numpy as np
from scipy.spatial import cKDTree

from services.scene.types import Instance, Provenance

log = logging.getLogger(__name__)

NOISE = -1


def dbscan(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """
    Label each point with a cluster id (0, 1, ...) or NOISE.

    A point is core when at least `min_pts` points, itself included, lie
    within distance `eps`. Points are scanned in index order, so cluster ids
    follow the lowest core index of each cluster and a border point reachable
    from several clusters keeps the lowest id.
    """
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    if min_pts < 1:
        raise ValueError(f"min_pts must be >= 1, got {min_pts}")

    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return labels

    neighbors = cKDTree(points).query_ball_point(points, r=eps, return_sorted=True)
    core = np.fromiter((len(nb) >= min_pts for nb in neighbors), dtype=bool, count=n)

    cluster = 0
    for seed in range(n):
        if labels[seed] != NOISE or not core[seed]:
            continue
        labels[seed] = cluster
        frontier = [seed]
        while frontier:
            p = frontier.pop()
            for q in neighbors[p]:
                if labels[q] != NOISE:
                    continue
                labels[q] = cluster
                if core[q]:
                    frontier.append(q)
        cluster += 1
    return labels


def cluster_stuff(
    points: np.ndarray,
    class_name: str,
    eps: float,
    min_cluster_points: int,
    id_prefix: str,
    min_pts: int = 4,
) -> List[Instance]:
    """
    Cluster one class's cell-local stuff points into instances.

    `min_pts` is the DBSCAN core density; clusters smaller than `min_cluster_points` are dropped; ids are
    `<id_prefix>/<class>/<k>` with k counting retained clusters.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 6)
    if len(points) == 0:
        return []

    labels = dbscan(points[:, :3], eps, min_pts)
    instances = []
    for label in range(labels.max() + 1):
        members = points[labels == label]
        if len(members) < min_cluster_points:
            continue
        instances.append(Instance(
            id=f"{id_prefix}/{class_name}/{len(instances)}",
            class_name=class_name,
            points=members,
            provenance=Provenance.CLUSTERED,
        ))
    log.debug(f"[ CLUSTER ] {id_prefix}/{class_name}: {len(instances)} instances from {len(points)} points")
    return instances
