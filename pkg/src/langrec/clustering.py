"""Pre-training language clustering.

Per-language mean embeddings are compared with a PLDA pair score turned
into a distance (negated LLR), then grouped by average-linkage
agglomerative clustering cut at a distance threshold. Unclustered
languages remain singleton clusters. Each cluster is named after its
lexicographically smallest language, and ties between merge candidates are
broken by the lexicographically smallest cluster-name pair so the result
is fully deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .plda import PldaModel, pair_score_matrix, to_pair_params
from .preproc import AffinePreproc


@dataclass(frozen=True)
class MergeStep:
    step: int
    left: str
    right: str
    distance: float


@dataclass(frozen=True)
class ClusterMap:
    """Partition of languages into named clusters with detection priors.

    p_c is cluster size over total languages; p_l_given_c is uniform within
    the cluster.
    """

    assignment: dict[str, str]
    cluster_languages: dict[str, tuple[str, ...]]
    p_c: dict[str, float]
    p_l_given_c: dict[str, float]
    threshold: float | None = None

    def __post_init__(self):
        langs = sorted(self.assignment)
        covered = sorted(l for langs_c in self.cluster_languages.values() for l in langs_c)
        if langs != covered:
            raise ValueError("cluster_languages must partition the assigned languages")
        for name, members in self.cluster_languages.items():
            for lang in members:
                if self.assignment[lang] != name:
                    raise ValueError(f"assignment of {lang!r} disagrees with cluster {name!r}")
        if abs(sum(self.p_c.values()) - 1.0) > 1e-12:
            raise ValueError("cluster priors must sum to 1")
        for name, members in self.cluster_languages.items():
            if abs(sum(self.p_l_given_c[l] for l in members) - 1.0) > 1e-12:
                raise ValueError(f"conditional priors in cluster {name!r} must sum to 1")

    @property
    def languages(self) -> tuple[str, ...]:
        return tuple(sorted(self.assignment))

    @property
    def cluster_names(self) -> tuple[str, ...]:
        return tuple(sorted(self.cluster_languages))

    def n_clusters(self) -> int:
        return len(self.cluster_languages)


def cluster_priors(
    cluster_languages: Mapping[str, Sequence[str]], threshold: float | None = None
) -> ClusterMap:
    """Build a ClusterMap with priors from a {name: languages} partition."""
    total = sum(len(m) for m in cluster_languages.values())
    if total == 0:
        raise ValueError("empty partition")
    assignment = {}
    clusters = {}
    p_c = {}
    p_lc = {}
    for name in sorted(cluster_languages):
        members = tuple(sorted(cluster_languages[name]))
        clusters[name] = members
        p_c[name] = len(members) / total
        for lang in members:
            assignment[lang] = name
            p_lc[lang] = 1.0 / len(members)
    return ClusterMap(
        assignment=assignment,
        cluster_languages=clusters,
        p_c=p_c,
        p_l_given_c=p_lc,
        threshold=threshold,
    )


def plda_distance_matrix(
    means: Mapping[str, np.ndarray], model: PldaModel, preproc: AffinePreproc
) -> tuple[list[str], np.ndarray]:
    """Negated pairwise PLDA scores between preprocessed language means.

    Returns the sorted language list and the symmetric distance matrix with
    a -inf sentinel on the (unused) diagonal.
    """
    langs = sorted(means)
    if len(langs) < 2:
        raise ValueError("need at least 2 languages")
    M = np.vstack([preproc.transform(np.asarray(means[l])[None, :])[0] for l in langs])
    params = to_pair_params(model)
    scores = pair_score_matrix(params, M, M)
    dist = -0.5 * (scores + scores.T)
    np.fill_diagonal(dist, -np.inf)
    return langs, dist


def linkage_merges(labels: Sequence[str], dist: np.ndarray) -> list[MergeStep]:
    """Full average-linkage merge sequence down to a single cluster.

    Linkage between clusters is the average of the original pairwise
    distances across them. Cluster names are their lexicographically
    smallest member.
    """
    labels = list(labels)
    n = len(labels)
    dist = np.asarray(dist, dtype=np.float64)
    if dist.shape != (n, n):
        raise ValueError("distance matrix shape disagrees with labels")
    if n >= 2:
        off = ~np.eye(n, dtype=bool)
        if np.abs(dist[off] - dist.T[off]).max() > 1e-12:
            raise ValueError("distance matrix must be symmetric")

    clusters: list[list[int]] = [[i] for i in range(n)]

    def name(members):
        return min(labels[i] for i in members)

    def linkage(a, b):
        return float(np.mean(dist[np.ix_(a, b)]))

    merges = []
    step = 0
    while len(clusters) > 1:
        best = None
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                d = linkage(clusters[i], clusters[j])
                pair = tuple(sorted((name(clusters[i]), name(clusters[j]))))
                key = (d, pair)
                if best is None or key < best[0]:
                    best = (key, i, j)
        (d, pair), i, j = best
        merges.append(MergeStep(step=step, left=pair[0], right=pair[1], distance=d))
        merged = clusters[i] + clusters[j]
        clusters = [c for idx, c in enumerate(clusters) if idx not in (i, j)]
        clusters.append(merged)
        step += 1
    return merges


def agglomerate(labels: Sequence[str], dist: np.ndarray, threshold: float) -> ClusterMap:
    """Average-linkage clustering cut where the smallest linkage exceeds threshold."""
    merges = linkage_merges(labels, dist)
    parent = {lab: lab for lab in labels}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for step in merges:
        if step.distance > threshold:
            break
        a, b = find(step.left), find(step.right)
        root = min(a, b)
        parent[a] = root
        parent[b] = root

    groups: dict[str, list[str]] = {}
    for lab in labels:
        groups.setdefault(find(lab), []).append(lab)
    return cluster_priors({name: tuple(sorted(m)) for name, m in groups.items()}, threshold)


def merges_to_tsv(merges: Sequence[MergeStep]) -> str:
    lines = ["step\tleft\tright\tdistance"]
    for m in merges:
        lines.append(f"{m.step}\t{m.left}\t{m.right}\t{'%.17g' % m.distance}")
    return "\n".join(lines) + "\n"


def cluster_map_to_json(cmap: ClusterMap) -> str:
    doc = {
        "clusters": {name: list(cmap.cluster_languages[name]) for name in cmap.cluster_names},
        "threshold": cmap.threshold,
    }
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def cluster_map_from_json(text: str) -> ClusterMap:
    doc = json.loads(text)
    if "clusters" not in doc:
        raise ValueError("cluster map JSON lacks 'clusters'")
    return cluster_priors(
        {name: tuple(langs) for name, langs in doc["clusters"].items()},
        doc.get("threshold"),
    )
