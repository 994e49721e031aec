"""Hierarchical Navigable Small World index over unit vectors (cosine similarity).

Follows Malkov & Yashunin: exponentially distributed node levels, greedy
descent through the upper layers, beam search with ``ef`` at the target
layer, and the neighbor-selection heuristic for both new links and pruning.
Nodes are inserted in ascending id order with a seeded RNG, so two builds
from the same input produce identical link lists.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class HnswParams:
    m: int = 16
    ef_construction: int = 200
    ef_search: int = 100
    seed: int = 42

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("m must be >= 2")
        if self.ef_construction < 1 or self.ef_search < 1:
            raise ValueError("ef values must be >= 1")


def _cosines(matrix: np.ndarray, q: np.ndarray) -> np.ndarray:
    # Row-wise reduction: unlike BLAS gemv, identical rows give bit-identical scores, so ties stay ties.
    return np.multiply(matrix, q, dtype=np.float64).sum(axis=1)


@dataclass(frozen=True)
class SemanticScore:
    node_id: str
    s_sem: float


class HnswIndex:
    def __init__(self, dimension: int, params: HnswParams | None = None):
        self.dimension = dimension
        self.params = params or HnswParams()
        self.ids: list[str] = []
        self.vectors = np.zeros((0, dimension), dtype=np.float32)
        self.levels: list[int] = []
        # links[layer][node] -> neighbor list; layer dicts only hold nodes at or above that layer.
        self.links: list[dict[int, list[int]]] = []
        self.entry: int | None = None

    def __len__(self) -> int:
        return len(self.ids)

    # ------------------------------------------------------------------ build

    @classmethod
    def build(
        cls,
        ids: Sequence[str],
        vectors: np.ndarray,
        params: HnswParams | None = None,
    ) -> "HnswIndex":
        vectors = np.asarray(vectors, dtype=np.float32)
        if vectors.ndim != 2 or len(ids) != len(vectors):
            raise ValueError("ids and vectors must align and vectors must be 2-D")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate ids")
        index = cls(vectors.shape[1] if len(vectors) else 0, params)
        order = sorted(range(len(ids)), key=lambda i: ids[i])
        index.ids = [ids[i] for i in order]
        index.vectors = vectors[order] if len(order) else np.zeros((0, index.dimension), dtype=np.float32)
        rng = np.random.default_rng(index.params.seed)
        ml = 1.0 / math.log(index.params.m)
        for node in range(len(order)):
            level = int(-math.log(1.0 - rng.random()) * ml)
            index._insert(node, level)
        return index

    def _dist(self, q: np.ndarray, nodes: list[int]) -> np.ndarray:
        return 1.0 - self.vectors[nodes] @ q

    def _greedy(self, q: np.ndarray, ep: int, layer: int) -> int:
        cur = ep
        cur_d = float(1.0 - self.vectors[cur] @ q)
        links = self.links[layer]
        changed = True
        while changed:
            changed = False
            nbrs = links[cur]
            if not nbrs:
                break
            dists = self._dist(q, nbrs)
            j = int(np.argmin(dists))
            if dists[j] < cur_d:
                cur, cur_d = nbrs[j], float(dists[j])
                changed = True
        return cur

    def _search_layer(self, q: np.ndarray, entry_points: list[int], ef: int, layer: int) -> list[tuple[float, int]]:
        """Beam search; returns (distance, node) pairs sorted ascending."""
        links = self.links[layer]
        visited = set(entry_points)
        d0 = self._dist(q, entry_points)
        candidates = [(float(d), n) for d, n in zip(d0, entry_points)]
        heapq.heapify(candidates)
        results = [(-d, n) for d, n in candidates]  # max-heap on distance
        heapq.heapify(results)
        while len(results) > ef:
            heapq.heappop(results)
        while candidates:
            d, c = heapq.heappop(candidates)
            if d > -results[0][0]:
                break
            fresh = [n for n in links[c] if n not in visited]
            if not fresh:
                continue
            visited.update(fresh)
            for dist, n in zip(self._dist(q, fresh).tolist(), fresh):
                if len(results) < ef or dist < -results[0][0]:
                    heapq.heappush(candidates, (dist, n))
                    heapq.heappush(results, (-dist, n))
                    if len(results) > ef:
                        heapq.heappop(results)
        return sorted((-nd, n) for nd, n in results)

    def _select(self, candidates: list[tuple[float, int]], m: int) -> list[int]:
        """Neighbor-selection heuristic with pruned-connection backfill."""
        if len(candidates) <= m:
            return [n for _, n in candidates]
        nodes = [n for _, n in candidates]
        sub = self.vectors[nodes]
        pair = 1.0 - sub @ sub.T
        # nearest kept neighbor per candidate, updated as neighbors are kept
        closest = np.full(len(nodes), np.inf, dtype=pair.dtype)
        chosen: list[int] = []
        pruned: list[int] = []
        for i, (d, _) in enumerate(candidates):
            if len(chosen) >= m:
                break
            # Keep i only if it is closer to the query than to every kept neighbor.
            if closest[i] > d:
                chosen.append(i)
                np.minimum(closest, pair[:, i], out=closest)
            else:
                pruned.append(i)
        for i in pruned:
            if len(chosen) >= m:
                break
            chosen.append(i)
        return [nodes[i] for i in chosen]

    def _insert(self, node: int, level: int) -> None:
        q = self.vectors[node]
        self.levels.append(level)
        while len(self.links) <= level:
            self.links.append({})
        for layer in range(level + 1):
            self.links[layer][node] = []
        if self.entry is None:
            self.entry = node
            return
        ep = self.entry
        top = self.levels[ep]
        for layer in range(top, level, -1):
            ep = self._greedy(q, ep, layer)
        eps = [ep]
        for layer in range(min(top, level), -1, -1):
            found = self._search_layer(q, eps, self.params.ef_construction, layer)
            m_max = self.params.m * 2 if layer == 0 else self.params.m
            chosen = self._select(found, self.params.m)
            self.links[layer][node] = chosen
            for nb in chosen:
                nb_links = self.links[layer][nb]
                nb_links.append(node)
                if len(nb_links) > m_max:
                    dists = self._dist(self.vectors[nb], nb_links)
                    ranked = sorted(zip(dists.tolist(), nb_links))
                    self.links[layer][nb] = self._select(ranked, m_max)
            eps = [n for _, n in found]
        if level > top:
            self.entry = node

    # ----------------------------------------------------------------- query

    def search(self, query: np.ndarray, k: int, ef_search: int | None = None) -> list[SemanticScore]:
        if k < 1:
            raise ValueError("k must be >= 1")
        q = np.asarray(query, dtype=np.float32).reshape(-1)
        if len(self.ids) == 0:
            return []
        if q.shape[0] != self.dimension:
            raise ValueError(f"query dimension {q.shape[0]} != index dimension {self.dimension}")
        ef = max(ef_search or self.params.ef_search, k)
        ep = self.entry
        for layer in range(self.levels[ep], 0, -1):
            ep = self._greedy(q, ep, layer)
        found = self._search_layer(q, [ep], ef, 0)
        nodes = [n for _, n in found]
        sims = _cosines(self.vectors[nodes], q).tolist()
        ranked = sorted(zip(sims, nodes), key=lambda sn: (-sn[0], self.ids[sn[1]]))
        return [SemanticScore(self.ids[n], float(s)) for s, n in ranked[:k]]

    def exact_search(self, query: np.ndarray, k: int) -> list[SemanticScore]:
        """Linear scan; used for verification and tiny indices."""
        if len(self.ids) == 0:
            return []
        sims = _cosines(self.vectors, np.asarray(query, dtype=np.float32).reshape(-1)).tolist()
        ranked = sorted(range(len(sims)), key=lambda i: (-sims[i], self.ids[i]))
        return [SemanticScore(self.ids[i], float(sims[i])) for i in ranked[:k]]

    def vector(self, node_id: str) -> np.ndarray:
        return self.vectors[self._position(node_id)]

    def _position(self, node_id: str) -> int:
        if not hasattr(self, "_pos"):
            self._pos = {nid: i for i, nid in enumerate(self.ids)}
        return self._pos[node_id]

    def __contains__(self, node_id: object) -> bool:
        try:
            self._position(node_id)  # type: ignore[arg-type]
        except KeyError:
            return False
        return True

    def neighbor_lists(self) -> list[dict[str, list[str]]]:
        return [
            {self.ids[n]: [self.ids[x] for x in nbrs] for n, nbrs in sorted(layer.items())}
            for layer in self.links
        ]

    # ----------------------------------------------------------- persistence

    def save(self, path: str | Path) -> None:
        arrays: dict[str, np.ndarray] = {
            "ids": np.array(self.ids, dtype=str),
            "vectors": self.vectors,
            "levels": np.array(self.levels, dtype=np.int32),
            "params": np.array([self.params.m, self.params.ef_construction, self.params.ef_search, self.params.seed]),
            "entry": np.array([-1 if self.entry is None else self.entry]),
            "dimension": np.array([self.dimension]),
        }
        for layer, links in enumerate(self.links):
            nodes = sorted(links)
            indptr = np.cumsum([0] + [len(links[n]) for n in nodes])
            arrays[f"layer{layer}_nodes"] = np.array(nodes, dtype=np.int32)
            arrays[f"layer{layer}_indptr"] = indptr.astype(np.int64)
            arrays[f"layer{layer}_indices"] = np.array([x for n in nodes for x in links[n]], dtype=np.int32)
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "HnswIndex":
        with np.load(path, allow_pickle=False) as data:
            m, efc, efs, seed = (int(x) for x in data["params"])
            index = cls(int(data["dimension"][0]), HnswParams(m, efc, efs, seed))
            index.ids = [str(x) for x in data["ids"]]
            index.vectors = data["vectors"].astype(np.float32)
            index.levels = [int(x) for x in data["levels"]]
            entry = int(data["entry"][0])
            index.entry = None if entry < 0 else entry
            layer = 0
            while f"layer{layer}_nodes" in data:
                nodes = data[f"layer{layer}_nodes"].tolist()
                indptr = data[f"layer{layer}_indptr"].tolist()
                indices = data[f"layer{layer}_indices"].tolist()
                index.links.append({n: indices[indptr[i] : indptr[i + 1]] for i, n in enumerate(nodes)})
                layer += 1
        return index
