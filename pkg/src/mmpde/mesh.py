"""Simplicial mesh container with connectivity helpers."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations

import numpy as np


class MeshError(ValueError):
    """Raised for structurally invalid meshes."""


@dataclass(frozen=True, eq=False)
class SimplicialMesh:
    """An m-simplicial mesh embedded in R^d.

    ``vertices`` has shape (n_vertices, d); ``elements`` has shape
    (n_elements, m + 1) and holds vertex indices.
    """

    vertices: np.ndarray
    elements: np.ndarray

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=float)
        elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        if vertices.ndim != 2 or elements.ndim != 2:
            raise MeshError("vertices and elements must be 2-D arrays")
        if len(elements) == 0 or len(vertices) == 0:
            raise MeshError("mesh is empty")
        m = elements.shape[1] - 1
        d = vertices.shape[1]
        if not 1 <= m <= d <= 3:
            raise MeshError(f"unsupported (m, d) = ({m}, {d}); need 1 <= m <= d <= 3")
        if elements.min() < 0 or elements.max() >= len(vertices):
            raise MeshError("element references a vertex index out of range")
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "elements", elements)

    @property
    def m(self) -> int:
        return self.elements.shape[1] - 1

    @property
    def d(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def with_vertices(self, vertices: np.ndarray) -> "SimplicialMesh":
        """Same connectivity, new coordinates; connectivity caches are shared."""
        vertices = np.asarray(vertices, dtype=float)
        if vertices.shape != self.vertices.shape:
            raise MeshError("vertex array shape mismatch")
        new = SimplicialMesh(vertices, self.elements)
        for key in ("edges", "neighbors", "_boundary_facet_data", "boundary_vertices", "vertex_elements",
                    "consistently_oriented"):
            if key in self.__dict__:
                new.__dict__[key] = self.__dict__[key]
        return new

    def memo(self, key: str, build):
        """Cache ``build()`` on this mesh; meshes are treated as immutable snapshots."""
        try:
            return self.__dict__[key]
        except KeyError:
            value = self.__dict__[key] = build()
            return value

    def edge_matrices(self) -> np.ndarray:
        """(n_elements, d, m) stack of edge matrices."""
        x = self.vertices[self.elements]
        return np.transpose(x[:, 1:, :] - x[:, :1, :], (0, 2, 1))

    @cached_property
    def consistently_oriented(self) -> bool:
        """True when no directed edge of a triangle mesh is used twice."""
        tri = self.elements
        directed = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        key = directed[:, 0] * self.n_vertices + directed[:, 1]
        return bool(len(np.unique(key)) == len(key))

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges, sorted, shape (n_edges, 2)."""
        pairs = [self.elements[:, [a, b]] for a, b in combinations(range(self.m + 1), 2)]
        e = np.sort(np.concatenate(pairs), axis=1)
        return np.unique(e, axis=0)

    @cached_property
    def neighbors(self) -> list[np.ndarray]:
        """Vertex one-ring neighbors (by shared edge)."""
        nb = [[] for _ in range(self.n_vertices)]
        for a, b in self.edges:
            nb[a].append(b)
            nb[b].append(a)
        return [np.array(sorted(v), dtype=np.int64) for v in nb]

    @cached_property
    def vertex_elements(self) -> list[np.ndarray]:
        """Element patch of each vertex."""
        patch = [[] for _ in range(self.n_vertices)]
        for k, elem in enumerate(self.elements):
            for v in elem:
                patch[v].append(k)
        return [np.array(p, dtype=np.int64) for p in patch]

    @cached_property
    def _boundary_facet_data(self) -> tuple[np.ndarray, np.ndarray]:
        m = self.m
        facets, opposite = [], []
        for j in range(m + 1):
            cols = [c for c in range(m + 1) if c != j]
            facets.append(self.elements[:, cols])
            opposite.append(self.elements[:, j])
        f = np.concatenate(facets)
        opp = np.concatenate(opposite)
        _, first, counts = np.unique(np.sort(f, axis=1), axis=0, return_index=True, return_counts=True)
        keep = np.sort(first[counts == 1])
        return f[keep], opp[keep]

    @property
    def boundary_facets(self) -> np.ndarray:
        """Facets ((m-1)-simplices) that belong to exactly one element."""
        return self._boundary_facet_data[0]

    @property
    def boundary_opposite(self) -> np.ndarray:
        """For each boundary facet, the vertex of its element not on the facet."""
        return self._boundary_facet_data[1]

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_facets.ravel()] = True
        return mask

    def edge_lengths(self) -> np.ndarray:
        e = self.edges
        return np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)

    def local_edge_length(self) -> np.ndarray:
        """Minimum incident edge length per vertex."""
        e = self.edges
        lengths = self.edge_lengths()
        out = np.full(self.n_vertices, np.inf)
        np.minimum.at(out, e[:, 0], lengths)
        np.minimum.at(out, e[:, 1], lengths)
        return out

    def diameter(self) -> float:
        x = self.vertices
        return float(np.linalg.norm(x.max(axis=0) - x.min(axis=0)))
