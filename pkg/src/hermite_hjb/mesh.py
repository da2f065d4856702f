"""Conforming triangulations of rectangles with newest-vertex bisection.

Triangles are stored as vertex triples ``(v0, v1, v2)`` in counter-clockwise
order, where ``v0`` is the newest vertex and ``(v1, v2)`` is the refinement
edge.  Meshes are immutable; refinement returns a new :class:`Mesh`.
"""
from functools import cached_property

import numpy as np


class MeshError(ValueError):
    pass


class Mesh:
    """Triangulation of an axis-aligned rectangle.

    Parameters
    ----------
    vertices : (nv, 2) array
    triangles : (nt, 3) int array
        Counter-clockwise triples, newest vertex first.
    bbox : tuple
        ``(xmin, xmax, ymin, ymax)`` of the domain.
    parent : (nt,) int array, optional
        Index of the parent element in the previous mesh (-1 for roots).
    generation : (nt,) int array, optional
        Number of bisections separating the element from its root.
    """

    def __init__(self, vertices, triangles, bbox, parent=None, generation=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.bbox = tuple(float(b) for b in bbox)
        nt = len(self.triangles)
        self.parent = np.full(nt, -1, dtype=np.int64) if parent is None else np.asarray(parent, dtype=np.int64)
        self.generation = np.zeros(nt, dtype=np.int64) if generation is None else np.asarray(generation, dtype=np.int64)
        for arr in (self.vertices, self.triangles, self.parent, self.generation):
            arr.setflags(write=False)

    def __repr__(self):
        return f"Mesh(n_vertices={self.n_vertices}, n_triangles={self.n_triangles}, bbox={self.bbox})"

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    # -- geometry ---------------------------------------------------------
    @cached_property
    def signed_areas(self):
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def areas(self):
        return np.abs(self.signed_areas)

    @cached_property
    def barycenters(self):
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def diameters(self):
        """Longest edge length of every element."""
        p = self.vertices[self.triangles]
        lengths = np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)
        return lengths.max(axis=1)

    @cached_property
    def min_angles(self):
        p = self.vertices[self.triangles]
        out = np.full(self.n_triangles, np.pi)
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cosang = (a * b).sum(1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            out = np.minimum(out, np.arccos(np.clip(cosang, -1.0, 1.0)))
        return out

    # -- topology ---------------------------------------------------------
    @cached_property
    def _edge_tables(self):
        t = self.triangles
        # local edge i is opposite local vertex i
        local = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1)
        keys = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        tri_edges = inverse.reshape(-1, 3)
        edge_elements = np.full((len(edges), 2), -1, dtype=np.int64)
        elem_ids = np.repeat(np.arange(len(t)), 3)
        local_ids = np.tile(np.arange(3), len(t))
        edge_local = np.full((len(edges), 2), -1, dtype=np.int64)
        counts = np.zeros(len(edges), dtype=np.int64)
        # element ids ascend, so the first slot is the lower id (T+)
        for k, e in enumerate(inverse):
            c = counts[e]
            if c >= 2:
                raise MeshError(f"edge {edges[e]} shared by more than two triangles")
            edge_elements[e, c] = elem_ids[k]
            edge_local[e, c] = local_ids[k]
            counts[e] = c + 1
        return edges, tri_edges, edge_elements, edge_local

    @property
    def edges(self):
        return self._edge_tables[0]

    @property
    def triangle_edges(self):
        """(nt, 3) edge index of the edge opposite each local vertex."""
        return self._edge_tables[1]

    @property
    def edge_elements(self):
        """(ne, 2) adjacent elements, lower id first, -1 if absent."""
        return self._edge_tables[2]

    @property
    def edge_local_index(self):
        return self._edge_tables[3]

    @cached_property
    def interior_faces(self):
        return np.flatnonzero(self.edge_elements[:, 1] >= 0)

    @cached_property
    def boundary_faces(self):
        return np.flatnonzero(self.edge_elements[:, 1] < 0)

    @cached_property
    def edge_normals(self):
        """Unit normal of every edge, outward from its first element T+."""
        el = self.edge_elements[:, 0]
        loc = self.edge_local_index[:, 0]
        t = self.triangles[el]
        a = self.vertices[t[np.arange(len(el)), (loc + 1) % 3]]
        b = self.vertices[t[np.arange(len(el)), (loc + 2) % 3]]
        d = b - a
        n = np.column_stack([d[:, 1], -d[:, 0]])
        return n / np.linalg.norm(n, axis=1)[:, None]

    @cached_property
    def edge_lengths(self):
        e = self.edges
        return np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)

    @cached_property
    def boundary_vertex_mask(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.edges[self.boundary_faces].ravel()] = True
        return mask

    @cached_property
    def vertex_patches(self):
        """List of element-id arrays touching each vertex (ascending)."""
        order = np.argsort(self.triangles.ravel(), kind="stable")
        elems = order // 3
        counts = np.bincount(self.triangles.ravel(), minlength=self.n_vertices)
        return np.split(elems, np.cumsum(counts)[:-1])

    def on_boundary(self, points, tol=1e-12):
        x0, x1, y0, y1 = self.bbox
        p = np.atleast_2d(points)
        return (np.abs(p[:, 0] - x0) < tol) | (np.abs(p[:, 0] - x1) < tol) | \
               (np.abs(p[:, 1] - y0) < tol) | (np.abs(p[:, 1] - y1) < tol)

    def validate(self):
        """Check orientation and conformity; raise :class:`MeshError` on failure."""
        if np.any(self.signed_areas <= 0):
            bad = np.flatnonzero(self.signed_areas <= 0)[:5]
            raise MeshError(f"non-positive orientation in elements {bad.tolist()}")
        bnd = self.boundary_faces
        mids = self.vertices[self.edges[bnd]].mean(axis=1)
        ends = self.vertices[self.edges[bnd]].reshape(-1, 2)
        if not (self.on_boundary(mids).all() and self.on_boundary(ends).all()):
            raise MeshError("single-sided edge inside the domain (hanging vertex)")
        used = np.zeros(self.n_vertices, dtype=bool)
        used[self.triangles.ravel()] = True
        if not used.all():
            raise MeshError("unreferenced vertices")
        return True

    # -- export -----------------------------------------------------------
    def to_vtk(self, path, point_data=None, title="hermite_hjb mesh"):
        """Write a legacy ASCII VTK unstructured grid."""
        lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
                 f"POINTS {self.n_vertices} double"]
        lines += [f"{x:.17g} {y:.17g} 0" for x, y in self.vertices]
        lines.append(f"CELLS {self.n_triangles} {4 * self.n_triangles}")
        lines += [f"3 {a} {b} {c}" for a, b, c in self.triangles]
        lines.append(f"CELL_TYPES {self.n_triangles}")
        lines += ["5"] * self.n_triangles
        if point_data:
            lines.append(f"POINT_DATA {self.n_vertices}")
            for name, values in point_data.items():
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [f"{v:.17g}" for v in np.asarray(values, dtype=float)]
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    def save(self, path):
        """Plain-text format::

            hermite_hjb-mesh 1
            bbox xmin xmax ymin ymax
            vertices N
            x y            (N lines)
            triangles M
            v0 v1 v2 parent generation   (M lines; v0 newest vertex)
        """
        lines = ["hermite_hjb-mesh 1", "bbox " + " ".join(f"{b:.17g}" for b in self.bbox),
                 f"vertices {self.n_vertices}"]
        lines += [f"{x:.17g} {y:.17g}" for x, y in self.vertices]
        lines.append(f"triangles {self.n_triangles}")
        lines += [f"{a} {b} {c} {p} {g}" for (a, b, c), p, g in
                  zip(self.triangles, self.parent, self.generation)]
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            tokens = [ln.split() for ln in fh if ln.strip()]
        if tokens[0][0] != "hermite_hjb-mesh":
            raise MeshError(f"{path}: not a mesh file")
        bbox = [float(v) for v in tokens[1][1:]]
        nv = int(tokens[2][1])
        verts = np.array(tokens[3:3 + nv], dtype=float)
        nt = int(tokens[3 + nv][1])
        tri = np.array(tokens[4 + nv:4 + nv + nt], dtype=np.int64)
        return cls(verts, tri[:, :3], bbox, parent=tri[:, 3], generation=tri[:, 4])


def uniform_rect_mesh(bbox, h0):
    """Split every ``h0 x h0`` cell of ``bbox`` along its SW-NE diagonal.

    The diagonal is the refinement edge of both halves, so newest-vertex
    bisection started from this mesh always terminates.
    """
    x0, x1, y0, y1 = (float(b) for b in bbox)
    if not (x1 > x0 and y1 > y0) or h0 <= 0:
        raise ValueError(f"degenerate box {bbox} or spacing {h0}")
    nx = (x1 - x0) / h0
    ny = (y1 - y0) / h0
    if abs(nx - round(nx)) > 1e-9 * max(nx, 1) or abs(ny - round(ny)) > 1e-9 * max(ny, 1):
        raise ValueError(f"spacing {h0} does not divide the box {bbox}")
    nx, ny = int(round(nx)), int(round(ny))
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    verts = np.column_stack([X.ravel(), Y.ravel()])
    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    a = (j * (nx + 1) + i).ravel()
    b = a + 1
    c = a + nx + 2
    d = a + nx + 1
    # right angle first: (b, c, a) and (d, a, c), both counter-clockwise
    tri = np.empty((2 * len(a), 3), dtype=np.int64)
    tri[0::2] = np.column_stack([b, c, a])
    tri[1::2] = np.column_stack([d, a, c])
    return Mesh(verts, tri, (x0, x1, y0, y1))


def bisect(mesh, marked):
    """Newest-vertex bisection of ``marked`` elements with conforming closure.

    Children replace their parent in place (first child, second child), so
    element ids stay ordered by creation.  New vertices are appended in
    ascending order of the edge they split.
    """
    marked = np.unique(np.asarray(list(marked) if not isinstance(marked, np.ndarray) else marked,
                                  dtype=np.int64))
    if marked.size == 0:
        return mesh
    if marked.min() < 0 or marked.max() >= mesh.n_triangles:
        raise IndexError("marked element id out of range")
    t2e = mesh.triangle_edges
    cut = np.zeros(len(mesh.edges), dtype=bool)
    cut[t2e[marked, 0]] = True
    while True:
        need = cut[t2e].any(axis=1) & ~cut[t2e[:, 0]]
        if not need.any():
            break
        cut[t2e[need, 0]] = True

    cut_ids = np.flatnonzero(cut)
    midpoint = np.full(len(mesh.edges), -1, dtype=np.int64)
    midpoint[cut_ids] = mesh.n_vertices + np.arange(len(cut_ids))
    e = mesh.edges[cut_ids]
    verts = np.vstack([mesh.vertices, 0.5 * (mesh.vertices[e[:, 0]] + mesh.vertices[e[:, 1]])])

    tris, parents, gens = [], [], []
    for k, (v0, v1, v2) in enumerate(mesh.triangles):
        g = mesh.generation[k]
        e_ref, e_1, e_2 = t2e[k]
        if not cut[e_ref]:
            tris.append((v0, v1, v2))
            parents.append(k)
            gens.append(g)
            continue
        m = midpoint[e_ref]
        # (m, v0, v1) has refinement edge (v0, v1) = local edge 2 of the parent;
        # (m, v2, v0) has refinement edge (v2, v0) = local edge 1.
        for (a, b), edge in (((v0, v1), e_2), ((v2, v0), e_1)):
            if cut[edge]:
                m2 = midpoint[edge]
                tris += [(m2, m, a), (m2, b, m)]
                parents += [k, k]
                gens += [g + 2, g + 2]
            else:
                tris.append((m, a, b))
                parents.append(k)
                gens.append(g + 1)
    return Mesh(verts, np.array(tris, dtype=np.int64), mesh.bbox,
                parent=np.array(parents), generation=np.array(gens))


def mark_graded(mesh, C):
    """Elements with ``|T| > C (|x_T| - 1/2)^2 / #T``, sorted ascending."""
    if C <= 0:
        raise ValueError("grading constant must be positive")
    dist = np.linalg.norm(mesh.barycenters, axis=1) - 0.5
    return np.flatnonzero(mesh.areas > C * dist**2 / mesh.n_triangles)


def graded_lineage(levels, C=1000.0, bbox=(-1.0, 1.0, -1.0, 1.0), h0=1.0 / 8.0):
    """Meshes ``[T_0, ..., T_levels]`` with one mark+bisect pass per level."""
    meshes = [uniform_rect_mesh(bbox, h0)]
    for _ in range(levels):
        meshes.append(bisect(meshes[-1], mark_graded(meshes[-1], C)))
    return meshes
