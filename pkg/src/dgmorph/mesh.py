"""Unstructured triangular meshes: construction, connectivity, geometry.

Conventions:
  * triangles are stored counter-clockwise (input is reoriented if needed);
  * every edge is stored once with a designated left element; the unit
    normal points out of the left element and the right element uses its
    negation;
  * boundary edges carry a tag from {land, flow, radiation}.

Mesh file format (ASCII, whitespace-delimited):
    line 1:      NV NT NB
    NV lines:    x y
    NT lines:    v0 v1 v2          (0-based vertex indices)
    NB lines:    va vb tag         (tag in {land, flow, radiation})
Boundary edges not listed default to the land tag.
"""

from dataclasses import dataclass, field

import numpy as np

INTERIOR = -1
LAND = 0
FLOW = 1
RADIATION = 2

TAG_NAMES = {"land": LAND, "flow": FLOW, "radiation": RADIATION}
TAG_LABELS = {v: k for k, v in TAG_NAMES.items()}

# local edge k of a CCW triangle runs from vertex k to vertex (k+1) % 3
_REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


class MeshError(ValueError):
    pass


def ref_edge_points(local_edge: int, t):
    """Reference coordinates of points at parameter t along a local edge."""
    t = np.asarray(t, dtype=float)
    a = _REF_VERTS[local_edge]
    b = _REF_VERTS[(local_edge + 1) % 3]
    return a[None, :] + np.outer(t, b - a)


@dataclass
class Mesh:
    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3) CCW
    edges: np.ndarray  # (ne, 2) vertex pairs, oriented with the left element
    edge_elems: np.ndarray  # (ne, 2) [left, right]; right == -1 on boundary
    edge_local: np.ndarray  # (ne, 2) local edge index in left/right element
    edge_normal: np.ndarray  # (ne, 2) unit, outward from left
    edge_length: np.ndarray  # (ne,)
    edge_tag: np.ndarray  # (ne,) INTERIOR or boundary tag
    areas: np.ndarray  # (nt,)
    diameters: np.ndarray  # (nt,) longest edge
    centroids: np.ndarray  # (nt, 2)
    elem_edges: np.ndarray  # (nt, 3) edge id across each local edge
    neighbors: np.ndarray  # (nt, 3) element across each local edge, -1 wall
    _reoriented: int = field(default=0, repr=False)

    @property
    def n_elements(self):
        return self.triangles.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    @property
    def boundary_edges(self):
        return np.nonzero(self.edge_elems[:, 1] < 0)[0]

    @property
    def interior_edges(self):
        return np.nonzero(self.edge_elems[:, 1] >= 0)[0]

    def edge_midpoints(self):
        v = self.vertices
        return 0.5 * (v[self.edges[:, 0]] + v[self.edges[:, 1]])

    def validate(self, tol=1e-12):
        """Check the structural invariants; raises MeshError on violation."""
        if np.any(self.areas <= 0.0):
            bad = int(np.argmin(self.areas))
            raise MeshError(f"non-positive area in triangle {bad}")
        # per-element closure: sum of length * outward normal vanishes
        nt = self.n_elements
        closure = np.zeros((nt, 2))
        for k in range(3):
            e = self.elem_edges[:, k]
            sign = np.where(self.edge_elems[e, 0] == np.arange(nt), 1.0, -1.0)
            closure += sign[:, None] * self.edge_normal[e] * self.edge_length[e][:, None]
        scale = np.maximum(self.diameters, 1e-300)
        rel = np.abs(closure).max(axis=1) / scale
        if np.any(rel > tol):
            bad = int(np.argmax(rel))
            raise MeshError(f"edge closure failed in triangle {bad} (rel {rel[bad]:.3e})")
        nrm = np.linalg.norm(self.edge_normal, axis=1)
        if np.any(np.abs(nrm - 1.0) > 1e-14):
            raise MeshError("non-unit edge normal")
        return self


def build_mesh(vertices, triangles, boundary_tags=None) -> Mesh:
    """Assemble connectivity and geometry from vertex/triangle arrays.

    boundary_tags: optional dict mapping frozenset({va, vb}) -> tag int.
    """
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64).copy()
    if triangles.ndim != 2 or triangles.shape[1] != 3:
        raise MeshError("triangles must be an (nt, 3) index array")
    nv = vertices.shape[0]
    if triangles.min(initial=0) < 0 or triangles.max(initial=-1) >= nv:
        raise MeshError("triangle vertex index out of range")

    v0 = vertices[triangles[:, 0]]
    v1 = vertices[triangles[:, 1]]
    v2 = vertices[triangles[:, 2]]
    twice_area = (v1[:, 0] - v0[:, 0]) * (v2[:, 1] - v0[:, 1]) - (
        v1[:, 1] - v0[:, 1]
    ) * (v2[:, 0] - v0[:, 0])
    flipped = twice_area < 0
    if np.any(flipped):
        triangles[flipped, 1], triangles[flipped, 2] = (
            triangles[flipped, 2].copy(),
            triangles[flipped, 1].copy(),
        )
        twice_area = np.abs(twice_area)
    areas = 0.5 * twice_area
    if np.any(areas <= 0.0):
        bad = int(np.argmin(areas))
        raise MeshError(f"zero-area triangle {bad}")

    nt = triangles.shape[0]
    edge_index = {}
    edges = []
    edge_elems = []
    edge_local = []
    for t in range(nt):
        for k in range(3):
            a = int(triangles[t, k])
            b = int(triangles[t, (k + 1) % 3])
            key = (a, b) if a < b else (b, a)
            if key not in edge_index:
                edge_index[key] = len(edges)
                edges.append((a, b))
                edge_elems.append([t, -1])
                edge_local.append([k, -1])
            else:
                e = edge_index[key]
                if edge_elems[e][1] != -1:
                    raise MeshError(
                        f"non-manifold edge {edges[e]} touched by a third triangle {t}"
                    )
                if edge_elems[e][0] == t:
                    raise MeshError(f"triangle {t} repeats edge {edges[e]}")
                if (a, b) == edges[e]:
                    # a conforming CCW mesh traverses a shared edge in opposite
                    # directions; same direction means an overlapping triangle
                    raise MeshError(
                        f"triangle {t} repeats edge {edges[e]} with the same "
                        "orientation (non-manifold overlap)"
                    )
                edge_elems[e][1] = t
                edge_local[e][1] = k

    edges = np.asarray(edges, dtype=np.int64)
    edge_elems = np.asarray(edge_elems, dtype=np.int64)
    edge_local = np.asarray(edge_local, dtype=np.int64)

    dv = vertices[edges[:, 1]] - vertices[edges[:, 0]]
    length = np.linalg.norm(dv, axis=1)
    if np.any(length <= 0.0):
        raise MeshError("degenerate (zero-length) edge")
    # CCW traversal a->b: outward normal of the left element is (dy, -dx)
    normal = np.column_stack([dv[:, 1], -dv[:, 0]]) / length[:, None]

    tag = np.full(edges.shape[0], INTERIOR, dtype=np.int64)
    bnd = edge_elems[:, 1] < 0
    tag[bnd] = LAND
    if boundary_tags:
        for key, t in boundary_tags.items():
            a, b = tuple(key)
            k = (a, b) if a < b else (b, a)
            if k not in edge_index:
                raise MeshError(f"tagged boundary edge {k} does not exist")
            e = edge_index[k]
            if not bnd[e]:
                raise MeshError(f"tagged edge {k} is interior")
            tag[e] = t

    elem_edges = np.full((nt, 3), -1, dtype=np.int64)
    neighbors = np.full((nt, 3), -1, dtype=np.int64)
    for e in range(edges.shape[0]):
        l, r = edge_elems[e]
        elem_edges[l, edge_local[e, 0]] = e
        if r >= 0:
            elem_edges[r, edge_local[e, 1]] = e
            neighbors[l, edge_local[e, 0]] = r
            neighbors[r, edge_local[e, 1]] = l

    pts = vertices[triangles]
    d01 = np.linalg.norm(pts[:, 0] - pts[:, 1], axis=1)
    d12 = np.linalg.norm(pts[:, 1] - pts[:, 2], axis=1)
    d20 = np.linalg.norm(pts[:, 2] - pts[:, 0], axis=1)
    diameters = np.maximum(np.maximum(d01, d12), d20)
    centroids = pts.mean(axis=1)

    mesh = Mesh(
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        edge_elems=edge_elems,
        edge_local=edge_local,
        edge_normal=normal,
        edge_length=length,
        edge_tag=tag,
        areas=areas,
        diameters=diameters,
        centroids=centroids,
        elem_edges=elem_edges,
        neighbors=neighbors,
        _reoriented=int(np.count_nonzero(flipped)),
    )
    return mesh.validate()


def build_strip_mesh(nx, ny, x_range, y_range) -> Mesh:
    """Structured grid of nx*ny rectangular cells, each cut into two
    triangles along the lower-left to upper-right diagonal. All boundary
    edges are tagged land."""
    nx, ny = int(nx), int(ny)
    if nx < 1 or ny < 1:
        raise MeshError("nx and ny must be >= 1")
    x0, x1 = map(float, x_range)
    y0, y1 = map(float, y_range)
    if not (x1 > x0 and y1 > y0):
        raise MeshError("degenerate coordinate range")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            a = vid(i, j)
            b = vid(i + 1, j)
            c = vid(i + 1, j + 1)
            d = vid(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    return build_mesh(vertices, np.asarray(tris))


def stitch_grids(blocks) -> Mesh:
    """Union of axis-aligned cell grids sharing conforming interface nodes.

    blocks: iterable of (xs, ys) 1-D coordinate arrays; duplicate vertices
    are merged by rounded coordinates, so interfaces must line up exactly.
    """
    vert_id = {}
    vertices = []
    tris = []

    def vid(x, y):
        key = (round(float(x), 12), round(float(y), 12))
        if key not in vert_id:
            vert_id[key] = len(vertices)
            vertices.append((x, y))
        return vert_id[key]

    for xs, ys in blocks:
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        for j in range(len(ys) - 1):
            for i in range(len(xs) - 1):
                a = vid(xs[i], ys[j])
                b = vid(xs[i + 1], ys[j])
                c = vid(xs[i + 1], ys[j + 1])
                d = vid(xs[i], ys[j + 1])
                tris.append((a, b, c))
                tris.append((a, c, d))
    return build_mesh(np.asarray(vertices, dtype=float), np.asarray(tris))


def read_mesh(path) -> Mesh:
    """Load a mesh from the documented ASCII format; validates on load."""
    with open(path) as f:
        tokens = f.read().split()
    it = iter(tokens)

    def take_int():
        return int(next(it))

    def take_float():
        return float(next(it))

    try:
        nv, nt, nb = take_int(), take_int(), take_int()
        vertices = np.array([[take_float(), take_float()] for _ in range(nv)])
        tris = np.array([[take_int(), take_int(), take_int()] for _ in range(nt)])
        tags = {}
        for _ in range(nb):
            a, b = take_int(), take_int()
            name = next(it)
            if name not in TAG_NAMES:
                raise MeshError(f"unknown boundary tag {name!r} on edge ({a}, {b})")
            tags[frozenset((a, b))] = TAG_NAMES[name]
    except StopIteration:
        raise MeshError(f"truncated mesh file {path}") from None
    if next(it, None) is not None:
        raise MeshError(f"trailing tokens in mesh file {path}")
    return build_mesh(vertices, tris, tags)


def write_mesh(mesh: Mesh, path):
    bnd = mesh.boundary_edges
    with open(path, "w") as f:
        f.write(f"{mesh.vertices.shape[0]} {mesh.n_elements} {bnd.size}\n")
        for x, y in mesh.vertices:
            f.write(f"{x:.17g} {y:.17g}\n")
        for a, b, c in mesh.triangles:
            f.write(f"{a} {b} {c}\n")
        for e in bnd:
            a, b = mesh.edges[e]
            f.write(f"{a} {b} {TAG_LABELS[int(mesh.edge_tag[e])]}\n")


def edge_geometry(mesh: Mesh, edge_id: int):
    """Normal, length and the trace-parameter map of one edge.

    Returns (normal, length, trace_map) where trace_map(t) gives the
    reference coordinates of the points at edge parameter t inside the
    left and right elements ((npts, 2) arrays; right is None on boundary
    edges). The two images coincide in physical space.
    """
    e = int(edge_id)
    if not 0 <= e < mesh.n_edges:
        raise MeshError(f"edge id {e} out of range")
    left_loc = int(mesh.edge_local[e, 0])
    right = int(mesh.edge_elems[e, 1])
    right_loc = int(mesh.edge_local[e, 1])

    def trace_map(t):
        refL = ref_edge_points(left_loc, t)
        refR = ref_edge_points(right_loc, 1.0 - np.asarray(t, dtype=float)) if right >= 0 else None
        return refL, refR

    return mesh.edge_normal[e].copy(), float(mesh.edge_length[e]), trace_map


def retag_boundary(mesh: Mesh, box, tag: int):
    """Retag boundary edges whose midpoints fall inside an axis-aligned box."""
    x0, x1, y0, y1 = box
    mids = mesh.edge_midpoints()
    sel = (
        (mesh.edge_elems[:, 1] < 0)
        & (mids[:, 0] >= x0)
        & (mids[:, 0] <= x1)
        & (mids[:, 1] >= y0)
        & (mids[:, 1] <= y1)
    )
    mesh.edge_tag[sel] = tag
    return int(np.count_nonzero(sel))
