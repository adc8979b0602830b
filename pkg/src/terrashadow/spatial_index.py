"""Query-only STR-packed R-tree and the 2-D predicates used for feature attribution.

Boxes are ``(min_x, min_y, max_x, max_y)``. Terrain code stores
``(min_lat, min_lon, max_lat, max_lon)``, so "x" is latitude throughout.
Distances are plain Cartesian in whatever units the boxes use; for
terrain that means raw degrees, anisotropy included.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Hashable, Iterable, Iterator, Sequence, Union

import numpy as np

from .errors import InvalidInputError

BBox = tuple[float, float, float, float]

DEFAULT_NODE_CAPACITY = 16


def _union(boxes: Iterable[BBox]) -> BBox:
    it = iter(boxes)
    x0, y0, x1, y1 = next(it)
    for a, b, c, d in it:
        if a < x0:
            x0 = a
        if b < y0:
            y0 = b
        if c > x1:
            x1 = c
        if d > y1:
            y1 = d
    return (x0, y0, x1, y1)


def bbox_intersects(a: BBox, b: BBox) -> bool:
    return a[0] <= b[2] and b[0] <= a[2] and a[1] <= b[3] and b[1] <= a[3]


def bbox_contains(outer: BBox, inner: BBox) -> bool:
    return outer[0] <= inner[0] and outer[1] <= inner[1] and inner[2] <= outer[2] and inner[3] <= outer[3]


class _Node:
    __slots__ = ("bbox", "children", "items")

    def __init__(self, bbox: BBox, children: list["_Node"] | None, items: list[int] | None):
        self.bbox = bbox
        self.children = children
        self.items = items

    @property
    def is_leaf(self) -> bool:
        return self.children is None


def _str_pack(boxes: np.ndarray, capacity: int) -> list[list[int]]:
    """Group row indices of ``boxes`` into runs of at most ``capacity``.

    Sort-tile-recursive: order by x-center, cut into ceil(sqrt(P)) vertical
    slices of ``S * capacity`` entries, order each slice by y-center and
    cut it into runs. Stable sorts keep equal keys in input order.
    """
    n = len(boxes)
    leaves = math.ceil(n / capacity)
    slices = math.ceil(math.sqrt(leaves))
    slice_size = slices * capacity
    cx = (boxes[:, 0] + boxes[:, 2]) / 2.0
    cy = (boxes[:, 1] + boxes[:, 3]) / 2.0
    order = np.argsort(cx, kind="stable")
    groups: list[list[int]] = []
    for start in range(0, n, slice_size):
        chunk = order[start:start + slice_size]
        chunk = chunk[np.argsort(cy[chunk], kind="stable")]
        for k in range(0, len(chunk), capacity):
            groups.append(chunk[k:k + capacity].tolist())
    return groups


class StrTree:
    """Immutable R-tree bulk-loaded with sort-tile-recursive packing."""

    def __init__(self, items: Sequence[tuple[BBox, Hashable]], node_capacity: int = DEFAULT_NODE_CAPACITY):
        if node_capacity < 2:
            raise InvalidInputError("node_capacity must be >= 2")
        if len(items) == 0:
            raise InvalidInputError("cannot build an STR tree from zero items")
        boxes = []
        ids = []
        for bbox, item_id in items:
            x0, y0, x1, y1 = (float(c) for c in bbox)
            if not (x0 <= x1 and y0 <= y1):
                raise InvalidInputError(f"malformed bbox {bbox!r} for item {item_id!r}")
            boxes.append((x0, y0, x1, y1))
            ids.append(item_id)
        self.node_capacity = int(node_capacity)
        self._boxes: tuple[BBox, ...] = tuple(boxes)
        self._ids: tuple[Hashable, ...] = tuple(ids)
        self._centroids = tuple(((b[0] + b[2]) / 2.0, (b[1] + b[3]) / 2.0) for b in boxes)

        arr = np.asarray(boxes, dtype=float)
        level = [
            _Node(_union(self._boxes[i] for i in g), None, g)
            for g in _str_pack(arr, self.node_capacity)
        ]
        height = 1
        while len(level) > 1:
            arr = np.asarray([node.bbox for node in level], dtype=float)
            level = [
                _Node(_union(level[i].bbox for i in g), [level[i] for i in g], None)
                for g in _str_pack(arr, self.node_capacity)
            ]
            height += 1
        self._root = level[0]
        self.height = height

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def item_count(self) -> int:
        return len(self._ids)

    @property
    def bbox(self) -> BBox:
        return self._root.bbox

    @property
    def root(self) -> _Node:
        return self._root

    def item_bbox(self, index: int) -> BBox:
        return self._boxes[index]

    def iter_nodes(self) -> Iterator[_Node]:
        stack = [self._root]
        while stack:
            node = stack.pop()
            yield node
            if node.children is not None:
                stack.extend(node.children)

    def iter_items(self) -> Iterator[tuple[BBox, Hashable]]:
        return zip(self._boxes, self._ids)

    def query_bbox(self, bbox: BBox) -> set:
        """Ids whose stored box intersects ``bbox`` (closed intervals)."""
        q = tuple(float(c) for c in bbox)
        qx0, qy0, qx1, qy1 = q
        out = set()
        boxes, ids = self._boxes, self._ids
        stack = [self._root]
        while stack:
            node = stack.pop()
            b = node.bbox
            if not (b[0] <= qx1 and qx0 <= b[2] and b[1] <= qy1 and qy0 <= b[3]):
                continue
            if node.children is None:
                for i in node.items:
                    bb = boxes[i]
                    if bb[0] <= qx1 and qx0 <= bb[2] and bb[1] <= qy1 and qy0 <= bb[3]:
                        out.add(ids[i])
            else:
                stack.extend(node.children)
        return out

    def nearest(self, point: tuple[float, float]) -> Hashable:
        """Id whose box centroid is closest to ``point``; ties go to the smallest id."""
        px, py = float(point[0]), float(point[1])
        best_d = math.inf
        best_id = None
        counter = 0
        heap = [(0.0, counter, self._root)]
        cents, ids = self._centroids, self._ids
        while heap:
            d_node, _, node = heapq.heappop(heap)
            if d_node > best_d:
                break
            if node.children is None:
                for i in node.items:
                    cx, cy = cents[i]
                    dx = cx - px
                    dy = cy - py
                    d = dx * dx + dy * dy
                    if d < best_d or (d == best_d and ids[i] < best_id):
                        best_d = d
                        best_id = ids[i]
            else:
                for child in node.children:
                    b = child.bbox
                    dx = b[0] - px if px < b[0] else (px - b[2] if px > b[2] else 0.0)
                    dy = b[1] - py if py < b[1] else (py - b[3] if py > b[3] else 0.0)
                    d = dx * dx + dy * dy
                    if d <= best_d:
                        counter += 1
                        heapq.heappush(heap, (d, counter, child))
        return best_id

    def check_invariants(self) -> None:
        """Raise AssertionError if containment, occupancy or coverage is broken."""
        seen: list[int] = []
        for node in self.iter_nodes():
            if node.children is None:
                assert 1 <= len(node.items) <= self.node_capacity, "leaf occupancy out of range"
                for i in node.items:
                    assert bbox_contains(node.bbox, self._boxes[i]), "item escapes its leaf"
                seen.extend(node.items)
            else:
                assert 1 <= len(node.children) <= self.node_capacity, "fan-out out of range"
                for child in node.children:
                    assert bbox_contains(node.bbox, child.bbox), "child escapes parent"
        assert sorted(seen) == list(range(len(self._ids))), "items missing or duplicated"


def build_str_tree(items: Sequence[tuple[BBox, Hashable]], node_capacity: int = DEFAULT_NODE_CAPACITY) -> StrTree:
    return StrTree(items, node_capacity)


def query_bbox(tree: StrTree, bbox: BBox) -> set:
    return tree.query_bbox(bbox)


def nearest(tree: StrTree, point: tuple[float, float]) -> Hashable:
    return tree.nearest(point)


# --- geometry -------------------------------------------------------------

Vertex = tuple[float, float]


@dataclass(frozen=True)
class Point:
    vertex: Vertex

    @property
    def bbox(self) -> BBox:
        x, y = self.vertex
        return (x, y, x, y)


@dataclass(frozen=True)
class Polyline:
    vertices: tuple[Vertex, ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) < 2:
            raise InvalidInputError("polyline needs at least two vertices")
        object.__setattr__(self, "vertices", verts)

    @property
    def bbox(self) -> BBox:
        return _vertices_bbox(self.vertices)

    def segments(self) -> Iterator[tuple[Vertex, Vertex]]:
        v = self.vertices
        return zip(v[:-1], v[1:])


@dataclass(frozen=True)
class Polygon:
    """Simple polygon stored as an open ring (closing vertex dropped)."""

    vertices: tuple[Vertex, ...]

    def __post_init__(self):
        verts = [(float(x), float(y)) for x, y in self.vertices]
        if len(verts) >= 2 and verts[0] == verts[-1]:
            verts.pop()
        if len(set(verts)) < 3:
            raise InvalidInputError("polygon needs at least three distinct vertices")
        if _ring_area(verts) == 0.0:
            raise InvalidInputError("degenerate polygon (zero area)")
        object.__setattr__(self, "vertices", tuple(verts))
        if not _ring_is_simple(self.vertices):
            raise InvalidInputError("polygon ring self-intersects")

    @property
    def bbox(self) -> BBox:
        return _vertices_bbox(self.vertices)

    def segments(self) -> Iterator[tuple[Vertex, Vertex]]:
        v = self.vertices
        return zip(v, v[1:] + v[:1])

    @property
    def area(self) -> float:
        return abs(_ring_area(self.vertices))

    @property
    def centroid(self) -> Vertex:
        v = self.vertices
        a = _ring_area(v)
        cx = cy = 0.0
        for (x0, y0), (x1, y1) in zip(v, v[1:] + v[:1]):
            cross = x0 * y1 - x1 * y0
            cx += (x0 + x1) * cross
            cy += (y0 + y1) * cross
        return (cx / (6.0 * a), cy / (6.0 * a))

    @classmethod
    def from_bbox(cls, bbox: BBox) -> "Polygon":
        x0, y0, x1, y1 = bbox
        return cls(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


Geometry2D = Union[Point, Polyline, Polygon]


def _vertices_bbox(vertices: Sequence[Vertex]) -> BBox:
    xs = [v[0] for v in vertices]
    ys = [v[1] for v in vertices]
    return (min(xs), min(ys), max(xs), max(ys))


def _ring_area(vertices: Sequence[Vertex]) -> float:
    s = 0.0
    n = len(vertices)
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        s += x0 * y1 - x1 * y0
    return s / 2.0


def _orient(p: Vertex, q: Vertex, r: Vertex) -> float:
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _on_segment(p: Vertex, q: Vertex, r: Vertex) -> bool:
    """True if ``r`` lies on segment pq, given the three are collinear."""
    return min(p[0], q[0]) <= r[0] <= max(p[0], q[0]) and min(p[1], q[1]) <= r[1] <= max(p[1], q[1])


def segments_intersect(p1: Vertex, p2: Vertex, q1: Vertex, q2: Vertex) -> bool:
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True
    if d1 == 0 and _on_segment(q1, q2, p1):
        return True
    if d2 == 0 and _on_segment(q1, q2, p2):
        return True
    if d3 == 0 and _on_segment(p1, p2, q1):
        return True
    if d4 == 0 and _on_segment(p1, p2, q2):
        return True
    return False


def _ring_is_simple(vertices: Sequence[Vertex]) -> bool:
    n = len(vertices)
    edges = [(vertices[i], vertices[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if segments_intersect(*edges[i], *edges[j]):
                return False
    return True


def point_in_polygon(pt: Vertex, poly: Polygon) -> bool:
    """Even-odd containment; points on the boundary count as inside."""
    for a, b in poly.segments():
        if _orient(a, b, pt) == 0 and _on_segment(a, b, pt):
            return True
    x, y = pt
    inside = False
    for (x0, y0), (x1, y1) in poly.segments():
        if (y0 > y) != (y1 > y):
            x_cross = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            if x < x_cross:
                inside = not inside
    return inside


def _segments_of(g: Geometry2D) -> list[tuple[Vertex, Vertex]]:
    if isinstance(g, Point):
        return [(g.vertex, g.vertex)]
    return list(g.segments())


def _vertices_of(g: Geometry2D) -> tuple[Vertex, ...]:
    return (g.vertex,) if isinstance(g, Point) else g.vertices


def intersects(a: Geometry2D, b: Geometry2D) -> bool:
    """True iff the two geometries share at least one point."""
    if not bbox_intersects(a.bbox, b.bbox):
        return False
    if isinstance(a, Point) and isinstance(b, Point):
        return a.vertex == b.vertex
    for s in _segments_of(a):
        for t in _segments_of(b):
            if segments_intersect(s[0], s[1], t[0], t[1]):
                return True
    # No boundary contact: one may still lie wholly inside a polygon.
    if isinstance(b, Polygon) and point_in_polygon(_vertices_of(a)[0], b):
        return True
    if isinstance(a, Polygon) and point_in_polygon(_vertices_of(b)[0], a):
        return True
    return False
