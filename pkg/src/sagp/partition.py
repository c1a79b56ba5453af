"""Recursive partitioning of the unit hyper-cube into nested layers of boxes.

Layer ``l`` of a scheme with per-dimension branching ``b`` is the regular grid
with ``b_i ** (l - 1)`` cells along dimension ``i``. Component ids are
assigned breadth first, layer by layer, and in C order of the cell index
within a layer, so in one dimension with ``b = 2`` the ids 0..6 are the
boxes A1..A7 of the usual binary-tree picture.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DatasetTooSmallError, InvalidInputError
from .kernel import Box


@dataclass(frozen=True)
class Component:
    id: int
    layer: int
    cell: tuple
    box: Box
    parent: int | None
    children: tuple = ()
    active: bool = True

    @property
    def centroid(self):
        return self.box.centroid

    @property
    def half_width(self):
        return self.box.half_width


@dataclass(frozen=True)
class RpScheme:
    components: tuple
    layers: tuple
    branching: tuple
    m_required: int
    counts: tuple | None = field(default=None, compare=False)

    @property
    def d(self):
        return len(self.branching)

    @property
    def n_layers(self):
        return len(self.layers)

    @property
    def active_ids(self):
        return [c.id for c in self.components if c.active]

    @property
    def active_layers(self):
        return sorted({c.layer for c in self.components if c.active})

    def __getitem__(self, cid):
        return self.components[cid]

    def descendants(self, cid, active_only=False):
        out = []
        stack = list(self.components[cid].children)
        while stack:
            k = stack.pop()
            comp = self.components[k]
            if comp.active or not active_only:
                out.append(k)
            stack.extend(comp.children)
        return sorted(out)

    def membership(self, X, ids=None):
        """Boolean matrix ``(len(ids), n)``: does point i lie in component j."""
        X = check_unit_points(X, self.d)
        ids = range(len(self.components)) if ids is None else ids
        return np.array([self.components[j].box.contains(X) for j in ids], dtype=bool).reshape(len(ids), X.shape[0])

    def to_dict(self):
        return {
            "branching": list(self.branching),
            "m_required": self.m_required,
            "layers": [list(layer) for layer in self.layers],
            "components": [
                {
                    "id": c.id,
                    "layer": c.layer,
                    "cell": list(c.cell),
                    "lower": list(c.box.lower),
                    "upper": list(c.box.upper),
                    "centroid": list(c.centroid),
                    "half_width": list(c.half_width),
                    "parent": c.parent,
                    "children": list(c.children),
                    "active": c.active,
                    **({"count": self.counts[c.id]} if self.counts is not None else {}),
                }
                for c in self.components
            ],
        }

    @classmethod
    def from_dict(cls, data):
        comps = tuple(
            Component(
                id=int(c["id"]),
                layer=int(c["layer"]),
                cell=tuple(int(v) for v in c["cell"]),
                box=Box(tuple(float(v) for v in c["lower"]), tuple(float(v) for v in c["upper"])),
                parent=None if c["parent"] is None else int(c["parent"]),
                children=tuple(int(v) for v in c["children"]),
                active=bool(c["active"]),
            )
            for c in data["components"]
        )
        counts = None
        if all("count" in c for c in data["components"]):
            counts = tuple(int(c["count"]) for c in data["components"])
        return cls(
            components=comps,
            layers=tuple(tuple(int(v) for v in layer) for layer in data["layers"]),
            branching=tuple(int(v) for v in data["branching"]),
            m_required=int(data["m_required"]),
            counts=counts,
        )

    def fingerprint(self):
        """Stable hash of structure and active flags (counts excluded)."""
        d = self.to_dict()
        for c in d["components"]:
            c.pop("count", None)
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def check_unit_points(X, d):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, d) if d == 1 else X[None, :]
    if X.ndim != 2 or X.shape[1] != d:
        raise InvalidInputError(f"expected points of dimension {d}, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("non-finite input coordinates")
    if np.any(X < 0.0) or np.any(X > 1.0):
        raise InvalidInputError("input coordinates must lie in [0, 1]")
    return X


def _normalize_branching(d, branching):
    if np.isscalar(branching):
        branching = (int(branching),) * d
    branching = tuple(int(b) for b in branching)
    if len(branching) != d:
        raise InvalidInputError(f"need {d} branching factors, got {len(branching)}")
    return branching


def build_full_rp(d, branching, n_layers, m=1):
    """Complete scheme with every component active."""
    if d < 1:
        raise InvalidInputError(f"dimension must be >= 1, got {d}")
    if n_layers < 1:
        raise InvalidInputError(f"layer count must be >= 1, got {n_layers}")
    branching = _normalize_branching(d, branching)
    if any(b < 2 for b in branching):
        raise InvalidInputError(f"branching factors must be >= 2, got {branching}")
    if m < 1:
        raise InvalidInputError(f"pseudo-inputs per component must be >= 1, got {m}")

    comps = []
    layers = []
    index = {}
    for layer in range(1, n_layers + 1):
        ncell = tuple(b ** (layer - 1) for b in branching)
        ids = []
        for cell in itertools.product(*(range(k) for k in ncell)):
            cid = len(comps)
            box = Box(
                tuple(c / k for c, k in zip(cell, ncell)),
                tuple((c + 1) / k for c, k in zip(cell, ncell)),
            )
            parent = None
            if layer > 1:
                parent = index[(layer - 1, tuple(c // b for c, b in zip(cell, branching)))]
            comps.append(Component(cid, layer, cell, box, parent))
            index[(layer, cell)] = cid
            ids.append(cid)
        layers.append(tuple(ids))

    children = {c.id: [] for c in comps}
    for c in comps:
        if c.parent is not None:
            children[c.parent].append(c.id)
    comps = tuple(replace(c, children=tuple(children[c.id])) for c in comps)
    return RpScheme(comps, tuple(layers), branching, int(m))


def prune(scheme, X):
    """Deactivate sub-trees that cannot be given disjoint pseudo-inputs.

    Walks the layers bottom-up. For each component, while the points in its
    box are fewer than ``m`` times the number of active components inside
    it (itself included), the deepest remaining layer of that sub-tree is
    switched off; when nothing below is left the component itself goes.
    """
    X = check_unit_points(X, scheme.d)
    m = scheme.m_required
    counts = scheme.membership(X).sum(axis=1)
    active = np.array([c.active for c in scheme.components], dtype=bool)
    n_layers = scheme.n_layers

    for layer in range(n_layers, 0, -1):
        for j in scheme.layers[layer - 1]:
            if not active[j]:
                continue
            subtree = [j] + scheme.descendants(j)
            for s in range(n_layers, layer - 1, -1):
                required = m * int(np.sum(active[subtree]))
                if counts[j] >= required:
                    break
                for k in subtree:
                    if scheme.components[k].layer == s:
                        active[k] = False

    if not active[0]:
        raise DatasetTooSmallError(f"{X.shape[0]} observations cannot supply m={m} pseudo-inputs to the root")
    comps = tuple(replace(c, active=bool(active[c.id])) for c in scheme.components)
    return replace(scheme, components=comps, counts=tuple(int(v) for v in counts))


def locate(x, scheme):
    """Active component ids, one per active layer, whose box holds ``x``."""
    x = check_unit_points(np.asarray(x, dtype=float).reshape(1, -1), scheme.d)[0]
    root = scheme.components[0]
    if not root.box.contains(x):
        raise InvalidInputError(f"point {x} outside the unit cube")
    path = [root.id]
    current = root
    while True:
        nxt = None
        for k in current.children:
            child = scheme.components[k]
            if child.active and child.box.contains(x):
                nxt = child
                break
        if nxt is None:
            return path
        path.append(nxt.id)
        current = nxt


def save_scheme(scheme, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scheme.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_scheme(path):
    with open(path, encoding="utf-8") as fh:
        return RpScheme.from_dict(json.load(fh))
