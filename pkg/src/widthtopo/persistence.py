"""Persistent homology of superlevel-set filtrations on 2D pixel grids.

The filtration is vertex based: pixel ``x`` enters at threshold ``u(x)``,
edges and squares enter with their lowest vertex. Foreground (superlevel
sets) uses 4-connectivity and the complement 8-connectivity, the dual pair
that makes the digital Jordan curve theorem hold.

Dimension 0 is a union-find sweep over pixels in decreasing value order with
the elder rule. Dimension 1 uses planar duality: a hole of ``{u >= t}`` is a
bounded 8-connected component of ``{u < t}``, so holes are tracked as
components of the complement in the reversed sweep, with a virtual pixel
outside the image standing for the unbounded component.

All ties are broken by the total order (value descending, linear index
ascending); zero-persistence pairs are dropped.
"""

import csv
import io
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from ._validation import check_field
from .grid import PixelIndex

__all__ = [
    "PersistencePair",
    "PersistenceDiagram",
    "CriticalSplit",
    "compute_superlevel_persistence",
    "betti_at_threshold",
    "critical_sets",
    "CSV_HEADER",
]

CSV_HEADER = ("dim", "birth", "death", "birth_row", "birth_col", "death_row", "death_col", "essential")


@dataclass(frozen=True)
class PersistencePair:
    """One topological feature: alive for thresholds ``t`` with ``birth >= t > death``.

    ``birth_pixel`` realizes the birth value and ``death_pixel`` the death
    value. Essential features never die: ``death`` is ``-inf`` and
    ``death_pixel`` is None.
    """

    dim: int
    birth: float
    death: float
    birth_pixel: PixelIndex
    death_pixel: Optional[PixelIndex]
    essential: bool = False

    @property
    def persistence(self):
        return math.inf if self.essential else self.birth - self.death


def _pair_key(pair, width):
    # persistence descending, then birth descending, then birth pixel ascending
    return (-pair.persistence, -pair.birth, pair.birth_pixel.linear(width))


class PersistenceDiagram:
    """Persistence pairs of a field, sorted per dimension by persistence."""

    def __init__(self, pairs, shape):
        self.shape = tuple(shape)
        width = self.shape[1]
        self.pairs = tuple(sorted(pairs, key=lambda p: (p.dim,) + _pair_key(p, width)))

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)

    def __repr__(self):
        return f"PersistenceDiagram(shape={self.shape}, counts={self.counts}, essential={len(self.essential())})"

    def dimension(self, k, *, include_essential=True):
        return [p for p in self.pairs if p.dim == k and (include_essential or not p.essential)]

    def finite(self, k):
        return self.dimension(k, include_essential=False)

    def essential(self, k=None):
        return [p for p in self.pairs if p.essential and (k is None or p.dim == k)]

    @property
    def counts(self):
        """Number of non-essential pairs per dimension."""
        return {k: len(self.finite(k)) for k in (0, 1)}

    def as_array(self, k):
        """``(n, 2)`` array of (birth, death) for dimension ``k``; essential deaths are ``-inf``."""
        return np.array([(p.birth, p.death) for p in self.dimension(k)], dtype=float).reshape(-1, 2)

    def to_csv(self, fp):
        """Write the diagram as CSV to a path or a text file object."""
        if isinstance(fp, (str, bytes)) or hasattr(fp, "__fspath__"):
            with open(fp, "w", newline="") as fh:
                self.to_csv(fh)
            return
        writer = csv.writer(fp)
        writer.writerow(CSV_HEADER)
        for p in self.pairs:
            writer.writerow(pair_to_row(p))

    def to_csv_string(self):
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, fp, shape):
        if isinstance(fp, (str, bytes)) or hasattr(fp, "__fspath__"):
            with open(fp, newline="") as fh:
                return cls.from_csv(fh, shape)
        reader = csv.DictReader(fp)
        return cls([row_to_pair(row) for row in reader], shape)


def pair_to_row(p):
    death = "-inf" if p.essential else repr(p.death)
    dz = ("", "") if p.death_pixel is None else (p.death_pixel.row, p.death_pixel.col)
    return [p.dim, repr(p.birth), death, p.birth_pixel.row, p.birth_pixel.col, *dz, int(p.essential)]


def row_to_pair(row):
    essential = row["essential"].strip().lower() in ("1", "true")
    death_pixel = None
    if row["death_row"] != "":
        death_pixel = PixelIndex(int(row["death_row"]), int(row["death_col"]))
    return PersistencePair(
        dim=int(row["dim"]),
        birth=float(row["birth"]),
        death=float(row["death"]),
        birth_pixel=PixelIndex(int(row["birth_row"]), int(row["birth_col"])),
        death_pixel=death_pixel,
        essential=essential,
    )


def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


_N4 = ((-1, 0), (0, -1), (0, 1), (1, 0))
_N8 = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def _dim0_pairs(vals, order, h, w):
    n = h * w
    parent = list(range(n))
    birth = list(range(n))  # birth pixel of the component rooted here
    rank = [0] * n  # position in the sweep; smaller rank = elder
    for pos, p in enumerate(order):
        rank[p] = pos
    added = [False] * n
    pairs = []
    for p in order:
        added[p] = True
        r, c = divmod(p, w)
        vp = vals[p]
        for dr, dc in _N4:
            rr, cc = r + dr, c + dc
            if not (0 <= rr < h and 0 <= cc < w):
                continue
            q = rr * w + cc
            if not added[q]:
                continue
            rp, rq = _find(parent, p), _find(parent, q)
            if rp == rq:
                continue
            if rank[birth[rp]] < rank[birth[rq]]:
                elder, younger = rp, rq
            else:
                elder, younger = rq, rp
            b_pix = birth[younger]
            b = vals[b_pix]
            parent[younger] = elder
            if b == vp:
                continue
            # the lower endpoint of the merging edge realizes the death value
            z = q if (vals[q] == vp and q < p) else p
            pairs.append(
                PersistencePair(0, b, vp, PixelIndex(*divmod(b_pix, w)), PixelIndex(*divmod(z, w)))
            )
    roots = {_find(parent, p) for p in range(n)}
    for root in sorted(roots, key=lambda x: rank[birth[x]]):
        y = birth[root]
        pairs.append(PersistencePair(0, vals[y], -math.inf, PixelIndex(*divmod(y, w)), None, True))
    return pairs


def _dim1_pairs(vals, order, h, w):
    n = h * w
    outside = n
    parent = list(range(n + 1))
    birth = list(range(n + 1))
    rank = [0] * (n + 1)
    # reversed sweep grows the complement {u < t} as t increases
    rev = order[::-1]
    for pos, p in enumerate(rev):
        rank[p] = pos + 1
    rank[outside] = 0
    added = [False] * n
    pairs = []
    for s in rev:
        added[s] = True
        r, c = divmod(s, w)
        vs = vals[s]
        on_border = r == 0 or c == 0 or r == h - 1 or c == w - 1
        neighbors = [outside] if on_border else []
        for dr, dc in _N8:
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w:
                q = rr * w + cc
                if added[q]:
                    neighbors.append(q)
        for q in neighbors:
            rs, rq = _find(parent, s), _find(parent, q)
            if rs == rq:
                continue
            if rank[birth[rs]] < rank[birth[rq]]:
                elder, younger = rs, rq
            else:
                elder, younger = rq, rs
            m = birth[younger]
            parent[younger] = elder
            d = vals[m]
            if d == vs:
                continue
            # hole closes when s enters the superlevel set and fills at its interior minimum m
            pairs.append(
                PersistencePair(1, vs, d, PixelIndex(*divmod(s, w)), PixelIndex(*divmod(m, w)))
            )
    return pairs


def compute_superlevel_persistence(field):
    """Persistence diagram of the superlevel filtration of ``field`` (dims 0 and 1).

    Parameters
    ----------
    field : array_like of shape (H, W)

    Returns
    -------
    PersistenceDiagram
        Exactly one essential dimension-0 pair (the global maximum's
        component); every finite pair satisfies ``field[birth_pixel] == birth``
        and ``field[death_pixel] == death``.
    """
    arr = check_field(field)
    h, w = arr.shape
    flat = arr.ravel()
    idx = np.arange(flat.size)
    order = np.lexsort((idx, -flat)).tolist()
    vals = flat.tolist()
    pairs = _dim0_pairs(vals, order, h, w) + _dim1_pairs(vals, order, h, w)
    return PersistenceDiagram(pairs, arr.shape)


def betti_at_threshold(diagram, t, k):
    """Betti number of ``{u >= t}`` in dimension ``k`` read off the diagram."""
    return sum(1 for p in diagram.dimension(k) if p.birth >= t and (p.essential or t > p.death))


class CriticalSplit(NamedTuple):
    """Finite pairs of one dimension split into encouraged and penalized features."""

    encouraged: list
    penalized: list

    @property
    def penalized_births(self):
        return [p.birth_pixel for p in self.penalized]

    @property
    def penalized_deaths(self):
        return [p.death_pixel for p in self.penalized]

    @property
    def encouraged_births(self):
        return [p.birth_pixel for p in self.encouraged]

    @property
    def encouraged_deaths(self):
        return [p.death_pixel for p in self.encouraged]


def critical_sets(diagram, k, beta, *, count_essential=True):
    """Split the dimension-``k`` pairs into the ``beta`` kept features and the rest.

    Essential pairs never contribute pixels: their death is at infinity. With
    ``count_essential`` (the default) they still occupy the leading ranks, so
    ``beta`` is the target Betti number itself; e.g. ``beta = 1`` in
    dimension 0 keeps the global component and penalizes every finite bar.
    With ``count_essential=False`` the first ``beta`` *finite* pairs are kept.
    """
    if k not in (0, 1):
        raise ValueError(f"homology dimension must be 0 or 1, got {k}")
    if beta < 0 or int(beta) != beta:
        raise ValueError(f"beta must be a nonnegative integer, got {beta}")
    finite = diagram.finite(k)
    keep = int(beta)
    if count_essential:
        keep = max(keep - len(diagram.essential(k)), 0)
    return CriticalSplit(finite[:keep], finite[keep:])
