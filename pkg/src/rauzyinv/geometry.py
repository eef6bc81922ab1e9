"""
Zippered rectangles, singularities and strata.

A suspension point ``(lambda, pi, tau)`` defines a surface glued from
rectangles ``R^t_a`` (above the base interval, in the order of ``pi``) and
``R^b_a`` (below it, in the order of the mirrored row), each of width
``lambda_a`` and height ``h_a``.  ``R^t_a`` is glued to ``R^b_a`` by the
translation ``(x, y) -> (x + w_a, y - h_a)``.  The map ``x -> -x`` swaps
``R^t_a`` with ``R^b_{i(a)}`` and defines the involution of the surface.

Singularities are the classes of endpoint labels ``(letter, side)`` under
the gluing relation.  The cone angle of a class is ``2 pi k`` where ``k``
counts the junctions between two consecutive letters of the top row whose
common endpoint lies in the class.
"""

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

from . import linalg
from .combinatorics import STAR
from .suspension import SuspensionPoint, theta_functionals

TOP, BOTTOM = "t", "b"
L_SIDE, R_SIDE = "L", "R"


class SurfaceError(ValueError):
    """The data do not define a zippered-rectangle surface."""


class HitsSingularity(ValueError):
    def __init__(self, message, singularity=None):
        super().__init__(message)
        self.singularity = singularity


@dataclass(frozen=True)
class Rectangle:
    letter: str
    level: str
    side: str
    x0: Fraction
    x1: Fraction
    y0: Fraction
    y1: Fraction

    @property
    def key(self):
        return (self.letter, self.level)

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0

    @property
    def area(self):
        return self.width * self.height

    def contains(self, x, y):
        return self.x0 < x < self.x1 and self.y0 <= y <= self.y1


@dataclass(frozen=True)
class Segment:
    letter: str
    level: str
    x: Fraction
    y0: Fraction
    y1: Fraction

    @property
    def length(self):
        return abs(self.y1 - self.y0)


@dataclass(frozen=True)
class SurfacePoint:
    """A point given by planar coordinates and the rectangle it lies in.

    ``rect`` is ``(letter, level)`` or ``None`` for a point of the base
    interval ``y = 0``.
    """

    rect: tuple
    x: Fraction
    y: Fraction = Fraction(0)


def _sum(values, letters, perm):
    return sum((values[perm.cls(b)] for b in letters), Fraction(0))


def _index_sets(row, x):
    """The sets ``B(x)`` (strictly between ``x`` and ``*``) and ``B'(x)`` (including ``x``)."""
    p, s = row.index(x), row.index(STAR)
    if p < s:
        return row[p + 1:s], row[p:s]
    return row[s + 1:p], row[s + 1:p + 1]


def _violated(perm, tau):
    for coeffs, sign in theta_functionals(perm):
        if sign * linalg.dot(coeffs, tau) <= 0:
            members = [perm.classes[k] for k, c in enumerate(coeffs) for _ in range(c)]
            rel = ">" if sign > 0 else "<"
            return f"sum of tau over {'+'.join(members)} must be {rel} 0"
    return None


class ZipperedRectangleSurface:
    """The surface of a suspension point, in exact arithmetic."""

    def __init__(self, point):
        if not isinstance(point, SuspensionPoint):
            raise TypeError("expected a SuspensionPoint")
        self.point = point
        perm = self.perm = point.perm
        lam, tau = point.lam.values, point.tau
        bad = _violated(perm, tau)
        if bad is not None:
            raise SurfaceError(f"tau is not inside the cone: {bad}")
        self.h = point.h
        self.w = point.w
        a_l, a_r = perm.leftmost, perm.rightmost
        lw, lr = lam[perm.cls(a_l)], lam[perm.cls(a_r)]
        self.winner = None if lw == lr else (a_l if lw > lr else a_r)
        top, bot = list(perm.row), list(perm.bar_row)
        self.rectangles = {}
        for level, row in ((TOP, top), (BOTTOM, bot)):
            s = row.index(STAR)
            for x in row:
                if x == STAR:
                    continue
                b, bp = _index_sets(row, x)
                lo, hi = _sum(lam, b, perm), _sum(lam, bp, perm)
                side = "l" if row.index(x) < s else "r"
                if side == "l":
                    lo, hi = -hi, -lo
                hx = self.h[perm.cls(x)]
                y0, y1 = (Fraction(0), hx) if level == TOP else (-hx, Fraction(0))
                self.rectangles[(x, level)] = Rectangle(x, level, side, lo, hi, y0, y1)
        self.l_pi = _sum(tau, top[top.index(STAR) + 1:], perm)
        self.segments = self._segments(top, bot)
        self.identifications = self._identifications()

    def _segments(self, top, bot):
        perm, lam, tau = self.perm, self.point.lam.values, self.point.tau
        a_l, a_r = perm.leftmost, perm.rightmost
        segs = {}
        for level, row in ((TOP, top), (BOTTOM, bot)):
            s = row.index(STAR)
            for x in row:
                if x in (STAR, a_l, a_r):
                    continue
                _, bp = _index_sets(row, x)
                xl, tl = _sum(lam, bp, perm), _sum(tau, bp, perm)
                if row.index(x) < s:
                    xl, tl = -xl, -tl
                y0, y1 = (Fraction(0), tl) if level == TOP else (tl, Fraction(0))
                segs[(x, level)] = Segment(x, level, xl, y0, y1)
        right = _sum(lam, top[top.index(STAR) + 1:], perm)
        left = _sum(lam, top[:top.index(STAR)], perm)
        ia_l, ia_r = perm.i(a_l), perm.i(a_r)
        lp = self.l_pi
        if lp > 0:
            segs[(a_r, TOP)] = Segment(a_r, TOP, right, Fraction(0), lp)
            segs[(ia_r, BOTTOM)] = Segment(ia_r, BOTTOM, -right, -lp, Fraction(0))
        elif lp < 0:
            segs[(a_l, TOP)] = Segment(a_l, TOP, -left, Fraction(0), -lp)
            segs[(ia_l, BOTTOM)] = Segment(ia_l, BOTTOM, left, lp, Fraction(0))
        else:
            zero = Fraction(0)
            segs[(a_l, TOP)] = Segment(a_l, TOP, -left, zero, zero)
            segs[(ia_r, BOTTOM)] = Segment(ia_r, BOTTOM, -left, zero, zero)
            segs[(a_r, TOP)] = Segment(a_r, TOP, right, zero, zero)
            segs[(ia_l, BOTTOM)] = Segment(ia_l, BOTTOM, right, zero, zero)
        return segs

    def _identifications(self):
        """Glued pairs ``(piece, piece, translation)`` with equal-length sides."""
        out = []
        for x in self.perm.row:
            if x == STAR:
                continue
            rt, rb = self.rectangles[(x, TOP)], self.rectangles[(x, BOTTOM)]
            out.append((("R", x, TOP), ("R", x, BOTTOM), (rb.x0 - rt.x0, rb.y0 - rt.y0)))
        lp = self.l_pi
        if lp == 0:
            return out
        if self.winner is None:
            raise SurfaceError("leftmost and rightmost lengths tie, so the winner is undefined")
        a_l, a_r = self.perm.leftmost, self.perm.rightmost
        if lp > 0:
            seg = self.segments[(a_r, TOP)]
            other = ("R", a_r, BOTTOM) if self.winner == a_r else ("R", self.perm.i(a_l), TOP)
            twin = ("S", self.perm.i(a_r), BOTTOM)
        else:
            seg = self.segments[(a_l, TOP)]
            other = ("R", a_r, BOTTOM) if self.winner == a_r else ("R", self.perm.i(a_l), TOP)
            twin = ("S", self.perm.i(a_l), BOTTOM)
        rect = self.rectangles[other[1:]]
        y0 = rect.y0 if other[2] == BOTTOM else rect.y1 - seg.length
        out.append((("S", seg.letter, TOP), other + ("right side", y0, y0 + seg.length),
                    (rect.x1 - seg.x, y0 - min(seg.y0, seg.y1))))
        out.append((twin, other + ("right side, mirrored",), None))
        return out

    # measurements

    @property
    def area(self):
        return sum((r.area for r in self.rectangles.values() if r.level == TOP), Fraction(0))

    def top_partition(self):
        return sorted((r.x0, r.x1, r.letter) for r in self.rectangles.values() if r.level == TOP)

    def bottom_partition(self):
        return sorted((r.x0, r.x1, r.letter) for r in self.rectangles.values() if r.level == BOTTOM)

    def half_length(self):
        return sum(self.point.lam.values, Fraction(0))

    def vertices(self):
        """Points ``xi^t_a`` and ``xi^b_a`` as ``(x, y)`` pairs, keyed by ``(letter, level)``."""
        perm, lam, tau = self.perm, self.point.lam.values, self.point.tau
        out = {}
        for level, row in ((TOP, list(perm.row)), (BOTTOM, list(perm.bar_row))):
            s = row.index(STAR)
            for x in row:
                if x == STAR:
                    continue
                _, bp = _index_sets(row, x)
                sx, sy = _sum(lam, bp, perm), _sum(tau, bp, perm)
                out[(x, level)] = (-sx, -sy) if row.index(x) < s else (sx, sy)
        return out

    # exports

    def to_json(self):
        def q(v):
            return str(v)

        return {
            "row": str(self.perm),
            "area": q(self.area),
            "l_pi": q(self.l_pi),
            "rectangles": [
                {"letter": r.letter, "level": r.level, "side": r.side,
                 "x0": q(r.x0), "x1": q(r.x1), "y0": q(r.y0), "y1": q(r.y1)}
                for r in sorted(self.rectangles.values(), key=lambda r: (r.level, r.x0))],
            "segments": [
                {"letter": s.letter, "level": s.level, "x": q(s.x), "y0": q(s.y0), "y1": q(s.y1)}
                for s in sorted(self.segments.values(), key=lambda s: (s.level, s.x))],
            "identifications": [
                [list(a), [str(v) if isinstance(v, Fraction) else v for v in b],
                 None if t is None else [q(t[0]), q(t[1])]]
                for a, b, t in self.identifications],
            "singularities": singularities(self.perm).to_json(),
            "stratum": stratum(self.perm).to_json(),
        }

    def outlines_csv(self):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["kind", "letter", "level", "x0", "y0", "x1", "y1"])
        for r in sorted(self.rectangles.values(), key=lambda r: (r.level, r.x0)):
            wr.writerow(["rect", r.letter, r.level, float(r.x0), float(r.y0), float(r.x1), float(r.y1)])
        for s in sorted(self.segments.values(), key=lambda s: (s.level, s.x)):
            wr.writerow(["segment", s.letter, s.level, float(s.x), float(s.y0), float(s.x), float(s.y1)])
        return buf.getvalue()


def build_surface(point):
    return ZipperedRectangleSurface(point)


# singularities


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _pair_involution(perm, pair):
    x, side = pair
    other = R_SIDE if side == L_SIDE else L_SIDE
    return (x if x == STAR else perm.i(x), other)


@dataclass
class SingularityClass:
    members: tuple
    k: int
    fixed: bool
    irregular: bool

    @property
    def angle_over_pi(self):
        return 2 * self.k

    @property
    def multiplicity(self):
        """Multiplicity as a zero of the square of the 1-form: ``2 (k - 1)``."""
        return 2 * (self.k - 1)

    def to_json(self):
        return {"members": [f"{x}:{s}" for x, s in self.members], "k": self.k,
                "angle": f"{2 * self.k}pi", "multiplicity": self.multiplicity,
                "fixed_by_involution": self.fixed, "irregular": self.irregular}


@dataclass
class SingularityTable:
    perm: object
    classes: list
    relations: list = field(repr=False, default_factory=list)

    def class_of(self, pair):
        for c in self.classes:
            if pair in c.members:
                return c
        raise KeyError(pair)

    def signature(self):
        """Relabeling-invariant summary: sorted ``(k, fixed)`` pairs."""
        return tuple(sorted((c.k, c.fixed) for c in self.classes))

    def to_json(self):
        return [c.to_json() for c in self.classes]


def _irregular_pairs(perm):
    top, bot = list(perm.row), list(perm.bar_row)
    pairs = set()
    for row in (top, bot):
        s = row.index(STAR)
        pairs |= {(row[s + 1], L_SIDE), (STAR, R_SIDE), (row[s - 1], R_SIDE), (STAR, L_SIDE)}
    a_l, a_r = perm.leftmost, perm.rightmost
    pairs |= {(a_r, R_SIDE), (perm.i(a_l), R_SIDE), (a_l, L_SIDE), (perm.i(a_r), L_SIDE)}
    return pairs


def singularities(perm):
    """Classes of endpoint labels under the gluing relation, with cone angles."""
    top, bot = list(perm.row), list(perm.bar_row)
    items = [(x, s) for x in top for s in (L_SIDE, R_SIDE)]
    uf = _UnionFind(items)
    relations = []
    for row in (top, bot):
        for x, y in zip(row, row[1:]):
            relations.append(((x, R_SIDE), (y, L_SIDE)))
    a_l, a_r = perm.leftmost, perm.rightmost
    relations.append(((a_r, R_SIDE), (perm.i(a_l), R_SIDE)))
    relations.append(((a_l, L_SIDE), (perm.i(a_r), L_SIDE)))
    for a, b in relations:
        uf.union(a, b)
    k = Counter()
    for x, y in zip(top, top[1:]):
        if STAR not in (x, y):
            k[uf.find((x, R_SIDE))] += 1
    groups = {}
    for it in items:
        groups.setdefault(uf.find(it), []).append(it)
    irregular = _irregular_pairs(perm)
    classes = []
    for root, members in groups.items():
        image = uf.find(_pair_involution(perm, members[0]))
        classes.append(SingularityClass(tuple(sorted(members)), k[root], image == root,
                                        any(m in irregular for m in members)))
    classes.sort(key=lambda c: (-c.k, c.members))
    return SingularityTable(perm, classes, relations)


@dataclass
class StratumData:
    multiplicities: tuple      # upstairs, as zeros of the squared 1-form, sorted descending
    genus: int                 # upstairs genus
    orders: tuple              # upstairs zero orders of the 1-form (multiplicity / 2)
    quotient: tuple            # multiplicities of the quadratic differential downstairs
    quotient_genus: int
    symbol: tuple              # (number of poles, ((order, count), ...), epsilon)
    cover: tuple               # ((downstairs l, upstairs multiplicities), ...)

    def to_json(self):
        return {"multiplicities": list(self.multiplicities), "genus": self.genus,
                "orders": list(self.orders), "quotient": list(self.quotient),
                "quotient_genus": self.quotient_genus,
                "symbol": {"poles": self.symbol[0], "zeros": {str(a): b for a, b in self.symbol[1]},
                           "epsilon": self.symbol[2]},
                "cover": [[l, list(up)] for l, up in self.cover]}

    def check(self):
        """Consistency of the multiplicity sums and the double-cover genus formula."""
        odd = sum(1 for l in self.quotient if l % 2)
        return (sum(self.multiplicities) == 4 * self.genus - 4
                and sum(self.quotient) == 4 * self.quotient_genus - 4
                and 2 * self.genus == 2 * (2 * self.quotient_genus - 1) + odd)


def stratum(perm):
    """Upstairs and quotient stratum data from the singularity table."""
    table = singularities(perm)
    mult = sorted((c.multiplicity for c in table.classes), reverse=True)
    total = sum(mult)
    if total % 4:
        raise SurfaceError(f"multiplicities sum to {total}, not a multiple of 4")
    genus = total // 4 + 1
    # quotient by the involution: fixed points and swapped pairs
    cover = []
    used = set()
    uf_index = {m: c for c in table.classes for m in c.members}
    for c in table.classes:
        if id(c) in used:
            continue
        used.add(id(c))
        if c.fixed:
            cover.append((c.multiplicity // 2 - 1, (c.multiplicity,)))
        else:
            twin = uf_index[_pair_involution(perm, c.members[0])]
            used.add(id(twin))
            cover.append((c.multiplicity, (c.multiplicity, twin.multiplicity)))
    cover.sort(key=lambda t: (-t[0], t[1]))
    quotient = tuple(l for l, _ in cover)
    qtotal = sum(quotient)
    if qtotal % 4:
        raise SurfaceError(f"quotient multiplicities sum to {qtotal}")
    qgenus = qtotal // 4 + 1
    zeros = Counter(l for l in quotient if l > 0)
    symbol = (sum(1 for l in quotient if l == -1), tuple(sorted(zeros.items())), -1)
    return StratumData(tuple(mult), genus, tuple(m // 2 for m in mult), quotient, qgenus, symbol,
                       tuple(cover))


# flows on the surface


def _locate(partition, x):
    for x0, x1, letter in partition:
        if x0 < x < x1:
            return letter
    return None


def _endpoint_pair(surface, x, level):
    part = surface.top_partition() if level == TOP else surface.bottom_partition()
    for x0, x1, letter in part:
        if x == x0:
            return (letter, L_SIDE)
        if x == x1:
            return (letter, R_SIDE)
    return None


def vertical_first_return(surface, point, direction=1):
    """Follow the vertical flow from ``point`` to the next hit of the base interval.

    Northbound (``direction=1``) a point of ``R^t_a`` at height ``y`` reaches the
    top after ``h_a - y`` and reappears at ``x + w_a`` on the base; a point on
    the base itself uses the top rectangle above it and takes time ``h_a``.
    Southbound is the mirror image through the bottom rectangles.  Returns
    ``(SurfacePoint on the base, time)``.
    """
    perm = surface.perm
    level = TOP if direction > 0 else BOTTOM
    x, y = Fraction(point.x), Fraction(point.y)
    if point.rect is None or point.rect[1] != level:
        part = surface.top_partition() if level == TOP else surface.bottom_partition()
        letter = _locate(part, x)
        if letter is None:
            pair = _endpoint_pair(surface, x, level)
            cls = singularities(perm).class_of(pair) if pair and pair[0] != STAR else None
            raise HitsSingularity(f"x = {x} lies on a vertical through a vertex", cls)
        if point.rect is None:
            y = Fraction(0)
    else:
        letter = point.rect[0]
        rect = surface.rectangles[point.rect]
        if not rect.contains(x, y):
            raise ValueError(f"point {point} is not inside {point.rect}")
        if x in (rect.x0, rect.x1):
            raise HitsSingularity("point on a vertical side", None)
    c = perm.cls(letter)
    h = surface.h[c]
    shift = surface.w[c]
    if direction > 0:
        return SurfacePoint(None, x + shift), h - y
    return SurfacePoint(None, x - shift), h + y


def involution(surface, point):
    """``I(x) = -x``: ``R^t_a`` goes to ``R^b_{i(a)}`` and the base to itself."""
    if point.rect is None:
        return SurfacePoint(None, -point.x, -point.y)
    letter, level = point.rect
    other = BOTTOM if level == TOP else TOP
    return SurfacePoint((surface.perm.i(letter), other), -point.x, -point.y)


def surface_json(surface):
    return json.dumps(surface.to_json(), indent=2, sort_keys=True)
