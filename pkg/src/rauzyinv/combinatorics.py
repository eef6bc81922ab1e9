r"""
Marked permutations with involution and their Rauzy diagrams.

A marked permutation is a row containing every letter of an alphabet with a
fixed-point-free involution, plus a marker ``*``.  Rows are written as
whitespace separated tokens where the partner of ``X`` is spelled ``iX``::

    >>> p = MarkedPermutation.from_string("D iB iD C iC * A iA B")
    >>> p.is_valid()
    True
    >>> q, winner, loser = p.apply("left")
    >>> str(q), winner, loser
    ('D iB iD B C iC * A iA', 'D', 'B')

Vectors indexed by involution classes are plain tuples ordered like
``alphabet.classes``.
"""

from collections import deque
from dataclasses import dataclass
import json

from . import linalg

LEFT = "left"
RIGHT = "right"
STAR = "*"


class StructuralError(ValueError):
    """Malformed row or non-composable path."""


class IrreducibleError(ValueError):
    """Raised when an operation needs an irreducible permutation."""


def partner_name(letter):
    return letter[1:] if letter.startswith("i") else "i" + letter


def class_name(letter):
    return letter[1:] if letter.startswith("i") else letter


@dataclass(frozen=True)
class InvolutionAlphabet:
    """Letters, their involution and the quotient classes.

    ``classes`` is sorted so that two alphabets built from the same letters
    index vectors identically.
    """

    letters: tuple
    pairing: tuple  # sorted (letter, partner) items

    def __post_init__(self):
        pair = dict(self.pairing)
        if len(self.letters) < 4 or len(self.letters) % 2:
            raise StructuralError("need an even number (at least 4) of letters")
        if set(pair) != set(self.letters) or len(set(self.letters)) != len(self.letters):
            raise StructuralError("pairing must cover the letters exactly once")
        for a, b in pair.items():
            if a == b or pair.get(b) != a:
                raise StructuralError(f"involution broken at {a!r}")

    @classmethod
    def from_letters(cls, letters):
        letters = tuple(letters)
        pairing = tuple(sorted((x, partner_name(x)) for x in letters))
        return cls(letters, pairing)

    @property
    def d(self):
        return len(self.letters) // 2

    def i(self, letter):
        return dict(self.pairing)[letter]

    @property
    def classes(self):
        return tuple(sorted({self.class_of(x) for x in self.letters}))

    def class_of(self, letter):
        partner = self.i(letter)
        if class_name(letter) == class_name(partner):
            return class_name(letter)
        return min(letter, partner)

    def class_index(self, letter):
        return self.classes.index(self.class_of(letter))


class MarkedPermutation:
    r"""
    A bijection from letters and ``*`` onto positions ``1 .. 2d+1``.

    Instances are immutable and hashable; equality compares the row.
    """

    __slots__ = ("alphabet", "row", "_pos", "_cls", "_hash")

    def __init__(self, row, alphabet=None):
        row = tuple(row)
        if row.count(STAR) != 1:
            raise StructuralError("row must contain the marker '*' exactly once")
        letters = tuple(x for x in row if x != STAR)
        if len(set(letters)) != len(letters):
            raise StructuralError("duplicate letter in row")
        if alphabet is None:
            alphabet = InvolutionAlphabet.from_letters(letters)
        elif set(alphabet.letters) != set(letters):
            raise StructuralError("row letters differ from the alphabet")
        self.alphabet = alphabet
        self.row = row
        self._pos = {x: k + 1 for k, x in enumerate(row)}
        self._cls = {x: alphabet.class_index(x) for x in letters}
        self._hash = hash(row)

    @classmethod
    def from_string(cls, text, alphabet=None):
        tokens = text.split()
        for t in tokens:
            if t != STAR and partner_name(t) not in tokens:
                raise StructuralError(f"partner of {t!r} missing from row")
        return cls(tokens, alphabet)

    def __str__(self):
        return " ".join(self.row)

    def __repr__(self):
        return f"MarkedPermutation({str(self)!r})"

    def __eq__(self, other):
        return isinstance(other, MarkedPermutation) and self.row == other.row

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return self.row < other.row

    @property
    def d(self):
        return self.alphabet.d

    @property
    def classes(self):
        return self.alphabet.classes

    def pos(self, x):
        """Position ``pi(x)`` in ``1 .. 2d+1``."""
        return self._pos[x]

    def i(self, x):
        return self.alphabet.i(x)

    def cls(self, x):
        """Index of the involution class of letter ``x``."""
        return self._cls[x]

    @property
    def star(self):
        return self._pos[STAR]

    @property
    def left_letters(self):
        return self.row[: self.star - 1]

    @property
    def right_letters(self):
        return self.row[self.star:]

    @property
    def leftmost(self):
        return self.row[0]

    @property
    def rightmost(self):
        return self.row[-1]

    def bar_pos(self, x):
        """Position in the rearranged row: ``2d+2 - pi(i(x))``."""
        n = 2 * self.d + 2
        if x == STAR:
            return n - self.star
        return n - self._pos[self.i(x)]

    @property
    def bar_row(self):
        out = [None] * len(self.row)
        for x in self.row:
            out[self.bar_pos(x) - 1] = x
        return tuple(out)

    def M(self, x):
        return max(self._pos[x], self._pos[self.i(x)])

    def m(self, x):
        return min(self._pos[x], self._pos[self.i(x)])

    def letter_type(self, x):
        """``'simple'``, ``'left'`` (left double) or ``'right'`` (right double)."""
        a, b = self._pos[x] < self.star, self._pos[self.i(x)] < self.star
        if a != b:
            return "simple"
        return "left" if a else "right"

    def representative(self, k):
        """The letter of class ``k`` that comes first in the row."""
        return min((x for x in self._cls if self._cls[x] == k), key=self._pos.get)

    def balance_vector(self):
        r"""Normal ``v_pi``: +1 per letter left of ``*``, -1 per letter right of it."""
        v = [0] * self.d
        for x in self.left_letters:
            v[self._cls[x]] += 1
        for x in self.right_letters:
            v[self._cls[x]] -= 1
        return tuple(v)

    def is_valid(self):
        """Neither ``i(A_l)`` is inside ``A_r`` nor ``i(A_r)`` inside ``A_l``."""
        left, right = set(self.left_letters), set(self.right_letters)
        il = {self.i(x) for x in left}
        ir = {self.i(x) for x in right}
        return not (il <= right or ir <= left)

    def apply(self, side):
        """Apply the left or right operation.

        Returns ``(pi', winner, loser)`` or ``None`` when the operation is not
        defined at this row.
        """
        alpha, beta = self.row[0], self.row[-1]
        if STAR in (alpha, beta) or beta == self.i(alpha):
            return None
        if side == LEFT:
            rest = list(self.row[:-1])
            k = rest.index(self.i(alpha))
            rest.insert(k + 1, beta)
            winner, loser = alpha, beta
        elif side == RIGHT:
            rest = list(self.row[1:])
            k = rest.index(self.i(beta))
            rest.insert(k, alpha)
            winner, loser = beta, alpha
        else:
            raise ValueError(f"unknown side {side!r}")
        new = MarkedPermutation(rest, self.alphabet)
        if not new.is_valid():
            return None
        return new, winner, loser

    def arrow(self, side):
        res = self.apply(side)
        if res is None:
            return None
        end, winner, loser = res
        return Arrow(self, end, side, winner, loser)

    def arrows(self):
        return [a for a in (self.arrow(LEFT), self.arrow(RIGHT)) if a is not None]

    def relabel(self, mapping):
        """Image of the row under a letter bijection commuting with ``i``."""
        return MarkedPermutation.from_string(
            " ".join(STAR if x == STAR else mapping[x] for x in self.row))


def validate(p):
    return p.is_valid()


def apply_operation(p, side):
    return p.apply(side)


@dataclass(frozen=True)
class Arrow:
    start: MarkedPermutation
    end: MarkedPermutation
    side: str
    winner: str
    loser: str

    @property
    def winner_class(self):
        return self.start.cls(self.winner)

    @property
    def loser_class(self):
        return self.start.cls(self.loser)

    def matrix(self):
        r"""``B`` with ``B e_w = e_w + e_l`` for winner class ``w``, loser class ``l``."""
        d = self.start.d
        b = [list(r) for r in linalg.identity(d)]
        b[self.loser_class][self.winner_class] += 1
        return tuple(tuple(r) for r in b)

    @property
    def label(self):
        return ("L" if self.side == LEFT else "R")


class Path:
    """A composable sequence of arrows; the empty path sits at ``start``."""

    def __init__(self, start, arrows=()):
        arrows = tuple(arrows)
        cur = start
        for a in arrows:
            if a.start != cur:
                raise StructuralError(f"arrow starting at {a.start} does not follow {cur}")
            cur = a.end
        self.start = start
        self.arrows = arrows
        self.end = cur

    @classmethod
    def from_word(cls, start, word):
        """Build a path from a word over ``L``/``R`` (sides are deterministic)."""
        arrows = []
        cur = start
        for ch in word:
            if ch not in "LRlr":
                raise StructuralError(f"arrow words use L and R only, got {ch!r}")
            side = LEFT if ch in "Ll" else RIGHT
            a = cur.arrow(side)
            if a is None:
                raise StructuralError(f"{side} operation undefined at {cur}")
            arrows.append(a)
            cur = a.end
        return cls(start, arrows)

    def __len__(self):
        return len(self.arrows)

    def __iter__(self):
        return iter(self.arrows)

    def __eq__(self, other):
        return isinstance(other, Path) and self.start == other.start and self.arrows == other.arrows

    def __hash__(self):
        return hash((self.start, self.word))

    def __repr__(self):
        return f"Path({str(self.start)!r}, {self.word!r})"

    @property
    def word(self):
        return "".join(a.label for a in self.arrows)

    def __add__(self, other):
        if other.start != self.end:
            raise StructuralError("paths are not composable")
        return Path(self.start, self.arrows + other.arrows)

    def __getitem__(self, item):
        if isinstance(item, slice):
            arrows = self.arrows[item]
            start = arrows[0].start if arrows else (
                self.arrows[item.start].start if item.start is not None and item.start < len(self.arrows)
                else self.end)
            return Path(start, arrows)
        return self.arrows[item]

    def winner_classes(self):
        return {a.winner_class for a in self.arrows}

    def matrix(self):
        return path_matrix(self)

    def is_positive(self):
        return all(x > 0 for row in self.matrix() for x in row)


def path_matrix(path):
    r"""``B_gamma = B_{gamma_n} ... B_{gamma_1}``; identity for a vertex."""
    b = linalg.identity(path.start.d)
    for a in path.arrows:
        b = linalg.matmul(a.matrix(), b)
    return b


def classify_completeness(path):
    """Return ``(complete, k)`` with ``k`` the number of greedy complete blocks."""
    d = path.start.d
    seen = set()
    k = 0
    for a in path.arrows:
        seen.add(a.winner_class)
        if len(seen) == d:
            k += 1
            seen = set()
    return k >= 1, k


@dataclass
class CompletenessCensus:
    k: int
    max_length: object
    states: int
    checked: int
    failures: int
    exceptions: list

    @property
    def ok(self):
        return self.failures == 0


def complete_positivity_census(diagram, k, max_length=None, keep=5):
    """Check that every path becoming ``k``-complete is strictly positive.

    Positivity of a product of elementary matrices depends only on the
    zero pattern, so the search runs over states ``(vertex, support, winner
    classes of the open block, finished blocks)``.  Two paths reaching the
    same state have the same continuations, so the search is exhaustive
    over all lengths when ``max_length`` is None; otherwise the length is
    part of the state.  ``checked`` counts distinct terminal transitions and
    ``exceptions`` holds up to ``keep`` of the ``failures``.
    """
    verts = diagram.sorted_vertices()
    d = verts[0].d
    full = (1 << (d * d)) - 1
    rowmask = (1 << d) - 1
    ident = sum(1 << (r * d + r) for r in range(d))
    allwin = (1 << d) - 1
    start = [(v, ident, 0, 0, 0) for v in verts]
    parent = {s: None for s in start}
    frontier, checked, failures, bad = start, 0, 0, []

    def walk(state, arrow):
        arrows = [arrow]
        while parent[state] is not None:
            state, a = parent[state]
            arrows.append(a)
        return Path(state[0], reversed(arrows))

    while frontier:
        nxt = []
        for st in frontier:
            v, supp, wins, blocks, n = st
            for a in diagram.out[v].values():
                w, l = a.winner_class, a.loser_class
                s2 = supp | (((supp >> (w * d)) & rowmask) << (l * d))
                w2, b2 = wins | (1 << w), blocks
                if w2 == allwin:
                    b2, w2 = b2 + 1, 0
                if b2 == k:
                    checked += 1
                    if s2 != full:
                        failures += 1
                        if len(bad) < keep:
                            bad.append(walk(st, a))
                    continue
                if max_length is not None and n + 1 >= max_length:
                    continue
                new = (a.end, s2, w2, b2, 0 if max_length is None else n + 1)
                if new not in parent:
                    parent[new] = (st, a)
                    nxt.append(new)
        frontier = nxt
    return CompletenessCensus(k, max_length, len(parent), checked, failures, bad)


class RauzyDiagram:
    """Vertices and arrows of a Rauzy class with involution."""

    def __init__(self, vertices, arrows):
        self.vertices = frozenset(vertices)
        self.arrows = tuple(arrows)
        self.out = {v: {} for v in self.vertices}
        for a in self.arrows:
            self.out[a.start][a.side] = a

    def __len__(self):
        return len(self.vertices)

    def __contains__(self, p):
        return p in self.vertices

    def sorted_vertices(self):
        return sorted(self.vertices)

    def to_json(self):
        return {
            "vertices": [str(v) for v in self.sorted_vertices()],
            "arrows": [
                {"from": str(a.start), "to": str(a.end), "side": a.side,
                 "winner": a.winner, "loser": a.loser}
                for a in sorted(self.arrows, key=lambda a: (a.start.row, a.side))
            ],
        }

    def to_dot(self):
        lines = ["digraph rauzy {"]
        ids = {v: k for k, v in enumerate(self.sorted_vertices())}
        for v, k in ids.items():
            lines.append(f'  v{k} [label="{v}"];')
        for a in sorted(self.arrows, key=lambda a: (a.start.row, a.side)):
            cname = a.start.alphabet.class_of(a.winner)
            lines.append(f'  v{ids[a.start]} -> v{ids[a.end]} [label="{a.label} {cname}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def dumps(self):
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def forward_closure(p):
    """Breadth-first closure of ``p`` under both operations."""
    seen = {p}
    arrows = []
    queue = deque([p])
    while queue:
        v = queue.popleft()
        for a in v.arrows():
            arrows.append(a)
            if a.end not in seen:
                seen.add(a.end)
                queue.append(a.end)
    return RauzyDiagram(seen, arrows)


def _reaches_all(diagram, root, reverse=False):
    adj = {v: [] for v in diagram.vertices}
    for a in diagram.arrows:
        if reverse:
            adj[a.end].append(a.start)
        else:
            adj[a.start].append(a.end)
    seen = {root}
    stack = [root]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == len(diagram.vertices)


def irreducibility_report(p):
    """Return ``(ok, reason)`` for the operational irreducibility test."""
    if not p.is_valid():
        return False, "row fails the subset condition"
    diagram = forward_closure(p)
    if not diagram.arrows:
        return False, "no operation is defined"
    if not _reaches_all(diagram, p, reverse=True):
        return False, "forward closure is not strongly connected"
    winners = {a.winner_class for a in diagram.arrows}
    if len(winners) != p.d:
        return False, "some involution class never wins"
    return True, ""


def is_irreducible(p):
    return irreducibility_report(p)[0]


def enumerate_class(p):
    ok, reason = irreducibility_report(p)
    if not ok:
        raise IrreducibleError(f"{p} is not irreducible: {reason}")
    return forward_closure(p)


def iter_paths(start, max_length):
    """Yield every path from ``start`` of length ``1 .. max_length`` (DFS order)."""
    stack = [(start, ())]
    while stack:
        v, arrows = stack.pop()
        if arrows:
            yield Path(start, arrows)
        if len(arrows) < max_length:
            for a in reversed(v.arrows()):
                stack.append((a.end, arrows + (a,)))


class CompiledDiagram:
    """Integer-indexed adjacency tables for fast orbit simulation.

    ``step[v]`` is ``(left, right)`` where each entry is ``None`` or a tuple
    ``(end, winner_class, loser_class, arrow)``.  ``ends[v]`` holds the class
    indices of the leftmost and rightmost letters.
    """

    def __init__(self, diagram):
        self.diagram = diagram
        self.vertices = diagram.sorted_vertices()
        self.index = {v: k for k, v in enumerate(self.vertices)}
        self.step = []
        self.ends = []
        for v in self.vertices:
            entry = []
            for side in (LEFT, RIGHT):
                a = diagram.out[v].get(side)
                entry.append(None if a is None else
                             (self.index[a.end], a.winner_class, a.loser_class, a))
            self.step.append(tuple(entry))
            self.ends.append((v.cls(v.leftmost), v.cls(v.rightmost)))
