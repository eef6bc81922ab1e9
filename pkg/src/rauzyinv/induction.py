"""
Length data, interval exchanges with involution and Rauzy induction.

Exact arithmetic with :class:`fractions.Fraction` is the default.  Passing
floats gives a fast mode in which the cocycle identities only hold up to
rounding.

    >>> from fractions import Fraction as F
    >>> p = MarkedPermutation.from_string("D iB iD C iC * A iA B")
    >>> lam = LengthData(p, (2, F(1, 2), 1, 1))
    >>> lam2, p2, arrow = rauzy_step(lam, p)
    >>> str(p2), arrow.winner, lam2.values[3]
    ('D iB iD B C iC * A iA', 'D', Fraction(1, 2))
"""

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction

from . import linalg
from .combinatorics import LEFT, RIGHT, STAR, MarkedPermutation, Path  # noqa: F401 (doctest)


class NotInDomain(ValueError):
    """The point lies on the excluded set where induction is undefined."""


class BalanceError(ValueError):
    pass


def _exact(x):
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    return x


class LengthData:
    """Positive class lengths ``lambda`` compatible with ``pi``.

    ``values`` is ordered like ``pi.classes``.
    """

    __slots__ = ("perm", "values")

    def __init__(self, perm, values, check=True):
        values = tuple(_exact(v) for v in values)
        if len(values) != perm.d:
            raise ValueError(f"expected {perm.d} lengths, got {len(values)}")
        self.perm = perm
        self.values = values
        if check:
            if any(v <= 0 for v in values):
                raise ValueError("lengths must be positive")
            left, right = self.side_sums()
            if not _close(left, right):
                raise BalanceError(f"unbalanced lengths: left sum {left} != right sum {right}")

    @classmethod
    def from_dict(cls, perm, mapping):
        return cls(perm, [mapping[c] for c in perm.classes])

    @property
    def exact(self):
        return all(isinstance(v, Fraction) for v in self.values)

    def side_sums(self):
        p = self.perm
        left = sum(self.values[p.cls(x)] for x in p.left_letters)
        right = sum(self.values[p.cls(x)] for x in p.right_letters)
        return left, right

    def __getitem__(self, letter):
        return self.values[self.perm.cls(letter)]

    def norm(self):
        return sum(self.values)

    def normalized(self):
        n = self.norm()
        return LengthData(self.perm, [v / n for v in self.values], check=False)

    def scaled(self, s):
        return LengthData(self.perm, [v * s for v in self.values], check=False)

    def as_float(self):
        return LengthData(self.perm, [float(v) for v in self.values], check=False)

    def __eq__(self, other):
        return isinstance(other, LengthData) and self.perm == other.perm and self.values == other.values

    def __repr__(self):
        return f"LengthData({str(self.perm)!r}, {self.values})"


def _close(a, b):
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a == b
    return math.isclose(float(a), float(b), rel_tol=1e-9, abs_tol=1e-12)


def _randint(rng, n):
    """Uniform integer in ``[1, n)``, also for ``n`` above the int64 range."""
    if n < 2**62:
        return int(rng.integers(1, n))
    nbytes = (n.bit_length() + 7) // 8 + 8
    return 1 + int.from_bytes(rng.bytes(nbytes), "big") % (n - 1)


def random_length_data(perm, rng, denominator=None):
    """Random balanced lengths.

    Draws a positive vector and projects onto the balance hyperplane by
    adjusting along a positive direction.  With ``denominator`` the result is
    rational; otherwise floats.  Denominators beyond 64 bits are fine and
    give exact orbits that avoid ties for a long time.
    """
    v = perm.balance_vector()
    d = perm.d
    for _ in range(1000):
        if denominator:
            x = [Fraction(_randint(rng, denominator), denominator) for _ in range(d)]
        else:
            x = [float(rng.random()) + 1e-3 for _ in range(d)]
        s = linalg.dot(v, x)
        # fix the imbalance using one class whose coefficient has the opposite sign
        cand = [k for k in range(d) if v[k] * s < 0]
        if s == 0:
            return LengthData(perm, x)
        if not cand:
            continue
        k = cand[int(rng.integers(len(cand)))]
        x[k] = x[k] - s / v[k]
        if x[k] > 0:
            return LengthData(perm, x)
    raise ValueError(f"could not sample lengths for {perm}")


class IetWithInvolution:
    """The piecewise translation of ``I = (-|I|/2, |I|/2)`` defined by ``(lambda, pi)``.

    Subintervals are closed on the left and open on the right.  Letter ``x``
    occupies a subinterval in ``pi``-order on top and the letter ``i(x)`` has
    its image slot in ``pi_bar``-order; the map sends the top slot of ``x``
    to the bottom slot of ``x``.
    """

    def __init__(self, lam, perm=None):
        perm = perm or lam.perm
        self.perm = perm
        self.lam = lam
        total = sum(lam[x] for x in perm.row if x != STAR)
        self.length = total
        self.top = self._slots(perm.row, lam, -total / 2)
        self.bottom = self._slots(perm.bar_row, lam, -total / 2)

    @staticmethod
    def _slots(row, lam, start):
        out = {}
        cur = start
        for x in row:
            if x == STAR:
                continue
            out[x] = (cur, cur + lam[x])
            cur = cur + lam[x]
        return out

    def breakpoints(self):
        return sorted({a for a, _ in self.top.values()} | {b for _, b in self.top.values()})

    def offset(self, letter):
        return self.bottom[letter][0] - self.top[letter][0]

    def locate(self, x):
        for letter, (a, b) in self.top.items():
            if a <= x < b:
                return letter
        raise ValueError(f"{x} lies outside the interval")

    def __call__(self, x):
        if x in self.breakpoints():
            raise ValueError(f"{x} is a breakpoint; the map is not evaluated there")
        letter = self.locate(x)
        return x + self.offset(letter)


def build_iet(lam, perm=None):
    return IetWithInvolution(lam, perm)


def rauzy_step(lam, perm=None):
    """One step of the induction map; returns ``(lam', pi', arrow)``."""
    perm = perm or lam.perm
    alpha, beta = perm.leftmost, perm.rightmost
    la, lb = lam[alpha], lam[beta]
    if la == lb:
        raise NotInDomain(f"tie between {alpha} and {beta} at {perm}")
    side = LEFT if la > lb else RIGHT
    arrow = perm.arrow(side)
    if arrow is None:
        raise NotInDomain(f"{side} operation undefined at {perm}")
    vals = list(lam.values)
    vals[arrow.winner_class] -= vals[arrow.loser_class]
    return LengthData(arrow.end, vals, check=False), arrow.end, arrow


@dataclass
class Orbit:
    states: list
    path: Path
    error: str = ""

    @property
    def complete(self):
        return not self.error


def iterate(lam, perm=None, n=1):
    """Iterate ``n`` steps; stops early (keeping the prefix) at a tie."""
    perm = perm or lam.perm
    states = [lam]
    arrows = []
    error = ""
    cur = lam
    for k in range(n):
        try:
            cur, _, arrow = rauzy_step(cur)
        except NotInDomain as exc:
            error = f"step {k + 1}: {exc}"
            break
        arrows.append(arrow)
        states.append(cur)
    return Orbit(states, Path(perm, arrows), error)


def renormalized_step(lam, perm=None):
    """Induction followed by rescaling to unit norm; returns ``(lam', pi', r)``."""
    n0 = lam.norm()
    new, perm2, _ = rauzy_step(lam, perm)
    ratio = new.norm() / n0
    r = -math.log(ratio)
    return new.scaled(1 / new.norm()), perm2, r


def cylinder_contains(path, lam, perm=None):
    """Does the orbit of ``(lam, pi)`` follow ``path``?"""
    perm = perm or lam.perm
    if path.start != perm:
        return False
    cur = lam
    for a in path.arrows:
        try:
            cur, _, arrow = rauzy_step(cur)
        except NotInDomain:
            return False
        if arrow != a:
            return False
    return True


def cylinder_preimage(path, lam):
    """Solve ``B_gamma^* x = lam``; membership iff ``x`` is positive."""
    bt = linalg.transpose(path.matrix())
    return linalg.solve(bt, lam.values)


def orbit_csv(orbit):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "side", "winner", "loser", "r", "norm"])
    for k, arrow in enumerate(orbit.path.arrows, start=1):
        before, after = orbit.states[k - 1], orbit.states[k]
        r = -math.log(after.norm() / before.norm())
        w.writerow([k, arrow.side, arrow.winner, arrow.loser, repr(r), str(after.norm())])
    return buf.getvalue()


def lemma_left_witness(perm):
    """Balanced positive lengths with ``lam_alpha > lam_beta``, or ``None``.

    Found by a small linear program maximizing the minimal slack.
    """
    return _lp_witness(perm, LEFT)


def _lp_witness(perm, side):
    from scipy.optimize import linprog

    d = perm.d
    alpha, beta = perm.leftmost, perm.rightmost
    a, b = perm.cls(alpha), perm.cls(beta)
    if a == b:
        return None
    # maximize s subject to lam >= s, lam_win - lam_lose >= s, balance, sum lam = 1
    win, lose = (a, b) if side == LEFT else (b, a)
    c = [0] * d + [-1]
    a_ub, b_ub = [], []
    for k in range(d):
        row = [0] * (d + 1)
        row[k] = -1
        row[d] = 1
        a_ub.append(row)
        b_ub.append(0)
    row = [0] * (d + 1)
    row[win], row[lose], row[d] = -1, 1, 1
    a_ub.append(row)
    b_ub.append(0)
    v = perm.balance_vector()
    a_eq = [list(v) + [0], [1] * d + [0]]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[0, 1],
                  bounds=[(0, None)] * (d + 1), method="highs")
    if res.status != 0 or res.x[d] <= 1e-9:
        return None
    return tuple(float(x) for x in res.x[:d])


def lemma_right_witness(perm):
    return _lp_witness(perm, RIGHT)


class AcceleratedInduction:
    """Floating-point induction on a compiled diagram with run skipping.

    While one letter keeps winning on the same side only the winner's
    coordinate changes, so whole periods of a same-side run can be applied
    at once.  ``tau`` (if given) is carried along with the same linear rule.
    Lengths are renormalized to unit norm when they get small; the
    accumulated logarithmic scale is the elapsed Teichmueller time.
    """

    def __init__(self, compiled, margin=0):
        self.c = compiled
        self.margin = margin  # extra periods kept for step-by-step replay at the end of a run
        self._chains = {}

    def chain(self, v, side):
        """Vertices and loser classes along repeated ``side`` arrows: ``(verts, losers, cycle_start)``."""
        key = (v, side)
        ch = self._chains.get(key)
        if ch is not None:
            return ch
        verts, losers = [], []
        seen = {}
        cur = v
        cycle_start = None
        while True:
            if cur in seen:
                cycle_start = seen[cur]
                break
            e = self.c.step[cur][side]
            if e is None:
                break
            seen[cur] = len(verts)
            verts.append(cur)
            losers.append(e[2])
            cur = e[0]
        ch = (verts, losers, cycle_start)
        self._chains[key] = ch
        return ch

    def skip(self, v, side, lam, tau=None):
        """Apply whole cycles of the current run when safe; returns ``(v, steps)``."""
        verts, losers, cs = self.chain(v, side)
        if cs is None or cs != 0:
            return v, 0
        w = self.c.step[v][side][1]
        s_lam = sum(lam[k] for k in losers)
        top = max(lam[k] for k in losers)
        m = int((lam[w] - top) / s_lam) - 1 - self.margin
        if m <= 0:
            return v, 0
        lam[w] -= m * s_lam
        if tau is not None:
            tau[w] -= m * sum(tau[k] for k in losers)
        return v, m * len(verts)
