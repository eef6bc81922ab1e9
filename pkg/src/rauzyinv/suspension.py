"""
Suspension data: the cone of admissible ``tau``, heights, widths, the
invertible extension of the induction and the scaling flow.

A point is a triple ``(lambda, pi, tau)``.  Heights are ``h = -Omega tau`` and
widths ``w = Omega lambda``.  One induction step acts on ``lambda`` and ``tau``
by the same rule (the winner's coordinate loses the loser's), while heights
and widths transform by ``B``.
"""

import csv
import io
import json
import math
from collections import deque
from fractions import Fraction

from . import linalg
from .combinatorics import LEFT, RIGHT, MarkedPermutation, Path
from .induction import LengthData, NotInDomain, rauzy_step

INTERIOR = "interior"
BOUNDARY = "boundary"
OUTSIDE = "outside"


class OffBalanceError(ValueError):
    pass


class FlowUndefined(ValueError):
    pass


def omega(perm):
    """Antisymmetric matrix ``Omega(pi)`` indexed by classes."""
    d = perm.d
    reps = [perm.representative(k) for k in range(d)]
    M = [perm.M(x) for x in reps]
    m = [perm.m(x) for x in reps]
    rows = []
    for a in range(d):
        row = []
        for b in range(d):
            if M[a] < m[b]:
                row.append(2)
            elif M[b] < m[a]:
                row.append(-2)
            elif m[a] < m[b] < M[a] < M[b]:
                row.append(1)
            elif m[b] < m[a] < M[b] < M[a]:
                row.append(-1)
            else:
                row.append(0)
        rows.append(tuple(row))
    return tuple(rows)


def heights(perm, tau):
    return tuple(-x for x in linalg.matvec(omega(perm), tau))


def widths(perm, lam):
    vals = lam.values if isinstance(lam, LengthData) else lam
    return linalg.matvec(omega(perm), vals)


def theta_functionals(perm):
    """Partial-sum functionals defining the cone, as ``(coeffs, sign)`` pairs.

    ``sign`` is ``+1`` when the functional must be positive and ``-1`` when it
    must be negative.
    """
    d = perm.d
    star = perm.star
    n = 2 * d + 1
    out = []
    acc = [0] * d
    for k in range(star + 1, n):
        acc[perm.cls(perm.row[k - 1])] += 1
        out.append((tuple(acc), 1))
    acc = [0] * d
    for k in range(star - 1, 1, -1):
        acc[perm.cls(perm.row[k - 1])] += 1
        out.append((tuple(acc), -1))
    return out


def in_balance(perm, tau):
    return linalg.dot(perm.balance_vector(), tau) == 0


def in_theta(perm, tau, tol=0):
    """Classify ``tau`` as ``interior``, ``boundary`` (of the closed cone) or ``outside``."""
    s = linalg.dot(perm.balance_vector(), tau)
    if abs(s) > tol:
        raise OffBalanceError(f"tau is off the balance hyperplane (residual {s})")
    if all(x == 0 for x in tau):
        return OUTSIDE
    strict = True
    for coeffs, sign in theta_functionals(perm):
        val = sign * linalg.dot(coeffs, tau)
        if val < -tol:
            return OUTSIDE
        if val <= tol:
            strict = False
    return INTERIOR if strict else BOUNDARY


def theta_margin(perm, tau):
    """Smallest signed slack over the defining inequalities."""
    return min(sign * linalg.dot(c, tau) for c, sign in theta_functionals(perm))


def area(perm, lam, tau):
    vals = lam.values if isinstance(lam, LengthData) else lam
    return -2 * linalg.dot(vals, linalg.matvec(omega(perm), tau))


def push_tau(path, tau):
    """``(B_gamma^*)^{-1} tau``, computed arrow by arrow."""
    t = list(tau)
    for a in path.arrows:
        t[a.winner_class] -= t[a.loser_class]
    return tuple(t)


def pull_tau(path, tau):
    """``B_gamma^* tau``."""
    t = list(tau)
    for a in reversed(path.arrows):
        t[a.winner_class] += t[a.loser_class]
    return tuple(t)


class SuspensionPoint:
    """A triple ``(lambda, pi, tau)`` with cached derived vectors."""

    __slots__ = ("lam", "perm", "tau", "_omega")

    def __init__(self, lam, perm, tau, check=True):
        if not isinstance(lam, LengthData):
            lam = LengthData(perm, lam, check=check)
        tau = tuple(Fraction(x) if isinstance(x, int) else x for x in tau)
        self.lam = lam
        self.perm = perm
        self.tau = tau
        self._omega = None
        if check:
            exact = all(isinstance(x, Fraction) for x in tau)
            tol = 0 if exact else 1e-9 * (1 + max(abs(x) for x in tau))
            s = linalg.dot(perm.balance_vector(), tau)
            if abs(s) > tol:
                raise OffBalanceError(f"tau is off the balance hyperplane (residual {s})")

    @property
    def omega(self):
        if self._omega is None:
            self._omega = omega(self.perm)
        return self._omega

    @property
    def h(self):
        return tuple(-x for x in linalg.matvec(self.omega, self.tau))

    @property
    def w(self):
        return linalg.matvec(self.omega, self.lam.values)

    @property
    def zeta(self):
        return tuple(complex(float(a), float(b)) for a, b in zip(self.lam.values, self.tau))

    @property
    def area(self):
        return 2 * linalg.dot(self.lam.values, self.h)

    @property
    def phi(self):
        return self.lam.norm()

    def as_float(self):
        return SuspensionPoint(self.lam.as_float(), self.perm, tuple(float(x) for x in self.tau), check=False)

    def scaled(self, t):
        """Teichmueller scaling ``(e^t lambda, pi, e^-t tau)``."""
        e = math.exp(t)
        lam = LengthData(self.perm, [float(x) * e for x in self.lam.values], check=False)
        return SuspensionPoint(lam, self.perm, tuple(float(x) / e for x in self.tau), check=False)

    def to_json(self):
        return {
            "perm": str(self.perm),
            "lambda": [_num(x) for x in self.lam.values],
            "tau": [_num(x) for x in self.tau],
        }

    @classmethod
    def from_json(cls, data):
        perm = MarkedPermutation.from_string(data["perm"])
        return cls([_unnum(x) for x in data["lambda"]], perm, [_unnum(x) for x in data["tau"]])

    def __repr__(self):
        return f"SuspensionPoint({str(self.perm)!r}, {self.lam.values}, {self.tau})"


def _num(x):
    if isinstance(x, Fraction):
        return {"numerator": str(x.numerator), "denominator": str(x.denominator)}
    return repr(float(x))


def _unnum(x):
    if isinstance(x, dict):
        return Fraction(int(x["numerator"]), int(x["denominator"]))
    return float(x)


def extended_step(x):
    """Apply the extended induction map; returns ``(point, arrow)``."""
    lam2, perm2, arrow = rauzy_step(x.lam)
    tau2 = list(x.tau)
    tau2[arrow.winner_class] -= tau2[arrow.loser_class]
    return SuspensionPoint(lam2, perm2, tuple(tau2), check=False), arrow


def incoming_arrow(perm, side):
    """The unique arrow of the given side ending at ``perm``, or ``None``."""
    row = list(perm.row)
    if side == LEFT:
        alpha = row[0]
        k = row.index(perm.i(alpha)) + 1
        if k >= len(row):
            return None
        beta = row.pop(k)
        row.append(beta)
    else:
        beta = row[-1]
        k = row.index(perm.i(beta)) - 1
        if k < 0:
            return None
        alpha = row.pop(k)
        row.insert(0, alpha)
    if "*" in (row[0], row[-1]):
        return None
    start = MarkedPermutation(row, perm.alphabet)
    if not start.is_valid():
        return None
    a = start.arrow(side)
    if a is None or a.end != perm:
        return None
    return a


def extended_step_inverse(x):
    """Inverse of :func:`extended_step`; the side is read off the sign of ``sum tau``."""
    s = sum(x.tau)
    if s == 0:
        raise NotInDomain("sum of tau vanishes; the preimage side is undetermined")
    side = LEFT if s > 0 else RIGHT
    a = incoming_arrow(x.perm, side)
    if a is None:
        raise NotInDomain(f"no {side} arrow ends at {x.perm}")
    lam = list(x.lam.values)
    tau = list(x.tau)
    lam[a.winner_class] += lam[a.loser_class]
    tau[a.winner_class] += tau[a.loser_class]
    return SuspensionPoint(LengthData(a.start, lam, check=False), a.start, tuple(tau), check=False), a


def _forward_ok(x):
    try:
        return extended_step(x)[0]
    except NotInDomain:
        return None


def in_fundamental_domain(x):
    phi = x.phi
    nxt = _forward_ok(x)
    if nxt is not None:
        if nxt.phi < 1 <= phi:
            return True
    elif phi >= 1:
        return True
    if phi < 1:
        try:
            extended_step_inverse(x)
        except NotInDomain:
            return True
    return False


def reduce_to_domain(x, max_steps=100000):
    """Move ``x`` along its orbit into the fundamental domain.

    Returns ``(point, net_steps, arrows_forward)``; backward steps count as -1.
    """
    n = 0
    forward = []
    for _ in range(max_steps):
        if x.phi < 1:
            try:
                x, a = extended_step_inverse(x)
            except NotInDomain:
                return x, n, forward
            n -= 1
            if forward:
                forward.pop()
            continue
        try:
            y, a = extended_step(x)
        except NotInDomain:
            return x, n, forward
        if y.phi < 1:
            return x, n, forward
        x = y
        n += 1
        forward.append(a)
    raise FlowUndefined(f"no return to the fundamental domain within {max_steps} steps")


def veech_flow(x, t, max_steps=100000):
    """Scale by ``e^t`` then renormalize into the fundamental domain."""
    if t == 0 and in_fundamental_domain(x):
        return x
    y = x.scaled(t)
    try:
        z, _, _ = reduce_to_domain(y, max_steps)
    except NotInDomain as exc:
        raise FlowUndefined(str(exc)) from exc
    return z


def veech_trajectory(x, times, max_steps=100000):
    """Points of the flow at increasing ``times`` (relative to ``x``), with step counts."""
    out = []
    cur = x.as_float()
    last = 0.0
    for t in times:
        y = cur.scaled(t - last)
        z, n, _ = reduce_to_domain(y, max_steps)
        out.append((t, n, z))
        cur, last = z, t
    return out


def trajectory_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "n_steps", "norm", "min_h", "area"])
    for t, n, z in rows:
        w.writerow([repr(float(t)), n, repr(float(z.phi)), repr(float(min(z.h))), repr(float(z.area))])
    return buf.getvalue()


def h_subspace(perm):
    """Basis of ``H(pi) = Omega(pi) S_pi``."""
    basis = linalg.nullspace([perm.balance_vector()], perm.d)
    om = omega(perm)
    return [linalg.matvec(om, b) for b in basis]


def h_subspace_rank(perm):
    """``(dim H(pi), v_pi in H(pi))``."""
    gens = h_subspace(perm)
    r = linalg.rank(gens)
    contains = linalg.rank(gens + [perm.balance_vector()]) == r
    return r, contains


def lemma_theta_prime_vector(perm):
    """The boundary vector ``e_a - e_b`` for rows of the two special forms, else ``None``.

    Forms: ``a .. i(a) .. b .. i(b) .. *`` or ``a .. b .. i(a) .. i(b) .. *``,
    all four letters left of the marker.
    """
    left = perm.left_letters
    pos = {x: k for k, x in enumerate(left)}
    for a in left:
        ia = perm.i(a)
        if ia not in pos or pos[ia] < pos[a]:
            continue
        for b in left:
            ib = perm.i(b)
            if b in (a, ia) or ib not in pos or pos[ib] < pos[b]:
                continue
            if pos[b] > pos[ia] or pos[a] < pos[b] < pos[ia] < pos[ib]:
                tau = [0] * perm.d
                tau[perm.cls(a)] = 1
                tau[perm.cls(b)] = -1
                return tuple(Fraction(x) for x in tau)
    return None


def _bfs_tree(diagram, root):
    parent = {root: None}
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for a in diagram.out[v].values():
            if a.end not in parent:
                parent[a.end] = a
                queue.append(a.end)
    return parent


def _tree_path(parent, root, target):
    arrows = []
    v = target
    while v != root:
        a = parent[v]
        arrows.append(a)
        v = a.start
    return Path(root, reversed(arrows))


class ThetaSampler:
    """Draw exact interior points of the cone at any vertex of a class.

    A boundary vector at a vertex of special form is pushed along several
    long paths, each starting with a complete enough random walk; a random
    positive combination of the images is returned.
    """

    def __init__(self, diagram, rng, n_paths=3, completeness=None, max_walk=10000):
        from .combinatorics import classify_completeness

        self.diagram = diagram
        d = next(iter(diagram.vertices)).d
        k_needed = completeness if completeness is not None else 4 * d - 6
        base = None
        for v in diagram.sorted_vertices():
            tau0 = lemma_theta_prime_vector(v)
            if tau0 is not None:
                base = v
                break
        if base is None:
            raise ValueError("no vertex of the special forms in this class")
        self.base = base
        self.tau0 = tau0
        self.walks = []
        for _ in range(n_paths):
            arrows = []
            cur = base
            while classify_completeness(Path(base, arrows))[1] < k_needed:
                if len(arrows) > max_walk:
                    raise RuntimeError("random walk failed to become complete")
                out = list(diagram.out[cur].values())
                a = out[int(rng.integers(len(out)))]
                arrows.append(a)
                cur = a.end
            walk = Path(base, arrows)
            self.walks.append((walk, push_tau(walk, tau0), _bfs_tree(diagram, walk.end)))

    def images(self, perm):
        out = []
        for walk, tau1, tree in self.walks:
            tail = _tree_path(tree, walk.end, perm)
            out.append(push_tau(tail, tau1))
        return out

    def sample(self, perm, rng):
        imgs = self.images(perm)
        weights = [Fraction(int(rng.integers(1, 1000))) for _ in imgs]
        total = sum(weights)
        d = perm.d
        tau = tuple(sum(w * img[k] for w, img in zip(weights, imgs)) / total for k in range(d))
        return tau


def sample_theta(perm, rng, diagram=None, sampler=None):
    """One exact interior point of the cone at ``perm``."""
    if sampler is None:
        from .combinatorics import enumerate_class

        diagram = diagram or enumerate_class(perm)
        sampler = ThetaSampler(diagram, rng)
    tau = sampler.sample(perm, rng)
    if in_theta(perm, tau) != INTERIOR:
        raise RuntimeError(f"sampled tau {tau} is not interior at {perm}")
    return tau


def dumps_point(x):
    return json.dumps(x.to_json(), sort_keys=True)
