"""
The polytopes ``Lambda_{pi,q}``, their measures ``nu_{pi,q}`` and the
transition probabilities of the induced Markov chain on paths, together with
the distortion, tail and correlation experiments.

Measures use the volume form on ``S_pi`` normalized by the balance normal
``v_pi``: a simplex spanned by ``u_1 .. u_{d-1}`` has volume
``|det(u_1, .., u_{d-1}, n)| / (d-1)!`` for any ``n`` with ``<v_pi, n> = 1``.
"""

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import linalg
from .combinatorics import LEFT, Path


class MeasureBudgetError(RuntimeError):
    pass


@dataclass
class LambdaPolytope:
    perm: object
    q: tuple
    vertices: list
    weights: list

    @property
    def nonzero_vertices(self):
        return self.vertices[1:]


def cone_rays(perm):
    """Extreme rays of the positive balance cone: simple and left/right double pairs."""
    d = perm.d
    simple, left, right = [], [], []
    for k in range(d):
        t = perm.letter_type(perm.representative(k))
        {"simple": simple, "left": left, "right": right}[t].append(k)
    rays = []
    for k in simple:
        rays.append(tuple(int(j == k) for j in range(d)))
    for a in left:
        for b in right:
            rays.append(tuple(int(j in (a, b)) for j in range(d)))
    return rays


def polytope_vertices(perm, q):
    """Vertices of ``{lam in S_pi^+ : <lam, q> < 1}`` and their weights ``<ray, q>``."""
    q = tuple(Fraction(x) for x in q)
    if any(x <= 0 for x in q):
        raise ValueError("weights must be positive")
    verts = [tuple(Fraction(0) for _ in q)]
    weights = []
    for r in cone_rays(perm):
        w = linalg.dot(r, q)
        weights.append(w)
        verts.append(tuple(Fraction(x) / w for x in r))
    return LambdaPolytope(perm, q, verts, weights)


def _normal(v):
    vv = linalg.dot(v, v)
    return tuple(Fraction(x, vv) for x in v)


def pulling_triangulation(rays, functionals):
    """Triangulate the pointed cone generated by ``rays``.

    ``functionals`` are the nonnegative linear forms cutting out the cone;
    faces are recovered as the rays annihilated by one of them.  Returns a
    list of tuples of ray indices.
    """
    rays = [tuple(r) for r in rays]

    def dim(idx):
        return linalg.rank([rays[k] for k in idx]) if idx else 0

    def tri(idx):
        k = dim(idx)
        if len(idx) == k:
            return [tuple(idx)]
        apex = idx[0]
        out = []
        seen = set()
        for f in functionals:
            sub = tuple(j for j in idx if linalg.dot(f, rays[j]) == 0)
            if apex in sub or sub in seen or len(sub) == len(idx):
                continue
            if dim(sub) != k - 1:
                continue
            seen.add(sub)
            for s in tri(sub):
                out.append((apex,) + s)
        return out

    return tri(tuple(range(len(rays))))


def _cone_volume(rays, triangulation, q, v):
    """Measure of ``{x in cone : <x, q> < 1}`` in the form normalized by ``v``."""
    d = len(q)
    n = _normal(v)
    total = Fraction(0)
    fact = math.factorial(d - 1)
    for simplex in triangulation:
        cols = []
        for k in simplex:
            r = rays[k]
            w = linalg.dot(r, q)
            cols.append(tuple(Fraction(x) / w for x in r))
        cols.append(n)
        total += abs(linalg.det(linalg.transpose(cols)))
    return total / fact


_TRI_CACHE = {}


def _perm_triangulation(perm):
    tri = _TRI_CACHE.get(perm)
    if tri is None:
        rays = cone_rays(perm)
        coords = [tuple(int(j == k) for j in range(perm.d)) for k in range(perm.d)]
        tri = (rays, pulling_triangulation(rays, coords))
        _TRI_CACHE[perm] = tri
    return tri


def nu_exact(perm, q):
    """``nu_{pi,q}(Lambda_{pi,q})`` exactly."""
    q = tuple(Fraction(x) for x in q)
    rays, tri = _perm_triangulation(perm)
    return _cone_volume(rays, tri, q, perm.balance_vector())


def nu_cylinder_exact(path, q):
    """Measure of ``Lambda_{pi,q}`` intersected with the cylinder of ``path``, in start coordinates.

    The cylinder cone is the image of the positive cone at the end vertex;
    the triangulation is transported and volumes are taken at the start.
    """
    q = tuple(Fraction(x) for x in q)
    rays_e, tri = _perm_triangulation(path.end)
    bt = linalg.transpose(path.matrix())
    rays = [linalg.matvec(bt, r) for r in rays_e]
    return _cone_volume(rays, tri, q, path.start.balance_vector())


def nu_arrow_halfspace(perm, side, q):
    """Measure of ``{lam_winner > lam_loser}`` inside ``Lambda_{pi,q}``, from inequalities.

    Independent of the transition matrices: the cone is cut by one extra
    half-space and its rays are enumerated afresh.
    """
    from .cones import PolyhedralCone

    q = tuple(Fraction(x) for x in q)
    d = perm.d
    a, b = perm.cls(perm.leftmost), perm.cls(perm.rightmost)
    win, lose = (a, b) if side == LEFT else (b, a)
    if win == lose:
        return Fraction(0)
    cut = tuple(int(k == win) - int(k == lose) for k in range(d))
    coords = [tuple(int(j == k) for j in range(d)) for k in range(d)]
    cone = PolyhedralCone(d, coords + [cut], [perm.balance_vector()])
    rays = cone.rays
    if linalg.rank(rays) < d - 1 if rays else True:
        return Fraction(0)
    tri = pulling_triangulation(rays, coords + [cut])
    return _cone_volume(rays, tri, q, perm.balance_vector())


def nu_montecarlo(perm, q, n, rng, target=None):
    """Rejection estimate of the measure; returns ``(value, standard_error)``.

    One coordinate with nonzero balance coefficient is eliminated and the
    rest are drawn uniformly in the box ``[0, 1/q_k]``.  ``target`` is an
    optional predicate on ``lam`` (a float array).
    """
    v = np.array(perm.balance_vector(), dtype=float)
    qf = np.array([float(x) for x in q])
    d = len(qf)
    j = int(np.argmax(np.abs(v)))
    others = [k for k in range(d) if k != j]
    hi = 1.0 / qf[others]
    x = rng.random((n, d - 1)) * hi
    lam = np.zeros((n, d))
    lam[:, others] = x
    lam[:, j] = -(x @ v[others]) / v[j]
    ok = (lam[:, j] >= 0) & (lam @ qf < 1)
    if target is not None:
        ok &= np.array([bool(target(row)) for row in lam])
    p = ok.mean()
    box = float(np.prod(hi)) / abs(v[j])
    se = box * math.sqrt(max(p * (1 - p), 1e-300) / n)
    return box * p, se


def nu_measure(perm, q, target=None, mode="exact", n=100000, rng=None):
    """``nu_{pi,q}`` of the whole polytope (``target=None``) or of a path cylinder.

    Exact mode returns a Fraction; Monte Carlo returns ``(value, stderr)``.
    """
    if mode == "exact":
        if perm.d > 5:
            raise MeasureBudgetError("exact mode is limited to d <= 5")
        if target is None:
            return nu_exact(perm, q)
        return nu_cylinder_exact(target, q)
    rng = rng if rng is not None else np.random.default_rng(0)
    pred = None
    if target is not None:
        pred = _cylinder_predicate(target)
    return nu_montecarlo(perm, q, n, rng, pred)


def _cylinder_predicate(path):
    b_inv_t = np.array([[float(x) for x in row] for row in linalg.inverse(linalg.transpose(path.matrix()))])

    def pred(lam):
        return bool(np.all(b_inv_t @ lam > 0))

    return pred


def apply_b(path, q):
    """``B_gamma q`` for a height-type vector."""
    return linalg.matvec(path.matrix(), q)


def _arrow_q(arrow, q):
    q = list(q)
    q[arrow.loser_class] += q[arrow.winner_class]
    return tuple(q)


def transition_probability(q, path):
    """``P_q(gamma | pi)`` in exact arithmetic."""
    q = tuple(Fraction(x) for x in q)
    num = nu_exact(path.end, apply_b(path, q))
    den = nu_exact(path.start, q)
    return num / den


def arrow_probabilities(perm, q):
    """``{side: probability}`` over the arrows leaving ``perm``."""
    q = tuple(Fraction(x) for x in q)
    den = nu_exact(perm, q)
    out = {}
    for a in perm.arrows():
        out[a.side] = nu_exact(a.end, _arrow_q(a, q)) / den
    return out


def sample_path(perm, q, length, rng, exact=False):
    """Random path drawn from the Markov chain induced by ``nu``; returns ``(path, q_end)``."""
    cur_q = tuple(Fraction(x) for x in q) if exact else tuple(float(x) for x in q)
    arrows = []
    cur = perm
    for _ in range(length):
        arr = cur.arrows()
        if len(arr) == 1:
            a = arr[0]
        else:
            if exact:
                probs = arrow_probabilities(cur, cur_q)
                p_left = float(probs[LEFT])
            else:
                p_left = _float_left_probability(cur, cur_q)
            a = arr[0] if rng.random() < p_left else arr[1]
        arrows.append(a)
        cur_q = _arrow_q(a, cur_q)
        cur = a.end
    return Path(perm, arrows), cur_q


_FLOAT_TRI = {}


def _float_nu(perm, q):
    rays, tri = _perm_triangulation(perm)
    key = perm
    dets = _FLOAT_TRI.get(key)
    if dets is None:
        n = _normal(perm.balance_vector())
        dets = []
        for simplex in tri:
            cols = [rays[k] for k in simplex] + [n]
            dets.append(float(abs(linalg.det(linalg.transpose(cols)))))
        _FLOAT_TRI[key] = dets
    total = 0.0
    for simplex, dt in zip(tri, dets):
        prod = 1.0
        for k in simplex:
            prod *= sum(r * x for r, x in zip(rays[k], q))
        total += dt / prod
    return total / math.factorial(perm.d - 1)


def _float_left_probability(perm, q):
    den = _float_nu(perm, q)
    a = perm.arrow(LEFT)
    return _float_nu(a.end, _arrow_q(a, q)) / den


def distortion_experiment(perm, c_grid, n_paths, rng, q=None, max_steps=100000):
    """Estimate ``P_q(M(B q) > C M(q) before m(B q) >= M(q) | pi)`` for each ``C``.

    Returns rows ``(C, probability, stderr, below_bound)`` where the last
    entry says whether the estimate is below ``1 - C^{-(d-1)}``.
    """
    d = perm.d
    q0 = tuple(float(x) for x in (q or [1] * d))
    m0 = max(q0)
    cmax = max(c_grid)
    reached = []  # growth factor M/M(q) reached before balancing, capped at cmax
    for _ in range(n_paths):
        cur, cq = perm, q0
        top = 1.0
        for _ in range(max_steps):
            if min(cq) >= m0 or top > cmax:
                break
            arr = cur.arrows()
            if len(arr) == 1:
                a = arr[0]
            else:
                a = arr[0] if rng.random() < _float_left_probability(cur, cq) else arr[1]
            cq = _arrow_q(a, cq)
            cur = a.end
            if min(cq) < m0:
                top = max(top, max(cq) / m0)
        reached.append(top)
    reached = np.array(reached)
    rows = []
    for c in c_grid:
        p = float((reached > c).mean())
        se = math.sqrt(p * (1 - p) / n_paths)
        rows.append((c, p, se, p < 1 - c ** (-(d - 1))))
    return rows


def table_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in r])
    return buf.getvalue()


def class_hash(diagram):
    h = hashlib.sha256()
    for v in diagram.sorted_vertices():
        h.update(str(v).encode())
        h.update(b"\n")
    return h.hexdigest()[:16]


@dataclass
class ExperimentConfig:
    """Seeds and budgets shared by the section experiments."""

    seed: int = 0
    samples: int = 2000
    per_orbit: int = 100
    grid: tuple = None
    min_count: int = 20
    threads: int = 1
    chains: int = 8
    max_iter: int = 10**9

    def to_json(self):
        out = dict(self.__dict__)
        out["grid"] = None if self.grid is None else [float(x) for x in self.grid]
        return out


def _chain_rngs(cfg):
    seqs = np.random.SeedSequence(cfg.seed).spawn(cfg.chains)
    return [np.random.default_rng(s) for s in seqs]


def _run_chains(cfg, job):
    """Run ``job(rng, share)`` over independent chains; results in chain order."""
    rngs = _chain_rngs(cfg)
    shares = [cfg.samples // cfg.chains + (k < cfg.samples % cfg.chains) for k in range(cfg.chains)]
    if cfg.threads <= 1:
        return [job(r, s) for r, s in zip(rngs, shares)]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(job, rngs, shares))


def _linear_fit(x, y):
    a = np.vstack([x, np.ones_like(x)]).T
    coef = np.linalg.lstsq(a, y, rcond=None)[0]
    resid = y - a @ coef
    ss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss if ss > 0 else 1.0
    return float(coef[0]), float(coef[1]), r2


@dataclass
class TailResult:
    grid: list
    tail: list
    stderr: list
    slope: float
    intercept: float
    r2: float
    min_roof: float
    samples: int
    restarts: int
    warnings: list = field(default_factory=list)

    @property
    def monotone(self):
        return all(a >= b for a, b in zip(self.tail, self.tail[1:]))

    @property
    def floor_ok(self):
        return self.min_roof >= math.log(2)

    def rows(self):
        return [(t, p, s) for t, p, s in zip(self.grid, self.tail, self.stderr)]

    def to_json(self):
        return {"grid": self.grid, "tail": self.tail, "stderr": self.stderr, "slope": self.slope,
                "intercept": self.intercept, "r2": self.r2, "min_roof": self.min_roof,
                "samples": self.samples, "restarts": self.restarts, "monotone": self.monotone,
                "floor_ok": self.floor_ok, "warnings": self.warnings}


def tail_experiment(spec, compiled, cfg=None):
    """Empirical tail ``P(r > T)`` of the roof function on the section and its log-linear fit.

    Roof values are collected along seeded orbits of the first-return map.
    Without an explicit grid, twelve equally spaced thresholds from ``ln 2``
    to the 95% quantile are used.  Grid points with fewer than
    ``cfg.min_count`` exceedances are dropped from the fit with a warning.
    """
    from .cones import SectionDynamics

    cfg = cfg or ExperimentConfig()
    dyn = SectionDynamics(spec, compiled)

    def job(rng, share):
        return dyn.return_times(rng, share, per_orbit=cfg.per_orbit, max_iter=cfg.max_iter)

    parts = _run_chains(cfg, job)
    r = np.concatenate([p[0] for p in parts])
    restarts = sum(p[1] for p in parts)
    grid = np.array(cfg.grid if cfg.grid is not None else
                    np.linspace(math.log(2), float(np.quantile(r, 0.95)), 12), dtype=float)
    n = len(r)
    tail = np.array([(r > t).mean() for t in grid])
    se = np.sqrt(tail * (1 - tail) / n)
    counts = tail * n
    use = counts >= cfg.min_count
    warnings = []
    if not use.all():
        warnings.append(f"{int((~use).sum())} grid points have fewer than {cfg.min_count} exceedances; widen the sample")
    if use.sum() >= 2:
        slope, icpt, r2 = _linear_fit(grid[use], np.log(tail[use]))
    else:
        slope, icpt, r2 = float("nan"), float("nan"), float("nan")
    return TailResult(grid.tolist(), tail.tolist(), se.tolist(), slope, icpt, r2,
                      float(r.min()), n, restarts, warnings)


@dataclass
class FlowState:
    perm: object
    lam: np.ndarray
    tau: np.ndarray
    omega: np.ndarray

    @property
    def h(self):
        return -self.omega @ self.tau


def min_height(state):
    """Smallest rectangle height of a flow state."""
    return float(np.min(state.h))


def constant_observable(c=1.0):
    def obs(state):
        return float(c)
    return obs


@dataclass
class CorrelationResult:
    times: list
    correlation: list
    stderr: list
    samples: int
    failed: int
    rate: float
    warnings: list = field(default_factory=list)

    @property
    def envelope(self):
        """``max_{s >= t} |C(s)|`` at each grid time."""
        env, cur = [], 0.0
        for c in reversed(self.correlation):
            cur = max(cur, abs(c))
            env.append(cur)
        return env[::-1]

    @property
    def decay_factor(self):
        last = self.envelope[-1]
        return math.inf if last == 0 else self.envelope[0] / last

    def rows(self):
        return [(t, c, s) for t, c, s in zip(self.times, self.correlation, self.stderr)]

    def to_json(self):
        return {"times": self.times, "correlation": self.correlation, "stderr": self.stderr,
                "envelope": self.envelope, "decay_factor": self.decay_factor,
                "samples": self.samples, "failed": self.failed, "rate": self.rate,
                "warnings": self.warnings}


def correlation_experiment(spec, compiled, observables=(min_height, min_height), times=range(11), cfg=None):
    """Monte Carlo correlation ``E[U V(flow_t)] - E[U] E[V(flow_t)]`` of the Veech flow.

    Initial points are drawn from a flow box over the section: a random
    copy of the section cylinder, lengths pushed from Lebesgue measure, a
    random mixture of the pushed closed-cone rays for ``tau`` (area scaled
    to one) and a uniform flow offset in ``[0, 1)``.  Observables take a
    ``FlowState`` in the fundamental domain.
    """
    from . import simulate
    from .cones import _rays_cached, sample_section_lengths
    from .suspension import push_tau

    cfg = cfg or ExperimentConfig(samples=20000)
    tables = simulate.Tables(compiled)
    times = np.array(sorted(float(t) for t in times))
    u_obs, v_obs = observables
    copies = list(spec.copies)
    rays = {}

    def copy_rays(c):
        if c.start not in rays:
            rays[c.start] = [np.array([float(x) for x in push_tau(c, r)]) for r in _rays_cached(c.start)]
        return rays[c.start]

    def job(rng, share):
        u0, vt, fails = [], [], 0
        args = (tables.step_end, tables.step_w, tables.step_l, tables.ends, tables.bal, tables.baln,
                tables.cyc_len, tables.cyc_cnt)
        for _ in range(share):
            c = copies[int(rng.integers(len(copies)))]
            k = compiled.index[c.start]
            lam = np.array(sample_section_lengths(spec, rng, 1, copy=c)[0])
            rr = copy_rays(c)
            wts = rng.dirichlet(np.ones(len(rr)))
            tau = sum(a * r for a, r in zip(wts, rr))
            tau /= -2.0 * lam @ tables.omega[k] @ tau
            s = rng.random()
            grid = np.concatenate([[s], times + s])
            lams, taus, verts, status = simulate.observe_states(lam, tau, k, grid, cfg.max_iter, *args)
            if status != 0:
                fails += 1
                continue
            states = [FlowState(compiled.vertices[int(v)], l, t, tables.omega[int(v)])
                      for l, t, v in zip(lams, taus, verts)]
            u0.append(u_obs(states[0]))
            vt.append([v_obs(st) for st in states[1:]])
        return u0, vt, fails

    parts = _run_chains(cfg, job)
    u = np.array([x for p in parts for x in p[0]])
    v = np.array([x for p in parts for x in p[1]]).reshape(len(u), len(times))
    fails = sum(p[2] for p in parts)
    uc = u - u.mean()
    vc = v - v.mean(axis=0)
    prod = uc[:, None] * vc
    corr = prod.mean(axis=0)
    se = prod.std(axis=0) / math.sqrt(max(len(u), 1))
    warnings = []
    if corr[0] > 0 and se[0] > 0.1 * corr[0]:
        warnings.append("variance at t=0 is poorly resolved; increase samples")
    pos = np.abs(corr) > 2 * se
    rate = float("nan")
    if pos.sum() >= 2:
        rate = -_linear_fit(times[pos], np.log(np.abs(corr[pos])))[0]
    return CorrelationResult(times.tolist(), corr.tolist(), se.tolist(), len(u), fails, rate, warnings)
