"""Acceptance criteria, run at their stated tolerances.

Each test prints one ``PASS``/``FAIL`` line with the measured numbers,
whatever the outcome of the assertions that follow.
"""

import math
import time
from fractions import Fraction as F

import numpy as np
import pytest

import oracles
from rauzyinv import linalg
from rauzyinv.combinatorics import (MarkedPermutation, Path, classify_completeness,
                                    complete_positivity_census, path_matrix)
from rauzyinv.cones import (canonical_section, certify_strong_positivity, contraction_check, is_positive_matrix,
                            is_strongly_positive, section_branches, weak_contraction_ratio)
from rauzyinv.geometry import build_surface, stratum
from rauzyinv.induction import NotInDomain, LengthData, random_length_data
from rauzyinv.measures import (ExperimentConfig, apply_b, arrow_probabilities, correlation_experiment,
                               nu_arrow_halfspace, nu_exact, tail_experiment)
from rauzyinv.suspension import INTERIOR, SuspensionPoint, extended_step, heights, in_theta, push_tau

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail, elapsed):
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'} ({elapsed:.1f} s) {detail}")
    return emit


def _random_walk(diagram, start, rng, k):
    arrows, cur = [], start
    while classify_completeness(Path(start, arrows))[1] < k:
        out = list(diagram.out[cur].values())
        a = out[int(rng.integers(len(out)))]
        arrows.append(a)
        cur = a.end
    return Path(start, arrows)


def test_c1_exact_cocycle(diagram, sampler, report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    verts = diagram.sorted_vertices()
    starts, steps, bad = 0, 0, 0
    for _ in range(12):
        v = verts[int(rng.integers(len(verts)))]
        x0 = SuspensionPoint(random_length_data(v, rng, denominator=2**2000), v, sampler.sample(v, rng))
        x, arrows = x0, []
        for _ in range(1000):
            try:
                y, a = extended_step(x)
            except NotInDomain:
                break
            b = a.matrix()
            bad += linalg.matvec(linalg.transpose(b), y.lam.values) != x.lam.values
            bad += linalg.matvec(b, x.w) != y.w
            bad += linalg.matvec(b, x.h) != y.h
            bad += y.area != x.area
            arrows.append(a)
            x = y
        bb = path_matrix(Path(v, arrows))
        bad += linalg.matvec(linalg.transpose(bb), x.lam.values) != x0.lam.values
        bad += linalg.matvec(bb, x0.w) != x.w
        bad += x.area != x0.area
        starts += len(arrows) == 1000
        steps += len(arrows)
    dt = time.perf_counter() - t0
    ok = bad == 0 and starts >= 10 and dt < 30
    report(1, ok, f"{starts} starts x 1000 steps ({steps} steps), {bad} nonzero residuals", dt)
    assert bad == 0
    assert starts >= 10
    assert dt < 30


def test_c2_complete_paths_positive(diagram, report):
    t0 = time.perf_counter()
    census = complete_positivity_census(diagram, 2 * 4 - 3)
    ref_checked, ref_bad = oracles.complete_paths_positive(oracles.FIG2, 5)
    dt = time.perf_counter() - t0
    ok = census.ok and ref_bad == 0 and census.checked == ref_checked and dt < 300
    report(2, ok, f"all lengths (saturated over {census.states} states), {census.checked} terminal "
                  f"transitions, {census.failures} exceptions; oracle {ref_checked}/{ref_bad}", dt)
    assert census.failures == 0 and census.ok
    assert (census.checked, ref_bad) == (ref_checked, 0)
    assert dt < 300


def test_c3_strongly_positive(diagram, report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    verts = diagram.sorted_vertices()
    found, certified = {}, 0
    tries = 0
    while len(found) < 20 and tries < 200:
        tries += 1
        v = verts[int(rng.integers(len(verts)))]
        p = _random_walk(diagram, v, rng, 4 * 4 - 6)
        key = (v, tuple(a.side for a in p.arrows))
        if key in found:
            continue
        found[key] = p
        certified += certify_strong_positivity(p).strongly_positive
    start = MarkedPermutation.from_string("A B D iB * iD iA C iC")
    witness = Path.from_word(start, "LLRLRLLLRLRL")
    w_pos, w_strong = is_positive_matrix(witness.matrix()), is_strongly_positive(witness)
    shorter = len(witness) < min(len(p) for p in found.values())
    dt = time.perf_counter() - t0
    ok = len(found) >= 20 and certified == len(found) and w_pos and not w_strong and shorter
    report(3, ok, f"{certified}/{len(found)} distinct 10-complete paths strongly positive; "
                  f"witness of length {len(witness)} positive={w_pos} strongly={w_strong}", dt)
    assert len(found) >= 20 and certified == len(found)
    assert w_pos and not w_strong and shorter


def test_c4_heights_and_invariance(diagram, sampler, report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    verts = diagram.sorted_vertices()
    bad_h = bad_in = bad_push = 0
    for _ in range(1000):
        v = verts[int(rng.integers(len(verts)))]
        tau = sampler.sample(v, rng)
        bad_in += in_theta(v, tau) != INTERIOR
        bad_h += not all(h > 0 for h in heights(v, tau))
        for a in v.arrows():
            bad_push += in_theta(a.end, push_tau(Path(v, [a]), tau)) != INTERIOR
    dt = time.perf_counter() - t0
    ok = bad_h == bad_in == bad_push == 0
    report(4, ok, f"1000 samples: {bad_in} not interior, {bad_h} with a height <= 0, "
                  f"{bad_push} pushforwards leaving the cone", dt)
    assert (bad_in, bad_h, bad_push) == (0, 0, 0)


def test_c5_geometry(diagram, fig2, sampler, report):
    t0 = time.perf_counter()
    ref = stratum(fig2)
    differ = sum(stratum(v) != ref for v in diagram.vertices)
    sum_ok = sum(ref.multiplicities) == 4 * ref.genus - 4
    tau = sampler.sample(fig2, np.random.default_rng(0))
    x = SuspensionPoint(LengthData(fig2, (2, F(1, 2), 1, 1)), fig2, tau)
    s = build_surface(x)
    top, bot = s.top_partition(), s.bottom_partition()
    tiles = all(p[0][0] == -s.half_length() and p[-1][1] == s.half_length()
                and all(a[1] == b[0] for a, b in zip(p, p[1:])) for p in (top, bot))
    area_ok = s.area == x.area and sum(r.area for r in s.rectangles.values()) == 2 * x.area
    dt = time.perf_counter() - t0
    ok = differ == 0 and sum_ok and tiles and area_ok
    report(5, ok, f"{len(diagram)} vertices, {differ} with a different stratum, multiplicities "
                  f"{ref.multiplicities} sum {sum(ref.multiplicities)} = 4g-4 with g = {ref.genus}; "
                  f"tiling {tiles}, area {x.area} exact {area_ok}", dt)
    assert differ == 0 and sum_ok and tiles and area_ok


def test_c6_roof_floor_and_tail(diagram, compiled, report):
    t0 = time.perf_counter()
    section = canonical_section(diagram)
    branches = section_branches(section, diagram, max_extra=14)
    # column sums of the transpose, which acts on lengths
    min_col = min(sum(row) for b in branches for row in b.matrix())
    cfg = ExperimentConfig(seed=1, samples=2000)
    res = tail_experiment(section, compiled, cfg)
    again = tail_experiment(section, compiled, cfg)
    dt = time.perf_counter() - t0
    ok = (min_col >= 2 and res.min_roof >= math.log(2) and res.monotone and res.slope < 0
          and res.r2 >= 0.95 and res.tail == again.tail and dt < 120)
    report(6, ok, f"min column sum {min_col} over {len(branches)} branches, min roof {res.min_roof:.4f}, "
                  f"slope {res.slope:.3e}, R^2 {res.r2:.4f}, monotone {res.monotone}, "
                  f"reproducible {res.tail == again.tail}", dt)
    assert min_col >= 2 and res.min_roof >= math.log(2)
    assert res.monotone and res.slope < 0 and res.r2 >= 0.95
    assert res.tail == again.tail
    assert dt < 120


def test_c7_hilbert_contraction(diagram, fig2, section, branches, report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(77)
    chosen = branches[:: len(branches) // 8][:8]
    reports = contraction_check(section, chosen, rng, pairs=100)
    sup = max(r.sup_ratio for r in reports)
    weak = 0.0
    verts = diagram.sorted_vertices()
    for n in range(60):
        v = verts[int(rng.integers(len(verts)))]
        arrows, cur = [], v
        for _ in range(1 + n % 25):
            out = list(diagram.out[cur].values())
            a = out[int(rng.integers(len(out)))]
            arrows.append(a)
            cur = a.end
        b = Path(v, arrows).matrix()
        weak = max(weak, weak_contraction_ratio(b, rng, pairs=50),
                   weak_contraction_ratio(linalg.transpose(b), rng, pairs=50))
    dt = time.perf_counter() - t0
    ok = len(reports) >= 5 and sup <= 0.99 and weak <= 1 + 1e-12
    report(7, ok, f"{len(reports)} branches x 100 pairs, sup ratio {sup:.4f}; "
                  f"weak contraction max {weak:.15f} over 60 path matrices", dt)
    assert len(reports) >= 5 and sup <= 0.99
    assert weak <= 1 + 1e-12


def test_c8_measure_identities(diagram, report):
    t0 = time.perf_counter()
    q = (1, 2, 3, 5)
    arrows = mismatch = prob_bad = 0
    for v in diagram.sorted_vertices():
        total = nu_exact(v, q)
        parts = 0
        for a in v.arrows():
            x = nu_exact(a.end, apply_b(Path(v, [a]), q))
            mismatch += x != nu_arrow_halfspace(v, a.side, q)
            parts += x
            arrows += 1
        mismatch += parts != total
        prob_bad += sum(arrow_probabilities(v, q).values()) != 1
    homog = 0
    for v in diagram.sorted_vertices()[::43]:
        base = nu_exact(v, q)
        for t in (2, 3):
            homog += nu_exact(v, tuple(t * c for c in q)) != base * F(t) ** -(v.d - 1)
    dt = time.perf_counter() - t0
    ok = mismatch == prob_bad == homog == 0 and arrows == len(diagram.arrows)
    report(8, ok, f"{arrows} arrows, {mismatch} change-of-variables mismatches, {prob_bad} vertices whose "
                  f"probabilities do not sum to 1, {homog} homogeneity failures at t in {{2, 3}}", dt)
    assert arrows == len(diagram.arrows)
    assert (mismatch, prob_bad, homog) == (0, 0, 0)


def test_c9_correlation_decay(section, compiled, report):
    t0 = time.perf_counter()
    res = correlation_experiment(section, compiled, times=range(11), cfg=ExperimentConfig(seed=2, samples=20000))
    env = res.envelope
    dt = time.perf_counter() - t0
    ok = res.correlation[0] >= 0 and res.decay_factor >= 10
    report(9, ok, f"C(0) = {res.correlation[0]:.4g}, envelope {env[0]:.3g} -> {env[-1]:.3g} "
                  f"(factor {res.decay_factor:.1f}), {res.failed} failed orbits", dt)
    assert res.correlation[0] >= 0
    assert res.decay_factor >= 10
