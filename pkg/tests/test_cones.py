import json
import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from rauzyinv import linalg, simulate
from rauzyinv.combinatorics import LEFT, RIGHT, MarkedPermutation, Path
from rauzyinv.cones import (CANONICAL_SECTIONS, PolyhedralCone, SectionDynamics, SectionSpec, border_length,
                            certificate_json, certify_strong_positivity, contraction_check,
                            hilbert_distance, is_neat, is_positive_matrix, is_strongly_positive,
                            perron_span_rank, roof_regularity_check, section_return_map,
                            weak_contraction_ratio)
from rauzyinv.induction import LengthData, random_length_data, rauzy_step
from rauzyinv.measures import class_hash


def test_orthant_rays():
    cone = PolyhedralCone(3, [(1, 0, 0), (0, 1, 0), (0, 0, 1)], [])
    assert sorted(cone.rays) == [(0, 0, 1), (0, 1, 0), (1, 0, 0)]
    assert cone.contains((1, 2, 3), strict=True)
    assert not cone.contains((1, 0, 3), strict=True)


def test_hilbert_distance_oracle(rng):
    for _ in range(50):
        x, y = rng.random(4) + 0.01, rng.random(4) + 0.01
        assert math.isclose(hilbert_distance(x, y), oracles.hilbert_distance_orthant(x, y), rel_tol=1e-12)
    assert hilbert_distance((1, 2, 3), (2, 4, 6)) < 1e-15


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 2), max_size=12))
def test_border_length_bruteforce(seq):
    ref = max([k for k in range(len(seq)) if seq[:k] == seq[len(seq) - k:]], default=0)
    assert border_length(seq) == ref


def test_single_arrow_not_strongly_positive(fig2):
    p = Path(fig2, [fig2.arrow(LEFT)])
    cert = certify_strong_positivity(p)
    assert not cert.positive and not cert.strongly_positive


def test_positive_not_strongly_positive():
    """[DERIVED] shortest-first search over paths of length <= 12."""
    start = MarkedPermutation.from_string("A B D iB * iD iA C iC")
    p = Path.from_word(start, "LLRLRLLLRLRL")
    assert is_positive_matrix(p.matrix())
    assert not is_strongly_positive(p)


def test_canonical_section(section, diagram):
    assert class_hash(diagram) in CANONICAL_SECTIONS
    assert str(section.base) == "iA iC C D * B iB A iD"
    assert section.word == "LRLLRRLLRRRLLRRLRR"
    assert is_neat(section.loop)
    assert section.certificate.strongly_positive
    assert all(m > 0 for m in section.certificate.margins)
    assert len(section.copies) == 192
    for c in section.copies[::16]:
        assert c.end == c.start and is_neat(c)


def test_certificate_json_roundtrip(section):
    data = json.loads(certificate_json(section))
    assert data["word"] == section.word and data["neat"] and data["copies"] == 192
    path = Path.from_word(MarkedPermutation.from_string(data["start"]), data["word"])
    assert certify_strong_positivity(path).to_json()["margins"] == data["margins"]


def test_section_rejects_bordered_loop(section):
    doubled = section.loop + section.loop
    with pytest.raises(ValueError):
        SectionSpec.certified(section.base, doubled)


def test_branches(branches, section):
    """Regression count of first-return branches with extra length <= 14."""
    assert len(branches) == 607
    assert all(b.start == section.base for b in branches)
    assert all(b.word.startswith(section.word) for b in branches)
    assert all(b.end in section.copy_vertices for b in branches)
    assert len({b.word for b in branches}) == len(branches)


def test_branch_roof_floor(branches):
    # every column of every branch matrix sums to at least 2, so r >= ln 2
    assert min(sum(row) for b in branches for row in b.matrix()) >= 2


def test_contraction(section, branches, rng):
    reports = contraction_check(section, branches[:8], rng, pairs=50)
    assert all(r.sup_ratio < 0.99 for r in reports)


@settings(max_examples=30, deadline=None)
@given(st.text(alphabet="LR", max_size=30), st.integers(0, 2**32 - 1))
def test_weak_contraction(fig2, word, seed):
    cur, arrows = fig2, []
    for ch in word:
        a = cur.arrow(LEFT if ch == "L" else RIGHT) or cur.arrows()[0]
        arrows.append(a)
        cur = a.end
    b = Path(fig2, arrows).matrix()
    bt = linalg.transpose(b)
    rng = np.random.default_rng(seed)
    assert weak_contraction_ratio(b, rng, pairs=40) <= 1 + 1e-12
    assert weak_contraction_ratio(bt, rng, pairs=40) <= 1 + 1e-12


def test_roof_regularity(section, branches, rng):
    rep = roof_regularity_check(section, branches[:40], rng, pairs=400)
    assert rep.lipschitz_ok
    assert rep.min_column_sum >= 2
    assert rep.min_roof >= math.log(2)


def test_perron_span(branches):
    positive = [b.matrix() for b in branches[:30]]
    assert perron_span_rank(positive) >= 3


def _fine_lengths(perm, rng):
    """Balanced rationals with about 370 random bits, so exact orbits avoid ties."""
    base = [float(x) for x in random_length_data(perm, rng).values]
    x = [F(int(v * 2**50), 2**50) + F(int.from_bytes(rng.bytes(40), "big"), 2**370) for v in base]
    v = perm.balance_vector()
    s = linalg.dot(v, x)
    k = max(range(perm.d), key=lambda j: (v[j] * s < 0, x[j]))
    x[k] -= s / v[k]
    return LengthData(perm, x).normalized()


def test_kernel_matches_exact_orbit(fig2, compiled):
    """Compiled flow states agree with exact induction while rounding stays small.

    Forward induction expands projective errors roughly like e^{2t}, so the
    comparison stops at t = 10.  Starting at norm e^{-13} forces the kernel
    to renormalize inside the window.
    """
    tables = simulate.Tables(compiled)
    rng = np.random.default_rng(4)
    times = np.arange(0.5, 10.01, 0.5)
    shift = 13.0
    for _ in range(5):
        lam = _fine_lengths(fig2, rng)
        x0 = np.array([float(v) for v in lam.values]) * math.exp(-shift)
        lams, _, verts, status = simulate.observe_states(
            x0, np.zeros(4), compiled.index[fig2], times + shift, 10**8, tables.step_end, tables.step_w,
            tables.step_l, tables.ends, tables.bal, tables.baln, tables.cyc_len, tables.cyc_cnt)
        assert status == 0
        cur = lam
        for j, t in enumerate(times):
            while True:
                nxt, _, _ = rauzy_step(cur)
                if float(nxt.norm()) * math.exp(t) < 1:
                    break
                cur = nxt
            assert compiled.vertices[verts[j]] == cur.perm
            ref = np.array([float(v) for v in cur.values]) * math.exp(t)
            assert np.max(np.abs(ref - lams[j])) < 1e-6


def test_section_return(section, compiled, rng):
    dyn = SectionDynamics(section, compiled)
    v, lam = dyn.sample(rng)
    lam2, _, r, steps, vertex = section_return_map(section, compiled, lam, dynamics=dyn)
    assert vertex in section.copy_vertices
    assert r >= math.log(2) and steps > len(section.word)
    assert math.isclose(sum(lam2), 1.0, rel_tol=1e-12)
    copy = Path.from_word(vertex, section.word)
    pre = np.linalg.solve(np.array(linalg.transpose(copy.matrix()), dtype=float), lam2)
    assert np.all(pre > 0)


def test_return_times_seeded(section, compiled):
    dyn = SectionDynamics(section, compiled)
    a, ra = dyn.return_times(np.random.default_rng(9), 20, per_orbit=10)
    b, rb = dyn.return_times(np.random.default_rng(9), 20, per_orbit=10)
    assert np.array_equal(a, b) and ra == rb
    assert a.min() >= math.log(2)
