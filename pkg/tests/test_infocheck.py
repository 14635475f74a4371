import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phasemargins.constructions import convolved_operator, prop1_mu_hat, prop2_gap_explainer, prop2_series, remark_series
from phasemargins.hilbert import Grid, GridFunction
from phasemargins.infocheck import (
    CAVEAT,
    SupportReport,
    Verdict,
    completeness_verdict,
    default_margin_band,
    margins_equivalence_verdict,
    regularity_check,
    support_report_2d,
    zero_set_1d,
)
from phasemargins.phase_space import WeylFieldOperator, ft_convolver

BAND = default_margin_band()
FIELD = Grid(-5, 5, 101)


@pytest.fixture(scope="module")
def prop2_op(husimi):
    return convolved_operator(prop2_series(4).f_hat, husimi, label="prop2", explainer=prop2_gap_explainer(4))


@pytest.fixture(scope="module")
def zero_curve_op():
    # zeros only on the lines q = n pi: not regular, yet complete
    return WeylFieldOperator(lambda q, p: np.exp(-(np.asarray(q) ** 2 + np.asarray(p) ** 2) / 4) * np.sinc(np.asarray(q) / math.pi))


class TestZeroSet1D:
    def test_prop1_isolated_zeros(self):
        vals = prop1_mu_hat(BAND.points)
        rep = zero_set_1d(GridFunction(BAND, vals), 1e-8, func=prop1_mu_hat)
        expected = [2 * math.pi * n for n in (-3, -2, -1, 1, 2, 3)]
        assert rep.zero_regions == []
        assert len(rep.zero_points) == 6
        assert np.max(np.abs(np.array(rep.zero_points) - expected)) <= 1e-6
        assert rep.counts["edge_zeros"] == 2  # +-8 pi sit on the band ends

    def test_husimi_no_zeros(self, husimi):
        rep = zero_set_1d(GridFunction(BAND, ft_convolver(husimi, "position", BAND.points)), 1e-8)
        assert rep.zero_regions == [] and rep.zero_points == []

    def test_constant_zero(self):
        g = Grid(-1, 1, 21)
        rep = zero_set_1d(GridFunction(g, np.zeros(21)), 1e-8)
        assert rep.zero_regions == [(-1.0, 1.0)] and rep.witness_points == []

    def test_interval_detected(self):
        g = Grid(-3, 3, 601)
        x = g.points
        v = np.maximum(1 - np.abs(x), 0.0) + 0.0 * x
        rep = zero_set_1d(GridFunction(g, v), 1e-8)
        assert len(rep.zero_regions) == 2
        (a0, a1), (b0, b1) = rep.zero_regions
        assert a0 == -3 and a1 == pytest.approx(-1.0) and b0 == pytest.approx(1.0) and b1 == 3

    def test_sign_change_between_samples(self):
        g = Grid(0, 1, 11)
        rep = zero_set_1d(GridFunction(g, g.points - 0.33), 1e-8, func=lambda t: t - 0.33)
        assert rep.zero_points == [pytest.approx(0.33, abs=1e-14)]

    def test_witnesses_disjoint_from_zero_regions(self):
        g = Grid(-3, 3, 601)
        v = np.maximum(1 - np.abs(g.points), 0.0)
        rep = zero_set_1d(GridFunction(g, v), 1e-8)
        for w in rep.witness_points:
            assert not any(lo <= w <= hi for lo, hi in rep.zero_regions)

    def test_epsilon_must_be_positive(self):
        with pytest.raises(ValueError):
            SupportReport(1, [], [], 0.0, {})


class TestCompleteness:
    def test_husimi_complete(self, husimi):
        v = completeness_verdict(husimi, FIELD, FIELD)
        assert v.kind == "complete_on_grid" and v.caveat == CAVEAT

    def test_prop1_incomplete_corners(self, prop1):
        v = completeness_verdict(prop1, FIELD, FIELD)
        assert v.kind == "incomplete"
        rects = v.report.zero_regions
        assert len(rects) == 4
        for sq in (1, -1):
            for sp in (1, -1):
                target = ((1.05 * sq, 5.0 * sq), (1.05 * sp, 5.0 * sp))
                assert any(
                    q0 <= min(target[0]) and q1 >= max(target[0]) and p0 <= min(target[1]) and p1 >= max(target[1])
                    for (q0, q1), (p0, p1) in rects
                )

    def test_prop2_complete_modulo_truncation(self, prop2_op):
        g = Grid(-3, 3, 121)
        v = completeness_verdict(prop2_op, g, g)
        assert v.kind == "complete_on_grid"
        assert v.report.explained_regions  # truncation gaps are reported, not hidden
        # without the explainer the same gaps would read as incompleteness
        bare = completeness_verdict(prop2_op, g, g, explainer=lambda q, p, c: np.zeros(np.shape(q), bool))
        assert bare.kind == "incomplete"

    def test_remark_incomplete(self, husimi):
        T = convolved_operator(remark_series().f_hat, husimi)
        assert completeness_verdict(T, FIELD, FIELD).kind == "incomplete"

    def test_regularity_not_necessary(self, zero_curve_op):
        assert regularity_check(zero_curve_op, FIELD, FIELD).kind == "not_regular"
        assert completeness_verdict(zero_curve_op, FIELD, FIELD).kind == "complete_on_grid"

    @pytest.mark.parametrize("which", ["husimi", "prop1", "zero_curve_op"])
    def test_monotone_in_eps(self, which, request):
        T = request.getfixturevalue(which)
        kinds = [completeness_verdict(T, FIELD, FIELD, eps).kind for eps in (1e-4, 1e-8, 1e-12)]
        for a, b in zip(kinds, kinds[1:]):
            assert not (a == "complete_on_grid" and b == "incomplete")

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(1e-12, 1e-3), st.floats(1e-4, 1.0))
    def test_monotone_on_random_fields(self, seed, eps, shrink):
        rng = np.random.default_rng(seed)
        g = Grid(-1, 1, 31)
        v = rng.normal(size=(31, 31)) * 10.0 ** rng.uniform(-14, 0, size=(31, 31))
        i, j = rng.integers(0, 26, 2)
        v[i : i + int(rng.integers(1, 6)), j : j + int(rng.integers(1, 6))] = 0.0
        a = support_report_2d(v, g, g, eps)
        b = support_report_2d(v, g, g, eps * shrink)
        if not a.zero_regions:
            assert not b.zero_regions


class TestMargins:
    def test_prop1_equivalent(self, prop1):
        pos, mom = margins_equivalence_verdict(prop1)
        assert pos.kind == mom.kind == "equivalent_margins"
        assert len(pos.report.zero_points) == 6

    def test_husimi_equivalent(self, husimi):
        pos, mom = margins_equivalence_verdict(husimi)
        assert pos.kind == mom.kind == "equivalent_margins"
        assert pos.report.zero_points == []

    def test_prop2_inequivalent(self, prop2_op):
        pos, mom = margins_equivalence_verdict(prop2_op)
        assert pos.kind == mom.kind == "inequivalent_margins"
        Q = prop2_series(4).q_star
        for rep in (pos.report, mom.report):
            hi = max(r[1] for r in rep.zero_regions)
            lo = min(r[0] for r in rep.zero_regions)
            assert hi == pytest.approx(8 * math.pi) and lo == pytest.approx(-8 * math.pi)
            inner = min(r[0] for r in rep.zero_regions if r[0] > 0)
            assert Q <= inner <= Q + 2 * BAND.dx

    def test_remark_margins_equivalent(self, husimi):
        T = convolved_operator(remark_series().f_hat, husimi)
        pos, mom = margins_equivalence_verdict(T)
        assert pos.kind == mom.kind == "equivalent_margins"


class TestRegularity:
    def test_kinds(self, husimi, prop1, prop2_op):
        g = Grid(-3, 3, 61)
        assert regularity_check(husimi, g, g).kind == "regular"
        assert regularity_check(prop1, g, g).kind == "not_regular"
        assert regularity_check(prop2_op, g, g).kind == "not_regular"


class TestSerialization:
    def test_round_trip_and_consistency(self, prop1):
        v = completeness_verdict(prop1, FIELD, FIELD)
        doc = json.loads(v.to_json())
        assert doc["kind"] == "incomplete" and doc["caveat"] == "grid-and-tolerance limited"
        assert doc["report"]["epsilon"] == 1e-8
        assert doc["report"]["grid"]["q"] == {"x_min": -5.0, "x_max": 5.0, "n": 101}
        # the verdict follows from the report alone
        assert (doc["kind"] == "incomplete") == bool(doc["report"]["zero_regions"])

    def test_margin_report_consistency(self, prop1):
        for v in margins_equivalence_verdict(prop1):
            doc = v.to_dict()
            assert (doc["kind"] == "inequivalent_margins") == bool(doc["report"]["zero_regions"])
            json.dumps(doc)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            Verdict("maybe", SupportReport(1, [], [], 1e-8, {}))
