import math

import numpy as np
import pytest
from scipy import integrate

from phasemargins.constructions import (
    Function2D,
    Prop2Params,
    convolved_operator,
    husimi_operator,
    prop1_mu_hat,
    prop1_operator,
    prop1_weyl,
    prop2_f,
    prop2_gap_explainer,
    prop2_series,
    remark_f0,
    remark_series,
    strip_g,
    strip_g_hat,
)
from phasemargins.hilbert import Grid, default_grid
from phasemargins.phase_space import convolving_measures, ft_convolver, weyl_transform
from oracles import prop1_mu_hat_quad

SQRT_2PI = math.sqrt(2 * math.pi)


def kernel_integral(r: float, p: float = 0.0) -> float:
    """int (1 - cos(r y)) cos(p y) / y^2 dy over R by adaptive quadrature."""
    near = integrate.quad(lambda y: (1 - math.cos(r * y)) * math.cos(p * y) / y**2 if y else 0.5 * r * r, 0, 1, limit=200)[0]
    # 1 - cos(r y) cos(p y) expands into cosines of p and p +- r
    far = 0.0
    for amp, w in ((1.0, p), (-0.5, p + r), (-0.5, p - r)):
        if w == 0:
            far += amp * 1.0  # int_1^inf dy / y^2
        else:
            far += amp * integrate.quad(lambda y: 1 / y**2, 1, np.inf, weight="cos", wvar=abs(w))[0]
    return 2 * (near + far)


class TestProp1Operator:
    def test_components_unit_norm(self, prop1):
        from phasemargins.phase_space import matrix_element

        for phi in prop1.components:
            assert matrix_element(phi, phi, 0.0, 0.0).real == pytest.approx(1.0, abs=1e-9)

    def test_sinc_component_at_origin(self, prop1):
        assert prop1.components[1](0.0).real == pytest.approx(1 / SQRT_2PI, abs=1e-15)

    def test_mu_hat_closed_form_values(self):
        assert prop1_mu_hat(0.0) == pytest.approx(1 / SQRT_2PI, abs=1e-15)
        n = np.arange(1, 6)
        assert np.max(np.abs(prop1_mu_hat(np.concatenate([2 * np.pi * n, -2 * np.pi * n])))) <= 1e-16
        assert prop1_mu_hat(math.pi) == pytest.approx(1 / (2 * SQRT_2PI) * 2 / math.pi, abs=1e-15)
        assert prop1_mu_hat(math.pi) == pytest.approx(0.126987, abs=1e-6)

    @pytest.mark.parametrize("p", [0.0, 0.3, 0.999, 1.0, 1.7, math.pi, -5.2, 2 * math.pi])
    def test_mu_hat_vs_quadrature(self, p):
        assert prop1_mu_hat(p) == pytest.approx(prop1_mu_hat_quad(p), abs=1e-12)

    def test_mu_hat_continuous_at_one(self):
        assert prop1_mu_hat(1 - 1e-12) == pytest.approx(prop1_mu_hat(1 + 1e-12), abs=1e-11)

    def test_weyl_closed_form_values(self):
        assert prop1_weyl(0.0, 0.0) == 1.0
        assert prop1_weyl(1.5, 1.5) == 0.0
        assert prop1_weyl(2.0, 0.0) == pytest.approx(0.5 * math.sin(1.0), abs=1e-15)

    def test_truncated_second_moment_grows_linearly(self, prop1):
        # the sinc^2 half gives int_{-L}^{L} x^2 dmu ~ L / pi
        vals = []
        for L in (50.0, 100.0, 200.0, 400.0):
            g = Grid(-L, L, int(40 * L) + 1)
            mu, _ = convolving_measures(prop1, g)
            vals.append(mu.moment(2) * mu.raw_mass)
        ratios = np.diff(vals) / np.diff([50.0, 100.0, 200.0, 400.0])
        assert np.allclose(ratios, 1 / math.pi, rtol=0.02)


class TestStrips:
    @pytest.mark.parametrize("r", [0.25, 1.0, 2.0])
    def test_unit_mass(self, r):
        gx = integrate.quad(lambda x: math.exp(-x * x / 4), -np.inf, np.inf)[0]
        mass = gx * kernel_integral(r) / (2 * r * math.pi**1.5)
        assert mass == pytest.approx(1.0, abs=1e-6)
        # the sinc form agrees with (1 - cos(r y)) / y^2 away from y = 0
        y = np.array([0.3, 1.7, -4.0])
        direct = (1 - np.cos(r * y)) / y**2 / (2 * r * math.pi**1.5)
        assert np.allclose(strip_g(0.0, r, 0.0, y), direct, rtol=1e-12)
        assert strip_g(0.0, r, 0.0, 0.0) == pytest.approx(0.5 * r * r / (2 * r * math.pi**1.5), rel=1e-15)

    @pytest.mark.parametrize("r,p", [(1.0, 0.4), (0.5, 0.2), (2.0, 1.3)])
    def test_hat_matches_quadrature(self, r, p):
        # g_hat_{0,r}(0, p) = (1/2pi) int int g e^{-ipy} by separable quadrature
        gx = 2 * math.sqrt(math.pi)
        ref = gx * kernel_integral(r, p) / (2 * r * math.pi**1.5) / (2 * math.pi)
        assert strip_g_hat(0.0, r, 0.0, p) == pytest.approx(ref, abs=1e-9)

    def test_hat_support(self):
        p = np.linspace(-3, 3, 601)
        for q in (0.0, 0.7):
            v = strip_g_hat(0.0, 1.0, q, p)
            assert np.all((v == 0) == (np.abs(p) >= 1.0))

    def test_rotated_hat_axis_support(self):
        for th, r in ((math.pi / 8, 0.3), (math.pi / 3, 0.5)):
            bound = r / math.sin(th)
            q = np.linspace(bound, bound + 5, 200)
            assert np.all(strip_g_hat(th, r, q, 0.0) == 0.0)
            assert np.all(strip_g_hat(th, r, -q, 0.0) == 0.0)
            assert strip_g_hat(th, r, 0.99 * bound, 0.0) > 0

    def test_rotation_composes(self):
        th = 0.4
        x, y = 0.8, -1.3
        xr, yr = x * math.cos(th) + y * math.sin(th), -x * math.sin(th) + y * math.cos(th)
        assert strip_g(th, 0.7, x, y) == pytest.approx(strip_g(0.0, 0.7, xr, yr), rel=1e-14)
        assert strip_g_hat(th, 0.7, x, y) == pytest.approx(strip_g_hat(0.0, 0.7, xr, yr), rel=1e-14)

    @pytest.mark.parametrize("theta,r", [(math.pi / 8, 1.0), (3 * math.pi / 8, 1.5)])
    def test_hat_vs_2d_fft(self, theta, r):
        n, L = 481, 60.0
        x = np.linspace(-L, L, n)
        dx = x[1] - x[0]
        X, Y = np.meshgrid(x, x, indexing="ij")
        G = strip_g(theta, r, X, Y)
        k = 2 * np.pi * np.fft.fftfreq(n, dx)
        phase = np.exp(-1j * k * x[0])
        F = np.fft.fft2(G) * np.outer(phase, phase) * dx * dx / (2 * np.pi)
        Q, P = np.meshgrid(k, k, indexing="ij")
        qr, pr = Q * math.cos(theta) + P * math.sin(theta), -Q * math.sin(theta) + P * math.cos(theta)
        # stay off the kinks at p' = 0, +-r (where the truncated 1/y^2 tails
        # of g live) and inside the resolved band
        sel = (np.abs(pr) > 0.3) & (np.abs(np.abs(pr) - r) > 0.3) & (np.abs(Q) < 4) & (np.abs(P) < 4)
        err = np.abs(F[sel] - strip_g_hat(theta, r, Q[sel], P[sel])).max()
        assert err <= 1e-4

    def test_bad_width(self):
        with pytest.raises(ValueError):
            strip_g(0.0, 0.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            strip_g_hat(0.0, -1.0, 0.0, 0.0)


class TestProp2:
    def test_params(self):
        assert Prop2Params.angle(1) == pytest.approx(math.pi / 4)
        assert Prop2Params.width(1) == pytest.approx(math.sin(math.pi / 4))
        assert Prop2Params.width(3) == pytest.approx(math.sin(math.pi / 16) / 7)
        for bad in (0, 9):
            with pytest.raises(ValueError, match="N_max out of range"):
                Prop2Params(bad)

    def test_series_terms_and_constants(self):
        s = prop2_series(4)
        assert len(s.terms) == 1 + 3 + 7 + 15
        from fractions import Fraction

        total = sum(Fraction(1, 2 ** (n + k)) for n in range(1, 5) for k in range(1, 2**n))
        assert s.C == pytest.approx(float(1 / (2 * total)), rel=1e-15)
        assert s.C == pytest.approx(0.76304246, abs=1e-8)
        assert sum(w for w, _, _ in s.terms) == pytest.approx(1 / (2 * s.C))
        # the n=1, k=1 strip sets both bounds
        assert s.q_star == pytest.approx(1.0, abs=1e-15)
        assert s.p_star == pytest.approx(1.0, abs=1e-15)

    def test_f_nonnegative_symmetric_normalized(self):
        f, f_hat, C = prop2_f(Prop2Params(4, (Grid(-5, 5, 101), Grid(-5, 5, 101))))
        assert f.values.min() >= 0.0 and f_hat.values.min() >= 0.0
        assert np.allclose(f.values, f.values[::-1, :], rtol=1e-14, atol=0)
        assert np.allclose(f_hat.values, f_hat.values[::-1, :], rtol=0, atol=1e-14 * f_hat.values.max())
        s = prop2_series(4)
        assert 2 * math.pi * s.f_hat(0.0, 0.0) == pytest.approx(1.0, abs=1e-12)
        assert C == s.C

    def test_mass_by_strip_quadrature(self):
        # each strip has unit mass (checked above), so the mass is C * 2 * sum w
        s = prop2_series(3)
        gx = 2 * math.sqrt(math.pi)
        masses = [gx * kernel_integral(r) / (2 * r * math.pi**1.5) for _, _, r in s.terms]
        total = 2 * s.C * sum(w * m for (w, _, _), m in zip(s.terms, masses))
        assert total == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("N", [1, 2, 4])
    def test_axis_support_bound(self, N):
        s = prop2_series(N)
        q = np.linspace(s.q_star + 1e-9, 12, 4001)
        assert np.all(s.f_hat(q, 0.0) == 0.0) and np.all(s.f_hat(-q, 0.0) == 0.0)
        assert s.f_hat(s.q_star - 1e-3, 0.0) > 0.0
        p = np.linspace(s.p_star + 1e-9, 12, 4001)
        assert np.all(s.f_hat(0.0, p) == 0.0)

    def test_no_accidental_cancellation(self):
        s = prop2_series(4)
        g = Grid(-3, 3, 121)
        Q, P = np.meshgrid(g.points, g.points, indexing="ij")
        fh = s.f_hat(Q, P)
        terms = s.term_hats(Q, P)
        assert terms.min() >= 0.0
        assert np.all(terms[:, fh == 0] == 0.0)
        assert np.any(fh == 0) and np.any(fh > 0)

    def test_sparser_with_fewer_terms(self):
        g = Grid(-3, 3, 61)
        Q, P = np.meshgrid(g.points, g.points, indexing="ij")
        z1 = np.count_nonzero(prop2_series(1).f_hat(Q, P) == 0)
        z4 = np.count_nonzero(prop2_series(4).f_hat(Q, P) == 0)
        assert z1 > z4

    def test_gap_explainer_marks_omitted_strips(self):
        explain = prop2_gap_explainer(1)
        a, r = Prop2Params.angle(2), Prop2Params.width(2)
        # a point on the n=2, k=1 strip axis far from the origin
        q, p = 3 * math.cos(a), 3 * math.sin(a)
        assert explain(np.array([q]), np.array([p]), 0.01)[0]
        assert prop2_series(1).f_hat(q, p) == 0.0
        assert not prop2_gap_explainer(12)(np.array([q]), np.array([p]), 0.01)[0]


class TestRemark:
    def test_support_and_values(self):
        s = remark_series()
        assert s.C == 0.5
        q = np.array([1.0, 1.5, -3.0, 4.0])
        Q, P = np.meshgrid(q, q)
        assert np.all(s.f_hat(Q, P) == 0.0)
        assert s.f_hat(0.5, 0.0) > 0.0
        assert 2 * math.pi * s.f_hat(0.0, 0.0) == pytest.approx(1.0, abs=1e-12)

    def test_tabulated(self):
        f0, f0_hat, C0 = remark_f0((Grid(-2, 2, 41), Grid(-2, 2, 41)))
        assert C0 == 0.5 and f0.values.min() >= 0 and f0.nonnegative


class TestConvolvedOperator:
    def test_irregular_base_refused(self, prop1):
        with pytest.raises(ValueError, match="base operator not regular"):
            convolved_operator(remark_series().f_hat, prop1)

    def test_origin_only_sanity(self, husimi):
        T = convolved_operator(lambda q, p: np.full(np.broadcast(q, p).shape, 1 / (2 * math.pi)), husimi)
        assert abs(weyl_transform(T, 0.0, 0.0) - 1.0) <= 1e-12

    def test_field_zero_exactly_where_f_hat_zero(self, husimi):
        s = prop2_series(4)
        T = convolved_operator(s.f_hat, husimi)
        g = Grid(-3, 3, 61)
        Q, P = np.meshgrid(g.points, g.points, indexing="ij")
        field = weyl_transform(T, Q, P)
        fh = s.f_hat(-P, Q)
        assert np.array_equal(field == 0, fh == 0)
        ref = 2 * math.pi * fh * np.exp(-(Q**2 + P**2) / 4)
        assert np.max(np.abs(field - ref)) <= 1e-14

    def test_tabulated_f_hat_accepted(self, husimi):
        _, f0_hat, _ = remark_f0()
        T = convolved_operator(f0_hat, husimi)
        assert abs(weyl_transform(T, 0.0, 0.0) - 1.0) <= 1e-9

    @pytest.mark.parametrize("p", [0.0, 0.5, 1.4])
    def test_margin_transform_formula(self, husimi, p):
        s = remark_series()
        T = convolved_operator(s.f_hat, husimi)
        formula = 2 * math.pi * s.f_hat(-p, 0.0) * math.exp(-p * p / 4) / SQRT_2PI
        assert abs(ft_convolver(T, "position", p) - formula) <= 1e-14
        # 2D quadrature oracle: mu_hat(p) = e^{-p^2/4}/sqrt(2pi) * int int f(x, y) e^{-ipx}
        gauss = integrate.quad(lambda t: math.exp(-t * t / 4) * math.cos(p * t), -np.inf, np.inf)[0]
        term_x_gauss = gauss * kernel_integral(1.0) / (2 * math.pi**1.5)  # g_{0,1}: Gaussian in x
        term_x_kernel = 2 * math.sqrt(math.pi) * kernel_integral(1.0, p) / (2 * math.pi**1.5)  # g_{pi/2,1}
        ff = 0.5 * (term_x_gauss + term_x_kernel)
        assert abs(ft_convolver(T, "position", p) - ff * math.exp(-p * p / 4) / SQRT_2PI) <= 1e-8

    def test_fourier_conjugate_field(self, husimi):
        s = prop2_series(2)
        T = convolved_operator(s.f_hat, husimi, explainer=prop2_gap_explainer(2))
        F = T.fourier()
        assert weyl_transform(F, 0.4, -0.9) == pytest.approx(weyl_transform(T, 0.9, 0.4))
        assert "gap_explainer" in F.meta


def test_function2d_csv(tmp_path):
    g = Grid(0, 1, 3)
    f = Function2D((g, g), np.arange(9.0).reshape(3, 3))
    f.to_csv(tmp_path / "f.csv")
    rows = (tmp_path / "f.csv").read_text().splitlines()
    assert rows[0] == "x,y,value" and rows[-1] == "1.0,1.0,8.0" and len(rows) == 10
    with pytest.raises(ValueError):
        Function2D((g, g), np.full((3, 3), np.nan))


def test_husimi_regular(husimi):
    g = Grid(-5, 5, 41)
    Q, P = np.meshgrid(g.points, g.points)
    assert np.min(np.abs(weyl_transform(husimi, Q, P))) > 0
