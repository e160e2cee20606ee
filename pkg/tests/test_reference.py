import math

import mpmath as mp
import numpy as np
import pytest
from scipy import integrate, special

from ldbem.problems import PROBLEMS, get_problem
from ldbem.reference import (
    RadialSeriesParams,
    bessel,
    caputo_of_power,
    find_roots,
    gamma_fn,
    mittag_leffler,
    problem1_exact,
    problem1_source,
    problem2_exact,
    problem3_exact,
    problem4_exact,
    problem4_source,
)

# frozen 200-root evaluations (alpha = 0.5, rho = 1, t = 1)
P2_CENTRE_HALF = 0.640859441042164  # disk R = 2, c0 = 1, d = 0.5
P3_MID = 0.8411423893538077  # annulus 1..2, d = 1.5


def test_gamma():
    assert gamma_fn(1.0) == 1.0 and gamma_fn(2.0) == 1.0
    assert gamma_fn(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-15)
    assert gamma_fn(1.5) == pytest.approx(0.886227, abs=1e-6)
    for x in np.linspace(0.01, 3.0, 50):
        assert abs(gamma_fn(x) / float(mp.gamma(x)) - 1) <= 1e-13
    with pytest.raises(ValueError):
        gamma_fn(0.0)


def _ml_oracle(alpha, z):
    with mp.workdps(60):
        return float(mp.nsum(lambda n: mp.mpf(z) ** n / mp.gamma(alpha * n + 1), [0, mp.inf]))


def test_mittag_leffler_identities():
    assert mittag_leffler(0.3, 0.0) == 1.0
    assert mittag_leffler(1.0, -1.0) == pytest.approx(math.exp(-1), abs=1e-15)
    assert mittag_leffler(0.5, -1.0) == pytest.approx(0.427584, abs=1e-6)
    z = -np.concatenate([np.linspace(0, 5, 26), np.geomspace(5, 200, 20)])
    assert np.abs(mittag_leffler(0.5, z) - special.erfcx(-z)).max() <= 1e-9
    assert np.abs(mittag_leffler(1.0, z) - np.exp(z)).max() <= 1e-9


@pytest.mark.parametrize("alpha", [0.5, 0.7, 0.9])
@pytest.mark.parametrize("z", [-0.3, -0.99, -1.01, -3.0, -8.0])
def test_mittag_leffler_vs_series_oracle(alpha, z):
    assert mittag_leffler(alpha, z) == pytest.approx(_ml_oracle(alpha, z), abs=1e-12)


@pytest.mark.parametrize("alpha", [0.2, 0.3, 0.6])
def test_mittag_leffler_laplace_transform(alpha):
    # int_0^inf exp(-s t) E_a(-t^a) dt = s^(a-1) / (s^a + 1)
    s = 1.5
    val = integrate.quad(lambda t: math.exp(-s * t) * mittag_leffler(alpha, -(t ** alpha)), 0, np.inf,
                         limit=200, epsabs=1e-12)[0]
    assert val == pytest.approx(s ** (alpha - 1) / (s ** alpha + 1), abs=1e-9)


def test_mittag_leffler_asymptotics_and_domain():
    for alpha in (0.3, 0.6):
        x = 1e5
        lead = 1 / (x * math.gamma(1 - alpha))
        assert mittag_leffler(alpha, -x) == pytest.approx(lead, rel=1e-4)
    with pytest.raises(ValueError):
        mittag_leffler(0.5, 1.0)
    with pytest.raises(ValueError):
        mittag_leffler(1.5, -1.0)
    out = mittag_leffler(0.7, np.array([[0.0, -1.0], [-2.0, -50.0]]))
    assert out.shape == (2, 2) and np.all(np.diff(out.ravel()) < 0)


def test_bessel_values_and_wronskian():
    assert bessel("J0", 0.0) == 1.0 and bessel("J1", 0.0) == 0.0
    for x in (0.5, 1.0, 5.0, 50.0):
        w = bessel("J1", x) * bessel("Y0", x) - bessel("J0", x) * bessel("Y1", x)
        assert w == pytest.approx(2 / (math.pi * x), abs=1e-9)
    for x in (0.1, 3.7, 42.0, 199.0):
        assert bessel("J0", x) == pytest.approx(float(mp.besselj(0, x)), abs=1e-10)
        assert bessel("Y1", x) == pytest.approx(float(mp.bessely(1, x)), abs=1e-10)
    with pytest.raises(ValueError):
        bessel("Y0", 0.0)
    with pytest.raises(ValueError):
        bessel("J0", -1.0)
    with pytest.raises(ValueError):
        bessel("K0", 1.0)


def test_j0_zeros():
    r = find_roots("J0", 20)
    assert r[:2] == pytest.approx([2.404826, 5.520078], abs=1e-6)
    oracle = [float(mp.besseljzero(0, k)) for k in range(1, 21)]
    assert np.abs(r - oracle).max() <= 1e-10
    assert np.abs(special.j0(r)).max() <= 1e-10
    assert np.diff(find_roots("J0", 25))[19] == pytest.approx(math.pi, abs=1e-2)


@pytest.mark.parametrize("lam", [2.0, 3.0])
def test_cross_product_roots(lam):
    k = find_roots("cross", 60, lam)
    f = special.j1(k) * special.y0(lam * k) - special.j0(lam * k) * special.y1(k)
    assert np.abs(f).max() <= 1e-10
    assert np.all(np.diff(k) > 0)
    assert k[20] - k[19] == pytest.approx(math.pi / (lam - 1), rel=1e-3)
    with pytest.raises(ValueError):
        find_roots("cross", 5, 1.0)


def test_problem1_values():
    assert problem1_exact(0.5, 0.3, 0.5, 0.9) == pytest.approx(0.585466, abs=1e-6)
    assert problem1_exact(1.0, 0.7, 0.3, 0.5) == 0.0
    assert problem1_exact(0.4, 0.7, 0.0, 0.5) == 0.0


def test_problem4_values():
    assert problem4_exact(math.pi / 2, 1.0, 0.1, 0.5) == pytest.approx(1.356825, abs=1e-6)
    assert problem4_exact(2.0, 1.0, 0.0, 0.5) == 1.0
    assert problem4_exact(0.0, 1.0, 0.7, 0.5) == 1.0


def _laplacian(fn, x, y, h=1e-3):
    # fourth-order central differences
    def d2(f0, fp, fm, fp2, fm2):
        return (-fp2 + 16 * fp - 30 * f0 + 16 * fm - fm2) / (12 * h * h)

    f0 = fn(x, y)
    return d2(f0, fn(x + h, y), fn(x - h, y), fn(x + 2 * h, y), fn(x - 2 * h, y)) + d2(
        f0, fn(x, y + h), fn(x, y - h), fn(x, y + 2 * h), fn(x, y - 2 * h))


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.9])
def test_manufactured_residual_problem1(alpha, rng):
    rho = 1.3
    for _ in range(20):
        x, y, t = rng.uniform(0.05, 0.95), rng.uniform(0.05, 1.95), rng.uniform(0.05, 1.0)
        phi = problem1_exact(x, y, t, alpha)
        space = (1 - x * x) * math.exp(2 * x)
        dphi = space * caputo_of_power(2 * alpha, t, alpha)
        lap = _laplacian(lambda a, b: problem1_exact(a, b, t, alpha), x, y)
        reaction = phi * (1 - phi ** 3)
        r = dphi - rho * lap - reaction - problem1_source(x, y, t, alpha, rho)
        assert abs(r) <= 1e-6


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.9])
def test_manufactured_residual_problem4(alpha, rng):
    for _ in range(20):
        x, y, t = rng.uniform(-10, 10), rng.uniform(-20, 20), rng.uniform(0.01, 0.1)
        phi = problem4_exact(x, y, t, alpha)
        dphi = math.sin(x) * caputo_of_power(alpha, t, alpha) / math.gamma(1 + alpha)
        lap = _laplacian(lambda a, b: problem4_exact(a, b, t, alpha), x, y)
        r = dphi - lap - phi * (1 - phi) - problem4_source(x, y, t, alpha)
        assert abs(r) <= 1e-6


def test_caputo_of_power():
    assert caputo_of_power(1.0, 2.0, 0.5) == pytest.approx(math.sqrt(2) / math.gamma(1.5), rel=1e-15)


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.7, 0.9])
def test_problem2_boundary_and_truncation(alpha):
    p200 = RadialSeriesParams(alpha=alpha)
    p100 = RadialSeriesParams(alpha=alpha, n_roots=100)
    th = np.linspace(0, 2 * np.pi, 7)
    assert np.abs(problem2_exact(2 * np.cos(th), 2 * np.sin(th), 0.7, p200) - 1.0).max() <= 1e-10
    r = np.array([0.0, 0.5, 1.0, 1.5, 1.8])
    for t in (0.1, 0.5, 1.0):
        assert np.abs(problem2_exact(r, 0 * r, t, p200) - problem2_exact(r, 0 * r, t, p100)).max() <= 1e-6


def test_problem2_initial_condition():
    # at t = 0 the series is the Fourier-Bessel expansion of a step, which
    # converges like N^-1/2; averaging consecutive partial sums cancels the
    # alternating tail
    r = np.array([0.0])
    vals = [problem2_exact(r, r, 0.0, RadialSeriesParams(alpha=0.5, n_roots=n))[0] for n in (50, 100, 199, 200)]
    assert abs(vals[0]) > abs(vals[1]) > abs(vals[3])
    assert abs(0.5 * (vals[2] + vals[3])) <= 1e-3


def test_problem2_regression():
    val = problem2_exact(1.0, 0.0, 1.0, RadialSeriesParams(alpha=0.5))
    assert val == pytest.approx(P2_CENTRE_HALF, abs=1e-12)
    with pytest.raises(ValueError):
        problem2_exact(3.0, 0.0, 1.0, RadialSeriesParams(alpha=0.5))


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.7, 0.9])
def test_problem3_boundary_and_truncation(alpha):
    p200 = RadialSeriesParams(alpha=alpha, value=2.0)
    p100 = RadialSeriesParams(alpha=alpha, value=2.0, n_roots=100)
    assert np.abs(problem3_exact(np.array([2.0, 0.0]), np.array([0.0, -2.0]), 0.6, p200) - 2.0).max() <= 1e-10
    r = np.array([1.0, 1.3, 1.7, 1.95])
    for t in (0.1, 0.5, 1.0):
        assert np.abs(problem3_exact(r, 0 * r, t, p200) - problem3_exact(r, 0 * r, t, p100)).max() <= 1e-6
    # zero inner flux: the radial derivative vanishes at d = 1
    h = 1e-5
    d_in = (problem3_exact(1.0 + h, 0.0, 0.5, p200) - problem3_exact(1.0 - h, 0.0, 0.5, p200)) / (2 * h)
    assert abs(d_in) <= 1e-5


def test_problem3_initial_condition_and_regression():
    r = np.array([1.0, 1.2])
    vals = [problem3_exact(r, 0 * r, 0.0, RadialSeriesParams(alpha=0.5, n_roots=n)) for n in (199, 200)]
    assert np.abs(0.5 * (vals[0] + vals[1])).max() <= 1e-3
    assert problem3_exact(1.5, 0.0, 1.0, RadialSeriesParams(alpha=0.5)) == pytest.approx(P3_MID, abs=1e-12)
    with pytest.raises(ValueError):
        problem3_exact(0.5, 0.0, 1.0, RadialSeriesParams(alpha=0.5))


def test_registry():
    assert sorted(PROBLEMS) == [f"problem{i}" for i in range(1, 7)]
    assert get_problem("problem1").build_mesh().n_quads == 256
    assert get_problem("problem2").build_mesh().n_quads == 420
    assert get_problem("problem3").build_mesh().n_quads == 588
    assert get_problem("problem4").build_mesh().n_quads == 256
    for pid in ("problem5", "problem6"):
        spec = get_problem(pid)
        assert not spec.has_exact
        with pytest.raises(ValueError, match="mesh file"):
            spec.build_mesh()
        with pytest.raises(ValueError, match="S_R1"):
            spec.bind(0.5, 1.0, ["outer"])
        b = spec.bind(0.5, 1.0, ["outer", "S_R1"])
        assert b.bcs["S_R1"].kind == "dirichlet" and b.bcs["outer"].kind == "neumann"
    with pytest.raises(ValueError, match="unknown problem"):
        get_problem("problem7")


@pytest.mark.parametrize("pid,alpha", [("problem1", 0.7), ("problem4", 0.4)])
def test_registered_boundary_data_match_exact(pid, alpha):
    spec = get_problem(pid)
    mesh = spec.build_mesh(nx=4, ny=4)
    b = spec.bind(alpha, 1.0, mesh.tags)
    x0, x1, t = mesh.nodes[:, 0].min(), mesh.nodes[:, 0].max(), 0.3
    for tag, x in (("left", x0), ("right", x1)):
        ys = np.linspace(mesh.nodes[:, 1].min(), mesh.nodes[:, 1].max(), 5)
        assert np.allclose(b.bcs[tag].evaluate(np.full(5, x), ys, t), b.exact(np.full(5, x), ys, t), atol=1e-14)
