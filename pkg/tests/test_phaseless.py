import numpy as np
import pytest
from scipy.integrate import quad

from pscat.errors import NumericalError, PreconditionError
from pscat.phaseless import (
    AsymptoticModel,
    ExponentialSum,
    ZeroSet,
    band_extend,
    blaschke_factor,
    blaschke_normalize,
    blaschke_remainder_time,
    bound_values,
    detect_real_zeros,
    minimum_phase_retrieve,
    prony_identify,
)


# ---------------------------------------------------------------------------
# interference constants

def test_bound_values_at_half_contrast():
    b1, omb, floor = bound_values(0.5)
    assert b1 == 1.25 / 1.5
    assert omb == 0.5 / 3.0
    assert floor == 0.5 / 6.0


def test_bounds_degenerate_as_contrast_vanishes():
    b1, omb, floor = bound_values(1e-9)
    assert b1 == pytest.approx(1.0)
    assert omb == pytest.approx(0.0, abs=1e-9)
    assert floor == pytest.approx(0.0, abs=1e-9)


# ---------------------------------------------------------------------------
# Blaschke machinery

def test_blaschke_factor_unimodular_on_axis(rng):
    k = rng.uniform(-50, 50, size=10_000)
    b = rng.uniform(-5, 5, size=10_000) + 1j * rng.uniform(1e-3, 5, size=10_000)
    vals = blaschke_factor(k, b)
    assert np.max(np.abs(np.abs(vals) - 1.0)) < 1e-12


def test_modulus_identity_with_planted_zeros():
    k = np.linspace(-6, 6, 801)
    phi = (k - 1.0) * (k - 1j) / (k + 2j) ** 3
    zeros = ZeroSet(((1.0, 1),), ((1j, 1),))
    tilde = blaschke_normalize(k, phi, zeros)
    # no zeros left near the upper half plane: modulus stays bounded below
    away = np.abs(k - 1.0) > 0.2
    assert np.min(np.abs(tilde[away])) > 0.0
    expected = np.abs(phi) / np.abs(k - 1.0)
    mask = np.abs(k - 1.0) > 0.05
    assert np.max(
        np.abs(np.abs(tilde[mask]) - expected[mask]) / expected[mask]
    ) < 1e-12


def test_modulus_mode_drops_upper_factors():
    k = np.linspace(-4, 4, 400)
    mod = 1.0 / np.sqrt(k**2 + 1.0)
    zeros = ZeroSet((), ((0.3 + 0.7j, 2),))
    out = blaschke_normalize(k, mod, zeros)
    assert np.allclose(out, mod)  # unimodular on the axis


def test_normalize_empty_zeroset_is_identity():
    k = np.linspace(-3, 3, 50)
    phi = np.exp(1j * k) / (k + 2j)
    assert np.array_equal(blaschke_normalize(k, phi, ZeroSet()), phi)


def test_normalize_rejects_nonvanishing_listed_zero():
    k = np.linspace(-3, 3, 301)
    phi = np.ones_like(k) + 0j
    with pytest.raises(PreconditionError, match="annihilate"):
        blaschke_normalize(k, phi, ZeroSet(((0.0, 1),), ()))


def test_detect_single_zero():
    k = np.linspace(0.0, 5.0, 501)
    F = np.abs(k - 2.0) / (k**2 + 1.0)
    zs = detect_real_zeros(k, F)
    assert len(zs.real_zeros) == 1
    a, m = zs.real_zeros[0]
    assert a == pytest.approx(2.0, abs=2e-3)
    assert m == 1


def test_detect_double_zero_multiplicity():
    k = np.linspace(0.0, 5.0, 501)
    F = (k - 2.0) ** 2 / (k**2 + 1.0)
    zs = detect_real_zeros(k, F)
    assert len(zs.real_zeros) == 1
    a, m = zs.real_zeros[0]
    assert a == pytest.approx(2.0, abs=2e-3)
    assert m == 2


def test_detect_no_zeros_on_positive_modulus():
    k = np.linspace(0.0, 5.0, 301)
    F = 1.0 / (k**2 + 1.0) + 0.2
    assert detect_real_zeros(k, F).is_empty


def test_detect_rejects_wide_plateau():
    k = np.linspace(0.0, 5.0, 301)
    F = np.ones_like(k)
    F[100:130] = 1e-6
    with pytest.raises(NumericalError, match="cluster"):
        detect_real_zeros(k, F)


# ---------------------------------------------------------------------------
# minimum-phase retrieval

def band_grid(width=90.0, n=4096):
    return -width / 2 + width * np.arange(n) / n


def central(k, frac=0.8):
    return np.abs(k) <= frac * np.max(np.abs(k)) * 0.5 * 2 * 0.5 * 2  # see below


def test_min_phase_pole_model():
    # f = e^{ikL}/(k+i): analytic and zero-free in the closed upper half
    # plane, |f| = 1/sqrt(k^2+1); the reconstructed phase must match the
    # closed form on the central 80% of the band
    k = band_grid()
    L = 0.7
    f = np.exp(1j * k * L) / (k + 1j)
    model = AsymptoticModel(1.0, 1, L)
    rec = minimum_phase_retrieve(k, np.abs(f), model)
    core = np.abs(k) <= 36.0
    err = np.angle(rec[core] / f[core])
    assert np.max(np.abs(err)) < 1e-3


def test_min_phase_echo_model():
    k = band_grid()
    L = 0.4
    model = AsymptoticModel(1.0, 0, L, 0.5, 1.0)
    f = model.evaluate(k)
    rec = minimum_phase_retrieve(k, np.abs(f), model)
    core = np.abs(k) <= 36.0
    assert np.max(np.abs(np.angle(rec[core] / f[core]))) < 1e-3


def test_min_phase_constant_modulus_returns_model_phase():
    k = band_grid(width=40.0, n=512)
    model = AsymptoticModel(np.exp(1j * 0.8), 0, 0.0)
    rec = minimum_phase_retrieve(k, np.ones_like(k), model)
    assert np.allclose(np.angle(rec), 0.8, atol=1e-9)


def test_min_phase_recovers_factors_outside_model(rng):
    # an extra zero-free factor (k+ia)/(k+ib) must be reconstructed from
    # the modulus alone
    k = band_grid()
    model = AsymptoticModel(2.0 - 1.0j, 1, -0.9, 0.4 * np.exp(0.3j), 1.7)
    f = model.evaluate(k) * (k + 2.2j) / (k + 0.8j)
    rec = minimum_phase_retrieve(k, np.abs(f), model)
    core = np.abs(k) <= 36.0
    assert np.max(np.abs(np.angle(rec[core] / f[core]))) < 1e-3


def test_min_phase_requires_positive_modulus():
    k = band_grid(width=20, n=256)
    mod = np.ones_like(k)
    mod[10] = 0.0
    with pytest.raises(PreconditionError):
        minimum_phase_retrieve(k, mod, AsymptoticModel(1.0))


# ---------------------------------------------------------------------------
# band extension

def test_band_extend_rational_exact():
    kb = np.linspace(1.0, 2.0, 60)
    F = 1.0 / np.sqrt(kb**2 + 1.0)
    kw = np.linspace(0.05, 10.0, 300)
    ext = band_extend(kb, F, kw, degree_budgets=(0, 2))
    truth = 1.0 / np.sqrt(kw**2 + 1.0)
    assert np.max(np.abs(ext.modulus - truth)) < 1e-8
    assert ext.reliable


def test_band_extend_even_polynomial_exact():
    kb = np.linspace(0.0, 1.0, 40)
    F2 = 2.0 + 0.5 * kb**2 + 0.1 * kb**4
    kw = np.linspace(0.0, 2.0, 100)
    ext = band_extend(kb, np.sqrt(F2), kw, degree_budgets=(4, 0))
    truth = np.sqrt(2.0 + 0.5 * kw**2 + 0.1 * kw**4)
    assert np.max(np.abs(ext.modulus - truth)) < 1e-9


def test_band_extend_noise_flags_far_extrapolation(rng):
    kb = np.linspace(1.0, 2.0, 80)
    F = 1.0 / np.sqrt(kb**2 + 1.0)
    noisy = F * (1.0 + 0.01 * rng.standard_normal(len(F)))
    near = np.linspace(0.9, 2.2, 50)
    far = np.linspace(0.05, 8.0, 50)
    ext_near = band_extend(kb, noisy, near, degree_budgets=(0, 2), strict=False)
    ext_far = band_extend(kb, noisy, far, degree_budgets=(2, 4), strict=False)
    assert not ext_far.reliable
    with pytest.raises(NumericalError, match="unreliable"):
        band_extend(kb, noisy, far, degree_budgets=(2, 4), strict=True)


# ---------------------------------------------------------------------------
# exponential sums

def test_prony_single_complex_term():
    es = ExponentialSum(((1.0 + 0j, 0, 2.0 + 1.0j),))
    t = np.linspace(0.05, 6.0, 120)
    rec = prony_identify(t, es.evaluate(t))
    assert len(rec.terms) == 1
    c, p, r = rec.terms[0]
    assert abs(c - 1.0) < 1e-6
    assert p == 0
    assert abs(r - (2.0 + 1.0j)) < 1e-6


def test_prony_polynomial_factor():
    # (3 + 2t) e^{-t}: same rate with powers 0 and 1
    es = ExponentialSum(((3.0, 0, 1.0j), (2.0, 1, 1.0j)))
    t = np.linspace(0.05, 8.0, 160)
    rec = prony_identify(t, es.evaluate(t))
    assert [p for _, p, _ in rec.terms] == [0, 1]
    coeffs = {p: c for c, p, _ in rec.terms}
    assert abs(coeffs[0] - 3.0) < 1e-6
    assert abs(coeffs[1] - 2.0) < 1e-6
    for _, _, r in rec.terms:
        assert abs(r - 1.0j) < 1e-6


def test_prony_zero_signal_gives_empty_sum():
    t = np.linspace(0.05, 5.0, 64)
    assert prony_identify(t, np.zeros_like(t, dtype=complex)).terms == ()


def test_prony_roundtrip_random_sums(rng):
    for _ in range(6):
        nterms = int(rng.integers(1, 7))
        terms = []
        rates = []
        for _ in range(nterms):
            rate = complex(rng.uniform(-3, 3), rng.uniform(0.3, 2.0))
            rates.append(rate)
            terms.append((complex(rng.normal(), rng.normal()), 0, rate))
        es = ExponentialSum(tuple(terms)).canonical()
        t = np.linspace(0.05, 7.0, 240)
        rec = prony_identify(t, es.evaluate(t), max_terms=8)
        assert len(rec.terms) == len(es.terms)
        for (c1, p1, r1), (c2, p2, r2) in zip(rec.terms, es.terms):
            assert p1 == p2
            assert abs(c1 - c2) < 1e-6
            assert abs(r1 - r2) < 1e-6


def test_prony_rejects_signal_outside_the_class():
    # a rational decay is no finite exponential sum; the residual guard
    # must refuse rather than return a bogus model
    t = np.linspace(0.05, 8.0, 120)
    q = 1.0 / (1.0 + t**2) + 0j
    with pytest.raises(NumericalError, match="identifiable"):
        prony_identify(t, q, max_terms=3)


# ---------------------------------------------------------------------------
# time image of the Blaschke remainder

def inverse_transform_oracle(g, t, tail=60.0):
    """(1/2pi) int g(k) e^{-ikt} dk by oscillatory-weight quadrature."""

    def part(fun, w, kind):
        lo, *_ = quad(fun, -tail, tail, weight=kind, wvar=w, limit=400)
        hi = 0.0
        for sgn in (1, -1):
            val, *_ = quad(
                lambda k: fun(sgn * k),
                tail,
                np.inf,
                weight=kind,
                wvar=sgn * w if kind == "cos" else w,
                limit=400,
            )
            hi += val if kind == "cos" else sgn * val
        return lo + hi

    out = np.zeros(len(t), dtype=complex)
    for j, tj in enumerate(t):
        re = part(lambda k: g(k).real, tj, "cos") + part(
            lambda k: g(k).imag, tj, "sin"
        )
        im = part(lambda k: g(k).imag, tj, "cos") - part(
            lambda k: g(k).real, tj, "sin"
        )
        out[j] = (re + 1j * im) / (2.0 * np.pi)
    return out


def blaschke_g(zeros):
    def g(k):
        k = np.asarray(k, dtype=complex)
        out = np.ones_like(k)
        for b, m in zeros.upper_zeros:
            out = out * ((k - b) / (k - np.conj(b))) ** m
        return out - 1.0

    return g


def test_remainder_single_zero_closed_form():
    zs = ZeroSet((), ((1j, 1),))
    q = blaschke_remainder_time(zs)
    t = np.linspace(0.1, 5.0, 40)
    assert np.max(np.abs(q.evaluate(t) - (-2.0) * np.exp(-t))) < 1e-12


def test_remainder_empty_set():
    assert blaschke_remainder_time(ZeroSet()).terms == ()


def test_remainder_rejects_real_axis_zero():
    with pytest.raises(PreconditionError):
        blaschke_remainder_time(ZeroSet((), ((2.0 + 1e-15j, 1),)))


@pytest.mark.parametrize(
    "zeros",
    [
        ZeroSet((), ((1j, 1),)),
        ZeroSet((), ((0.7 + 0.9j, 1), (-1.2 + 0.4j, 1))),
        ZeroSet((), ((2j, 2),)),
    ],
)
def test_remainder_matches_quadrature_oracle(zeros):
    q = blaschke_remainder_time(zeros)
    t = np.array([0.35, 0.8, 1.7])
    oracle = inverse_transform_oracle(blaschke_g(zeros), t)
    assert np.max(np.abs(q.evaluate(t) - oracle)) < 1e-8


def test_remainder_double_zero_has_polynomial_factor():
    q = blaschke_remainder_time(ZeroSet((), ((2j, 2),)))
    powers = sorted(p for _, p, _ in q.terms)
    assert powers == [0, 1]
    for _, _, rate in q.terms:
        assert rate == pytest.approx(2j)


def test_remainder_forward_roundtrip():
    zs = ZeroSet((), ((0.5 + 1.3j, 1), (-2.0 + 0.6j, 2)))
    q = blaschke_remainder_time(zs)
    k = np.linspace(-30.0, 30.0, 1000)
    g = blaschke_g(zs)(k)
    back = q.forward_spectrum(k)
    assert np.max(np.abs(back - g)) / np.max(np.abs(g)) < 1e-6


# ---------------------------------------------------------------------------
# structured-text serialization

def test_zeroset_json_roundtrip():
    zs = ZeroSet(((2.0, 1), (-3.5, 2)), ((0.4 + 1.2j, 1), (2j, 3)))
    assert ZeroSet.from_dict(zs.to_dict()) == zs


def test_exponential_sum_json_roundtrip():
    es = ExponentialSum(((1.5 - 0.5j, 0, 2 + 1j), (0.3j, 2, -1 + 0.25j)))
    assert ExponentialSum.from_dict(es.to_dict()) == es
