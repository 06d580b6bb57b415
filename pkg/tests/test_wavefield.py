import numpy as np
import pytest

from pscat.errors import NumericalError, PreconditionError
from pscat.wavefield import (
    Spectrum,
    TimeTrace,
    Wavelet,
    causality_level_db,
    cfl_limit,
    constant_medium_spectrum,
    decay_rate,
    extract_arrival,
    free_space_spectrum,
    make_phaseless,
    solve_wave,
    spectrum_from_trace,
)

from conftest import uniform_phantom


# ---------------------------------------------------------------------------
# wavelets

@pytest.mark.parametrize("kind", ["gaussian_derivative", "gaussian_3", "ricker"])
def test_wavelet_spectrum_matches_quadrature(kind):
    wav = Wavelet(kind, center_k=6.0)
    t = np.linspace(0.0, wav.duration, 20000)
    w = wav(t)
    for k in (2.0, 6.0, 11.0):
        num = np.trapezoid(w * np.exp(1j * k * t), t)
        assert abs(num - wav.spectrum(np.array([k]))[0]) < 1e-5 * abs(num)


def test_wavelet_band_equals_floor():
    wav = Wavelet("gaussian_3", center_k=8.0)
    a, b = wav.band(0.05)
    peak = abs(wav.spectrum(np.array([wav.center_k]))[0])
    assert abs(wav.spectrum(np.array([a]))[0]) == pytest.approx(0.05 * peak, rel=1e-6)
    assert abs(wav.spectrum(np.array([b]))[0]) == pytest.approx(0.05 * peak, rel=1e-6)
    assert a < wav.center_k < b


def test_wavelet_is_causal_and_compact():
    wav = Wavelet("gaussian_3", center_k=8.0)
    t = np.linspace(-1.0, 0.0, 200)
    peak = np.max(np.abs(wav(np.linspace(0, wav.duration, 400))))
    assert np.max(np.abs(wav(t))) < 1e-5 * peak
    assert abs(wav(np.array([wav.duration + 0.1]))[0]) < 1e-5 * peak


# ---------------------------------------------------------------------------
# solver contracts

@pytest.fixture(scope="module")
def free_run():
    ph = uniform_phantom(44, c=1.0, half=0.9)
    wav = Wavelet("gaussian_3", center_k=7.0)
    y = np.zeros(3)
    rxs = [np.array([0.42, 0.12, 0.07]), np.array([0.3, -0.2, 0.12])]
    traces = solve_wave(ph, y, 2.8, wav, rxs, absorber_width=16)
    return ph, traces


def test_cfl_violation_rejected():
    ph = uniform_phantom(24, c=1.0)
    wav = Wavelet("gaussian_3", center_k=6.0)
    with pytest.raises(PreconditionError, match="CFL"):
        solve_wave(ph, np.zeros(3), 0.5, wav, [np.array([0.3, 0, 0])],
                   dt=cfl_limit(ph.grid.spacing, 4) * 1.5)


def test_receiver_outside_grid_rejected():
    ph = uniform_phantom(24, c=1.0)
    wav = Wavelet("gaussian_3", center_k=6.0)
    with pytest.raises(PreconditionError, match="receiver"):
        solve_wave(ph, np.zeros(3), 0.5, wav, [np.array([9.0, 0, 0])])


def test_free_space_trace_matches_green_function(free_run):
    ph, traces = free_run
    for tr in traces:
        r = tr.offset
        ref = tr.wavelet(tr.times - r) / (4 * np.pi * r)
        err = np.linalg.norm(tr.samples - ref) / np.linalg.norm(ref)
        assert err < 0.1  # tightened in the acceptance run at finer grids


def test_causality_floor(free_run):
    ph, traces = free_run
    for tr in traces:
        assert causality_level_db(tr) < -60.0


def test_decay_fit_positive_free_space(free_run):
    ph, traces = free_run
    gam, Y = decay_rate(traces[0])
    assert gam > 0
    assert Y > 0


def test_linearity_of_solver():
    ph = uniform_phantom(20, c=1.0)
    y = np.zeros(3)
    rx = [np.array([0.3, 0.1, 0.0])]
    w1 = Wavelet("gaussian_3", center_k=6.0)
    t1 = solve_wave(ph, y, 0.8, w1, rx, absorber_width=8)[0]

    class Doubled(Wavelet):
        def __call__(self, t):
            return 2.0 * Wavelet.__call__(self, t)

    w2 = Doubled("gaussian_3", center_k=6.0)
    t2 = solve_wave(ph, y, 0.8, w2, rx, absorber_width=8)[0]
    assert np.array_equal(2.0 * t1.samples, t2.samples)


def test_energy_non_increasing_after_source():
    ph = uniform_phantom(28, c=1.0, half=0.6)
    wav = Wavelet("gaussian_3", center_k=8.0)
    energies = []
    solve_wave(ph, np.zeros(3), 2.2, wav, [np.array([0.2, 0, 0])],
               absorber_width=12, energy_record=energies, energy_every=10)
    t, e = np.array(energies).T
    after = t > wav.duration * 1.05
    de = np.diff(e[after])
    assert np.all(de <= 1e-9 * e.max())


# ---------------------------------------------------------------------------
# spectra

def test_spectrum_deconvolution_free_space(free_run):
    ph, traces = free_run
    tr = traces[0]
    a, b = tr.wavelet.band(0.05)
    k = np.linspace(a + 0.2 * (b - a), b - 0.3 * (b - a), 40)
    sp = spectrum_from_trace(tr, k)
    ref = free_space_spectrum(tr.offset, k)
    rel = np.linalg.norm(sp.u_values - ref) / np.linalg.norm(ref)
    assert rel < 0.05
    # empty medium: scattered field at the solver noise floor (<= 2%)
    assert np.linalg.norm(sp.usc_values) / np.linalg.norm(sp.u0_values) < 0.02


def test_spectrum_conjugate_symmetry(free_run):
    ph, traces = free_run
    tr = traces[0]
    k = np.linspace(4.0, 10.0, 16)
    sp_pos = spectrum_from_trace(tr, k)
    sp_neg = spectrum_from_trace(tr, -k[::-1])
    assert np.allclose(
        sp_neg.u_values[::-1], np.conj(sp_pos.u_values), rtol=1e-12, atol=1e-15
    )


def test_band_outside_support_rejected(free_run):
    ph, traces = free_run
    with pytest.raises(PreconditionError, match="wavelet support"):
        spectrum_from_trace(traces[0], np.array([100.0]))


def test_constant_medium_spectrum_shape():
    k = np.linspace(1.0, 5.0, 9)
    u = constant_medium_spectrum(2.0, k, 1.5)
    assert np.allclose(np.abs(u), 1.0 / (8 * np.pi))
    assert np.allclose(np.angle(u[1] / u[0]), 1.5 * 2.0 * (k[1] - k[0]))


# ---------------------------------------------------------------------------
# phaseless records

def synthetic_spectrum(k, usc, r=0.05):
    x = (r, 0.0, 0.0)
    y = (0.0, 0.0, 0.0)
    u0 = free_space_spectrum(r, k)
    return Spectrum(x, y, k, u0 + usc, u0)


def test_make_phaseless_is_modulus():
    k = np.linspace(0.5, 5.0, 50)
    usc = np.exp(1j * k) / (k + 1j)
    sp = synthetic_spectrum(k, usc)
    rec = make_phaseless(sp, (1.0, 4.0))
    sel = (k >= 1.0) & (k <= 4.0)
    assert np.allclose(rec.modulus, np.abs(usc[sel]), rtol=1e-12)
    assert np.allclose(rec.modulus, 1.0 / np.sqrt(k[sel] ** 2 + 1.0))


def test_make_phaseless_geometry_guard(geometry):
    k = np.linspace(1.0, 4.0, 20)
    usc = np.exp(1j * k)
    x = (0.5 + geometry.rho * 2.0, 0.0, 0.0)
    sp = Spectrum(x, (0.5, 0.0, 0.0), k, usc, usc * 0 + 1)
    with pytest.raises(PreconditionError, match="P_rho"):
        make_phaseless(sp, (1.5, 3.5), geometry=geometry)


def test_make_phaseless_requires_band():
    k = np.linspace(1.0, 4.0, 20)
    sp = synthetic_spectrum(k, np.ones_like(k) + 0j)
    with pytest.raises(PreconditionError):
        make_phaseless(sp, (5.0, 4.0))


# ---------------------------------------------------------------------------
# arrival extraction

def test_extract_arrival_free_space(free_run):
    ph, traces = free_run
    for tr in traces:
        est = extract_arrival(tr)
        r = tr.offset
        assert abs(est.tau_hat - r) <= tr.dt
        assert est.a_hat == pytest.approx(1.0 / (4 * np.pi * r), rel=0.03)
        assert est.quality < 0.3


def test_extract_arrival_constant_medium():
    ph = uniform_phantom(40, c=4.0, half=0.8)
    wav = Wavelet("gaussian_3", center_k=7.0)
    rx = np.array([0.3, 0.1, 0.05])
    tr = solve_wave(ph, np.zeros(3), 2.5, wav, [rx], absorber_width=16)[0]
    est = extract_arrival(tr, n_source=2.0, n_receiver=2.0)
    r = tr.offset
    assert abs(est.tau_hat - 2.0 * r) <= 2 * tr.dt
    assert est.a_hat == pytest.approx(1.0 / (4 * np.pi * r), rel=0.05)


def test_extract_arrival_rejects_silence():
    wav = Wavelet("gaussian_3", center_k=8.0)
    t = np.arange(0.0, 3.0, 0.01)
    tr = TimeTrace((0.4, 0, 0), (0, 0, 0), 0.01, np.zeros(len(t)), wav)
    with pytest.raises(NumericalError, match="coherent"):
        extract_arrival(tr)
