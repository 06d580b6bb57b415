"""Recovery pipeline: phaseless records to fields, travel times and c(x).

The chain mirrors the synthesis direction run backwards: modulus-only
records are completed to complex scattered fields by Blaschke-normalized
minimum-phase retrieval, first arrivals pulled from re-synthesized traces
give surface-to-surface travel times, and bent-ray tomography turns those
into a dielectric update inside the unknown region.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from .eikonal import TravelTimeField, solve_eikonal, trace_geodesic
from .errors import NumericalError, PreconditionError
from .medium import MediumPhantom, Region
from .phaseless import (
    AsymptoticModel,
    ExponentialSum,
    InterferenceBounds,
    ZeroSet,
    band_extend,
    blaschke_factor,
    blaschke_normalize,
    detect_real_zeros,
    minimum_phase_retrieve,
)
from .wavefield import (
    PhaselessRecord,
    Spectrum,
    TimeTrace,
    Wavelet,
    extract_arrival,
    free_space_spectrum,
)


# ---------------------------------------------------------------------------
# data containers

@dataclass(frozen=True)
class SurfaceTravelTimes:
    pairs: tuple[tuple[tuple, tuple], ...]
    tau_values: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.pairs)

    def reciprocity_misfits(self) -> list[float]:
        lookup = {}
        for (x, y), tau in zip(self.pairs, self.tau_values):
            lookup[(tuple(np.round(x, 9)), tuple(np.round(y, 9)))] = tau
        out = []
        for (x, y), tau in zip(self.pairs, self.tau_values):
            rev = lookup.get((tuple(np.round(y, 9)), tuple(np.round(x, 9))))
            if rev is not None:
                out.append(abs(tau - rev))
        return out


@dataclass(frozen=True)
class TomographyResult:
    c_estimate: np.ndarray = field(repr=False)
    data_residual: float
    residual_history: tuple[float, ...]
    model_error: float | None = None
    lam_reg: float = 0.0
    coverage: float = 0.0


@dataclass(frozen=True)
class UniquenessReport:
    """Data separation between two media against two reference floors.

    rerun_floor is the criterion's identical-phantom floor: the difference
    between two independent pipeline passes over the same medium (zero for
    a deterministic solver).  absolute_floor is the context number: the
    |u_sc| residual the solver reports for an empty medium, i.e. the
    accuracy of a single absolute measurement rather than of a difference.
    """

    modulus_max_diff: float
    modulus_rms_diff: float
    retrieved_max_diff: float
    retrieved_rms_diff: float
    traveltime_max_diff: float
    rerun_floor_max: float
    absolute_floor_max: float
    absolute_floor_rms: float
    details: dict = field(default_factory=dict)

    @property
    def separation_ratio(self) -> float:
        eps = np.finfo(float).eps * max(self.details.get("F_scale", 1.0), 1e-300)
        return self.modulus_max_diff / max(self.rerun_floor_max, eps)


# ---------------------------------------------------------------------------
# field retrieval from modulus data

def retrieve_scattered_field(
    record: PhaselessRecord,
    bounds: InterferenceBounds | None,
    model: AsymptoticModel,
    planted_zeros: ZeroSet | None = None,
    closure: bool = False,
    wide_factor: float = 5.0,
    n_wide: int = 4096,
) -> Spectrum:
    """Complete a modulus-only record to a complex scattered field.

    Pipeline: locate real zeros of the modulus and strip them (upper
    Blaschke factors are invisible to modulus), extend the stripped
    modulus to a wide symmetric grid with the model-anchored fit, divide
    out the known static double zero at k = 0 (scattered fields vanish
    quadratically in the static limit), reconstruct the phase of the
    remaining zero-free function by the Hilbert step, and re-multiply the
    stripped factors.  In planted-zero tests the known upper zeros are
    reattached as well.
    """
    k_band = record.k_grid
    F = record.modulus
    r = record.offset
    if bounds is not None:
        sel = k_band >= bounds.k0 if np.isfinite(bounds.k0) else slice(None)
        if not np.all(4.0 * np.pi * r * F[sel] >= bounds.usc_floor_coeff):
            raise PreconditionError(
                "pair outside the interference regime: modulus breaks the floor"
            )

    zeros = detect_real_zeros(k_band, F) if np.min(F) < 0.05 * np.max(F) else ZeroSet()
    if planted_zeros is not None:
        zeros = ZeroSet(zeros.real_zeros, planted_zeros.upper_zeros)
    # conjugate symmetry of spectra of real signals mirrors every real zero
    # across the origin; the mirrored partners live outside the measured
    # band but their smooth factors must come out before the even mirror
    # extension, and go back in afterwards
    zeros_full = ZeroSet(
        tuple(
            [(a, m) for a, m in zeros.real_zeros]
            + [(-a, m) for a, m in zeros.real_zeros if a != 0.0]
        ),
        zeros.upper_zeros,
    )
    F_tilde = (
        blaschke_normalize(k_band, F, zeros_full)
        if zeros_full.real_zeros
        else F.copy()
    )

    # stripping raises the algebraic power by one per divided zero, plus
    # two for the static double zero divided out below
    n_extra = sum(m for _, m in zeros_full.real_zeros)
    p1 = model.echo_amplitude
    if abs(p1) >= 1.0:
        p1 = p1 / abs(p1) * 0.99
    L1 = model.echo_length
    model_t = AsymptoticModel(
        c_coeff=model.c_coeff,
        n_power=model.n_power + n_extra + 2,
        lead_phase_length=model.lead_phase_length,
        echo_amplitude=p1,
        echo_length=L1,
        bound_m=model.bound_m,
    )

    K = wide_factor * float(np.max(np.abs(k_band)))
    # half-step offset keeps k = 0 off the grid so the static zero divides
    # out without a singular node
    k_wide = -K + (np.arange(n_wide) + 0.5) * (2.0 * K / n_wide)
    hole_model = None
    if closure:
        base = AsymptoticModel(
            c_coeff=model.c_coeff,
            n_power=model.n_power + n_extra,
            lead_phase_length=model.lead_phase_length,
            echo_amplitude=p1,
            echo_length=L1,
            bound_m=model.bound_m,
        )

        def hole_model(kk, base=base):
            kk = np.abs(np.asarray(kk, dtype=float))
            return np.abs(base.evaluate(kk))

    ext = band_extend(
        np.concatenate([-k_band[::-1], k_band]),
        np.concatenate([F_tilde[::-1], F_tilde]),
        k_wide,
        model=AsymptoticModel(
            c_coeff=model.c_coeff,
            n_power=model.n_power + n_extra,
            lead_phase_length=model.lead_phase_length,
            echo_amplitude=p1,
            echo_length=L1,
            bound_m=model.bound_m,
        ),
        degree_budgets=(8, 8),
        forced_zero_power=2,
        hole_model=hole_model,
        strict=False,
    )
    mod_wide = np.maximum(ext.modulus, 1e-12 * float(np.max(ext.modulus)))
    mod2 = mod_wide / k_wide**2
    phi2 = minimum_phase_retrieve(k_wide, mod2, model_t, check_band=False)
    phi = phi2 * k_wide**2

    # reattach stripped factors and return to the measured band
    for a, m in zeros_full.real_zeros:
        phi = phi * (k_wide - a) ** m
    for b, m in zeros_full.upper_zeros:
        phi = phi * blaschke_factor(k_wide, np.conj(b), m)
    usc_band = _complex_interp(k_wide, phi, k_band)
    # the measured modulus is exact on the band; keep it, use the phase
    usc_band = F * np.exp(1j * np.angle(usc_band))

    if closure:
        # hole closure: the band cannot pin the integrated log-modulus of
        # the unmeasured low-k region, whose Hilbert image on the band is
        # the single smooth mode g(k) = ln((k+s0)/(k-s0))/pi.  Fix its
        # coefficient by matching the phase of the known-background
        # interference model; everything the data does determine (the
        # non-smooth structure) survives untouched.
        s0 = 0.8 * float(np.min(k_band))
        gmode = np.log((k_band + s0) / (k_band - s0)) / np.pi
        eb = 1.0 + p1 * np.exp(1j * k_band * L1)
        ref_phase = (
            np.angle(model.c_coeff)
            + k_band * model.lead_phase_length
            + np.angle(eb)
        )
        mism = np.angle(usc_band * np.exp(-1j * ref_phase))
        w = F * F
        alpha = float(np.sum(w * gmode * mism) / np.sum(w * gmode * gmode))
        usc_band = usc_band * np.exp(-1j * alpha * gmode)

    u0 = free_space_spectrum(r, k_band)
    return Spectrum(record.receiver, record.source, k_band.copy(), usc_band + u0, u0)


def _complex_interp(k_from, values, k_to):
    re = np.interp(k_to, k_from, values.real)
    im = np.interp(k_to, k_from, values.imag)
    return re + 1j * im


def pair_model(
    phantom: MediumPhantom,
    ttf: TravelTimeField,
    x,
    y,
    b1_estimate: float | None = None,
) -> AsymptoticModel:
    """Asymptotic model of u_sc for a near-surface pair from geometry.

    C = -1/(4 pi r), L = r, L1 = tau - r and the echo amplitude is the
    (negated) modeled interference ratio; the data behaves like
    C e^{ikL} [1 - B1 e^{ikL1} + O(1/k)].
    """
    from .eikonal import spreading_amplitude

    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x - np.asarray(y, dtype=float)))
    tau = float(ttf(x[None, :])[0])
    if b1_estimate is None:
        path = trace_geodesic(ttf, x, phantom)
        amp = spreading_amplitude(phantom, path)
        b1_estimate = 4.0 * np.pi * r * amp.a_value
    b1 = float(np.clip(b1_estimate, 0.0, 0.999))
    return AsymptoticModel(
        c_coeff=-1.0 / (4.0 * np.pi * r),
        n_power=0,
        lead_phase_length=r,
        echo_amplitude=-b1,
        echo_length=max(tau - r, 1e-6),
        bound_m=1.0,
    )


# ---------------------------------------------------------------------------
# convolution identity

def convolution_residual(
    trace1: TimeTrace,
    trace2: TimeTrace,
    q1: ExponentialSum,
    q2: ExponentialSum,
) -> tuple[np.ndarray, np.ndarray]:
    """Residual of the swap identity U1 + (U1 - u0-image) * Q2 = U2 + ...

    The free-space delta image contributes exact shifted copies
    Q(t - r)/(4 pi r); the smooth parts are convolved discretely on the
    common time grid.  Returns (times, residual).
    """
    if abs(trace1.dt - trace2.dt) > 1e-12 or len(trace1.samples) != len(
        trace2.samples
    ):
        raise PreconditionError("traces must share a common time grid")
    if abs(trace1.offset - trace2.offset) > 1e-9:
        raise PreconditionError("traces must belong to the same pair geometry")
    t = trace1.times
    dt = trace1.dt
    r = trace1.offset
    g = 1.0 / (4.0 * np.pi * r)

    def side(trace, q_other):
        qs = q_other.evaluate(t)
        conv = np.convolve(trace.samples, qs)[: len(t)] * dt
        shifted = q_other.evaluate(t - r) * g
        return trace.samples + conv - shifted

    res = side(trace1, q2) - side(trace2, q1)
    return t, res


# ---------------------------------------------------------------------------
# surface travel times

def surface_travel_times(
    pairs,
    phantom: MediumPhantom | None = None,
    traces: list[TimeTrace] | None = None,
    spectra: list[Spectrum] | None = None,
    wavelet: Wavelet | None = None,
    band: tuple[float, float] | None = None,
) -> SurfaceTravelTimes:
    """Travel times for (x, y) surface pairs from one of three sources.

    With a phantom: exact first-arrival times from the grid eikonal solver
    (the synthetic-truth mode).  With traces: matched-filter picks.  With
    retrieved spectra: traces are re-synthesized over the reliable band
    first, so forward and inverse picks share the same estimator bias.
    """
    supplied = [s is not None for s in (phantom, traces, spectra)]
    if sum(supplied) != 1:
        raise PreconditionError(
            "provide exactly one of phantom, traces or spectra"
        )

    pair_list = [
        (np.asarray(x, dtype=float), np.asarray(y, dtype=float)) for x, y in pairs
    ]
    taus = np.zeros(len(pair_list))
    weights = np.ones(len(pair_list))

    if phantom is not None:
        cache: dict = {}
        for i, (x, y) in enumerate(pair_list):
            key = tuple(np.round(y, 12))
            if key not in cache:
                cache[key] = solve_eikonal(phantom, y)
            taus[i] = float(cache[key](x[None, :])[0])
        return SurfaceTravelTimes(
            tuple((tuple(x), tuple(y)) for x, y in pair_list), taus, weights
        )

    if traces is not None:
        if len(traces) != len(pair_list):
            raise PreconditionError("one trace per pair required")
        for i, tr in enumerate(traces):
            est = extract_arrival(tr)
            taus[i] = est.tau_hat
            weights[i] = max(1.0 - est.quality, 0.0)
        return SurfaceTravelTimes(
            tuple((tuple(x), tuple(y)) for x, y in pair_list), taus, weights
        )

    if wavelet is None or band is None:
        raise PreconditionError("spectra mode needs the wavelet and the band")
    if len(spectra) != len(pair_list):
        raise PreconditionError("one spectrum per pair required")
    a, b = band
    if (b - a) * float(np.mean([sp.offset for sp in spectra])) < 4.0:
        raise NumericalError("arrival not localizable: bandwidth-offset too small")
    for i, sp in enumerate(spectra):
        tr = synthesize_trace(sp, wavelet, band)
        est = extract_arrival(tr)
        taus[i] = est.tau_hat
        weights[i] = max(1.0 - est.quality, 0.0)
    return SurfaceTravelTimes(
        tuple((tuple(x), tuple(y)) for x, y in pair_list), taus, weights
    )


def synthesize_trace(
    spectrum: Spectrum,
    wavelet: Wavelet,
    band: tuple[float, float],
    oversample: float = 8.0,
    t_factor: float = 4.0,
) -> TimeTrace:
    """Band-limited time trace from a (retrieved) spectrum.

    The wavelet is re-applied before the inverse transform so the matched
    filter sees the same pulse shape as in forward runs.
    """
    a, b = band
    sel = (spectrum.k_grid >= a) & (spectrum.k_grid <= b)
    if not np.any(sel):
        raise PreconditionError("band contains no spectrum samples")
    k = spectrum.k_grid[sel]
    V = spectrum.u_values[sel] * wavelet.spectrum(k)
    T = t_factor * spectrum.offset + 2.0 * wavelet.duration
    dt = np.pi / (oversample * b)
    t = np.arange(0.0, T, dt)
    dk = np.gradient(k)
    U = (np.exp(-1j * np.outer(t, k)) @ (V * dk)).real / np.pi
    return TimeTrace(
        spectrum.receiver, spectrum.source, float(dt), U, wavelet
    )


# ---------------------------------------------------------------------------
# bent-ray tomography

def _harmonic_fill(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Replace values on the masked nodes by the harmonic extension of the
    surrounding values (Jacobi sweeps; the mask region is small)."""
    out = values.copy()
    idx = np.argwhere(mask)
    if len(idx) == 0:
        return out
    out[mask] = float(np.mean(values[~mask])) if np.any(~mask) else 0.0
    for _ in range(200):
        acc = (
            np.roll(out, 1, 0) + np.roll(out, -1, 0)
            + np.roll(out, 1, 1) + np.roll(out, -1, 1)
            + np.roll(out, 1, 2) + np.roll(out, -1, 2)
        ) / 6.0
        new = np.where(mask, acc, out)
        if np.max(np.abs(new - out)) < 1e-10:
            out = new
            break
        out = new
    return out


def _deposit_path(grid, pts, cols, vals, col_index):
    seg = np.diff(pts, axis=0)
    lengths = np.linalg.norm(seg, axis=1)
    mids = 0.5 * (pts[:-1] + pts[1:])
    u = (mids - grid.origin_arr) / grid.spacing
    n = np.asarray(grid.shape)
    u = np.clip(u, 0, n - 1 - 1e-9)
    i0 = np.minimum(np.floor(u).astype(int), n - 2)
    f = u - i0
    for di in (0, 1):
        wi = f[:, 0] if di else 1 - f[:, 0]
        for dj in (0, 1):
            wj = f[:, 1] if dj else 1 - f[:, 1]
            for dk in (0, 1):
                wk = f[:, 2] if dk else 1 - f[:, 2]
                w = wi * wj * wk * lengths
                node = (
                    (i0[:, 0] + di) * n[1] + (i0[:, 1] + dj)
                ) * n[2] + (i0[:, 2] + dk)
                ci = col_index[node]
                good = ci >= 0
                cols.extend(ci[good].tolist())
                vals.extend(w[good].tolist())


def tomography_invert(
    times: SurfaceTravelTimes,
    geometry,
    known_background: MediumPhantom,
    lam_reg: float | None = None,
    max_iterations: int = 25,
    rel_improvement: float = 0.005,
    coverage_threshold: float = 0.5,
    true_c: np.ndarray | None = None,
) -> TomographyResult:
    """Iterative bent-ray travel-time tomography restricted to the unknown
    region.

    Each iteration retraces geodesics in the current model, assembles the
    sparse path-length system for the refractive index n = sqrt(c) on the
    region's nodes, solves a Tikhonov-regularized least squares and
    projects onto c >= 1; steps that would raise the data residual are
    backtracked, so the accepted residual history is non-increasing.
    """
    grid = known_background.grid
    omega: Region = geometry.omega if hasattr(geometry, "omega") else geometry
    pts_all = np.stack([m.ravel() for m in grid.meshgrid()], axis=1)
    mask = omega.contains_points(pts_all).reshape(grid.shape)
    n_unknown = int(np.count_nonzero(mask))
    if n_unknown == 0:
        raise PreconditionError("unknown region contains no grid nodes")
    col_index = -np.ones(mask.size, dtype=int)
    col_index[np.flatnonzero(mask.ravel())] = np.arange(n_unknown)

    n_model = np.sqrt(_harmonic_fill(known_background.c_values, mask))
    taus_obs = times.tau_values
    sources = {}
    for i, (x, y) in enumerate(times.pairs):
        sources.setdefault(tuple(np.round(y, 12)), []).append(i)

    def forward(n_field):
        phantom = MediumPhantom(
            grid, n_field**2, known_background.beta, known_background.geometry
            if hasattr(known_background, "geometry")
            else geometry,
        )
        rows_i, rows_j, rows_v = [], [], []
        pred = np.zeros(len(taus_obs))
        row = 0
        row_of_pair = np.zeros(len(taus_obs), dtype=int)
        for ykey, idxs in sources.items():
            y = np.asarray(ykey)
            ttf = solve_eikonal(phantom, y)
            for i in idxs:
                x = np.asarray(times.pairs[i][0])
                pred[i] = float(ttf(x[None, :])[0])
                path = trace_geodesic(ttf, x, phantom)
                cols: list = []
                vals: list = []
                _deposit_path(grid, path.points, cols, vals, col_index)
                rows_i.extend([row] * len(cols))
                rows_j.extend(cols)
                rows_v.extend(vals)
                row_of_pair[i] = row
                row += 1
        A = sparse.csr_matrix(
            (rows_v, (rows_i, rows_j)), shape=(row, n_unknown)
        )
        resid = np.zeros(row)
        for i in range(len(taus_obs)):
            resid[row_of_pair[i]] = taus_obs[i] - pred[i]
        return A, resid

    A, resid = forward(n_model)
    coverage = float(
        np.count_nonzero(np.asarray(np.abs(A).sum(axis=0)).ravel() > 0)
    ) / n_unknown
    if coverage < coverage_threshold:
        raise PreconditionError(
            f"rays do not sample the unknown region (coverage {coverage:.2f})"
        )

    def rms(v):
        return float(np.sqrt(np.mean(v**2)))

    if lam_reg is None:
        lam_reg = _lcurve_corner(A, resid)

    history = [rms(resid)]
    for _ in range(max_iterations):
        delta = spla.lsqr(A, resid, damp=lam_reg)[0]
        step = 1.0
        accepted = False
        for _ in range(4):
            n_try = n_model.copy()
            n_try[mask] = np.maximum(n_try[mask] + step * delta, 1.0)
            A_try, resid_try = forward(n_try)
            if rms(resid_try) <= history[-1] * (1.0 + 1e-12):
                n_model = n_try
                A, resid = A_try, resid_try
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        history.append(rms(resid))
        if history[-2] - history[-1] < rel_improvement * history[-2]:
            break

    c_est = n_model**2
    err = None
    if true_c is not None:
        err = float(
            np.linalg.norm((c_est - true_c)[mask])
            / np.linalg.norm(true_c[mask])
        )
    return TomographyResult(
        c_estimate=c_est,
        data_residual=history[-1],
        residual_history=tuple(history),
        model_error=err,
        lam_reg=float(lam_reg),
        coverage=coverage,
    )


def _lcurve_corner(A, resid, n_lambda: int = 12) -> float:
    """Pick the Tikhonov weight at the corner of the L-curve."""
    svals = spla.svds(A, k=1, return_singular_vectors=False) if min(A.shape) > 1 else [1.0]
    smax = float(svals[0])
    lams = smax * np.logspace(-4.0, 0.0, n_lambda)
    pts = []
    for lam in lams:
        d = spla.lsqr(A, resid, damp=lam)[0]
        pts.append(
            (
                np.log(np.linalg.norm(A @ d - resid) + 1e-300),
                np.log(np.linalg.norm(d) + 1e-300),
            )
        )
    pts = np.asarray(pts)
    # discrete curvature; endpoints excluded
    best, best_k = -np.inf, lams[n_lambda // 2]
    for i in range(1, n_lambda - 1):
        a = pts[i - 1] - pts[i]
        b = pts[i + 1] - pts[i]
        cross = a[0] * b[1] - a[1] * b[0]
        denom = (np.linalg.norm(a) * np.linalg.norm(b)) + 1e-300
        ang = np.arcsin(np.clip(cross / denom, -1.0, 1.0))
        if ang > best:
            best, best_k = ang, lams[i]
    return float(best_k)


# ---------------------------------------------------------------------------
# the desk-scale uniqueness experiment

def uniqueness_experiment(
    phantom1: MediumPhantom,
    phantom2: MediumPhantom,
    pairs,
    band: tuple[float, float],
    forward_fn,
    retrieval: bool = True,
) -> UniquenessReport:
    """Contrast the phaseless data of two media that agree outside the
    unknown region.

    ``forward_fn(phantom, y, receivers) -> list[Spectrum]`` encapsulates
    the solver configuration; it is also run on the empty c = 1 medium to
    measure the solver noise floor that the modulus differences must beat.
    """
    g1, g2 = phantom1.grid, phantom2.grid
    if g1.shape != g2.shape or abs(g1.spacing - g2.spacing) > 1e-12:
        raise PreconditionError("phantoms must share a grid")
    omega = phantom1.geometry.omega
    pts = np.stack([m.ravel() for m in g1.meshgrid()], axis=1)
    outside = ~omega.contains_points(pts).reshape(g1.shape)
    dev = float(np.max(np.abs((phantom1.c_values - phantom2.c_values)[outside])))
    if dev > 1e-12:
        raise PreconditionError(
            f"phantoms differ outside the unknown region (max {dev:.3g})"
        )

    by_source: dict = {}
    for x, y in pairs:
        by_source.setdefault(tuple(np.asarray(y, float)), []).append(
            np.asarray(x, float)
        )

    a, b = band
    dF, dU, dT = [], [], []
    floor_vals = []
    rerun_vals = []
    details = {"pairs": []}
    empty = MediumPhantom(
        g1, np.ones(g1.shape), phantom1.beta, phantom1.geometry
    )
    for y, xs in by_source.items():
        sp1 = forward_fn(phantom1, np.asarray(y), xs)
        sp1b = forward_fn(phantom1, np.asarray(y), xs)   # independent pass
        sp2 = forward_fn(phantom2, np.asarray(y), xs)
        sp0 = forward_fn(empty, np.asarray(y), xs)
        ttf1 = solve_eikonal(phantom1, np.asarray(y))
        for s1, s1b, s2, s0, x in zip(sp1, sp1b, sp2, sp0, xs):
            sel = (s1.k_grid >= a) & (s1.k_grid <= b)
            F1 = np.abs(s1.usc_values[sel])
            F2 = np.abs(s2.usc_values[sel])
            dF.append(np.abs(F1 - F2))
            rerun_vals.append(np.abs(F1 - np.abs(s1b.usc_values[sel])))
            floor_vals.append(np.abs(s0.usc_values[sel]))
            if retrieval:
                model = pair_model(phantom1, ttf1, x, y)
                rec1 = PhaselessRecord(s1.receiver, s1.source, (a, b), s1.k_grid[sel], F1)
                rec2 = PhaselessRecord(s2.receiver, s2.source, (a, b), s2.k_grid[sel], F2)
                r1 = retrieve_scattered_field(rec1, None, model, closure=True)
                r2 = retrieve_scattered_field(rec2, None, model, closure=True)
                dU.append(np.abs(r1.usc_values - r2.usc_values))
            est1 = _spectrum_arrival(s1, sel)
            est2 = _spectrum_arrival(s2, sel)
            dT.append(abs(est1 - est2))
            details["pairs"].append(
                {"x": tuple(x), "y": tuple(y), "max_dF": float(np.max(dF[-1]))}
            )

    dF_all = np.concatenate(dF)
    floor_all = np.concatenate(floor_vals)
    dU_all = np.concatenate(dU) if dU else np.array([0.0])
    details["F_scale"] = float(max(np.max(np.abs(np.concatenate(dF))), np.max(floor_all)))
    return UniquenessReport(
        modulus_max_diff=float(np.max(dF_all)),
        modulus_rms_diff=float(np.sqrt(np.mean(dF_all**2))),
        retrieved_max_diff=float(np.max(dU_all)),
        retrieved_rms_diff=float(np.sqrt(np.mean(dU_all**2))),
        traveltime_max_diff=float(np.max(dT)) if dT else 0.0,
        rerun_floor_max=float(np.max(np.concatenate(rerun_vals))),
        absolute_floor_max=float(np.max(floor_all)),
        absolute_floor_rms=float(np.sqrt(np.mean(floor_all**2))),
        details=details,
    )


def _spectrum_arrival(sp: Spectrum, sel) -> float:
    """Crude arrival estimate by linear phase fit of the total field."""
    k = sp.k_grid[sel]
    ph = np.unwrap(np.angle(sp.u_values[sel]))
    return float(np.polyfit(k, ph, 1)[0])
