"""Experiment orchestration: configs, staged runs, caching and verification.

A run walks the stage chain phantom -> forward -> phaseless -> retrieve ->
invert -> verify, writing every artifact under a directory keyed by the
hash of the canonicalized config, so identical configs reuse cached stages
byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import NumericalError, PreconditionError
from .grid import read_grid, write_grid
from .medium import AdmissibleClass, MediumPhantom, build_phantom, validate_admissible
from .eikonal import solve_eikonal
from .phaseless import interference_bounds, bound_values
from .inversion import (
    pair_model,
    retrieve_scattered_field,
    surface_travel_times,
    tomography_invert,
    uniqueness_experiment,
)
from .wavefield import (
    PhaselessRecord,
    Spectrum,
    TimeTrace,
    Wavelet,
    causality_level_db,
    decay_rate,
    make_phaseless,
    solve_wave,
    spectrum_from_trace,
    window_level_db,
)

STAGE_ORDER = ["phantom", "forward", "phaseless", "retrieve", "invert", "verify"]

DEFAULTS = {
    "seed": 0,
    "n_k": 96,
    "band": None,            # defaults to the wavelet support at the floor
    "wavelet": {"kind": "gaussian_3", "center_k": 8.0},
    "solver": {
        "T": None,           # defaults to ringdown-aware rule below
        "absorber_width": 24,
        "sponge_depth": 10.0,
        "spatial_order": 4,
        "cfl_fraction": 0.9,
    },
    "sources": {"count": 1},
    "receivers": {
        "depth_fractions": [0.5, 0.7, 0.9],
        "tangent_fractions": [0.0],
    },
    "retrieval": {"wide_factor": 5.0, "n_wide": 4096, "phase_tolerance": 0.03},
    "tomography": {
        "times_source": "eikonal",
        "lam_reg": None,
        "max_iterations": 25,
        "sources": 8,
        "receivers_per": 9,
    },
}


# ---------------------------------------------------------------------------
# config

def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if "phantom" not in d:
            raise PreconditionError("config needs a 'phantom' section")
        merged = _merge(DEFAULTS, d)
        cfg = cls(merged)
        cfg.wavelet()          # validates
        a, b = cfg.band()
        wa, wb = cfg.wavelet().band(0.05)
        if not (wa <= a < b <= wb):
            raise PreconditionError(
                f"band ({a}, {b}) outside wavelet support ({wa:.3g}, {wb:.3g})"
            )
        if merged["solver"]["cfl_fraction"] > 1.0:
            raise PreconditionError("cfl_fraction must be <= 1")
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def canonical_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    # typed accessors -------------------------------------------------
    def phantom_spec(self) -> dict:
        return self.raw["phantom"]

    def wavelet(self) -> Wavelet:
        return Wavelet.from_dict(self.raw["wavelet"])

    def band(self) -> tuple[float, float]:
        if self.raw.get("band"):
            a, b = self.raw["band"]
            return float(a), float(b)
        wa, wb = self.wavelet().band(0.05)
        return 1.1 * wa, 0.9 * wb

    def k_grid(self) -> np.ndarray:
        a, b = self.band()
        return np.linspace(a, b, int(self.raw["n_k"]))

    def solver_kwargs(self, phantom: MediumPhantom) -> dict:
        sol = self.raw["solver"]
        W = int(sol["absorber_width"])
        h = phantom.grid.spacing
        return {
            "absorber_width": W,
            "spatial_order": int(sol["spatial_order"]),
            "cfl_fraction": float(sol["cfl_fraction"]),
            "sponge_strength": 4.0 * float(sol["sponge_depth"]) / (W * h),
        }

    def horizon(self, phantom: MediumPhantom, max_tau: float) -> float:
        if self.raw["solver"]["T"]:
            return float(self.raw["solver"]["T"])
        # cover three crossings of G in metric time plus the pulse
        g = phantom.geometry.g
        if g.kind == "box":
            diam = float(np.linalg.norm(np.asarray(g.hi) - np.asarray(g.lo)))
        else:
            diam = 2.0 * g.radius
        ring = 3.0 * diam * float(np.sqrt(phantom.c_max()))
        return max(3.0 * max_tau, ring) + self.wavelet().duration


# ---------------------------------------------------------------------------
# geometry sampling helpers

def select_sources(config: ExperimentConfig, phantom: MediumPhantom) -> np.ndarray:
    spec = config.raw["sources"]
    if "points" in spec:
        return np.asarray(spec["points"], dtype=float)
    pts = phantom.geometry.surface_points
    count = int(spec.get("count", 1))
    idx = np.linspace(0, len(pts) - 1, count).astype(int)
    return pts[idx]


def select_receivers(
    config: ExperimentConfig, phantom: MediumPhantom, y: np.ndarray
) -> list[np.ndarray]:
    spec = config.raw["receivers"]
    if "points" in spec:
        return [np.asarray(p, dtype=float) for p in spec["points"]]
    geo = phantom.geometry
    i = int(np.argmin(np.linalg.norm(geo.surface_points - y, axis=1)))
    normal = geo.surface_normals[i]
    ref = np.array([0.0, 0.0, 1.0]) if abs(normal[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    t1 = np.cross(normal, ref)
    t1 /= np.linalg.norm(t1)
    rho = geo.rho
    out = []
    for df in spec["depth_fractions"]:
        for tf in spec["tangent_fractions"]:
            out.append(y - rho * float(df) * normal + rho * float(tf) * t1)
    return out


def surface_pair_list(config: ExperimentConfig, phantom: MediumPhantom):
    tomo = config.raw["tomography"]
    pts = phantom.geometry.surface_points
    ns = min(int(tomo["sources"]), len(pts))
    nr = min(int(tomo["receivers_per"]), len(pts))
    src_idx = np.linspace(0, len(pts) - 1, ns).astype(int)
    rx_idx = np.linspace(0, len(pts) - 1, nr).astype(int)
    pairs = []
    for si in src_idx:
        for ri in rx_idx:
            if si == ri:
                continue
            pairs.append((pts[ri], pts[si]))
    return pairs


# ---------------------------------------------------------------------------
# manifest

@dataclass
class RunManifest:
    config_hash: str
    out_dir: str
    stages: list = field(default_factory=list)
    files: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    versions: dict = field(default_factory=dict)

    def record(self, stage: str, paths: list[Path]) -> None:
        if stage not in self.stages:
            self.stages.append(stage)
        for p in paths:
            data = Path(p).read_bytes()
            rel = str(Path(p).relative_to(self.out_dir))
            self.files[rel] = {
                "sha256": hashlib.sha256(data).hexdigest(),
                "bytes": len(data),
            }

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "stages": list(self.stages),
            "files": self.files,
            "timings": self.timings,
            "versions": self.versions,
        }

    def save(self, path: Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, out_dir) -> "RunManifest":
        out_dir = Path(out_dir)
        with open(out_dir / "manifest.json") as fh:
            d = json.load(fh)
        m = cls(d["config_hash"], str(out_dir))
        m.stages = d["stages"]
        m.files = d["files"]
        m.timings = d["timings"]
        m.versions = d["versions"]
        return m

    def verify_checksums(self) -> bool:
        for rel, meta in self.files.items():
            p = Path(self.out_dir) / rel
            if not p.exists():
                return False
            if hashlib.sha256(p.read_bytes()).hexdigest() != meta["sha256"]:
                return False
        return True


# ---------------------------------------------------------------------------
# small CSV/JSON helpers (formats are part of the external contract)

def _write_trace_csv(path: Path, tr: TimeTrace) -> None:
    with open(path, "w") as fh:
        x, y = tr.receiver, tr.source
        fh.write("x1,x2,x3,y1,y2,y3,dt,n\n")
        fh.write(
            f"{float(x[0])!r},{float(x[1])!r},{float(x[2])!r},"
            f"{float(y[0])!r},{float(y[1])!r},{float(y[2])!r},"
            f"{float(tr.dt)!r},{len(tr.samples)}\n"
        )
        for v in tr.samples:
            fh.write(f"{float(v)!r}\n")


def _read_trace_csv(path: Path, wavelet: Wavelet, spacing: float) -> TimeTrace:
    with open(path) as fh:
        fh.readline()
        head = fh.readline().strip().split(",")
        vals = [float(fh.readline()) for _ in range(int(head[7]))]
    x = tuple(float(v) for v in head[0:3])
    y = tuple(float(v) for v in head[3:6])
    tr = TimeTrace(x, y, float(head[6]), np.asarray(vals), wavelet, spacing=spacing)
    return tr


def _write_spectrum_csv(path: Path, sp: Spectrum) -> None:
    with open(path, "w") as fh:
        fh.write("k,re_u,im_u,re_u0,im_u0\n")
        for k, u, u0 in zip(sp.k_grid, sp.u_values, sp.u0_values):
            fh.write(
                f"{float(k)!r},{float(u.real)!r},{float(u.imag)!r},"
                f"{float(u0.real)!r},{float(u0.imag)!r}\n"
            )


def _read_spectrum_csv(path: Path, receiver, source) -> Spectrum:
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    rows = np.atleast_2d(rows)
    return Spectrum(
        tuple(receiver),
        tuple(source),
        rows[:, 0].copy(),
        rows[:, 1] + 1j * rows[:, 2],
        rows[:, 3] + 1j * rows[:, 4],
    )


def _write_record_csv(path: Path, rec: PhaselessRecord) -> None:
    with open(path, "w") as fh:
        fh.write("k,F\n")
        for k, F in zip(rec.k_grid, rec.modulus):
            fh.write(f"{float(k)!r},{float(F)!r}\n")


def _json_dump(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_plain(obj), fh, indent=1, sort_keys=True)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


# ---------------------------------------------------------------------------
# stages

def run(config: ExperimentConfig, stages=None, out="runs") -> RunManifest:
    """Execute the selected stages with config-hash keyed caching.

    Stage products live under <out>/<hash>/<stage>/; a stage found complete
    in the cache is reused without recomputation.  A selected stage whose
    dependency is neither cached nor selected fails, naming the missing
    stage.
    """
    if stages is None:
        stages = list(STAGE_ORDER)
    unknown = [s for s in stages if s not in STAGE_ORDER]
    if unknown:
        raise PreconditionError(f"unknown stages: {unknown}")
    stages = [s for s in STAGE_ORDER if s in stages]

    root = Path(out) / config.hash()
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "config.json", "w") as fh:
        fh.write(config.canonical_json())

    manifest = RunManifest(
        config.hash(),
        str(root),
        versions={"pscat": __version__, "numpy": np.__version__},
    )

    have: set = set()
    for s in STAGE_ORDER:
        if (root / s / ".complete").exists():
            have.add(s)

    state: dict = {"config": config, "root": root, "manifest": manifest}
    for stage in stages:
        deps = STAGE_ORDER[: STAGE_ORDER.index(stage)]
        for d in deps:
            if d not in have and d not in stages:
                raise PreconditionError(
                    f"stage {stage!r} needs {d!r}, which is neither cached nor selected"
                )
        sdir = root / stage
        if stage in have:
            manifest.record(stage, sorted(p for p in sdir.rglob("*") if p.is_file()))
            manifest.timings[stage] = 0.0
            continue
        sdir.mkdir(parents=True, exist_ok=True)
        t0 = time.time()
        _STAGES[stage](state)
        (sdir / ".complete").write_text("ok\n")
        manifest.timings[stage] = time.time() - t0
        manifest.record(stage, sorted(p for p in sdir.rglob("*") if p.is_file()))
        have.add(stage)

    manifest.save(root / "manifest.json")
    return manifest


def _load_phantom(state) -> MediumPhantom:
    if "phantom_obj" not in state:
        state["phantom_obj"] = build_phantom(state["config"].phantom_spec())
    return state["phantom_obj"]


def _stage_phantom(state) -> None:
    config, root = state["config"], state["root"]
    phantom = _load_phantom(state)
    write_grid(root / "phantom" / "c.grid", phantom.grid, phantom.c_values)
    report = validate_admissible(
        phantom,
        AdmissibleClass(n00=float(config.raw.get("n00", 0) or _auto_n00(phantom))),
        top_wavenumber=config.band()[1],
    )
    _json_dump(
        root / "phantom" / "validation.json",
        {
            "passed": report.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "margin": c.margin, "detail": c.detail}
                for c in report.checks
            ],
            "diagnostics": report.diagnostics,
        },
    )


def _auto_n00(phantom: MediumPhantom) -> float:
    from .medium import _default_n00

    return _default_n00(phantom)


def _stage_forward(state) -> None:
    config, root = state["config"], state["root"]
    phantom = _load_phantom(state)
    wavelet = config.wavelet()
    k_grid = config.k_grid()
    sdir = root / "forward"
    sources = select_sources(config, phantom)
    index = {"dt": None, "sources": [], "band": list(config.band())}
    for si, y in enumerate(sources):
        ttf = solve_eikonal(phantom, y)
        write_grid(sdir / f"tau_s{si:03d}.grid", phantom.grid, ttf.tau_values)
        receivers = select_receivers(config, phantom, y)
        taus = [float(ttf(np.asarray(r)[None, :])[0]) for r in receivers]
        T = config.horizon(phantom, max(taus))
        traces = solve_wave(
            phantom, y, T, wavelet, receivers, **config.solver_kwargs(phantom)
        )
        entry = {"y": [float(v) for v in y], "receivers": [], "T": T}
        for ri, tr in enumerate(traces):
            _write_trace_csv(sdir / f"trace_s{si:03d}_r{ri:03d}.csv", tr)
            n_src = float(np.sqrt(_c_at(phantom, y)))
            n_rx = float(np.sqrt(_c_at(phantom, tr.receiver)))
            sp = spectrum_from_trace(
                tr, k_grid, n_source=n_src, n_receiver=n_rx
            )
            _write_spectrum_csv(sdir / f"spectrum_s{si:03d}_r{ri:03d}.csv", sp)
            entry["receivers"].append(
                {
                    "x": [float(v) for v in tr.receiver],
                    "tau_eikonal": taus[ri],
                    "n_src": n_src,
                    "n_rx": n_rx,
                }
            )
        index["dt"] = traces[0].dt
        index["sources"].append(entry)
    _json_dump(sdir / "forward.json", index)


def _c_at(phantom: MediumPhantom, x) -> float:
    from .grid import trilinear

    return float(trilinear(phantom.grid, phantom.c_values, np.asarray(x, float)[None, :])[0])


def _load_forward(state):
    config, root = state["config"], state["root"]
    with open(root / "forward" / "forward.json") as fh:
        index = json.load(fh)
    return index


def _stage_phaseless(state) -> None:
    config, root = state["config"], state["root"]
    phantom = _load_phantom(state)
    index = _load_forward(state)
    band = config.band()
    sdir = root / "phaseless"
    records = {"band": list(band), "pairs": []}
    for si, entry in enumerate(index["sources"]):
        for ri, rx in enumerate(entry["receivers"]):
            sp = _read_spectrum_csv(
                root / "forward" / f"spectrum_s{si:03d}_r{ri:03d}.csv",
                rx["x"],
                entry["y"],
            )
            rec = make_phaseless(sp, band, geometry=phantom.geometry)
            name = f"record_s{si:03d}_r{ri:03d}.csv"
            _write_record_csv(sdir / name, rec)
            records["pairs"].append(
                {"x": rx["x"], "y": entry["y"], "file": name}
            )
    _json_dump(sdir / "records.json", records)


def _stage_retrieve(state) -> None:
    config, root = state["config"], state["root"]
    phantom = _load_phantom(state)
    index = _load_forward(state)
    band = config.band()
    sdir = root / "retrieve"
    rcfg = config.raw["retrieval"]
    summary = {"pairs": [], "bounds": []}
    for si, entry in enumerate(index["sources"]):
        y = np.asarray(entry["y"])
        ttf = solve_eikonal(phantom, y)
        spectra = [
            _read_spectrum_csv(
                root / "forward" / f"spectrum_s{si:03d}_r{ri:03d}.csv",
                rx["x"],
                entry["y"],
            )
            for ri, rx in enumerate(entry["receivers"])
        ]
        try:
            bounds = interference_bounds(phantom, y, spectra=spectra, ttf=ttf)
            bounds_note = ""
        except (NumericalError, PreconditionError) as e:
            bounds = None
            bounds_note = str(e)
        summary["bounds"].append(
            {
                "y": entry["y"],
                "omega0": None if bounds is None else bounds.omega0,
                "k0": None if bounds is None else bounds.k0,
                "note": bounds_note,
                "diagnostics": None if bounds is None else bounds.diagnostics,
            }
        )
        for ri, (rx, sp) in enumerate(zip(entry["receivers"], spectra)):
            rec = make_phaseless(sp, band, geometry=phantom.geometry)
            model = pair_model(phantom, ttf, np.asarray(rx["x"]), y)
            ret = retrieve_scattered_field(
                rec,
                bounds,
                model,
                closure=True,
                wide_factor=float(rcfg["wide_factor"]),
                n_wide=int(rcfg["n_wide"]),
            )
            name = f"retrieved_s{si:03d}_r{ri:03d}.csv"
            with open(sdir / name, "w") as fh:
                fh.write("k,re_phi,im_phi,phase\n")
                for k, v in zip(ret.k_grid, ret.usc_values):
                    fh.write(
                        f"{float(k)!r},{float(v.real)!r},{float(v.imag)!r},"
                        f"{float(np.angle(v))!r}\n"
                    )
            # held-out comparison against the simulator's phase (diagnostic
            # only; the retrieval itself never sees it)
            sel = (sp.k_grid >= band[0]) & (sp.k_grid <= band[1])
            truth = sp.usc_values[sel]
            guard = max(int(0.1 * len(truth)), 1)
            mid = slice(guard, len(truth) - guard)
            dphi = np.angle(ret.usc_values[mid] / truth[mid])
            phase_rms = float(np.sqrt(np.mean(np.abs(np.exp(1j * dphi) - 1.0) ** 2)))
            summary["pairs"].append(
                {
                    "x": rx["x"],
                    "y": entry["y"],
                    "file": name,
                    "phase_rms_vs_simulator": phase_rms,
                    "model_echo": float(np.abs(model.echo_amplitude)),
                    "model_echo_length": model.echo_length,
                }
            )
    _json_dump(sdir / "retrieve.json", summary)


def _stage_invert(state) -> None:
    config, root = state["config"], state["root"]
    phantom = _load_phantom(state)
    tomo = config.raw["tomography"]
    sdir = root / "invert"
    pairs = surface_pair_list(config, phantom)

    if tomo["times_source"] == "eikonal":
        times = surface_travel_times(pairs, phantom=phantom)
    elif tomo["times_source"] == "wave":
        wavelet = config.wavelet()
        by_source: dict = {}
        for x, y in pairs:
            by_source.setdefault(tuple(y), []).append(x)
        traces = []
        ordered_pairs = []
        for y, xs in by_source.items():
            ttfmax = max(np.linalg.norm(np.asarray(x) - np.asarray(y)) for x in xs)
            T = config.horizon(phantom, ttfmax * float(np.sqrt(phantom.c_max())))
            trs = solve_wave(
                phantom, np.asarray(y), T, wavelet, xs,
                **config.solver_kwargs(phantom),
            )
            traces.extend(trs)
            ordered_pairs.extend((x, np.asarray(y)) for x in xs)
        times = surface_travel_times(ordered_pairs, traces=traces)
        pairs = ordered_pairs
    else:
        raise PreconditionError(
            f"unknown tomography times_source {tomo['times_source']!r}"
        )

    background = MediumPhantom(
        phantom.grid,
        _background_c(phantom),
        phantom.beta,
        phantom.geometry,
    )
    result = tomography_invert(
        times,
        phantom.geometry,
        background,
        lam_reg=tomo["lam_reg"],
        max_iterations=int(tomo["max_iterations"]),
        true_c=phantom.c_values,
    )
    write_grid(sdir / "c_estimate.grid", phantom.grid, result.c_estimate)
    _json_dump(
        sdir / "tomography.json",
        {
            "data_residual": result.data_residual,
            "residual_history": list(result.residual_history),
            "model_error": result.model_error,
            "lam_reg": result.lam_reg,
            "coverage": result.coverage,
        },
    )
    _json_dump(
        sdir / "times.json",
        {
            "pairs": [
                {"x": [float(v) for v in x], "y": [float(v) for v in y]}
                for x, y in times.pairs
            ],
            "tau": [float(v) for v in times.tau_values],
            "weights": [float(v) for v in times.weights],
        },
    )


def _background_c(phantom: MediumPhantom) -> np.ndarray:
    """The known-outside-Omega medium: phantom spec without its bumps."""
    spec = dict(phantom.spec)
    spec = {k: v for k, v in spec.items() if k != "bumps"}
    return build_phantom(spec).c_values


def _stage_verify(state) -> None:
    config, root = state["config"], state["root"]
    report = verify_run(config, root)
    _json_dump(root / "verify" / "verification.json", report)
    for chk in report["checks"]:
        mark = "PASS" if chk["passed"] else "FAIL"
        print(f"[{mark}] {chk['name']}: {chk['detail']}")


_STAGES = {
    "phantom": _stage_phantom,
    "forward": _stage_forward,
    "phaseless": _stage_phaseless,
    "retrieve": _stage_retrieve,
    "invert": _stage_invert,
    "verify": _stage_verify,
}


# ---------------------------------------------------------------------------
# verification

def verify_run(config: ExperimentConfig, root: Path) -> dict:
    """Machine-checkable invariants evaluated on the run's artifacts."""
    phantom = build_phantom(config.phantom_spec())
    wavelet = config.wavelet()
    checks = []

    def add(name, passed, margin, detail=""):
        checks.append(
            {
                "name": name,
                "passed": bool(passed),
                "margin": float(margin),
                "detail": detail,
            }
        )

    with open(root / "phantom" / "validation.json") as fh:
        val = json.load(fh)
    add(
        "phantom_admissible",
        val["passed"],
        min(c["margin"] for c in val["checks"]),
        "all admissibility checks pass",
    )

    b1, omb, floor = bound_values(phantom.beta)
    add(
        "bound_values_positive",
        b1 < 1 and omb > 0 and floor > 0,
        min(1 - b1, omb, floor),
        f"b1={b1:.6g} one_minus_b={omb:.6g} floor={floor:.6g}",
    )

    index = None
    fdir = root / "forward"
    if (fdir / "forward.json").exists():
        with open(fdir / "forward.json") as fh:
            index = json.load(fh)
        worst_caus = -np.inf
        worst_gate = -np.inf
        worst_gamma = np.inf
        conj_dev = 0.0
        beta = phantom.beta
        for si, entry in enumerate(index["sources"]):
            for ri, rx in enumerate(entry["receivers"]):
                tr = _read_trace_csv(
                    fdir / f"trace_s{si:03d}_r{ri:03d}.csv",
                    wavelet,
                    phantom.grid.spacing,
                )
                worst_caus = max(worst_caus, causality_level_db(tr))
                r = tr.offset
                worst_gate = max(
                    worst_gate, window_level_db(tr, r, np.sqrt(1 + beta / 2) * r)
                )
                try:
                    gam, _ = decay_rate(tr)
                    worst_gamma = min(worst_gamma, gam)
                except NumericalError:
                    pass
                if si == 0 and ri == 0:
                    kk = np.linspace(*config.band(), 16)
                    sp_pos = spectrum_from_trace(tr, kk)
                    sp_neg = spectrum_from_trace(tr, -kk[::-1])
                    conj_dev = float(
                        np.max(
                            np.abs(
                                sp_neg.u_values[::-1] - np.conj(sp_pos.u_values)
                            )
                            / np.abs(sp_pos.u_values)
                        )
                    )
        add("causality_60db", worst_caus <= -60.0, -60.0 - worst_caus,
            f"worst pre-arrival level {worst_caus:.1f} dB")
        add("gating_50db", worst_gate <= -50.0, -50.0 - worst_gate,
            f"worst level in the lag window {worst_gate:.1f} dB")
        add("decay_rate_positive", worst_gamma > 0, worst_gamma,
            f"slowest fitted decay {worst_gamma:.3g}")
        add("conjugate_symmetry", conj_dev < 1e-9, 1e-9 - conj_dev,
            f"max relative deviation {conj_dev:.2e}")

    rdir = root / "retrieve"
    if (rdir / "retrieve.json").exists():
        with open(rdir / "retrieve.json") as fh:
            summary = json.load(fh)
        floors = []
        for b in summary["bounds"]:
            if b["diagnostics"] and "floor_margin_min" in b["diagnostics"]:
                floors.append(b["diagnostics"]["floor_margin_min"])
        if floors:
            add("usc_floor", min(floors) >= 0, min(floors),
                "simulated |u_sc| respects the interference floor for k >= K0")
        worst_phase = max(
            (p["phase_rms_vs_simulator"] for p in summary["pairs"]), default=0.0
        )
        tol = float(config.raw["retrieval"]["phase_tolerance"])
        add("retrieval_phase", worst_phase <= tol, tol - worst_phase,
            f"worst phase RMS vs simulator {worst_phase:.4f} (tol {tol})")

    idir = root / "invert"
    if (idir / "tomography.json").exists():
        with open(idir / "tomography.json") as fh:
            tomo = json.load(fh)
        hist = tomo["residual_history"]
        mono = all(b <= a * (1 + 1e-12) for a, b in zip(hist, hist[1:]))
        add("tomography_monotone", mono, 0.0,
            f"residual history {['%.3g' % v for v in hist]}")
        get, c_est = read_grid(idir / "c_estimate.grid")
        pts = np.stack([m.ravel() for m in phantom.grid.meshgrid()], axis=1)
        outside = ~phantom.geometry.omega.contains_points(pts).reshape(c_est.shape)
        bg = _background_c(phantom)
        dev = float(np.max(np.abs((c_est - bg)[outside])))
        add("tomography_constraints", dev <= 1e-9 and float(c_est.min()) >= 1.0,
            -dev, f"outside-region deviation {dev:.2e}, min c {c_est.min():.6g}")
        if tomo["model_error"] is not None:
            add("tomography_model_error", tomo["model_error"] <= 0.10,
                0.10 - tomo["model_error"],
                f"relative model error {tomo['model_error']:.4f}")

    # optional uniqueness experiment
    if "uniqueness" in config.raw:
        rep = run_uniqueness(config)
        add(
            "uniqueness_separation",
            rep.separation_ratio >= 10.0,
            rep.separation_ratio - 10.0,
            f"max|dF| = {rep.modulus_max_diff:.3e}, rerun floor "
            f"{rep.rerun_floor_max:.3e}, absolute floor {rep.absolute_floor_max:.3e}",
        )

    return {"passed": all(c["passed"] for c in checks), "checks": checks}


def run_uniqueness(config: ExperimentConfig):
    """Drive the two-phantom experiment from the config's sections."""
    phantom1 = build_phantom(config.phantom_spec())
    spec2 = _merge(config.phantom_spec(), config.raw["uniqueness"]["phantom2"])
    phantom2 = build_phantom(spec2)
    k_grid = config.k_grid()
    wavelet = config.wavelet()

    def forward_fn(ph, y, xs):
        taus = [float(np.linalg.norm(np.asarray(x) - y)) for x in xs]
        T = config.horizon(ph, max(taus) * float(np.sqrt(ph.c_max())))
        trs = solve_wave(ph, y, T, wavelet, xs, **config.solver_kwargs(ph))
        return [
            spectrum_from_trace(
                tr,
                k_grid,
                n_source=float(np.sqrt(_c_at(ph, tr.source))),
                n_receiver=float(np.sqrt(_c_at(ph, tr.receiver))),
            )
            for tr in trs
        ]

    sources = select_sources(config, phantom1)
    pairs = []
    for y in sources:
        for x in select_receivers(config, phantom1, y):
            pairs.append((x, y))
    return uniqueness_experiment(
        phantom1, phantom2, pairs, config.band(), forward_fn,
        retrieval=bool(config.raw["uniqueness"].get("retrieval", False)),
    )


# ---------------------------------------------------------------------------
# plot data emission

PLOT_SELECTORS = ("modulus", "retrieved_phase", "gating", "tau_misfit", "c_slice")


def emit_plots(config: ExperimentConfig, root: Path, selector: str) -> list[Path]:
    """Write plain-text plot data for one selector; returns the files."""
    root = Path(root)
    pdir = root / "plots"
    pdir.mkdir(exist_ok=True)
    out: list[Path] = []
    if selector not in PLOT_SELECTORS:
        raise PreconditionError(
            f"unknown plot selector {selector!r}; available: {PLOT_SELECTORS}"
        )
    phantom = build_phantom(config.phantom_spec())

    if selector == "modulus":
        with open(root / "phaseless" / "records.json") as fh:
            records = json.load(fh)
        for i, pair in enumerate(records["pairs"]):
            rows = np.loadtxt(root / "phaseless" / pair["file"], delimiter=",", skiprows=1)
            p = pdir / f"modulus_{i:03d}.dat"
            with open(p, "w") as fh:
                fh.write(f"# modulus vs k for x={pair['x']} y={pair['y']}\n# k F\n")
                for k, F in np.atleast_2d(rows):
                    fh.write(f"{float(k)!r} {float(F)!r}\n")
            out.append(p)

    elif selector == "retrieved_phase":
        with open(root / "retrieve" / "retrieve.json") as fh:
            summary = json.load(fh)
        index = json.load(open(root / "forward" / "forward.json"))
        for i, pair in enumerate(summary["pairs"]):
            rows = np.loadtxt(root / "retrieve" / pair["file"], delimiter=",", skiprows=1)
            rows = np.atleast_2d(rows)
            si = int(pair["file"].split("_s")[1][:3])
            ri = int(pair["file"].split("_r")[1][:3])
            sp = _read_spectrum_csv(
                root / "forward" / f"spectrum_s{si:03d}_r{ri:03d}.csv",
                pair["x"], pair["y"],
            )
            band = config.band()
            sel = (sp.k_grid >= band[0]) & (sp.k_grid <= band[1])
            truth = np.angle(sp.usc_values[sel])
            p = pdir / f"retrieved_phase_{i:03d}.dat"
            with open(p, "w") as fh:
                fh.write("# k retrieved_phase simulator_phase\n")
                for row, tp in zip(rows, truth):
                    fh.write(f"{float(row[0])!r} {float(row[3])!r} {float(tp)!r}\n")
            out.append(p)

    elif selector == "gating":
        index = json.load(open(root / "forward" / "forward.json"))
        beta = phantom.beta
        wavelet = config.wavelet()
        n = 0
        for si, entry in enumerate(index["sources"]):
            for ri, rx in enumerate(entry["receivers"]):
                tr = _read_trace_csv(
                    root / "forward" / f"trace_s{si:03d}_r{ri:03d}.csv",
                    wavelet, phantom.grid.spacing,
                )
                r = tr.offset
                p = pdir / f"gating_{n:03d}.dat"
                with open(p, "w") as fh:
                    fh.write(f"# window = ({float(r)!r}, {float(np.sqrt(1 + beta / 2) * r)!r})\n")
                    fh.write("# t absU in_window\n")
                    for t, v in zip(tr.times, tr.samples):
                        flag = int(r < t < np.sqrt(1 + beta / 2) * r)
                        fh.write(f"{float(t)!r} {float(abs(v))!r} {flag}\n")
                out.append(p)
                n += 1

    elif selector == "tau_misfit":
        with open(root / "invert" / "times.json") as fh:
            times = json.load(fh)
        grid, c_est = read_grid(root / "invert" / "c_estimate.grid")
        est = MediumPhantom(phantom.grid, c_est, phantom.beta, phantom.geometry)
        cache = {}
        p = pdir / "tau_misfit.dat"
        with open(p, "w") as fh:
            fh.write("# x1 x2 x3 y1 y2 y3 tau_obs tau_pred misfit\n")
            for pair, tau in zip(times["pairs"], times["tau"]):
                y = tuple(pair["y"])
                if y not in cache:
                    cache[y] = solve_eikonal(est, np.asarray(y))
                pred = float(cache[y](np.asarray(pair["x"])[None, :])[0])
                fh.write(
                    " ".join(repr(float(v)) for v in pair["x"] + pair["y"])
                    + f" {float(tau)!r} {float(pred)!r} {float(tau - pred)!r}\n"
                )
        out.append(p)

    elif selector == "c_slice":
        grid, c_est = read_grid(root / "invert" / "c_estimate.grid")
        k_mid = phantom.grid.shape[2] // 2
        x1, x2, _ = phantom.grid.axes()
        p = pdir / "c_slice.dat"
        with open(p, "w") as fh:
            fh.write("# x1 x2 c_true c_est (mid-plane slice)\n")
            for i in range(phantom.grid.shape[0]):
                for j in range(phantom.grid.shape[1]):
                    fh.write(
                        f"{float(x1[i])!r} {float(x2[j])!r} "
                        f"{float(phantom.c_values[i, j, k_mid])!r} "
                        f"{float(c_est[i, j, k_mid])!r}\n"
                    )
        out.append(p)

    return out
