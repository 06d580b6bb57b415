import json
import subprocess
import sys

import pytest

from pscat.errors import PreconditionError
from pscat.harness import ExperimentConfig, emit_plots, run


def smoke_config(**overrides):
    cfg = {
        "phantom": {
            "beta": 0.5,
            "geometry": {
                "omega": {"kind": "box", "lo": [-0.25] * 3, "hi": [0.25] * 3},
                "psi": {"kind": "box", "lo": [-0.5] * 3, "hi": [0.5] * 3},
                "g": {"kind": "box", "lo": [-0.8] * 3, "hi": [0.8] * 3},
                "surface_count": 96,
            },
            "grid": {"origin": [-1.05] * 3, "spacing": 2.1 / 31, "shape": [32, 32, 32]},
            "bumps": [{"center": [0.05, 0.0, 0.0], "radius": 0.15, "amplitude": 0.2}],
        },
        "wavelet": {"kind": "gaussian_3", "center_k": 6.0},
        "band": [3.5, 9.0],
        "n_k": 40,
        "solver": {"T": 5.0, "absorber_width": 12, "sponge_depth": 10.0},
        "sources": {"count": 1},
        "receivers": {"depth_fractions": [0.6, 0.85], "tangent_fractions": [0.0]},
        # the 32-cube smoke scale sits far below the interference regime;
        # the phase bar is enforced at the acceptance scale instead
        "retrieval": {"phase_tolerance": 2.0},
        "tomography": {
            "times_source": "eikonal",
            "sources": 6,
            "receivers_per": 8,
            "max_iterations": 3,
        },
    }
    for k, v in overrides.items():
        cfg[k] = v
    return cfg


@pytest.fixture(scope="module")
def smoke_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    config = ExperimentConfig.from_dict(smoke_config())
    manifest = run(config, out=out)
    return config, manifest, out


def test_manifest_lists_files_with_checksums(smoke_run):
    config, manifest, out = smoke_run
    assert manifest.stages == [
        "phantom", "forward", "phaseless", "retrieve", "invert", "verify"
    ]
    assert manifest.files
    assert manifest.verify_checksums()
    # the grid artifact exists and uses the binary format
    phantom_files = [f for f in manifest.files if f.endswith("c.grid")]
    assert phantom_files


def test_phantom_only_selection(tmp_path):
    config = ExperimentConfig.from_dict(smoke_config())
    manifest = run(config, stages=["phantom"], out=tmp_path)
    assert manifest.stages == ["phantom"]
    grids = [f for f in manifest.files if f.endswith(".grid")]
    assert len(grids) == 1


def test_missing_dependency_is_named(tmp_path):
    config = ExperimentConfig.from_dict(smoke_config())
    with pytest.raises(PreconditionError, match="neither cached nor selected"):
        run(config, stages=["phaseless"], out=tmp_path)


def test_cache_reuses_stages(smoke_run):
    config, manifest, out = smoke_run
    again = run(config, out=out)
    assert all(v == 0.0 for v in again.timings.values())
    assert again.files == manifest.files


def test_determinism_across_fresh_runs(tmp_path_factory):
    config = ExperimentConfig.from_dict(smoke_config())
    m1 = run(config, stages=["phantom", "forward"],
             out=tmp_path_factory.mktemp("a"))
    m2 = run(config, stages=["phantom", "forward"],
             out=tmp_path_factory.mktemp("b"))
    assert {k: v["sha256"] for k, v in m1.files.items()} == {
        k: v["sha256"] for k, v in m2.files.items()
    }


def test_config_hash_ignores_key_order():
    a = ExperimentConfig.from_dict(smoke_config())
    flipped = json.loads(json.dumps(smoke_config()))
    b = ExperimentConfig.from_dict(dict(reversed(list(flipped.items()))))
    assert a.hash() == b.hash()


def test_config_rejects_band_outside_wavelet():
    with pytest.raises(PreconditionError, match="band"):
        ExperimentConfig.from_dict(smoke_config(band=[0.01, 500.0]))


def test_verification_report_written(smoke_run):
    config, manifest, out = smoke_run
    root = out / config.hash()
    report = json.loads((root / "verify" / "verification.json").read_text())
    names = {c["name"] for c in report["checks"]}
    assert {"phantom_admissible", "causality_60db", "gating_50db",
            "tomography_monotone", "tomography_constraints"} <= names
    assert report["passed"]


@pytest.mark.parametrize(
    "selector", ["modulus", "retrieved_phase", "gating", "tau_misfit", "c_slice"]
)
def test_emit_plot_selectors(smoke_run, selector):
    config, manifest, out = smoke_run
    files = emit_plots(config, manifest.out_dir, selector)
    assert files
    for f in files:
        assert f.exists()
        assert f.suffix == ".dat"


def test_emit_plots_unknown_selector(smoke_run):
    config, manifest, out = smoke_run
    with pytest.raises(PreconditionError, match="available"):
        emit_plots(config, manifest.out_dir, "spectrogram")


def test_cli_roundtrip(tmp_path):
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(smoke_config()))
    out = tmp_path / "runs"
    proc = subprocess.run(
        [sys.executable, "-m", "pscat.cli", "phantom",
         "--config", str(cfg_path), "--out", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "phantom" in proc.stdout


def test_cli_exit_code_on_bad_config(tmp_path):
    cfg = smoke_config(band=[0.01, 500.0])
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text(json.dumps(cfg))
    proc = subprocess.run(
        [sys.executable, "-m", "pscat.cli", "phantom",
         "--config", str(cfg_path), "--out", str(tmp_path / "runs")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 2
    assert "precondition" in proc.stderr


def test_cli_plot_requires_artifacts(tmp_path):
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(smoke_config()))
    proc = subprocess.run(
        [sys.executable, "-m", "pscat.cli", "plot",
         "--config", str(cfg_path), "--out", str(tmp_path / "runs"),
         "--plots", "modulus"],
        capture_output=True, text=True,
    )
    assert proc.returncode != 0
