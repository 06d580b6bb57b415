import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pscat.errors import PreconditionError
from pscat.medium import (
    AdmissibleClass,
    Geometry,
    MediumPhantom,
    Region,
    build_phantom,
    margin_rho,
    validate_admissible,
)

from conftest import box_geometry, cube_grid


def test_margin_rho_nested_boxes():
    geo = Geometry.build(
        Region("box", lo=(-1,) * 3, hi=(1,) * 3),
        Region("box", lo=(-2,) * 3, hi=(2,) * 3),
        Region("box", lo=(-4,) * 3, hi=(4,) * 3),
    )
    # axis-aligned gaps: 1 inward, 2 outward; half the minimum
    assert margin_rho(geo) == pytest.approx(0.5)


def test_margin_rho_concentric_balls():
    geo = Geometry.build(
        Region("ball", center=(0, 0, 0), radius=1.0),
        Region("ball", center=(0, 0, 0), radius=2.0),
        Region("ball", center=(0, 0, 0), radius=3.0),
    )
    assert margin_rho(geo) == pytest.approx(0.5)


def test_margin_rho_touching_regions_rejected():
    with pytest.raises(PreconditionError):
        Geometry.build(
            Region("box", lo=(-2,) * 3, hi=(2,) * 3),
            Region("box", lo=(-2,) * 3, hi=(2,) * 3),
            Region("box", lo=(-4,) * 3, hi=(4,) * 3),
        )


def test_minimal_phantom_is_admissible():
    ph = build_phantom({"beta": 0.5, "geometry": box_geometry(), "grid": cube_grid(40)})
    report = validate_admissible(ph, AdmissibleClass(n00=30.0))
    assert report.passed
    assert ph.c_values.min() == pytest.approx(1.0)
    assert ph.c_values.max() == pytest.approx(2.0)


def test_bump_amplitude_sets_peak():
    # background 1 + 2*beta = 1.5 plus a unit-profile bump of amplitude 0.5
    # peaks at exactly 2.0 at the bump center
    ph = build_phantom(
        {
            "beta": 0.25,
            "geometry": box_geometry(),
            "grid": cube_grid(41),
            "bumps": [{"center": [0.0, 0.0, 0.0], "radius": 0.2, "amplitude": 0.5}],
        }
    )
    assert ph.c_max() == pytest.approx(2.0, abs=1e-12)


def test_bump_leaking_outside_g_rejected():
    with pytest.raises(PreconditionError, match="leaks outside G"):
        build_phantom(
            {
                "beta": 0.25,
                "geometry": box_geometry(),
                "grid": cube_grid(40),
                "bumps": [{"center": [0.7, 0.7, 0.7], "radius": 0.5, "amplitude": 0.1}],
            }
        )


def test_negative_bump_amplitude_rejected():
    with pytest.raises(PreconditionError):
        build_phantom(
            {
                "beta": 0.25,
                "geometry": box_geometry(),
                "grid": cube_grid(40),
                "bumps": [{"center": [0, 0, 0], "radius": 0.2, "amplitude": -0.1}],
            }
        )


def test_vacuum_medium_fails_contrast_check(geometry):
    grid = cube_grid(32)
    ph = MediumPhantom(grid, np.ones(grid.shape), 0.25, geometry)
    report = validate_admissible(ph, AdmissibleClass(n00=10.0))
    failed = {c.name for c in report.failures()}
    assert "contrast_in_psi" in failed


def test_dip_below_one_reported_with_node(geometry):
    grid = cube_grid(32)
    c = np.ones(grid.shape) * 1.5
    c[3, 4, 5] = 0.99
    ph = MediumPhantom(grid, c, 0.25, geometry)
    report = validate_admissible(ph, AdmissibleClass(n00=10.0))
    bad = [c for c in report.failures() if c.name == "c_at_least_one"]
    assert bad and "(3, 4, 5)" in bad[0].detail


def test_build_phantom_deterministic():
    spec = {
        "beta": 0.5,
        "geometry": box_geometry(),
        "grid": cube_grid(36),
        "bumps": [{"center": [0.05, -0.1, 0.0], "radius": 0.18, "amplitude": 0.3}],
    }
    a = build_phantom(spec)
    b = build_phantom(spec)
    assert np.array_equal(a.c_values, b.c_values)


@settings(max_examples=20, deadline=None)
@given(
    beta=st.floats(0.05, 1.5),
    amp=st.floats(0.0, 0.6),
    radius=st.floats(0.05, 0.22),
    cx=st.floats(-0.15, 0.15),
)
def test_generated_phantoms_always_validate(beta, amp, radius, cx):
    spec = {
        "beta": beta,
        "geometry": box_geometry(),
        "grid": cube_grid(28),
        "bumps": [
            {"center": [cx, 0.0, 0.0], "radius": radius, "amplitude": amp}
        ],
    }
    ph = build_phantom(spec)
    report = validate_admissible(ph, AdmissibleClass(n00=1e4))
    assert report.passed


@settings(max_examples=25, deadline=None)
@given(
    shift=st.tuples(
        st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3)
    )
)
def test_margin_rho_translation_invariant(shift):
    s = np.asarray(shift)

    def boxes(offset):
        return Geometry.build(
            Region("box", lo=tuple(-1 + offset), hi=tuple(1 + offset)),
            Region("box", lo=tuple(-1.7 + offset), hi=tuple(1.7 + offset)),
            Region("box", lo=tuple(-3.1 + offset), hi=tuple(3.1 + offset)),
        )

    assert margin_rho(boxes(0 * s)) == pytest.approx(margin_rho(boxes(s)))


def test_wavelength_diagnostic_reported():
    ph = build_phantom(
        {
            "beta": 0.5,
            "geometry": box_geometry(),
            "grid": cube_grid(40),
            "bumps": [{"center": [0, 0, 0], "radius": 0.2, "amplitude": 0.2}],
        }
    )
    report = validate_admissible(ph, AdmissibleClass(n00=40.0), top_wavenumber=12.0)
    assert report.diagnostics["wavelengths_per_feature"] > 0
    assert report.diagnostics["nodes_per_wavelength"] > 0
