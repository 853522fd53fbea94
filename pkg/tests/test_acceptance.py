"""Acceptance criteria 1-11, one test each, run through the harness pipelines.

Every test records a PASS/FAIL line; the lines are printed at the end of the
pytest session and when this file is run as a script.
"""

import math
import time
from pathlib import Path

import pytest

from qloc import harness

from test_weightfn import a1_oracle

RESULTS: dict = {}

PIPELINE_OF = {1: "propagator", 2: "lr", 3: "difference", 4: "localization", 5: "transform", 6: "weights",
               7: "liouvillean", 8: "flow", 9: "hastings", 10: "appendix"}

TITLES = {1: "propagator integrity", 2: "Lieb-Robinson audit", 3: "continuity bounds", 4: "localizer suite",
          5: "transform suite", 6: "weight suite", 7: "spectral-flow identities", 8: "projector transport",
          9: "Hastings interaction", 10: "appendix audits", 11: "determinism"}

_CACHE: dict = {}


def run_timed(pipeline, parallelism=1):
    key = (pipeline, parallelism)
    if key not in _CACHE:
        start = time.perf_counter()
        report = harness.run(harness.default_config(pipeline), parallelism=parallelism)
        _CACHE[key] = (report, time.perf_counter() - start)
    return _CACHE[key]


def named(report, name):
    return [r for r in report.records if r.name == name]


def check(number, fn):
    try:
        fn()
    except AssertionError as exc:
        RESULTS[number] = f"FAIL criterion {number:>2} ({TITLES[number]}): {exc}"
        raise
    RESULTS[number] = f"PASS criterion {number:>2} ({TITLES[number]})"


def summary_lines() -> list:
    return [RESULTS.get(n, f"FAIL criterion {n:>2} ({TITLES[n]}): not run") for n in sorted(TITLES)]


def test_criterion_01_propagator_integrity():
    def body():
        report, wall = run_timed("propagator")
        cfg = report.config
        assert cfg["lattice.lengths"] == [6] and cfg["model.h"] == "sine(1,0.5)"
        assert (cfg["grid.t_start"], cfg["grid.t_stop"], cfg["grid.t_nodes"]) == (0.0, 1.0, 21)
        assert cfg["audit.methods"] == ["rk4", "dyson"] and cfg["audit.dyson_order"] == 12
        for r in named(report, "unitarity"):
            assert r.lhs <= 1e-8, r
        for r in named(report, "cocycle"):
            assert r.lhs <= 1e-7, r
        agreements = named(report, "agreement") + named(report, "constant_agreement")
        assert len(agreements) == 3
        for r in agreements:
            assert r.lhs <= 1e-6, r
        assert report.passed
        assert wall < 10.0, f"runtime {wall:.1f}s"

    check(1, body)


def test_criterion_02_lieb_robinson():
    def body():
        report, wall = run_timed("lr")
        cfg = report.config
        assert cfg["lattice.lengths"] == [10]
        assert (cfg["decay.power"], cfg["decay.weight"], cfg["decay.rate"], cfg["decay.theta"]) == (2.0, "power", 1.0, 1.0)
        assert (cfg["audit.observable_a"], cfg["audit.observable_b"]) == ("x@0", "x@-1")
        lr = named(report, "lieb_robinson")
        assert len(lr) == 41
        for r in lr:
            assert r.lhs <= min(2.0, r.detail["bound"]) + 1e-6, r
        (early,), (late,) = named(report, "light_cone_early"), named(report, "light_cone_late")
        assert early.detail["t"] == pytest.approx(0.1) and late.detail["t"] == 2.0
        assert early.lhs < 1e-3, early
        assert late.rhs > 1e-2, late
        assert report.passed
        assert wall < 60.0, f"runtime {wall:.1f}s"

    check(2, body)


def test_criterion_03_continuity_bounds():
    def body():
        report, _ = run_timed("difference")
        cfg = report.config
        assert cfg["lattice.lengths"] == [10] and cfg["audit.subvolume"] == 8
        assert cfg["audit.perturbation"] == 0.01 and cfg["audit.time"] == 0.5
        for name in ("interaction", "volume"):
            (r,) = named(report, name)
            assert r.lhs <= r.rhs + r.tol, r
            (s,) = named(report, f"{name}_slack")
            assert s.rhs >= 1.0, s
        assert report.passed

    check(3, body)


def test_criterion_04_localizer_suite():
    def body():
        report, _ = run_timed("localization")
        assert max(report.config["audit.sizes"]) <= 6
        for name in ("fixed_point", "restriction", "intersection", "tower", "adjoint", "telescoping"):
            recs = named(report, name)
            assert recs, name
            for r in recs:
                assert r.lhs <= 1e-12, r
        eps = named(report, "engineered_epsilon")
        assert eps
        for r in eps:
            assert r.lhs <= r.rhs + 1e-10, r
        assert report.passed

    check(4, body)


def test_criterion_05_transform_suite():
    def body():
        report, _ = run_timed("transform")
        assert report.config["lattice.lengths"] == [8]
        recs = named(report, "reconstruction")
        assert recs
        for r in recs:
            assert r.lhs <= 1e-10, r
        (rho,) = named(report, "rho_independence")
        assert rho.lhs <= 1e-10, rho
        decay_recs = named(report, "transform_decay")
        assert len(decay_recs) == 64
        for r in decay_recs:
            assert r.passed, r
        diff = named(report, "diff_dynamics")
        assert diff
        for r in diff:
            assert r.lhs <= r.rhs + r.tol, r
        assert report.passed

    check(5, body)


def test_criterion_06_weight_suite():
    def body():
        report, wall = run_timed("weights")
        for r in named(report, "normalization"):
            assert r.lhs <= 1e-6, r
        (ref,) = named(report, "a1_reference")
        a1 = ref.detail["a1"]
        assert 1 / 7 < a1 < 1 / 2
        assert abs(a1 - 0.1608) <= 1e-3
        assert a1 == pytest.approx(a1_oracle(), abs=1e-8)
        (w0,) = named(report, "W_at_zero")
        assert w0.detail["W0"] == 0.5
        (band,) = named(report, "w_hat_outside_band")
        assert band.lhs <= 1e-4, band
        for name in ("w_tail_log", "W_tail_log"):
            tails = named(report, name)
            assert len(tails) == 5
            for r in tails:
                assert r.detail["x"] >= math.e**9 and r.passed, r
        assert report.passed
        assert wall < 60.0, f"runtime {wall:.1f}s"

    check(6, body)


def test_criterion_07_spectral_flow_identities():
    def body():
        report, _ = run_timed("liouvillean")
        assert report.config["lattice.lengths"] == [5]
        for name in ("F_commutes_with_P", "inverse_liouvillean"):
            (r,) = named(report, name)
            assert r.lhs <= 1e-6, r
            (ref,) = named(report, f"{name}_refinement")
            base, refined = ref.detail["base"], ref.detail["refined"]
            assert 2.0 * refined <= base, ref
        assert report.passed

    check(7, body)


def test_criterion_08_projector_transport():
    def body():
        report, wall = run_timed("flow")
        cfg = report.config
        assert cfg["lattice.lengths"] == [6] and cfg["model.h"] == "affine(2,2)"
        rows = report.tables[0].rows
        assert report.cutoffs["gamma"] == pytest.approx(0.5 * min(r["gap"] for r in rows), rel=1e-12)
        transport = named(report, "transport")
        assert len(transport) == 11
        for r in transport:
            assert r.lhs <= 0.05, r
        (ref,) = named(report, "transport_refinement")
        assert 2.0 * ref.detail["refined"] <= ref.detail["base"], ref
        (control,) = named(report, "constant_control")
        assert control.lhs <= 1e-9, control
        assert report.passed
        assert wall < 300.0, f"runtime {wall:.1f}s"

    check(8, body)


def test_criterion_09_hastings_interaction():
    def body():
        report, _ = run_timed("hastings")
        assert report.config["lattice.lengths"] == [8]
        recon = named(report, "reconstruction")
        assert sorted(r.detail["s"] for r in recon) == [0.0, 0.5, 1.0]
        for r in recon:
            assert r.lhs <= 1e-10, r
        mono = named(report, "monotone_diameter")
        assert mono
        for r in mono:
            assert r.detail["previous"] >= 2 and r.lhs <= r.rhs + r.tol, r
        assert report.passed

    check(9, body)


def test_criterion_10_appendix_audits():
    def body():
        report, _ = run_timed("appendix")
        assert report.config["audit.box"] == [5, 5]
        (cf,) = named(report, "chain3_conv_constant")
        assert cf.lhs <= 1e-12, cf
        for name in ("step_norm", "step_conv", "dilate_norm", "dilate_conv", "shift_norm", "shift_conv",
                     "distance_near", "distance_far", "diameter_small", "diameter_large", "moment",
                     "weighted_sum"):
            recs = named(report, name)
            assert recs, name
            for r in recs:
                assert r.passed, r
        assert report.passed

    check(10, body)


def _csv_bytes(report, where: Path) -> dict:
    report.write(where)
    return {p.name: p.read_bytes() for p in sorted(where.glob("*.csv"))}


def test_criterion_11_determinism(tmp_path):
    def body():
        for number, pipeline in PIPELINE_OF.items():
            first, _ = run_timed(pipeline)
            again = harness.run(harness.default_config(pipeline))
            wide = harness.run(harness.default_config(pipeline), parallelism=8)
            a = _csv_bytes(first, tmp_path / pipeline / "first")
            b = _csv_bytes(again, tmp_path / pipeline / "again")
            c = _csv_bytes(wide, tmp_path / pipeline / "par8")
            assert a and a == b, f"criterion {number}: rerun changed CSV output"
            assert a == c, f"criterion {number}: parallelism 8 changed CSV output"

    check(11, body)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
