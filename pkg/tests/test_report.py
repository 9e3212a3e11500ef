import numpy as np
import pytest

from cavvex.report import Check, ComparisonReport, RunReport, VerificationReport, worst


def test_check_passes_at_the_tolerance() -> None:
    assert Check("terminal", 1e-9, 1e-9).passed
    assert not Check("terminal", 2e-9, 1e-9).passed


def test_report_lists_failures_by_name() -> None:
    report = VerificationReport(
        subject="mz",
        checks=(Check("cav_equation", 0.0, 1e-6), Check("vex_equation", 0.25, 1e-6)),
    )

    assert not report.passed
    assert [c.name for c in report.failures()] == ["vex_equation"]
    assert report.check("cav_equation").passed
    with pytest.raises(KeyError):
        report.check("k_conjugate")


def test_witnesses_are_converted_to_plain_values() -> None:
    check = Check("k_concavity", 0.5, 1e-8, {"belief": np.array([[0.5], [0.5]]), "t": np.float64(0.25)})

    payload = check.to_dict()

    assert payload == {
        "name": "k_concavity",
        "residual": 0.5,
        "tolerance": 1e-8,
        "passed": False,
        "witness": {"belief": [[0.5], [0.5]], "t": 0.25},
    }


def test_comparison_report_serializes_status() -> None:
    outcome = ComparisonReport(
        status="conclusion-failure",
        hypotheses=(Check("terminal_ordering", 0.0, 0.0),),
        conclusion=Check("ordering", 0.1, 1e-12),
    )

    assert not outcome.passed
    assert outcome.to_dict()["status"] == "conclusion-failure"
    assert outcome.to_dict()["conclusion"]["passed"] is False


def test_run_report_rounds_timings() -> None:
    report = RunReport(command="mz", inputs_digest="abc", config={"grid_m": 4})
    report.timings["mz"] = 0.123456789

    assert report.to_dict()["timings"] == {"mz": 0.123457}


def test_worst_ignores_negative_residuals() -> None:
    assert worst(np.array([-1.0, -0.5])) == (0.0, 1)
    assert worst(np.array([[0.1, 0.3], [0.2, 0.0]])) == (0.3, 1)
    assert worst(np.zeros(0)) == (0.0, -1)
