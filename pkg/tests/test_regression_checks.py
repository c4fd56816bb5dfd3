import pytest

from app.constants.app_constants import CheckSeverity
from app.services import regression_checks
from app.services.regression_checks import CheckSuite


def test_suite_counts_only_hard_failures():
    suite = CheckSuite()
    suite.add("hard ok", CheckSeverity.HARD, True)
    suite.add("hard bad", CheckSeverity.HARD, False)
    suite.near("soft bad", CheckSeverity.SOFT, 1.0, 2.0, 0.5)
    report = suite.report()
    assert report.hard_total == 2
    assert report.hard_failed == 1
    assert report.soft_mismatches == 1
    assert not report.ok


def test_guarded_check_turns_exceptions_into_failures():
    suite = CheckSuite()

    def boom():
        raise RuntimeError("no data")

    suite.guarded("exploding check", CheckSeverity.HARD, boom)
    result = suite.results[0]
    assert not result.passed
    assert "RuntimeError" in result.detail


def test_static_checks_pass(cfg):
    suite = CheckSuite()
    regression_checks.check_feeder_rebuild(suite, cfg)
    regression_checks.check_gain_norms(suite, cfg)
    regression_checks.check_connection_design(suite, cfg, quick=True)
    regression_checks.check_integrator(suite)
    failed = [r.name for r in suite.results if not r.passed]
    assert failed == []


def test_open_loop_hard_checks_pass(cfg):
    suite = CheckSuite()
    regression_checks.check_open_loop(suite, cfg)
    hard_failed = [r.name for r in suite.results if r.severity is CheckSeverity.HARD and not r.passed]
    assert hard_failed == []


def test_secondary_refs_match_printed_values(cfg):
    suite = CheckSuite()
    regression_checks.check_secondary_refs(suite, cfg)
    assert len(suite.results) >= 5
    assert all(r.severity is CheckSeverity.HARD and r.passed for r in suite.results)


def test_soft_spectra_carry_fallback_note(cfg):
    suite = CheckSuite()
    regression_checks.check_open_loop(suite, cfg)
    soft = [r for r in suite.results if r.severity is CheckSeverity.SOFT]
    assert [r.name for r in soft] == ["ch5_a1 open-loop max real part", "ch5_a2 open-loop max real part"]
    assert all(r.detail == regression_checks.PRINTED_FALLBACK for r in soft)


@pytest.mark.slow
def test_quick_suite_has_no_hard_failures(cfg):
    report = regression_checks.run_checks(cfg, quick=True)
    failed = [c.name for c in report.checks if c.severity is CheckSeverity.HARD and not c.passed]
    assert failed == []
    assert report.ok
    names = [c.name for c in report.checks]
    assert any(n.startswith("ch2-load x4ref") for n in names)
    assert not any("AOB" in n or "ANC" in n for n in names)


@pytest.mark.slow
def test_aob_tracking_hard_checks_pass(cfg):
    suite = CheckSuite()
    regression_checks.check_aob_tracking(suite, cfg)
    failed = [r.name for r in suite.results if r.severity is CheckSeverity.HARD and not r.passed]
    assert len(suite.results) == 6
    assert failed == []


@pytest.mark.slow
def test_lyapunov_audit_check_passes(cfg):
    suite = CheckSuite()
    regression_checks.check_lyapunov_audit(suite, cfg)
    assert suite.results[0].severity is CheckSeverity.HARD
    assert suite.results[0].passed
