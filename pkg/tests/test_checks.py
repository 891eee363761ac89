from boca.checks import (
    JointCheckSettings,
    conjugate_moment_check,
    fault_injection_check,
    indicator_oracle_check,
    joint_distribution_check,
    run_checks,
)


def test_oracle_check_quick():
    r = indicator_oracle_check(50, seed=3)
    assert r.passed and r.details["max_abs_error"] < 1e-8


def test_conjugate_check_small():
    r = conjugate_moment_check(n_draws=100_000, seed=1)
    assert r.passed, r.details


def test_joint_check_short_run_is_sane():
    s = JointCheckSettings(n_rounds=2000, n_forward=2000, n_batches=20, seed=2)
    r = joint_distribution_check(settings=s)
    assert r.details["finite"] and r.details["max_abs_z"] < 5


def test_joint_check_degenerate_dims():
    s = JointCheckSettings(n_rounds=1000, n_forward=1000, n_batches=20)
    r = joint_distribution_check(2, 1, 1, settings=s)
    assert r.details["finite"]


def test_fault_detected_quickly():
    s = JointCheckSettings(n_rounds=3000, n_forward=3000, n_batches=20, seed=4)
    assert fault_injection_check(settings=s).passed


def test_run_checks_levels():
    res = run_checks("quick")
    assert [r.name for r in res] == ["indicator_oracle"] and res[0].passed
