from fuzzymarket.verify import CHECKS, covered_tags, report_dict, run_checks


def test_default_suite_passes():
    results = run_checks()
    assert [r.name for r in results] == [c.name for c in CHECKS]
    failed = [r for r in results if not r.passed]
    assert not failed, failed


def test_zero_tolerance_separates_exact_from_numerical():
    results = {r.name: r for r in run_checks(tol=0.0)}
    for name in ("closeness-symmetry", "neighbour-symmetry"):
        assert results[name].passed
    for name in ("gaussian-composition", "noiseless-limit-price", "manipulator-target", "rls-vs-batch"):
        assert not results[name].passed


def test_report_lists_tags():
    results = run_checks(names=["closeness-symmetry", "manipulator-target"])
    doc = report_dict(results)
    assert doc["tags"] == covered_tags(results) == ["closeness", "manipulators"]
    assert {t for c in CHECKS for t in c.tags} >= {
        "local-convergence", "global-consensus", "external-consensus", "limit-price", "manipulators",
    }
