import pytest

from convergence_metrics import DECAY_COLUMNS, column_summary, decay_summary, fitted_rate, landau_trend
from renorm_engine import RenormRecord, RenormReport
from sojourn_search import SojournPair


def synthetic_report(c0_rate=0.5, landau_rate=0.1, count=4) -> RenormReport:
    records = []
    for k in range(count):
        records.append(RenormRecord(
            k=k,
            pair=SojournPair(10 * (k + 1), 8 * (k + 1), 1.0, 0.1),
            sup_c0_error=0.1 * c0_rate ** k,
            sup_c1_error=0.2 * c0_rate ** k,
            cross_check_error=1e-30,
            prod_target_gap=0.05 * c0_rate ** k,
            lp_s2m_s2n=0.02 * landau_rate ** k,
            hot1=0.0,
            hot2=0.0,
            hot3=0.0,
            digits=40,
        ))
    return RenormReport(records, [], 1.185, -9.5, {"mode": "extended", "dps": 40})


def test_fitted_rate_recovers_geometric_decay():
    assert fitted_rate([0, 1, 2, 3], [1.0, 0.5, 0.25, 0.125]) == pytest.approx(0.5, rel=1e-12)
    assert fitted_rate([0, 1], [0.0, 0.0]) is None
    assert fitted_rate([0, 1, 2], [0.0, 2.0, 0.0]) is None


def test_column_summary():
    summary = column_summary([0, 1, 2], [0.4, 0.2, 0.3])
    assert summary["first"] == 0.4 and summary["last"] == 0.3
    assert summary["ratio"] == pytest.approx(0.75)
    assert not summary["monotone"]
    assert column_summary([0, 1], [0.0, 0.0])["ratio"] is None


def test_decay_summary_on_synthetic_report():
    decay = decay_summary(synthetic_report())
    assert set(decay) == set(DECAY_COLUMNS)
    assert decay["sup_c0_error"]["fitted_rate"] == pytest.approx(0.5, rel=1e-9)
    assert decay["lp_s2m_s2n"]["fitted_rate"] == pytest.approx(0.1, rel=1e-9)
    assert decay["sup_c1_error"]["monotone"]
    assert decay["hot1"]["fitted_rate"] is None
    assert decay_summary(RenormReport([], [0], 1.185, -9.5, {})) == {}


def test_landau_trend():
    assert landau_trend(synthetic_report()) == "decreasing"
    assert landau_trend(synthetic_report(landau_rate=3.0)) == "growing"
    assert landau_trend(synthetic_report(landau_rate=1.0)) == "flat"
    assert landau_trend(synthetic_report(count=1)) == "flat"


def main():
    tests = [
        test_fitted_rate_recovers_geometric_decay,
        test_column_summary,
        test_decay_summary_on_synthetic_report,
        test_landau_trend,
    ]
    print("=" * 60)
    print("CONVERGENCE METRICS TESTS")
    print("=" * 60)
    failed = 0
    for test in tests:
        try:
            test()
            print(f"✅ {test.__name__}")
        except Exception as e:
            failed += 1
            print(f"❌ {test.__name__}: {e}")
    print(f"\n{len(tests) - failed}/{len(tests)} passed")


if __name__ == "__main__":
    main()
