import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import cboe_loop
from volquant.errors import DataError
from volquant.implied import (
    OptionChainSnapshot,
    OptionQuote,
    VolIndexSeries,
    cboe_variance,
    deannualize,
    index_level,
    parse_index_csv,
    read_chain_csv,
    strike_intervals,
)

# frozen from the naive loop oracle
CHAIN_VARIANCE = 0.04884992975337258
CHAIN_INDEX = 22.10202021
# 0.325 / sqrt(250)
DAILY_32_5 = 0.02055480479109447


def example_chain(F=100.0, K0=100.0, mids=(1.0, 2.0, 1.0), R=0.0):
    q = [OptionQuote(95, "put", mids[0]), OptionQuote(100, "put", mids[1]),
         OptionQuote(105, "call", mids[2])]
    return OptionChainSnapshot(30 / 365, F, K0, q, R)


class TestCboe:
    def test_hand_example(self):
        v = cboe_variance(example_chain())
        assert v == pytest.approx(CHAIN_VARIANCE, abs=1e-12)
        assert v == pytest.approx(0.04885, abs=1e-5)
        assert index_level(v) == pytest.approx(CHAIN_INDEX, abs=1e-6)

    def test_strike_intervals(self):
        assert list(strike_intervals([95, 100, 105])) == [5, 5, 5]
        assert list(strike_intervals([90, 100, 105, 120])) == [10, 7.5, 10, 15]
        with pytest.raises(ValueError):
            strike_intervals([100])

    def test_correction_term(self):
        base = cboe_variance(example_chain())
        shifted = cboe_variance(example_chain(F=101.0))
        assert base - shifted == pytest.approx((101 / 100 - 1) ** 2 / (30 / 365), rel=1e-12)

    def test_doubling_quotes_increases_variance(self):
        assert cboe_variance(example_chain(mids=(2, 4, 2))) > cboe_variance(example_chain())

    @given(st.lists(st.floats(0.0, 50.0), min_size=3, max_size=3), st.floats(0.01, 100.0))
    def test_homogeneous_in_quotes(self, mids, c):
        a = cboe_variance(example_chain(mids=mids))
        b = cboe_variance(example_chain(mids=[c * m for m in mids]))
        assert b == pytest.approx(c * a, rel=1e-12, abs=1e-15)

    @given(st.floats(-0.05, 0.1), st.floats(98.0, 102.0))
    def test_matches_loop_oracle(self, R, F):
        K0 = 100.0 if F >= 100 else 95.0
        quotes = [OptionQuote(95, "put" if 95 <= K0 else "call", 3.0),
                  OptionQuote(100, "put" if K0 == 100 else "call", 2.5),
                  OptionQuote(105, "call", 1.0)]
        chain = OptionChainSnapshot(30 / 365, F, K0, quotes, R)
        want = cboe_loop(30 / 365, F, K0, [95, 100, 105], [3.0, 2.5, 1.0], R)
        assert cboe_variance(chain) == pytest.approx(want, rel=1e-13)

    def test_negative_variance_rejected(self):
        with pytest.raises(ValueError, match="negative"):
            cboe_variance(example_chain(F=140.0, K0=105.0, mids=(0, 0, 0)))

    def test_chain_invariants(self):
        with pytest.raises(ValueError):
            OptionChainSnapshot(0.1, 100, 100, [OptionQuote(95, "call", 1.0)])
        with pytest.raises(ValueError):
            OptionChainSnapshot(0.1, 100, 101, [])
        with pytest.raises(ValueError):
            OptionQuote(-1, "put", 1.0)
        with pytest.raises(ValueError):
            cboe_variance(OptionChainSnapshot(0.1, 100, 100, []))


class TestIndex:
    def test_index_level(self):
        assert index_level(0.04) == pytest.approx(20.0)
        assert index_level(0.0) == 0.0
        with pytest.raises(ValueError):
            index_level(-0.1)

    def test_deannualize(self):
        assert deannualize(32.5) == pytest.approx(DAILY_32_5, abs=1e-15)
        assert deannualize(0.0) == 0.0
        with pytest.raises(ValueError):
            deannualize(-1.0)

    @given(st.floats(0.0, 10.0))
    def test_composition(self, v):
        assert deannualize(index_level(v)) == pytest.approx(math.sqrt(v) / math.sqrt(250),
                                                              rel=1e-12, abs=1e-300)

    def test_parse_fred_file(self, tmp_path, caplog):
        p = tmp_path / "ovx.csv"
        p.write_text("DATE,OVXCLS\n2011-03-17,.\n2011-03-18,35.0\n2011-03-16,32.50\n"
                     "2011-03-21,\n")
        s = parse_index_csv(p, "CL")
        assert [str(d) for d in s.dates] == ["2011-03-16", "2011-03-18"]
        assert s.n_missing == 2
        assert s.vol_daily[0] == pytest.approx(DAILY_32_5, abs=1e-15)
        assert "out of order" in caplog.text
        assert np.all(np.abs(s.vol_daily * 100 * math.sqrt(250) - s.index_annual) <= 1e-12)

    @pytest.mark.parametrize("body,match", [
        ("2011-03-16,abc\n", "row 2"),
        ("2011-13-16,1\n", "row 2"),
        ("2011-03-16,1\n2011-03-16,2\n", "duplicate"),
    ])
    def test_parse_errors(self, tmp_path, body, match):
        p = tmp_path / "x.csv"
        p.write_text("DATE,GVZCLS\n" + body)
        with pytest.raises(DataError, match=match):
            parse_index_csv(p, "GC")

    def test_series_defaults_annual_from_daily(self):
        s = VolIndexSeries("GC", ["2011-03-16"], [0.02])
        assert s.index_annual[0] == pytest.approx(2.0 * math.sqrt(250))

    def test_read_chain(self, tmp_path):
        p = tmp_path / "chain.csv"
        p.write_text(f"# T={30 / 365!r}\n# F=100\n# K0=100\n# R=0\n"
                     "strike,side,mid\n95,put,1\n100,put,2\n105,call,1\n")
        assert cboe_variance(read_chain_csv(p)) == pytest.approx(CHAIN_VARIANCE, abs=1e-12)
        p.write_text("strike,side,mid\n95,put,1\n")
        with pytest.raises(DataError):
            read_chain_csv(p)
