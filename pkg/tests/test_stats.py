import io
import math

import numpy as np
import pytest

from anchorlab.stats_ingest import (
    DatasetStats,
    EmptyDatasetError,
    ingest,
    recommend,
)

HEADER = "image_id,cx,cy,width,height\n"


def _stats(rows):
    text = HEADER + "".join(rows)
    return ingest(io.StringIO(text))


def test_ingest_basic():
    stats, errors = _stats(
        [
            "a,100,100,48,24\n",
            "a,30,40,24,70\n",
            "b,150,80,70,24.5\n",
            "b,50,60,33,33\n",
        ]
    )
    assert errors == []
    assert stats.count == 4
    assert stats.rejected == 0
    # ratios are orientation-free: max side over min side
    assert stats.ar_percentiles["p100"] == pytest.approx(70 / 24)
    assert stats.size_range[0] == pytest.approx(33.0)
    assert stats.size_range[1] == pytest.approx(math.sqrt(70 * 24.5))


def test_ingest_skips_and_reports_bad_rows():
    stats, errors = _stats(
        [
            "a,1,1,10,10\n",
            "a,1,1,oops,10\n",
            "a,1,1,-3,10\n",
            "a,1,1,inf,10\n",
            "a,,1,10,10\n",
        ]
    )
    assert stats.count == 1
    assert stats.rejected == 4
    assert [e.line for e in errors] == [3, 4, 5, 6]


def test_ingest_header_and_empty_errors():
    with pytest.raises(ValueError, match="missing columns"):
        ingest(io.StringIO("cx,cy,width,height\n1,2,3,4\n"))
    with pytest.raises(ValueError, match="empty"):
        ingest(io.StringIO(""))
    with pytest.raises(EmptyDatasetError):
        ingest(io.StringIO(HEADER))
    with pytest.raises(EmptyDatasetError):
        ingest(io.StringIO(HEADER + "a,1,1,bad,1\n"))


def test_percentiles_are_exact_order_statistics():
    # 100 distinct ratios: percentile p must be an element, never a blend
    rows = [f"i,0,0,{10 * (i + 1)},10\n" for i in range(100)]
    stats, _ = _stats(rows)
    assert stats.ar_percentiles["p50"] == 50.0
    assert stats.ar_percentiles["p90"] == 90.0
    assert stats.ar_percentiles["p99"] == 99.0
    assert stats.ar_percentiles["p100"] == 100.0
    assert stats.mar_obj == 99.0


def test_mar_objective_rounds_up_to_tenth():
    stats, _ = _stats(["a,0,0,29.21,10\n"])
    assert stats.ar_percentiles["p99"] == pytest.approx(2.921)
    assert stats.mar_obj == pytest.approx(3.0)
    stats2, _ = _stats(["a,0,0,30,10\n"])
    assert stats2.mar_obj == pytest.approx(3.0)  # exact tenth stays put
    stats3, _ = _stats(["a,0,0,30.01,10\n"])
    assert stats3.mar_obj == pytest.approx(3.1)


def test_stats_round_trip():
    stats, _ = _stats(["a,0,0,60,10\n", "b,5,5,25,25\n"])
    clone = DatasetStats.from_dict(stats.to_dict())
    assert clone == stats
    with pytest.raises(ValueError, match="malformed"):
        DatasetStats.from_dict({"count": 1})


def _made_stats(mar, s_min, s_max):
    return DatasetStats(
        count=10,
        rejected=0,
        ar_percentiles={"p99": mar},
        size_percentiles={},
        mar_obj=mar,
        size_range=(s_min, s_max),
    )


def test_recommend_reproduces_reference_sizes():
    out = recommend(_made_stats(6.0, 24.0, 70.0), 0.5)
    assert out.max_anchor_ar == 3.0
    assert out.suggested_sizes == [16.0, 32.0, 64.0, 128.0, 256.0]
    assert out.middle_aspect_ratios == [1.0, 1.5, 3.0, 1 / 1.5, 1 / 3.0]
    assert out.warnings == []


def test_recommend_warns_on_extreme_ranges():
    out = recommend(_made_stats(6.0, 8.0, 300.0), 0.5)
    assert out.suggested_sizes[0] == 4.0
    assert out.suggested_sizes[-1] == 2048.0
    assert len(out.warnings) == 2
    assert "below" in out.warnings[0]
    assert "exceeds the patch" in out.warnings[1]


def test_recommend_band_actually_covers_heights():
    # whatever the inputs, the suggested ladder's served bands must span
    # [s_min/sqrt(mar), s_max]
    rng = np.random.default_rng(11)
    for _ in range(50):
        s_min = float(rng.uniform(4, 100))
        s_max = float(s_min * rng.uniform(1, 30))
        mar = float(rng.uniform(1.0, 9.0))
        out = recommend(_made_stats(mar, s_min, s_max), 0.5)
        t = out.max_anchor_ar
        root = math.sqrt(t)
        h_lo = s_min / math.sqrt(mar)
        h_hi = s_max
        # full-coverage sub-ladder (all but the two extension octaves)
        inner = out.suggested_sizes[1:-1]
        assert inner[0] / (2 * root) <= h_lo * (1 + 1e-9)
        assert inner[-1] / root >= h_hi * (1 - 1e-12)
        # consecutive octaves: served bands tile without holes
        for a, b in zip(inner, inner[1:]):
            assert b == pytest.approx(2 * a)
