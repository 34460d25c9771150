import math

import numpy as np
import pytest

from replibound import figures
from replibound.errors import DomainError
from replibound.output import read_table, render, write_table


def by_name(tables):
    return {t.name: t for t in tables}


def test_fig2_traces():
    t = by_name(figures.fig2())
    assert set(t) == {"fig2_k1", "fig2_k2", "fig2_k4"}
    for name, table in t.items():
        assert len(table.rows) == 10**4
        assert table.rows[0]["job"] == 1
    assert t["fig2_k2"].meta["utilization"] == pytest.approx(0.9167, abs=1e-3)


def test_fig3_shape():
    (t,) = figures.fig3()
    assert len(t.rows) == 101
    first = t.rows[0]
    # at delta=0 each k is stable and replication helps
    assert first["q99_k4"] < first["q99_k2"] < first["q99_k1"]
    last = t.rows[-1]
    assert last["q99_k2"] is None and last["q99_k4"] is None
    assert last["q99_k1"] is not None


@pytest.mark.parametrize("panel", ["fig4a", "fig4b", "fig4c", "fig4d"])
def test_fig4_scenarios_stable(panel):
    for k in figures.KS:
        b, res = figures.fig4_scenario(panel, k, 20_000)
        assert b.stable and res.count > 0
    expected = {"fig4a": "ind", "fig4b": "cor", "fig4c": "mkv", "fig4d": "mkv_cor"}[panel]
    assert b.regime == expected


def test_fig6_ratio():
    (t,) = figures.fig6()
    rows = {r["K"]: r for r in t.rows}
    assert rows[1]["ratio"] == pytest.approx(1.0, rel=1e-9)
    for K in (4, 8, 16):
        assert rows[K]["ratio"] <= 0.6
    ratios = [rows[K]["ratio"] for K in (2, 4, 8, 16)]
    assert ratios == sorted(ratios, reverse=True)


def test_fig8_ratios():
    q = figures.fig8_quantile
    low = q(0.25, math.inf) / q(0.25, 0.0) - 1
    high = q(0.75, 0.8) / q(0.75, 0.0) - 1
    assert abs(low - 2.30) < 0.25
    assert abs(high - 0.37) < 0.25


def test_fig9_values():
    (t,) = figures.fig9()
    assert t.rows[0]["u_delta0.25"] == pytest.approx(0.9375, abs=1e-9)
    assert t.rows[0]["u_delta0.75"] == pytest.approx(1.3125, abs=1e-9)
    tail = [r["u_delta0.25"] for r in t.rows]
    assert tail[-1] < tail[0]


def test_build_validation():
    with pytest.raises(DomainError):
        figures.build("fig5")
    with pytest.raises(DomainError):
        figures.build("fig9", scale="huge")


def test_table_round_trip(tmp_path):
    (t,) = figures.fig9()
    path = write_table(t, tmp_path, {"seed": 1})
    meta, rows = read_table(path)
    assert meta["seed"] == "1" and meta["lambda"] == "0.75"
    assert len(rows) == len(t.rows)
    assert float(rows[3]["offset"]) == pytest.approx(t.rows[3]["offset"])
    assert render(t, {"seed": 1}).startswith("# replibound ")
    assert not list(tmp_path.glob("*.tmp"))


def test_none_cells_render_empty():
    (t,) = figures.fig3()
    text = render(t)
    assert text.splitlines()[-1].endswith(",,") or ",," in text
    assert not np.isnan(t.rows[0]["q99_k1"])
