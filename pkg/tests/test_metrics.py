import pytest
from hypothesis import given, strategies as st

from vimasim.config import EnergyConfig, SimConfig
from vimasim.metrics import (CSV_HEADER, ResultRow, SimStats, active_components, detail_dump,
                             emit_csv, read_csv, row_from_stats, speedup, total_energy)

import oracles

E = EnergyConfig()
MS = 10**9  # one millisecond in ps


def test_llc_line_access_energy():
    e = total_energy(SimStats(counters={"llc_accesses": 1}), E, set())
    assert e.dynamic["llc"] == pytest.approx(3010.0)


def test_vima_static_over_one_ms():
    e = total_energy(SimStats(backend="vima", elapsed_ps=MS), E, {"vima"})
    assert e.static["vima"] == pytest.approx(oracles.static_pj(3.2, MS) + oracles.static_pj(0.134, MS))
    assert e.static["vima"] == pytest.approx(3.334e9)  # 3.2 mJ + 0.134 mJ


def test_zero_length_run_costs_nothing():
    e = total_energy(SimStats(backend="avx"), E)
    assert e.total_pj == 0


def test_vima_runs_keep_host_cache_static_power():
    assert {"l1", "l2", "llc", "vima"} <= active_components("vima", E)
    off = active_components("vima", EnergyConfig(idle_uncore_off=True))
    assert not off & {"l1", "l2", "llc"}
    assert "vima" not in active_components("avx", E)


def test_private_static_power_scales_with_cores():
    one = total_energy(SimStats(backend="avx", elapsed_ps=MS, cores=1), E)
    many = total_energy(SimStats(backend="avx", elapsed_ps=MS, cores=8), E)
    assert many.static["core"] == 8 * one.static["core"]
    assert many.static["llc"] == one.static["llc"]


counts = st.integers(0, 10**7)


@given(counts, counts, counts, counts, counts, counts, counts, counts, counts)
def test_dynamic_energy_closes(l1, l2, llc, vc, vr, vw, hr, hw, t):
    c = {"l1_accesses": l1, "l2_accesses": l2, "llc_accesses": llc, "vima_cache_line_accesses": vc,
         "dram_vima_reads": vr, "dram_vima_writes": vw, "dram_host_reads": hr, "dram_host_writes": hw}
    e = total_energy(SimStats(backend="vima", elapsed_ps=t, counters=c), E)
    by_hand = (l1 * 194 + l2 * 340 + llc * 3010 + vc * 194
               + (vr + vw) * 512 * 4.8 + (hr + hw) * 512 * 10.8)
    assert e.dynamic_pj == pytest.approx(by_hand, rel=1e-12)
    assert e.dynamic["dram_vima"] == pytest.approx((vr + vw) * 64 * 8 * 4.8, rel=1e-12)


@given(st.integers(1, 10**15))
def test_speedup_of_self_is_one(t):
    s = SimStats(elapsed_ps=t)
    assert speedup(s, s) == 1.0


def test_speedup_ratio():
    assert speedup(SimStats(elapsed_ps=2 * MS), SimStats(elapsed_ps=MS)) == 2.0


def test_cycles_round_up():
    assert SimStats(elapsed_ps=1001, cycle_ps=500).cycles == 3


def test_empty_csv_is_header_only(tmp_path):
    p = tmp_path / "r.csv"
    emit_csv([], p)
    assert p.read_text() == ",".join(CSV_HEADER) + "\n"


def test_one_run_is_two_lines(tmp_path):
    p = tmp_path / "r.csv"
    emit_csv([ResultRow("vecsum", "vima", 64.0, 1, 10, 5000, 1.5)], p)
    assert len(p.read_text().splitlines()) == 2


def test_append_keeps_single_header(tmp_path):
    p = tmp_path / "r.csv"
    row = ResultRow("vecsum", "vima", 64.0, 1, 10, 5000, 1.5)
    emit_csv([row], p, append=True)
    emit_csv([row], p, append=True)
    assert p.read_text().count("kernel,") == 1


@given(st.floats(0, 1e6, allow_nan=False).map(lambda x: round(x, 3)),
       st.integers(1, 32), st.integers(0, 10**15),
       st.floats(0, 1e15, allow_nan=False).map(lambda x: round(x, 3)),
       st.floats(0, 1e3, allow_nan=False).map(lambda x: round(x, 6)))
def test_csv_round_trip(tmp_path_factory, size, threads, ps, energy, ratio):
    p = tmp_path_factory.mktemp("csv") / "r.csv"
    row = ResultRow("stencil", "avx", size, threads, ps // 500, ps, energy, ratio, ratio)
    emit_csv([row], p)
    back = read_csv(p)[0]
    assert back == row


def test_row_from_stats_normalises_to_baseline():
    base = SimStats(kernel="k", backend="avx", elapsed_ps=4 * MS)
    cand = SimStats(kernel="k", backend="vima", elapsed_ps=MS)
    eb = total_energy(base, E)
    ec = total_energy(cand, E)
    row = row_from_stats(cand, ec, base, eb)
    assert row.speedup == 4.0
    assert row.energy_ratio == pytest.approx(ec.total_pj / eb.total_pj)


def test_detail_dump_lists_counters_and_energy():
    s = SimStats(kernel="vecsum", backend="vima", counters={"vima_hits": 3})
    text = detail_dump(s, total_energy(s, SimConfig().energy))
    assert "counter.vima_hits = 3" in text
    assert "energy.total_pj" in text
