import pytest
from hypothesis import given, settings, strategies as st

from vimasim.config import (ConfigError, SimConfig, ValidationError, apply_overrides, parse_config,
                            render_config, validate)


def test_empty_document_gives_defaults():
    assert parse_config("") == SimConfig()


def test_defaults_match_reference_table():
    c = SimConfig()
    t, tm, e = c.topology, c.timing, c.energy
    assert (t.vaults, t.banks_per_vault, t.row_buffer_bytes, t.line_bytes) == (32, 8, 256, 64)
    assert (t.vector_bytes, t.vima_cache_bytes, t.links, t.link_burst_bytes) == (8192, 65536, 4, 8)
    assert (tm.dram_cas, tm.dram_rp, tm.dram_rcd, tm.dram_ras, tm.dram_cwd) == (9, 9, 9, 24, 7)
    assert tm.fu_lat_int == (8, 12, 28) and tm.fu_lat_fp == (13, 13, 28)
    assert (tm.vima_tag_cycles, tm.vima_transfer_beats, tm.vima_cache_ports, tm.lanes) == (1, 8, 2, 256)
    assert (tm.l1_lat, tm.l2_lat, tm.llc_lat, tm.instruction_dispatch_lat) == (2, 10, 22, 1)
    assert (tm.rob_entries, tm.mob_read, tm.mob_write, tm.issue_width) == (168, 64, 36, 6)
    assert (e.l1_line_pj, e.l2_line_pj, e.llc_line_pj, e.vima_cache_line_pj) == (194, 340, 3010, 194)
    assert (e.dram_x86_pj_per_bit, e.dram_vima_pj_per_bit) == (10.8, 4.8)
    assert (e.core_w, e.l1_w, e.l2_w, e.llc_w, e.dram_w) == (6, 0.03, 0.13, 7, 4)
    assert (e.vima_logic_w, e.vima_cache_w) == (3.2, 0.134)
    w = c.workload
    assert (w.knn_k, w.knn_train, w.knn_test, w.mlp_instances) == (9, 32768, 256, 32768)
    assert c.vima_cache_lines == 8


def test_vector_bytes_override():
    c = parse_config("topology.vector_bytes = 256\n")
    assert c.topology.vector_bytes == 256
    assert c.timing == SimConfig().timing


def test_vector_bytes_not_line_multiple_is_rejected():
    with pytest.raises(ValidationError) as exc:
        parse_config("topology.vector_bytes = 100")
    assert any("line_bytes" in e for e in exc.value.errors)


def test_defaults_validate_cleanly():
    assert validate(SimConfig()) == []


def test_non_power_of_two_vaults():
    errs = validate(apply_overrides(SimConfig(), ["topology.vaults=33"]))
    assert any("power of two" in e for e in errs)


def test_cache_not_vector_multiple():
    errs = validate(apply_overrides(SimConfig(), ["topology.vima_cache_bytes=4096"]))
    assert any("multiple" in e for e in errs)


def test_all_violations_reported():
    cfg = apply_overrides(SimConfig(), ["topology.vaults=33", "topology.vima_cache_bytes=4096",
                                        "workload.threads=3"])
    assert len(validate(cfg)) >= 3


def test_unknown_key_reports_line_number():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("# comment\nnosuch.key = 1\n")


def test_malformed_line():
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("topology.vaults 32")


def test_comments_and_blank_lines_ignored():
    c = parse_config("\n# x\ntopology.links = 4  # trailing\n")
    assert c.topology.links == 4


def test_vima_backend_needs_one_thread():
    cfg = apply_overrides(SimConfig(), ["workload.backend=vima", "workload.threads=4"])
    assert any("threads" in e for e in validate(cfg))


def test_render_round_trip_defaults():
    c = SimConfig()
    assert parse_config(render_config(c)) == c


@settings(max_examples=40)
@given(vec=st.sampled_from([256, 512, 1024, 2048, 4096, 8192]),
       lines=st.integers(min_value=1, max_value=16),
       threads=st.sampled_from([1, 2, 4, 8, 16, 32]),
       backend=st.sampled_from(["scalar", "avx"]),
       pj=st.floats(min_value=0, max_value=1e4, allow_nan=False),
       seed=st.integers(min_value=0, max_value=2**31))
def test_render_parse_round_trip(vec, lines, threads, backend, pj, seed):
    c = apply_overrides(SimConfig(), [f"topology.vector_bytes={vec}",
                                      f"topology.vima_cache_bytes={vec * lines}",
                                      f"workload.threads={threads}", f"workload.backend={backend}",
                                      f"workload.seed={seed}"])
    c = apply_overrides(c, [f"energy.l1_line_pj={pj!r}"])
    assert validate(c) == []
    assert parse_config(render_config(c)) == c
