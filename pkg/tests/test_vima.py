import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vimasim.config import SimConfig, apply_overrides
from vimasim.dram import Dram, SparseMemory
from vimasim.isa import ElementType, Opcode, VimaProgram
from vimasim.metrics import SimStats, total_energy
from vimasim.vima import VimaCache, VimaEngine, covering_lines

import oracles

VB = 8192
A, B, C = 0x100000, 0x200000, 0x300000


def engine(*overrides, functional=True):
    cfg = apply_overrides(SimConfig(), list(overrides))
    dram = Dram(cfg)
    return VimaEngine(cfg, dram, SparseMemory(cfg.topology.capacity_bytes), functional=functional), dram


def vima_cycles(res):
    return (res.phases["signal"] - res.phases["start"]) // 1000


# -- covering lines and the cache ------------------------------------------------

def test_aligned_base_has_one_tag():
    assert covering_lines(3 * VB, VB) == [3 * VB]


@pytest.mark.parametrize("off", [4, 8188])
def test_unaligned_base_has_two_tags(off):
    assert covering_lines(5 * VB + off, VB) == [5 * VB, 6 * VB]


def test_ninth_tag_evicts_first_inserted():
    c = VimaCache(8, VB)
    for i in range(8):
        assert not c.access(i * VB)
    assert not c.access(8 * VB)
    assert c.find(0) < 0
    assert all(c.find(i * VB) >= 0 for i in range(1, 9))


def test_hit_refreshes_recency():
    c = VimaCache(2, VB)
    c.access(0)
    c.access(VB)
    c.access(0)
    c.access(2 * VB)
    assert c.find(0) >= 0 and c.find(VB) < 0


@settings(max_examples=60)
@given(st.lists(st.integers(0, 15), max_size=300), st.integers(1, 10))
def test_cache_matches_lru_oracle(trace, lines):
    c = VimaCache(lines, VB)
    got = [c.access(t * VB) for t in trace]
    assert got == oracles.lru_hits([t * VB for t in trace], lines)


# -- execution phases ---------------------------------------------------------------

def test_all_hit_integer_add_takes_17_cycles():
    eng, _ = engine()
    add = VimaProgram().vima_add_i32(C, A, B)
    first = eng.execute(add, 0)
    res = eng.execute(add, first.phases["drained"])
    assert eng.stats.misses == 2 and eng.stats.hits == 2
    assert res.phases["operands"] == res.phases["tags"]
    assert vima_cycles(res) == 1 + 8 + 8


def test_hit_operand_path_is_tag_plus_transfer():
    eng, _ = engine()
    add = VimaProgram().vima_add_i32(C, A, B)
    eng.execute(add, 0)
    res = eng.execute(add, 10**6)
    assert (res.phases["transfer"] - res.phases["start"]) // 1000 == 9


def test_fp_divide_fu_phase():
    eng, _ = engine()
    div = VimaProgram().vima_div_f64(C, A, B)
    eng.execute(div, 0)
    res = eng.execute(div, 10**6)
    assert (res.phases["signal"] - res.phases["transfer"]) // 1000 == 28


def test_miss_fetches_128_lines_per_vector():
    eng, dram = engine()
    eng.execute(VimaProgram().vima_add_i32(C, A, B), 0)
    assert dram.stats["dram_vima_reads"] == 256
    assert eng.stats.fetched_vectors == 2


def test_unaligned_cached_source_needs_no_dram():
    eng, dram = engine()
    p = VimaProgram()
    eng.execute(p.vima_add_f64(C, A, A + VB), 0)
    before = dram.stats["dram_vima_reads"]
    eng.execute(p.vima_mul_scalar_f64(C + VB, A + 8, 2.0), 10**6)
    assert dram.stats["dram_vima_reads"] == before


def test_dirty_eviction_writes_whole_vector():
    eng, dram = engine("topology.vima_cache_bytes=16384")
    p = VimaProgram()
    eng.execute(p.vima_mov_imm_i32(C, 1), 0)           # C dirty
    eng.execute(p.vima_add_i32(C + VB, A, B), 10**6)   # evicts C
    assert dram.stats["dram_vima_writes"] == 128
    assert eng.stats.dirty_evictions == 1


def test_clean_victim_costs_no_writes():
    eng, dram = engine("topology.vima_cache_bytes=16384")
    p = VimaProgram()
    eng.execute(p.vima_add_scalar_i32(C, A, 0), 0)
    eng.execute(p.vima_add_scalar_i32(C, B, 0), 10**6)  # A is clean, evicted
    assert dram.stats["dram_vima_writes"] == 0


def test_fill_buffer_delays_early_next_instruction():
    eng, _ = engine()
    p = VimaProgram()
    first = eng.execute(p.vima_mov_imm_i32(C, 1), 0)
    res = eng.execute(p.vima_mov_imm_i32(C + VB, 2), first.t_signal)
    assert res.phases["start"] == first.phases["drained"]
    assert eng.stats.drain_stall_ps == 8000


def test_instructions_never_overlap():
    eng, _ = engine()
    p = VimaProgram()
    t, last_end = 0, -1
    for i in range(6):
        res = eng.execute(p.vima_add_i32(C + i * VB, A + i * VB, B), t)
        assert res.phases["start"] >= last_end
        last_end = res.phases["drained"]
        t = res.t_signal


def test_capacity_fault_leaves_memory_untouched():
    eng, _ = engine()
    before = eng.memory.read(C, VB).copy()
    cap = eng.cfg.topology.capacity_bytes
    bad = VimaProgram().vima_add_i32(C, A, cap - 4)
    res = eng.execute(bad, 0)
    assert res.status == "exception"
    assert np.array_equal(eng.memory.read(C, VB), before)


def test_successful_add_signals_done():
    eng, _ = engine()
    assert eng.execute(VimaProgram().vima_add_i32(C, A, B), 0).status == "done"


def test_fetch_energy_per_vector():
    eng, dram = engine()
    eng.execute(VimaProgram().vima_add_scalar_i32(C, A, 0), 0)
    st_ = SimStats(backend="vima", counters=dram.stats)
    e = total_energy(st_, eng.cfg.energy)
    assert e.dynamic["dram_vima"] == pytest.approx(oracles.fetch_energy_pj())
    assert oracles.fetch_energy_pj() == pytest.approx(314_572.8)


# -- snooping -------------------------------------------------------------------------

def test_host_read_of_cached_line_is_supplied():
    eng, _ = engine()
    eng.execute(VimaProgram().vima_add_scalar_i32(C, A, 0), 0)
    assert eng.snoop("read", A + 100) == "supplied"
    assert eng.cache.find(A) >= 0


def test_host_write_to_dirty_line_writes_back_and_invalidates():
    eng, dram = engine()
    eng.execute(VimaProgram().vima_mov_imm_i32(C, 3), 0)
    assert eng.snoop("write", C + 64) == "invalidated"
    assert dram.stats["dram_vima_writes"] == 128
    assert eng.cache.find(C) < 0


def test_host_access_elsewhere_is_noop():
    eng, _ = engine()
    assert eng.snoop("read", 0x900000) == "no-op"


# -- invariants ------------------------------------------------------------------------

ops = st.sampled_from([Opcode.ADD, Opcode.SUB, Opcode.MUL_SCALAR, Opcode.MAC_SCALAR, Opcode.MOV_IMM])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(ops, st.integers(0, 11), st.integers(0, 11), st.integers(0, 11),
                          st.sampled_from([0, 4, 8, 4092])), min_size=1, max_size=25),
       st.integers(1, 8))
def test_subrequest_conservation(prog, lines):
    eng, dram = engine(f"topology.vima_cache_bytes={lines * VB}")
    p = VimaProgram()
    t = 0
    for op, d, s1, s2, off in prog:
        if op.nsrc == 0:
            ins = p.emit(op, ElementType.i32, d * VB, imm=1)
        elif op.nsrc == 1:
            if op.reads_dst and lines < 3:
                continue
            ins = p.emit(op, ElementType.i32, d * VB, s1 * VB + off, imm=2)
        else:
            ins = p.emit(op, ElementType.i32, d * VB, s1 * VB + off, s2 * VB)
        if len(set(t for s in ins.sources() for t in covering_lines(s, VB))) > lines:
            continue
        res = eng.execute(ins, t)
        t = res.t_signal
    s = dram.stats
    total = s["dram_vima_reads"] + s["dram_vima_writes"]
    assert total == 128 * (eng.stats.fetched_vectors + eng.stats.dirty_evictions)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_functional_result_matches_apply(seed):
    rng = np.random.default_rng(seed)
    eng, _ = engine()
    a = rng.random(1024)
    b = rng.random(1024)
    eng.memory.write(A, a)
    eng.memory.write(B, b)
    eng.execute(VimaProgram().vima_mac_scalar_f64(C, A + 8 * int(rng.integers(0, 1024)), 1.5), 0)
    eng.execute(VimaProgram().vima_sub_f64(C + VB, A, B), 10**6)
    assert np.array_equal(eng.memory.read_array(C + VB, np.float64, 1024), a - b)
