"""The near-memory vector engine.

One instruction is in flight at a time.  Its life is: tag check of every
covering line, concurrent DRAM fetch of the missing ones (128 line
sub-requests per 8 KB vector), operand transfer through two cache ports,
the pipelined vector FUs, then the status signal.  The result sits in a fill
buffer that drains into the cache while the host turns the status around.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import isa
from .config import SimConfig
from .dram import ORIGIN_HOST, ORIGIN_VIMA, AddressFault, Dram, SparseMemory, _service_batch
from .simcore import EventQueue, cycles_to_time

SNOOP_NOOP, SNOOP_SUPPLIED, SNOOP_INVALIDATED = 0, 1, 2


def covering_lines(base: int, vector_bytes: int):
    """Aligned vector tags overlapping ``[base, base + vector_bytes)``."""
    first = base - base % vector_bytes
    if first == base:
        return [first]
    return [first, first + vector_bytes]


class VimaCache:
    """Fully associative, LRU, one vector per line.

    ``tags``/``dirty`` are plain arrays so the jitted host model can snoop
    them directly; ``-1`` marks an invalid line.
    """

    def __init__(self, n_lines: int, vector_bytes: int):
        if n_lines <= 0:
            raise ValueError("VIMA cache needs at least one line")
        self.vector_bytes = vector_bytes
        self.tags = np.full(n_lines, -1, np.int64)
        self.dirty = np.zeros(n_lines, np.int8)
        self.stamp = np.zeros(n_lines, np.int64)
        self.data: list[np.ndarray | None] = [None] * n_lines
        self._clock = 0
        self.hits = 0
        self.misses = 0

    def __len__(self):
        return self.tags.size

    def _tick(self):
        self._clock += 1
        return self._clock

    def find(self, tag: int) -> int:
        idx = np.flatnonzero(self.tags == tag)
        return int(idx[0]) if idx.size else -1

    def lookup(self, tag: int) -> int:
        """Return the slot holding ``tag`` (refreshing its LRU stamp) or -1."""
        slot = self.find(tag)
        if slot >= 0:
            self.stamp[slot] = self._tick()
            self.hits += 1
        else:
            self.misses += 1
        return slot

    def victim(self, pinned=()) -> int:
        free = np.flatnonzero(self.tags < 0)
        if free.size:
            return int(free[0])
        best, best_stamp = -1, None
        for s in range(self.tags.size):
            if int(self.tags[s]) in pinned:
                continue
            if best_stamp is None or self.stamp[s] < best_stamp:
                best, best_stamp = s, self.stamp[s]
        if best < 0:
            raise RuntimeError("VIMA cache too small for one instruction's operands")
        return best

    def fill(self, slot: int, tag: int, data=None, dirty=False):
        self.tags[slot] = tag
        self.dirty[slot] = 1 if dirty else 0
        self.stamp[slot] = self._tick()
        self.data[slot] = data

    def invalidate(self, slot: int):
        self.tags[slot] = -1
        self.dirty[slot] = 0
        self.data[slot] = None

    def access(self, tag: int) -> bool:
        """Reference-model access: lookup, allocating on miss. Returns hit."""
        if self.lookup(tag) >= 0:
            return True
        slot = self.victim()
        self.fill(slot, tag)
        return False

    def valid_tags(self):
        return sorted(int(t) for t in self.tags if t >= 0)


@njit(cache=True)
def snoop_host_access(vtags, vdirty, vector_bytes, addr, is_write,
                      bank_ready, bus_free, dp, counters, vault_reads, line_bytes, t):
    """Host access check against the VIMA cache.

    Reads hitting a cached vector are supplied from it; writes force a
    write-back of a dirty vector and invalidate it.  Returns the snoop code
    and the time any write-back finishes.
    """
    tag = addr - addr % vector_bytes
    for s in range(vtags.shape[0]):
        if vtags[s] == tag:
            if not is_write:
                return SNOOP_SUPPLIED, t
            done = t
            if vdirty[s]:
                n = vector_bytes // line_bytes
                lines = np.empty(n, np.int64)
                for i in range(n):
                    lines[i] = tag + i * line_bytes
                wr = np.ones(n, np.bool_)
                out = np.zeros(n, np.int64)
                done = _service_batch(bank_ready, bus_free, dp, counters, vault_reads,
                                      lines, wr, ORIGIN_VIMA, t, out)
            vtags[s] = -1
            vdirty[s] = 0
            return SNOOP_INVALIDATED, done
    return SNOOP_NOOP, t


@dataclass
class ExecResult:
    status: str  # "done" | "exception"
    t_signal: int  # status leaves the sequencer
    phases: dict = field(default_factory=dict)
    fault: str | None = None


@dataclass
class VimaStats:
    instructions: int = 0
    tag_lookups: int = 0
    hits: int = 0
    misses: int = 0
    evictions: int = 0
    dirty_evictions: int = 0
    snoop_writebacks: int = 0
    fetched_vectors: int = 0
    cache_line_accesses: int = 0
    gap_ps: int = 0
    drain_stall_ps: int = 0
    fetch_busy_ps: int = 0
    fetch_bytes: int = 0
    fetch_write_bytes: int = 0  # dirty victims written in the same fetch batch
    fetch_peak_mbps: int = 0  # highest read throughput of a single fetch window
    faults: int = 0
    arith_flags: int = 0


class VimaEngine:
    """Sequencer, cache and vector units of the near-memory engine."""

    def __init__(self, cfg: SimConfig, dram: Dram, memory: SparseMemory | None = None,
                 coherence=None, functional: bool = True):
        self.cfg = cfg
        self.dram = dram
        self.memory = memory if memory is not None else SparseMemory(cfg.topology.capacity_bytes)
        self.functional = functional
        # callback(base, nbytes, t) -> t: host-cache write-back/invalidate of a region
        self.coherence = coherence
        topo, tm = cfg.topology, cfg.timing
        self.vbytes = topo.vector_bytes
        self.lbytes = topo.line_bytes
        self.cache = VimaCache(cfg.vima_cache_lines, self.vbytes)
        self.clk = cfg.vima_clock
        self.beats = cfg.vima_beats
        self.tag_ps = cycles_to_time(tm.vima_tag_cycles, self.clk)
        self.queue = EventQueue()
        self.stats = VimaStats()
        self.fill_done = 0
        self.last_signal = None
        self.flags = isa.Flags()

    # -- helpers -----------------------------------------------------------
    def _cyc(self, n):
        return cycles_to_time(n, self.clk)

    def fu_cycles(self, instr: isa.VimaInstruction) -> int:
        tm = self.cfg.timing
        table = tm.fu_lat_fp if instr.etype.is_float else tm.fu_lat_int
        # the table folds the reference beat count; rescale for other vector sizes
        return max(1, table[instr.opcode.fu_class] - tm.vima_transfer_beats + self.beats)

    def _vector_lines(self, tag):
        return np.arange(tag, tag + self.vbytes, self.lbytes, dtype=np.int64)

    def _fault(self, instr):
        cap = self.cfg.topology.capacity_bytes
        if instr.dst % self.vbytes:
            return f"misaligned destination {instr.dst:#x}"
        for base in [instr.dst] + [s for s in (instr.src1, instr.src2) if s is not None]:
            for tag in covering_lines(base, self.vbytes):
                if tag < 0 or tag + self.vbytes > cap:
                    return f"address {base:#x} beyond capacity"
        return None

    def _evict(self, slot, t, writes):
        c, st = self.cache, self.stats
        if c.tags[slot] < 0:
            return
        st.evictions += 1
        if c.dirty[slot]:
            st.dirty_evictions += 1
            st.cache_line_accesses += self.vbytes // self.lbytes
            writes.append(int(c.tags[slot]))
        c.invalidate(slot)

    def _issue(self, reads, writes, t):
        """Send vector reads/writes to DRAM at ``t``; return the last read completion."""
        if not reads and not writes:
            return t
        lines = [self._vector_lines(tag) for tag in writes + reads]
        is_wr = [np.ones(self.vbytes // self.lbytes, np.bool_)] * len(writes)
        is_wr += [np.zeros(self.vbytes // self.lbytes, np.bool_)] * len(reads)
        lines = np.concatenate(lines)
        wr = np.concatenate(is_wr)
        _, done = self.dram.service_batch(lines, wr, t, ORIGIN_VIMA)
        rd = done[~wr]
        return int(rd.max()) if rd.size else t

    # -- main entry --------------------------------------------------------
    def execute(self, instr: isa.VimaInstruction, t_arrive: int) -> ExecResult:
        st, cache, q = self.stats, self.cache, self.queue
        t0 = max(t_arrive, self.fill_done, q.now)
        if self.last_signal is not None:
            st.gap_ps += t_arrive - self.last_signal if t_arrive > self.last_signal else 0
        if t0 > t_arrive:
            st.drain_stall_ps += t0 - t_arrive
        q.schedule(t0, "sequencer", "start")
        st.instructions += 1

        fault = self._fault(instr)
        if fault is not None:
            st.faults += 1
            t_sig = t0 + self.tag_ps
            q.schedule(t_sig, "host", "exception")
            self._drain_queue()
            self.last_signal = t_sig
            return ExecResult("exception", t_sig, {"start": t0, "signal": t_sig}, fault)

        if self.coherence is not None:
            # host copies of the operand regions are written back and dropped first
            t_coh = t0
            for base in [instr.dst] + instr.sources():
                span = 2 * self.vbytes if base % self.vbytes else self.vbytes
                t_coh = max(t_coh, self.coherence(base - base % self.vbytes, span, t0))
            t0 = t_coh

        # phase 1: tag check
        tags = []
        for base in instr.sources():
            for tag in covering_lines(base, self.vbytes):
                if tag not in tags:
                    tags.append(tag)
        ports = self.cfg.timing.vima_cache_ports
        tag_ps = -(-len(tags) // ports) * self.tag_ps if tags else 0
        t1 = t0 + tag_ps
        q.schedule(t1, "sequencer", "tags")

        # phase 2: fetch every missing covering line concurrently
        missing = []
        for tag in tags:
            st.tag_lookups += 1
            if cache.lookup(tag) >= 0:
                st.hits += 1
            else:
                st.misses += 1
                missing.append(tag)
        writes = []
        pinned = set(tags)
        slots = []
        for tag in missing:
            slot = cache.victim(pinned)
            self._evict(slot, t1, writes)
            cache.fill(slot, tag)
            slots.append((slot, tag))
        t2 = self._issue(missing, writes, t1)
        if missing:
            st.fetched_vectors += len(missing)
            st.fetch_busy_ps += t2 - t1
            st.fetch_bytes += len(missing) * self.vbytes
            st.fetch_write_bytes += len(writes) * self.vbytes
            if t2 > t1:
                mbps = len(missing) * self.vbytes * 10**6 // (t2 - t1)
                st.fetch_peak_mbps = max(st.fetch_peak_mbps, mbps)
            st.cache_line_accesses += len(missing) * (self.vbytes // self.lbytes)
            for slot, tag in slots:
                if self.functional:
                    cache.data[slot] = self.memory.read(tag, self.vbytes)
        q.schedule(t2, "sequencer", "operands")

        # phase 3: operand transfer, both ports in parallel
        nsrc = len(instr.sources())
        t3 = t2 + (self._cyc(self.beats) if nsrc else 0)
        st.cache_line_accesses += nsrc * (self.vbytes // self.lbytes)
        q.schedule(t3, "sequencer", "transfer")

        # phase 4: pipelined vector FUs
        t4 = t3 + self._cyc(self.fu_cycles(instr))
        q.schedule(t4, "host", "done")

        # phase 5: fill buffer drains into the cache during the dispatch gap
        result = None
        if self.functional:
            before = self.flags.int_div_by_zero
            result = isa.apply(instr, self.memory, self.flags)
            if self.flags.int_div_by_zero and not before:
                st.arith_flags += 1
        dst_writes = []
        slot = cache.find(instr.dst)
        if slot < 0:
            slot = cache.victim()
            self._evict(slot, t4, dst_writes)
        cache.fill(slot, instr.dst, None if result is None else result.view(np.uint8).copy(), dirty=True)
        st.cache_line_accesses += self.vbytes // self.lbytes
        if dst_writes:
            self._issue([], dst_writes, t4)
        self.fill_done = t4 + self._cyc(self.beats)
        q.schedule(self.fill_done, "sequencer", "drained")

        self._drain_queue()
        self.last_signal = t4
        phases = {"start": t0, "tags": t1, "operands": t2, "transfer": t3, "signal": t4,
                  "drained": self.fill_done}
        return ExecResult("done", t4, phases)

    def _drain_queue(self):
        while self.queue.advance() is not None:
            pass

    # -- coherence with host accesses ---------------------------------------
    def snoop(self, kind: str, addr: int, t: int = 0) -> str:
        d = self.dram
        code, _ = snoop_host_access(self.cache.tags, self.cache.dirty, self.vbytes, addr,
                                    kind == "write", d.bank_ready, d.bus_free, d.params,
                                    d.counters, d.vault_reads, self.lbytes, t)
        if code == SNOOP_INVALIDATED:
            self.stats.snoop_writebacks += 1
        return {SNOOP_NOOP: "no-op", SNOOP_SUPPLIED: "supplied", SNOOP_INVALIDATED: "invalidated"}[code]
