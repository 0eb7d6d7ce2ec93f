"""Host processor timing: a dependency-driven out-of-order window per core and
an inclusive three-level LRU cache hierarchy over the shared DRAM model.

The per-cycle machinery is jitted.  When a VIMA instruction reaches the head
of a core's ROB the loop returns to Python, the sequencer computes the
instruction's status time, and the loop resumes where it stopped.  That gives
stop-and-go dispatch: the next VIMA instruction leaves only after the previous
one committed, while ordinary host ops keep issuing around it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .config import SimConfig
from .dram import ORIGIN_HOST, Dram, _link_reserve, _link_transfer, _service_line
from .simcore import cycles_to_time
from .vima import SNOOP_INVALIDATED, SNOOP_SUPPLIED, snoop_host_access

# op kinds
LOAD, STORE, ALU_I, MUL_I, DIV_I, ALU_F, MUL_F, DIV_F, VIMA = range(9)
KIND_NAMES = ("load", "store", "alu_int", "mul_int", "div_int", "alu_fp", "mul_fp", "div_fp", "vima")

INF = np.int64(1 << 62)

# host parameter vector slots
(H_CYC, H_L1, H_L2, H_LLC, H_WIDTH, H_ROB, H_MOBR, H_MOBW, H_MSHR, H_LINE, H_NORFO,
 H_VBYTES, H_VACC, H_LOADU, H_STOREU) = range(15)
H_UNITS = 15  # 6 unit counts (alu_i, mul_i, div_i, alu_f, mul_f, div_f)
H_LATS = 21   # 6 latencies in ps
N_HPARAM = 27

# counter slots
(K_L1, K_L2, K_LLC, K_L1_MISS, K_L2_MISS, K_LLC_MISS, K_LLC_EVICT, K_WB_DRAM, K_SNOOP_SUPPLY,
 K_SNOOP_INVAL, K_OPS, K_LOADS, K_STORES, K_MSHR_STALL, K_MAX_ISSUE, K_VIMA_LINES) = range(16)
N_HCOUNT = 16

COUNTER_NAMES = ("l1_accesses", "l2_accesses", "llc_accesses", "l1_misses", "l2_misses",
                 "llc_misses", "llc_evictions", "host_writebacks", "vima_snoop_supplies",
                 "vima_snoop_invalidations", "host_ops", "host_loads", "host_stores",
                 "mshr_stall_events", "max_issue_per_cycle", "vima_cache_snoop_lines")


# ---------------------------------------------------------------------------
# cache primitives (tags hold line indices, -1 = invalid)

@njit(cache=True)
def _probe(tags, s, line):
    for w in range(tags.shape[1]):
        if tags[s, w] == line:
            return w
    return -1


@njit(cache=True)
def _victim_way(tags, lru, s):
    best = 0
    for w in range(tags.shape[1]):
        if tags[s, w] < 0:
            return w
        if lru[s, w] < lru[s, best]:
            best = w
    return best


@njit(cache=True)
def _invalidate_private(l1t, l1d, l2t, l2d, ncores, line):
    """Drop ``line`` from every core's L1/L2; return whether any copy was dirty."""
    dirty = False
    s1 = line % l1t.shape[1]
    s2 = line % l2t.shape[1]
    for c in range(ncores):
        w = _probe(l1t[c], s1, line)
        if w >= 0:
            if l1d[c, s1, w]:
                dirty = True
            l1t[c, s1, w] = -1
            l1d[c, s1, w] = 0
        w = _probe(l2t[c], s2, line)
        if w >= 0:
            if l2d[c, s2, w]:
                dirty = True
            l2t[c, s2, w] = -1
            l2d[c, s2, w] = 0
    return dirty


@njit(cache=True)
def _writeback_line(line, t, hp, dp, bank_ready, bus_free, link_free, link_rr, dcount, vreads, cnt):
    addr = line * hp[H_LINE]
    t_link = _link_transfer(link_free, link_rr, dp, hp[H_LINE], t)
    dcount[4] += hp[H_LINE]
    cnt[K_WB_DRAM] += 1
    return _service_line(bank_ready, bus_free, dp, dcount, vreads, addr, True, ORIGIN_HOST, t_link)


@njit(cache=True)
def _mem_access(core, line, is_write, full_line, t, ncores, hp, cnt, clk,
                l1t, l1l, l1d, l1r, l2t, l2l, l2d, l2r, llt, lll, lld, llr,
                dp, bank_ready, bus_free, link_free, link_rr, dcount, vreads,
                vtags, vdirty):
    """Access ``line`` from ``core`` at ``t``; return the data-ready time."""
    clk[0] += 1
    now_stamp = clk[0]
    s1 = line % l1t.shape[1]
    cnt[K_L1] += 1
    w = _probe(l1t[core], s1, line)
    if w >= 0:
        l1l[core, s1, w] = now_stamp
        if is_write:
            l1d[core, s1, w] = 1
        return max(t + hp[H_L1], l1r[core, s1, w])
    cnt[K_L1_MISS] += 1

    s2 = line % l2t.shape[1]
    cnt[K_L2] += 1
    w2 = _probe(l2t[core], s2, line)
    ready = 0
    if w2 >= 0:
        l2l[core, s2, w2] = now_stamp
        ready = max(t + hp[H_L1] + hp[H_L2], l2r[core, s2, w2])
    else:
        cnt[K_L2_MISS] += 1
        s3 = line % llt.shape[0]
        cnt[K_LLC] += 1
        w3 = _probe(llt, s3, line)
        if w3 >= 0:
            lll[s3, w3] = now_stamp
            ready = max(t + hp[H_L1] + hp[H_L2] + hp[H_LLC], llr[s3, w3])
        else:
            cnt[K_LLC_MISS] += 1
            t_mem = t + hp[H_L1] + hp[H_L2] + hp[H_LLC]
            addr = line * hp[H_LINE]
            if vtags.shape[0] > 0:
                code, t_snoop = snoop_host_access(vtags, vdirty, hp[H_VBYTES], addr,
                                                  is_write, bank_ready, bus_free, dp,
                                                  dcount, vreads, hp[H_LINE], t_mem)
                if code == SNOOP_INVALIDATED:
                    cnt[K_SNOOP_INVAL] += 1
                    t_mem = t_snoop
            else:
                code = 0
            if code == SNOOP_SUPPLIED:
                cnt[K_SNOOP_SUPPLY] += 1
                cnt[K_VIMA_LINES] += 1
                dcount[4] += hp[H_LINE]
                start, dur = _link_reserve(link_free, link_rr, dp, hp[H_LINE], t_mem)
                ready = start + hp[H_VACC] + dur
            elif is_write and full_line and hp[H_NORFO]:
                ready = t + hp[H_L1]
            else:
                start, dur = _link_reserve(link_free, link_rr, dp, hp[H_LINE], t_mem)
                t_d = _service_line(bank_ready, bus_free, dp, dcount, vreads, addr, False,
                                    ORIGIN_HOST, start)
                dcount[4] += hp[H_LINE]
                ready = t_d + dur
            # allocate in LLC, back-invalidating the victim everywhere
            v3 = _victim_way(llt, lll, s3)
            old = llt[s3, v3]
            if old >= 0:
                cnt[K_LLC_EVICT] += 1
                d = _invalidate_private(l1t, l1d, l2t, l2d, ncores, old)
                if d or lld[s3, v3]:
                    _writeback_line(old, t_mem, hp, dp, bank_ready, bus_free, link_free, link_rr,
                                    dcount, vreads, cnt)
            llt[s3, v3] = line
            lll[s3, v3] = now_stamp
            lld[s3, v3] = 0
            llr[s3, v3] = ready
        # allocate in L2; an L2 victim leaves this core's L1 too
        v2 = _victim_way(l2t[core], l2l[core], s2)
        old = l2t[core, s2, v2]
        if old >= 0:
            dirty = l2d[core, s2, v2] != 0
            so = old % l1t.shape[1]
            wo = _probe(l1t[core], so, old)
            if wo >= 0:
                if l1d[core, so, wo]:
                    dirty = True
                l1t[core, so, wo] = -1
                l1d[core, so, wo] = 0
            if dirty:
                s3o = old % llt.shape[0]
                w3o = _probe(llt, s3o, old)
                cnt[K_LLC] += 1
                if w3o >= 0:
                    lld[s3o, w3o] = 1
        l2t[core, s2, v2] = line
        l2l[core, s2, v2] = now_stamp
        l2d[core, s2, v2] = 0
        l2r[core, s2, v2] = ready
    # allocate in L1
    v1 = _victim_way(l1t[core], l1l[core], s1)
    old = l1t[core, s1, v1]
    if old >= 0 and l1d[core, s1, v1]:
        so = old % l2t.shape[1]
        wo = _probe(l2t[core], so, old)
        cnt[K_L2] += 1
        if wo >= 0:
            l2d[core, so, wo] = 1
    l1t[core, s1, v1] = line
    l1l[core, s1, v1] = now_stamp
    l1d[core, s1, v1] = 1 if is_write else 0
    l1r[core, s1, v1] = ready
    return ready


@njit(cache=True)
def _invalidate_region(first_line, nlines, t, ncores, hp, cnt,
                       l1t, l1d, l2t, l2d, llt, lld,
                       dp, bank_ready, bus_free, link_free, link_rr, dcount, vreads):
    """Write back dirty copies of a line range and invalidate it everywhere."""
    done = t
    wbs = 0
    for line in range(first_line, first_line + nlines):
        s3 = line % llt.shape[0]
        w3 = _probe(llt, s3, line)
        if w3 < 0:
            continue  # inclusive hierarchy: absent from LLC means absent everywhere
        d = _invalidate_private(l1t, l1d, l2t, l2d, ncores, line)
        if d or lld[s3, w3]:
            fin = _writeback_line(line, t, hp, dp, bank_ready, bus_free, link_free, link_rr,
                                  dcount, vreads, cnt)
            wbs += 1
            if fin > done:
                done = fin
        llt[s3, w3] = -1
        lld[s3, w3] = 0
    return done, wbs


# ---------------------------------------------------------------------------
# the core window machine

@njit(cache=True)
def _run_cores(now, ncores, start, end, kind, addr, size, dep0, dep1,
               done, issued, store_slot, head, tail, scan, loads_in, ring, ring_ptr,
               mshr_line, mshr_ready, div_busy, phase_last, phase_time, phase_ptr,
               hp, cnt, clk,
               l1t, l1l, l1d, l1r, l2t, l2l, l2d, l2r, llt, lll, lld, llr,
               dp, bank_ready, bus_free, link_free, link_rr, dcount, vreads,
               vtags, vdirty):
    """Advance all cores until every stream retires or a VIMA op needs dispatch.

    Returns ``(code, now, core, op)``: code 0 = finished, 1 = VIMA dispatch.
    """
    cyc = hp[H_CYC]
    width = hp[H_WIDTH]
    rob = hp[H_ROB]
    mob_r = hp[H_MOBR]
    mob_w = hp[H_MOBW]
    nmshr = hp[H_MSHR]
    line_b = hp[H_LINE]
    used = np.zeros(8, np.int64)
    while True:
        active = False
        progress = False
        for c in range(ncores):
            if head[c] >= end[c]:
                continue
            active = True
            # retire in order
            r = 0
            while r < width and head[c] < tail[c] and issued[head[c]] and done[head[c]] <= now:
                h = head[c]
                if kind[h] == LOAD:
                    loads_in[c] -= 1
                p = phase_ptr[c]
                if p < phase_last.shape[1] and h == phase_last[c, p]:
                    phase_time[c, p] = now
                    phase_ptr[c] = p + 1
                head[c] = h + 1
                r += 1
                progress = True
            if head[c] >= end[c]:
                continue
            # allocate into the window
            a = 0
            while a < width and tail[c] < end[c] and tail[c] - head[c] < rob:
                i = tail[c]
                k = kind[i]
                if k == LOAD:
                    if loads_in[c] >= mob_r:
                        break
                    loads_in[c] += 1
                elif k == STORE:
                    sp = ring_ptr[c]
                    if ring[c, sp] > now:
                        break
                    ring[c, sp] = INF
                    store_slot[i] = sp
                    ring_ptr[c] = (sp + 1) % mob_w
                tail[c] = i + 1
                a += 1
                progress = True
            # issue, oldest first
            for u in range(8):
                used[u] = 0
            n_issued = 0
            while scan[c] < tail[c] and issued[scan[c]]:
                scan[c] += 1
            for i in range(scan[c], tail[c]):
                if n_issued >= width:
                    break
                if issued[i]:
                    continue
                d = dep0[i]
                if d > 0 and (not issued[i - d] or done[i - d] > now):
                    continue
                d = dep1[i]
                if d > 0 and (not issued[i - d] or done[i - d] > now):
                    continue
                k = kind[i]
                if k == VIMA:
                    if i == head[c]:
                        return 1, now, c, i
                    continue
                if k == LOAD or k == STORE:
                    unit = 6 if k == LOAD else 7
                    limit = hp[H_LOADU] if k == LOAD else hp[H_STOREU]
                    if used[unit] >= limit:
                        continue
                    a0 = addr[i]
                    first = a0 // line_b
                    last = (a0 + size[i] - 1) // line_b
                    full = (a0 % line_b == 0) and size[i] == line_b
                    need_mshr = k == LOAD or not (full and hp[H_NORFO])
                    # count MSHRs required for lines absent from L1
                    need = 0
                    if need_mshr:
                        for ln in range(first, last + 1):
                            if _probe(l1t[c], ln % l1t.shape[1], ln) < 0:
                                need += 1
                        if need > 0:
                            free = 0
                            for m in range(nmshr):
                                if mshr_ready[c, m] <= now:
                                    free += 1
                            if free < need:
                                cnt[K_MSHR_STALL] += 1
                                continue
                    ready = now
                    for ln in range(first, last + 1):
                        miss = _probe(l1t[c], ln % l1t.shape[1], ln) < 0
                        rt = _mem_access(c, ln, k == STORE, full, now, ncores, hp, cnt, clk,
                                         l1t, l1l, l1d, l1r, l2t, l2l, l2d, l2r, llt, lll, lld, llr,
                                         dp, bank_ready, bus_free, link_free, link_rr, dcount,
                                         vreads, vtags, vdirty)
                        if miss and need_mshr:
                            for m in range(nmshr):
                                if mshr_ready[c, m] <= now:
                                    mshr_ready[c, m] = rt
                                    mshr_line[c, m] = ln
                                    break
                        if rt > ready:
                            ready = rt
                    if k == LOAD:
                        done[i] = ready
                        cnt[K_LOADS] += 1
                    else:
                        done[i] = now + cyc
                        ring[c, store_slot[i]] = max(ready, now + cyc)
                        cnt[K_STORES] += 1
                    used[unit] += 1
                else:
                    u = k - ALU_I
                    if used[u] >= hp[H_UNITS + u]:
                        continue
                    lat = hp[H_LATS + u]
                    if k == DIV_I or k == DIV_F:
                        if div_busy[c, u // 3] > now:
                            continue
                        div_busy[c, u // 3] = now + lat
                    done[i] = now + lat
                    used[u] += 1
                issued[i] = 1
                n_issued += 1
                cnt[K_OPS] += 1
                progress = True
            if n_issued > cnt[K_MAX_ISSUE]:
                cnt[K_MAX_ISSUE] = n_issued
        if not active:
            return 0, now, -1, -1
        if progress:
            now += cyc
            continue
        # nothing moved: jump to the next time anything can change
        nxt = INF
        for c in range(ncores):
            if head[c] >= end[c]:
                continue
            for i in range(head[c], tail[c]):
                if issued[i] and done[i] > now and done[i] < nxt:
                    nxt = done[i]
            for m in range(nmshr):
                if mshr_ready[c, m] > now and mshr_ready[c, m] < nxt:
                    nxt = mshr_ready[c, m]
            for m in range(ring.shape[1]):
                if ring[c, m] > now and ring[c, m] < INF and ring[c, m] < nxt:
                    nxt = ring[c, m]
            for m in range(2):
                if div_busy[c, m] > now and div_busy[c, m] < nxt:
                    nxt = div_busy[c, m]
        if nxt >= INF:
            now += cyc
        else:
            # stay on the core clock grid
            now = now + ((nxt - now + cyc - 1) // cyc) * cyc


# ---------------------------------------------------------------------------
# Python side

@dataclass
class HostStream:
    """Compact op arrays. ``dep0``/``dep1`` are backward distances (0 = none).

    For ``VIMA`` ops ``addr`` indexes the accompanying instruction list.
    """

    kind: np.ndarray
    addr: np.ndarray
    size: np.ndarray
    dep0: np.ndarray
    dep1: np.ndarray
    phase_ends: list = field(default_factory=list)  # op count at the end of each phase

    def __len__(self):
        return int(self.kind.shape[0])

    @classmethod
    def empty(cls):
        z = np.zeros(0, np.int64)
        return cls(z.astype(np.int8), z, z.astype(np.int16), z.astype(np.int32), z.astype(np.int32), [])

    @classmethod
    def from_ops(cls, ops):
        """Build from ``HostOp`` objects (deps given as absolute earlier indices)."""
        n = len(ops)
        kind = np.zeros(n, np.int8)
        addr = np.zeros(n, np.int64)
        size = np.zeros(n, np.int16)
        d0 = np.zeros(n, np.int32)
        d1 = np.zeros(n, np.int32)
        for i, op in enumerate(ops):
            kind[i] = KIND_NAMES.index(op.kind)
            addr[i] = -1 if op.addr is None else op.addr
            size[i] = op.width
            deps = list(op.deps)
            if len(deps) > 2:
                raise ValueError("host ops take at most two dependencies")
            for j, d in enumerate(deps):
                if not 0 <= d < i:
                    raise ValueError(f"op {i}: dependency {d} is not an earlier op")
                (d0 if j == 0 else d1)[i] = i - d
        return cls(kind, addr, size, d0, d1, [n])

    @staticmethod
    def concat(parts):
        parts = [p for p in parts if len(p)]
        if not parts:
            return HostStream.empty()
        ends, off = [], 0
        for p in parts:
            ends.extend(off + e for e in p.phase_ends)
            off += len(p)
        return HostStream(np.concatenate([p.kind for p in parts]),
                          np.concatenate([p.addr for p in parts]),
                          np.concatenate([p.size for p in parts]),
                          np.concatenate([p.dep0 for p in parts]),
                          np.concatenate([p.dep1 for p in parts]), ends)


@dataclass
class HostOp:
    kind: str
    width: int = 64
    addr: int | None = None
    deps: tuple = ()


@dataclass
class HostRun:
    elapsed: int
    phase_times: np.ndarray  # [phase] completion time (max over cores)
    counters: dict
    faults: list
    vima_dispatches: list  # (issue time, commit-ready time)


class VimaFault(RuntimeError):
    pass


class HostModel:
    """Cores, private L1/L2 and the shared LLC, attached to one ``Dram``."""

    def __init__(self, cfg: SimConfig, dram: Dram, cores: int = 1):
        self.cfg = cfg
        self.dram = dram
        self.cores = cores
        topo, tm = cfg.topology, cfg.timing
        cc = cfg.core_clock
        cyc = cc.period_ps
        self.cycle_ps = cyc
        lb = topo.line_bytes

        def level(nbytes, ways, n):
            sets = nbytes // (ways * lb)
            shape = (sets, ways) if n is None else (n, sets, ways)
            return (np.full(shape, -1, np.int64), np.zeros(shape, np.int64),
                    np.zeros(shape, np.int8), np.zeros(shape, np.int64))

        self.l1 = level(topo.l1_bytes, topo.l1_ways, cores)
        self.l2 = level(topo.l2_bytes, topo.l2_ways, cores)
        self.llc = level(topo.llc_bytes, topo.llc_ways, None)
        self.clk = np.zeros(1, np.int64)
        hp = np.zeros(N_HPARAM, np.int64)
        hp[H_CYC] = cyc
        hp[H_L1] = tm.l1_lat * cyc
        hp[H_L2] = tm.l2_lat * cyc
        hp[H_LLC] = tm.llc_lat * cyc
        hp[H_WIDTH] = tm.issue_width
        hp[H_ROB] = tm.rob_entries
        hp[H_MOBR] = tm.mob_read
        hp[H_MOBW] = tm.mob_write
        hp[H_MSHR] = tm.mshr_limit
        hp[H_LINE] = lb
        hp[H_NORFO] = 1 if cfg.workload.full_line_store_no_rfo else 0
        hp[H_VBYTES] = topo.vector_bytes
        # VIMA cache supply: tag check plus one data cycle
        hp[H_VACC] = cycles_to_time(tm.vima_tag_cycles + 1, cfg.vima_clock)
        hp[H_LOADU] = tm.load_units
        hp[H_STOREU] = tm.store_units
        units = list(tm.int_units) + list(tm.fp_units)
        lats = list(tm.int_lat) + list(tm.fp_lat)
        for j in range(6):
            hp[H_UNITS + j] = units[j]
            hp[H_LATS + j] = lats[j] * cyc
        self.hp = hp
        self.cnt = np.zeros(N_HCOUNT, np.int64)
        self.vtags = np.zeros(0, np.int64)
        self.vdirty = np.zeros(0, np.int8)

    def attach_vima_cache(self, cache):
        self.vtags = cache.tags
        self.vdirty = cache.dirty

    def _dram_args(self):
        d = self.dram
        return (d.params, d.bank_ready, d.bus_free, d.link_free, d.link_rr, d.counters, d.vault_reads)

    # -- single accesses (tests, coherence) ------------------------------------
    def access(self, core: int, addr: int, is_write: bool = False, t: int = 0, full_line: bool = False) -> int:
        lb = self.cfg.topology.line_bytes
        return int(_mem_access(core, addr // lb, is_write, full_line, t, self.cores, self.hp, self.cnt,
                               self.clk, *self.l1, *self.l2, *self.llc, *self._dram_args(),
                               self.vtags, self.vdirty))

    def invalidate_region(self, base: int, nbytes: int, t: int = 0) -> int:
        lb = self.cfg.topology.line_bytes
        first = base // lb
        last = -(-(base + nbytes) // lb)
        done, _ = _invalidate_region(first, last - first, t, self.cores, self.hp, self.cnt,
                                     self.l1[0], self.l1[2], self.l2[0], self.l2[2],
                                     self.llc[0], self.llc[2], *self._dram_args())
        return int(done)

    def coherence_prologue(self, regions, t: int = 0):
        """Write back and invalidate host-cached lines of ``regions``.

        Returns ``(finish_time, writebacks)``; cold caches cost nothing.
        """
        before = int(self.cnt[K_WB_DRAM])
        done = t
        for base, nbytes in regions:
            done = max(done, self.invalidate_region(base, nbytes, t))
        return done, int(self.cnt[K_WB_DRAM]) - before

    def contains(self, level: str, addr: int, core: int = 0) -> bool:
        line = addr // self.cfg.topology.line_bytes
        tags = {"l1": self.l1[0][core], "l2": self.l2[0][core], "llc": self.llc[0]}[level]
        return _probe(tags, line % tags.shape[0], line) >= 0

    def counters(self) -> dict:
        return {name: int(v) for name, v in zip(COUNTER_NAMES, self.cnt)}

    # -- stream execution ------------------------------------------------------
    def run(self, streams, engine=None, instrs=None, t0: int = 0, on_vima=None) -> HostRun:
        """Run one stream per core; VIMA ops dispatch to ``engine``.

        ``on_vima(index, result)`` is called after each VIMA instruction executes.
        """
        if len(streams) != self.cores:
            raise ValueError("need exactly one stream per core")
        s = HostStream.concat(streams) if len(streams) > 1 else streams[0]
        lens = [len(x) for x in streams]
        start = np.zeros(self.cores, np.int64)
        start[1:] = np.cumsum(lens)[:-1]
        end = start + np.array(lens, np.int64)
        n = len(s)
        nph = max(len(x.phase_ends) for x in streams)
        phase_last = np.full((self.cores, max(nph, 1)), -1, np.int64)
        for c, x in enumerate(streams):
            for p, e in enumerate(x.phase_ends):
                phase_last[c, p] = start[c] + e - 1
        phase_time = np.zeros_like(phase_last)
        phase_ptr = np.zeros(self.cores, np.int64)
        # phases with no ops complete immediately
        for c in range(self.cores):
            while phase_ptr[c] < nph and phase_last[c, phase_ptr[c]] < start[c]:
                phase_time[c, phase_ptr[c]] = t0
                phase_ptr[c] += 1

        done = np.full(n, INF, np.int64)
        issued = np.zeros(n, np.int8)
        store_slot = np.zeros(n, np.int16)
        head = start.copy()
        tail = start.copy()
        scan = start.copy()
        tm = self.cfg.timing
        loads_in = np.zeros(self.cores, np.int64)
        ring = np.zeros((self.cores, tm.mob_write), np.int64)
        ring_ptr = np.zeros(self.cores, np.int64)
        mshr_line = np.full((self.cores, tm.mshr_limit), -1, np.int64)
        mshr_ready = np.zeros((self.cores, tm.mshr_limit), np.int64)
        div_busy = np.zeros((self.cores, 2), np.int64)
        disp = tm.instruction_dispatch_lat * self.cycle_ps
        dispatches, faults = [], []
        now = t0
        while True:
            code, now, core, op = _run_cores(
                now, self.cores, start, end, s.kind, s.addr, s.size, s.dep0, s.dep1,
                done, issued, store_slot, head, tail, scan, loads_in, ring, ring_ptr,
                mshr_line, mshr_ready, div_busy, phase_last, phase_time, phase_ptr,
                self.hp, self.cnt, self.clk, *self.l1, *self.l2, *self.llc,
                *self._dram_args(), self.vtags, self.vdirty)
            if code == 0:
                break
            if engine is None:
                raise ValueError("stream contains VIMA ops but no engine is attached")
            idx = int(s.addr[op])
            res = engine.execute(instrs[idx], now + disp)
            if on_vima is not None:
                on_vima(idx, res)
            back = res.t_signal + disp
            dispatches.append((now, back))
            if res.status != "done":
                # precise exception: flush the ROB, which has filled behind the
                # VIMA op while it waited for the status, then stop
                occupancy = int(min(self.hp[H_ROB], end[core] - head[core]))
                now = back + occupancy * self.cycle_ps
                faults.append({"core": core, "op": int(op), "instr": int(s.addr[op]),
                               "reason": res.fault, "time": now})
                break
            done[op] = back
            issued[op] = 1
        elapsed = now
        if not faults:
            last = [int(done[end[c] - 1]) for c in range(self.cores) if end[c] > start[c]]
            elapsed = max([now] + last) if last else now
        ptimes = phase_time.max(axis=0) if nph else np.zeros(0, np.int64)
        return HostRun(int(elapsed), ptimes, self.counters(), faults, dispatches)


def run_host_stream(ops, cores: int = 1, cfg: SimConfig | None = None):
    """Time ``ops`` (a list of ``HostOp``) on a cold machine; returns ``HostRun``."""
    cfg = cfg or SimConfig()
    dram = Dram(cfg)
    host = HostModel(cfg, dram, cores)
    if cores == 1:
        streams = [HostStream.from_ops(ops)]
    else:
        # static partition into contiguous slices; deps must not cross slices
        bounds = np.linspace(0, len(ops), cores + 1).astype(int)
        streams = []
        for c in range(cores):
            lo, hi = bounds[c], bounds[c + 1]
            part = [HostOp(o.kind, o.width, o.addr, tuple(d - lo for d in o.deps)) for o in ops[lo:hi]]
            streams.append(HostStream.from_ops(part))
    return host.run(streams)
