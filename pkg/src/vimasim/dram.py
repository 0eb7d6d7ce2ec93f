"""3D-stacked DRAM timing: vault/bank interleaving, closed-row banks, links.

Timing state lives in flat numpy arrays so the jitted host core loop and the
VIMA sequencer drive the same banks.  Every access is closed-row: activate,
column command, burst on the vault data bus, precharge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .config import SimConfig
from .simcore import cycles_to_time

# indices into the parameter vector handed to the jitted kernels
P_RCD, P_CAS, P_CWD, P_RAS, P_RP, P_BURST, P_LINE, P_VAULTS, P_BANKS, P_LINK_CYC, P_LINK_BURST, P_NLINKS = range(12)

# counter slots
C_VIMA_RD, C_VIMA_WR, C_HOST_RD, C_HOST_WR, C_LINK_BYTES = range(5)
N_COUNTERS = 5

ORIGIN_HOST = 0
ORIGIN_VIMA = 1


class AddressFault(Exception):
    """Access beyond the configured memory capacity."""

    def __init__(self, addr):
        super().__init__(f"address {addr:#x} is beyond memory capacity")
        self.addr = addr


@dataclass(frozen=True)
class SubRequest:
    kind: str  # "read" | "write"
    line_address: int
    vault: int
    bank: int
    row: int
    column: int
    origin: str = "vima"


@njit(cache=True)
def _service(bank_ready, bus_free, dp, vault, bank, is_write, t):
    act = max(t, bank_ready[vault, bank])
    col = act + dp[P_RCD]
    if is_write:
        ready = col + dp[P_CWD]
    else:
        ready = col + dp[P_CAS]
    start = max(ready, bus_free[vault])
    done = start + dp[P_BURST]
    bus_free[vault] = done
    pre = max(done, act + dp[P_RAS])
    bank_ready[vault, bank] = pre + dp[P_RP]
    return done


@njit(cache=True)
def _route(dp, line_addr):
    line = line_addr // dp[P_LINE]
    vault = line % dp[P_VAULTS]
    bank = (line // dp[P_VAULTS]) % dp[P_BANKS]
    return vault, bank


@njit(cache=True)
def _service_line(bank_ready, bus_free, dp, counters, vault_reads, line_addr, is_write, origin, t):
    vault, bank = _route(dp, line_addr)
    if origin == ORIGIN_VIMA:
        counters[C_VIMA_WR if is_write else C_VIMA_RD] += 1
    else:
        counters[C_HOST_WR if is_write else C_HOST_RD] += 1
    if not is_write:
        vault_reads[vault] += 1
    return _service(bank_ready, bus_free, dp, vault, bank, is_write, t)


@njit(cache=True)
def _service_batch(bank_ready, bus_free, dp, counters, vault_reads, lines, writes, origin, t, out):
    """Serve a burst of sub-requests that all arrive at ``t``.

    Within a vault, the request whose bank frees up first goes next (oldest
    first on ties), so idle banks are never held behind a busy one.
    """
    n = lines.shape[0]
    nv = dp[P_VAULTS]
    vault = np.empty(n, np.int64)
    bank = np.empty(n, np.int64)
    for i in range(n):
        v, b = _route(dp, lines[i])
        vault[i] = v
        bank[i] = b
        if origin == ORIGIN_VIMA:
            if writes[i]:
                counters[C_VIMA_WR] += 1
            else:
                counters[C_VIMA_RD] += 1
        else:
            if writes[i]:
                counters[C_HOST_WR] += 1
            else:
                counters[C_HOST_RD] += 1
        if not writes[i]:
            vault_reads[v] += 1
    order = np.argsort(vault, kind="mergesort")
    last = t
    i = 0
    while i < n:
        v = vault[order[i]]
        j = i
        while j < n and vault[order[j]] == v:
            j += 1
        k = j - i
        pending = np.ones(k, np.bool_)
        for _ in range(k):
            best = -1
            best_t = 0
            for q in range(k):
                if pending[q]:
                    idx = order[i + q]
                    est = max(t, bank_ready[v, bank[idx]])
                    if best < 0 or est < best_t:
                        best = q
                        best_t = est
            pending[best] = False
            idx = order[i + best]
            done = _service(bank_ready, bus_free, dp, v, bank[idx], writes[idx], t)
            out[idx] = done
            if done > last:
                last = done
        i = j
    return last


@njit(cache=True)
def _link_transfer(link_free, link_rr, dp, nbytes, t):
    cycles = (nbytes + dp[P_LINK_BURST] - 1) // dp[P_LINK_BURST]
    link = link_rr[0] % dp[P_NLINKS]
    link_rr[0] += 1
    start = max(t, link_free[link])
    done = start + cycles * dp[P_LINK_CYC]
    link_free[link] = done
    return done


@njit(cache=True)
def _link_reserve(link_free, link_rr, dp, nbytes, t):
    """Reserve a link slot for a request arriving at ``t``.

    Returns ``(start, duration)``.  Reserving at request time keeps the
    per-link FIFO in arrival order even when responses complete out of order.
    """
    cycles = (nbytes + dp[P_LINK_BURST] - 1) // dp[P_LINK_BURST]
    link = link_rr[0] % dp[P_NLINKS]
    link_rr[0] += 1
    start = max(t, link_free[link])
    dur = cycles * dp[P_LINK_CYC]
    link_free[link] = start + dur
    return start, dur


class Dram:
    """Vault array state plus a host link bundle."""

    def __init__(self, cfg: SimConfig):
        topo, tm = cfg.topology, cfg.timing
        dclk = cfg.dram_clock
        self.cfg = cfg
        self.params = np.array([
            cycles_to_time(tm.dram_rcd, dclk),
            cycles_to_time(tm.dram_cas, dclk),
            cycles_to_time(tm.dram_cwd, dclk),
            cycles_to_time(tm.dram_ras, dclk),
            cycles_to_time(tm.dram_rp, dclk),
            cycles_to_time(tm.dram_burst_cycles, dclk),
            topo.line_bytes,
            topo.vaults,
            topo.banks_per_vault,
            cfg.link_clock.period_ps,
            topo.link_burst_bytes,
            topo.links,
        ], dtype=np.int64)
        self.capacity = topo.capacity_bytes
        self.bank_ready = np.zeros((topo.vaults, topo.banks_per_vault), np.int64)
        self.bus_free = np.zeros(topo.vaults, np.int64)
        self.link_free = np.zeros(topo.links, np.int64)
        self.link_rr = np.zeros(1, np.int64)
        self.counters = np.zeros(N_COUNTERS, np.int64)
        self.vault_reads = np.zeros(topo.vaults, np.int64)

    # -- address mapping -------------------------------------------------
    def map_address(self, addr: int):
        """Return ``(vault, bank, row, column)`` for a byte address."""
        if addr < 0 or addr >= self.capacity:
            raise AddressFault(addr)
        topo = self.cfg.topology
        line = addr // topo.line_bytes
        vault = line % topo.vaults
        bank = (line // topo.vaults) % topo.banks_per_vault
        per_bank = line // (topo.vaults * topo.banks_per_vault)
        lines_per_row = max(1, topo.row_buffer_bytes // topo.line_bytes)
        return vault, bank, per_bank // lines_per_row, per_bank % lines_per_row

    def subrequest(self, kind: str, addr: int, origin: str = "vima") -> SubRequest:
        line_addr = addr - addr % self.cfg.topology.line_bytes
        v, b, r, c = self.map_address(line_addr)
        return SubRequest(kind, line_addr, v, b, r, c, origin)

    def vector_subrequests(self, base: int, nbytes: int, kind: str = "read"):
        line = self.cfg.topology.line_bytes
        return [self.subrequest(kind, a) for a in range(base, base + nbytes, line)]

    # -- timing ----------------------------------------------------------
    def service(self, sub: SubRequest, now: int) -> int:
        """Serve one sub-request arriving at ``now``; return its completion time."""
        origin = ORIGIN_VIMA if sub.origin == "vima" else ORIGIN_HOST
        return int(_service_line(self.bank_ready, self.bus_free, self.params, self.counters,
                                 self.vault_reads, sub.line_address, sub.kind == "write",
                                 origin, now))

    def service_batch(self, line_addrs, writes, now: int, origin: int = ORIGIN_VIMA):
        lines = np.asarray(line_addrs, np.int64)
        wr = np.asarray(writes, np.bool_)
        if lines.size and (lines.min() < 0 or lines.max() >= self.capacity):
            bad = int(lines[(lines < 0) | (lines >= self.capacity)][0])
            raise AddressFault(bad)
        out = np.zeros(lines.shape[0], np.int64)
        last = _service_batch(self.bank_ready, self.bus_free, self.params, self.counters,
                              self.vault_reads, lines, wr, origin, now, out)
        return int(last), out

    def link_delay(self, nbytes: int) -> int:
        p = self.params
        return -(-nbytes // int(p[P_LINK_BURST])) * int(p[P_LINK_CYC])

    def host_link_transfer(self, nbytes: int, now: int = 0) -> int:
        """Serialize ``nbytes`` on the next link (round robin); return finish time."""
        if nbytes <= 0:
            raise ValueError("link transfer needs a positive byte count")
        self.counters[C_LINK_BYTES] += nbytes
        return int(_link_transfer(self.link_free, self.link_rr, self.params, nbytes, now))

    def peak_read_bandwidth(self) -> float:
        """Closed-form vault-array read bound in bytes per picosecond.

        Each vault moves one line per max(burst, bank cycle / banks), where a
        closed-row bank cycle is RAS + RP or RCD + CAS + burst + RP, whichever
        is longer.
        """
        p = self.params
        bank_cycle = max(p[P_RAS], p[P_RCD] + p[P_CAS] + p[P_BURST]) + p[P_RP]
        per_line = max(p[P_BURST], bank_cycle / p[P_BANKS])
        return float(p[P_VAULTS] * p[P_LINE] / per_line)

    @property
    def stats(self) -> dict:
        c = self.counters
        return {
            "dram_vima_reads": int(c[C_VIMA_RD]),
            "dram_vima_writes": int(c[C_VIMA_WR]),
            "dram_host_reads": int(c[C_HOST_RD]),
            "dram_host_writes": int(c[C_HOST_WR]),
            "link_bytes": int(c[C_LINK_BYTES]),
        }


class SparseMemory:
    """Flat byte store backed by allocate-on-touch 64 KB pages."""

    PAGE = 1 << 16

    def __init__(self, capacity: int = 4 << 30):
        self.capacity = capacity
        self.pages: dict[int, np.ndarray] = {}

    def _page(self, idx):
        pg = self.pages.get(idx)
        if pg is None:
            pg = np.zeros(self.PAGE, np.uint8)
            self.pages[idx] = pg
        return pg

    def check(self, addr: int, n: int):
        if addr < 0 or addr + n > self.capacity:
            raise AddressFault(addr if addr < 0 or addr >= self.capacity else self.capacity)

    def read(self, addr: int, n: int) -> np.ndarray:
        self.check(addr, n)
        out = np.empty(n, np.uint8)
        pos = 0
        while pos < n:
            a = addr + pos
            idx, off = divmod(a, self.PAGE)
            take = min(n - pos, self.PAGE - off)
            pg = self.pages.get(idx)
            if pg is None:
                out[pos:pos + take] = 0
            else:
                out[pos:pos + take] = pg[off:off + take]
            pos += take
        return out

    def write(self, addr: int, data) -> None:
        buf = np.frombuffer(memoryview(np.ascontiguousarray(data)).cast("B"), np.uint8)
        n = buf.size
        self.check(addr, n)
        pos = 0
        while pos < n:
            a = addr + pos
            idx, off = divmod(a, self.PAGE)
            take = min(n - pos, self.PAGE - off)
            self._page(idx)[off:off + take] = buf[pos:pos + take]
            pos += take

    def read_array(self, addr: int, dtype, count: int) -> np.ndarray:
        dt = np.dtype(dtype)
        return self.read(addr, dt.itemsize * count).view(dt)

    def copy(self) -> "SparseMemory":
        m = SparseMemory(self.capacity)
        m.pages = {k: v.copy() for k, v in self.pages.items()}
        return m

    def same_as(self, other: "SparseMemory") -> bool:
        keys = set(self.pages) | set(other.pages)
        zero = np.zeros(self.PAGE, np.uint8)
        return all(np.array_equal(self.pages.get(k, zero), other.pages.get(k, zero)) for k in keys)
