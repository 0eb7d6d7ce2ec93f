"""Run statistics, energy accounting and CSV/detail reporting."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

from .config import EnergyConfig

CSV_HEADER = ("kernel", "backend", "size_mb", "threads", "cycles", "elapsed_ps",
              "energy_pj", "speedup", "energy_ratio")

COMPONENTS = ("core", "l1", "l2", "llc", "dram", "vima")


@dataclass
class SimStats:
    kernel: str = ""
    backend: str = ""
    size_mb: float = 0.0
    threads: int = 1
    cores: int = 1
    elapsed_ps: int = 0
    cycle_ps: int = 500
    line_bytes: int = 64
    counters: dict = field(default_factory=dict)
    faults: list = field(default_factory=list)
    phases_simulated: int = 0
    phases_total: int = 0

    @property
    def cycles(self) -> int:
        """Elapsed time in core cycles (rounded up)."""
        return -(-self.elapsed_ps // self.cycle_ps)

    def count(self, name: str) -> int:
        return int(self.counters.get(name, 0))


@dataclass
class EnergyBreakdown:
    dynamic: dict = field(default_factory=dict)  # component -> pJ
    static: dict = field(default_factory=dict)   # component -> pJ

    @property
    def dynamic_pj(self) -> float:
        return sum(self.dynamic.values())

    @property
    def static_pj(self) -> float:
        return sum(self.static.values())

    @property
    def total_pj(self) -> float:
        return self.dynamic_pj + self.static_pj

    @property
    def total_joules(self) -> float:
        return self.total_pj * 1e-12

    @property
    def total_without_dram_static_pj(self) -> float:
        return self.total_pj - self.static.get("dram", 0.0)


def active_components(backend: str, ecfg: EnergyConfig) -> set:
    """Components whose static power is charged for a run."""
    if backend == "vima":
        comps = {"core", "dram", "vima"}
        if not ecfg.idle_uncore_off:
            comps |= {"l1", "l2", "llc"}
        return comps
    return {"core", "l1", "l2", "llc", "dram"}


def total_energy(stats: SimStats, cfg: EnergyConfig, active: set | None = None) -> EnergyBreakdown:
    """Dynamic energy from event counts plus static power over the elapsed time.

    Caches are charged per line access; DRAM per bit moved, at the near-memory
    rate for sub-requests issued by the engine and the host rate otherwise.
    Power in watts times picoseconds is picojoules.
    """
    if active is None:
        active = active_components(stats.backend, cfg)
    bits = stats.line_bytes * 8
    dyn = {
        "l1": stats.count("l1_accesses") * cfg.l1_line_pj,
        "l2": stats.count("l2_accesses") * cfg.l2_line_pj,
        "llc": stats.count("llc_accesses") * cfg.llc_line_pj,
        "vima_cache": stats.count("vima_cache_line_accesses") * cfg.vima_cache_line_pj,
        "dram_vima": (stats.count("dram_vima_reads") + stats.count("dram_vima_writes")) * bits
        * cfg.dram_vima_pj_per_bit,
        "dram_host": (stats.count("dram_host_reads") + stats.count("dram_host_writes")) * bits
        * cfg.dram_x86_pj_per_bit,
    }
    t = stats.elapsed_ps
    n = stats.cores
    power = {
        "core": cfg.core_w * n,
        "l1": cfg.l1_w * n,
        "l2": cfg.l2_w * n,
        "llc": cfg.llc_w,
        "dram": cfg.dram_w,
        "vima": cfg.vima_logic_w + cfg.vima_cache_w,
    }
    static = {c: power[c] * t for c in COMPONENTS if c in active}
    return EnergyBreakdown(dyn, static)


def speedup(baseline: SimStats, candidate: SimStats) -> float:
    if candidate.elapsed_ps <= 0:
        raise ValueError("candidate run has zero elapsed time")
    return baseline.elapsed_ps / candidate.elapsed_ps


@dataclass
class ResultRow:
    kernel: str
    backend: str
    size_mb: float
    threads: int
    cycles: int
    elapsed_ps: int
    energy_pj: float
    speedup: float | None = None
    energy_ratio: float | None = None

    def cells(self):
        def num(v, digits):
            return "" if v is None else f"{v:.{digits}f}"
        return [self.kernel, self.backend, num(self.size_mb, 3), str(self.threads), str(self.cycles),
                str(self.elapsed_ps), num(self.energy_pj, 3), num(self.speedup, 6),
                num(self.energy_ratio, 6)]


def row_from_stats(stats: SimStats, energy: EnergyBreakdown, baseline=None, baseline_energy=None) -> ResultRow:
    row = ResultRow(stats.kernel, stats.backend, stats.size_mb, stats.threads, stats.cycles,
                    stats.elapsed_ps, energy.total_pj)
    if baseline is not None:
        row.speedup = speedup(baseline, stats)
    if baseline_energy is not None and baseline_energy.total_pj > 0:
        row.energy_ratio = energy.total_pj / baseline_energy.total_pj
    return row


def write_csv(rows, fh, header: bool = True):
    """Write CSV rows to an open text stream."""
    w = csv.writer(fh, lineterminator="\n")
    if header:
        w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.cells())


def emit_csv(rows, path, append: bool = False):
    """Write the header (unless appending to a non-empty file) and one line per row."""
    import os

    write_header = not append or not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a" if append else "w", newline="") as fh:
        write_csv(rows, fh, write_header)


def read_csv(path):
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append(ResultRow(
                rec["kernel"], rec["backend"], float(rec["size_mb"]), int(rec["threads"]),
                int(rec["cycles"]), int(rec["elapsed_ps"]), float(rec["energy_pj"]),
                float(rec["speedup"]) if rec["speedup"] else None,
                float(rec["energy_ratio"]) if rec["energy_ratio"] else None))
    return out


def detail_dump(stats: SimStats, energy: EnergyBreakdown) -> str:
    """Flat ``key = value`` listing of every counter and energy component."""
    lines = [f"kernel = {stats.kernel}", f"backend = {stats.backend}",
             f"size_mb = {stats.size_mb}", f"threads = {stats.threads}",
             f"elapsed_ps = {stats.elapsed_ps}", f"cycles = {stats.cycles}",
             f"phases_simulated = {stats.phases_simulated}", f"phases_total = {stats.phases_total}"]
    for k in sorted(stats.counters):
        lines.append(f"counter.{k} = {stats.counters[k]}")
    for k, v in energy.dynamic.items():
        lines.append(f"energy.dynamic.{k}_pj = {v:.3f}")
    for k, v in energy.static.items():
        lines.append(f"energy.static.{k}_pj = {v:.3f}")
    lines.append(f"energy.total_pj = {energy.total_pj:.3f}")
    lines.append(f"energy.total_without_dram_static_pj = {energy.total_without_dram_static_pj:.3f}")
    lines.append(f"faults = {len(stats.faults)}")
    return "\n".join(lines) + "\n"
