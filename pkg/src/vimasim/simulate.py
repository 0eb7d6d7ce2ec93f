"""One simulation: build the workload, drive the host/VIMA models phase by
phase, optionally extrapolate from a sample of phases, and check results."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import isa
from .config import MB, SimConfig, ValidationError, validate
from .dram import Dram, SparseMemory
from .hostmodel import HostModel, HostStream
from .kernels import Workload, generate
from .metrics import EnergyBreakdown, SimStats, total_energy
from .vima import VimaEngine

# counters that are maxima rather than sums
_NOT_ADDITIVE = ("max_issue_per_cycle", "vima_fetch_peak_mbps")


class VimaException(RuntimeError):
    """A VIMA instruction raised an exception during the run."""

    def __init__(self, faults):
        super().__init__(f"VIMA exception: {faults[0]['reason']}")
        self.faults = faults


@dataclass
class RunResult:
    stats: SimStats
    energy: EnergyBreakdown
    outputs: dict | None = None
    expected: dict | None = None
    mismatches: list = field(default_factory=list)
    phase_times: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches and not self.stats.faults


class Machine:
    """DRAM, host cores and (for VIMA runs) the engine, sharing one memory."""

    def __init__(self, cfg: SimConfig, cores: int = 1, vima: bool = False, functional: bool = True):
        self.cfg = cfg
        self.dram = Dram(cfg)
        self.memory = SparseMemory(cfg.topology.capacity_bytes)
        self.host = HostModel(cfg, self.dram, cores)
        self.engine = None
        if vima:
            self.engine = VimaEngine(cfg, self.dram, self.memory,
                                     coherence=self.host.invalidate_region, functional=functional)
            self.host.attach_vima_cache(self.engine.cache)

    def counters(self) -> dict:
        out = dict(self.host.counters())
        out.update(self.dram.stats)
        if self.engine is not None:
            for k, v in asdict(self.engine.stats).items():
                out[f"vima_{k}" if not k.startswith("vima") else k] = v
        return out


def _extrapolate(snap_prev: dict, snap_last: dict, remaining: int) -> dict:
    out = dict(snap_last)
    for k, v in snap_last.items():
        if k in _NOT_ADDITIVE:
            continue
        out[k] = v + remaining * (v - snap_prev.get(k, 0))
    return out


def _cold(snaps, llc_lines) -> bool:
    """True while the LLC is still filling.

    A data set that fits settles to a trickle of conflict misses; fewer than
    1/64 of the LLC's lines in the last phase counts as settled.
    """
    before, last = snaps[-2].get("llc_misses", 0), snaps[-1].get("llc_misses", 0)
    return before < llc_lines and last - before > llc_lines // 64


def simulate(cfg: SimConfig, check: bool = True, functional: bool = True,
             on_phase=None, corrupt_output: bool = False) -> RunResult:
    """Run the configured kernel/backend and return statistics and energy.

    With ``workload.sample_phases = m`` (0 < m < phases) only the first m
    phases are simulated, extended until the phase before the last one ends
    with a full LLC so the extrapolated phase is warm. The rest are
    extrapolated from the last simulated phase's duration and counter deltas,
    and the functional check covers the simulated phases.
    """
    errors = validate(cfg)
    if errors:
        raise ValidationError(errors)
    w = cfg.workload
    wl: Workload = generate(cfg)
    backend = w.backend
    cores = w.threads if backend != "vima" else 1
    m = Machine(cfg, cores, vima=backend == "vima", functional=functional)
    wl.dataset.load(m.memory)
    # symmetric for both backends; free on a freshly generated (cold) data set
    t, _ = m.host.coherence_prologue(wl.dataset.region_list(), 0)

    total = wl.n_phases
    sample = w.sample_phases if 0 < w.sample_phases < total else total
    # extrapolate only from a warm phase: keep going until the LLC has filled
    # (VIMA runs barely touch the host caches; their state is warm after one phase)
    llc_lines = cfg.topology.llc_bytes // cfg.topology.line_bytes if backend != "vima" else 0
    taps_data = {}
    snaps, times, faults = [m.counters()], [t], []
    p = 0
    while p < total and (p < sample or _cold(snaps, llc_lines)):
        plan = wl.phase(p, cores)

        def on_vima(idx, res, plan=plan):
            tag = plan.taps.get(idx)
            if tag is not None and res.status == "done":
                ins = plan.instrs[idx]
                taps_data[tag] = m.memory.read(ins.dst, ins.length)

        run = m.host.run(plan.streams, m.engine, plan.instrs, t0=t, on_vima=on_vima)
        t = run.elapsed
        times.append(t)
        snaps.append(m.counters())
        if on_phase is not None:
            on_phase(p, t)
        p += 1
        if run.faults:
            faults = run.faults
            break

    counters = snaps[-1]
    elapsed = t
    simulated = len(times) - 1
    if simulated < total and not faults:
        remaining = total - simulated
        elapsed = t + remaining * (times[-1] - times[-2])
        counters = _extrapolate(snaps[-2], snaps[-1], remaining)

    stats = SimStats(kernel=w.kernel, backend=backend, size_mb=w.footprint_bytes / MB,
                     threads=w.threads, cores=cores, elapsed_ps=int(elapsed),
                     cycle_ps=m.host.cycle_ps, line_bytes=cfg.topology.line_bytes,
                     counters=counters, faults=faults, phases_simulated=len(times) - 1,
                     phases_total=total)
    energy = total_energy(stats, cfg.energy)
    res = RunResult(stats, energy, phase_times=times)

    done = len(times) - 1 if not faults else len(times) - 2
    if check and functional and backend != "avx":
        res.expected = wl.kernel.reference(done)
        if backend == "vima":
            if corrupt_output:
                _corrupt(m.memory, wl)
            res.outputs = wl.kernel.collect(m.memory, taps_data, done)
        else:
            # the scalar backend's functional result is the loop oracle itself
            res.outputs = {k: v.copy() for k, v in res.expected.items()}
        res.mismatches = wl.kernel.check(res.outputs, res.expected)
    return res


def _corrupt(mem: SparseMemory, wl: Workload):
    """Flip one output byte (test hook for the equivalence gate)."""
    regs = wl.dataset.regions
    for name in ("out", "c", "p0"):
        if name in regs:
            a = regs[name].base
            b = mem.read(a, 1)
            mem.write(a, np.array([b[0] ^ 0xFF], np.uint8))
            return


def run_vima_program(cfg: SimConfig, instrs, memory: SparseMemory | None = None, t0: int = 0):
    """Dispatch a bare VIMA instruction list from one core.

    Returns ``(machine, host_run)``; on an exception the run stops precisely
    at the faulting instruction.
    """
    m = Machine(cfg, 1, vima=True)
    if memory is not None:
        m.memory = memory
        m.engine.memory = memory
    n = len(instrs)
    z = np.zeros(n, np.int32)
    s = HostStream(np.full(n, 8, np.int8), np.arange(n, dtype=np.int64), np.zeros(n, np.int16),
                   z, z.copy(), [n])
    run = m.host.run([s], m.engine, list(instrs), t0=t0)
    return m, run


def functional_prefix(instrs, memory: SparseMemory):
    """Apply instructions in order without timing (reference for precise faults)."""
    flags = isa.Flags()
    for ins in instrs:
        isa.apply(ins, memory, flags)
    return memory
