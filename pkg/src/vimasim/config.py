"""Simulation configuration.

Defaults reproduce the baseline/VIMA system table (32 vaults, 9-9-9-24-7
DRAM timing, 16 MB LLC, ...).  The text format is flat ``section.key = value``
lines with ``#`` comments; tuples are comma separated.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace

from .simcore import ClockDomain

KERNELS = ("memset", "memcopy", "vecsum", "stencil", "matmult", "knn", "mlp")
BACKENDS = ("scalar", "avx", "vima")
THREAD_COUNTS = (1, 2, 4, 8, 16, 32)

MB = 1 << 20


@dataclass(frozen=True)
class TopologyConfig:
    vaults: int = 32
    banks_per_vault: int = 8
    row_buffer_bytes: int = 256
    line_bytes: int = 64
    vector_bytes: int = 8192
    vima_cache_bytes: int = 65536
    links: int = 4
    link_burst_bytes: int = 8
    capacity_bytes: int = 4 << 30
    cores: int = 32
    l1_bytes: int = 64 << 10
    l1_ways: int = 8
    l2_bytes: int = 256 << 10
    l2_ways: int = 8
    llc_bytes: int = 16 << 20
    llc_ways: int = 16


@dataclass(frozen=True)
class TimingConfig:
    dram_cas: int = 9
    dram_rp: int = 9
    dram_rcd: int = 9
    dram_ras: int = 24
    dram_cwd: int = 7
    dram_burst_cycles: int = 8
    core_freq: int = 2_000_000_000
    vima_freq: int = 1_000_000_000
    dram_freq: int = 1_666_000_000
    link_freq: int = 8_000_000_000
    vima_tag_cycles: int = 1
    vima_transfer_beats: int = 8
    vima_cache_ports: int = 2
    fu_lat_int: tuple = (8, 12, 28)
    fu_lat_fp: tuple = (13, 13, 28)
    lanes: int = 256
    l1_lat: int = 2
    l2_lat: int = 10
    llc_lat: int = 22
    instruction_dispatch_lat: int = 1
    rob_entries: int = 168
    mob_read: int = 64
    mob_write: int = 36
    issue_width: int = 6
    # host functional units: (alu, mul, div) counts and latencies
    int_units: tuple = (3, 1, 1)
    int_lat: tuple = (1, 3, 32)
    fp_units: tuple = (1, 1, 1)
    fp_lat: tuple = (3, 5, 10)
    load_units: int = 2
    store_units: int = 1
    mshr_limit: int = 10
    # recorded front-end parameters; the core model does not use them
    fetch_buffer: int = 18
    decode_buffer: int = 28
    btb_entries: int = 4096


@dataclass(frozen=True)
class EnergyConfig:
    l1_line_pj: float = 194.0
    l2_line_pj: float = 340.0
    llc_line_pj: float = 3010.0
    vima_cache_line_pj: float = 194.0
    dram_x86_pj_per_bit: float = 10.8
    dram_vima_pj_per_bit: float = 4.8
    core_w: float = 6.0
    l1_w: float = 0.03
    l2_w: float = 0.13
    llc_w: float = 7.0
    dram_w: float = 4.0
    vima_logic_w: float = 3.2
    vima_cache_w: float = 0.134
    idle_uncore_off: bool = False


@dataclass(frozen=True)
class WorkloadConfig:
    kernel: str = "vecsum"
    backend: str = "vima"
    footprint_bytes: int = 4 * MB
    threads: int = 1
    seed: int = 20210901
    knn_k: int = 9
    knn_train: int = 32768
    knn_test: int = 256
    knn_features: int = 0  # 0: derived from footprint
    knn_folds: int = 1
    mlp_instances: int = 32768
    mlp_features: int = 0  # 0: derived from footprint
    mlp_neurons: int = 8
    mlp_folds: int = 1
    matmult_block_rows: int = 6
    memset_value: int = 7
    sample_phases: int = 0  # 0: simulate every phase
    full_line_store_no_rfo: bool = True


@dataclass(frozen=True)
class SimConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    timing: TimingConfig = field(default_factory=TimingConfig)
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)

    # Derived quantities are computed, never stored.
    @property
    def lines_per_vector(self) -> int:
        return self.topology.vector_bytes // self.topology.line_bytes

    @property
    def vima_cache_lines(self) -> int:
        return self.topology.vima_cache_bytes // self.topology.vector_bytes

    def elements_per_vector(self, width: int) -> int:
        return self.topology.vector_bytes // width

    @property
    def vima_beats(self) -> int:
        """Transfer beats for one vector of 32-bit elements through the lanes."""
        t = self.timing
        return max(1, -(-self.topology.vector_bytes // (4 * t.lanes)))

    @property
    def core_clock(self) -> ClockDomain:
        return ClockDomain("core", self.timing.core_freq)

    @property
    def vima_clock(self) -> ClockDomain:
        return ClockDomain("vima", self.timing.vima_freq)

    @property
    def dram_clock(self) -> ClockDomain:
        return ClockDomain("dram", self.timing.dram_freq)

    @property
    def link_clock(self) -> ClockDomain:
        return ClockDomain("link", self.timing.link_freq)


SECTIONS = {
    "topology": TopologyConfig,
    "timing": TimingConfig,
    "energy": EnergyConfig,
    "workload": WorkloadConfig,
}


class ConfigError(ValueError):
    """Malformed configuration text or override."""


class ValidationError(ValueError):
    """One or more configuration invariants are violated."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _field_types(cls):
    defaults = cls()
    return {f.name: type(getattr(defaults, f.name)) for f in fields(cls)}


def _parse_value(kind, raw: str):
    raw = raw.strip()
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind is int:
        return int(raw, 0)
    if kind is float:
        return float(raw)
    if kind is tuple:
        return tuple(int(p, 0) for p in raw.split(","))
    return raw


def _render_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def set_key(cfg: SimConfig, key: str, raw: str) -> SimConfig:
    """Return ``cfg`` with ``section.key`` set from its text form."""
    section, _, name = key.strip().partition(".")
    if section not in SECTIONS or not name:
        raise ConfigError(f"unknown key {key!r}")
    types = _field_types(SECTIONS[section])
    if name not in types:
        raise ConfigError(f"unknown key {key!r}")
    try:
        value = _parse_value(types[name], raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None
    sub = replace(getattr(cfg, section), **{name: value})
    return replace(cfg, **{section: sub})


def get_key(cfg: SimConfig, key: str):
    section, _, name = key.partition(".")
    return getattr(getattr(cfg, section), name)


def parse_config(text: str, base: SimConfig | None = None, check: bool = True) -> SimConfig:
    cfg = base or SimConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, raw = line.split("=", 1)
        try:
            cfg = set_key(cfg, key, raw)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    if check:
        errors = validate(cfg)
        if errors:
            raise ValidationError(errors)
    return cfg


def render_config(cfg: SimConfig) -> str:
    out = []
    for section in SECTIONS:
        sub = getattr(cfg, section)
        for f in fields(sub):
            out.append(f"{section}.{f.name} = {_render_value(getattr(sub, f.name))}")
    return "\n".join(out) + "\n"


def apply_overrides(cfg: SimConfig, overrides) -> SimConfig:
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        cfg = set_key(cfg, key, raw)
    return cfg


def _pow2(n):
    return n > 0 and n & (n - 1) == 0


def validate(cfg: SimConfig) -> list[str]:
    """Check every invariant and return all violations (empty when valid)."""
    errs = []
    t, tm, e, w = cfg.topology, cfg.timing, cfg.energy, cfg.workload

    for name in ("vaults", "banks_per_vault"):
        if not _pow2(getattr(t, name)):
            errs.append(f"topology.{name} must be a power of two")
    for name in ("line_bytes", "vector_bytes", "vima_cache_bytes", "links",
                 "link_burst_bytes", "capacity_bytes", "cores", "row_buffer_bytes"):
        if getattr(t, name) <= 0:
            errs.append(f"topology.{name} must be positive")
    if t.line_bytes > 0 and t.vector_bytes % t.line_bytes:
        errs.append("topology.vector_bytes must be a multiple of topology.line_bytes")
    if t.vector_bytes > 0 and t.vima_cache_bytes % t.vector_bytes:
        errs.append("topology.vima_cache_bytes must be a multiple of topology.vector_bytes")
    for lvl in ("l1", "l2", "llc"):
        size, ways = getattr(t, f"{lvl}_bytes"), getattr(t, f"{lvl}_ways")
        if ways <= 0 or t.line_bytes <= 0 or size % (ways * t.line_bytes):
            errs.append(f"topology.{lvl}_bytes must hold a whole number of {lvl}_ways-way sets")
        elif not _pow2(size // (ways * t.line_bytes)):
            errs.append(f"topology.{lvl} set count must be a power of two")

    for f in fields(tm):
        v = getattr(tm, f.name)
        if isinstance(v, tuple):
            if any(x <= 0 for x in v):
                errs.append(f"timing.{f.name} entries must be positive")
            if len(v) != 3:
                errs.append(f"timing.{f.name} needs three entries (alu,mul,div)")
        elif v <= 0:
            errs.append(f"timing.{f.name} must be positive")
    if tm.vima_cache_ports < 2:
        errs.append("timing.vima_cache_ports must be at least 2 (two-source operations)")

    for f in fields(e):
        v = getattr(e, f.name)
        if not isinstance(v, bool) and v < 0:
            errs.append(f"energy.{f.name} must be non-negative")

    if w.kernel not in KERNELS:
        errs.append(f"workload.kernel must be one of {', '.join(KERNELS)}")
    if w.backend not in BACKENDS:
        errs.append(f"workload.backend must be one of {', '.join(BACKENDS)}")
    if w.footprint_bytes <= 0:
        errs.append("workload.footprint_bytes must be positive")
    if w.threads not in THREAD_COUNTS:
        errs.append("workload.threads must be one of 1,2,4,8,16,32")
    elif w.threads > t.cores:
        errs.append("workload.threads exceeds topology.cores")
    elif w.backend == "vima" and w.threads != 1:
        errs.append("workload.threads must be 1 for the vima backend (one dispatching core)")
    for name in ("knn_k", "knn_train", "knn_test", "mlp_instances", "mlp_neurons",
                 "matmult_block_rows"):
        if getattr(w, name) <= 0:
            errs.append(f"workload.{name} must be positive")
    for name in ("knn_features", "mlp_features", "sample_phases", "knn_folds", "mlp_folds"):
        if getattr(w, name) < 0:
            errs.append(f"workload.{name} must be non-negative")
    return errs


def as_dict(cfg: SimConfig) -> dict:
    return dataclasses.asdict(cfg)
