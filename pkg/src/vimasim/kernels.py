"""Workload generators: memset, memcopy, vecsum, stencil, matmult, knn, mlp.

Every kernel is split into homogeneous phases (array chunks, row bands, row
blocks, test points, neurons).  A phase can be built as a VIMA instruction
stream (with any host-side glue ops) or as a host op stream of 64-byte
("avx") or element-sized ("scalar") memory and arithmetic ops, statically
partitioned over cores.  ``reference`` is the loop oracle that the VIMA
backend's memory image is checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import isa
from .config import KERNELS, SimConfig
from .dram import SparseMemory
from .hostmodel import ALU_F, ALU_I, LOAD, MUL_F, STORE, VIMA, HostStream
from .isa import ElementType, Opcode, VimaInstruction

BASE_ADDR = 1 << 20

# 64-bit LCG (Knuth's MMIX constants)
LCG_A = 6364136223846793005
LCG_C = 1442695040888963407
MASK64 = (1 << 64) - 1

STENCIL_CENTER = 0.6
STENCIL_NEIGHBOR = 0.1

# elements of each phase, per kernel
CHUNK_VECTORS = 64
STENCIL_BAND_ROWS = 8


class GenerationError(ValueError):
    """The footprint or shape parameters cannot form the requested kernel."""


# ---------------------------------------------------------------------------
# reproducible data

def _mix(seed: int, stream: int) -> int:
    z = (seed * 0x9E3779B97F4A7C15 + stream * 0xBF58476D1CE4E5B9 + 1) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def lcg_u64(seed: int, n: int, stream: int = 0) -> np.ndarray:
    """``n`` successive LCG states after a seed/stream-derived start.

    The closed form x_i = a^i x_0 + c_i is built by block doubling, so large
    arrays cost a few vector multiplies rather than a Python loop.
    """
    if n <= 0:
        return np.zeros(0, np.uint64)
    mult = np.array([LCG_A], np.uint64)
    add = np.array([LCG_C], np.uint64)
    while mult.size < n:
        ml, cl = mult[-1], add[-1]
        mult = np.concatenate([mult, ml * mult])
        add = np.concatenate([add, ml * add + cl])
    x0 = np.uint64(_mix(seed, stream))
    return mult[:n] * x0 + add[:n]


def uniform(seed: int, n: int, stream: int, dtype=np.float64, lo=0.0, hi=1.0) -> np.ndarray:
    x = lcg_u64(seed, n, stream)
    if np.dtype(dtype) == np.float32:
        u = (x >> np.uint64(40)).astype(np.float32) * np.float32(2.0 ** -24)
        return (np.float32(lo) + np.float32(hi - lo) * u).astype(np.float32)
    u = (x >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
    return lo + (hi - lo) * u


def random_i32(seed: int, n: int, stream: int) -> np.ndarray:
    x = lcg_u64(seed, n, stream)
    return (x >> np.uint64(32)).astype(np.uint32).view(np.int32)


# ---------------------------------------------------------------------------
# layout and data set

@dataclass(frozen=True)
class Region:
    name: str
    base: int
    dtype: np.dtype
    count: int
    nbytes: int  # allocated bytes (vector multiple)

    def addr(self, index: int) -> int:
        return self.base + index * self.dtype.itemsize


class Layout:
    def __init__(self, vector_bytes: int, base: int = BASE_ADDR):
        self.vb = vector_bytes
        self.next = base
        self.regions: dict[str, Region] = {}

    def alloc(self, name, dtype, count, pad_vectors=0) -> Region:
        dt = np.dtype(dtype)
        nbytes = -(-count * dt.itemsize // self.vb) * self.vb
        reg = Region(name, self.next, dt, count, nbytes)
        self.next += nbytes + pad_vectors * self.vb
        self.regions[name] = reg
        return reg


@dataclass
class Dataset:
    kernel: str
    seed: int
    shape: dict
    regions: dict
    init: dict = field(default_factory=dict)  # region name -> initial contents

    def load(self, mem: SparseMemory):
        for name, arr in self.init.items():
            mem.write(self.regions[name].base, np.ascontiguousarray(arr))

    def region_list(self):
        return [(r.base, r.nbytes) for r in self.regions.values()]

    @property
    def footprint(self) -> int:
        return sum(r.count * r.dtype.itemsize for r in self.regions.values())


@dataclass
class PhasePlan:
    streams: list  # one HostStream per core
    instrs: list  # VIMA instructions referenced by VIMA ops
    taps: dict = field(default_factory=dict)  # instr index -> tag for captured results


# ---------------------------------------------------------------------------
# op stream helpers

def tiled(n: int, slots) -> HostStream:
    """Repeat a template ``n`` times.

    ``slots`` holds ``(kind, addr, size, d0, d1)``; ``addr`` may be a scalar or
    a length-``n`` array, deps are backward distances in the flat stream.
    Deps reaching before the start of the stream are dropped.
    """
    T = len(slots)
    total = n * T
    kind = np.empty(total, np.int8)
    addr = np.zeros(total, np.int64)
    size = np.zeros(total, np.int16)
    d0 = np.zeros(total, np.int32)
    d1 = np.zeros(total, np.int32)
    for s, (k, a, sz, x0, x1) in enumerate(slots):
        kind[s::T] = k
        addr[s::T] = a
        size[s::T] = sz
        d0[s::T] = x0
        d1[s::T] = x1
    if total:
        idx = np.arange(total)
        d0[idx - d0 < 0] = 0
        d1[idx - d1 < 0] = 0
    return HostStream(kind, addr, size, d0, d1, [total])


def split_range(n: int, parts: int):
    b = np.linspace(0, n, parts + 1).astype(np.int64)
    return [(int(b[i]), int(b[i + 1])) for i in range(parts)]


def _hsum_ops(width: int, esize: int) -> int:
    """Shuffle/add steps to reduce one register of ``width`` bytes."""
    lanes = max(1, width // esize)
    return int(math.log2(lanes))


# ---------------------------------------------------------------------------
# kernels

class Kernel:
    name = ""
    etype = ElementType.i32

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.w = cfg.workload
        self.vb = cfg.topology.vector_bytes
        self.line = cfg.topology.line_bytes
        self.esize = self.etype.width
        self.ds = self.build()

    # subclasses fill these in
    def build(self) -> Dataset:
        raise NotImplementedError

    @property
    def n_phases(self) -> int:
        raise NotImplementedError

    def vima_phase(self, p: int) -> PhasePlan:
        raise NotImplementedError

    def host_phase(self, p: int, cores: int, width: int) -> PhasePlan:
        raise NotImplementedError

    def reference(self, phases: int) -> dict:
        raise NotImplementedError

    def collect(self, mem: SparseMemory, taps: dict, phases: int) -> dict:
        raise NotImplementedError

    def tolerance(self):
        """``None`` for exact comparison, else a relative tolerance."""
        return None

    # helpers -------------------------------------------------------------
    def program(self) -> isa.VimaProgram:
        return isa.VimaProgram(self.vb)

    def check(self, actual: dict, expected: dict):
        """Return a list of mismatch descriptions (empty when equal)."""
        errs = []
        tol = self.tolerance()
        for name, exp in expected.items():
            got = actual.get(name)
            if got is None or got.shape != exp.shape:
                errs.append(f"{name}: shape {None if got is None else got.shape} != {exp.shape}")
                continue
            if tol is None:
                bad = np.flatnonzero(got.view(np.uint8) != exp.view(np.uint8)) if got.size else []
                if len(bad):
                    errs.append(f"{name}: {len(bad)} differing bytes, first at byte {int(bad[0])}")
            else:
                scale = np.maximum(1.0, np.abs(exp.astype(np.float64)))
                diff = np.abs(got.astype(np.float64) - exp.astype(np.float64))
                if not np.all(diff <= tol * scale):
                    errs.append(f"{name}: max relative error {float((diff / scale).max()):.3g} > {tol}")
        return errs


def _vima_only(instrs) -> HostStream:
    n = len(instrs)
    z = np.zeros(n, np.int32)
    return HostStream(np.full(n, VIMA, np.int8), np.arange(n, dtype=np.int64),
                      np.zeros(n, np.int16), z, z.copy(), [n])


class _Streaming(Kernel):
    """Shared shape for memset, memcopy and vecsum: whole-vector passes."""

    n_inputs = 0

    def build(self):
        fp = self.w.footprint_bytes
        narrays = 2 if self.n_inputs < 2 else 3
        nvec = fp // narrays // self.vb
        if nvec < 1:
            raise GenerationError(f"{self.name}: footprint {fp} B is below one vector per array")
        count = nvec * self.vb // self.esize
        lay = Layout(self.vb)
        init = {}
        names = ["a", "b"][:max(self.n_inputs, 1)]
        for i, nm in enumerate(names):
            lay.alloc(nm, self.etype.dtype, count)
            init[nm] = random_i32(self.w.seed, count, i + 1)
        lay.alloc("out", self.etype.dtype, count)
        if self.n_inputs == 0:
            # memset keeps a (never read) source array so both copy kernels share one layout
            init.pop("a")
        return Dataset(self.name, self.w.seed, {"vectors": nvec, "elements": count}, lay.regions, init)

    @property
    def nvec(self):
        return self.ds.shape["vectors"]

    @property
    def n_phases(self):
        return -(-self.nvec // CHUNK_VECTORS)

    def _vec_range(self, p):
        return p * CHUNK_VECTORS, min((p + 1) * CHUNK_VECTORS, self.nvec)

    def _emit(self, prog, v):
        raise NotImplementedError

    def vima_phase(self, p):
        prog = self.program()
        lo, hi = self._vec_range(p)
        for v in range(lo, hi):
            self._emit(prog, v * self.vb)
        return PhasePlan([_vima_only(prog)], list(prog))

    def _host_slots(self, off, width):
        raise NotImplementedError

    def host_phase(self, p, cores, width):
        # static partition of the whole array; phase p is the same fraction of
        # every core's slice (with one core this is exactly the VIMA chunk)
        lo, hi = self._vec_range(p)
        total = self.nvec * self.vb // width
        first = lo * self.vb // width
        last = hi * self.vb // width
        streams = []
        for a, b in split_range(total, cores):
            s0 = a + (b - a) * first // total
            s1 = a + (b - a) * last // total
            off = np.arange(s0, s1, dtype=np.int64) * width
            streams.append(tiled(s1 - s0, self._host_slots(off, width)))
        return PhasePlan(streams, [])

    def _elements(self, phases):
        _, hi = self._vec_range(min(phases, self.n_phases) - 1) if phases else (0, 0)
        return hi * self.vb // self.esize

    def collect(self, mem, taps, phases):
        n = self._elements(phases)
        out = self.ds.regions["out"]
        return {"out": mem.read_array(out.base, out.dtype, n).copy()}


class Memset(_Streaming):
    name = "memset"
    n_inputs = 0

    def _emit(self, prog, off):
        prog.emit(Opcode.MOV_IMM, self.etype, self.ds.regions["out"].base + off, imm=self.w.memset_value)

    def _host_slots(self, off, width):
        return [(STORE, self.ds.regions["out"].base + off, width, 0, 0)]

    def reference(self, phases):
        n = self._elements(phases)
        out = np.empty(n, self.etype.dtype)
        for i in range(n):
            out[i] = self.w.memset_value
        return {"out": out}


class Memcopy(_Streaming):
    name = "memcopy"
    n_inputs = 1

    def _emit(self, prog, off):
        r = self.ds.regions
        prog.emit(Opcode.ADD_SCALAR, self.etype, r["out"].base + off, r["a"].base + off, imm=0)

    def _host_slots(self, off, width):
        r = self.ds.regions
        return [(LOAD, r["a"].base + off, width, 0, 0),
                (STORE, r["out"].base + off, width, 1, 0)]

    def reference(self, phases):
        n = self._elements(phases)
        src = self.ds.init["a"]
        out = np.empty(n, self.etype.dtype)
        out[:] = src[:n]
        return {"out": out}


class Vecsum(_Streaming):
    name = "vecsum"
    n_inputs = 2

    def _emit(self, prog, off):
        r = self.ds.regions
        prog.emit(Opcode.ADD, self.etype, r["out"].base + off, r["a"].base + off, r["b"].base + off)

    def _host_slots(self, off, width):
        r = self.ds.regions
        return [(LOAD, r["a"].base + off, width, 0, 0),
                (LOAD, r["b"].base + off, width, 0, 0),
                (ALU_I, 0, 0, 2, 1),
                (STORE, r["out"].base + off, width, 1, 0)]

    def reference(self, phases):
        n = self._elements(phases)
        a, b = self.ds.init["a"][:n], self.ds.init["b"][:n]
        out = np.empty(n, self.etype.dtype)
        with np.errstate(over="ignore"):
            for i in range(0, n, 4096):
                out[i:i + 4096] = a[i:i + 4096] + b[i:i + 4096]  # wraps like the hardware
        return {"out": out}


class Stencil(Kernel):
    """5-point stencil over a row-major f64 grid.

    Neighbours are taken at flat offsets of one element and one padded row;
    the grid is framed by zero guard rows, so the first/last element of a row
    sees the adjacent row's edge element (or padding) as its west/east
    neighbour.
    """

    name = "stencil"
    etype = ElementType.f64

    def build(self):
        fp = self.w.footprint_bytes
        n = int(math.isqrt(fp // 16))
        if n < 2:
            raise GenerationError("stencil: footprint too small for a 2x2 grid")
        per_vec = self.vb // 8
        stride = -(-n // per_vec) * per_vec
        rows = n + 2
        lay = Layout(self.vb)
        lay.alloc("grid", np.float64, rows * stride)
        lay.alloc("out", np.float64, n * stride)
        grid = np.zeros((rows, stride))
        grid[1:n + 1, :n] = uniform(self.w.seed, n * n, 1).reshape(n, n)
        shape = {"n": n, "stride": stride, "segments": stride // per_vec}
        return Dataset(self.name, self.w.seed, shape, lay.regions, {"grid": grid.ravel()})

    @property
    def n_phases(self):
        return -(-self.ds.shape["n"] // STENCIL_BAND_ROWS)

    def _rows(self, p):
        return p * STENCIL_BAND_ROWS, min((p + 1) * STENCIL_BAND_ROWS, self.ds.shape["n"])

    def vima_phase(self, p):
        sh, r = self.ds.shape, self.ds.regions
        rb = sh["stride"] * 8
        prog = self.program()
        et = self.etype
        for i in range(*self._rows(p)):
            for v in range(sh["segments"]):
                c = r["grid"].base + (i + 1) * rb + v * self.vb
                dst = r["out"].base + i * rb + v * self.vb
                prog.emit(Opcode.MUL_SCALAR, et, dst, c, imm=STENCIL_CENTER)
                for src in (c - rb, c + rb, c - 8, c + 8):
                    prog.emit(Opcode.MAC_SCALAR, et, dst, src, imm=STENCIL_NEIGHBOR)
        return PhasePlan([_vima_only(prog)], list(prog))

    def host_phase(self, p, cores, width):
        sh, r = self.ds.shape, self.ds.regions
        rb = sh["stride"] * 8
        r0, r1 = self._rows(p)
        per_row = -(-sh["n"] * 8 // width)
        total = (r1 - r0) * per_row
        streams = []
        for a, b in split_range(total, cores):
            it = np.arange(a, b, dtype=np.int64)
            row = r0 + it // per_row
            col = (it % per_row) * width
            c = r["grid"].base + (row + 1) * rb + col
            o = r["out"].base + row * rb + col
            slots = [(LOAD, c, width, 0, 0), (LOAD, c - rb, width, 0, 0), (LOAD, c + rb, width, 0, 0),
                     (LOAD, c - 8, width, 0, 0), (LOAD, c + 8, width, 0, 0),
                     (MUL_F, 0, 0, 5, 0),            # 0.6 * center
                     (ALU_F, 0, 0, 5, 4),            # north + south
                     (ALU_F, 0, 0, 4, 3),            # west + east
                     (ALU_F, 0, 0, 2, 1),
                     (MUL_F, 0, 0, 1, 0),            # 0.1 * neighbours
                     (ALU_F, 0, 0, 5, 1),
                     (STORE, o, width, 1, 0)]
            streams.append(tiled(b - a, slots))
        return PhasePlan(streams, [])

    def _done_rows(self, phases):
        return self._rows(phases - 1)[1] if phases else 0

    def reference(self, phases):
        sh = self.ds.shape
        stride, rows = sh["stride"], self._done_rows(phases)
        x = self.ds.init["grid"]
        flat = np.empty(rows * stride)
        for i in range(rows):
            c = (i + 1) * stride
            o = x[c:c + stride] * STENCIL_CENTER
            for off in (-stride, stride, -1, 1):
                o = o + STENCIL_NEIGHBOR * x[c + off:c + off + stride]
            flat[i * stride:(i + 1) * stride] = o
        return {"out": flat}

    def collect(self, mem, taps, phases):
        out = self.ds.regions["out"]
        n = self._done_rows(phases) * self.ds.shape["stride"]
        return {"out": mem.read_array(out.base, np.float64, n).copy()}


class Matmult(Kernel):
    """C = A x B, f64, accumulated row-wise: C[i][*] += A[i][k] * B[k][*].

    ``matmult_block_rows`` C rows share each B row; both backends walk the
    same (row block, k, row) loop.
    """

    name = "matmult"
    etype = ElementType.f64

    def build(self):
        fp = self.w.footprint_bytes
        n = int(math.isqrt(fp // 24))
        if n < 2:
            raise GenerationError("matmult: footprint too small for 2x2 matrices")
        per_vec = self.vb // 8
        stride = -(-n // per_vec) * per_vec
        lay = Layout(self.vb)
        init = {}
        for s, nm in enumerate(("a", "b")):
            lay.alloc(nm, np.float64, n * stride)
            m = np.zeros((n, stride))
            m[:, :n] = uniform(self.w.seed, n * n, s + 1).reshape(n, n)
            init[nm] = m.ravel()
        lay.alloc("c", np.float64, n * stride)
        shape = {"n": n, "stride": stride, "segments": stride // per_vec,
                 "block": min(self.w.matmult_block_rows, n)}
        return Dataset(self.name, self.w.seed, shape, lay.regions, init)

    @property
    def n_phases(self):
        sh = self.ds.shape
        return -(-sh["n"] // sh["block"])

    def _rows(self, p):
        bk = self.ds.shape["block"]
        return p * bk, min((p + 1) * bk, self.ds.shape["n"])

    def vima_phase(self, p):
        sh, r = self.ds.shape, self.ds.regions
        n, rb = sh["n"], sh["stride"] * 8
        a = self.ds.init["a"]
        rows = range(*self._rows(p))
        prog = self.program()
        kinds, addrs, sizes, deps = [], [], [], []
        for v in range(sh["segments"]):
            for k in range(n):
                for i in rows:
                    # the scalar operand comes from a host load feeding the immediate
                    kinds.append(LOAD)
                    addrs.append(r["a"].base + i * rb + k * 8)
                    sizes.append(8)
                    deps.append(0)
                    kinds.append(VIMA)
                    addrs.append(len(prog))
                    sizes.append(0)
                    deps.append(1)
                    prog.emit(Opcode.MAC_SCALAR, self.etype, r["c"].base + i * rb + v * self.vb,
                              r["b"].base + k * rb + v * self.vb, imm=float(a[i * sh["stride"] + k]))
        m = len(kinds)
        s = HostStream(np.array(kinds, np.int8), np.array(addrs, np.int64), np.array(sizes, np.int16),
                       np.array(deps, np.int32), np.zeros(m, np.int32), [m])
        return PhasePlan([s], list(prog))

    def host_phase(self, p, cores, width):
        sh, r = self.ds.shape, self.ds.regions
        n, rb = sh["n"], sh["stride"] * 8
        rows = list(range(*self._rows(p)))
        R = len(rows)
        nlines = -(-n * 8 // width)
        streams = []
        for lo, hi in split_range(nlines, cores):
            k = np.arange(n, dtype=np.int64)
            slots = []
            for i in rows:
                slots.append((LOAD, r["a"].base + i * rb + k * 8, 8, 0, 0))
            for ln in range(lo, hi):
                col = ln * width
                slots.append((LOAD, r["b"].base + k * rb + col, width, 0, 0))
                bpos = len(slots) - 1
                for j, i in enumerate(rows):
                    here = len(slots)
                    slots.append((LOAD, r["c"].base + i * rb + col, width, 0, 0))
                    slots.append((MUL_F, 0, 0, here + 1 - j, here + 1 - bpos))
                    slots.append((ALU_F, 0, 0, 1, 2))
                    slots.append((STORE, r["c"].base + i * rb + col, width, 1, 0))
            if hi <= lo:
                slots = []
            streams.append(tiled(n if slots else 0, slots))
        return PhasePlan(streams, [])

    def _done_rows(self, phases):
        return self._rows(phases - 1)[1] if phases else 0

    def reference(self, phases):
        sh = self.ds.shape
        n, stride = sh["n"], sh["stride"]
        rows = self._done_rows(phases)
        a = self.ds.init["a"].reshape(n, stride)
        b = self.ds.init["b"].reshape(n, stride)
        c = np.zeros((rows, stride))
        for k in range(n):
            c += a[:rows, k:k + 1] * b[k]
        return {"c": c.ravel()}

    def collect(self, mem, taps, phases):
        reg = self.ds.regions["c"]
        n = self._done_rows(phases) * self.ds.shape["stride"]
        return {"c": mem.read_array(reg.base, np.float64, n).copy()}


class _Reduction(Kernel):
    """Shared machinery for knn and mlp: per-instance dot-product style work.

    On VIMA each 8 KB chunk of instance-major data is combined element-wise
    with a tiled operand, squared or multiplied, folded by shifted adds, and
    the host finishes each instance's horizontal sum.  VIMA work for chunk c
    is placed before the host reduction of chunk c-1, and the partial-vector
    buffers alternate, so the two overlap.
    """

    etype = ElementType.f32
    n_instances = 0
    folds = 0

    def _features(self, explicit, instances):
        fp = self.w.footprint_bytes
        f = explicit or fp // (instances * 4)
        per_vec = self.vb // 4
        if f < 2 or f & (f - 1) or per_vec % f:
            raise GenerationError(f"{self.name}: feature count {f} must be a power of two "
                                  f"dividing {per_vec}")
        if (instances * f) % per_vec:
            raise GenerationError(f"{self.name}: instances do not fill whole vectors")
        if f >> self.folds < 1:
            raise GenerationError(f"{self.name}: too many folds for {f} features")
        return f

    def _alloc_buffers(self, lay):
        # each partial buffer is followed by a zero vector read by the shifted fold
        lay.alloc("p0", np.float32, self.vb // 4, pad_vectors=1)
        lay.alloc("p1", np.float32, self.vb // 4, pad_vectors=1)

    @property
    def chunks(self):
        return self.ds.shape["instances"] * self.ds.shape["features"] * 4 // self.vb

    def _fold_ops(self, prog, buf):
        f = self.ds.shape["features"]
        for i in range(self.folds):
            shift = (f >> (i + 1)) * 4
            prog.emit(Opcode.ADD, self.etype, buf, buf, buf + shift)

    def _useful(self):
        return self.ds.shape["features"] >> self.folds

    def _host_reduce_template(self, buf, epilogue):
        """Host ops reducing one partial vector at ``buf``.

        Returns slots with addresses relative to ``buf`` (added by the caller).
        """
        f = self.ds.shape["features"]
        ub = self._useful() * 4
        per = self.vb // (f * 4)
        slots, loaded = [], {}
        hs = _hsum_ops(min(ub, self.line), 4)
        for n in range(per):
            start = n * f * 4
            acc = -1
            for ln in range(start // self.line, (start + ub - 1) // self.line + 1):
                if ln not in loaded:
                    slots.append((LOAD, ln * self.line, self.line, 0, 0))
                    loaded[ln] = len(slots) - 1
                cur = len(slots)
                slots.append((ALU_F, 0, 0, cur - loaded[ln], (cur - acc) if acc >= 0 else 0))
                acc = cur
            for _ in range(hs):
                slots.append((ALU_F, 0, 0, 1, 0))
            slots.extend(epilogue(n))
        return slots

    def _vima_chunk(self, prog, c, buf, p):
        raise NotImplementedError

    def _epilogue(self, p, chunk):
        raise NotImplementedError

    def vima_phase(self, p):
        prog = self.program()
        bufs = [self.ds.regions["p0"].base, self.ds.regions["p1"].base]
        parts, taps = [], {}
        nch = self.chunks
        templ = None

        def host_part(c):
            nonlocal templ
            if templ is None:
                templ = self._host_reduce_template(0, lambda n: self._epilogue(p, 0)(n))
            base = bufs[c % 2]
            kinds = np.array([s[0] for s in templ], np.int8)
            addr = np.array([s[1] for s in templ], np.int64)
            addr = np.where(kinds == LOAD, addr + base, addr)
            size = np.array([s[2] for s in templ], np.int16)
            d0 = np.array([s[3] for s in templ], np.int32)
            d1 = np.array([s[4] for s in templ], np.int32)
            # per-instance stores (mlp) need chunk-specific addresses
            st = kinds == STORE
            if st.any():
                addr[st] = [a + self._store_offset(p, c) for a in addr[st]]
            return HostStream(kinds, addr, size, d0, d1, [len(templ)])

        for c in range(nch + 1):
            if c < nch:
                first = len(prog)
                self._vima_chunk(prog, c, bufs[c % 2], p)
                taps[len(prog) - 1] = (p, c)
                k = len(prog) - first
                z = np.zeros(k, np.int32)
                parts.append(HostStream(np.full(k, VIMA, np.int8), np.arange(first, len(prog), dtype=np.int64),
                                        np.zeros(k, np.int16), z, z.copy(), [k]))
            if c > 0:
                parts.append(host_part(c - 1))
        s = HostStream.concat(parts)
        s.phase_ends = [len(s)]
        return PhasePlan([s], list(prog), taps)

    def _store_offset(self, p, c):
        return 0

    def _host_instance_slots(self, p, width):
        """Per-instance host template for the baseline backends."""
        f = self.ds.shape["features"]
        seg = min(width, f * 4)
        nl = f * 4 // seg
        other = self._other_operand(p)
        slots = []
        for l in range(nl):
            base = len(slots)
            slots.append((LOAD, ("x", l * seg), seg, 0, 0))
            slots.append((LOAD, other + l * seg, seg, 0, 0))
            slots.extend(self._combine_ops())
            last = len(slots)
            slots.append((ALU_F, 0, 0, 1, (last - prev) if l else 0))
            prev = last
        for _ in range(_hsum_ops(seg, 4)):
            slots.append((ALU_F, 0, 0, 1, 0))
        return slots

    def host_phase(self, p, cores, width):
        sh = self.ds.shape
        f, N = sh["features"], sh["instances"]
        x = self.ds.regions["x"].base
        body = self._host_instance_slots(p, width)
        epi = self._epilogue(p, None)
        streams = []
        for lo, hi in split_range(N, cores):
            inst = np.arange(lo, hi, dtype=np.int64)
            slots = []
            for k, a, sz, d0, d1 in body:
                if isinstance(a, tuple):
                    a = x + inst * f * 4 + a[1]
                slots.append((k, a, sz, d0, d1))
            for k, a, sz, d0, d1 in epi(inst):
                slots.append((k, a, sz, d0, d1))
            streams.append(tiled(hi - lo, slots))
        return PhasePlan(streams, [])


class Knn(_Reduction):
    """k-nearest neighbours: squared distances on VIMA, selection on the host."""

    name = "knn"

    def build(self):
        w = self.w
        self.folds = w.knn_folds
        f = self._features(w.knn_features, w.knn_train)
        per = self.vb // (f * 4)
        lay = Layout(self.vb)
        x = uniform(w.seed, w.knn_train * f, 1, np.float32)
        t = uniform(w.seed, w.knn_test * f, 2, np.float32)
        lay.alloc("x", np.float32, x.size)
        lay.alloc("test", np.float32, t.size)
        # every test point pre-tiled to a full vector: the operand of VIMA SUB
        lay.alloc("tiles", np.float32, w.knn_test * self.vb // 4)
        self._alloc_buffers(lay)
        tiles = np.tile(t.reshape(w.knn_test, 1, f), (1, per, 1)).ravel()
        shape = {"features": f, "instances": w.knn_train, "tests": w.knn_test, "k": w.knn_k}
        return Dataset(self.name, w.seed, shape, lay.regions, {"x": x, "test": t, "tiles": tiles})

    @property
    def n_phases(self):
        return self.ds.shape["tests"]

    def _vima_chunk(self, prog, c, buf, p):
        r = self.ds.regions
        tile = r["tiles"].base + p * self.vb
        prog.emit(Opcode.SUB, self.etype, buf, r["x"].base + c * self.vb, tile)
        prog.emit(Opcode.MUL, self.etype, buf, buf, buf)
        self._fold_ops(prog, buf)

    def _epilogue(self, p, chunk):
        # compare against the current K-th best, then conditional insert
        def ops(n):
            return [(ALU_F, 0, 0, 1, 0), (ALU_I, 0, 0, 1, 0)]
        return ops

    def _other_operand(self, p):
        return self.ds.regions["test"].base + p * self.ds.shape["features"] * 4

    def _combine_ops(self):
        return [(ALU_F, 0, 0, 2, 1), (MUL_F, 0, 0, 1, 1)]

    def tolerance(self):
        return 1e-6

    def _select(self, dist):
        k = self.ds.shape["k"]
        idx = np.lexsort((np.arange(dist.size), dist))[:k]
        return idx, dist[idx]

    def reference(self, phases):
        sh = self.ds.shape
        f = sh["features"]
        x = self.ds.init["x"].reshape(sh["instances"], f)
        t = self.ds.init["test"].reshape(sh["tests"], f)
        dists = []
        for p in range(phases):
            d = np.zeros(sh["instances"])
            for j in range(f):
                diff = x[:, j] - t[p, j]
                d += (diff * diff).astype(np.float64)
            dists.append(self._select(d)[1])
        return {"distances": np.array(dists).reshape(phases, sh["k"])}

    def collect(self, mem, taps, phases):
        sh = self.ds.shape
        f, u = sh["features"], self._useful()
        per = self.vb // (f * 4)
        out = []
        for p in range(phases):
            d = np.zeros(sh["instances"])
            for c in range(self.chunks):
                vec = taps[(p, c)].view(np.float32).reshape(per, f)[:, :u]
                d[c * per:(c + 1) * per] = vec.astype(np.float64).sum(axis=1)
            out.append(self._select(d)[1])
        return {"distances": np.array(out).reshape(phases, sh["k"])}


class Mlp(_Reduction):
    """One dense layer, relu(X @ W), evaluated one neuron per pass."""

    name = "mlp"

    def build(self):
        w = self.w
        self.folds = w.mlp_folds
        f = self._features(w.mlp_features, w.mlp_instances)
        per = self.vb // (f * 4)
        lay = Layout(self.vb)
        x = uniform(w.seed, w.mlp_instances * f, 1, np.float32)
        wt = uniform(w.seed, w.mlp_neurons * f, 2, np.float32, -1.0, 1.0)  # neuron-major W^T
        lay.alloc("x", np.float32, x.size)
        lay.alloc("wt", np.float32, wt.size)
        lay.alloc("tiles", np.float32, w.mlp_neurons * self.vb // 4)
        lay.alloc("out", np.float32, w.mlp_neurons * w.mlp_instances)
        self._alloc_buffers(lay)
        tiles = np.tile(wt.reshape(w.mlp_neurons, 1, f), (1, per, 1)).ravel()
        shape = {"features": f, "instances": w.mlp_instances, "neurons": w.mlp_neurons}
        return Dataset(self.name, w.seed, shape, lay.regions, {"x": x, "wt": wt, "tiles": tiles})

    @property
    def n_phases(self):
        return self.ds.shape["neurons"]

    def _vima_chunk(self, prog, c, buf, p):
        r = self.ds.regions
        prog.emit(Opcode.MUL, self.etype, buf, r["x"].base + c * self.vb, r["tiles"].base + p * self.vb)
        self._fold_ops(prog, buf)

    def _out_addr(self, p, inst):
        return self.ds.regions["out"].base + (p * self.ds.shape["instances"] + inst) * 4

    def _epilogue(self, p, chunk):
        # relu, then store the activation
        def ops(n):
            return [(ALU_F, 0, 0, 1, 0), (STORE, self._out_addr(p, n), 4, 1, 0)]
        return ops

    def _store_offset(self, p, c):
        per = self.vb // (self.ds.shape["features"] * 4)
        return c * per * 4

    def _other_operand(self, p):
        return self.ds.regions["wt"].base + p * self.ds.shape["features"] * 4

    def _combine_ops(self):
        return [(MUL_F, 0, 0, 2, 1)]

    def tolerance(self):
        return 1e-6

    def reference(self, phases):
        sh = self.ds.shape
        f = sh["features"]
        x = self.ds.init["x"].reshape(sh["instances"], f)
        wt = self.ds.init["wt"].reshape(sh["neurons"], f)
        out = np.zeros((phases, sh["instances"]))
        for j in range(phases):
            acc = np.zeros(sh["instances"])
            for i in range(f):
                acc += (x[:, i] * wt[j, i]).astype(np.float64)
            out[j] = np.maximum(acc, 0.0)
        return {"out": out.astype(np.float32)}

    def collect(self, mem, taps, phases):
        sh = self.ds.shape
        f, u = sh["features"], self._useful()
        per = self.vb // (f * 4)
        out = np.zeros((phases, sh["instances"]))
        for j in range(phases):
            for c in range(self.chunks):
                vec = taps[(j, c)].view(np.float32).reshape(per, f)[:, :u]
                out[j, c * per:(c + 1) * per] = vec.astype(np.float64).sum(axis=1)
        res = np.maximum(out, 0.0).astype(np.float32)
        # the host writes activations back to memory as it goes
        reg = self.ds.regions["out"]
        mem.write(reg.base, res.ravel())
        return {"out": res}


KERNEL_CLASSES = {k.name: k for k in (Memset, Memcopy, Vecsum, Stencil, Matmult, Knn, Mlp)}
assert tuple(KERNEL_CLASSES) == KERNELS


def make_kernel(cfg: SimConfig) -> Kernel:
    name = cfg.workload.kernel
    if name not in KERNEL_CLASSES:
        raise GenerationError(f"unknown kernel {name!r}")
    return KERNEL_CLASSES[name](cfg)


@dataclass
class Workload:
    kernel: Kernel
    backend: str

    @property
    def dataset(self) -> Dataset:
        return self.kernel.ds

    @property
    def n_phases(self) -> int:
        return self.kernel.n_phases

    def phase(self, p: int, cores: int = 1) -> PhasePlan:
        if self.backend == "vima":
            return self.kernel.vima_phase(p)
        width = 64 if self.backend == "avx" else self.kernel.esize
        return self.kernel.host_phase(p, cores, width)

    def vima_program(self):
        """Every VIMA instruction of the kernel, in program order."""
        out = []
        for p in range(self.n_phases):
            out.extend(self.kernel.vima_phase(p).instrs)
        return out


def generate(cfg: SimConfig, backend: str | None = None) -> Workload:
    return Workload(make_kernel(cfg), backend or cfg.workload.backend)


def scalar_reference(cfg: SimConfig, phases: int | None = None) -> dict:
    k = make_kernel(cfg)
    return k.reference(k.n_phases if phases is None else phases)
