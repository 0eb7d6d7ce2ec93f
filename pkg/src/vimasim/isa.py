"""Intrinsics-style VIMA instruction set.

Instructions are memory-to-memory: each one reads up to two vector operands
(plus the destination, for the accumulate form) and writes one whole,
vector-aligned destination.  ``apply`` gives the functional meaning; elements
are processed in ascending index order.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np


class ElementType(enum.Enum):
    i32 = ("i32", np.int32)
    u32 = ("u32", np.uint32)
    i64 = ("i64", np.int64)
    u64 = ("u64", np.uint64)
    f32 = ("f32", np.float32)
    f64 = ("f64", np.float64)

    def __init__(self, label, dtype):
        self.label = label
        self.dtype = np.dtype(dtype)

    @property
    def width(self) -> int:
        return self.dtype.itemsize

    @property
    def is_float(self) -> bool:
        return self.dtype.kind == "f"

    @property
    def is_signed(self) -> bool:
        return self.dtype.kind == "i"

    @classmethod
    def parse(cls, s: str) -> "ElementType":
        return cls[s]


FU_ALU, FU_MUL, FU_DIV = 0, 1, 2


class Opcode(enum.Enum):
    # name: (code, memory sources, uses immediate, reads destination, fu class)
    MOV_IMM = (0, 0, True, False, FU_ALU)
    ADD = (1, 2, False, False, FU_ALU)
    SUB = (2, 2, False, False, FU_ALU)
    MUL = (3, 2, False, False, FU_MUL)
    DIV = (4, 2, False, False, FU_DIV)
    ADD_SCALAR = (5, 1, True, False, FU_ALU)
    MUL_SCALAR = (6, 1, True, False, FU_MUL)
    MAC_SCALAR = (7, 1, True, True, FU_MUL)
    AND = (8, 2, False, False, FU_ALU)
    OR = (9, 2, False, False, FU_ALU)
    XOR = (10, 2, False, False, FU_ALU)

    def __init__(self, code, nsrc, uses_imm, reads_dst, fu_class):
        self.code = code
        self.nsrc = nsrc
        self.uses_imm = uses_imm
        self.reads_dst = reads_dst
        self.fu_class = fu_class


class BuildError(ValueError):
    """An instruction violates an operand or alignment rule."""


class DecodeError(ValueError):
    pass


MASK64 = (1 << 64) - 1


def imm_bits(value, etype: ElementType) -> int:
    """Encode a Python scalar as the 64-bit immediate pattern for ``etype``."""
    if etype is ElementType.f64:
        return struct.unpack("<Q", struct.pack("<d", float(value)))[0]
    if etype is ElementType.f32:
        return struct.unpack("<I", struct.pack("<f", float(value)))[0]
    mask = (1 << (8 * etype.width)) - 1
    return int(value) & mask


def imm_value(bits: int, etype: ElementType):
    """Decode an immediate pattern into a numpy scalar of ``etype``."""
    if etype is ElementType.f64:
        return np.float64(struct.unpack("<d", struct.pack("<Q", bits & MASK64))[0])
    if etype is ElementType.f32:
        return np.float32(struct.unpack("<f", struct.pack("<I", bits & 0xFFFFFFFF))[0])
    mask = (1 << (8 * etype.width)) - 1
    return np.array([bits & mask], dtype=np.uint64).astype(etype.dtype)[0]


@dataclass(frozen=True)
class VimaInstruction:
    opcode: Opcode
    etype: ElementType
    dst: int
    src1: int | None = None
    src2: int | None = None
    imm: int = 0
    length: int = 8192

    def sources(self):
        """Vector operands read from memory, accumulator included."""
        out = [s for s in (self.src1, self.src2) if s is not None]
        if self.opcode.reads_dst:
            out.append(self.dst)
        return out

    def check(self, vector_bytes: int | None = None):
        vb = self.length if vector_bytes is None else vector_bytes
        if self.length != vb:
            raise BuildError(f"length {self.length} does not match vector size {vb}")
        if self.dst % vb:
            raise BuildError(f"destination {self.dst:#x} is not {vb}-byte aligned")
        srcs = [s for s in (self.src1, self.src2) if s is not None]
        if len(srcs) != self.opcode.nsrc:
            raise BuildError(f"{self.opcode.name} takes {self.opcode.nsrc} memory sources")
        if self.opcode.nsrc < 2 and self.src2 is not None:
            raise BuildError(f"{self.opcode.name} has no second source")
        for s in srcs:
            if s % self.etype.width:
                raise BuildError(f"source {s:#x} is not element aligned")
        if not self.opcode.uses_imm and self.imm:
            raise BuildError(f"{self.opcode.name} takes no immediate")
        return self


# -- functional semantics ---------------------------------------------------

class Flags:
    """Sticky status bits raised by ``apply``."""

    def __init__(self):
        self.int_div_by_zero = False


def _int_div(a, b, flags):
    zero = b == 0
    if zero.any() and flags is not None:
        flags.int_div_by_zero = True
    safe = np.where(zero, 1, b).astype(a.dtype)
    with np.errstate(all="ignore"):
        if a.dtype.kind == "u":
            q = a // safe
        else:
            q = np.floor_divide(a, safe)
            r = a - q * safe
            fix = (r != 0) & ((a < 0) != (safe < 0))
            q = q + fix.astype(a.dtype)
    return np.where(zero, 0, q).astype(a.dtype)


def compute(instr: VimaInstruction, s1, s2, dst_old):
    """Element-wise result of ``instr`` given operand arrays."""
    op, et = instr.opcode, instr.etype
    dt = et.dtype
    n = instr.length // et.width
    imm = imm_value(instr.imm, et) if op.uses_imm else None
    with np.errstate(all="ignore"):
        if op is Opcode.MOV_IMM:
            return np.full(n, imm, dtype=dt)
        if op is Opcode.ADD:
            return s1 + s2
        if op is Opcode.SUB:
            return s1 - s2
        if op is Opcode.MUL:
            return s1 * s2
        if op is Opcode.DIV:
            if et.is_float:
                return s1 / s2
            return _int_div(s1, s2, None)
        if op is Opcode.ADD_SCALAR:
            return s1 + imm
        if op is Opcode.MUL_SCALAR:
            return s1 * imm
        if op is Opcode.MAC_SCALAR:
            return dst_old + imm * s1
        ui = np.dtype(f"u{et.width}")
        a, b = s1.view(ui), s2.view(ui)
        if op is Opcode.AND:
            r = a & b
        elif op is Opcode.OR:
            r = a | b
        else:
            r = a ^ b
        return r.view(dt)


def apply(instr: VimaInstruction, mem, flags: Flags | None = None):
    """Execute ``instr`` against ``mem`` (anything with ``read``/``write``)."""
    et = instr.etype
    n = instr.length // et.width

    def load(addr):
        return mem.read(addr, instr.length).view(et.dtype)[:n].copy()

    s1 = load(instr.src1) if instr.src1 is not None else None
    s2 = load(instr.src2) if instr.src2 is not None else None
    old = load(instr.dst) if instr.opcode.reads_dst else None
    if instr.opcode is Opcode.DIV and not et.is_float:
        with np.errstate(all="ignore"):
            res = _int_div(s1, s2, flags)
    else:
        res = compute(instr, s1, s2, old)
    res = np.asarray(res, dtype=et.dtype)
    mem.write(instr.dst, res)
    return res


# -- intrinsics builder -------------------------------------------------------

class VimaProgram(list):
    """An instruction stream built through ``vima_<op>_<type>`` intrinsics.

    >>> p = VimaProgram(8192)
    >>> p.vima_mov_imm_i32(0x0, 7).opcode.name
    'MOV_IMM'
    """

    def __init__(self, vector_bytes: int = 8192, iterable=()):
        super().__init__(iterable)
        self.vector_bytes = vector_bytes

    def emit(self, opcode, etype, dst, src1=None, src2=None, imm=0):
        bits = imm_bits(imm, etype) if opcode.uses_imm else 0
        ins = VimaInstruction(opcode, etype, int(dst),
                              None if src1 is None else int(src1),
                              None if src2 is None else int(src2),
                              bits, self.vector_bytes).check()
        self.append(ins)
        return ins


def _make_intrinsic(opcode, etype):
    if opcode.nsrc == 0:
        def fn(self, dst, value):
            return self.emit(opcode, etype, dst, imm=value)
    elif opcode.nsrc == 2:
        def fn(self, dst, a, b):
            return self.emit(opcode, etype, dst, a, b)
    else:
        def fn(self, dst, a, value):
            return self.emit(opcode, etype, dst, a, imm=value)
    fn.__name__ = f"vima_{opcode.name.lower()}_{etype.label}"
    return fn


for _op in Opcode:
    for _et in ElementType:
        setattr(VimaProgram, f"vima_{_op.name.lower()}_{_et.label}", _make_intrinsic(_op, _et))


# -- trace format ---------------------------------------------------------------

def _fmt(v):
    return "-" if v is None else f"{v:#x}"


def encode(instr: VimaInstruction) -> str:
    imm = f"{instr.imm:#x}" if instr.opcode.uses_imm else "-"
    return " ".join([instr.opcode.name, instr.etype.label, _fmt(instr.dst),
                     _fmt(instr.src1), _fmt(instr.src2), imm, str(instr.length)])


def decode(line: str, lineno: int | None = None) -> VimaInstruction:
    where = f"line {lineno}: " if lineno is not None else ""
    parts = line.split()
    if len(parts) != 7:
        raise DecodeError(f"{where}expected 7 fields, got {len(parts)}")
    try:
        op = Opcode[parts[0]]
        et = ElementType.parse(parts[1])
        dst = int(parts[2], 16)
        src1 = None if parts[3] == "-" else int(parts[3], 16)
        src2 = None if parts[4] == "-" else int(parts[4], 16)
        imm = 0 if parts[5] == "-" else int(parts[5], 16)
        length = int(parts[6])
    except (KeyError, ValueError) as exc:
        raise DecodeError(f"{where}{exc}") from None
    try:
        return VimaInstruction(op, et, dst, src1, src2, imm, length).check()
    except BuildError as exc:
        raise DecodeError(f"{where}{exc}") from None


def write_trace(instrs, path):
    with open(path, "w") as fh:
        for ins in instrs:
            fh.write(encode(ins) + "\n")


def read_trace(path):
    out = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            out.append(decode(s, n))
    return out
