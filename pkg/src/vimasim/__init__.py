"""Cycle-level simulator of a near-memory vector engine beside an x86-like host."""

from .config import SimConfig, parse_config, render_config, validate
from .dram import Dram, SparseMemory
from .isa import ElementType, Opcode, VimaInstruction, VimaProgram
from .vima import VimaEngine

__version__ = "0.1.0"

__all__ = ["SimConfig", "parse_config", "render_config", "validate", "Dram", "SparseMemory",
           "ElementType", "Opcode", "VimaInstruction", "VimaProgram", "VimaEngine"]
