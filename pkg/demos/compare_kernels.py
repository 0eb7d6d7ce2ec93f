"""Speedup and energy of VIMA against AVX-1T for each streaming kernel.

Usage: python3 demos/compare_kernels.py [size_mb]
"""

import sys

from vimasim.config import MB, SimConfig, apply_overrides
from vimasim.simulate import simulate


def run(kernel, backend, size_mb):
    cfg = apply_overrides(SimConfig(), [
        f"workload.kernel={kernel}", f"workload.backend={backend}",
        f"workload.footprint_bytes={int(size_mb * MB)}", "workload.sample_phases=4"])
    return simulate(cfg, check=False)


def main():
    size = float(sys.argv[1]) if len(sys.argv) > 1 else 16
    print(f"{'kernel':8s} {'speedup':>8s} {'energy':>8s}")
    for kernel in ("memset", "memcopy", "vecsum", "stencil", "matmult"):
        avx, vima = run(kernel, "avx", size), run(kernel, "vima", size)
        print(f"{kernel:8s} {avx.stats.elapsed_ps / vima.stats.elapsed_ps:8.2f} "
              f"{vima.energy.total_pj / avx.energy.total_pj:8.3f}")


if __name__ == "__main__":
    main()
