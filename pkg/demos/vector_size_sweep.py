"""VecSum runtime as the VIMA vector size shrinks from 8 KB to 256 B."""

from vimasim.config import MB, SimConfig, apply_overrides
from vimasim.simulate import simulate


def main():
    base = None
    for vb in (8192, 4096, 2048, 1024, 512, 256):
        cfg = apply_overrides(SimConfig(), [
            "workload.kernel=vecsum", "workload.backend=vima", f"workload.footprint_bytes={16 * MB}",
            f"topology.vector_bytes={vb}", f"workload.sample_phases={4 * 8192 // vb}"])
        t = simulate(cfg, check=False).stats.elapsed_ps
        base = base or t
        print(f"{vb:5d} B vectors: {t / 1e6:10.1f} us  ({t / base:.2f}x the 8 KB runtime)")


if __name__ == "__main__":
    main()
