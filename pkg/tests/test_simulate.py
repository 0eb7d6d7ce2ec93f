import pytest

from vimasim.config import MB, SimConfig, ValidationError, apply_overrides
from vimasim.simulate import simulate


def cfg(*sets):
    return apply_overrides(SimConfig(), ["workload.kernel=stencil", f"workload.footprint_bytes={MB}", *sets])


@pytest.mark.parametrize("backend", ["vima", "avx"])
def test_runs_are_bit_identical(backend):
    a = simulate(cfg(f"workload.backend={backend}"))
    b = simulate(cfg(f"workload.backend={backend}"))
    assert a.stats == b.stats
    assert a.phase_times == b.phase_times


def test_sampling_extrapolates_the_remaining_phases():
    full = simulate(cfg("workload.backend=vima"), check=False)
    part = simulate(cfg("workload.backend=vima", "workload.sample_phases=4"), check=False)
    assert part.stats.phases_simulated == 4 < part.stats.phases_total == full.stats.phases_total
    assert part.stats.elapsed_ps == pytest.approx(full.stats.elapsed_ps, rel=0.05)


def test_sampled_run_still_checks_simulated_phases():
    res = simulate(cfg("workload.backend=vima", "workload.sample_phases=4"))
    assert res.ok and res.expected


def test_vima_backend_needs_one_thread():
    with pytest.raises(ValidationError):
        simulate(cfg("workload.backend=vima", "workload.threads=2"))
