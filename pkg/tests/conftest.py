import numpy as np
import pytest

from rkca.data import SynthSpec, synth_generate

# Shared synthetic instance: 50x50x20, bases of rank 5, 30% corruption.
BENCH_SPEC = SynthSpec(
    m=50, n=50, n_slices=20, rank_a=5, rank_b=5, p_clean=0.7, seed=20260808
)


@pytest.fixture(scope="session")
def bench_instance():
    low_rank, sparse, observed = synth_generate(BENCH_SPEC)
    return low_rank, sparse, observed


def rel_error(estimate, truth):
    diff = float(np.linalg.norm(np.asarray(estimate - truth).ravel()))
    ref = float(np.linalg.norm(np.asarray(truth).ravel()))
    return diff / ref if ref > 0 else diff
