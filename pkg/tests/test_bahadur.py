import numpy as np
import pytest

from banditsgd.core import ConfigError
from banditsgd.experiments.bahadur import bahadur_study, decompose_rep
from banditsgd.experiments.mc import McConfig

CFG = McConfig(p=3, seed=5)


def test_decompose_rep_identity_at_every_horizon():
    terms = decompose_rep(CFG, 0, (1000, 3000))
    for t, tr in terms.items():
        np.testing.assert_allclose(tr.W + tr.R2 + tr.R3 + tr.residual, tr.scaled_error, atol=1e-12)


def test_study_validation():
    with pytest.raises(ConfigError):
        bahadur_study(McConfig(kind="quantile"), (1000,), 4)
    with pytest.raises(ConfigError):
        bahadur_study(CFG, (1000,), 1)
    with pytest.raises(ConfigError):
        decompose_rep(McConfig(p=3, mu=0.2), 0, (1000,))


def test_study_parallel_matches_serial(tmp_path):
    a = bahadur_study(CFG, (1000, 2000), 6, parallelism=1)
    b = bahadur_study(CFG, (1000, 2000), 6, parallelism=3)
    for t in a.horizons:
        np.testing.assert_array_equal(a.W[t], b.W[t])
        np.testing.assert_array_equal(a.residual[t], b.residual[t])
    a.to_csv(tmp_path / "b.csv")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0].startswith("t,n_reps,median_residual") and len(lines) == 3


@pytest.mark.slow
def test_residual_decays_on_doubling_grid():
    grid = (2000, 4000, 8000, 16000, 32000, 64000)
    study = bahadur_study(McConfig(seed=1), grid, n_reps=100, parallelism=1)
    med = study.median_residual()
    assert all(med[a] > med[b] for a, b in zip(grid, grid[1:]))
    slope = study.loglog_slope()
    assert slope < 0 and 0.05 < abs(slope) < 0.5
