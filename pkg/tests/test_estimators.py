from __future__ import annotations

import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from vtgcurate.curriculum import CurriculumScheduler
from vtgcurate.difficulty import DifficultyEstimator
from vtgcurate.oracle import GrounderOracle, SimulatedGrounder, SimulatedGrounderConfig
from vtgcurate.reflection import BoundaryReflectionAgent

ORACLE = GrounderOracle(SimulatedGrounder(SimulatedGrounderConfig(), {}))


@pytest.mark.parametrize(
    "est, params",
    [
        (BoundaryReflectionAgent(ORACLE, tau=0.2), {"oracle": ORACLE, "tau": 0.2, "fps": 2.0, "max_frames": 384}),
        (DifficultyEstimator(ORACLE, k=4), {"oracle": ORACLE, "k": 4, "beta": 0.3, "fps": 2.0, "max_frames": 384}),
        (CurriculumScheduler(m0=0.3, total_steps=50), {"m0": 0.3, "w": 0.5, "total_steps": 50, "seed": 0}),
    ],
)
def test_get_params_and_clone(est, params):
    assert est.get_params() == params
    twin = clone(est)
    assert twin is not est and twin.get_params().keys() == params.keys()
    # the oracle is a shared service handle, so clones reuse it
    assert twin.get_params().get("oracle") is params.get("oracle")
    est.set_params(**{k: v for k, v in params.items() if k != "oracle"})
    assert "BoundaryReflectionAgent" in repr(BoundaryReflectionAgent(tau=1.0))


@pytest.mark.parametrize(
    "est",
    [BoundaryReflectionAgent(ORACLE), DifficultyEstimator(ORACLE), CurriculumScheduler()],
)
def test_unfitted_use_raises(est):
    with pytest.raises((NotFittedError, AttributeError, ValueError)):
        est.predict([]) if hasattr(est, "predict") else est.transform([], step=0)


@pytest.mark.parametrize(
    "est",
    [BoundaryReflectionAgent(None), BoundaryReflectionAgent(ORACLE, tau=-1), DifficultyEstimator(ORACLE, beta=1.5)],
)
def test_bad_params_rejected_at_fit(est):
    with pytest.raises((ValueError, TypeError)):
        est.fit([])
