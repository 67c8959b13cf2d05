import os

import numpy as np
import pytest

from phdae_cli.model import ParamMasks, PhDaeModel, StructuralMask
from phdae_cli.signals import Dataset

RUN_SLOW = os.environ.get('PHDAE_RUN_SLOW') == '1'

slow = pytest.mark.skipif(not RUN_SLOW, reason='set PHDAE_RUN_SLOW=1 to run the training benchmarks')


def scalar_model(e=1.0, j=0.0, r=1.0, g=1.0) -> PhDaeModel:
    return PhDaeModel.from_matrices([[e]], [[j]], [[r]], [[g]])


def scalar_masks() -> ParamMasks:
    # one free storage entry and one free dissipation entry, unit port
    return ParamMasks(
        m_j=StructuralMask.fixed(np.zeros((1, 1))),
        l_r=StructuralMask.free(np.ones((1, 1), dtype=bool)),
        l_e=StructuralMask.free(np.ones((1, 1), dtype=bool)),
        g=StructuralMask.fixed(np.ones((1, 1))),
    )


def scalar_dataset(e=1.0, r=0.5, samples=600, t_s=0.05, seed=0) -> Dataset:
    """
    Noiseless record of the scalar system e x' = -r x + u, y = x, driven by a few sines.
    """
    from phdae_cli.signals import MultisineSpec, multisine
    from phdae_cli.solver import SolverConfig, simulate

    rng = np.random.default_rng(seed)
    spec = MultisineSpec.random(rng, f0=0.05, n_sines=5)
    inputs = multisine(spec, np.arange(samples) * t_s).reshape(-1, 1)
    model = scalar_model(e=e, r=r)
    trajectory = simulate(model, [0.0], inputs, SolverConfig(h=t_s))
    return Dataset(t_s=t_s, inputs=inputs, outputs=trajectory.outputs)
