"""Small model factories shared by the test modules."""

import numpy as np

from icrl.scm import Mechanism, NoiseSpec, Scm


def chain2(var_z1=1.0, var_z2=1.0, var_y=0.25, family="gaussian"):
    """Z2 := e2; Z1 := Z2 + e1; Y := Z1 + 2 Z2 + eY (indices 0 -> Z1, 1 -> Z2)."""
    return Scm(
        (
            Mechanism.linear([1], [1.0], NoiseSpec(family, var_z1)),
            Mechanism.linear([], [], NoiseSpec(family, var_z2)),
        ),
        Mechanism.linear([0, 1], [1.0, 2.0], NoiseSpec(family, var_y)),
    )


def linear_target_scm(theta, var_y=0.25):
    """Independent unit-variance latents with a linear target."""
    theta = np.asarray(theta, dtype=float)
    d = theta.shape[0]
    latent = tuple(Mechanism.linear([], []) for _ in range(d))
    return Scm(latent, Mechanism.linear(list(range(d)), theta.tolist(), NoiseSpec("gaussian", var_y)))
