"""Synthetic plants for experiments and tests."""
from __future__ import annotations

import numpy as np
import scipy.linalg

from .lti_core import LtiSystem, spectral_radius


def random_stable_system(n: int, m: int, p: int, seed: int = 0, rho: float = 0.9,
                         x0: bool = False) -> LtiSystem:
    """Gaussian ``A`` rescaled so that its spectral radius equals ``rho``."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    r = spectral_radius(A)
    if r > 0:
        A *= rho / r
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((p, n))
    x = rng.standard_normal(n) if x0 else None
    return LtiSystem(A, B, C, x)


def oscillator_network(nodes: int = 10, seed: int = 0, dt: float = 0.2,
                       grounding: float = 0.1) -> LtiSystem:
    """Swing-equation style network ``m_i θ_i'' + d_i θ_i' = -Σ k_ij (θ_i - θ_j) - g_i θ_i + u_i``.

    Ring topology plus ``nodes`` random chords, random inertia, damping and line
    weights, and a small ground tie ``g_i`` that removes the marginal rigid-body
    mode. Discretized with a zero-order hold of step ``dt``. States are
    ``[θ; θ']``, one actuator per node and one sensor per state (``C = I``).

    This is a structural stand-in for a power-system benchmark; its numbers do
    not correspond to any real grid.
    """
    rng = np.random.default_rng(seed)
    K = np.zeros((nodes, nodes))
    if nodes > 1:
        for i in range(nodes):
            j = (i + 1) % nodes
            if i != j:
                K[i, j] = K[j, i] = rng.uniform(0.5, 2.0)
        for _ in range(nodes):
            i, j = rng.choice(nodes, 2, replace=False)
            K[i, j] = K[j, i] = rng.uniform(0.5, 2.0)
    stiffness = np.diag(K.sum(axis=1)) - K + np.diag(grounding * rng.uniform(0.5, 1.0, nodes))
    inv_mass = np.diag(1.0 / rng.uniform(1.0, 3.0, nodes))
    damping = np.diag(rng.uniform(0.5, 1.5, nodes))
    Z, I = np.zeros((nodes, nodes)), np.eye(nodes)
    Ac = np.block([[Z, I], [-inv_mass @ stiffness, -inv_mass @ damping]])
    Bc = np.vstack([Z, inv_mass])
    n = 2 * nodes
    aug = np.zeros((n + nodes, n + nodes))
    aug[:n, :n] = Ac * dt
    aug[:n, n:] = Bc * dt
    E = scipy.linalg.expm(aug)
    labels = [f"theta_{i}" for i in range(1, nodes + 1)] + [f"omega_{i}" for i in range(1, nodes + 1)]
    return LtiSystem(E[:n, :n], E[:n, n:], np.eye(n), labels=labels)
