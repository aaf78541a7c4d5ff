import math

import equinox as eqx
import jax.numpy as jnp
import jax.random as jr
import jax.tree_util as jtu
import numpy as np

import egorax


def _allclose(x, y, rtol, atol):
    x = np.asarray(x)
    y = np.asarray(y)
    return x.shape == y.shape and np.allclose(x, y, rtol=rtol, atol=atol)


def tree_allclose(x, y, *, rtol=1e-5, atol=1e-8):
    same_structure = jtu.tree_structure(x) == jtu.tree_structure(y)
    if not same_structure:
        return False
    x_arrays, x_static = eqx.partition(x, eqx.is_array)
    y_arrays, y_static = eqx.partition(y, eqx.is_array)
    if x_static != y_static:
        return False
    return all(
        _allclose(a, b, rtol, atol)
        for a, b in zip(jtu.tree_leaves(x_arrays), jtu.tree_leaves(y_arrays))
    )


def random_state(grid, seed=0, rank=2, centre=(0.0, 0.0), spread=0.5):
    return egorax.random_low_rank_state(
        grid, jr.PRNGKey(seed), rank, jnp.asarray(centre, dtype=float), spread
    )


def norm(grid, psi):
    return math.sqrt(float(jnp.sum(jnp.abs(psi) ** 2)) * grid.cell_volume)
