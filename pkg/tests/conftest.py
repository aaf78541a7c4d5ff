import jax
import pytest


jax.config.update("jax_enable_x64", True)


@pytest.fixture
def grid_1d():
    import egorax

    return egorax.make_grid(1, 0.05, -6.0, 6.0, 256)
