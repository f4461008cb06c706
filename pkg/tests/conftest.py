import hypothesis
import numpy as np
import pytest

# numba-jitted calls can be slow on first touch; never let hypothesis
# time out an example because of a compile.
hypothesis.settings.register_profile(
    "einmc", deadline=None, max_examples=50, derandomize=True
)
hypothesis.settings.load_profile("einmc")


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260816)
