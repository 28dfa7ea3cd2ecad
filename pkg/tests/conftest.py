import pytest

from dcrupture.config import RunConfig
from dcrupture.scenario import build_scenario


def small_config(m=31, dt=0.02, t_final=1.0, **sections):
    disc = {"m": m, "dt": dt, "t_final": t_final}
    disc.update(sections.pop("discretization", {}))
    return RunConfig().with_overrides(discretization=disc, **sections)


@pytest.fixture(scope="session")
def small_scenario():
    return build_scenario(small_config())
