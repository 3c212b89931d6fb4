import numpy as np
import pytest

from chimera_market import market_data


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def wide_csv(tmp_path):
    path = tmp_path / "wide.csv"
    path.write_text(
        "date,AAA,BBB,CCC\n"
        "2004-03-31,10.0,20.0,30.0\n"
        "2004-04-01,10.5,19.0,30.3\n"
        "2004-04-02,10.4,19.5,30.1\n"
        "2004-04-05,10.9,19.9,29.8\n"
    )
    return path


@pytest.fixture
def small_market():
    return market_data.synthetic_market(n_block=5, n_noise=5, block_loading=0.9, days=120, seed=11)
