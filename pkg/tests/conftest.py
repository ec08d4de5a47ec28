import numpy as np
import pytest

from simnas.bench import COLUMNS, BenchTable, generate_synthetic_bench, save_bench


@pytest.fixture(scope="session")
def synth_table():
    return generate_synthetic_bench(seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


FIXTURE_ROWS = {
    "|none~0|+|none~0|none~1|+|none~0|none~1|none~2|": (10.0, 1.0, 0.83, 0.443008, 1.5, 2.5, 0.9, 1.1, 0.6, 1.0),
    "|nor_conv_3x3~0|+|skip_connect~0|nor_conv_1x1~1|+|none~0|avg_pool_3x3~1|skip_connect~2|": (
        91.2, 70.1, 44.0, 39.76, 4.2, 12.0, 2.0, 4.5, 3.1, 2.9,
    ),
    "|nor_conv_3x3~0|+|nor_conv_3x3~0|nor_conv_3x3~1|+|nor_conv_3x3~0|nor_conv_3x3~1|nor_conv_3x3~2|": (
        93.5, 71.0, 46.1, 212.779648, 5.9, 35.1, 4.3, 12.0, 8.1, 8.4,
    ),
}


@pytest.fixture
def fixture_table():
    return BenchTable(list(FIXTURE_ROWS), list(FIXTURE_ROWS.values()), COLUMNS)


@pytest.fixture
def fixture_csv(tmp_path, fixture_table):
    path = tmp_path / "bench.csv"
    save_bench(fixture_table, path)
    return path
