import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nsg.algebra import CayleyTable, PartialTable

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=30,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


def table(text: str) -> CayleyTable:
    """Build a table from 1-based digit rows, e.g. '11111 11111 11212 11121 11212'."""
    rows = text.split()
    cells = np.array([[int(c) - 1 for c in row] for row in rows], dtype=np.int8)
    return CayleyTable(cells)


def partial(text: str) -> PartialTable:
    """Like table(), with '?' (or '0') marking unknown cells."""
    rows = text.split()
    cells = np.array(
        [[-1 if c in "?0" else int(c) - 1 for c in row] for row in rows], dtype=np.int8
    )
    return PartialTable(cells)


# tables referenced repeatedly across the suite (1-based row notation)
NILPOTENT_5 = "11111 11111 11212 11121 11212"
NILPOTENT_5_ALT = "11111 11111 11222 11222 11222"
TABLE_3_PARTIAL = "11111 11111 11??? 11??? 11???"
KLEIN_4 = "1234 2143 3412 4321"
LEFT_ZERO_2 = "11 22"
RIGHT_ZERO_2 = "12 12"
ANTI_LEFT_ZERO_2 = "22 11"


@pytest.fixture
def nilpotent5() -> CayleyTable:
    return table(NILPOTENT_5)
