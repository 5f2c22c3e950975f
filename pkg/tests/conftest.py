import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from haplodrift.types import Kit, Locus


@pytest.fixture(scope="session")
def mini_kit() -> Kit:
    """Four single-copy loci with kit-realistic mutation rates."""
    return Kit(
        "mini",
        tuple(
            Locus(f"L{i}", i, rate)
            for i, rate in enumerate((0.002, 0.003, 0.004, 0.006), start=1)
        ),
    )


@pytest.fixture(scope="session")
def table_kit() -> Kit:
    """Nine loci, second one multicopy: the worked pattern-factor examples."""
    names = ["P1", "P2ab", "P3", "P4", "P5", "P6", "P7", "P8", "P9"]
    return Kit(
        "patterns",
        tuple(
            Locus(n, i, 0.002, multicopy=(n == "P2ab"))
            for i, n in enumerate(names, start=1)
        ),
    )
