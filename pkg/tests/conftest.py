import sys
from pathlib import Path as FsPath

import numpy as np
import pytest

sys.path.insert(0, str(FsPath(__file__).parent))

from rauzyinv.combinatorics import CompiledDiagram, MarkedPermutation, enumerate_class  # noqa: E402

FIG2_ROW = "D iB iD C iC * A iA B"


@pytest.fixture(scope="session")
def fig2():
    return MarkedPermutation.from_string(FIG2_ROW)


@pytest.fixture(scope="session")
def diagram(fig2):
    return enumerate_class(fig2)


@pytest.fixture(scope="session")
def compiled(diagram):
    return CompiledDiagram(diagram)


@pytest.fixture(scope="session")
def section(diagram):
    from rauzyinv.cones import canonical_section

    return canonical_section(diagram)


@pytest.fixture(scope="session")
def branches(section, diagram):
    from rauzyinv.cones import section_branches

    return section_branches(section, diagram, max_extra=14)


@pytest.fixture(scope="session")
def sampler(diagram):
    from rauzyinv.suspension import ThetaSampler

    return ThetaSampler(diagram, np.random.default_rng(0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
