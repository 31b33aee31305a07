import textwrap
from pathlib import Path

import pytest

from artifact.cli import default_corpus
from artifact.frontend import parse_file, parse_kernel

KERNELS = default_corpus()
DATA = Path(__file__).parent / "data"
CORPUS = sorted(p.stem for p in KERNELS.glob("*.st"))


def kernel(name: str):
    return parse_file(KERNELS / f"{name}.st")


@pytest.fixture
def diag():
    return kernel("diag_2d2p")


def src(text: str):
    """Parse an inline kernel written with leading indentation."""
    return parse_kernel(textwrap.dedent(text).strip() + "\n")
