import pytest

from anchorlab import design_config


@pytest.fixture(scope="session")
def table1():
    """The reference five-level pyramid (objective 6, IoU 0.5)."""
    return design_config(6, 0.5)
