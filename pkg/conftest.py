import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale reproduction runs (set CAPE_RUN_SLOW=1)")


def pytest_collection_modifyitems(config, items):
    if os.getenv("CAPE_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set CAPE_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)
