import pathlib

import pytest

from edgefed.app import ServiceConfig, build_core
from edgefed.clock import FakeTimeline
from edgefed.inventory import Inventory

REPO_ROOT = pathlib.Path(__file__).resolve().parents[1]
CONFIG_DIR = REPO_ROOT / "configs"


@pytest.fixture
def clock():
    return FakeTimeline()


@pytest.fixture
def inventory():
    return Inventory.from_yaml(CONFIG_DIR / "inventory.yaml")


def make_core(clock=None, inventory_obj=None, **overrides):
    """Wired control plane on a fake clock; stub data plane by default."""
    config = ServiceConfig()
    config.data_plane = "stub"
    for key, value in overrides.items():
        if not hasattr(config, key):
            raise AttributeError(f"unknown config override {key!r}")
        setattr(config, key, value)
    clock = clock or FakeTimeline()
    inventory_obj = inventory_obj or Inventory.from_yaml(CONFIG_DIR / "inventory.yaml")
    return build_core(config, clock, inventory_obj)
