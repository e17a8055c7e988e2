import pytest

from edgefed.errors import NotFoundError, ValidationError
from edgefed.inventory import Inventory


def test_full_tree_matches_loaded_config(inventory):
    tree = inventory.tree()
    assert [lab["lab_id"] for lab in tree["labs"]] == ["x-lab", "y-lab"]
    sdr = tree["labs"][0]["testbeds"][0]
    assert sdr["testbed_id"] == "sdr"
    assert sdr["edge_nodes"] == ["node-1", "node-2", "node-3"]


def test_lab_filter_gives_eight_sdr_devices(inventory):
    tree = inventory.tree(lab="x-lab")
    assert len(tree["labs"]) == 1
    devices = tree["labs"][0]["testbeds"][0]["devices"]
    assert len(devices) == 8
    assert [d["device_id"] for d in devices] == [f"usrp-{i}" for i in range(1, 9)]


def test_testbed_filter_gives_one_device_per_5g_node(inventory):
    tree = inventory.tree(testbed="oai-5g")
    tbs = tree["labs"][0]["testbeds"]
    assert len(tbs) == 1
    devices = tbs[0]["devices"]
    assert len(devices) == 2
    assert {d["node_id"] for d in devices} == {"bs-node", "ue-node"}


def test_unknown_filter_raises_not_found(inventory):
    with pytest.raises(NotFoundError):
        inventory.tree(lab="no-such-lab")
    with pytest.raises(NotFoundError):
        inventory.tree(testbed="no-such-testbed")


def test_ordering_is_lexicographic(inventory):
    tree = inventory.tree()
    for lab in tree["labs"]:
        ids = [tb["testbed_id"] for tb in lab["testbeds"]]
        assert ids == sorted(ids)
        for tb in lab["testbeds"]:
            dev_ids = [d["device_id"] for d in tb["devices"]]
            assert dev_ids == sorted(dev_ids)


def test_validation_rejects_device_on_foreign_node():
    data = {
        "labs": [
            {
                "lab_id": "l1",
                "testbeds": [
                    {
                        "testbed_id": "t1",
                        "edge_nodes": ["n1"],
                        "devices": [
                            {"device_id": "d1", "node_id": "n2", "layout_pos": [0.5, 0.5]}
                        ],
                    }
                ],
            }
        ]
    }
    with pytest.raises(ValidationError):
        Inventory.from_dict(data)


def test_validation_rejects_layout_outside_unit_square():
    data = {
        "labs": [
            {
                "lab_id": "l1",
                "testbeds": [
                    {
                        "testbed_id": "t1",
                        "edge_nodes": ["n1"],
                        "devices": [
                            {"device_id": "d1", "node_id": "n1", "layout_pos": [1.5, 0.5]}
                        ],
                    }
                ],
            }
        ]
    }
    with pytest.raises(ValidationError):
        Inventory.from_dict(data)


def test_validation_rejects_lab_without_testbeds():
    with pytest.raises(ValidationError):
        Inventory.from_dict({"labs": [{"lab_id": "l1", "testbeds": []}]})
