"""Testbed inventory: labs, testbeds, edge nodes and attached devices.

Loaded once at startup from a declarative YAML document (schema in
docs/CONFIG.md). The inventory is immutable for the life of the process.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .errors import NotFoundError, ValidationError


@dataclass(frozen=True)
class Device:
    device_id: str
    kind: str
    node_id: str
    layout_pos: tuple[float, float]


@dataclass(frozen=True)
class Testbed:
    testbed_id: str
    lab_id: str
    name: str
    edge_nodes: tuple[str, ...]
    devices: tuple[Device, ...]

    def device(self, device_id: str) -> Device:
        for dev in self.devices:
            if dev.device_id == device_id:
                return dev
        raise NotFoundError(f"unknown device {device_id!r}", device_id=device_id)

    @property
    def device_ids(self) -> frozenset[str]:
        return frozenset(d.device_id for d in self.devices)


@dataclass(frozen=True)
class Lab:
    lab_id: str
    name: str
    testbed_ids: tuple[str, ...] = field(default_factory=tuple)


class Inventory:
    def __init__(self, labs: dict[str, Lab], testbeds: dict[str, Testbed]):
        self._labs = labs
        self._testbeds = testbeds
        self._validate()

    def _validate(self):
        seen_devices: set[str] = set()
        for lab in self._labs.values():
            if not lab.testbed_ids:
                raise ValidationError(f"lab {lab.lab_id!r} has no testbeds")
            for tb_id in lab.testbed_ids:
                if tb_id not in self._testbeds:
                    raise ValidationError(f"lab {lab.lab_id!r} references unknown testbed {tb_id!r}")
        for tb in self._testbeds.values():
            if tb.lab_id not in self._labs:
                raise ValidationError(f"testbed {tb.testbed_id!r} references unknown lab {tb.lab_id!r}")
            if not tb.edge_nodes:
                raise ValidationError(f"testbed {tb.testbed_id!r} has no edge nodes")
            for dev in tb.devices:
                if dev.device_id in seen_devices:
                    raise ValidationError(f"duplicate device id {dev.device_id!r}")
                seen_devices.add(dev.device_id)
                if dev.node_id not in tb.edge_nodes:
                    raise ValidationError(
                        f"device {dev.device_id!r} references node {dev.node_id!r} "
                        f"outside testbed {tb.testbed_id!r}"
                    )
                x, y = dev.layout_pos
                if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
                    raise ValidationError(f"device {dev.device_id!r} layout_pos outside [0,1]^2")

    @classmethod
    def from_dict(cls, data: dict) -> "Inventory":
        labs: dict[str, Lab] = {}
        testbeds: dict[str, Testbed] = {}
        for lab_doc in data.get("labs", []):
            lab_id = str(lab_doc["lab_id"])
            if lab_id in labs:
                raise ValidationError(f"duplicate lab id {lab_id!r}")
            tb_ids = []
            for tb_doc in lab_doc.get("testbeds", []):
                tb_id = str(tb_doc["testbed_id"])
                if tb_id in testbeds:
                    raise ValidationError(f"duplicate testbed id {tb_id!r}")
                devices = tuple(
                    Device(
                        device_id=str(d["device_id"]),
                        kind=str(d.get("kind", "device")),
                        node_id=str(d["node_id"]),
                        layout_pos=(float(d["layout_pos"][0]), float(d["layout_pos"][1])),
                    )
                    for d in tb_doc.get("devices", [])
                )
                testbeds[tb_id] = Testbed(
                    testbed_id=tb_id,
                    lab_id=lab_id,
                    name=str(tb_doc.get("name", tb_id)),
                    edge_nodes=tuple(str(n) for n in tb_doc.get("edge_nodes", [])),
                    devices=devices,
                )
                tb_ids.append(tb_id)
            labs[lab_id] = Lab(lab_id=lab_id, name=str(lab_doc.get("name", lab_id)), testbed_ids=tuple(tb_ids))
        return cls(labs, testbeds)

    @classmethod
    def from_yaml(cls, path) -> "Inventory":
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
        return cls.from_dict(data)

    def lab(self, lab_id: str) -> Lab:
        try:
            return self._labs[lab_id]
        except KeyError:
            raise NotFoundError(f"unknown lab {lab_id!r}", lab_id=lab_id) from None

    def testbed(self, testbed_id: str) -> Testbed:
        try:
            return self._testbeds[testbed_id]
        except KeyError:
            raise NotFoundError(f"unknown testbed {testbed_id!r}", testbed_id=testbed_id) from None

    def labs(self) -> list[Lab]:
        return [self._labs[k] for k in sorted(self._labs)]

    def testbeds(self) -> list[Testbed]:
        return [self._testbeds[k] for k in sorted(self._testbeds)]

    def tree(self, lab: str | None = None, testbed: str | None = None) -> dict:
        """Filtered hierarchy as plain dicts, lexicographic by id at every level."""
        if testbed is not None:
            tb = self.testbed(testbed)
            lab_ids = [tb.lab_id]
            tb_filter = {testbed}
        elif lab is not None:
            lab_ids = [self.lab(lab).lab_id]
            tb_filter = None
        else:
            lab_ids = sorted(self._labs)
            tb_filter = None

        labs_out = []
        for lab_id in lab_ids:
            lab_obj = self._labs[lab_id]
            tbs_out = []
            for tb_id in sorted(lab_obj.testbed_ids):
                if tb_filter is not None and tb_id not in tb_filter:
                    continue
                tb = self._testbeds[tb_id]
                tbs_out.append(
                    {
                        "testbed_id": tb.testbed_id,
                        "name": tb.name,
                        "edge_nodes": sorted(tb.edge_nodes),
                        "devices": [
                            {
                                "device_id": d.device_id,
                                "kind": d.kind,
                                "node_id": d.node_id,
                                "layout_pos": list(d.layout_pos),
                            }
                            for d in sorted(tb.devices, key=lambda d: d.device_id)
                        ],
                    }
                )
            labs_out.append({"lab_id": lab_obj.lab_id, "name": lab_obj.name, "testbeds": tbs_out})
        return {"labs": labs_out}
