"""Device configuration files (YAML or JSON)."""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import yaml


@dataclass
class SensorEntry:
    id: str
    driver: str
    seed: int = 0
    attributes: dict = field(default_factory=dict)
    access_ns: int = 0


@dataclass
class PolicyRule:
    uii: str
    resource: str
    verbs: tuple[str, ...]


@dataclass
class DeviceConfig:
    device_id: str = "device01"
    sensors: list[SensorEntry] = field(default_factory=list)
    policy: list[PolicyRule] = field(default_factory=list)
    truncate_capabilities: bool = True
    truncate_attributes: bool = False
    grant_lifetime_s: int = 24 * 3600
    identity_slots: int = 4
    depth: int = 8
    gateway: Optional[str] = None
    revoked: list[str] = field(default_factory=list)

    @classmethod
    def from_dict(cls, data):
        data = dict(data or {})
        sensors = [SensorEntry(**s) for s in data.pop("sensors", [])]
        policy = [
            PolicyRule(p["uii"], p["resource"], tuple(p.get("verbs", ("read",))))
            for p in data.pop("policy", [])
        ]
        truncation = data.pop("read_truncation", {})
        cfg = cls(sensors=sensors, policy=policy, **data)
        if "capabilities" in truncation:
            cfg.truncate_capabilities = bool(truncation["capabilities"])
        if "attributes" in truncation:
            cfg.truncate_attributes = bool(truncation["attributes"])
        return cfg

    def to_dict(self):
        out = {
            "device_id": self.device_id,
            "sensors": [asdict(s) for s in self.sensors],
            "policy": [
                {"uii": p.uii, "resource": p.resource, "verbs": list(p.verbs)}
                for p in self.policy
            ],
            "read_truncation": {
                "capabilities": self.truncate_capabilities,
                "attributes": self.truncate_attributes,
            },
            "grant_lifetime_s": self.grant_lifetime_s,
            "identity_slots": self.identity_slots,
            "depth": self.depth,
            "revoked": list(self.revoked),
        }
        if self.gateway:
            out["gateway"] = self.gateway
        return out


def load_structured(path):
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        return json.loads(text)
    return yaml.safe_load(text)


def load_device_config(path):
    return DeviceConfig.from_dict(load_structured(path))


def save_device_config(cfg, path):
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
    else:
        path.write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
