"""Versioned JSON schemas for every JSON document the CLI writes."""

import json
from importlib import resources

NAMES = ("report", "startset", "compare", "telemetry")


def load(name: str, version: int = 1) -> dict:
    if name not in NAMES:
        raise KeyError(f"unknown schema {name!r}")
    text = resources.files(__name__).joinpath(f"{name}.v{version}.schema.json").read_text()
    return json.loads(text)
