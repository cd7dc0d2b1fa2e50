"""Run manifest: config snapshot, input digests, timing, output paths.

Written once when a run starts and rewritten when it finishes. Contains
wall-clock timestamps, so it is the one output file excluded from
byte-determinism comparisons.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version

from .util import sha256_file

try:
    TOOL_VERSION = version("epiwarn")
except PackageNotFoundError:  # running from a source tree
    TOOL_VERSION = "unknown"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class RunManifest:
    command: str
    seed: int
    config: dict
    inputs: dict[str, str]
    outputs: list[str] = field(default_factory=list)
    tool_version: str = TOOL_VERSION
    started_at: str = field(default_factory=_now)
    finished_at: str | None = None
    status: str = "running"

    @classmethod
    def start(cls, command: str, seed: int, config: dict, input_paths: list[str]) -> "RunManifest":
        return cls(
            command=command,
            seed=seed,
            config=config,
            inputs={str(p): sha256_file(p) for p in input_paths},
        )

    def finalize(self, outputs: list[str], status: str = "succeeded") -> None:
        self.outputs = [str(p) for p in outputs]
        self.finished_at = _now()
        self.status = status

    def write(self, path) -> None:
        payload = {
            "command": self.command,
            "tool_version": self.tool_version,
            "seed": self.seed,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "status": self.status,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")
