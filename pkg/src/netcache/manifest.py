"""Run manifests: what was run, with which inputs, and what it produced."""

from __future__ import annotations

import json
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .config import digest_file


@dataclass
class RunManifest:
    command: list[str]
    tool_version: str = __version__
    seeds: dict[str, int] = field(default_factory=dict)
    configs: dict[str, str] = field(default_factory=dict)  # path -> sha256
    inputs: dict[str, str] = field(default_factory=dict)
    artifacts: dict[str, dict] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)

    def add_config(self, path) -> None:
        self.configs[str(path)] = digest_file(path)

    def add_input(self, path) -> None:
        self.inputs[str(path)] = digest_file(path)

    def add_artifact(self, path, base: Path | None = None) -> None:
        p = Path(path)
        key = os.path.relpath(p, base) if base is not None else str(p)
        self.artifacts[key] = {"sha256": digest_file(p), "bytes": p.stat().st_size}

    @contextmanager
    def timed(self, stage: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[stage] = round(self.timings.get(stage, 0.0) + time.perf_counter() - t0, 6)

    def artifact_digests(self) -> dict[str, str]:
        return {k: v["sha256"] for k, v in sorted(self.artifacts.items())}

    def as_dict(self) -> dict:
        return {
            "command": self.command,
            "tool_version": self.tool_version,
            "seeds": dict(sorted(self.seeds.items())),
            "configs": dict(sorted(self.configs.items())),
            "inputs": dict(sorted(self.inputs.items())),
            "artifacts": dict(sorted(self.artifacts.items())),
            "timings": dict(sorted(self.timings.items())),
        }

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path) -> "RunManifest":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            command=d["command"],
            tool_version=d["tool_version"],
            seeds=d.get("seeds", {}),
            configs=d.get("configs", {}),
            inputs=d.get("inputs", {}),
            artifacts=d.get("artifacts", {}),
            timings=d.get("timings", {}),
        )
