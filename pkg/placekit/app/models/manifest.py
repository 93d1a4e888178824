"""Run manifest written next to every command's artifacts."""

from typing import Any

from pydantic import BaseModel, Field


class RunManifest(BaseModel):
    """Everything needed to re-run a command and check its outputs."""

    command: str
    placekit_version: str
    config: dict[str, Any]
    config_sha256: str
    seed: int
    threads: int
    versions: dict[str, str] = Field(default_factory=dict)
    started_at: str
    wall_time_seconds: float = Field(..., ge=0)
    artifacts: list[str] = Field(default_factory=list)
    notes: list[str] = Field(default_factory=list)
