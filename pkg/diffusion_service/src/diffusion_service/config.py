"""Service configuration from environment variables."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Mapping


@dataclass(frozen=True)
class ServiceConfig:
    model_id: str = "toy-latent-v1"
    device: str = "cpu"
    host: str = "127.0.0.1"
    port: int = 8601
    max_side: int = 2048
    max_concurrent: int = 1

    def __post_init__(self) -> None:
        if not 1 <= self.port <= 65535:
            raise ValueError(f"port {self.port} out of range")
        if self.max_side < 16:
            raise ValueError("max_side must be >= 16")
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be >= 1")

    @classmethod
    def from_env(cls, env: Mapping[str, str] | None = None) -> "ServiceConfig":
        env = os.environ if env is None else env
        return cls(
            model_id=env.get("DIFFUSION_MODEL_ID", cls.model_id),
            device=env.get("DIFFUSION_DEVICE", cls.device),
            host=env.get("DIFFUSION_HOST", cls.host),
            port=int(env.get("DIFFUSION_PORT", cls.port)),
            max_side=int(env.get("DIFFUSION_MAX_SIDE", cls.max_side)),
            max_concurrent=int(env.get("DIFFUSION_MAX_CONCURRENT", cls.max_concurrent)),
        )
