"""Run the service: python3 -m diffusion_service"""

from __future__ import annotations

import uvicorn

from .app import create_app
from .config import ServiceConfig


def main() -> None:
    config = ServiceConfig.from_env()
    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")


if __name__ == "__main__":
    main()
