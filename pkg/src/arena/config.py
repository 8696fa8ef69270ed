"""Service configuration.

Loaded from a JSON file; every field has a default so a bare config still
boots. Bootstrap users let a fresh deployment mint its first curator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigError

__all__ = ["BootstrapUser", "ServiceConfig", "load_config"]


@dataclass(frozen=True)
class BootstrapUser:
    name: str
    secret: str
    group: str = "generator"
    generator_kind: str = "none"


@dataclass(frozen=True)
class ServiceConfig:
    store_path: str = "arena-state.jsonl"
    host: str = "127.0.0.1"
    port: int = 8080
    judge_workers: int = 1
    sandbox_root: Optional[str] = None
    runtimes_file: Optional[str] = None  # None selects the built-in registry
    output_cap_bytes: int = 8 * 1024 * 1024
    checkpoint_interval_s: int = 86_400
    bootstrap_users: tuple[BootstrapUser, ...] = field(default_factory=tuple)


def _bootstrap_user(doc: Any, index: int) -> BootstrapUser:
    if not isinstance(doc, dict):
        raise ConfigError(f"bootstrap_users[{index}] must be an object")
    try:
        return BootstrapUser(
            name=str(doc["name"]),
            secret=str(doc["secret"]),
            group=str(doc.get("group", "generator")),
            generator_kind=str(doc.get("generator_kind", "none")),
        )
    except KeyError as exc:
        raise ConfigError(f"bootstrap_users[{index}] missing {exc.args[0]!r}") from exc


def load_config(path: str | Path) -> ServiceConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")

    known = {
        "store_path",
        "host",
        "port",
        "judge_workers",
        "sandbox_root",
        "runtimes_file",
        "output_cap_bytes",
        "checkpoint_interval_s",
        "bootstrap_users",
    }
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    users = tuple(
        _bootstrap_user(u, i) for i, u in enumerate(doc.get("bootstrap_users", []))
    )
    try:
        config = ServiceConfig(
            store_path=str(doc.get("store_path", "arena-state.jsonl")),
            host=str(doc.get("host", "127.0.0.1")),
            port=int(doc.get("port", 8080)),
            judge_workers=int(doc.get("judge_workers", 1)),
            sandbox_root=doc.get("sandbox_root"),
            runtimes_file=doc.get("runtimes_file"),
            output_cap_bytes=int(doc.get("output_cap_bytes", 8 * 1024 * 1024)),
            checkpoint_interval_s=int(doc.get("checkpoint_interval_s", 86_400)),
            bootstrap_users=users,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    if config.port <= 0 or config.judge_workers <= 0:
        raise ConfigError("port and judge_workers must be positive")
    return config


def load_runtimes_entries(path: str | Path) -> list[dict[str, Any]]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"runtimes file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"runtimes file {path} is not valid JSON: {exc.msg}") from exc
    if not isinstance(doc, list):
        raise ConfigError("runtimes file must hold a JSON array")
    return doc
