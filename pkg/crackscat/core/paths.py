from __future__ import annotations

import os


def default_config_path() -> str | None:
    env = os.environ.get("CRACKSCAT_CONFIG")
    if env:
        return env
    base_dir = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
    p = os.path.join(base_dir, "config", "crackscat.conf")
    return p if os.path.exists(p) else None


def sidecar_path(artifact_path: str) -> str:
    return f"{artifact_path}.cfg"


def write_sidecar(artifact_path: str, lines: list[str]) -> str:
    p = sidecar_path(artifact_path)
    with open(p, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    return p


def derived_path(path: str, suffix: str, ext: str | None = None) -> str:
    root, old_ext = os.path.splitext(path)
    return f"{root}.{suffix}{ext or old_ext or '.csv'}"


def ensure_parent(path: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)


def model_path(models_dir: str, kind: str) -> str:
    return os.path.join(models_dir, f"{kind}.crkm")
