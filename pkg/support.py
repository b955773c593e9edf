import datetime
import hashlib
import json
import os

import srsly
from pydantic import BaseModel, ConfigDict
from wasabi import msg

import settings


class RunManifest(BaseModel):
    """Written beside every output so that a run can be reproduced"""

    model_config = ConfigDict(frozen=True)

    command: str
    config_hash: str
    input_digests: dict[str, str]
    seed: int
    tool_version: str
    timestamp: str


def make_dir(path: str) -> None:
    folder, file = os.path.split(path)
    if folder and not os.path.isdir(folder):
        os.makedirs(folder)


def file_exists(file_path: str) -> bool:
    return os.path.exists(file_path)


def get_script_dir() -> str:
    return os.path.dirname(os.path.abspath(__file__))


def resolve_path(path: str) -> str:
    """Relative defaults in settings.py are relative to this folder, not the working directory"""
    if os.path.isabs(path) or file_exists(path):
        return path

    return os.path.join(get_script_dir(), path)


def load_json(file_path: str):
    return srsly.read_json(file_path)


def canonical_json(data) -> str:
    """Sorted keys, 2-space indent, trailing newline"""
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_text(file_path: str, text: str) -> None:
    make_dir(file_path)
    with open(file_path, "w", encoding="utf-8", newline="\n") as file:
        file.write(text)


def read_file_to_string(file_path: str) -> str:
    with open(file_path, "r", encoding="utf-8") as file:
        return file.read()


def file_digest(file_path: str) -> str:
    digest = hashlib.sha256()
    with open(file_path, "rb") as file:
        for chunk in iter(lambda: file.read(1 << 16), b""):
            digest.update(chunk)

    return digest.hexdigest()


def manifest_path(output_path: str) -> str:
    return output_path + settings.MANIFEST_SUFFIX


def write_manifest(
    output_path: str, command: str, config_hash: str, input_paths: list, seed: int
) -> RunManifest:
    manifest = RunManifest(
        command=command,
        config_hash=config_hash,
        # Keyed by the path as given, two inputs may share a file name
        input_digests={path: file_digest(path) for path in sorted(set(input_paths))},
        seed=seed,
        tool_version=settings.TOOL_VERSION,
        timestamp=datetime.datetime.now(datetime.timezone.utc).isoformat(),
    )

    srsly.write_json(manifest_path(output_path), manifest.model_dump(), indent=2)
    msg.info(f"Manifest written to {manifest_path(output_path)}")

    return manifest


def read_manifest(output_path: str) -> RunManifest:
    return RunManifest(**load_json(manifest_path(output_path)))


def format_ids(ids) -> str:
    """Id lists as they appear in feedback text"""
    ids = list(ids)
    if not ids:
        return "none"

    return ", ".join(str(i) for i in ids)
