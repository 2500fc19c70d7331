"""
Artifact manifests and stage caching.

Every stage writes its artifacts next to a ``<stage>.manifest.json`` that
records the digests of its inputs, the effective configuration, the seed,
the package version and the digests of the files it produced. A rerun with
the same inputs and configuration is skipped; any mismatch forces a rerun.
Manifests carry no timestamps so reruns stay byte-identical.
"""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Optional, Union

from pnslearn import __version__

from .exceptions import CacheMismatchError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def file_digest(path: PathLike) -> str:
    """SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def config_digest(config: Any) -> str:
    """SHA-256 of a JSON-serialisable value in canonical form."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass
class Manifest:
    stage: str
    inputs: Dict[str, str]
    outputs: Dict[str, str]
    config: Dict[str, Any]
    seed: Optional[int] = None
    version: str = __version__
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


class ManifestManager:
    """Reads, writes and verifies stage manifests in one output directory."""

    SUFFIX = ".manifest.json"

    def __init__(self, output_dir: PathLike):
        self.output_dir = Path(output_dir)

    def path_for(self, stage: str) -> Path:
        return self.output_dir / f"{stage}{self.SUFFIX}"

    @staticmethod
    def digest_inputs(inputs: Dict[str, PathLike]) -> Dict[str, str]:
        return {name: file_digest(path) for name, path in sorted(inputs.items())}

    def load(self, stage: str) -> Optional[Manifest]:
        path = self.path_for(stage)
        if not path.exists():
            return None
        try:
            data = json.loads(path.read_text())
            return Manifest(**data)
        except (json.JSONDecodeError, TypeError) as exc:
            logger.warning(f"Ignoring unreadable manifest {path}: {exc}")
            return None

    def write(self, manifest: Manifest) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.path_for(manifest.stage)
        path.write_text(manifest.to_json())
        return path

    def verify(
        self,
        manifest: Manifest,
        input_digests: Dict[str, str],
        config: Dict[str, Any],
        seed: Optional[int],
    ):
        """Raise CacheMismatchError unless ``manifest`` describes these inputs."""
        if manifest.version != __version__:
            raise CacheMismatchError(
                f"{manifest.stage}: built by version {manifest.version}, "
                f"running {__version__}"
            )
        if manifest.inputs != input_digests:
            changed = sorted(
                name
                for name in set(manifest.inputs) | set(input_digests)
                if manifest.inputs.get(name) != input_digests.get(name)
            )
            raise CacheMismatchError(
                f"{manifest.stage}: input hash mismatch for {', '.join(changed)}"
            )
        if config_digest(manifest.config) != config_digest(config):
            raise CacheMismatchError(f"{manifest.stage}: configuration changed")
        if manifest.seed != seed:
            raise CacheMismatchError(f"{manifest.stage}: seed changed")
        for name, digest in manifest.outputs.items():
            path = self.output_dir / name
            if not path.exists():
                raise CacheMismatchError(f"{manifest.stage}: output {name} missing")
            if file_digest(path) != digest:
                raise CacheMismatchError(f"{manifest.stage}: output {name} modified")

    def is_fresh(
        self,
        stage: str,
        input_digests: Dict[str, str],
        config: Dict[str, Any],
        seed: Optional[int],
    ) -> Optional[Manifest]:
        """The stored manifest if it can be reused, otherwise None."""
        manifest = self.load(stage)
        if manifest is None:
            return None
        try:
            self.verify(manifest, input_digests, config, seed)
        except CacheMismatchError as exc:
            logger.warning(f"Refusing to reuse cached {stage}: {exc}")
            return None
        return manifest

    def run_stage(
        self,
        stage: str,
        inputs: Dict[str, PathLike],
        config: Dict[str, Any],
        seed: Optional[int],
        produce: Callable[[], Iterable[PathLike]],
        force: bool = False,
        extra: Optional[Dict[str, Any]] = None,
    ) -> Manifest:
        """
        Run ``produce`` unless a fresh manifest exists. ``produce`` returns
        the paths it wrote; paths outside the output directory are recorded
        by absolute path.
        """
        input_digests = self.digest_inputs(inputs)
        if not force:
            cached = self.is_fresh(stage, input_digests, config, seed)
            if cached is not None:
                logger.info(f"Stage {stage} is up to date; skipped via cache")
                return cached

        logger.info(f"Running stage {stage} into {self.output_dir}")
        self.output_dir.mkdir(parents=True, exist_ok=True)
        written = [Path(p) for p in produce()]
        outputs = {}
        for path in written:
            try:
                name = path.resolve().relative_to(self.output_dir.resolve()).as_posix()
            except ValueError:
                name = path.resolve().as_posix()
            outputs[name] = file_digest(path)

        manifest = Manifest(
            stage=stage,
            inputs=input_digests,
            outputs=dict(sorted(outputs.items())),
            config=config,
            seed=seed,
            extra=extra or {},
        )
        self.write(manifest)
        return manifest
