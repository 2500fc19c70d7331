"""
Informer stage: exact subpopulation table for an SCM spec file.
"""

import logging
from pathlib import Path

from core.manifests import ManifestManager
from scm.spec import load_spec

from .oracle import enumerate_informer
from .tables import load_informer, meta_path, save_informer

logger = logging.getLogger(__name__)

INFORMER_FILE = "informer.csv"


class InformerService:
    """Builds informer.csv in a run directory, reusing it when up to date."""

    stage = "informer"

    def __init__(self, output_dir):
        self.output_dir = Path(output_dir)
        self.manifests = ManifestManager(self.output_dir)

    @property
    def table_path(self) -> Path:
        return self.output_dir / INFORMER_FILE

    def build(self, spec_path, workers: int = 1, force: bool = False):
        spec = load_spec(spec_path)

        def produce():
            table = enumerate_informer(spec, workers=workers)
            path = save_informer(table, self.table_path)
            return [path, meta_path(path)]

        manifest = self.manifests.run_stage(
            self.stage,
            inputs={"scm": spec_path},
            config={"spec_hash": spec.identity_hash()},
            seed=None,
            produce=produce,
            force=force,
        )
        return load_informer(self.table_path), manifest
