"""
SCM stage: writing and resolving spec files.
"""

import logging
from pathlib import Path
from typing import Optional, Sequence

from django.core.exceptions import ValidationError

from .spec import ScmSpec, load_spec, paper_scm, random_scm, save_spec

logger = logging.getLogger(__name__)

SPEC_FILE = "scm.json"


class ScmService:
    """Creates the spec file a run starts from."""

    def generate(
        self,
        out,
        paper: bool = False,
        seed: Optional[int] = None,
        coeff_range: Sequence[float] = (-1.0, 1.0),
        prob_range: Sequence[float] = (0.0, 1.0),
        upper_branch: int = 1,
    ) -> ScmSpec:
        if paper == (seed is not None):
            raise ValidationError("Choose exactly one of the reference model or a seed")
        spec = paper_scm() if paper else random_scm(seed, coeff_range, prob_range)
        if upper_branch != spec.fy_upper_branch:
            spec = spec.with_upper_branch(upper_branch)
        save_spec(spec, out)
        return spec

    def resolve(self, source: str, output_dir, seed=None, path=None) -> Path:
        """Write (or copy) the run's spec to ``output_dir/scm.json``."""
        target = Path(output_dir) / SPEC_FILE
        if source == "paper":
            spec = paper_scm()
        elif source == "random":
            spec = random_scm(seed)
        elif source == "file":
            spec = load_spec(path)
        else:
            raise ValidationError(f"Unknown SCM source: {source}")

        if target.exists():
            try:
                if load_spec(target) == spec and target.read_text() == spec.to_json():
                    logger.info(f"SCM spec {target} is up to date; skipped via cache")
                    return target
            except ValidationError:
                logger.warning(f"Replacing unreadable SCM spec {target}")
        save_spec(spec, target)
        return target
