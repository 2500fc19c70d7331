"""
Structural causal model parameterisation.

The model has binary features Z_1..Z_n (each copying its own Bernoulli
exogenous U_Z), a binary treatment X = f_X(M_X, U_X) and a binary outcome
Y = f_Y(X, M_Y, U_Y), where M_X and M_Y are linear in Z. The first
``n_observed`` features are observable; the rest are masked.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Sequence, Tuple, Union

import numpy as np
from django.core.exceptions import ValidationError

logger = logging.getLogger(__name__)

GENERATOR_VERSION = "pnslearn-scm/1"

# Constants of the reference model (20 features, 15 observed).
PAPER_TABLE_VERSION = "reference-scm/1"

PAPER_MX_COEFFS = (
    0.259223510143,
    -0.658140989167,
    -0.75025831768,
    0.162906462426,
    0.652023463285,
    -0.0892939586541,
    0.421469107769,
    -0.443129684766,
    0.802624388789,
    -0.225740978499,
    0.716621631717,
    0.0650682260309,
    -0.220690334026,
    0.156355773665,
    -0.50693672491,
    -0.707060278115,
    0.418812816935,
    -0.0822118703986,
    0.769299853833,
    -0.511585391002,
)

PAPER_MY_COEFFS = (
    -0.792867111918,
    0.759967136147,
    0.55437722369,
    0.503970540409,
    -0.527187144651,
    0.378619988091,
    0.269255196301,
    0.671597043594,
    0.396010142274,
    0.325228576643,
    0.657808327574,
    0.801655023993,
    0.0907679484097,
    -0.0713852594543,
    -0.0691046005285,
    -0.222582013343,
    -0.848408031595,
    -0.584285069026,
    -0.324874831799,
    0.625621583197,
)

PAPER_PZ = (
    0.352913861526,
    0.460995855543,
    0.331702473392,
    0.885505026779,
    0.017026872706,
    0.380772701708,
    0.028092602705,
    0.220819399962,
    0.617742227477,
    0.981975046713,
    0.142042291381,
    0.833602592350,
    0.882938907115,
    0.542143191999,
    0.085023436884,
    0.645357252864,
    0.863787135134,
    0.460539711624,
    0.314014079207,
    0.685879388218,
)

PAPER_P_UX = 0.601680857267
PAPER_P_UY = 0.497668975278
PAPER_C_Y = -0.77953605542
PAPER_N_OBSERVED = 15

SPEC_FIELDS = (
    "n_features",
    "n_observed",
    "mx_coeffs",
    "my_coeffs",
    "c_y",
    "pz",
    "p_ux",
    "p_uy",
)


def _frozen_vector(values) -> np.ndarray:
    vector = np.array(values, dtype=np.float64).reshape(-1)
    vector.setflags(write=False)
    return vector


@dataclass(frozen=True, eq=False)
class ScmSpec:
    """
    Complete parameterisation of the SCM.

    ``fy_upper_branch`` is the value f_Y assigns on 1 < v < 2. It is 1 as
    the model is written; setting it to 0 flips that branch.
    """

    n_features: int
    n_observed: int
    mx_coeffs: np.ndarray
    my_coeffs: np.ndarray
    c_y: float
    pz: np.ndarray
    p_ux: float
    p_uy: float
    fy_upper_branch: int = 1
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "mx_coeffs", _frozen_vector(self.mx_coeffs))
        object.__setattr__(self, "my_coeffs", _frozen_vector(self.my_coeffs))
        object.__setattr__(self, "pz", _frozen_vector(self.pz))
        object.__setattr__(self, "c_y", float(self.c_y))
        object.__setattr__(self, "p_ux", float(self.p_ux))
        object.__setattr__(self, "p_uy", float(self.p_uy))
        object.__setattr__(self, "n_features", int(self.n_features))
        object.__setattr__(self, "n_observed", int(self.n_observed))
        object.__setattr__(self, "meta", dict(self.meta))
        self.validate()

    def validate(self):
        """Check the structural invariants; raise ValidationError on breach."""
        errors = []
        n = self.n_features
        if n < 1:
            errors.append("n_features must be positive.")
        if not 0 < self.n_observed <= n:
            errors.append("n_observed must satisfy 0 < n_observed <= n_features.")
        for name in ("mx_coeffs", "my_coeffs", "pz"):
            if getattr(self, name).shape != (n,):
                errors.append(f"{name} must have length n_features ({n}).")
        if not np.all(np.isfinite(self.mx_coeffs)) or not np.all(
            np.isfinite(self.my_coeffs)
        ):
            errors.append("Coefficients must be finite.")
        if not np.isfinite(self.c_y):
            errors.append("c_y must be finite.")
        probabilities = np.concatenate([self.pz, [self.p_ux, self.p_uy]])
        if np.any(probabilities < 0.0) or np.any(probabilities > 1.0):
            errors.append("Bernoulli parameters must lie in [0, 1].")
        if self.fy_upper_branch not in (0, 1):
            errors.append("fy_upper_branch must be 0 or 1.")
        if errors:
            raise ValidationError(errors)

    @property
    def n_unobserved(self) -> int:
        return self.n_features - self.n_observed

    @property
    def n_subpopulations(self) -> int:
        return 1 << self.n_observed

    def to_dict(self) -> Dict[str, Any]:
        meta = {"generator_version": GENERATOR_VERSION, "seed": None}
        meta.update(self.meta)
        meta["fy_upper_branch"] = self.fy_upper_branch
        return {
            "n_features": self.n_features,
            "n_observed": self.n_observed,
            "mx_coeffs": self.mx_coeffs.tolist(),
            "my_coeffs": self.my_coeffs.tolist(),
            "c_y": self.c_y,
            "pz": self.pz.tolist(),
            "p_ux": self.p_ux,
            "p_uy": self.p_uy,
            "meta": meta,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ScmSpec":
        missing = [name for name in SPEC_FIELDS if name not in data]
        if missing:
            raise ValidationError(f"SCM spec is missing fields: {', '.join(missing)}")
        meta = dict(data.get("meta") or {})
        upper_branch = int(meta.pop("fy_upper_branch", 1))
        return cls(
            n_features=data["n_features"],
            n_observed=data["n_observed"],
            mx_coeffs=data["mx_coeffs"],
            my_coeffs=data["my_coeffs"],
            c_y=data["c_y"],
            pz=data["pz"],
            p_ux=data["p_ux"],
            p_uy=data["p_uy"],
            fy_upper_branch=upper_branch,
            meta=meta,
        )

    def to_json(self) -> str:
        # json renders floats with repr(), the shortest round-trippable form
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ScmSpec":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"SCM spec is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ValidationError("SCM spec must be a JSON object.")
        return cls.from_dict(data)

    def identity_hash(self) -> str:
        """Digest of the mechanism parameters; metadata does not take part."""
        payload = {name: self.to_dict()[name] for name in SPEC_FIELDS}
        payload["fy_upper_branch"] = self.fy_upper_branch
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, ScmSpec):
            return NotImplemented
        return self.identity_hash() == other.identity_hash()

    def __hash__(self):
        return hash(self.identity_hash())

    def with_upper_branch(self, value: int) -> "ScmSpec":
        data = self.to_dict()
        data["meta"]["fy_upper_branch"] = value
        return ScmSpec.from_dict(data)


def paper_scm() -> ScmSpec:
    """The 20-feature reference model with 15 observable features."""
    return ScmSpec(
        n_features=len(PAPER_MX_COEFFS),
        n_observed=PAPER_N_OBSERVED,
        mx_coeffs=PAPER_MX_COEFFS,
        my_coeffs=PAPER_MY_COEFFS,
        c_y=PAPER_C_Y,
        pz=PAPER_PZ,
        p_ux=PAPER_P_UX,
        p_uy=PAPER_P_UY,
        meta={"source": "paper", "table_version": PAPER_TABLE_VERSION},
    )


def _check_range(value: Sequence[float], name: str, limits=None) -> Tuple[float, float]:
    try:
        low, high = (float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name} must be a (low, high) pair.") from exc
    if not (np.isfinite(low) and np.isfinite(high)) or low > high:
        raise ValidationError(f"{name} must satisfy low <= high, got ({low}, {high}).")
    if limits is not None and (low < limits[0] or high > limits[1]):
        raise ValidationError(f"{name} must lie within {limits}.")
    return low, high


def random_scm(
    seed: int,
    coeff_range: Sequence[float] = (-1.0, 1.0),
    prob_range: Sequence[float] = (0.0, 1.0),
    n_features: int = 20,
    n_observed: int = 15,
) -> ScmSpec:
    """
    Draw a model the way the reference model was drawn: coefficients and C_Y
    uniform on ``coeff_range``, Bernoulli parameters uniform on ``prob_range``.
    """
    coeff_low, coeff_high = _check_range(coeff_range, "coeff_range")
    prob_low, prob_high = _check_range(prob_range, "prob_range", limits=(0.0, 1.0))
    if seed is None or int(seed) < 0:
        raise ValidationError("seed must be a non-negative integer.")

    rng = np.random.default_rng(int(seed))
    mx = rng.uniform(coeff_low, coeff_high, n_features)
    my = rng.uniform(coeff_low, coeff_high, n_features)
    c_y = rng.uniform(coeff_low, coeff_high)
    pz = rng.uniform(prob_low, prob_high, n_features)
    p_ux, p_uy = rng.uniform(prob_low, prob_high, 2)

    logger.info(f"Generated random SCM with seed {seed} ({n_features} features)")
    return ScmSpec(
        n_features=n_features,
        n_observed=n_observed,
        mx_coeffs=mx,
        my_coeffs=my,
        c_y=c_y,
        pz=pz,
        p_ux=p_ux,
        p_uy=p_uy,
        meta={
            "source": "random",
            "seed": int(seed),
            "coeff_range": [coeff_low, coeff_high],
            "prob_range": [prob_low, prob_high],
        },
    )


def load_spec(path: Union[str, Path]) -> ScmSpec:
    """Read a spec file. FileNotFoundError propagates for missing paths."""
    text = Path(path).read_text()
    return ScmSpec.from_json(text)


def save_spec(spec: ScmSpec, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(spec.to_json())
    logger.info(f"Wrote SCM spec {spec.identity_hash()[:12]} to {path}")
    return path


def describe_spec(spec: ScmSpec) -> str:
    """Human-readable listing of coefficients and exogenous parameters."""
    lines = [
        f"SCM {spec.identity_hash()[:12]}: {spec.n_features} features, "
        f"{spec.n_observed} observed",
        f"c_y = {spec.c_y!r}",
        f"p_ux = {spec.p_ux!r}",
        f"p_uy = {spec.p_uy!r}",
        f"fy_upper_branch = {spec.fy_upper_branch}",
        "feature  observed  mx_coeff  my_coeff  p(U_Z=1)",
    ]
    for i in range(spec.n_features):
        observed = "yes" if i < spec.n_observed else "no"
        lines.append(
            f"Z{i + 1:<7} {observed:<9} {float(spec.mx_coeffs[i])!r}  "
            f"{float(spec.my_coeffs[i])!r}  {float(spec.pz[i])!r}"
        )
    return "\n".join(lines)
