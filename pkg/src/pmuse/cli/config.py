"""Run configuration: a YAML file plus flag overrides, named seed streams, manifests."""

from __future__ import annotations

import hashlib
import json
import platform
import sys
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from pmuse.bddc import BddcConfig
from pmuse.errors import CaseValidationError
from pmuse.mlp import MlpConfig, preset
from pmuse.netmodel import IEEE118_PMU_BUSES, NetworkCase, ieee118, load_case, load_placement
from pmuse.sampler import InjectionModel, NoiseModel, noise_preset, parametric_model

SEED_STREAMS = ("data", "init", "dropout", "bad-data", "extreme", "stream")


@dataclass
class RunConfig:
    case: str = "ieee118"
    placement: list[int] | str | None = None
    injection: dict = field(default_factory=lambda: {"kind": "parametric", "pct_std": 5.0, "v_std": 0.0})
    noise: str | dict = "gaussian"
    samples: int = 14000
    splits: list[int] = field(default_factory=lambda: [7500, 2500, 4000])
    workers: int = 1
    mlp: dict = field(default_factory=lambda: {"preset": "ieee118"})
    bddc: dict = field(default_factory=dict)
    seed: int = 0
    output: str = "pmuse-out"
    config_dir: str = "."

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if len(self.splits) != 3 or min(self.splits) < 0 or sum(self.splits) > self.samples:
            raise ValueError(f"splits {self.splits} are inconsistent with samples={self.samples}")

    # --- loading -----------------------------------------------------------------
    @classmethod
    def from_dict(cls, doc: dict, config_dir=".") -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**{**doc, "config_dir": str(config_dir)})
        cfg.check_files()
        return cfg

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        doc = {}
        base = "."
        if path is not None:
            p = Path(path)
            if not p.is_file():
                raise FileNotFoundError(f"config file not found: {p}")
            doc = yaml.safe_load(p.read_text()) or {}
            if not isinstance(doc, dict):
                raise ValueError("config file must hold a mapping")
            base = str(p.parent)
        for key, val in (overrides or {}).items():
            if val is not None:
                set_dotted(doc, key, val)
        return cls.from_dict(doc, base)

    def resolve(self, name: str) -> Path:
        p = Path(name)
        return p if p.is_absolute() else Path(self.config_dir) / p

    def check_files(self):
        if self.case != "ieee118" and not self.resolve(self.case).is_file():
            raise FileNotFoundError(f"case file not found: {self.case}")
        if isinstance(self.placement, str) and not self.resolve(self.placement).is_file():
            raise FileNotFoundError(f"placement file not found: {self.placement}")
        hist = self.injection.get("history")
        if hist and not self.resolve(hist).is_file():
            raise FileNotFoundError(f"injection history not found: {hist}")

    # --- builders ------------------------------------------------------------------
    def load_case(self) -> NetworkCase:
        return ieee118() if self.case == "ieee118" else load_case(self.resolve(self.case))

    def pmu_buses(self, case: NetworkCase) -> list[int]:
        if self.placement is None:
            if case.name != "case118":
                raise CaseValidationError("a placement is required for cases other than the 118-bus system")
            return list(IEEE118_PMU_BUSES)
        if isinstance(self.placement, str):
            return load_placement(self.resolve(self.placement))
        return [int(b) for b in self.placement]

    def injection_model(self, case: NetworkCase) -> InjectionModel:
        spec = dict(self.injection)
        kind = spec.pop("kind", "parametric")
        if kind == "parametric":
            return parametric_model(case, float(spec.get("pct_std", 5.0)), float(spec.get("v_std", 0.0)))
        if kind == "kde":
            from pmuse.sampler import fit_kde, load_history

            return fit_kde(load_history(self.resolve(spec["history"])), spec.get("bandwidth", "silverman"))
        raise ValueError(f"unknown injection kind {kind!r}")

    def noise_model(self) -> NoiseModel:
        if isinstance(self.noise, str):
            return noise_preset(self.noise)
        return NoiseModel.from_dict(self.noise)

    def mlp_config(self) -> MlpConfig:
        spec = dict(self.mlp)
        name = spec.pop("preset", "ieee118")
        over = spec.pop("overrides", {}) or {}
        over.update(spec)
        over.setdefault("seed", self.sub_seed("init"))
        over.setdefault("train_seed", self.sub_seed("dropout"))
        return preset(name, **over)

    def bddc_config(self) -> BddcConfig:
        return BddcConfig(**self.bddc)

    # --- seeds and manifests --------------------------------------------------------
    def sub_seed(self, stream: str) -> int:
        """Seed of a named stream; changing one stream's consumer leaves the others alone."""
        if stream not in SEED_STREAMS:
            raise ValueError(f"unknown seed stream {stream!r}")
        ss = np.random.SeedSequence([int(self.seed), zlib.crc32(stream.encode())])
        return int(ss.generate_state(1)[0])

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc.pop("config_dir")
        return doc

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_output(self, output) -> "RunConfig":
        return replace(self, output=str(output))


def set_dotted(doc: dict, key: str, value):
    """Set ``a.b.c`` in a nested mapping, creating levels as needed."""
    parts = key.split(".")
    cur = doc
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
    cur[parts[-1]] = value


def versions() -> dict:
    from importlib.metadata import version

    import matplotlib
    import scipy

    from pmuse import __version__

    return {
        "pmuse": __version__,
        "python": sys.version.split()[0],
        "platform": platform.platform(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "matplotlib": matplotlib.__version__,
        "click": version("click"),
        "pyyaml": yaml.__version__,
    }


def write_manifest(out_dir, command: str, cfg: RunConfig, extra: dict | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "command": command,
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "seeds": {s: cfg.sub_seed(s) for s in SEED_STREAMS},
        "versions": versions(),
    }
    if extra:
        doc.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, default=str))
    return path
