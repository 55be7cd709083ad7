"""YAML experiment configuration and the run manifest.

The config file mirrors the configuration dataclasses section by section:

    scenario:
      geom: {k_t: 3, k_r: 4, spacing_over_lambda: 0.5}
      primary_count_pmf: {1: 0.40, 2: 0.30, 3: 0.15, 4: 0.10, 5: 0.05}
      secondary_count_pmf: {0: 0.25, 1: 0.25, 2: 0.25, 3: 0.25}
      primary_amp_db_range: [-10.0, 0.0]
      secondary_amp_db_range: [-20.0, -10.0]
      doa_range_deg: [-90.0, 90.0]
      snr_db: 20.0
      noise_enabled: true
      imbalance: {kind: random, phase_range_deg: [-20.0, 20.0], gain_range: [-0.2, 0.2]}
      sbb_injection: {side: rx, index: 3, offset_deg: 30.0, at_iteration: 1000}
      n_iterations: 2000
      n_mcs: 1000
      seed: 1
    estimator:
      step_schedule: [[1, 0.1]]
    clean: {fft_len: 1024, stop_ratio_db: -15.0, max_targets: 10}
    sbb: {delta: 15.0, mu_0_fast: 3.0}
    replay: {file: recording.txt}

Any section or key may be omitted; defaults apply.
"""

import dataclasses
import json
import subprocess
from pathlib import Path

import numpy as np
import yaml

from ..array_model import ArrayGeometry
from ..factorization import SbbConfig
from ..nlms import EstimatorConfig
from ..reconstruction import CleanConfig
from .scenario import ImbalanceSpec, SbbInjection, ScenarioConfig


def _complex_pairs(values):
    return tuple(complex(re, im) for re, im in values)


def scenario_from_dict(data: dict) -> ScenarioConfig:
    data = dict(data or {})
    kwargs = {}
    if "geom" in data:
        kwargs["geom"] = ArrayGeometry(**data.pop("geom"))
    if "imbalance" in data:
        imb = dict(data.pop("imbalance"))
        for key in ("xi_t", "xi_r"):
            if imb.get(key) is not None:
                imb[key] = _complex_pairs(imb[key])
        for key in ("phase_range_deg", "gain_range"):
            if key in imb:
                imb[key] = tuple(imb[key])
        kwargs["imbalance"] = ImbalanceSpec(**imb)
    if "sbb_injection" in data:
        inj = data.pop("sbb_injection")
        kwargs["sbb_injection"] = SbbInjection(**inj) if inj else None
    for key in ("primary_amp_db_range", "secondary_amp_db_range", "doa_range_deg"):
        if key in data:
            data[key] = tuple(data[key])
    kwargs.update(data)
    return ScenarioConfig(**kwargs)


def estimator_from_dict(data: dict, k: int) -> EstimatorConfig:
    data = dict(data or {})
    schedule = data.get("step_schedule", [[1, 0.1]])
    return EstimatorConfig(
        step_schedule=tuple((int(s), float(m)) for s, m in schedule), k=k
    )


def clean_from_dict(data: dict) -> CleanConfig:
    return CleanConfig(**(data or {}))


def sbb_from_dict(data: dict) -> SbbConfig:
    return SbbConfig(**(data or {}))


class ExperimentSetup:
    """Resolved configuration bundle for one CLI run."""

    def __init__(self, raw: dict):
        self.raw = raw
        self.scenario = scenario_from_dict(raw.get("scenario", {}))
        self.estimator = estimator_from_dict(raw.get("estimator", {}), self.scenario.geom.k)
        self.clean = clean_from_dict(raw.get("clean", {}))
        self.sbb = sbb_from_dict(raw.get("sbb", {}))
        self.replay_file = (raw.get("replay") or {}).get("file")

    def resolved_dict(self) -> dict:
        return {
            "scenario": _as_plain(self.scenario),
            "estimator": {"step_schedule": [list(p) for p in self.estimator.step_schedule]},
            "clean": _as_plain(self.clean),
            "sbb": _as_plain(self.sbb),
            "replay": {"file": self.replay_file},
        }


def load_setup(path: str | Path | None) -> ExperimentSetup:
    raw = {}
    if path is not None:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    return ExperimentSetup(raw)


def _as_plain(obj):
    """Dataclass tree to JSON/YAML-safe plain structures."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _as_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _as_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_as_plain(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=5,
        )
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.TimeoutExpired):
        return "unknown"


def write_manifest(out_dir: str | Path, setup: ExperimentSetup, command: str, extra: dict | None = None) -> Path:
    """Write the experiment manifest: resolved config, seed, code version."""
    path = Path(out_dir) / "manifest.json"
    manifest = {
        "command": command,
        "seed": setup.scenario.seed,
        "config": setup.resolved_dict(),
        "git_describe": git_describe(),
    }
    if extra:
        manifest.update(extra)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
