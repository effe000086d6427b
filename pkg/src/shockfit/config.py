"""Run configuration: one YAML document per run, defaults applied, effective
settings echoed verbatim into every output header for reproducibility."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import yaml

from . import network as networks
from . import optimizer as opt
from . import problems as prob
from .exceptions import ConfigError
from .fvm import dataset as dsio
from .fvm import mhd
from .fvm.reactions import ReactionParams

__all__ = ["RunConfig", "DEFAULTS"]

DEFAULTS: dict = {
    "problem": {
        "name": "sod",                  # sod | sod_gamma_scan | enriched_model
        "kind": "navier_stokes",        # euler | navier_stokes (sod only)
        "tau": 0.005,
        "kappa": 0.0,
        "gamma_range": [1.1, 2.0],
        "loss_form": "mse",
        "source_weight": prob.MODEL_SOURCE_WEIGHT,
    },
    "network": {
        "kind": "mlp",                  # mlp | gated
        "depth": 16,
        "width": 128,
        "activation": "tanh",
    },
    "train": {
        "iterations": 100000,
        "batch": [5000, 500, 500],
        "optimizer": "adam",
        "lr": {"initial": 1e-4, "decay_factor": 0.1, "decay_every": 25000},
        "anneal": None,                 # or {tau_smooth, stage_length, factors, mode}
        "seed": 0,
        "checkpoint_every": 5000,
        "record_every": 100,
        "chunk_size": 1250,
        "data_batch": 1024,
    },
    "supervision": {
        "dataset": None,                # experiment dataset path
        "weight": 1.0,
    },
    "exact": {"gamma": prob.SOD_GAMMA, "t": 0.2, "nx": 1000},
    "fvm": {
        "order": 1,
        "n_vol": 72,
        "t_end": 0.2,
        "cfl": 0.4,
        "gamma": prob.SOD_GAMMA,
    },
    "experiment": {
        "n_vol": 1000,
        "t_end": 0.1,
        "snapshot_grid": list(prob.EXPERIMENT_GRID),
        "sigma": 0.1,
        "substeps": 2,
    },
    "compare": {
        "checkpoint": None,
        "fvm_rows": [[1, 72], [2, 72]],    # (order, n_vol)
        "t": 0.2,
        "nx": 1000,
    },
    "scan": {
        "checkpoint": None,
        "gamma_values": [1.2, 1.4, prob.SOD_GAMMA, 1.8, 2.0],
        "t": 0.2,
        "nx": 1000,
    },
    "enrich_report": {
        "checkpoint": None,
        "dataset": None,
        "truth": None,                  # {amplitude, sigma, center} Gaussian mass source
    },
    "gradcheck": {
        "depth": 3,
        "width": 16,
        "points": 10,
        "tol": 1e-6,
        "seed": 0,
    },
    "figures": True,
}


def _deep_merge(base: dict, override: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown configuration key {here!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(base[key], value, here)
        else:
            out[key] = value
    return out


class RunConfig:
    """Validated configuration document with builder helpers per module."""

    def __init__(self, raw: dict | None = None):
        raw = raw or {}
        if not isinstance(raw, dict):
            raise ConfigError("configuration document must be a mapping")
        self.effective = _deep_merge(DEFAULTS, raw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        text = Path(path).read_text()
        return cls(yaml.safe_load(text) or {})

    def echo(self) -> str:
        """Canonical one-line JSON of the effective settings."""
        return json.dumps(self.effective, sort_keys=True)

    def override_seed(self, seed: int | None):
        if seed is not None:
            self.effective["train"]["seed"] = int(seed)
            self.effective["gradcheck"]["seed"] = int(seed)

    # -- builders ------------------------------------------------------------

    def problem(self) -> prob.ProblemSpec:
        p = self.effective["problem"]
        name = p["name"]
        if name == "sod":
            return prob.sod_problem(kind=p["kind"], tau=p["tau"])
        if name == "sod_gamma_scan":
            return prob.sod_problem(gamma_axis=tuple(p["gamma_range"]),
                                    kind=p["kind"], tau=p["tau"])
        if name == "enriched_model":
            sup = self.supervision()
            if sup is None:
                raise ConfigError("problem.name=enriched_model needs "
                                  "supervision.dataset")
            return prob.enriched_model_problem(
                sup, tau=p["tau"], kappa=p["kappa"],
                source_weight=p["source_weight"])
        raise ConfigError(f"unknown problem.name {name!r}")

    def supervision(self) -> prob.DataSupervision | None:
        s = self.effective["supervision"]
        if s["dataset"] is None:
            return None
        ds = dsio.read_dataset(s["dataset"])
        points, targets = ds.supervision_arrays()
        return prob.DataSupervision(points=points, targets=targets,
                                    weight=float(s["weight"]),
                                    n_batch=int(self.effective["train"]["data_batch"]),
                                    grid_shape=ds.grid_shape)

    def network(self, d_in: int, d_out: int):
        n = self.effective["network"]
        if n["kind"] == "mlp":
            return networks.MlpConfig.uniform(d_in, d_out, int(n["depth"]),
                                              int(n["width"]), n["activation"])
        if n["kind"] == "gated":
            return networks.GatedConfig(d_in, d_out, int(n["depth"]),
                                        int(n["width"]))
        raise ConfigError(f"unknown network.kind {n['kind']!r}")

    def train_config(self, checkpoint_path=None) -> opt.TrainConfig:
        t = self.effective["train"]
        lr = opt.LrSchedule(**t["lr"])
        anneal = None
        if t["anneal"]:
            a = dict(t["anneal"])
            if "factors" in a:
                a["factors"] = tuple(a["factors"])
            anneal = opt.AnnealSchedule(**a)
        return opt.TrainConfig(
            iterations=int(t["iterations"]),
            batch_counts=tuple(int(c) for c in t["batch"]),
            lr=lr, optimizer=t["optimizer"], anneal=anneal,
            seed=int(t["seed"]), checkpoint_every=int(t["checkpoint_every"]),
            checkpoint_path=str(checkpoint_path) if checkpoint_path else None,
            record_every=int(t["record_every"]),
            chunk_size=int(t["chunk_size"]))

    def experiment_config(self) -> mhd.MhdConfig:
        e = self.effective["experiment"]
        return mhd.MhdConfig(
            n_vol=int(e["n_vol"]), t_end=float(e["t_end"]),
            snapshot_grid=tuple(int(v) for v in e["snapshot_grid"]),
            reactions=ReactionParams(sigma=float(e["sigma"])),
            reaction_substeps=int(e["substeps"]))
