"""Built-in experiment presets.

The first nine are the named demonstrations; the rest reproduce one
acceptance criterion each (``CRITERION_PRESETS`` maps criterion numbers to
preset names).
"""
from __future__ import annotations

import copy

from .config import ExperimentConfig, apply_override

_COS = [{"k": [1]}]
_DUALITY_TERMINAL = [{"k": [1, 0]}, {"k": [1, 2], "amp": 0.5, "phase": -1.5707963267948966}]

PRESETS: dict[str, dict] = {
    "brownian_baseline": {
        "description": "b = 0 in d = 2: invariance, martingale, Ito oracle and duality on one mode",
        "grid": {"dim": 2, "N": 32},
        "drift": {"name": "zero"},
        "sim": {"dt": 1e-3, "T": 0.5, "n_paths": 10_000, "export": "none"},
        "kbe": {"dt": 1e-3, "T": 0.5, "terminal": _COS},
        "diagnostics": [
            {"name": "incompressibility", "params": {"times": [0.25, 0.5]}},
            {"name": "martingale", "params": {"f": _COS}},
            {"name": "ito_trick", "params": {"f": _COS, "oracle": True}},
            {"name": "duality"},
            {"name": "variance_growth"},
            {"name": "energy_balance", "params": {"tol": 1e-10}},
        ],
    },
    "ito_trick_scaling": {
        "description": "Ito trick closed-form oracle at T = 0.5 and T-scaling exponent fit",
        "grid": {"dim": 1, "N": 16},
        "drift": {"name": "zero"},
        "sim": {"dt": 1e-3, "T": 2.0, "n_paths": 20_000, "export": "none"},
        "diagnostics": [
            {"name": "ito_trick", "params": {"f": _COS, "oracle": True, "horizon": 0.5,
                                             "scaling_horizons": [0.25, 0.5, 1.0, 2.0]}},
        ],
    },
    "invariance_shear": {
        "description": "Lebesgue invariance for shear and GFF-curl drifts at two time steps",
        "grid": {"dim": 2, "N": 64},
        "drift": [{"name": "shear", "mollify_n": None},
                  {"name": "gff_curl", "params": {"alpha": 1.5}, "mollify_n": 16}],
        "sim": {"dt": [1e-3, 5e-4], "T": 1.0, "n_paths": 10_000, "save_every": 0.25, "export": "none"},
        "diagnostics": [{"name": "incompressibility", "params": {"times": [0.25, 0.5, 1.0]}}],
    },
    "duality_gff": {
        "description": "PDE-SDE duality for the mollified GFF-curl drift",
        "grid": {"dim": 2, "N": 64},
        "drift": {"name": "gff_curl", "params": {"alpha": 1.5}},
        "mollify_n": 16,
        "sim": {"dt": 1e-3, "T": 0.5, "n_paths": 20_000, "save_every": 0.05, "export": "csv",
                "init": {"law": "density", "terms": _COS}},
        "kbe": {"dt": 1e-3, "T": 0.5, "terminal": _DUALITY_TERMINAL},
        "diagnostics": [{"name": "duality"}, {"name": "apriori"}],
    },
    "morrey_demo": {
        "description": "Morrey counterexample: local functional bounded, shifted-centre functional grows",
        "grid": {"dim": 2, "N": 512},
        "drift": {"name": "morrey"},
        "diagnostics": [{"name": "structural_drift", "params": {"K": {"points": [[0.0, 0.0]]}}}],
    },
    "cutoff_demo": {
        "description": "Cutoff functions g_eps around a point and a segment",
        "grid": {"dim": 2, "N": 256},
        "diagnostics": [{"name": "cutoff", "params": {
            "K": {"points": [[0.25, 0.25]], "segments": [[[0.5, 0.3], [0.5, 0.7]]]},
            "eps": [0.125, 0.0625, 0.03125]}}],
    },
    "resolvent_sweep": {
        "description": "Resolvent residual contract and sigma_min sweep for the GFF-curl drift",
        "diagnostics": [{"name": "resolvent_sweep", "params": {
            "lams": [16.0, 32.0, 64.0, 128.0, 256.0], "Ns": [32, 64], "alpha": 1.5}}],
    },
    "particle_pair": {
        "description": "Two particles on the circle with a lifted sine drift",
        "grid": {"dim": 2, "N": 32},
        "drift": {"name": "particle_lift", "params": {"n_particles": 2, "base": "sine", "amplitude": 1.0}},
        "sim": {"dt": 1e-3, "T": 0.5, "n_paths": 5_000, "export": "binary"},
        "kbe": {"dt": 1e-3, "T": 0.5, "terminal": [{"k": [1, -1]}]},
        "diagnostics": [{"name": "martingale", "params": {"f": [{"k": [1, -1]}]}},
                        {"name": "duality"}, {"name": "variance_growth"}],
    },
    "variance_gff": {
        "description": "Exploratory mean-square displacement for the GFF-curl drift across mollification",
        "grid": {"dim": 2, "N": 64},
        "drift": {"name": "gff_curl", "params": {"alpha": 1.5}},
        "mollify_n": [4.0, 8.0, 16.0, 32.0],
        "sim": {"dt": 1e-3, "T": 2.0, "n_paths": 4_000, "save_every": 0.25, "export": "none"},
        "diagnostics": [{"name": "variance_growth"}],
    },
    # ------------------------------------------------------------ one per acceptance criterion
    "spectral_identities": {
        "description": "Transform round trip, Parseval and multiplier composition",
        "diagnostics": [{"name": "spectral_identities", "params": {"n_fields": 100}}],
    },
    "helmholtz_identity": {
        "description": "Helmholtz reconstruction and potential round trip",
        "diagnostics": [{"name": "helmholtz_identity", "params": {"n_drifts": 100}}],
    },
    "skew_identity": {
        "description": "Skew identity of the antisymmetric part for every library potential",
        "diagnostics": [{"name": "skew_identity", "params": {"n_fields": 50}}],
    },
    "besov_layer": {
        "description": "Littlewood-Paley partition, paraproduct identity and norm chain",
        "diagnostics": [{"name": "besov_identities", "params": {"n_fields": 200}}],
    },
    "kbe_oracles": {
        "description": "Heat slices, constant drift, maximum principle and energy ledger",
        "diagnostics": [{"name": "kbe_oracles"}],
    },
    "structural_conditions": {
        "description": "Point singularity tabulation, cutoff invariants and the Morrey counterexample",
        "diagnostics": [{"name": "structural_conditions"}],
    },
    "mollified_convergence_gff": {
        "description": "W1 distances of displacement marginals along n = 4, 8, 16, 32",
        "grid": {"dim": 2, "N": 64},
        "drift": {"name": "gff_curl", "params": {"alpha": 1.5}},
        "diagnostics": [{"name": "mollified_convergence", "params": {
            "n_list": [4, 8, 16, 32], "dt": 1e-3, "T": 0.5, "n_paths": 10_000}}],
    },
    "determinism": {
        "description": "Every other preset twice, with 1 and 4 worker threads; reports must be byte-identical",
        "diagnostics": [{"name": "determinism", "params": {"threads": [1, 4]}}],
    },
}

CRITERION_PRESETS = {
    1: "spectral_identities",
    2: "helmholtz_identity",
    3: "skew_identity",
    4: "besov_layer",
    5: "ito_trick_scaling",
    6: "invariance_shear",
    7: "kbe_oracles",
    8: "duality_gff",
    9: "resolvent_sweep",
    10: "structural_conditions",
    11: "mollified_convergence_gff",
    12: "determinism",
}


def preset_dict(name: str, overrides=()) -> dict:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; see `sdl list`")
    data = copy.deepcopy(PRESETS[name])
    data.pop("description", None)
    data["experiment"] = name
    for spec in overrides:
        apply_override(data, spec)
    return data


def preset_config(name: str, overrides=()) -> ExperimentConfig:
    return ExperimentConfig.model_validate(preset_dict(name, overrides))


def preset_table() -> list[tuple[str, str]]:
    crit = {v: k for k, v in CRITERION_PRESETS.items()}
    rows = []
    for name, spec in PRESETS.items():
        desc = spec.get("description", "")
        if name in crit:
            desc = f"[criterion {crit[name]}] {desc}"
        rows.append((name, desc))
    return rows
