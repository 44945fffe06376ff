"""Results JSON, schema version 1.

Layout (insertion order is the stable key order):

    {"schema": 1,
     "config": {...},
     "per_trial": [{"acc_pl", "acc_proxy", "max_error", "labels"}, ...],
     "summary": {"mean": {...}, "std": {...}, "empirical_beta": ...},
     "budget_ledger_summary": {...}}
"""
from __future__ import annotations

import json
import math

import numpy as np

SCHEMA_VERSION = 1

_TRIAL_KEYS = ("acc_pl", "acc_proxy", "max_error")


def _clean(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def build_results(
    config: dict,
    per_trial: list[dict],
    budget_ledger_summary: dict,
    theoretical_eta: float | None = None,
) -> dict:
    """Assemble the schema-1 results document from per-trial records."""
    if not per_trial:
        raise ValueError("results need at least one trial")
    trials = []
    for record in per_trial:
        trials.append(
            {
                "acc_pl": _clean(record.get("acc_pl")),
                "acc_proxy": _clean(record.get("acc_proxy")),
                "max_error": _clean(record.get("max_error")),
                "labels": _clean(record.get("labels")),
            }
        )
    mean, std = {}, {}
    for key in _TRIAL_KEYS:
        values = [t[key] for t in trials if t[key] is not None]
        if values:
            mean[key] = float(np.mean(values))
            std[key] = float(np.std(values))
        else:
            mean[key] = None
            std[key] = None
    empirical_beta = None
    if theoretical_eta is not None and not math.isinf(theoretical_eta):
        errors = [t["max_error"] for t in trials if t["max_error"] is not None]
        if errors:
            empirical_beta = float(np.mean([err >= theoretical_eta for err in errors]))
    return {
        "schema": SCHEMA_VERSION,
        "config": {key: _clean(val) for key, val in config.items()},
        "per_trial": trials,
        "summary": {"mean": mean, "std": std, "empirical_beta": empirical_beta},
        "budget_ledger_summary": {key: _clean(val) for key, val in budget_ledger_summary.items()},
    }


def write_results(results: dict, path) -> None:
    text = json.dumps(results, indent=2)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def read_results(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
