"""Hierarchical duplicated-region detection between image pairs."""

import csv
import io

from ._core import (
    Model,
    ScaleConfig,
    budget_table_csv,
    desk_config,
    exact_overlap,
    flexible_margin,
    flexible_margin_loss,
    generate_template,
    margin_rank_loss,
    mcc,
    naive_budget,
    ours_budget,
)

__all__ = [
    "Model",
    "ScaleConfig",
    "budget_table",
    "budget_table_csv",
    "desk_config",
    "exact_overlap",
    "flexible_margin",
    "flexible_margin_loss",
    "generate_template",
    "margin_rank_loss",
    "mcc",
    "naive_budget",
    "ours_budget",
]


def budget_table(cfg):
    """Rows of {scale, patch_dim, naive, ours}, top scale first."""
    rows = csv.DictReader(io.StringIO(budget_table_csv(cfg)))
    return [{k: int(v) for k, v in r.items() if k in ("scale", "patch_dim", "naive", "ours")} for r in rows]
