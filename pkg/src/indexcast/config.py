"""Run configuration: defaults, JSON file loading, and flag overrides."""

import json
from dataclasses import asdict, dataclass, field, replace
from datetime import date
from typing import Optional

from .errors import InputError
from .forest import ForestConfig
from .gcn import TrainConfig
from .margin import MarginConfig

VARIANTS = (
    "none",
    "random_seed_selection",
    "most_predictable_only",
    "cluster_on_prediction_network",
    "indices_as_nodes",
)

DEFAULT_K_CLUSTER_CANDIDATES = (10, 15, 20, 25, 30)


@dataclass(frozen=True)
class RunConfig:
    bars_path: str = "bars.csv"
    manifest_path: str = "manifest.json"
    test_start: Optional[date] = None
    test_end: Optional[date] = None
    blend_lambda: float = 0.7
    k_neighbors: int = 8
    k_clusters: int = 20
    sweep_k_clusters: bool = False
    k_cluster_candidates: tuple = DEFAULT_K_CLUSTER_CANDIDATES
    train_days: int = 250
    validation_days: int = 20
    graph_rebuild_days: int = 30
    weight_update_days: int = 60
    constituents_per_index: Optional[int] = 100
    variant: str = "none"
    influence_top_k: Optional[int] = None
    prune_mode: str = "stop_at_first_bridge"
    seed: int = 0
    n_jobs: int = 1
    forest: ForestConfig = field(default_factory=ForestConfig)
    margin: MarginConfig = field(default_factory=MarginConfig)
    gcn: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if not 0.0 < self.blend_lambda < 1.0:
            raise InputError(f"lambda must be in (0,1), got {self.blend_lambda}")
        if self.graph_rebuild_days < 1 or self.weight_update_days < 1:
            raise InputError("rebuild cadences must be >= 1")
        if self.variant not in VARIANTS:
            raise InputError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.validation_days < 1 or self.train_days < 1:
            raise InputError("window lengths must be >= 1")

    @property
    def effective_rebuild_days(self) -> int:
        # the full rebuild subsumes the weight refresh, so the network is
        # refreshed at whichever cadence comes first
        return min(self.graph_rebuild_days, self.weight_update_days)

    def snapshot(self) -> dict:
        raw = asdict(self)
        raw["test_start"] = self.test_start.isoformat() if self.test_start else None
        raw["test_end"] = self.test_end.isoformat() if self.test_end else None
        raw["k_cluster_candidates"] = list(self.k_cluster_candidates)
        return raw


_DATE_KEYS = ("test_start", "test_end")
_BLOCK_KEYS = {"forest": ForestConfig, "margin": MarginConfig, "gcn": TrainConfig}
_ALIASES = {"lambda": "blend_lambda"}


def config_from_dict(raw: dict, base: Optional[RunConfig] = None) -> RunConfig:
    base = base or RunConfig()
    kwargs = {}
    for key, value in raw.items():
        key = _ALIASES.get(key, key)
        if key in _DATE_KEYS and value is not None:
            value = date.fromisoformat(value)
        elif key in _BLOCK_KEYS and isinstance(value, dict):
            value = replace(getattr(base, key), **value)
        elif key == "k_cluster_candidates":
            value = tuple(value)
        kwargs[key] = value
    unknown = set(kwargs) - set(RunConfig.__dataclass_fields__)
    if unknown:
        raise InputError(f"unknown config keys: {sorted(unknown)}")
    return replace(base, **kwargs)


def load_config(path, base: Optional[RunConfig] = None) -> RunConfig:
    with open(path) as fh:
        raw = json.load(fh)
    return config_from_dict(raw, base=base)
