"""End-to-end fit: surge model, extremal index and maxima variant from records."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .exi import ExiModel, fit_exi_model
from .ingest import Records, TidalSampleSet
from .maxima import VARIANTS, VariantSpec, return_level
from .surgedist.model import SurgeModel, fit_surge_model

#: surge model preset used by each maxima variant
VARIANT_SURGE = {
    "current": "stationary",
    "baseline": "stationary",
    "seasonal_surge": "seasonal",
    "seasonal_tide": "stationary",
    "full_seasonal": "seasonal",
    "interaction": "interaction",
    "temporal_dependence": "interaction",
}

#: run lengths and expected block sizes for the named study sites
SITE_PRESETS = {
    "heysham": {"run_length": 2, "block_size": 19},
    "lowestoft": {"run_length": 10, "block_size": 5},
    "newlyn": {"run_length": 1, "block_size": 20},
    "sheerness": {"run_length": 10, "block_size": 6},
}


@dataclass(frozen=True)
class PipelineConfig:
    variant: str = "temporal_dependence"
    q_u: float = 0.95
    run_length: int = 2
    v_quantile: float = 0.99
    prior: tuple[float, float] | None = None
    seed: int = 0
    tail: str | None = None
    rate: str | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if not 0 < self.q_u < 1 or not 0 < self.v_quantile < 1:
            raise ValueError("quantile levels must lie in (0, 1)")
        if self.run_length < 1:
            raise ValueError("run length must be at least 1")

    def with_variant(self, variant: str) -> "PipelineConfig":
        return replace(self, variant=variant)


@dataclass(frozen=True)
class FittedPipeline:
    config: PipelineConfig
    surge: SurgeModel
    exi: ExiModel | None
    spec: VariantSpec = field(repr=False)

    def return_levels(self, p) -> np.ndarray:
        return np.array([return_level(self.spec, float(q)) for q in np.atleast_1d(p)])

    def to_dict(self) -> dict:
        return {
            "config": {**self.config.__dict__, "prior": list(self.config.prior) if self.config.prior else None},
            "surge_model": self.surge.to_dict(),
            "exi": self.exi.to_dict() if self.exi is not None else None,
            "tides": self.spec.tides.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict, records: Records, tides: TidalSampleSet) -> "FittedPipeline":
        """Rebuild a fitted pipeline saved by :meth:`to_dict` from its records and tides."""
        cfg = dict(d["config"])
        if cfg.get("prior") is not None:
            cfg["prior"] = tuple(cfg["prior"])
        config = PipelineConfig(**cfg)
        surge = SurgeModel.from_dict(d["surge_model"], records)
        exi = ExiModel.from_dict(d["exi"]) if d.get("exi") else None
        return cls(config, surge, exi, VariantSpec(config.variant, surge, tides, exi))


def fit_pipeline(records: Records, tides: TidalSampleSet, config: PipelineConfig,
                 exi_template: ExiModel | None = None) -> FittedPipeline:
    """Fit every component needed by ``config.variant``.

    ``exi_template`` fixes the level grid, ``v`` and run length of the
    extremal index refit (used when refitting bootstrap replicates).
    """
    surge = fit_surge_model(records, VARIANT_SURGE[config.variant], tail=config.tail, rate=config.rate,
                            q_u=config.q_u, prior=config.prior, seed=config.seed)
    exi = None
    if config.variant == "temporal_dependence":
        if exi_template is None:
            exi = fit_exi_model(records.skew_surge, config.run_length, v_quantile=config.v_quantile)
        else:
            exi = fit_exi_model(records.skew_surge, exi_template.r, v=exi_template.v, grid=exi_template.grid)
    spec = VariantSpec(config.variant, surge, tides, exi)
    return FittedPipeline(config, surge, exi, spec)


__all__ = ["FittedPipeline", "PipelineConfig", "SITE_PRESETS", "VARIANT_SURGE", "fit_pipeline"]
