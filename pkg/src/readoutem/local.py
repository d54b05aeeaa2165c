"""Unstructural mitigation of few-bit correlations, plus the bootstrap harness.

Under the independent noise model the marginal of ``RQ`` over a bit subset
is the restricted channel applied to the marginal of ``Q``; LSQ and IBU can
therefore run on ``2**l``-dimensional marginals for any register size.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import BitSubset, ShotRecord, ValidationError, empirical_marginal, global_correlation
from .ibu import IbuConfig, mitigate_full_ibu
from .lsq import mitigate_full_lsq
from .noise_model import ProductChannel, SingularChannelError
from .structural import EmConfig, fit_mixture, model_correlation

METHODS = ("raw", "lsq", "ibu")


@dataclass(frozen=True)
class LocalProtocolConfig:
    l: int
    groups: int = 300
    methods: tuple[str, ...] = METHODS
    seed: int = 0
    dedup: bool = False

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.l < 1:
            raise ValidationError("subgroup size l must be at least 1")
        if self.groups < 1:
            raise ValidationError("groups must be at least 1")
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise ValidationError(f"methods must be a non-empty subset of {METHODS}, got {self.methods}")


@dataclass(frozen=True)
class BootstrapConfig:
    resamples: int = 190
    resample_size: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.resamples < 1 or self.resample_size < 1:
            raise ValidationError("resamples and resample_size must be at least 1")


@dataclass
class SubgroupResult:
    subset: BitSubset
    values: dict[str, float | None]
    ibu_converged: bool | None = None


@dataclass
class LocalProtocolResult:
    config: LocalProtocolConfig
    means: dict[str, float]
    groups: list[SubgroupResult]
    skipped_lsq: list[int] = field(default_factory=list)
    unconverged_ibu: list[int] = field(default_factory=list)


@dataclass
class BootstrapResult:
    mean: float
    std: float
    values: list[float]


def sample_subgroups(n: int, cfg: LocalProtocolConfig) -> list[BitSubset]:
    """``cfg.groups`` independent uniform l-subsets of ``range(n)``.

    Repeats across the list are allowed unless ``cfg.dedup`` is set, in which
    case the number of groups is capped at ``C(n, l)``.
    """
    if cfg.l > n:
        raise ValidationError(f"subgroup size {cfg.l} exceeds register size {n}")
    rng = np.random.default_rng(cfg.seed)
    target = min(cfg.groups, math.comb(n, cfg.l)) if cfg.dedup else cfg.groups
    out: list[BitSubset] = []
    seen: set[tuple[int, ...]] = set()
    while len(out) < target:
        idx = tuple(sorted(int(i) for i in rng.choice(n, size=cfg.l, replace=False)))
        if cfg.dedup:
            if idx in seen:
                continue
            seen.add(idx)
        out.append(BitSubset(idx))
    return out


def run_local_protocol(
    record: ShotRecord,
    ch: ProductChannel,
    cfg: LocalProtocolConfig,
    ibu_cfg: IbuConfig | None = None,
) -> LocalProtocolResult:
    """Per-subgroup C_l by each method, averaged over the sampled subgroups.

    Subgroups whose restricted channel is singular get ``None`` for lsq and
    are listed in ``skipped_lsq``; IBU subgroups that hit the iteration budget
    keep their last iterate and are listed in ``unconverged_ibu``.
    """
    if ch.n != record.n:
        raise ValidationError(f"channel has {ch.n} qubits, record has {record.n}")
    ibu_cfg = ibu_cfg or IbuConfig(track_objective=False)
    subsets = sample_subgroups(record.n, cfg)
    groups: list[SubgroupResult] = []
    skipped: list[int] = []
    unconverged: list[int] = []
    for i, subset in enumerate(subsets):
        marginal = empirical_marginal(record, subset)
        local_ch = ch.restrict(subset)
        values: dict[str, float | None] = {}
        converged = None
        if "raw" in cfg.methods:
            values["raw"] = global_correlation(marginal)
        if "lsq" in cfg.methods:
            try:
                values["lsq"] = global_correlation(mitigate_full_lsq(marginal, local_ch))
            except SingularChannelError:
                values["lsq"] = None
                skipped.append(i)
        if "ibu" in cfg.methods:
            res = mitigate_full_ibu(marginal, local_ch, ibu_cfg)
            values["ibu"] = global_correlation(res.q)
            converged = res.converged
            if not converged:
                unconverged.append(i)
        groups.append(SubgroupResult(subset, values, converged))
    means = {}
    for method in cfg.methods:
        vals = [g.values[method] for g in groups if g.values[method] is not None]
        means[method] = math.fsum(vals) / len(vals) if vals else math.nan
    return LocalProtocolResult(cfg, means, groups, skipped, unconverged)


def bootstrap_statistic(
    record: ShotRecord,
    cfg: BootstrapConfig,
    statistic: Callable[[ShotRecord], float],
) -> BootstrapResult:
    """Apply ``statistic`` to resamples drawn with replacement; std uses ddof=1."""
    rng = np.random.default_rng(cfg.seed)
    values = []
    for _ in range(cfg.resamples):
        idx = rng.integers(0, record.m, size=cfg.resample_size)
        values.append(float(statistic(record.take(idx))))
    arr = np.array(values)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return BootstrapResult(float(arr.mean()), std, values)


def structural_cn(ch: ProductChannel, em_cfg: EmConfig | None = None) -> Callable[[ShotRecord], float]:
    """Statistic: C_n of the fitted mixture model."""
    em_cfg = em_cfg or EmConfig()

    def statistic(rec: ShotRecord) -> float:
        return model_correlation(fit_mixture(rec, ch, em_cfg).model)

    return statistic


def local_cl(
    ch: ProductChannel,
    cfg: LocalProtocolConfig,
    method: str = "lsq",
    ibu_cfg: IbuConfig | None = None,
) -> Callable[[ShotRecord], float]:
    """Statistic: subgroup-averaged C_l for one method."""
    if method not in METHODS:
        raise ValidationError(f"unknown method {method!r}")
    sub_cfg = LocalProtocolConfig(cfg.l, cfg.groups, (method,), cfg.seed, cfg.dedup)

    def statistic(rec: ShotRecord) -> float:
        return run_local_protocol(rec, ch, sub_cfg, ibu_cfg).means[method]

    return statistic


def method_table(result: LocalProtocolResult) -> list[tuple[str, int, float | None]]:
    """Rows ``(method, subgroup_index, value)``, method-major."""
    return [
        (method, i, g.values[method])
        for method in result.config.methods
        for i, g in enumerate(result.groups)
    ]

