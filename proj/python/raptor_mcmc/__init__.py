"""Regional adaptive Metropolis samplers with online-EM partitions."""

from ._core import (
    BananaSpec,
    ConfigError,
    DomainError,
    GaussMixSpec,
    MixtureState,
    OnlineEm,
    RaptorError,
    banana_cdf,
    banana_logpdf,
    banana_sample,
    batch_em,
    betabinom_logpmf,
    dn_hat,
    ecdf,
    gaussmix_cdf,
    gaussmix_logpdf,
    loh_log_posterior,
    loh_synthetic_records,
    mvn_logpdf,
    mvn_sample,
    pool_index,
    presets,
    responsibilities,
    run,
    sample,
)

__all__ = [name for name in dir() if not name.startswith("_")]
