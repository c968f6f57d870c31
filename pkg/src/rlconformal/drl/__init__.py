from .distributions import (
    Interval,
    KDEDistribution,
    ParticleDistribution,
    drl_qr_interval,
    sample_return,
    value_estimate,
)
from .kde import BucketedKDEModel, kde_return_estimator, silverman_bandwidth
from .qtd import (
    DivergenceError,
    LinearQuantileModel,
    QTDConfig,
    QuantileModel,
    TabularQuantileModel,
    marginalize,
    qtd_update_off,
    qtd_update_on,
    quantile_levels,
    train_qtd,
)
from .serialize import load_model, save_model
