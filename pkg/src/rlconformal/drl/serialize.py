"""Model files.

A model file is an uncompressed numpy ``.npz`` archive with these arrays:

``format_version``  int, currently 1
``backend``         one of ``tabular``, ``linear``, ``mlp``
``m``, ``n_heads``  ints
``gamma``, ``rho``  floats
``param_0`` ...     parameter arrays in backend order: the tabular
                    ``theta`` table ``(n_states, n_heads, m)``; the linear
                    ``weights`` ``(n_heads, m, dim + 1)``, ``ridge`` and the feature
                    ``offset``; the
                    mlp state-dict tensors followed by ``hidden`` and ``kappa``
"""

from __future__ import annotations

import numpy as np

from .qtd import LinearQuantileModel, TabularQuantileModel

FORMAT_VERSION = 1


def save_model(model, path):
    meta = dict(format_version=FORMAT_VERSION, backend=model.backend, m=model.m,
                n_heads=model.n_heads, gamma=model.gamma, rho=model.rho)
    if model.backend == "tabular":
        params = [model.theta]
    elif model.backend == "linear":
        params = [model.weights, np.array(model.ridge), model.offset]
    elif model.backend == "mlp":
        params = model.state_arrays() + [np.array(model.hidden), np.array(model.kappa)]
    else:
        raise TypeError(f"cannot serialize backend {model.backend!r}")
    arrays = {f"param_{i}": p for i, p in enumerate(params)}
    with open(path, "wb") as fh:
        np.savez(fh, **meta, **arrays)


def load_model(path):
    with np.load(path, allow_pickle=False) as z:
        version = int(z["format_version"])
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported model file version {version}")
        backend = str(z["backend"])
        m, heads = int(z["m"]), int(z["n_heads"])
        gamma, rho = float(z["gamma"]), float(z["rho"])
        params = [z[f"param_{i}"] for i in range(sum(k.startswith("param_") for k in z.files))]
    if backend == "tabular":
        theta = params[0]
        return TabularQuantileModel(theta.shape[0], heads, m, gamma, rho, theta=theta)
    if backend == "linear":
        w = params[0]
        return LinearQuantileModel(w.shape[2] - 1, heads, m, gamma, rho, float(params[1]),
                                   weights=w, offset=params[2])
    if backend == "mlp":
        from .mlp import MLPQuantileModel

        tensors, hidden, kappa = params[:-2], params[-2], float(params[-1])
        model = MLPQuantileModel(tensors[0].shape[1], heads, m, gamma, rho,
                                 tuple(int(h) for h in hidden), kappa)
        model.load_arrays(tensors)
        return model
    raise ValueError(f"unknown backend {backend!r} in model file")
