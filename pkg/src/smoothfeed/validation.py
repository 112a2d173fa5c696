"""Input-validation and estimator-API helpers.

The two learned models follow the usual fit/predict conventions:
constructor stores hyperparameters untouched, `fit` learns state suffixed
with an underscore, `get_params`/`set_params` expose nested config fields
with the `<name>__<field>` convention.
"""

from __future__ import annotations

import dataclasses
from typing import Any

import numpy as np


class NotFittedError(RuntimeError):
    """Estimator used before `fit` (or an explicit `build`)."""


def check_is_fitted(estimator: Any, attribute: str) -> None:
    if getattr(estimator, attribute, None) is None:
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted; call fit() first")


def check_finite(x: np.ndarray, what: str) -> np.ndarray:
    x = np.asarray(x)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{what} contains non-finite values")
    return x


def check_binary_labels(y, what: str = "y") -> np.ndarray:
    y = np.asarray(y)
    values = np.unique(y)
    if not np.isin(values, (0, 1)).all():
        raise ValueError(f"{what} must be binary 0/1, found values {values}")
    return y.astype(np.float32)


class ParamsMixin:
    """get_params/set_params over the constructor arguments listed in
    `_param_names`; dataclass-valued params expand one level deep."""

    _param_names: tuple[str, ...] = ()

    def get_params(self, deep: bool = True) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for name in self._param_names:
            value = getattr(self, name)
            out[name] = value
            if deep and dataclasses.is_dataclass(value):
                for f in dataclasses.fields(value):
                    out[f"{name}__{f.name}"] = getattr(value, f.name)
        return out

    def set_params(self, **params):
        for key, value in params.items():
            if "__" in key:
                owner, _, fname = key.partition("__")
                if owner not in self._param_names:
                    raise ValueError(f"unknown parameter {key!r}")
                current = getattr(self, owner)
                if not dataclasses.is_dataclass(current):
                    raise ValueError(f"parameter {owner!r} is not a config object")
                names = {f.name for f in dataclasses.fields(current)}
                if fname not in names:
                    raise ValueError(f"unknown parameter {key!r}")
                setattr(self, owner, dataclasses.replace(current, **{fname: value}))
            else:
                if key not in self._param_names:
                    raise ValueError(f"unknown parameter {key!r}")
                setattr(self, key, value)
        return self
