"""Shared test helpers: the finite-difference gradient oracle and a
float64 switch for parameters (model code runs float32; gradient checks
run in float64 so truncation error stays below the comparison tolerance)."""

from __future__ import annotations

import numpy as np

from smoothfeed.nn import Parameter, backward


def to_float64(params: list[Parameter]) -> None:
    for p in params:
        p.value = p.value.astype(np.float64)
        p.grad = np.zeros_like(p.value)
        p.adam_m = np.zeros_like(p.value)
        p.adam_v = np.zeros_like(p.value)


def fd_gradcheck(build_loss, params: list[Parameter], inputs=(),
                 h: float = 1e-3, rtol: float = 1e-3, atol: float = 1e-6):
    """Compare analytic gradients against central finite differences.

    `build_loss` must construct a fresh scalar loss node from current
    parameter/input values. `inputs` are constant nodes whose gradients are
    checked too (their .value arrays are wiggled in place).
    """
    for p in params:
        p.zero_grad()
    loss = build_loss()
    backward(loss)

    def compare(analytic: np.ndarray, values: np.ndarray, label: str):
        numeric = np.zeros_like(values)
        flat = values.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(build_loss().value)
            flat[i] = orig - h
            f_minus = float(build_loss().value)
            flat[i] = orig
            num_flat[i] = (f_plus - f_minus) / (2.0 * h)
        err = np.abs(analytic - numeric)
        tol = atol + rtol * np.maximum(np.abs(analytic), np.abs(numeric))
        bad = err > tol
        assert not bad.any(), (
            f"{label}: {bad.sum()} of {bad.size} gradient entries off; "
            f"max err {err.max():.3e} (analytic {analytic.reshape(-1)[err.argmax()]:.6e} "
            f"vs numeric {numeric.reshape(-1)[err.argmax()]:.6e})")

    for p in params:
        compare(p.grad, p.value, f"param {p.name}")
    for node in inputs:
        grad = node.grad if node.grad is not None else np.zeros_like(node.value)
        compare(grad, node.value, "input")
