"""Parameterized temporal decay kernels mapping time intervals to influence scores."""

import re
from dataclasses import dataclass

import numpy as np

from .tensor import (
    Tensor,
    add_const,
    add_scalar_t,
    concat,
    exp,
    log1p,
    mul_scalar_t,
    neg,
    scale,
)

__all__ = ["KernelSpec", "KernelBank", "KernelConfigError", "default_bank", "evaluate"]

KERNEL_KINDS = ("exp", "log", "lin", "const")


class KernelConfigError(ValueError):
    """Kernel spec string does not parse or is inconsistent."""


@dataclass
class KernelSpec:
    """One kernel: kind plus its learnable scale/shift parameters.

    exp:   a * e^(-T) + b
    log:   -a * log(1 + T) + b
    lin:   -a * T + b
    const: 1 (no parameters)
    """

    kind: str
    a: Tensor | None
    b: Tensor | None

    @property
    def learnable(self):
        return self.kind != "const"

    def params(self):
        return [] if self.kind == "const" else [self.a, self.b]


class KernelBank:
    """Ordered collection of K kernels; column order is part of the model."""

    def __init__(self, kernels):
        if not kernels:
            raise KernelConfigError("kernel bank must hold at least one kernel")
        self.kernels = list(kernels)

    def __len__(self):
        return len(self.kernels)

    def params(self):
        return [p for k in self.kernels for p in k.params()]

    def spec_string(self):
        parts = []
        for k in self.kernels:
            if parts and parts[-1][0] == k.kind:
                parts[-1][1] += 1
            else:
                parts.append([k.kind, 1])
        return ",".join(f"{kind}{count}" for kind, count in parts)


_SPEC_RE = re.compile(r"^(exp|log|lin|const)(\d+)$")


def default_bank(spec_string, rng=None):
    """Build a bank from a spec like "exp5,lin5"; learnable a,b ~ uniform[0,1]."""
    rng = rng if rng is not None else np.random.default_rng(0)
    kernels = []
    for i, part in enumerate(spec_string.replace(" ", "").split(",")):
        m = _SPEC_RE.match(part)
        if not m:
            raise KernelConfigError(
                f"bad kernel spec {part!r}; expected e.g. exp5, log1, lin10, const1"
            )
        kind, count = m.group(1), int(m.group(2))
        if count == 0:
            raise KernelConfigError(f"kernel count must be positive in {part!r}")
        for j in range(count):
            if kind == "const":
                kernels.append(KernelSpec(kind, None, None))
            else:
                kernels.append(
                    KernelSpec(
                        kind,
                        Tensor(rng.uniform(0.0, 1.0), name=f"kernel.{len(kernels)}.a"),
                        Tensor(rng.uniform(0.0, 1.0), name=f"kernel.{len(kernels)}.b"),
                    )
                )
    return KernelBank(kernels)


def evaluate(bank, intervals):
    """Apply every kernel columnwise: (..., L, 1) intervals -> (..., L, K) scores."""
    t = intervals.values
    if (t < 0).any():
        raise ValueError("evaluate: negative interval (upstream windowing bug)")
    columns = []
    for k in bank.kernels:
        if k.kind == "exp":
            col = add_scalar_t(mul_scalar_t(exp(neg(intervals)), k.a), k.b)
        elif k.kind == "log":
            col = add_scalar_t(neg(mul_scalar_t(log1p(intervals), k.a)), k.b)
        elif k.kind == "lin":
            col = add_scalar_t(neg(mul_scalar_t(intervals, k.a)), k.b)
        elif k.kind == "const":
            col = add_const(scale(intervals, 0.0), 1.0)
        else:
            raise KernelConfigError(f"unknown kernel kind {k.kind!r}")
        columns.append(col)
    return concat(columns, axis=-1)
