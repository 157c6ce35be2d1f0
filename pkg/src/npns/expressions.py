"""Closed-form preset expressions for boundary traces and initial fields.

An expression is one or more terms joined by ``+``::

    const 2.0
    linear a0 a1 a2 [a3]          a0 + a1*x + a2*y (+ a3*z)
    sin A k1 k2 [k3]              A * prod_j sin(k_j*pi*x_j)
    cos A k1 k2 [k3]              A * prod_j cos(k_j*pi*x_j)
    gauss A x0 y0 [z0] width      A * exp(-|x - x0|^2 / (2 width^2))
    table axis path               linear interpolation of a two-column text file
                                  (coordinate, value) along one axis

A bare number is shorthand for ``const``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

KINDS = ("const", "linear", "sin", "cos", "gauss", "table")


class ExpressionError(ValueError):
    pass


@dataclass(frozen=True)
class Term:
    kind: str
    args: tuple
    table: tuple | None = None

    def __call__(self, *x):
        shape = np.broadcast_shapes(*[np.shape(a) for a in x])
        d = len(x)
        if self.kind == "const":
            return np.full(shape, self.args[0])
        if self.kind == "linear":
            out = np.full(shape, self.args[0])
            for j, a in enumerate(self.args[1:d + 1]):
                out = out + a * x[j]
            return out
        if self.kind in ("sin", "cos"):
            f = np.sin if self.kind == "sin" else np.cos
            out = np.full(shape, self.args[0])
            for j, k in enumerate(self.args[1:d + 1]):
                out = out * f(k * np.pi * x[j])
            return out
        if self.kind == "gauss":
            amp, centre, width = self.args[0], self.args[1:d + 1], self.args[-1]
            r2 = sum((x[j] - centre[j]) ** 2 for j in range(d))
            return amp * np.exp(-r2 / (2 * width**2)) * np.ones(shape)
        if self.kind == "table":
            axis = int(self.args[0])
            xs, ys = self.table
            return np.interp(x[axis], xs, ys) * np.ones(shape)
        raise ExpressionError(f"unknown term kind {self.kind!r}")


@dataclass(frozen=True)
class Expression:
    text: str
    terms: tuple

    def __call__(self, *x):
        out = self.terms[0](*x)
        for t in self.terms[1:]:
            out = out + t(*x)
        return out


def _floats(tokens, text):
    try:
        return tuple(float(t) for t in tokens)
    except ValueError as exc:
        raise ExpressionError(f"bad number in {text!r}: {exc}") from None


def _parse_term(text: str, dim: int, base: Path | None) -> Term:
    tokens = text.split()
    if not tokens:
        raise ExpressionError("empty expression term")
    head = tokens[0].lower()
    if head not in KINDS:
        if len(tokens) == 1:
            return Term("const", _floats(tokens, text))
        raise ExpressionError(f"unknown expression kind {tokens[0]!r}; expected one of {KINDS}")
    args = tokens[1:]
    if head == "const":
        if len(args) != 1:
            raise ExpressionError(f"const takes one value: {text!r}")
        return Term(head, _floats(args, text))
    if head == "linear":
        if len(args) not in (dim + 1,):
            raise ExpressionError(f"linear takes {dim + 1} coefficients in {dim}D: {text!r}")
        return Term(head, _floats(args, text))
    if head in ("sin", "cos"):
        if len(args) != dim + 1:
            raise ExpressionError(f"{head} takes amplitude and {dim} wavenumbers: {text!r}")
        return Term(head, _floats(args, text))
    if head == "gauss":
        if len(args) != dim + 2:
            raise ExpressionError(f"gauss takes amplitude, {dim} centre coordinates and width: {text!r}")
        vals = _floats(args, text)
        if vals[-1] <= 0:
            raise ExpressionError(f"gauss width must be positive: {text!r}")
        return Term(head, vals)
    # table
    if len(args) != 2:
        raise ExpressionError(f"table takes an axis and a file path: {text!r}")
    axis = int(args[0])
    if not 0 <= axis < dim:
        raise ExpressionError(f"table axis out of range: {text!r}")
    path = Path(args[1])
    if base is not None and not path.is_absolute():
        path = base / path
    try:
        data = np.loadtxt(path, delimiter=None if path.suffix != ".csv" else ",", ndmin=2)
    except OSError as exc:
        raise ExpressionError(f"cannot read table {path}: {exc}") from None
    if data.shape[1] != 2:
        raise ExpressionError(f"table {path} must have two columns")
    order = np.argsort(data[:, 0])
    return Term(head, (float(axis),), (data[order, 0], data[order, 1]))


def parse_expression(text, dim: int = 2, base: Path | None = None) -> Expression:
    """Parse preset text (or pass through a number) into a callable of coordinates."""
    if isinstance(text, (int, float)):
        text = f"const {float(text)!r}"
    text = str(text).strip()
    parts = [p.strip() for p in text.split(" + ")]
    return Expression(text, tuple(_parse_term(p, dim, base) for p in parts))
