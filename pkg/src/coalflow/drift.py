"""Drift specifications for scalar SDEs dX = a(X) dt + dW.

A drift is Lipschitz with constant ``lipschitz`` and, optionally, strictly
monotone: (a(x) - a(y))(x - y) <= -monotone_rate * (x - y)^2.  The drifts the
command line accepts form a small family; tabulated drifts can be built
programmatically for experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DriftSpec",
    "DriftError",
    "parse_drift",
    "format_drift",
    "linear_drift",
    "linsin_drift",
    "zero_drift",
    "tabulated_drift",
]

# Grid used by validate(): 1000 points spanning [-50, 50].
_CHECK_GRID = np.linspace(-50.0, 50.0, 1000)
_CHECK_TOL = 1e-9


class DriftError(ValueError):
    """Raised for malformed drift specifications or out-of-range evaluation."""


@dataclass(frozen=True)
class DriftSpec:
    """A scalar drift field a(x).

    kind: "linear" (a = slope*x), "linsin" (a = slope*x + eps*sin x),
    "zero" (a = 0) or "tabulated" (linear interpolation, no extrapolation).
    ``lipschitz`` is a global Lipschitz constant; ``monotone_rate`` is the
    strict-monotonicity rate when the drift has one (None otherwise);
    ``zero_x0`` is a root of a, when one is declared.
    """

    kind: str
    params: tuple[float, ...] = ()
    lipschitz: float = 0.0
    monotone_rate: float | None = None
    zero_x0: float | None = None
    # tabulated data; empty for closed-form kinds
    table_x: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    table_y: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        """Evaluate a(x) on a scalar or ndarray; shape is preserved."""
        if self.kind == "linear":
            return self.params[0] * np.asarray(x, dtype=float)
        if self.kind == "linsin":
            slope, eps = self.params
            xa = np.asarray(x, dtype=float)
            return slope * xa + eps * np.sin(xa)
        if self.kind == "zero":
            return np.zeros_like(np.asarray(x, dtype=float))
        if self.kind == "tabulated":
            xa = np.asarray(x, dtype=float)
            lo, hi = self.table_x[0], self.table_x[-1]
            if np.any(xa < lo) or np.any(xa > hi):
                raise DriftError(
                    f"tabulated drift queried outside [{lo}, {hi}]; "
                    "extrapolation is refused"
                )
            return np.interp(xa, self.table_x, self.table_y)
        raise DriftError(f"unknown drift kind {self.kind!r}")

    def negated(self) -> "DriftSpec":
        """The drift -a(x); monotonicity is dropped (a repelling field)."""
        if self.kind == "linear":
            return DriftSpec("linear", (-self.params[0],), self.lipschitz)
        if self.kind == "linsin":
            s, e = self.params
            return DriftSpec("linsin", (-s, -e), self.lipschitz)
        if self.kind == "zero":
            return self
        return DriftSpec(
            "tabulated",
            lipschitz=self.lipschitz,
            table_x=self.table_x,
            table_y=-self.table_y,
        )

    def validate(self) -> None:
        """Check declared constants against samples on [-50, 50].

        Raises DriftError if the Lipschitz bound, the monotonicity rate, or
        |a(zero_x0)| <= tol fails on the 1000-point grid (all pairs).
        """
        grid = _CHECK_GRID
        if self.kind == "tabulated":
            lo, hi = self.table_x[0], self.table_x[-1]
            grid = np.linspace(lo, hi, 1000)
        a = self.eval(grid)
        dx = grid[:, None] - grid[None, :]
        da = a[:, None] - a[None, :]
        off = np.abs(dx) > 0
        if np.any(np.abs(da[off]) > self.lipschitz * np.abs(dx[off]) + _CHECK_TOL):
            raise DriftError(
                f"drift violates declared Lipschitz constant {self.lipschitz}"
            )
        if self.monotone_rate is not None:
            lhs = da * dx
            rhs = -self.monotone_rate * dx * dx
            if np.any(lhs[off] > rhs[off] + _CHECK_TOL):
                raise DriftError(
                    f"drift violates declared monotone rate {self.monotone_rate}"
                )
        if self.zero_x0 is not None:
            if abs(float(self.eval(self.zero_x0))) > _CHECK_TOL:
                raise DriftError(f"a({self.zero_x0}) != 0 for declared zero")


def linear_drift(slope: float) -> DriftSpec:
    """a(x) = slope * x.  Monotone with rate -slope when slope < 0."""
    rate = -slope if slope < 0 else None
    return DriftSpec(
        "linear",
        (float(slope),),
        lipschitz=abs(slope),
        monotone_rate=rate,
        zero_x0=0.0,
    )


def linsin_drift(slope: float, eps: float) -> DriftSpec:
    """a(x) = slope * x + eps * sin x.

    For slope < 0 and 0 <= eps < -slope this is strictly monotone with rate
    -slope - eps and Lipschitz constant -slope + eps; a(0) = 0.
    """
    if eps < 0:
        raise DriftError("linsin perturbation must be >= 0")
    monotone = -slope - eps if slope < 0 and eps < -slope else None
    return DriftSpec(
        "linsin",
        (float(slope), float(eps)),
        lipschitz=abs(slope) + eps,
        monotone_rate=monotone,
        zero_x0=0.0,
    )


def zero_drift() -> DriftSpec:
    """a(x) = 0.  No monotone rate, no designated root."""
    return DriftSpec("zero", (), lipschitz=0.0)


def tabulated_drift(
    xs,
    ys,
    lipschitz: float | None = None,
    monotone_rate: float | None = None,
    zero_x0: float | None = None,
) -> DriftSpec:
    """Piecewise-linear drift on knots xs (strictly increasing)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
        raise DriftError("tabulated drift needs matching 1-d knot arrays")
    if np.any(np.diff(xs) <= 0):
        raise DriftError("tabulated drift knots must be strictly increasing")
    if lipschitz is None:
        lipschitz = float(np.max(np.abs(np.diff(ys) / np.diff(xs))))
    return DriftSpec(
        "tabulated",
        lipschitz=float(lipschitz),
        monotone_rate=monotone_rate,
        zero_x0=zero_x0,
        table_x=xs,
        table_y=ys,
    )


def parse_drift(text: str) -> DriftSpec:
    """Parse "linear:<slope>", "linsin:<slope>:<eps>" or "zero"."""
    parts = text.strip().split(":")
    try:
        if parts[0] == "zero" and len(parts) == 1:
            return zero_drift()
        if parts[0] == "linear" and len(parts) == 2:
            return linear_drift(float(parts[1]))
        if parts[0] == "linsin" and len(parts) == 3:
            return linsin_drift(float(parts[1]), float(parts[2]))
    except ValueError as exc:
        raise DriftError(f"bad drift expression {text!r}: {exc}") from exc
    raise DriftError(
        f"bad drift expression {text!r}; expected 'zero', 'linear:<slope>' "
        "or 'linsin:<slope>:<eps>'"
    )


def format_drift(spec: DriftSpec) -> str:
    """Inverse of parse_drift for the parseable kinds."""
    if spec.kind == "zero":
        return "zero"
    if spec.kind == "linear":
        return f"linear:{spec.params[0]}"
    if spec.kind == "linsin":
        return f"linsin:{spec.params[0]}:{spec.params[1]}"
    raise DriftError(f"{spec.kind} drift has no text form")
