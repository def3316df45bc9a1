"""Piecewise-linear nondecreasing curves with jumps and plateaus.

A curve is a list of nodes ``(x_i, y_i)`` with both coordinates
nondecreasing.  Repeated abscissae encode jumps, repeated values encode
plateaus.  Swapping the coordinates gives the generalized inverse, so
the right- and left-continuous inverses are exact and cheap.
"""
from __future__ import annotations

import numpy as np


class MonotoneCurve:
    """Nondecreasing piecewise-linear curve.

    Parameters
    ----------
    x, y : array_like
        Node abscissae and values, both nondecreasing.
    side : {"right", "left"}
        Convention used at jumps: ``"right"`` evaluates right-continuously,
        ``"left"`` returns the left limit.
    """

    def __init__(self, x, y, side="right"):
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        if x.shape != y.shape or x.size == 0:
            raise ValueError("x and y must be non-empty and of equal length")
        if np.any(np.diff(x) < 0) or np.any(np.diff(y) < 0):
            raise ValueError("non-monotone curve")
        if side not in ("right", "left"):
            raise ValueError("side must be 'right' or 'left'")
        keep = np.ones(x.size, dtype=bool)
        keep[1:] = (np.diff(x) > 0) | (np.diff(y) > 0)
        self.x, self.y, self.side = x[keep], y[keep], side

    def __len__(self):
        return self.x.size

    @property
    def domain(self):
        return self.x[0], self.x[-1]

    def _interp(self, t, k):
        x, y = self.x, self.y
        n = x.size
        if n == 1:
            return np.full_like(t, y[0])
        k = np.clip(k, 0, n - 2)
        j = k + 1
        dx = x[j] - x[k]
        w = np.where(dx > 0, (t - x[k]) / np.where(dx > 0, dx, 1.0), 1.0)
        return y[k] + np.clip(w, 0.0, 1.0) * (y[j] - y[k])

    def right(self, t):
        """Right-continuous evaluation, clamped to the end values outside the domain."""
        t = np.asarray(t, dtype=float)
        x = self.x
        k = np.searchsorted(x, t, side="right") - 1
        out = self._interp(t, k)
        out = np.where(t >= x[-1], self.y[-1], out)
        return np.where(t < x[0], self.y[0], out)

    def left(self, t):
        """Left-limit evaluation, clamped to the end values outside the domain."""
        t = np.asarray(t, dtype=float)
        x = self.x
        j = np.searchsorted(x, t, side="left")
        out = self._interp(t, j - 1)
        out = np.where(t > x[-1], self.y[-1], out)
        return np.where(t <= x[0], self.y[0], out)

    def __call__(self, t):
        return self.right(t) if self.side == "right" else self.left(t)

    def right_inverse(self):
        """``t -> inf{x : curve(x) > t}``."""
        return MonotoneCurve(self.y, self.x, side="right")

    def left_inverse(self):
        """``t -> inf{x : curve(x) >= t}``."""
        return MonotoneCurve(self.y, self.x, side="left")

    @property
    def plateaus(self):
        """Intervals ``(x_start, x_end)`` of positive length where the curve is flat."""
        out = []
        i, n = 0, self.x.size
        while i < n - 1:
            j = i
            while j + 1 < n and self.y[j + 1] == self.y[i]:
                j += 1
            if j > i and self.x[j] > self.x[i]:
                out.append((float(self.x[i]), float(self.x[j])))
            i = max(j, i + 1)
        return out

    @property
    def jumps(self):
        """Triples ``(x, y_left, y_right)`` at repeated abscissae."""
        out = []
        i, n = 0, self.x.size
        while i < n - 1:
            j = i
            while j + 1 < n and self.x[j + 1] == self.x[i]:
                j += 1
            if j > i:
                out.append((float(self.x[i]), float(self.y[i]), float(self.y[j])))
            i = max(j, i + 1)
        return out


def hermite(xk, yk, dk, t):
    """Cubic Hermite interpolation through ``(xk, yk)`` with slopes ``dk``.

    Repeated abscissae are allowed; the cell is chosen right-continuously
    so a node may carry distinct one-sided slopes.  Outside the node range
    the end values are held constant.
    """
    t = np.asarray(t, dtype=float)
    n = xk.size
    k = np.clip(np.searchsorted(xk, t, side="right") - 1, 0, n - 2)
    j = k + 1
    hstep = xk[j] - xk[k]
    safe = np.where(hstep > 0, hstep, 1.0)
    u = np.clip((t - xk[k]) / safe, 0.0, 1.0)
    h00 = (1 + 2 * u) * (1 - u) ** 2
    h10 = u * (1 - u) ** 2
    h01 = u * u * (3 - 2 * u)
    h11 = u * u * (u - 1)
    out = h00 * yk[k] + h10 * hstep * dk[k] + h01 * yk[j] + h11 * hstep * dk[j]
    out = np.where(hstep > 0, out, yk[j])
    out = np.where(t >= xk[-1], yk[-1], out)
    return np.where(t < xk[0], yk[0], out)
