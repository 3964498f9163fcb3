"""Pure-Python fixed-step RK4 kernel for piecewise-linear circuits.

Reference implementation of the compiled ``_kernel`` extension; the two
share one signature and semantics.

The state derivative is ``A @ x + b``. Energy accumulators ride along in
``x[nx:]``: accumulator ``c`` integrates the sum, over power terms ``t``
with ``chan[t] == c``, of ``w[t] * (a[t] @ x + c0[t]) ** p[t]``.
"""

import numpy as np

STATUS_OK = 0
STATUS_CROSSED = 1
STATUS_NONFINITE = 2


def run_segment(A, b, chan, pw, w, a, c0, x, h, n, watch, out):
    """Advance ``x`` in place by up to ``n`` RK4 steps of size ``h``.

    ``out`` (shape ``(n, nx)``, or None) receives the circuit state after
    every step. ``watch`` is an integer array of state indices; the run
    stops before the first step that takes any watched entry through
    zero. ``theta`` is the linearly interpolated fraction of that step at
    which the crossing happens and ``which`` the crossing index.

    Returns ``(steps_done, status, theta, which)``.
    """
    nx = A.shape[0]
    nch = x.shape[0] - nx
    s = x[:nx].copy()
    acc = x[nx:].copy()
    half = 0.5 * h

    def powers(y):
        lin = a @ y + c0
        terms = w * np.where(pw == 2, lin * lin, lin)
        return np.bincount(chan, weights=terms, minlength=nch) if len(terms) else np.zeros(nch)

    status, theta, which, k = STATUS_OK, -1.0, -1, 0
    while k < n:
        k1 = A @ s + b
        y2 = s + half * k1
        k2 = A @ y2 + b
        y3 = s + half * k2
        k3 = A @ y3 + b
        y4 = s + h * k3
        k4 = A @ y4 + b
        new = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(new)):
            status = STATUS_NONFINITE
            break
        for idx in watch:
            prev, cur = s[idx], new[idx]
            if prev != 0.0 and prev * cur <= 0.0:
                frac = prev / (prev - cur)
                if status != STATUS_CROSSED or frac < theta:
                    status, theta, which = STATUS_CROSSED, frac, int(idx)
        if status == STATUS_CROSSED:
            break
        if nch:
            acc += (h / 6.0) * (powers(s) + 2.0 * powers(y2) + 2.0 * powers(y3) + powers(y4))
        s = new
        if out is not None:
            out[k, :] = s
        k += 1
    x[:nx] = s
    x[nx:] = acc
    return k, status, theta, which


def backend_name():
    return "python"

