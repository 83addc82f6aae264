"""Reference implementations written independently of the package."""

import math


def classic_kalman(F, C, Q, R, P0, ys, x0=None):
    """Textbook linear Kalman filter in plain Python lists.

    The first observation updates the initial state directly; later ones
    follow a prediction with transition ``F``. Gaps are ``None``/NaN.
    Returns the filtered outputs ``C x``.
    """
    n = len(F)
    x = [0.0] * n if x0 is None else list(x0)
    P = [row[:] for row in P0]

    def matmul(A, B):
        return [[sum(A[i][k] * B[k][j] for k in range(len(B))) for j in range(len(B[0]))] for i in range(len(A))]

    def transpose(A):
        return [list(r) for r in zip(*A)]

    out = []
    for k, y in enumerate(ys):
        if k > 0:
            x = [sum(F[i][j] * x[j] for j in range(n)) for i in range(n)]
            P = matmul(matmul(F, P), transpose(F))
            P = [[P[i][j] + Q[i][j] for j in range(n)] for i in range(n)]
        if y is not None and not math.isnan(y):
            # scalar measurement: S = c P c' + r
            c = C[0]
            Pc = [sum(P[i][j] * c[j] for j in range(n)) for i in range(n)]
            S = sum(c[i] * Pc[i] for i in range(n)) + R[0][0]
            K = [v / S for v in Pc]
            innov = y - sum(c[i] * x[i] for i in range(n))
            x = [x[i] + K[i] * innov for i in range(n)]
            P = [[P[i][j] - K[i] * Pc[j] for j in range(n)] for i in range(n)]
        out.append(sum(C[0][i] * x[i] for i in range(n)))
    return out


def brute_metrics(y_r, y_m):
    """(MAPE %, RMSE, uncentred R²) by direct summation."""
    n = len(y_r)
    ape = 0.0
    sse = 0.0
    ssm = 0.0
    for a, b in zip(y_r, y_m):
        ape += abs(a - b) / abs(a)
        sse += (b - a) ** 2
        ssm += b * b
    return 100.0 * ape / n, math.sqrt(sse / n), 1.0 - sse / ssm
