"""Thomas algorithm for tridiagonal systems."""

import numpy as np


def solve_tridiagonal(sub, diag, sup, rhs):
    """Solve ``T x = rhs`` for tridiagonal ``T`` by forward elimination and back substitution.

    No pivoting is done, so ``T`` should be diagonally dominant (an M-matrix
    is the intended use).

    Args:
        sub: length ``n - 1``, entries ``T[i+1, i]``.
        diag: length ``n``, entries ``T[i, i]``.
        sup: length ``n - 1``, entries ``T[i, i+1]``.
        rhs: length ``n`` right-hand side.

    Returns:
        Solution vector of length ``n``.
    """
    diag = np.asarray(diag, dtype=float)
    sub = np.asarray(sub, dtype=float)
    sup = np.asarray(sup, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n = diag.size
    if sub.size != n - 1 or sup.size != n - 1 or rhs.size != n:
        raise ValueError("inconsistent tridiagonal band lengths")

    # plain Python floats keep the sweep cheap for n in the hundreds
    b = diag.tolist()
    a = sub.tolist()
    c = sup.tolist()
    d = rhs.tolist()
    cp = [0.0] * n
    dp = [0.0] * n

    piv = b[0]
    if piv == 0.0:
        raise ZeroDivisionError("zero pivot at row 0")
    cp[0] = c[0] / piv if n > 1 else 0.0
    dp[0] = d[0] / piv
    for i in range(1, n):
        piv = b[i] - a[i - 1] * cp[i - 1]
        if piv == 0.0:
            raise ZeroDivisionError(f"zero pivot at row {i}")
        if i < n - 1:
            cp[i] = c[i] / piv
        dp[i] = (d[i] - a[i - 1] * dp[i - 1]) / piv

    x = [0.0] * n
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return np.array(x)
