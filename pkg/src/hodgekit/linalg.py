"""Dense linear algebra over either scalar backend.

Matrices are plain lists of rows; every routine takes the field first so
rank decisions are made with exact zero tests or with the float backend's
tolerance.  Dimensions in this package stay small (<= a few dozen), so
Gauss-Jordan with partial pivoting is entirely adequate.
"""

from __future__ import annotations

from fractions import Fraction


def mat(field, rows):
    return [[field.coerce(x) for x in row] for row in rows]


def zeros(field, n, m):
    return [[field.zero for _ in range(m)] for _ in range(n)]


def eye(field, n):
    M = zeros(field, n, n)
    for i in range(n):
        M[i][i] = field.one
    return M


def shape(M):
    return len(M), len(M[0]) if M else 0


def transpose(M):
    if not M:
        return []
    return [list(col) for col in zip(*M)]


def conj_mat(field, M):
    return [[field.conjugate(x) for x in row] for row in M]


def madd(A, B):
    return [[a + b for a, b in zip(ra, rb)] for ra, rb in zip(A, B)]


def msub(A, B):
    return [[a - b for a, b in zip(ra, rb)] for ra, rb in zip(A, B)]


def smul(s, A):
    return [[s * a for a in row] for row in A]


def matmul(A, B):
    n, k = len(A), len(B)
    m = len(B[0]) if B else 0
    Bt = transpose(B)
    return [[_dot(ra, cb) for cb in Bt] for ra in A]


def _dot(u, v):
    acc = None
    for a, b in zip(u, v):
        t = a * b
        acc = t if acc is None else acc + t
    return acc


def matvec(A, v):
    return [_dot(row, v) for row in A]


def mat_eq(field, A, B, scale=1.0):
    if shape(A) != shape(B):
        return False
    for ra, rb in zip(A, B):
        for a, b in zip(ra, rb):
            if not _is_zero(field, a - b, scale):
                return False
    return True


def _is_zero(field, x, scale=1.0):
    if field.is_exact:
        return field.is_zero(x)
    return field.is_zero(x, scale)


def _scale_of(field, M):
    if field.is_exact or not M:
        return 1.0
    return max((abs(x) for row in M for x in row), default=1.0)


def rref(field, M):
    """Reduced row echelon form.  Returns (R, pivot_columns)."""
    R = [list(row) for row in M]
    n, m = shape(R)
    scale = _scale_of(field, R)
    pivots = []
    r = 0
    for c in range(m):
        # choose pivot row
        best, best_row = None, None
        for i in range(r, n):
            x = R[i][c]
            if not _is_zero(field, x, scale):
                if field.is_exact:
                    best_row = i
                    break
                if best is None or abs(x) > best:
                    best, best_row = abs(x), i
        if best_row is None:
            continue
        R[r], R[best_row] = R[best_row], R[r]
        piv = R[r][c]
        R[r] = [x / piv for x in R[r]]
        for i in range(n):
            if i != r:
                f = R[i][c]
                if not _is_zero(field, f, scale):
                    R[i] = [x - f * y for x, y in zip(R[i], R[r])]
        pivots.append(c)
        r += 1
        if r == n:
            break
    return R, pivots


def rank(field, M):
    if not M or not M[0]:
        return 0
    return len(rref(field, M)[1])


def nullspace(field, M):
    """Basis (list of vectors) of the right kernel of M."""
    n, m = shape(M)
    if m == 0:
        return []
    if n == 0:
        return [[field.one if i == j else field.zero for i in range(m)]
                for j in range(m)]
    R, pivots = rref(field, M)
    free = [c for c in range(m) if c not in pivots]
    basis = []
    for fc in free:
        v = [field.zero] * m
        v[fc] = field.one
        for r, pc in enumerate(pivots):
            v[pc] = -R[r][fc]
        basis.append(v)
    return basis


def solve(field, A, b):
    """One solution of A x = b, or None if inconsistent."""
    n, m = shape(A)
    aug = [list(row) + [bv] for row, bv in zip(A, b)]
    R, pivots = rref(field, aug)
    scale = _scale_of(field, aug)
    for r in range(len(pivots)):
        if pivots[r] == m:
            return None
    for i in range(len(pivots), n):
        if not _is_zero(field, R[i][m], scale):
            return None
    x = [field.zero] * m
    for r, pc in enumerate(pivots):
        if pc < m:
            x[pc] = R[r][m]
    return x


def inverse(field, A):
    n, m = shape(A)
    assert n == m
    aug = [list(row) + list(erow) for row, erow in zip(A, eye(field, n))]
    R, pivots = rref(field, aug)
    if pivots[:n] != list(range(n)):
        raise ZeroDivisionError("matrix is singular")
    return [row[n:] for row in R]


def det(field, A):
    n, m = shape(A)
    assert n == m
    if n == 0:
        return field.one
    R = [list(row) for row in A]
    scale = _scale_of(field, R)
    d = field.one
    for c in range(n):
        pr = None
        for i in range(c, n):
            if not _is_zero(field, R[i][c], scale):
                pr = i
                break
        if pr is None:
            return field.zero
        if pr != c:
            R[c], R[pr] = R[pr], R[c]
            d = -d
        d = d * R[c][c]
        inv = field.one / R[c][c]
        for i in range(c + 1, n):
            f = R[i][c] * inv
            if not _is_zero(field, f, scale):
                R[i] = [x - f * y for x, y in zip(R[i], R[c])]
    return d


def matpow(field, A, k):
    n = len(A)
    out = eye(field, n)
    for _ in range(k):
        out = matmul(out, A)
    return out


def nilpotent_exp(field, N, t=None):
    """exp(t*N) for nilpotent N as the finite sum."""
    n = len(N)
    t = field.one if t is None else t
    term = eye(field, n)
    acc = eye(field, n)
    P = eye(field, n)
    for k in range(1, n + 1):
        P = matmul(P, N)
        if all(_is_zero(field, x) for row in P for x in row):
            break
        coeff = t ** k if not field.is_exact else _pow(t, k)
        fact = field.from_fraction(Fraction(1, _factorial(k)))
        acc = madd(acc, smul(coeff * fact, P))
    return acc


def _pow(x, k):
    out = None
    for _ in range(k):
        out = x if out is None else out * x
    return out if out is not None else x


def _factorial(k):
    out = 1
    for i in range(2, k + 1):
        out *= i
    return out


def nilpotency_index(field, N):
    """Smallest r with N^r = 0; raises if N is not nilpotent."""
    n = len(N)
    P = eye(field, n)
    for r in range(n + 1):
        if all(_is_zero(field, x, _scale_of(field, P)) for row in P for x in row):
            return r
        P = matmul(P, N)
    raise ValueError("matrix is not nilpotent")


def apply_series(field, coeffs, N):
    """sum_k coeffs[k] * N^k (finite; N nilpotent or coeffs finite)."""
    n = len(N)
    acc = zeros(field, n, n)
    P = eye(field, n)
    for k, c in enumerate(coeffs):
        if k > 0:
            P = matmul(P, N)
        acc = madd(acc, smul(c, P))
    return acc


def column_stack(cols):
    if not cols:
        return []
    return transpose([list(c) for c in cols])


def columns(M):
    return [list(c) for c in transpose(M)]


def to_complex_mat(field, M):
    return [[field.to_complex(x) for x in row] for row in M]
