"""Small exact linear algebra over the rationals.

Matrices are tuples of row tuples holding ``int`` or ``Fraction`` entries.
Everything here is sized for the handful-by-handful matrices that show up in
Rauzy induction, where exactness matters more than speed.
"""

from fractions import Fraction


def identity(n):
    return tuple(tuple(1 if i == j else 0 for j in range(n)) for i in range(n))


def transpose(a):
    return tuple(zip(*a))


def matmul(a, b):
    bt = transpose(b)
    return tuple(tuple(sum(x * y for x, y in zip(row, col)) for col in bt) for row in a)


def matvec(a, v):
    return tuple(sum(x * y for x, y in zip(row, v)) for row in a)


def dot(u, v):
    return sum(x * y for x, y in zip(u, v))


def det(a):
    """Determinant by fraction-free Gaussian elimination (Bareiss)."""
    n = len(a)
    m = [list(row) for row in a]
    sign = 1
    prev = 1
    for k in range(n - 1):
        if m[k][k] == 0:
            for r in range(k + 1, n):
                if m[r][k] != 0:
                    m[k], m[r] = m[r], m[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j])
                if isinstance(m[i][j], int) and isinstance(prev, int):
                    m[i][j] //= prev
                else:
                    m[i][j] = Fraction(m[i][j]) / prev
        prev = m[k][k]
    return sign * m[n - 1][n - 1] if n else 1


def _rref(rows, ncols):
    m = [[Fraction(x) for x in row] for row in rows]
    pivots = []
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(m)) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        p = m[r][c]
        m[r] = [x / p for x in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [x - f * y for x, y in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == len(m):
            break
    return m[:r], pivots


def rank(rows):
    rows = [tuple(r) for r in rows]
    if not rows:
        return 0
    return len(_rref(rows, len(rows[0]))[1])


def nullspace(rows, ncols=None):
    """Basis of ``{x : rows . x = 0}`` as a list of Fraction tuples."""
    if ncols is None:
        ncols = len(rows[0])
    if not rows:
        return [tuple(Fraction(int(i == j)) for j in range(ncols)) for i in range(ncols)]
    red, pivots = _rref(rows, ncols)
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for f in free:
        x = [Fraction(0)] * ncols
        x[f] = Fraction(1)
        for row, p in zip(red, pivots):
            x[p] = -row[f]
        basis.append(tuple(x))
    return basis


def solve(a, b):
    """Solve the square system ``a x = b`` exactly; raise on singular ``a``."""
    n = len(a)
    aug = [list(row) + [bi] for row, bi in zip(a, b)]
    red, pivots = _rref(aug, n + 1)
    if pivots != list(range(n)):
        raise ZeroDivisionError("singular system")
    return tuple(row[n] for row in red)


def inverse(a):
    n = len(a)
    aug = [list(row) + [int(i == j) for j in range(n)] for i, row in enumerate(a)]
    red, pivots = _rref(aug, 2 * n)
    if pivots[:n] != list(range(n)) or len(pivots) < n:
        raise ZeroDivisionError("singular matrix")
    return tuple(tuple(x.numerator if x.denominator == 1 else x for x in row[n:]) for row in red)


def lcm_normalize(v):
    """Scale a rational vector to the primitive integer vector on its ray."""
    from math import gcd, lcm

    fr = [Fraction(x) for x in v]
    den = 1
    for x in fr:
        den = lcm(den, x.denominator)
    ints = [int(x * den) for x in fr]
    g = 0
    for x in ints:
        g = gcd(g, abs(x))
    if g == 0:
        return tuple(ints)
    return tuple(x // g for x in ints)
