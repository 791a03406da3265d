"""Independent reference computations used by the tests."""

from fractions import Fraction


def matmul(a, b):
    n = len(a)
    return [[sum(a[i][k] * b[k][j] for k in range(n)) for j in range(n)] for i in range(n)]


def eye(n):
    return [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]


def add(a, b, c=1):
    return [[x + c * y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def scale(a, c):
    return [[c * x for x in row] for row in a]


def nil_exp(M):
    """exp of a strictly upper-triangular matrix (finite series)."""
    n = len(M)
    out, term = eye(n), eye(n)
    for k in range(1, n):
        term = scale(matmul(term, M), Fraction(1, k))
        out = add(out, term)
    return out


def uni_log(g):
    """log of a unitriangular matrix (finite series)."""
    n = len(g)
    N = add(g, eye(n), -1)
    out, power = scale(N, 0), eye(n)
    for k in range(1, n):
        power = matmul(power, N)
        out = add(out, scale(power, Fraction((-1) ** (k + 1), k)))
    return out


def unit(n, i, j):
    m = scale(eye(n), 0)
    m[i - 1][j - 1] = Fraction(1)
    return m


def heisenberg_matrix(c):
    """x E12 + y E23 + z E13."""
    x, y, z = c
    return add(add(scale(unit(3, 1, 2), x), scale(unit(3, 2, 3), y)), scale(unit(3, 1, 3), z))


def heisenberg_coords(M):
    return (M[0][1], M[1][2], M[0][2])


def engel_matrix(c):
    """a (E12 + E23 + E34) + b E34 + c E24 + d E14."""
    a, b, cc, d = c
    X = add(add(unit(4, 1, 2), unit(4, 2, 3)), unit(4, 3, 4))
    M = scale(X, a)
    for coef, (i, j) in ((b, (3, 4)), (cc, (2, 4)), (d, (1, 4))):
        M = add(M, scale(unit(4, i, j), coef))
    return M


def engel_coords(M):
    a = M[0][1]
    assert M[1][2] == a
    return (a, M[2][3] - a, M[1][3], M[0][3])


def oracle_product(to_matrix, to_coords, x, y):
    return to_coords(uni_log(matmul(nil_exp(to_matrix(x)), nil_exp(to_matrix(y)))))
