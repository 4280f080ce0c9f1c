"""Independent v(x0, t_n) for the 50x50 homogeneous setup (scipy, float64).

Element loop, Dirichlet elimination and the L1 recursion are re-derived here
from scratch; values are frozen into test_stochastic.cpp.
"""
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from math import gamma

m, alpha, T, N = 50, 0.75, 1.0, 100
h = 1.0 / m
np1 = m + 1
xy = np.array([(i * h, j * h) for j in range(np1) for i in range(np1)])

rows, cols, mv, kv = [], [], [], []
for j in range(m):
    for i in range(m):
        a, b, c, d = j * np1 + i, j * np1 + i + 1, (j + 1) * np1 + i + 1, (j + 1) * np1 + i
        for tri in ((a, b, c), (a, c, d)):
            p = xy[list(tri)]
            B = np.array([p[1] - p[0], p[2] - p[0]]).T
            area = 0.5 * abs(np.linalg.det(B))
            G = np.linalg.inv(B).T @ np.array([[-1, 1, 0], [-1, 0, 1]])
            K = area * G.T @ G
            M = area / 12.0 * (np.ones((3, 3)) + np.eye(3))
            for r in range(3):
                for s in range(3):
                    rows.append(tri[r]); cols.append(tri[s])
                    mv.append(M[r, s]); kv.append(K[r, s])
n = np1 * np1
Mf = sp.csr_matrix((mv, (rows, cols)), shape=(n, n))
Sf = sp.csr_matrix((kv, (rows, cols)), shape=(n, n))
inner = np.array([k for k in range(n) if 0 < k % np1 < m and 0 < k // np1 < m])
M = Mf[inner][:, inner].tocsc()
S = Sf[inner][:, inner].tocsc()


def bump(s):
    return np.where(np.abs(s) < 1, np.exp(1 - 1 / np.maximum(1 - s * s, 1e-300)), 0.0)


f = bump((xy[inner, 0] - 0.6) / 0.3) * bump((xy[inner, 1] - 0.6) / 0.3)

dt = T / N
c = dt ** (-alpha) / gamma(2 - alpha)
a = np.array([0.0] + [k ** (1 - alpha) - (k - 1) ** (1 - alpha) for k in range(1, N + 2)])
lu = spla.splu((c * M + S).tocsc())
obs = list(inner).index(10 * np1 + 20)  # x0 = (0.4, 0.2) is node (20, 10)

# c a_1 M v_n = M[ c a_n v_0 + sum_{k=1}^{n-1} c (a_{n-k} - a_{n-k+1}) v_k ] - S v_n
V = [f]
for step in range(1, N + 1):
    rhs = c * a[step] * V[0]
    for k in range(1, step):
        rhs = rhs + c * (a[step - k] - a[step - k + 1]) * V[k]
    V.append(lu.solve(M @ rhs))
trace = [v[obs] for v in V]
for k in (1, 2, 10, 50, 100):
    print(k, repr(trace[k]))
