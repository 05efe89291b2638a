"""Independent reference values for the test suite.

Everything here is computed without the package: plain Python loops,
``fractions`` and ``mpmath`` at 50 digits. Run once and commit the JSON;
tests only read ``frozen.json``.
"""
import json
import math
import random
from fractions import Fraction
from pathlib import Path

import mpmath as mp

mp.mp.dps = 50


def laplacian_dense(n_g):
    h = Fraction(1, n_g + 1)
    N = n_g * n_g
    A = [[Fraction(0)] * N for _ in range(N)]
    for j in range(n_g):
        for i in range(n_g):
            r = j * n_g + i
            A[r][r] = 4 / h**2
            for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                ii, jj = i + di, j + dj
                if 0 <= ii < n_g and 0 <= jj < n_g:
                    A[r][jj * n_g + ii] = -1 / h**2
    return A


def source_values(n_g):
    h = mp.mpf(1) / (n_g + 1)
    out = []
    for j in range(1, n_g + 1):
        for i in range(1, n_g + 1):
            out.append(-100 * mp.sin(2 * mp.pi * i * h) * mp.sin(2 * mp.pi * j * h))
    return out


def deim_bruteforce(V):
    """Greedy DEIM point selection with explicit Gaussian elimination on Python floats."""
    N, n = len(V), len(V[0])
    col = lambda c: [V[r][c] for r in range(N)]
    first = col(0)
    p = [max(range(N), key=lambda r: (abs(first[r]), -r))]
    for i in range(1, n):
        v = col(i)
        # solve (P^T V_i) c = P^T v
        M = [[V[p[a]][b] for b in range(i)] + [v[p[a]]] for a in range(i)]
        for c in range(i):
            piv = max(range(c, i), key=lambda r: abs(M[r][c]))
            M[c], M[piv] = M[piv], M[c]
            for r in range(c + 1, i):
                f = M[r][c] / M[c][c]
                for t in range(c, i + 1):
                    M[r][t] -= f * M[c][t]
        cvec = [0.0] * i
        for c in reversed(range(i)):
            cvec[c] = (M[c][i] - sum(M[c][t] * cvec[t] for t in range(c + 1, i))) / M[c][c]
        r = [v[row] - sum(V[row][t] * cvec[t] for t in range(i)) for row in range(N)]
        best = max(abs(x) for x in r)
        p.append(min(row for row in range(N) if abs(r[row]) == best))
    return p


def newton_cubic(u0, steps):
    u = mp.mpf(u0)
    errs = []
    for _ in range(steps):
        errs.append(float(abs(u - 2)))
        u = u - (u**3 - 8) / (3 * u**2)
    return errs


def ar1_truncated_iact(phi, J):
    return float(1 + 2 * mp.fsum((1 - mp.mpf(j) / J) * mp.mpf(phi)**j for j in range(1, J)))


def main():
    out = {}
    A2 = laplacian_dense(2)
    out["laplacian_n2"] = [[float(x) for x in row] for row in A2]
    out["laplacian_n2_rowsums"] = [float(sum(row)) for row in A2]
    for n_g in (8, 32):
        h = mp.mpf(1) / (n_g + 1)
        out[f"lambda_min_n{n_g}"] = float(8 / h**2 * mp.sin(mp.pi * h / 2)**2)
    out["two_pi_sq"] = float(2 * mp.pi**2)
    B = source_values(32)
    out["source_sum_n32"] = float(mp.fsum(B))
    out["source_l1_n32"] = float(mp.fsum(abs(b) for b in B))
    out["F_u1_xi_1_0.1"] = float(mp.mpf("0.1") * (mp.e - 1))
    out["JF_u1_xi_1_0.1"] = float(mp.mpf("0.1") * mp.e)
    out["F_taylor_xi_0.01_0.1_u1"] = float(mp.mpf("0.1") * (1 + mp.mpf("0.01") / 2))
    out["gmres_diag_solution"] = [float(Fraction(1, d)) for d in range(1, 11)]
    out["dense_2x2_solution"] = [1.0, 1.0]
    out["forcing_i0"] = 0.25
    out["forcing_branch2"] = float(Fraction(9, 10) * Fraction(1, 100))
    out["forcing_branch3"] = float(Fraction(9, 10) * Fraction(1, 4))
    out["newton_cubic_errors"] = newton_cubic(3, 6)
    out["newton_cubic_limit_ratio"] = 0.5  # f''(2) / (2 f'(2)) = 12 / 24

    rng = random.Random(20240601)
    V = [[rng.gauss(0.0, 1.0) for _ in range(4)] for _ in range(30)]
    out["deim_random_V"] = V
    out["deim_random_p"] = deim_bruteforce(V)
    out["deim_hand_V"] = [[1.0, 0.0], [0.5, 1.0]]
    out["deim_hand_p_1based"] = [i + 1 for i in deim_bruteforce([[1.0, 0.0], [0.5, 1.0]])]

    eps = 1e-8
    out["cov_two_samples"] = [[1.0 + eps, 0.0], [0.0, eps]]
    out["ar1_phi0.8_iact"] = float((1 + mp.mpf("0.8")) / (1 - mp.mpf("0.8")))
    out["ar1_phi0.8_iact_J50"] = ar1_truncated_iact("0.8", 50)
    out["normal_q975"] = float(mp.sqrt(2) * mp.erfinv(mp.mpf("0.95")))
    # lowest eigenpair of the 5-point Laplacian on n_g = 16
    n_g = 16
    h = mp.mpf(1) / (n_g + 1)
    out["eig11_n16"] = float(2 * 4 / h**2 * mp.sin(mp.pi * h / 2)**2)
    Path(__file__).with_name("frozen.json").write_text(json.dumps(out, indent=1) + "\n")


if __name__ == "__main__":
    main()
