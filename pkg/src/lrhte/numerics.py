"""Deterministic dense linear algebra and seeded random streams.

Everything here is double precision and a pure function of its inputs, so
repeated calls reproduce bit-identical results on any platform. The random
stream is counter based (no hidden global state), normal variates come from
Box-Muller on the uniform stream, and the solvers are small dense routines:
ridge via normal equations with a Cholesky factor, singular values via
one-sided Jacobi rotations, and masked matrix completion via alternating
ridge solves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SingularSystemError(ArithmeticError):
    """Normal equations are singular and no regularization was requested."""


def _mix64_int(z: int) -> int:
    """SplitMix64 finalizer on a Python int, reduced mod 2**64."""
    z &= _MASK64
    z = (z ^ (z >> 30)) * _MIX1 & _MASK64
    z = (z ^ (z >> 27)) * _MIX2 & _MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    # in-place on the caller's buffer; one scratch allocation
    tmp = z >> np.uint64(30)
    z ^= tmp
    z *= np.uint64(_MIX1)
    np.right_shift(z, np.uint64(27), out=tmp)
    z ^= tmp
    z *= np.uint64(_MIX2)
    np.right_shift(z, np.uint64(31), out=tmp)
    z ^= tmp
    return z


class RngStream:
    """Counter-based random stream: draw i is a hash of (seed, i).

    The mapping is SplitMix64, implemented with explicit 64-bit wraparound,
    so identical seeds give identical sequences on every platform. Uniform
    draws lie in the open interval (0, 1); normal draws apply Box-Muller to
    consecutive uniform pairs. Streams are single-owner: the counter advances
    with every draw and is part of the reproducibility contract.
    """

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) & _MASK64
        self._key = _mix64_int(self.seed ^ _GAMMA)
        self.counter = int(counter)

    def _raw(self, count: int) -> np.ndarray:
        if count < 0:
            raise ValueError("draw count must be nonnegative")
        idx = np.arange(self.counter + 1, self.counter + count + 1, dtype=np.uint64)
        self.counter += count
        idx *= np.uint64(_GAMMA)
        idx += np.uint64(self._key)
        return _mix64_array(idx)

    def uniform01(self, count: int) -> np.ndarray:
        """Uniform draws in the open interval (0, 1)."""
        bits = self._raw(count)
        bits >>= np.uint64(11)
        u = bits.astype(np.float64)
        u += 0.5
        u *= 2.0**-53
        return u

    def std_normal(self, count: int) -> np.ndarray:
        """Standard normal draws via Box-Muller on the uniform stream."""
        pairs = (count + 1) // 2
        u = self.uniform01(2 * pairs)
        r = u[:pairs]
        theta = u[pairs:]
        np.log(r, out=r)
        r *= -2.0
        np.sqrt(r, out=r)
        theta *= 2.0 * np.pi
        z = np.empty(2 * pairs)
        np.cos(theta, out=z[:pairs])
        z[:pairs] *= r
        np.sin(theta, out=z[pairs:])
        z[pairs:] *= r
        return z[:count]

    def bernoulli(self, p: float, count: int) -> np.ndarray:
        """0/1 draws with success probability p, as int64."""
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"bernoulli p must be in [0, 1], got {p}")
        return (self.uniform01(count) < p).astype(np.int64)

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic random permutation of range(n)."""
        return np.argsort(self.uniform01(n), kind="stable")

    def child(self, *tags: int) -> "RngStream":
        """Independent substream derived from this stream's seed and tags.

        Does not consume draws from the parent; safe for per-task
        parallelism with sequential-identical output.
        """
        key = self._key
        for t in tags:
            key = _mix64_int(key ^ _mix64_int(int(t) ^ _GAMMA))
        return RngStream(key)


def rng_draws(stream: RngStream, kind: str, count: int, p: float = 0.5) -> np.ndarray:
    """Draw `count` values of the requested kind from the stream.

    kind is one of "std_normal", "uniform01", "bernoulli" (with probability
    p). Deterministic given (seed, call order).
    """
    if kind == "std_normal":
        return stream.std_normal(count)
    if kind == "uniform01":
        return stream.uniform01(count)
    if kind == "bernoulli":
        return stream.bernoulli(p, count).astype(np.float64)
    raise ValueError(f"unknown draw kind: {kind!r}")


def as_matrix(a) -> np.ndarray:
    """Validate and return a 2-D float64 array with finite entries."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite entries")
    return m


def mat_mul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"dimension mismatch: ({a.shape[0]}x{a.shape[1]}) @ ({b.shape[0]}x{b.shape[1]})"
        )
    return a @ b


@dataclass
class LinearModel:
    """Ridge/OLS fit: predictions are X @ coef + intercept."""

    coef: np.ndarray
    intercept: float

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return float(x @ self.coef + self.intercept)
        return x @ self.coef + self.intercept


def _ridge_solve(x: np.ndarray, y: np.ndarray, lam: float, intercept: bool):
    """Shared core: y may be (n,) or (n, q); returns (coef, intercept_row)."""
    x = np.asarray(x, dtype=np.float64)
    y2 = np.asarray(y, dtype=np.float64)
    single = y2.ndim == 1
    if single:
        y2 = y2[:, None]
    n, p = x.shape
    if y2.shape[0] != n:
        raise ValueError(f"x has {n} rows but y has {y2.shape[0]}")
    if n < 1:
        raise ValueError("ridge_fit needs at least one observation")
    if lam < 0:
        raise ValueError("ridge regularization must be nonnegative")

    if intercept:
        design = np.concatenate([x, np.ones((n, 1))], axis=1)
    else:
        design = x
    q = design.shape[1]
    gram = design.T @ design
    if lam > 0:
        # intercept column stays unpenalized
        reg = np.full(q, lam)
        if intercept:
            reg[-1] = 0.0
        gram = gram + np.diag(reg)
    rhs = design.T @ y2

    try:
        chol = np.linalg.cholesky(gram)
        beta = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
    except np.linalg.LinAlgError:
        if lam == 0.0:
            # pivoted fallback: rank-revealing least squares on the design
            beta, _, rank, _ = np.linalg.lstsq(design, y2, rcond=None)
            if rank < q:
                raise SingularSystemError(
                    f"normal equations singular (rank {rank} < {q}) with lambda = 0"
                ) from None
        else:
            beta = np.linalg.lstsq(gram, rhs, rcond=None)[0]

    if intercept:
        coef, b = beta[:-1], beta[-1]
    else:
        coef, b = beta, np.zeros(y2.shape[1])
    if single:
        return coef[:, 0], float(b[0])
    return coef, b


def ridge_fit(x, y, lam: float = 0.0, intercept: bool = True) -> LinearModel:
    """Minimize ||y - X b - b0||^2 + lam ||b||^2 (intercept unpenalized).

    Solved by normal equations with a Cholesky factor; a rank-revealing
    fallback raises SingularSystemError when lam = 0 and the system is
    genuinely singular.
    """
    coef, b = _ridge_solve(x, y, lam, intercept)
    return LinearModel(coef=coef, intercept=b)


def ridge_fit_multi(x, y, lam: float = 0.0, intercept: bool = True):
    """Ridge with shared factorization across the columns of y (n, q).

    Returns (coef (p, q), intercepts (q,)). Same objective as ridge_fit,
    applied column by column.
    """
    return _ridge_solve(x, y, lam, intercept)


def _jacobi_sweep_pairs(c: int):
    """Round-robin tournament pairings: c-1 rounds of disjoint column pairs."""
    cols = list(range(c))
    if c % 2 == 1:
        cols.append(-1)  # bye
    half = len(cols) // 2
    rounds = []
    for _ in range(len(cols) - 1):
        pairs = [
            (cols[i], cols[-1 - i])
            for i in range(half)
            if cols[i] != -1 and cols[-1 - i] != -1
        ]
        rounds.append(pairs)
        cols = [cols[0]] + [cols[-1]] + cols[1:-1]
    return rounds


def singular_values(m, k: int | None = None, tol: float = 1e-13, max_sweeps: int = 60) -> np.ndarray:
    """Top-k singular values of m, descending, via one-sided Jacobi.

    The matrix is oriented so rotations act on the smaller dimension's
    columns; disjoint pairs within a sweep are processed as vectorized
    batches. Converged values are accurate well past the 1e-8 relative
    contract.
    """
    a = as_matrix(m).copy()
    if a.shape[0] < a.shape[1]:
        a = a.T.copy()
    r, c = a.shape
    if k is None:
        k = c
    if not 0 <= k <= c:
        raise ValueError(f"k={k} out of range for matrix with min dimension {c}")

    scale = np.max(np.abs(a))
    if scale == 0.0:
        return np.zeros(k)

    rounds = _jacobi_sweep_pairs(c)
    for _ in range(max_sweeps):
        off_max = 0.0
        for pairs in rounds:
            pi = np.array([p for p, _ in pairs])
            qi = np.array([q for _, q in pairs])
            ap = a[:, pi]
            aq = a[:, qi]
            alpha = np.einsum("ij,ij->j", ap, ap)
            beta = np.einsum("ij,ij->j", aq, aq)
            gamma = np.einsum("ij,ij->j", ap, aq)
            denom = np.sqrt(alpha * beta)
            active = denom > 0.0
            rel = np.zeros_like(gamma)
            rel[active] = np.abs(gamma[active]) / denom[active]
            off_max = max(off_max, float(rel.max(initial=0.0)))
            rot = active & (np.abs(gamma) > tol * denom)
            if not np.any(rot):
                continue
            # classic one-sided Jacobi rotation zeroing the pair inner product
            zeta = (beta[rot] - alpha[rot]) / (2.0 * gamma[rot])
            t = np.sign(zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            t = np.where(zeta == 0.0, 1.0, t)
            cs = 1.0 / np.sqrt(1.0 + t * t)
            sn = cs * t
            pr = pi[rot]
            qr = qi[rot]
            new_p = a[:, pr] * cs - a[:, qr] * sn
            new_q = a[:, pr] * sn + a[:, qr] * cs
            a[:, pr] = new_p
            a[:, qr] = new_q
        if off_max <= tol:
            break

    svals = np.sqrt(np.einsum("ij,ij->j", a, a))
    svals.sort()
    return svals[::-1][:k].copy()


def als_complete(
    m,
    mask,
    rank: int,
    reg: float = 1e-6,
    iters: int = 30,
    stream: RngStream | None = None,
    with_trace: bool = False,
):
    """Complete a partially observed matrix with rank-`rank` alternating ridge.

    Each half step solves, for every row (then column), the ridge problem
    restricted to that row's observed entries; the per-row systems are
    assembled with a mask-weighted Gram tensor and solved as one batched
    call. Returns U @ V.T (and the observed-entry MSE trace when requested).
    """
    a = as_matrix(m)
    w = np.asarray(mask, dtype=bool)
    if w.shape != a.shape:
        raise ValueError(f"mask shape {w.shape} does not match matrix shape {a.shape}")
    if rank < 1:
        raise ValueError("rank must be >= 1")
    rows_obs = w.sum(axis=1)
    cols_obs = w.sum(axis=0)
    if np.any(rows_obs == 0):
        raise ValueError(f"row {int(np.argmin(rows_obs))} has no observed entries")
    if np.any(cols_obs == 0):
        raise ValueError(f"column {int(np.argmin(cols_obs))} has no observed entries")

    if stream is None:
        stream = RngStream(0)
    nr, nc = a.shape
    wf = w.astype(np.float64)
    aw = a * wf
    n_obs = float(wf.sum())
    v = stream.std_normal(nc * rank).reshape(nc, rank)
    u = np.zeros((nr, rank))
    eye = reg * np.eye(rank)

    trace = []
    for _ in range(iters):
        # row update: (V' diag(w_i) V + reg I) u_i = V' diag(w_i) m_i
        gram_r = np.einsum("cr,ic,cs->irs", v, wf, v) + eye
        u = np.linalg.solve(gram_r, (aw @ v)[:, :, None])[:, :, 0]
        # column update, symmetric
        gram_c = np.einsum("ir,ic,is->crs", u, wf, u) + eye
        v = np.linalg.solve(gram_c, (aw.T @ u)[:, :, None])[:, :, 0]
        if with_trace:
            resid = (a - u @ v.T) * wf
            trace.append(float(np.sum(resid * resid) / n_obs))

    completed = u @ v.T
    if with_trace:
        return completed, trace
    return completed
