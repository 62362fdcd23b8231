"""Exact ReQU networks for polynomials, B-splines and charts.

sigma(t) = max(t, 0)^2. Every square is realised as sigma(t) + sigma(-t),
so t^N for N = 2^L is an L-layer ladder.

Network format
--------------
A :class:`LayeredNetwork` is a list of :class:`Layer`; each maps z to

    out @ sigma(weights @ z + biases) + out_bias,

so a layer holds both its hidden units (rows of ``weights``) and the linear
read-out feeding the next layer. The JSON form is

    {"input_dim": D,
     "layers": [{"weights": [[...]], "biases": [...], "out": [[...]], "out_bias": [...]}, ...],
     "meta": {...}}

and can be run by any runtime that implements the line above.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, UnsupportedOperationError, ValidationError

MAX_RIDGE_POWER = 16
SUPPORTED_BSPLINE_ORDERS = (3, 5, 9)


def requ(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return np.where(t > 0, t * t, 0.0)


@dataclass(frozen=True)
class Layer:
    weights: np.ndarray
    biases: np.ndarray
    out: np.ndarray
    out_bias: np.ndarray

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.weights, dtype=float))
        b = np.asarray(self.biases, dtype=float).reshape(-1)
        O = np.atleast_2d(np.asarray(self.out, dtype=float))
        c = np.asarray(self.out_bias, dtype=float).reshape(-1)
        if b.shape[0] != W.shape[0] or O.shape[1] != W.shape[0] or c.shape[0] != O.shape[0]:
            raise ValidationError("inconsistent layer shapes", "layers")
        for name, v in (("weights", W), ("biases", b), ("out", O), ("out_bias", c)):
            object.__setattr__(self, name, v)

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def output_dim(self) -> int:
        return self.out.shape[0]

    @property
    def units(self) -> int:
        return self.weights.shape[0]

    def __call__(self, Z: np.ndarray) -> np.ndarray:
        return requ(Z @ self.weights.T + self.biases) @ self.out.T + self.out_bias


@dataclass
class LayeredNetwork:
    input_dim: int
    layers: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        dim = self.input_dim
        for i, layer in enumerate(self.layers):
            if layer.input_dim != dim:
                raise ValidationError(f"layer {i} expects {layer.input_dim} inputs, previous gives {dim}",
                                      "layers")
            dim = layer.output_dim

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def output_dim(self) -> int:
        return self.layers[-1].output_dim if self.layers else self.input_dim

    @property
    def unit_count(self) -> int:
        return sum(layer.units for layer in self.layers)

    def __call__(self, x) -> np.ndarray:
        return eval_network(self, x)

    def to_json(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "layers": [
                {"weights": L.weights.tolist(), "biases": L.biases.tolist(),
                 "out": L.out.tolist(), "out_bias": L.out_bias.tolist()}
                for L in self.layers
            ],
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LayeredNetwork":
        try:
            layers = [Layer(L["weights"], L["biases"], L["out"], L["out_bias"]) for L in obj["layers"]]
            return cls(int(obj["input_dim"]), layers, dict(obj.get("meta", {})))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"bad network JSON: {exc}", "network") from None


def eval_network(net: LayeredNetwork, x) -> np.ndarray:
    """Run the network on x of shape (n, input_dim); returns (n, output_dim)."""
    X = np.asarray(x, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if net.input_dim == 1 else X[None, :]
    if X.shape[1] != net.input_dim:
        raise ValidationError(f"network expects {net.input_dim} inputs, got {X.shape[1]}", "x")
    Z = X
    for layer in net.layers:
        Z = layer(Z)
    return Z


def _square_layer(width: int, out=None, out_bias=None) -> Layer:
    """Squares each of ``width`` inputs via sigma(t) + sigma(-t), then reads out."""
    eye = np.eye(width)
    pair = np.hstack([eye, eye])
    if out is None:
        out = pair
    else:
        out = np.asarray(out, dtype=float) @ pair
    if out_bias is None:
        out_bias = np.zeros(out.shape[0])
    return Layer(np.vstack([eye, -eye]), np.zeros(2 * width), out, out_bias)


def _is_power_of_two(N: int) -> bool:
    return N >= 2 and (N & (N - 1)) == 0


def compile_power(N: int) -> LayeredNetwork:
    """t -> t^N with log2(N) squaring layers."""
    if not _is_power_of_two(int(N)) or int(N) != N:
        raise ValidationError("N must be a power of two >= 2", "N")
    L = int(N).bit_length() - 1
    return LayeredNetwork(1, [_square_layer(1) for _ in range(L)], {"kind": "power", "N": int(N)})


# ---------------------------------------------------------------------------
# ridge decomposition
# ---------------------------------------------------------------------------

def total_degree_indices(d: int, N: int) -> np.ndarray:
    """Multi-indices beta in N^d with |beta|_1 <= N, graded then lexicographic."""
    out = [b for deg in range(N + 1) for b in itertools.product(range(deg + 1), repeat=d) if sum(b) == deg]
    return np.array(out, dtype=np.int64).reshape(-1, d)


def ridge_power_for(n: int) -> int:
    """N = 2^ceil(log2 n), at least 2."""
    if n < 1:
        raise ValidationError("n must be >= 1", "n")
    return max(2, 1 << math.ceil(math.log2(n))) if n > 1 else 2


def ridge_family(d: int, N: int, jitter: int = 0):
    """Directions and biases independent of the polynomial.

    (b_k, w_k) = alpha_k / N for the lattice points alpha_k in N^{d+1} with
    |alpha_k|_1 = N. Powers of these affine forms are unisolvent for total
    degree <= N. ``jitter > 0`` perturbs them with a seeded generator.
    """
    alphas = [a for a in itertools.product(range(N + 1), repeat=d + 1) if sum(a) == N]
    A = np.array(alphas, dtype=float)[::-1] / N
    if jitter:
        A = A + 1e-2 * np.random.default_rng(jitter).standard_normal(A.shape)
    return A[:, 1:], A[:, 0]


def _multinomial(N: int, beta) -> float:
    rest = N - int(np.sum(beta))
    out = math.factorial(N) // math.factorial(rest)
    for b in beta:
        out //= math.factorial(int(b))
    return float(out)


def _power_matrix(W: np.ndarray, b: np.ndarray, N: int, betas: np.ndarray) -> np.ndarray:
    """M[beta, k] = coefficient of x^beta in (w_k . x + b_k)^N."""
    M = np.empty((betas.shape[0], W.shape[0]))
    for r, beta in enumerate(betas):
        M[r] = _multinomial(N, beta) * b ** (N - beta.sum()) * np.prod(W ** beta, axis=1)
    return M


def _as_coeff_dict(P, d: int) -> dict:
    """Monomial coefficients {beta: c} from a dict or a dense tensor P[beta]."""
    if isinstance(P, dict):
        out = {}
        for k, v in P.items():
            k = tuple(int(t) for t in np.atleast_1d(k))
            if len(k) != d:
                raise ValidationError("multi-index length differs from d", "P")
            out[k] = out.get(k, 0.0) + float(v)
        return out
    T = np.asarray(P, dtype=float)
    if T.ndim != d:
        raise ValidationError(f"coefficient tensor must have {d} axes", "P")
    return {tuple(int(i) for i in idx): float(T[idx]) for idx in zip(*np.nonzero(T))}


def eval_poly(P, d: int, x) -> np.ndarray:
    """Direct monomial evaluation of P (dict or dense tensor) at x (shape (n, d))."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.zeros(X.shape[0])
    for beta, c in _as_coeff_dict(P, d).items():
        out += c * np.prod(X ** np.asarray(beta), axis=1)
    return out


@dataclass(frozen=True)
class RidgeDecomposition:
    d: int
    N: int
    directions: np.ndarray
    biases: np.ndarray
    coeffs: np.ndarray
    residual: float

    @property
    def dim(self) -> int:
        return self.coeffs.shape[0]

    def __call__(self, x) -> np.ndarray:
        X = np.atleast_2d(np.asarray(x, dtype=float))
        return ((X @ self.directions.T + self.biases) ** self.N) @ self.coeffs


def decompose_poly(P, d: int, n: int, *, max_jitter: int = 3) -> RidgeDecomposition:
    """P(x) = sum_k a_k (w_k . x + b_k)^N with N = 2^ceil(log2 n).

    P is a dict {multi-index: coefficient} or a dense coefficient tensor. The
    ridge terms span polynomials of total degree <= N, so P may not exceed
    that. ``residual`` is the largest monomial-coefficient mismatch.
    """
    if d < 1:
        raise ValidationError("d must be >= 1", "d")
    N = ridge_power_for(n)
    if N > MAX_RIDGE_POWER:
        raise ValidationError(f"ridge power {N} exceeds {MAX_RIDGE_POWER}", "n")
    coeffs = _as_coeff_dict(P, d)
    top = max((sum(k) for k, v in coeffs.items() if v != 0.0), default=0)
    if top > N:
        raise ValidationError(f"P has total degree {top} > N = {N}; ridge powers only span total degree <= N",
                              "P")
    betas = total_degree_indices(d, N)
    rhs = np.array([coeffs.get(tuple(int(v) for v in beta), 0.0) for beta in betas])
    for attempt in range(max_jitter + 1):
        W, b = ridge_family(d, N, jitter=attempt)
        M = _power_matrix(W, b, N, betas)
        if np.linalg.cond(M) > 1e13:
            continue
        a = np.linalg.solve(M, rhs)
        resid = float(np.max(np.abs(M @ a - rhs))) if rhs.size else 0.0
        return RidgeDecomposition(d, N, W, b, a, resid)
    raise NumericalError(f"ridge direction family singular for d={d}, N={N}")


def compile_ridge(dec: RidgeDecomposition) -> LayeredNetwork:
    """Network for sum_k a_k (w_k . x + b_k)^N: log2(N) layers, dim ridge pairs each."""
    K = dec.dim
    L = dec.N.bit_length() - 1
    layers = []
    first_out = dec.coeffs[None, :] if L == 1 else None
    eye = np.eye(K)
    out = np.hstack([eye, eye]) if first_out is None else np.hstack([first_out, first_out])
    layers.append(Layer(np.vstack([dec.directions, -dec.directions]),
                        np.concatenate([dec.biases, -dec.biases]), out, np.zeros(out.shape[0])))
    for j in range(1, L):
        layers.append(_square_layer(K, out=dec.coeffs[None, :] if j == L - 1 else None))
    return LayeredNetwork(dec.d, layers, {"kind": "ridge", "N": dec.N, "dim": K,
                                          "residual": dec.residual})


def compile_poly(P, d: int, n: int) -> LayeredNetwork:
    return compile_ridge(decompose_poly(P, d, n))


# ---------------------------------------------------------------------------
# B-splines and charts
# ---------------------------------------------------------------------------

def compile_bspline(m: int, d: int) -> LayeredNetwork:
    """Exact ReQU network for the tensor cardinal B-spline N_m on R^d.

    Truncated powers (t)_+^{m-1} come from sigma(t) = t_+^2 followed by
    squaring layers, so m - 1 must be a power of two (m in 3, 5, 9). The
    univariate alternating sums are read out per coordinate and multiplied
    by the ridge network of x_1 ... x_d.
    """
    if m not in SUPPORTED_BSPLINE_ORDERS:
        raise UnsupportedOperationError(
            f"compile_bspline supports m in {SUPPORTED_BSPLINE_ORDERS} (m-1 a power of two); got m={m}")
    if d < 1:
        raise ValidationError("d must be >= 1", "d")
    q = m - 1
    squarings = q.bit_length() - 2  # sigma gives the first square
    ks = np.arange(m + 1)
    width = d * (m + 1)
    W = np.zeros((width, d))
    for i in range(d):
        W[i * (m + 1):(i + 1) * (m + 1), i] = 1.0
    bias = -np.tile(ks, d).astype(float)
    comb = np.array([(-1) ** k * math.comb(m, k) for k in ks], dtype=float) / math.factorial(q)
    readout = np.zeros((d, width))
    for i in range(d):
        readout[i, i * (m + 1):(i + 1) * (m + 1)] = comb
    layers = [Layer(W, bias, readout if squarings == 0 else np.eye(width), np.zeros(d if squarings == 0 else width))]
    for j in range(squarings):
        last = j == squarings - 1
        layers.append(_square_layer(width, out=readout if last else None))
    if d > 1:
        prod = {tuple([1] * d): 1.0}
        layers.extend(compile_poly(prod, d, d).layers)
    return LayeredNetwork(d, layers, {"kind": "bspline", "m": m, "d": d})


def compile_chart(chart) -> LayeredNetwork:
    """One hidden layer computing Phi(x) = scale * (||x - x_l||^2 - psi0_l).

    Each squared coordinate difference is sigma(t) + sigma(-t) with
    t = x_i - x_{l,i}, i.e. a ridge unit along a coordinate axis.
    """
    A = np.atleast_2d(chart.anchors)
    d, D = A.shape
    eye = np.eye(D)
    W = np.vstack([np.vstack([eye, -eye]) for _ in range(d)])
    b = np.concatenate([np.concatenate([-A[l], A[l]]) for l in range(d)])
    out = np.zeros((d, 2 * D * d))
    for l in range(d):
        out[l, 2 * D * l:2 * D * (l + 1)] = chart.scale
    return LayeredNetwork(D, [Layer(W, b, out, -chart.scale * np.asarray(chart.psi0))],
                          {"kind": "chart", "d": d})
