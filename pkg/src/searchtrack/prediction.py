"""Long-horizon target trajectory prediction.

An LSTM layer feeds a three-layer MLP that emits the next 15 positions from
the previous 10, all at a fixed 0.2 s spacing. Training is plain numpy with
exact backpropagation through time, so gradients can be checked against
finite differences and runs are bit-reproducible from a seed. A Kalman
constant-velocity extrapolator serves as the short-horizon comparison.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

INPUT_LEN = 10
OUTPUT_LEN = 15
DT = 0.2


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 300
    dropout: float = 0.4
    learning_rate: float = 1e-4
    hidden_dim: int = 32

    def __post_init__(self):
        if self.batch_size <= 0 or self.epochs <= 0 or self.learning_rate < 0:
            raise ValueError("batch_size/epochs must be positive, lr >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")


_MLP_WIDTHS = (64, 64)  # hidden layers; output layer is OUTPUT_LEN * 2


class PredictorWeights:
    """Named parameter arrays for the LSTM-MLP predictor.

    LSTM gates are stacked [input, forget, cell, output] along the first
    axis: wx (4H, 2), wh (4H, H), b (4H,). The MLP is rectifier-activated
    with a linear 30-unit output reshaped to 15 points.
    """

    def __init__(self, hidden_dim: int, params: dict[str, np.ndarray]):
        self.hidden_dim = int(hidden_dim)
        self.params = params
        self.loss_history: list[float] = []

    @classmethod
    def init(cls, hidden_dim: int, rng: np.random.Generator) -> "PredictorWeights":
        h = hidden_dim
        k = 1.0 / math.sqrt(h)
        w1, w2 = _MLP_WIDTHS
        out = OUTPUT_LEN * 2
        params = {
            "lstm_wx": rng.uniform(-k, k, size=(4 * h, 2)),
            "lstm_wh": rng.uniform(-k, k, size=(4 * h, h)),
            "lstm_b": np.zeros(4 * h),
            "mlp_w1": rng.uniform(-k, k, size=(w1, h)),
            "mlp_b1": np.zeros(w1),
            "mlp_w2": rng.uniform(-1.0 / math.sqrt(w1), 1.0 / math.sqrt(w1),
                                  size=(w2, w1)),
            "mlp_b2": np.zeros(w2),
            "mlp_w3": rng.uniform(-1.0 / math.sqrt(w2), 1.0 / math.sqrt(w2),
                                  size=(out, w2)),
            "mlp_b3": np.zeros(out),
        }
        # start with an open forget gate; standard LSTM practice
        params["lstm_b"][h:2 * h] = 1.0
        return cls(hidden_dim, params)

    @classmethod
    def zeros(cls, hidden_dim: int) -> "PredictorWeights":
        w = cls.init(hidden_dim, np.random.default_rng(0))
        for k in w.params:
            w.params[k] = np.zeros_like(w.params[k])
        return w

    def copy(self) -> "PredictorWeights":
        w = PredictorWeights(self.hidden_dim,
                             {k: v.copy() for k, v in self.params.items()})
        w.loss_history = list(self.loss_history)
        return w


def save_weights(w: PredictorWeights, path: str) -> None:
    payload = {
        "hidden_dim": w.hidden_dim,
        "dt": DT,
        "input_len": INPUT_LEN,
        "output_len": OUTPUT_LEN,
        "arrays": {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in w.params.items()
        },
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f)


def load_weights(path: str) -> PredictorWeights:
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    params = {
        name: np.array(spec["data"], dtype=float).reshape(spec["shape"])
        for name, spec in payload["arrays"].items()
    }
    return PredictorWeights(payload["hidden_dim"], params)


# -- windows / preprocessing -------------------------------------------------

def normalize_window(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Shift a window so its last point sits at the origin.

    Returns (normalized window, offset); adding the offset back maps
    predictions into the original global frame.
    """
    w = np.asarray(w, dtype=float)
    offset = w[-1].copy()
    return w - offset, offset


def denormalize(points: np.ndarray, offset: np.ndarray) -> np.ndarray:
    return np.asarray(points, dtype=float) + np.asarray(offset, dtype=float)


def augment_rotations(traj: np.ndarray) -> list[np.ndarray]:
    """The eight 45-degree rotations of a trajectory about the origin."""
    traj = np.asarray(traj, dtype=float)
    if traj.size == 0:
        raise ValueError("empty trajectory")
    out = []
    for k in range(8):
        th = k * math.pi / 4.0
        c, s = math.cos(th), math.sin(th)
        rot = np.array([[c, -s], [s, c]])
        out.append(traj @ rot.T)
    return out


# -- forward / backward -------------------------------------------------------

def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _forward(w: PredictorWeights, x: np.ndarray, dropout_mask=None):
    """Batched forward pass; returns predictions and the cache for backprop.

    x: (B, INPUT_LEN, 2). dropout_mask, when given, multiplies the final
    LSTM hidden state (inverted-dropout scaling is the caller's job).
    """
    p = w.params
    h_dim = w.hidden_dim
    b_size = x.shape[0]
    wx, wh, bias = p["lstm_wx"], p["lstm_wh"], p["lstm_b"]
    h = np.zeros((b_size, h_dim))
    c = np.zeros((b_size, h_dim))
    steps = []
    for t in range(x.shape[1]):
        xt = x[:, t, :]
        z = xt @ wx.T + h @ wh.T + bias
        i = _sigmoid(z[:, :h_dim])
        f = _sigmoid(z[:, h_dim:2 * h_dim])
        g = np.tanh(z[:, 2 * h_dim:3 * h_dim])
        o = _sigmoid(z[:, 3 * h_dim:])
        c_new = f * c + i * g
        tanh_c = np.tanh(c_new)
        h_new = o * tanh_c
        steps.append((xt, h, c, i, f, g, o, tanh_c))
        h, c = h_new, c_new
    h_out = h if dropout_mask is None else h * dropout_mask
    a1 = h_out @ p["mlp_w1"].T + p["mlp_b1"]
    r1 = np.maximum(a1, 0.0)
    a2 = r1 @ p["mlp_w2"].T + p["mlp_b2"]
    r2 = np.maximum(a2, 0.0)
    y = r2 @ p["mlp_w3"].T + p["mlp_b3"]
    cache = (steps, h, h_out, a1, r1, a2, r2, dropout_mask)
    return y.reshape(b_size, OUTPUT_LEN, 2), cache


def _backward(w: PredictorWeights, x: np.ndarray, dy: np.ndarray, cache):
    """Exact gradients of a scalar loss given dL/dy; dy: (B, OUTPUT_LEN, 2)."""
    p = w.params
    h_dim = w.hidden_dim
    steps, h_last, h_out, a1, r1, a2, r2, dropout_mask = cache
    grads = {k: np.zeros_like(v) for k, v in p.items()}

    dyf = dy.reshape(dy.shape[0], OUTPUT_LEN * 2)
    grads["mlp_w3"] = dyf.T @ r2
    grads["mlp_b3"] = dyf.sum(axis=0)
    dr2 = dyf @ p["mlp_w3"]
    da2 = dr2 * (a2 > 0.0)
    grads["mlp_w2"] = da2.T @ r1
    grads["mlp_b2"] = da2.sum(axis=0)
    dr1 = da2 @ p["mlp_w2"]
    da1 = dr1 * (a1 > 0.0)
    grads["mlp_w1"] = da1.T @ h_out
    grads["mlp_b1"] = da1.sum(axis=0)
    dh = da1 @ p["mlp_w1"]
    if dropout_mask is not None:
        dh = dh * dropout_mask

    dc = np.zeros_like(dh)
    wh = p["lstm_wh"]
    for t in range(len(steps) - 1, -1, -1):
        xt, h_prev, c_prev, i, f, g, o, tanh_c = steps[t]
        do = dh * tanh_c
        dc = dc + dh * o * (1.0 - tanh_c ** 2)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dz = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g ** 2),
            do * o * (1.0 - o),
        ], axis=1)
        grads["lstm_wx"] += dz.T @ xt
        grads["lstm_wh"] += dz.T @ h_prev
        grads["lstm_b"] += dz.sum(axis=0)
        dh = dz @ wh
        dc = dc * f
    return grads


def lstm_forward(w: PredictorWeights, window: np.ndarray) -> np.ndarray:
    """Deterministic inference on one normalized window -> (15, 2) points."""
    window = np.asarray(window, dtype=float)
    if window.shape != (INPUT_LEN, 2):
        raise ValueError(f"expected ({INPUT_LEN}, 2) window, got {window.shape}")
    y, _ = _forward(w, window[None, :, :])
    return y[0]


def predict_global(w: PredictorWeights, window: np.ndarray) -> np.ndarray:
    """Normalize, run the model, and map back to the global frame."""
    norm, offset = normalize_window(window)
    return denormalize(lstm_forward(w, norm), offset)


def loss_and_grads(w: PredictorWeights, x: np.ndarray, y_true: np.ndarray,
                   dropout_mask=None) -> tuple[float, dict[str, np.ndarray]]:
    """MSE loss over the batch and its exact gradients."""
    pred, cache = _forward(w, x, dropout_mask)
    err = pred - y_true
    loss = float(np.mean(err ** 2))
    dy = 2.0 * err / err.size
    return loss, _backward(w, x, dy, cache)


def mse_loss(w: PredictorWeights, x: np.ndarray, y_true: np.ndarray,
             dropout_mask=None) -> float:
    pred, _ = _forward(w, x, dropout_mask)
    return float(np.mean((pred - y_true) ** 2))


# -- training ------------------------------------------------------------------

class TrainingDiverged(RuntimeError):
    pass


def train(dataset, cfg: TrainConfig = TrainConfig(), seed: int = 0
          ) -> PredictorWeights:
    """Adam minimization of MSE with exact BPTT over the input window.

    dataset: sequence of (input (10,2), target (15,2)) normalized windows.
    Deterministic given (dataset, cfg, seed).
    """
    if len(dataset) == 0:
        raise ValueError("dataset must be non-empty")
    x = np.stack([np.asarray(a, dtype=float) for a, _ in dataset])
    y = np.stack([np.asarray(b, dtype=float) for _, b in dataset])
    rng = np.random.default_rng(seed)
    w = PredictorWeights.init(cfg.hidden_dim, rng)

    m = {k: np.zeros_like(v) for k, v in w.params.items()}
    v = {k: np.zeros_like(vv) for k, vv in w.params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    n = len(dataset)
    keep = 1.0 - cfg.dropout
    for _epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            xb, yb = x[idx], y[idx]
            mask = None
            if cfg.dropout > 0.0:
                mask = (rng.random((len(idx), cfg.hidden_dim)) < keep) / keep
            loss, grads = loss_and_grads(w, xb, yb, mask)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} at step {step}")
            epoch_loss += loss * len(idx)
            step += 1
            for k in w.params:
                m[k] = beta1 * m[k] + (1 - beta1) * grads[k]
                v[k] = beta2 * v[k] + (1 - beta2) * grads[k] ** 2
                mhat = m[k] / (1 - beta1 ** step)
                vhat = v[k] / (1 - beta2 ** step)
                w.params[k] -= cfg.learning_rate * mhat / (np.sqrt(vhat) + eps)
        w.loss_history.append(epoch_loss / n)
    return w


# -- constant-velocity comparison -----------------------------------------------

def cv_predict(window: np.ndarray, horizon: int = OUTPUT_LEN,
               dt: float = DT) -> np.ndarray:
    """Constant-velocity extrapolation from a position-velocity Kalman fit.

    Runs a KF (state x, y, vx, vy; identity observation of position) over
    the window, then rolls the final state forward ``horizon`` steps.
    """
    window = np.asarray(window, dtype=float)
    if window.shape[0] < 2:
        raise ValueError("need at least two points")
    f = np.eye(4)
    f[0, 2] = f[1, 3] = dt
    hobs = np.zeros((2, 4))
    hobs[0, 0] = hobs[1, 1] = 1.0
    r = np.eye(2) * 1e-4
    q = np.diag([1e-9, 1e-9, 1e-6, 1e-6])
    mean = np.array([window[0, 0], window[0, 1], 0.0, 0.0])
    cov = np.diag([1e-4, 1e-4, 1e6, 1e6])
    for k in range(1, window.shape[0]):
        mean = f @ mean
        cov = f @ cov @ f.T + q
        innov = window[k] - hobs @ mean
        s = hobs @ cov @ hobs.T + r
        gain = cov @ hobs.T @ np.linalg.inv(s)
        mean = mean + gain @ innov
        cov = (np.eye(4) - gain @ hobs) @ cov
    out = np.zeros((horizon, 2))
    pos, vel = mean[:2].copy(), mean[2:]
    for k in range(horizon):
        pos = pos + vel * dt
        out[k] = pos
    return out


def ade_fde(pred: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    """Average and final displacement errors between two point sequences."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError("prediction/truth shape mismatch")
    err = np.linalg.norm(pred - truth, axis=1)
    return float(err.mean()), float(err[-1])


# -- synthetic data ---------------------------------------------------------------

def _gen_trajectory(kind: str, length: int, speed: float, dt: float,
                    rng: np.random.Generator) -> np.ndarray:
    theta0 = rng.uniform(0.0, 2.0 * math.pi)
    if kind == "linear":
        headings = np.full(length - 1, theta0)
    elif kind == "turning":
        omega = rng.choice([-1.0, 1.0]) * rng.uniform(0.1, 0.6)
        headings = theta0 + omega * dt * np.arange(length - 1)
    elif kind == "sinusoidal":
        amp = rng.uniform(0.3, 1.0)
        freq = rng.uniform(0.05, 0.25)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        tgrid = dt * np.arange(length - 1)
        headings = theta0 + amp * np.sin(2.0 * math.pi * freq * tgrid + phase)
    else:
        raise ValueError(f"unknown trajectory kind {kind!r}")
    steps = speed * dt * np.stack([np.cos(headings), np.sin(headings)], axis=1)
    pts = np.zeros((length, 2))
    pts[1:] = np.cumsum(steps, axis=0)
    return pts


def gen_synthetic_dataset(n: int, kinds=("linear", "turning", "sinusoidal"),
                          seed: int = 0, speed: float = 0.2, dt: float = DT,
                          traj_len: int = 40, window_stride: int = 5,
                          augment: bool = True):
    """n random trajectories split into normalized (10-in, 15-out) windows.

    Speeds never exceed ``speed``; with augmentation each window appears in
    all eight 45-degree rotations. Deterministic for a fixed seed.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if traj_len < INPUT_LEN + OUTPUT_LEN:
        raise ValueError("trajectories too short to window")
    rng = np.random.default_rng(seed)
    kinds = list(kinds)
    dataset = []
    for k in range(n):
        kind = kinds[k % len(kinds)]
        pts = _gen_trajectory(kind, traj_len, speed, dt, rng)
        for s in range(0, traj_len - (INPUT_LEN + OUTPUT_LEN) + 1, window_stride):
            inp = pts[s:s + INPUT_LEN]
            tgt = pts[s + INPUT_LEN:s + INPUT_LEN + OUTPUT_LEN]
            inp_n, offset = normalize_window(inp)
            tgt_n = tgt - offset
            if augment:
                full = np.concatenate([inp_n, tgt_n])
                for rotated in augment_rotations(full):
                    dataset.append((rotated[:INPUT_LEN], rotated[INPUT_LEN:]))
            else:
                dataset.append((inp_n, tgt_n))
    return dataset
