"""Five base learners behind one fit / predict-probability interface.

All are native numpy implementations: k-nearest neighbors, a hinge-loss
SVM with Platt-calibrated probabilities, gradient-boosted regression trees
on logistic loss with Newton leaf weights, linear discriminant analysis
with a ridge-regularized pooled covariance, and L2-regularized logistic
regression fit by gradient descent. Features are z-scored at fit time;
zero-variance columns are dropped and recorded. Labels are binary with
Male = 0 and Female = 1, and probability vectors are ordered
``[p_male, p_female]``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .dataset import Gender
from .errors import SchemaMismatchError, SingleClassError
from .features import FeatureVector

__all__ = [
    "ModelKind", "HyperParams", "TrainedModel", "ClassProbabilities",
    "fit", "predict_proba", "predict", "predict_proba_matrix",
    "model_to_payload", "model_from_payload",
]


class ModelKind(enum.Enum):
    KNN = "knn"
    SVM = "svm"
    GBT = "gbt"
    LDA = "lda"
    LR = "lr"


@dataclass(frozen=True)
class HyperParams:
    knn_k: int = 5
    svm_c: float = 1.0
    svm_kernel: str = "linear"          # "linear" or "rbf" (random Fourier features)
    svm_gamma: float = 0.5
    svm_rff_dim: int = 200
    svm_epochs: int = 500
    calibration_fraction: float = 0.2
    gbt_rounds: int = 200
    gbt_depth: int = 3
    gbt_learning_rate: float = 0.1
    gbt_subsample: float = 0.8
    gbt_lambda: float = 1.0
    gbt_min_leaf: int = 1
    lda_ridge: float = 1e-3
    lr_l2: float = 1e-2
    lr_iters: int = 500
    lr_step: float = 1.0


@dataclass(frozen=True)
class ClassProbabilities:
    """Distribution over the two classes, ordered [Male, Female]."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.shape != (2,) or np.any(p < -1e-9) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"not a 2-class distribution: {p}")
        object.__setattr__(self, "p", np.clip(p, 0.0, 1.0))

    @property
    def p_male(self) -> float:
        return float(self.p[0])

    @property
    def p_female(self) -> float:
        return float(self.p[1])


@dataclass
class TrainedModel:
    kind: ModelKind
    payload: dict
    feature_schema: tuple[str, ...] | None
    norm_shift: np.ndarray
    norm_scale: np.ndarray
    kept_columns: np.ndarray           # boolean mask over the original schema
    dropped_columns: tuple[str, ...]
    params: HyperParams
    seed: int


def _sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# --- logistic regression -----------------------------------------------------

def lr_loss_grad(w: np.ndarray, x: np.ndarray, y: np.ndarray, l2: float):
    """Mean NLL plus L2 penalty (bias excluded); returns (loss, gradient).

    The weight vector has the bias as its last entry; ``x`` already carries
    a column of ones.
    """
    z = x @ w
    p = _sigmoid(z)
    eps = 1e-12
    nll = -np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps))
    reg = l2 * float(w[:-1] @ w[:-1])
    grad = x.T @ (p - y) / x.shape[0]
    grad[:-1] += 2.0 * l2 * w[:-1]
    return nll + reg, grad


def _fit_lr(x: np.ndarray, y: np.ndarray, hp: HyperParams) -> dict:
    xb = np.hstack([x, np.ones((x.shape[0], 1))])
    w = np.zeros(xb.shape[1])
    step = hp.lr_step
    loss, grad = lr_loss_grad(w, xb, y, hp.lr_l2)
    for _ in range(hp.lr_iters):
        trial = w - step * grad
        new_loss, new_grad = lr_loss_grad(trial, xb, y, hp.lr_l2)
        if new_loss <= loss:
            w, loss, grad = trial, new_loss, new_grad
            step *= 1.1
        else:
            step *= 0.5
            if step < 1e-12:
                break
    return {"w": w}


def _lr_proba(payload: dict, x: np.ndarray) -> np.ndarray:
    xb = np.hstack([x, np.ones((x.shape[0], 1))])
    p1 = _sigmoid(xb @ payload["w"])
    return np.stack([1.0 - p1, p1], axis=1)


# --- linear discriminant analysis ---------------------------------------------

def _fit_lda(x: np.ndarray, y: np.ndarray, hp: HyperParams) -> dict:
    mu0 = x[y == 0].mean(axis=0)
    mu1 = x[y == 1].mean(axis=0)
    n0, n1 = int((y == 0).sum()), int((y == 1).sum())
    d = x.shape[1]
    pooled = np.zeros((d, d))
    for mu, mask in ((mu0, y == 0), (mu1, y == 1)):
        centered = x[mask] - mu
        pooled += centered.T @ centered
    pooled /= max(n0 + n1 - 2, 1)
    ridge = hp.lda_ridge * max(np.trace(pooled) / d, 1e-12)
    pooled += ridge * np.eye(d)
    inv = np.linalg.inv(pooled)
    priors = np.array([n0, n1], dtype=np.float64) / (n0 + n1)
    return {"mu": np.stack([mu0, mu1]), "cov_inv": inv, "log_priors": np.log(priors)}


def _lda_proba(payload: dict, x: np.ndarray) -> np.ndarray:
    mu, inv, logp = payload["mu"], payload["cov_inv"], payload["log_priors"]
    scores = np.empty((x.shape[0], 2))
    for k in range(2):
        scores[:, k] = x @ inv @ mu[k] - 0.5 * mu[k] @ inv @ mu[k] + logp[k]
    scores -= scores.max(axis=1, keepdims=True)
    e = np.exp(scores)
    return e / e.sum(axis=1, keepdims=True)


# --- k-nearest neighbors -------------------------------------------------------

def _fit_knn(x: np.ndarray, y: np.ndarray, hp: HyperParams) -> dict:
    return {"x": x, "y": y.astype(np.float64), "k": np.array([min(hp.knn_k, len(y))])}


def _knn_proba(payload: dict, x: np.ndarray) -> np.ndarray:
    train, labels = payload["x"], payload["y"]
    k = int(payload["k"][0])
    d2 = ((x**2).sum(axis=1, keepdims=True)
          - 2.0 * x @ train.T
          + (train**2).sum(axis=1)[None, :])
    nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
    p1 = labels[nearest].mean(axis=1)
    return np.stack([1.0 - p1, p1], axis=1)


# --- SVM with Platt scaling -----------------------------------------------------

def _rff_map(x: np.ndarray, omega: np.ndarray, phase: np.ndarray) -> np.ndarray:
    d = omega.shape[1]
    return np.sqrt(2.0 / d) * np.cos(x @ omega + phase)


def _svm_subgradient(x: np.ndarray, y_pm: np.ndarray, c: float, epochs: int) -> tuple[np.ndarray, float]:
    """Full-batch subgradient descent on lambda/2 |w|^2 + mean hinge.

    Iterates are projected onto the ball of radius 1/sqrt(lambda) and the
    second half of the trajectory is averaged, which tames the large early
    steps of the 1/(lambda t) schedule.
    """
    n, d = x.shape
    lam = 1.0 / (c * n)
    cap = 1.0 / np.sqrt(lam)
    w = np.zeros(d)
    b = 0.0
    w_sum = np.zeros(d)
    b_sum = 0.0
    tail = 0
    for t in range(1, epochs + 1):
        margins = y_pm * (x @ w + b)
        active = margins < 1.0
        gw = lam * w - (y_pm[active, None] * x[active]).sum(axis=0) / n
        gb = -y_pm[active].sum() / n
        eta = 1.0 / (lam * t)
        w -= eta * gw
        b -= eta * gb
        norm = float(np.linalg.norm(w))
        if norm > cap:
            w *= cap / norm
        if t > epochs // 2:
            w_sum += w
            b_sum += b
            tail += 1
    return w_sum / tail, b_sum / tail


def _platt(margins: np.ndarray, y: np.ndarray, iters: int = 100) -> tuple[float, float]:
    """Fit p(y=1 | m) = sigmoid(a*m + b) by damped Newton with target smoothing.

    The step is halved until the (convex) objective decreases; an undamped
    Newton can diverge when the calibration margins are nearly separable.
    """
    n1 = float(y.sum())
    n0 = float(len(y) - n1)
    t = np.where(y == 1, (n1 + 1.0) / (n1 + 2.0), 1.0 / (n0 + 2.0))

    def objective(a_, b_):
        p = _sigmoid(a_ * margins + b_)
        eps = 1e-12
        return float(-np.sum(t * np.log(p + eps) + (1 - t) * np.log(1 - p + eps)))

    a, b = 0.0, float(np.log((n0 + 1.0) / (n1 + 1.0)))
    best = objective(a, b)
    for _ in range(iters):
        p = _sigmoid(a * margins + b)
        g_a = np.sum((p - t) * margins)
        g_b = np.sum(p - t)
        w = np.maximum(p * (1 - p), 1e-12)
        h_aa = np.sum(w * margins * margins) + 1e-12
        h_ab = np.sum(w * margins)
        h_bb = np.sum(w) + 1e-12
        det = h_aa * h_bb - h_ab * h_ab
        if abs(det) < 1e-18:
            break
        da = (h_bb * g_a - h_ab * g_b) / det
        db = (h_aa * g_b - h_ab * g_a) / det
        step = 1.0
        improved = False
        for _halving in range(30):
            trial = objective(a - step * da, b - step * db)
            if trial < best:
                a -= step * da
                b -= step * db
                best = trial
                improved = True
                break
            step *= 0.5
        if not improved or (abs(step * da) < 1e-10 and abs(step * db) < 1e-10):
            break
    return a, b


def _fit_svm(x: np.ndarray, y: np.ndarray, hp: HyperParams, rng: np.random.Generator) -> dict:
    payload: dict = {"kernel_rbf": np.array([1 if hp.svm_kernel == "rbf" else 0])}
    if hp.svm_kernel == "rbf":
        omega = rng.normal(0.0, np.sqrt(2.0 * hp.svm_gamma), size=(x.shape[1], hp.svm_rff_dim))
        phase = rng.uniform(0.0, 2.0 * np.pi, size=hp.svm_rff_dim)
        payload["omega"] = omega
        payload["phase"] = phase
        x = _rff_map(x, omega, phase)
    elif hp.svm_kernel != "linear":
        raise ValueError(f"unknown SVM kernel {hp.svm_kernel!r}")
    # stratified calibration split
    cal_idx: list[int] = []
    fit_idx: list[int] = []
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        n_cal = int(round(hp.calibration_fraction * idx.size))
        if idx.size - n_cal < 1:
            n_cal = max(0, idx.size - 1)
        cal_idx.extend(idx[:n_cal])
        fit_idx.extend(idx[n_cal:])
    cal_idx.sort()
    fit_idx.sort()
    y_pm = 2.0 * y - 1.0
    if len(cal_idx) >= 2 and len(set(y[cal_idx])) == 2:
        w, b = _svm_subgradient(x[fit_idx], y_pm[fit_idx], hp.svm_c, hp.svm_epochs)
        cal_m = x[cal_idx] @ w + b
        a, pb = _platt(cal_m, y[cal_idx])
    else:
        # calibration split impossible at this size; calibrate on training margins
        w, b = _svm_subgradient(x, y_pm, hp.svm_c, hp.svm_epochs)
        a, pb = _platt(x @ w + b, y)
    payload.update({"w": w, "b": np.array([b]), "platt": np.array([a, pb])})
    return payload


def _svm_proba(payload: dict, x: np.ndarray) -> np.ndarray:
    if int(payload["kernel_rbf"][0]):
        x = _rff_map(x, payload["omega"], payload["phase"])
    margins = x @ payload["w"] + payload["b"][0]
    a, b = payload["platt"]
    p1 = _sigmoid(a * margins + b)
    return np.stack([1.0 - p1, p1], axis=1)


# --- gradient-boosted trees -------------------------------------------------------

def _best_split(x: np.ndarray, residual: np.ndarray, min_leaf: int):
    """Greedy variance-reduction split; returns (feature, threshold, gain)."""
    n, d = x.shape
    total_sum = residual.sum()
    total_sq = (residual**2).sum()
    base_sse = total_sq - total_sum**2 / n
    best = (None, 0.0, 0.0)
    for j in range(d):
        order = np.argsort(x[:, j], kind="stable")
        xs = x[order, j]
        rs = residual[order]
        csum = np.cumsum(rs)[:-1]
        csq = np.cumsum(rs**2)[:-1]
        left_n = np.arange(1, n)
        right_n = n - left_n
        valid = (xs[1:] > xs[:-1]) & (left_n >= min_leaf) & (right_n >= min_leaf)
        if not valid.any():
            continue
        left_sse = csq - csum**2 / left_n
        right_sum = total_sum - csum
        right_sq = total_sq - csq
        right_sse = right_sq - right_sum**2 / right_n
        gain = base_sse - (left_sse + right_sse)
        gain[~valid] = -np.inf
        i = int(np.argmax(gain))
        if gain[i] > best[2]:
            best = (j, 0.5 * (xs[i] + xs[i + 1]), float(gain[i]))
    return best


def _build_tree(x, grad, hess, depth, hp: HyperParams) -> dict:
    """Depth-limited regression tree as parallel node arrays."""
    nodes: list[list] = []

    def newton_value(idx) -> float:
        return float(-grad[idx].sum() / (hess[idx].sum() + hp.gbt_lambda))

    def grow(idx: np.ndarray, level: int) -> int:
        node_id = len(nodes)
        nodes.append([-1, 0.0, -1, -1, 0.0])
        residual = -grad[idx]
        if level < depth and idx.size >= 2 * hp.gbt_min_leaf:
            feat, thr, gain = _best_split(x[idx], residual, hp.gbt_min_leaf)
            if feat is not None and gain > 1e-12:
                mask = x[idx, feat] <= thr
                left = grow(idx[mask], level + 1)
                right = grow(idx[~mask], level + 1)
                nodes[node_id] = [feat, thr, left, right, 0.0]
                return node_id
        nodes[node_id][4] = newton_value(idx)
        return node_id

    grow(np.arange(x.shape[0]), 0)
    arr = np.array(nodes, dtype=np.float64)
    return {
        "feat": arr[:, 0].astype(np.int64),
        "thr": arr[:, 1],
        "left": arr[:, 2].astype(np.int64),
        "right": arr[:, 3].astype(np.int64),
        "value": arr[:, 4],
        "depth": depth,
    }


def _tree_predict(tree: dict, x: np.ndarray) -> np.ndarray:
    feat, thr = tree["feat"], tree["thr"]
    left, right = tree["left"], tree["right"]
    node = np.zeros(x.shape[0], dtype=np.int64)
    rows = np.arange(x.shape[0])
    for _ in range(tree["depth"] + 1):
        f = feat[node]
        internal = f != -1
        if not internal.any():
            break
        go_left = x[rows, np.where(internal, f, 0)] <= thr[node]
        nxt = np.where(go_left, left[node], right[node])
        node = np.where(internal, nxt, node)
    return tree["value"][node]


def _logistic_loss(y: np.ndarray, raw: np.ndarray) -> float:
    p = _sigmoid(raw)
    eps = 1e-12
    return float(-np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))


def _fit_gbt(x: np.ndarray, y: np.ndarray, hp: HyperParams, rng: np.random.Generator) -> dict:
    n = x.shape[0]
    p1 = y.mean()
    f0 = float(np.log(p1 / (1 - p1))) if 0 < p1 < 1 else 0.0
    raw = np.full(n, f0)
    trees: list[list[list]] = []
    tree_scale: list[float] = []
    losses = [_logistic_loss(y, raw)]
    for _ in range(hp.gbt_rounds):
        p = _sigmoid(raw)
        grad = p - y
        hess = np.maximum(p * (1 - p), 1e-12)
        if hp.gbt_subsample < 1.0:
            m = max(2, int(round(hp.gbt_subsample * n)))
            rows = rng.choice(n, size=m, replace=False)
            rows.sort()
        else:
            rows = np.arange(n)
        nodes = _build_tree(x[rows], grad[rows], hess[rows], hp.gbt_depth, hp)
        update = _tree_predict(nodes, x)
        # keep the training loss non-increasing: halve the step when a
        # subsampled tree would hurt the full-data loss, dropping it if
        # halving cannot fix it
        scale = hp.gbt_learning_rate
        prev = losses[-1]
        for _attempt in range(6):
            trial = _logistic_loss(y, raw + scale * update)
            if trial <= prev:
                break
            scale *= 0.5
        else:
            scale = 0.0
            trial = prev
        raw = raw + scale * update
        trees.append(nodes)
        tree_scale.append(scale)
        losses.append(trial)
    return {
        "f0": np.array([f0]),
        "trees": trees,
        "tree_scale": np.array(tree_scale),
        "loss_trace": np.array(losses),
    }


def _gbt_raw(payload: dict, x: np.ndarray) -> np.ndarray:
    raw = np.full(x.shape[0], payload["f0"][0])
    for nodes, scale in zip(payload["trees"], payload["tree_scale"]):
        if scale != 0.0:
            raw += scale * _tree_predict(nodes, x)
    return raw


def _gbt_proba(payload: dict, x: np.ndarray) -> np.ndarray:
    p1 = _sigmoid(_gbt_raw(payload, x))
    return np.stack([1.0 - p1, p1], axis=1)


# --- shared interface ---------------------------------------------------------

def fit(kind: ModelKind, x: np.ndarray, y: np.ndarray,
        cfg: HyperParams = HyperParams(), seed: int = 0,
        schema: tuple[str, ...] | None = None) -> TrainedModel:
    """Train one learner on a (rows, features) matrix with 0/1 labels."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("x must be (rows, features) aligned with y")
    if x.shape[0] < 2:
        raise ValueError("need at least 2 training rows")
    if not np.all(np.isfinite(x)):
        raise ValueError("training features must be finite")
    y = y.astype(np.int64)
    if set(np.unique(y)) != {0, 1}:
        raise SingleClassError("training labels must contain both classes")
    if schema is not None and len(schema) != x.shape[1]:
        raise SchemaMismatchError("schema length != feature count")

    shift = x.mean(axis=0)
    scale = x.std(axis=0)
    # relative cutoff so constant columns with accumulation residue still drop
    kept = scale > 1e-12 * np.maximum(1.0, np.abs(shift))
    dropped = tuple(
        (schema[i] if schema else f"f{i}") for i in np.flatnonzero(~kept)
    )
    scale_safe = np.where(kept, scale, 1.0)
    xn = ((x - shift) / scale_safe)[:, kept]
    if xn.shape[1] == 0:
        raise ValueError("all feature columns are constant")

    rng = np.random.default_rng(seed)
    if kind is ModelKind.KNN:
        payload = _fit_knn(xn, y, cfg)
    elif kind is ModelKind.LR:
        payload = _fit_lr(xn, y, cfg)
    elif kind is ModelKind.LDA:
        payload = _fit_lda(xn, y, cfg)
    elif kind is ModelKind.SVM:
        payload = _fit_svm(xn, y, cfg, rng)
    elif kind is ModelKind.GBT:
        payload = _fit_gbt(xn, y, cfg, rng)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    return TrainedModel(
        kind=kind, payload=payload, feature_schema=schema,
        norm_shift=shift, norm_scale=scale_safe, kept_columns=kept,
        dropped_columns=dropped, params=cfg, seed=seed,
    )


def predict_proba_matrix(model: TrainedModel, x: np.ndarray) -> np.ndarray:
    """Probabilities for a batch of rows sharing the model's schema."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.kept_columns.size:
        raise SchemaMismatchError(
            f"expected {model.kept_columns.size} features, got {x.shape}"
        )
    xn = ((x - model.norm_shift) / model.norm_scale)[:, model.kept_columns]
    if model.kind is ModelKind.KNN:
        probs = _knn_proba(model.payload, xn)
    elif model.kind is ModelKind.LR:
        probs = _lr_proba(model.payload, xn)
    elif model.kind is ModelKind.LDA:
        probs = _lda_proba(model.payload, xn)
    elif model.kind is ModelKind.SVM:
        probs = _svm_proba(model.payload, xn)
    elif model.kind is ModelKind.GBT:
        probs = _gbt_proba(model.payload, xn)
    else:
        raise ValueError(f"unknown model kind {model.kind!r}")
    return probs / probs.sum(axis=1, keepdims=True)


def _check_schema(model: TrainedModel, fv: FeatureVector) -> None:
    if model.feature_schema is not None and tuple(fv.schema) != tuple(model.feature_schema):
        raise SchemaMismatchError("feature vector schema differs from the fit schema")


def predict_proba(model: TrainedModel, fv: FeatureVector) -> ClassProbabilities:
    _check_schema(model, fv)
    return ClassProbabilities(predict_proba_matrix(model, fv.values[None, :])[0])


def predict(model: TrainedModel, fv: FeatureVector) -> Gender:
    """Argmax label; exact ties resolve to Male."""
    probs = predict_proba(model, fv)
    return Gender.MALE if probs.p_male >= probs.p_female else Gender.FEMALE


# --- persistence ------------------------------------------------------------

def save_model(model: TrainedModel, path) -> None:
    """Persist one classifier in the shared container format."""
    from .container import save_container

    meta, arrays = model_to_payload(model)
    save_container(path, kind="classifier", meta=meta, arrays=arrays)


def load_model(path) -> TrainedModel:
    from .container import load_container

    _, meta, arrays = load_container(path, expect_kind="classifier")
    return model_from_payload(meta, arrays)


def model_to_payload(model: TrainedModel) -> tuple[dict, dict[str, np.ndarray]]:
    """Split a trained model into JSON meta plus named arrays (container-ready)."""
    meta = {
        "kind": model.kind.value,
        "schema": list(model.feature_schema) if model.feature_schema else None,
        "dropped_columns": list(model.dropped_columns),
        "seed": model.seed,
        "params": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in vars(model.params).items()},
    }
    arrays: dict[str, np.ndarray] = {
        "norm_shift": model.norm_shift,
        "norm_scale": model.norm_scale,
        "kept_columns": model.kept_columns.astype(np.int64),
    }
    if model.kind is ModelKind.GBT:
        flat, offsets = _flatten_trees(model.payload["trees"])
        arrays["tree_nodes"] = flat
        arrays["tree_offsets"] = offsets
        arrays["tree_scale"] = model.payload["tree_scale"]
        arrays["f0"] = model.payload["f0"]
        arrays["loss_trace"] = model.payload["loss_trace"]
    else:
        for key, value in model.payload.items():
            arrays[key] = np.asarray(value)
    return meta, arrays


def model_from_payload(meta: dict, arrays: dict[str, np.ndarray]) -> TrainedModel:
    kind = ModelKind(meta["kind"])
    params = replace(HyperParams(), **{
        k: (tuple(v) if isinstance(v, list) else v) for k, v in meta["params"].items()
    })
    if kind is ModelKind.GBT:
        payload = {
            "trees": _unflatten_trees(arrays["tree_nodes"], arrays["tree_offsets"],
                                      params.gbt_depth),
            "tree_scale": arrays["tree_scale"],
            "f0": arrays["f0"],
            "loss_trace": arrays["loss_trace"],
        }
    else:
        reserved = {"norm_shift", "norm_scale", "kept_columns"}
        payload = {k: v for k, v in arrays.items() if k not in reserved}
    return TrainedModel(
        kind=kind,
        payload=payload,
        feature_schema=tuple(meta["schema"]) if meta.get("schema") else None,
        norm_shift=arrays["norm_shift"],
        norm_scale=arrays["norm_scale"],
        kept_columns=arrays["kept_columns"].astype(bool),
        dropped_columns=tuple(meta.get("dropped_columns", ())),
        params=params,
        seed=int(meta.get("seed", 0)),
    )


def _flatten_trees(trees: list[dict]) -> tuple[np.ndarray, np.ndarray]:
    blocks = []
    offsets = [0]
    for tree in trees:
        blocks.append(np.stack([
            tree["feat"].astype(np.float64), tree["thr"],
            tree["left"].astype(np.float64), tree["right"].astype(np.float64),
            tree["value"],
        ], axis=1))
        offsets.append(offsets[-1] + tree["feat"].size)
    flat = np.concatenate(blocks) if blocks else np.zeros((0, 5))
    return flat, np.array(offsets, dtype=np.int64)


def _unflatten_trees(flat: np.ndarray, offsets: np.ndarray, depth: int) -> list[dict]:
    trees = []
    for a, b in zip(offsets[:-1], offsets[1:]):
        block = flat[a:b]
        trees.append({
            "feat": block[:, 0].astype(np.int64),
            "thr": block[:, 1].copy(),
            "left": block[:, 2].astype(np.int64),
            "right": block[:, 3].astype(np.int64),
            "value": block[:, 4].copy(),
            "depth": depth,
        })
    return trees
