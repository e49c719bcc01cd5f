"""Linear SVM, logistic regression and a one-hidden-layer MLP, trained from scratch.

Optimization is full-batch gradient descent in float64 with a fixed iteration
order, so a given (data, config, seed) always produces bit-identical weights.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from obfubench.errors import DataError, ObfubenchError
from obfubench.features import FeatureVector, stack

log = logging.getLogger(__name__)

SVM = "svm"
LOGREG = "logreg"
MLP = "mlp"
MODEL_KINDS = (SVM, LOGREG, MLP)

MODEL_FORMAT = "obfubench-model"
MODEL_VERSION = 1


class TrainingError(ObfubenchError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    model: str = LOGREG
    k_folds: int = 5
    max_epochs: int = 1000
    learning_rate: float = 0.01
    l2_reg: float = 1e-4
    hidden_units: int = 100
    seed: int = 0
    tolerance: float = 1e-6

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise DataError(f"unknown model kind {self.model!r}; expected one of {MODEL_KINDS}")
        if self.k_folds < 2:
            raise DataError("k_folds must be >= 2")
        if self.max_epochs < 1:
            raise DataError("max_epochs must be >= 1")
        if self.learning_rate <= 0 or self.l2_reg < 0 or self.hidden_units < 1 or self.tolerance <= 0:
            raise DataError("learning_rate, hidden_units and tolerance must be positive, l2_reg >= 0")

    @property
    def test_fraction_per_fold(self) -> float:
        return 1.0 / self.k_folds


@dataclass
class Model:
    kind: str
    labels: list[str]
    params: dict[str, np.ndarray]
    epochs_run: int = 0
    loss_history: list[float] = field(default_factory=list, repr=False)

    @property
    def dim(self) -> int:
        return int(self.params["W" if self.kind != MLP else "W1"].shape[0])

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise DataError(f"feature dimension {X.shape[-1]} does not match model dimension {self.dim}")
        if self.kind == MLP:
            hidden = np.maximum(X @ self.params["W1"] + self.params["b1"], 0.0)
            return hidden @ self.params["W2"] + self.params["b2"]
        return X @ self.params["W"] + self.params["b"]


# ---------------------------------------------------------------------------
# losses: each returns (loss, grads) for parameters p on (X, Y one-hot)


def _softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def _cross_entropy(Z: np.ndarray, Y: np.ndarray) -> tuple[float, np.ndarray]:
    n = Z.shape[0]
    shifted = Z - Z.max(axis=1, keepdims=True)
    log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -float(np.sum(Y * log_p)) / n
    return loss, (np.exp(log_p) - Y) / n


def logreg_loss(p: dict[str, np.ndarray], X: np.ndarray, Y: np.ndarray, l2: float):
    loss, dZ = _cross_entropy(X @ p["W"] + p["b"], Y)
    loss += 0.5 * l2 * float(np.sum(p["W"] ** 2))
    return loss, {"W": X.T @ dZ + l2 * p["W"], "b": dZ.sum(axis=0)}


def svm_loss(p: dict[str, np.ndarray], X: np.ndarray, Y: np.ndarray, l2: float):
    """One-vs-rest hinge loss, summed over classes and averaged over samples."""
    n = X.shape[0]
    signs = 2.0 * Y - 1.0
    margins = 1.0 - signs * (X @ p["W"] + p["b"])
    active = margins > 0
    loss = float(np.sum(margins[active])) / n + 0.5 * l2 * float(np.sum(p["W"] ** 2))
    dS = -(signs * active) / n
    return loss, {"W": X.T @ dS + l2 * p["W"], "b": dS.sum(axis=0)}


def mlp_loss(p: dict[str, np.ndarray], X: np.ndarray, Y: np.ndarray, l2: float):
    pre = X @ p["W1"] + p["b1"]
    hidden = np.maximum(pre, 0.0)
    loss, dZ = _cross_entropy(hidden @ p["W2"] + p["b2"], Y)
    loss += 0.5 * l2 * float(np.sum(p["W1"] ** 2) + np.sum(p["W2"] ** 2))
    dH = (dZ @ p["W2"].T) * (pre > 0)
    return loss, {
        "W1": X.T @ dH + l2 * p["W1"],
        "b1": dH.sum(axis=0),
        "W2": hidden.T @ dZ + l2 * p["W2"],
        "b2": dZ.sum(axis=0),
    }


LOSSES: dict[str, Callable] = {SVM: svm_loss, LOGREG: logreg_loss, MLP: mlp_loss}


def init_params(kind: str, dim: int, n_classes: int, hidden_units: int, seed: int) -> dict[str, np.ndarray]:
    if kind != MLP:
        return {"W": np.zeros((dim, n_classes)), "b": np.zeros(n_classes)}
    rng = np.random.default_rng(seed)
    b1 = 1.0 / math.sqrt(dim)
    b2 = 1.0 / math.sqrt(hidden_units)
    return {
        "W1": rng.uniform(-b1, b1, (dim, hidden_units)),
        "b1": rng.uniform(-b1, b1, hidden_units),
        "W2": rng.uniform(-b2, b2, (hidden_units, n_classes)),
        "b2": rng.uniform(-b2, b2, n_classes),
    }


def _one_hot(y: Sequence[str], labels: Sequence[str]) -> np.ndarray:
    index = {lab: i for i, lab in enumerate(labels)}
    Y = np.zeros((len(y), len(labels)))
    for row, lab in enumerate(y):
        Y[row, index[lab]] = 1.0
    return Y


def fit(
    X: np.ndarray,
    y: Sequence[str],
    config: TrainConfig,
    labels: Sequence[str] | None = None,
) -> Model:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise DataError("feature matrix and label list disagree in length")
    present = sorted(set(y))
    if len(present) < 2:
        raise DataError("training needs at least 2 distinct labels")
    labels = list(labels) if labels is not None else present
    unknown = set(present) - set(labels)
    if unknown:
        raise DataError(f"training labels missing from label ordering: {sorted(unknown)}")
    Y = _one_hot(y, labels)
    params = init_params(config.model, X.shape[1], len(labels), config.hidden_units, config.seed)
    loss_fn = LOSSES[config.model]

    step = (
        _adam(params, config.learning_rate)
        if config.model == MLP
        else _plain(params, config.learning_rate, config.l2_reg)
    )
    history: list[float] = []
    prev = math.inf
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grads = loss_fn(params, X, Y, config.l2_reg)
        if not math.isfinite(loss):
            raise TrainingError(f"{config.model}: non-finite loss at epoch {epoch}")
        history.append(loss)
        step(grads)
        # subgradient steps may raise the loss; only a small decrease counts as a plateau
        if 0 <= prev - loss < config.tolerance:
            break
        prev = loss
    return Model(config.model, labels, params, epoch, history)


def _plain(params: dict[str, np.ndarray], lr: float, l2: float) -> Callable[[dict[str, np.ndarray]], None]:
    # gradient step on the data term, then the L2 term as an exact shrink
    # (W / (1 + lr*l2)); same fixed point, but stable for any l2
    shrink = 1.0 + lr * l2

    def step(grads):
        for name, g in grads.items():
            if name.startswith("W"):
                params[name] = (params[name] - lr * (g - l2 * params[name])) / shrink
            else:
                params[name] -= lr * g

    return step


def _adam(
    params: dict[str, np.ndarray], lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8
) -> Callable[[dict[str, np.ndarray]], None]:
    """Full-batch Adam; deterministic because every step sees the whole training set."""
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(p) for k, p in params.items()}
    t = 0

    def step(grads):
        nonlocal t
        t += 1
        for name, g in grads.items():
            m[name] = beta1 * m[name] + (1 - beta1) * g
            v[name] = beta2 * v[name] + (1 - beta2) * g * g
            m_hat = m[name] / (1 - beta1**t)
            v_hat = v[name] / (1 - beta2**t)
            params[name] -= lr * m_hat / (np.sqrt(v_hat) + eps)

    return step


def train(
    vectors: Sequence[FeatureVector],
    config: TrainConfig,
    labels: Sequence[str] | None = None,
) -> Model:
    if any(fv.label is None for fv in vectors):
        raise DataError("training vectors must be labeled")
    return fit(stack(vectors), [fv.label for fv in vectors], config, labels)


def predict_matrix(model: Model, X: np.ndarray) -> list[str]:
    # np.argmax returns the first maximum: ties go to the lowest label index
    return [model.labels[i] for i in np.argmax(model.scores(X), axis=1)]


def predict(model: Model, vectors: Sequence[FeatureVector]) -> list[str]:
    return predict_matrix(model, stack(vectors))


# ---------------------------------------------------------------------------
# gradient check


def gradient_check(
    kind: str,
    X: np.ndarray,
    y: Sequence[int],
    epsilon: float = 1e-5,
    *,
    n_classes: int | None = None,
    hidden_units: int = 5,
    l2_reg: float = 1e-3,
    seed: int = 0,
    params: dict[str, np.ndarray] | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Parameters are drawn at random (seeded) unless given. The SVM hinge is
    only differentiable away from margin 1, so check it at generic points.
    """
    if not epsilon > 0:
        raise DataError("epsilon must be positive")
    X = np.asarray(X, dtype=float)
    n_classes = n_classes or int(max(y)) + 1
    Y = np.zeros((len(y), n_classes))
    Y[np.arange(len(y)), np.asarray(y)] = 1.0
    if params is None:
        rng = np.random.default_rng(seed)
        shapes = {k: v.shape for k, v in init_params(kind, X.shape[1], n_classes, hidden_units, 0).items()}
        params = {k: rng.normal(0.0, 0.5, s) for k, s in shapes.items()}
    loss_fn = LOSSES[kind]
    _, analytic = loss_fn(params, X, Y, l2_reg)
    worst = 0.0
    for name, value in params.items():
        flat = value.reshape(-1)
        grad = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up, _ = loss_fn(params, X, Y, l2_reg)
            flat[i] = orig - epsilon
            down, _ = loss_fn(params, X, Y, l2_reg)
            flat[i] = orig
            numeric = (up - down) / (2 * epsilon)
            denom = max(abs(numeric) + abs(grad[i]), 1e-8)
            worst = max(worst, abs(numeric - grad[i]) / denom)
    return worst


# ---------------------------------------------------------------------------
# stratified k-fold


def stratified_kfold(labels: Sequence[str], k: int, seed: int) -> list[tuple[list[int], list[int]]]:
    """Split indices into ``k`` stratified folds; returns ``(train, test)`` pairs.

    Each class is shuffled (seeded) and dealt round-robin across folds; the
    dealing position carries over from one class to the next, which keeps fold
    sizes within one of each other.
    """
    n = len(labels)
    if k < 2:
        raise DataError("k must be >= 2")
    if k > n:
        raise DataError(f"k={k} exceeds the number of samples ({n})")
    by_class: dict[str, list[int]] = {}
    for i, lab in enumerate(labels):
        by_class.setdefault(lab, []).append(i)
    smallest = min(len(v) for v in by_class.values())
    if smallest < k:
        log.warning("smallest class has %d samples < k=%d; stratification is not strict", smallest, k)
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    slot = 0
    for lab in sorted(by_class):
        members = np.array(by_class[lab])
        rng.shuffle(members)
        for idx in members:
            folds[slot % k].append(int(idx))
            slot += 1
    result = []
    for f in range(k):
        test = sorted(folds[f])
        held = set(test)
        result.append(([i for i in range(n) if i not in held], test))
    return result


@dataclass
class CrossValidation:
    folds: list[tuple[list[int], list[int]]]
    models: list[Model]
    # out-of-fold prediction for every sample
    predictions: list[str]

    @property
    def last_model(self) -> Model:
        return self.models[-1]


def cross_validate(
    vectors: Sequence[FeatureVector],
    config: TrainConfig,
    labels: Sequence[str] | None = None,
) -> CrossValidation:
    X = stack(vectors)
    y = [fv.label for fv in vectors]
    if any(lab is None for lab in y):
        raise DataError("cross-validation vectors must be labeled")
    labels = list(labels) if labels is not None else sorted(set(y))
    folds = stratified_kfold(y, config.k_folds, config.seed)
    models = []
    predictions: list[str] = [""] * len(y)
    for train_idx, test_idx in folds:
        model = fit(X[train_idx], [y[i] for i in train_idx], config, labels)
        for i, pred in zip(test_idx, predict_matrix(model, X[test_idx])):
            predictions[i] = pred
        models.append(model)
    return CrossValidation(folds, models, predictions)


# ---------------------------------------------------------------------------
# persistence


def model_to_dict(model: Model, config: TrainConfig | None = None) -> dict:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": model.kind,
        "labels": list(model.labels),
        "dim": model.dim,
        "epochs_run": model.epochs_run,
        "params": {
            name: {"shape": list(value.shape), "data": [float(x) for x in value.reshape(-1)]}
            for name, value in model.params.items()
        },
    }
    if config is not None:
        doc["config"] = asdict(config)
    return doc


def model_from_dict(doc: dict) -> Model:
    if doc.get("format") != MODEL_FORMAT:
        raise DataError("not a model file")
    if doc.get("version") != MODEL_VERSION:
        raise DataError(f"unsupported model version {doc.get('version')}")
    if doc.get("kind") not in MODEL_KINDS:
        raise DataError(f"unknown model kind {doc.get('kind')!r}")
    params = {}
    for name, spec in doc["params"].items():
        arr = np.asarray(spec["data"], dtype=float).reshape(spec["shape"])
        if not np.all(np.isfinite(arr)):
            raise DataError(f"non-finite parameter values in {name}")
        params[name] = arr
    return Model(doc["kind"], list(doc["labels"]), params, int(doc.get("epochs_run", 0)))


def save_model(model: Model, path: str | Path, config: TrainConfig | None = None) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(model_to_dict(model, config), indent=1) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> Model:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model {path}: {exc}") from None
    return model_from_dict(doc)
