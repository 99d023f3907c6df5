"""Deep clustering that mixes local (kNN graph) and global structure.

An autoencoder is first pretrained on the reconstruction error.  A softmax
head on the embedding then produces one cluster distribution per sample and
the whole network is fine-tuned on

    reconstruction + beta1 * graph loss + beta2 * augmentation loss

where the graph loss pulls kNN neighbours (in the current embedding of the
mini-batch) toward equal distributions and pushes the remaining pairs apart,
and the augmentation loss ties each sample's distribution to that of a
Gaussian-perturbed copy.
"""

from dataclasses import asdict, dataclass, fields
import logging

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.cluster import KMeans
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import as_matrix, check_probability_matrix
from .exceptions import ConfigError, InvalidInputError, TrainingDivergenceError
from .nn import adam_step, backward, build_model, forward

logger = logging.getLogger(__name__)

PAIR_CLAMP = 1e-7
PROB_FLOOR = 1e-12


@dataclass
class TrainingConfig:
    clusters: int = None
    batch_size: int = 128
    learning_rate: float = 0.002
    beta1: float = 5.0
    beta2: float = 10.0
    discount_gamma: float = 0.8
    discount_granularity: str = "epoch"
    sigma2: float = 0.1
    xi: float = 0.05
    k_neighbors: int = 5
    pretrain_epochs: int = 50
    train_epochs: int = 200
    hidden_dims: tuple = (500, 500, 2000)
    embedding_dim: int = 5
    head_init: str = "kmeans"
    head_init_temperature: float = 0.1
    seed: int = 0

    def __post_init__(self):
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        self.validate()

    def validate(self, n_samples=None):
        """Raise ConfigError naming the first violated constraint."""
        if self.clusters is not None and self.clusters < 2:
            raise ConfigError("clusters", "need at least 2 clusters")
        if self.batch_size < 2:
            raise ConfigError("batch_size", "must be >= 2")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate", "must be > 0")
        if self.beta1 < 0:
            raise ConfigError("beta1", "must be >= 0")
        if self.beta2 < 0:
            raise ConfigError("beta2", "must be >= 0")
        if not 0 < self.discount_gamma <= 1:
            raise ConfigError("discount_gamma", "must lie in (0, 1]")
        if self.discount_granularity not in ("epoch", "minibatch"):
            raise ConfigError("discount_granularity", "must be 'epoch' or 'minibatch'")
        if not self.sigma2 > 0:
            raise ConfigError("sigma2", "must be > 0")
        if self.xi < 0:
            raise ConfigError("xi", "must be >= 0")
        if not 1 <= self.k_neighbors < self.batch_size:
            raise ConfigError("k_neighbors", "must satisfy 1 <= k < batch_size")
        if self.pretrain_epochs < 0:
            raise ConfigError("pretrain_epochs", "must be >= 0")
        if self.train_epochs < 0:
            raise ConfigError("train_epochs", "must be >= 0")
        if any(h < 1 for h in self.hidden_dims):
            raise ConfigError("hidden_dims", "layer widths must be positive")
        if self.embedding_dim < 1:
            raise ConfigError("embedding_dim", "must be >= 1")
        if self.head_init not in ("kmeans", "random"):
            raise ConfigError("head_init", "must be 'kmeans' or 'random'")
        if not self.head_init_temperature > 0:
            raise ConfigError("head_init_temperature", "must be > 0")
        if n_samples is not None and self.batch_size > n_samples:
            raise ConfigError(
                "batch_size", f"{self.batch_size} exceeds the number of samples ({n_samples})"
            )
        return self

    def to_dict(self):
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


def _streams(seed):
    """Independent random streams for each stochastic step of training."""
    init, aug, pre, tr, km = np.random.SeedSequence(seed).spawn(5)
    return {
        "init": np.random.default_rng(init),
        "augment": aug,
        "pretrain": np.random.default_rng(pre),
        "train": np.random.default_rng(tr),
        "kmeans": int(km.generate_state(1)[0]),
    }


def effective_beta1(beta1, discount_gamma, t):
    """Graph-loss weight after ``t`` discount steps: ``beta1 * gamma**t``."""
    return beta1 * discount_gamma ** t


def augment(X, xi, seed=None):
    """Add i.i.d. Gaussian noise of variance ``xi`` to every entry of ``X``."""
    if xi < 0:
        raise InvalidInputError("xi must be >= 0")
    X = np.asarray(X, dtype=np.float64)
    if xi == 0:
        return X.copy()
    rng = np.random.default_rng(seed)
    return X + rng.normal(0.0, np.sqrt(xi), size=X.shape)


def build_knn_adjacency(Z, k, sigma2):
    """Directed Gaussian-weighted kNN adjacency within a batch.

    ``W[i, j] = exp(-|z_i - z_j|^2 / sigma2)`` if ``j`` is one of the ``k``
    nearest neighbours of ``i`` (self excluded, ties to the lower index),
    else 0.  The diagonal is 0.
    """
    Z = as_matrix(Z, "Z")
    B = Z.shape[0]
    if not 1 <= k < B:
        raise InvalidInputError(f"k must satisfy 1 <= k < batch size ({B}), got {k}")
    if not sigma2 > 0:
        raise InvalidInputError("sigma2 must be > 0")
    diff = Z[:, None, :] - Z[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    ranked = d2.copy()
    np.fill_diagonal(ranked, np.inf)
    nbrs = np.argsort(ranked, axis=1, kind="stable")[:, :k]
    rows = np.arange(B)[:, None]
    W = np.zeros((B, B))
    W[rows, nbrs] = np.exp(-d2[rows, nbrs] / sigma2)
    return W


def _graph_weights(Z, k, sigma2):
    """Adjacency used by the training loss: kNN weights plus a unit diagonal."""
    B = Z.shape[0]
    if B < 2:
        return np.ones((1, 1))
    W = build_knn_adjacency(Z, min(k, B - 1), sigma2)
    np.fill_diagonal(W, 1.0)
    return W


def reconstruction_loss(model, X):
    """Sum of squared reconstruction errors and its gradients.

    Returns ``(loss, grads)`` with ``grads`` parallel to
    ``model.parameters()`` (head entries are zero).
    """
    X = np.asarray(X, dtype=np.float64)
    enc = forward(model.encoder, X)
    dec = forward(model.decoder, enc.output)
    resid = dec.output - X
    loss = float(np.sum(resid * resid))
    g_dec, dZ = backward(model.decoder, dec, 2.0 * resid)
    g_enc, _ = backward(model.encoder, enc, dZ, input_grad=False)
    g_head = [(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in model.head]
    return loss, _flatten(g_enc, g_dec, g_head)


def graph_loss(P, W):
    """Pairwise cross-entropy between the kNN graph and ``P P^T``.

    Inner products are clamped to ``[1e-7, 1 - 1e-7]`` before the logs; the
    mean runs over all ``B*B`` ordered pairs.  Returns ``(loss, dP)``.
    """
    P = np.asarray(P, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    B = P.shape[0]
    if W.shape != (B, B):
        raise InvalidInputError(f"W shape {W.shape} does not match batch size {B}")
    G = P @ P.T
    Gc = np.clip(G, PAIR_CLAMP, 1.0 - PAIR_CLAMP)
    loss = -float(np.sum(W * np.log(Gc) + (1.0 - W) * np.log1p(-Gc))) / B ** 2
    dG = -(W / Gc - (1.0 - W) / (1.0 - Gc)) / B ** 2
    dG[(G < PAIR_CLAMP) | (G > 1.0 - PAIR_CLAMP)] = 0.0
    dP = (dG + dG.T) @ P
    return loss, dP


def augmentation_loss(P, P_aug):
    """``sum_i |p_i - p~_i|^2``; returns ``(loss, dP, dP_aug)``."""
    P = np.asarray(P, dtype=np.float64)
    P_aug = np.asarray(P_aug, dtype=np.float64)
    if P.shape != P_aug.shape:
        raise InvalidInputError(f"shape mismatch {P.shape} vs {P_aug.shape}")
    diff = P - P_aug
    return float(np.sum(diff * diff)), 2.0 * diff, -2.0 * diff


def _flatten(*parts):
    out = []
    for grads in parts:
        for dW, db in grads:
            out.extend((dW, db))
    return out


def _add(a, b):
    return [(wa + wb, ba + bb) for (wa, ba), (wb, bb) in zip(a, b)]


def clustering_loss(model, X, X_aug, beta1, beta2, W=None, k=5, sigma2=0.1):
    """Combined loss for one mini-batch and its gradients.

    ``W`` is treated as a constant; when omitted it is built from the current
    embedding of ``X``.  Returns ``(loss, grads, parts)`` where ``parts``
    holds the individual terms and the adjacency used.
    """
    X = np.asarray(X, dtype=np.float64)
    enc = forward(model.encoder, X)
    Z = enc.output
    dec = forward(model.decoder, Z)
    head = forward(model.head, Z)
    P = head.output
    if W is None:
        W = _graph_weights(Z, k, sigma2)

    resid = dec.output - X
    l_r = float(np.sum(resid * resid))
    l_w, dP_w = graph_loss(P, W)
    dP = beta1 * dP_w
    l_a = 0.0
    if beta2 != 0:
        enc_a = forward(model.encoder, X_aug)
        head_a = forward(model.head, enc_a.output)
        l_a, dP_a, dPa_a = augmentation_loss(P, head_a.output)
        dP = dP + beta2 * dP_a

    g_dec, dZ = backward(model.decoder, dec, 2.0 * resid)
    g_head, dZ_head = backward(model.head, head, dP)
    g_enc, _ = backward(model.encoder, enc, dZ + dZ_head, input_grad=False)
    if beta2 != 0:
        g_head_a, dZ_a = backward(model.head, head_a, beta2 * dPa_a)
        g_enc_a, _ = backward(model.encoder, enc_a, dZ_a, input_grad=False)
        g_head = _add(g_head, g_head_a)
        g_enc = _add(g_enc, g_enc_a)

    loss = l_r + beta1 * l_w + beta2 * l_a
    parts = {"reconstruction": l_r, "graph": l_w, "augmentation": l_a, "W": W}
    return loss, _flatten(g_enc, g_dec, g_head), parts


def init_head_kmeans(model, X, temperature=0.1, seed=0):
    """Point the softmax head at k-means centroids of the embedding, in place.

    The head computes ``softmax(-|z - mu_k|^2 / tau)``, which is affine in
    ``z`` up to a per-row constant.  ``tau`` is ``temperature`` times the
    mean squared distance of each embedded sample to its centroid, so small
    temperatures start the head in the confident regime.
    """
    head = model.head
    if len(head) != 1:
        raise InvalidInputError("k-means initialisation needs a single-layer head")
    Z = model.embed(X)
    km = KMeans(model.n_clusters, n_init=10, random_state=seed).fit(Z)
    mu = km.cluster_centers_
    spread = float(np.mean(np.sum((Z - mu[km.labels_]) ** 2, axis=1)))
    tau = temperature * max(spread, np.finfo(float).tiny)
    head[0].weight[...] = 2.0 * mu.T / tau
    head[0].bias[...] = -np.sum(mu * mu, axis=1) / tau
    return model


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def _check_data(X, config):
    X = as_matrix(X, "X", min_rows=2)
    if config.clusters is None:
        raise ConfigError("clusters", "number of clusters is not set")
    config.validate(n_samples=X.shape[0])
    return X


def pretrain(X, config, model=None):
    """Fit the autoencoder on the reconstruction loss alone.

    Returns a new model; the input ``model`` (if any) is not modified.
    """
    X = _check_data(X, config)
    streams = _streams(config.seed)
    if model is None:
        model = build_model(
            X.shape[1], config.clusters, config.hidden_dims, config.embedding_dim, streams["init"]
        )
    else:
        model = model.copy()
    model.reset_optimizer()
    rng = streams["pretrain"]
    for epoch in range(config.pretrain_epochs):
        total = 0.0
        for idx in _batches(X.shape[0], config.batch_size, rng):
            loss, grads = reconstruction_loss(model, X[idx])
            if not np.isfinite(loss):
                raise TrainingDivergenceError(f"reconstruction loss diverged in pretrain epoch {epoch}")
            adam_step(model, grads, config.learning_rate)
            total += loss
        logger.debug("pretrain epoch %d: reconstruction %.6g", epoch, total)
    return model


def train(X, config, model=None, history=None):
    """Pretrain (unless ``model`` is given) and fine-tune on the full loss.

    With ``head_init="kmeans"`` the head is first aimed at k-means centroids
    of the pretrained embedding.  Returns ``(model, P)`` with ``P`` the probability matrix of ``X`` under
    the final model.  Per-epoch loss totals are appended to ``history`` when
    a list is passed.
    """
    X = _check_data(X, config)
    if model is None:
        model = pretrain(X, config)
    else:
        if model.input_dim != X.shape[1] or model.n_clusters != config.clusters:
            raise InvalidInputError("model does not match data dimension / cluster count")
        model = model.copy()
    model.reset_optimizer()
    streams = _streams(config.seed)
    if config.head_init == "kmeans":
        init_head_kmeans(model, X, config.head_init_temperature, streams["kmeans"])
    X_aug = augment(X, config.xi, streams["augment"])
    rng = streams["train"]
    step = 0
    for epoch in range(config.train_epochs):
        sums = {"loss": 0.0, "reconstruction": 0.0, "graph": 0.0, "augmentation": 0.0}
        for idx in _batches(X.shape[0], config.batch_size, rng):
            t = epoch if config.discount_granularity == "epoch" else step
            beta1 = effective_beta1(config.beta1, config.discount_gamma, t)
            loss, grads, parts = clustering_loss(
                model, X[idx], X_aug[idx], beta1, config.beta2,
                k=config.k_neighbors, sigma2=config.sigma2,
            )
            if not np.isfinite(loss):
                raise TrainingDivergenceError(f"clustering loss diverged in epoch {epoch}")
            adam_step(model, grads, config.learning_rate)
            step += 1
            sums["loss"] += loss
            for key in ("reconstruction", "graph", "augmentation"):
                sums[key] += parts[key]
        if history is not None:
            history.append({"epoch": epoch, "beta1": beta1, **sums})
        logger.debug("epoch %d: beta1 %.4g loss %.6g", epoch, beta1, sums["loss"])
    return model, infer_probabilities(model, X)


def infer_probabilities(model, X):
    """Cluster distributions of ``X``; every entry strictly inside (0, 1)."""
    X = as_matrix(X, "X")
    P = forward(model.head, forward(model.encoder, X).output).output
    np.maximum(P, PROB_FLOOR, out=P)
    P /= P.sum(axis=1, keepdims=True)
    return P


def assign_labels(P):
    """Most probable cluster per row; ties go to the lowest index."""
    P = check_probability_matrix(P)
    return np.argmax(P, axis=1)


class GLDC(ClusterMixin, TransformerMixin, BaseEstimator):
    """Graph-learning deep clustering estimator.

    ``fit`` pretrains the autoencoder and fine-tunes it with the graph and
    augmentation losses.  ``predict_proba`` returns the cluster probability
    matrix, ``predict`` its row-wise argmax and ``transform`` the embedding.

    Attributes
    ----------
    model_ : GldcModel
    probabilities_ : ndarray of shape (n_samples, n_clusters)
    labels_ : ndarray of shape (n_samples,)
    history_ : list of dict
        Per-epoch loss totals and the graph-loss weight used.
    """

    def __init__(
        self,
        n_clusters=10,
        *,
        batch_size=128,
        learning_rate=0.002,
        beta1=5.0,
        beta2=10.0,
        discount_gamma=0.8,
        discount_granularity="epoch",
        sigma2=0.1,
        xi=0.05,
        k_neighbors=5,
        pretrain_epochs=50,
        train_epochs=200,
        hidden_dims=(500, 500, 2000),
        embedding_dim=5,
        head_init="kmeans",
        head_init_temperature=0.1,
        random_state=0,
    ):
        self.n_clusters = n_clusters
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.discount_gamma = discount_gamma
        self.discount_granularity = discount_granularity
        self.sigma2 = sigma2
        self.xi = xi
        self.k_neighbors = k_neighbors
        self.pretrain_epochs = pretrain_epochs
        self.train_epochs = train_epochs
        self.hidden_dims = hidden_dims
        self.embedding_dim = embedding_dim
        self.head_init = head_init
        self.head_init_temperature = head_init_temperature
        self.random_state = random_state

    def _config(self):
        return TrainingConfig(
            clusters=self.n_clusters,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            discount_gamma=self.discount_gamma,
            discount_granularity=self.discount_granularity,
            sigma2=self.sigma2,
            xi=self.xi,
            k_neighbors=self.k_neighbors,
            pretrain_epochs=self.pretrain_epochs,
            train_epochs=self.train_epochs,
            hidden_dims=self.hidden_dims,
            embedding_dim=self.embedding_dim,
            head_init=self.head_init,
            head_init_temperature=self.head_init_temperature,
            seed=0 if self.random_state is None else int(self.random_state),
        )

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        config = self._config()
        self.history_ = []
        self.model_, self.probabilities_ = train(X, config, history=self.history_)
        self.labels_ = assign_labels(self.probabilities_)
        self.n_features_in_ = X.shape[1]
        return self

    def _check_input(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise InvalidInputError(
                f"X has {X.shape[1]} features, estimator was fitted with {self.n_features_in_}"
            )
        return X

    def predict_proba(self, X):
        return infer_probabilities(self.model_, self._check_input(X))

    def predict(self, X):
        return assign_labels(self.predict_proba(X))

    def transform(self, X):
        """Embedding produced by the encoder."""
        return self.model_.embed(self._check_input(X))
