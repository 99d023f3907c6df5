"""Dense multilayer perceptron with exact backpropagation and Adam.

Only what the clustering network needs: affine layers followed by ReLU,
identity or (final-layer) softmax activations, float64 throughout.

Weights are stored as ``(input_dim, output_dim)`` so a batch ``X`` of shape
``(B, input_dim)`` maps to ``X @ W + b``.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidInputError, TrainingDivergenceError

ACTIVATIONS = ("relu", "linear", "softmax")


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "linear"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise InvalidInputError(f"unknown activation {self.activation!r}")
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise InvalidInputError(
                f"weight {self.weight.shape} and bias {self.bias.shape} do not match"
            )

    @property
    def input_dim(self):
        return self.weight.shape[0]

    @property
    def output_dim(self):
        return self.weight.shape[1]

    def copy(self):
        return Layer(self.weight.copy(), self.bias.copy(), self.activation)


def glorot_layer(input_dim, output_dim, activation, rng):
    """Uniform Glorot initialisation with zero bias."""
    limit = np.sqrt(6.0 / (input_dim + output_dim))
    weight = rng.uniform(-limit, limit, size=(input_dim, output_dim))
    return Layer(weight, np.zeros(output_dim), activation)


def build_stack(dims, activations, rng):
    """Create ``len(dims) - 1`` layers mapping ``dims[i] -> dims[i+1]``."""
    if len(activations) != len(dims) - 1:
        raise InvalidInputError("need one activation per layer")
    for i, act in enumerate(activations):
        if act == "softmax" and i != len(activations) - 1:
            raise InvalidInputError("softmax is only allowed on the final layer")
    return [glorot_layer(a, b, act, rng) for a, b, act in zip(dims[:-1], dims[1:], activations)]


def softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    np.exp(shifted, out=shifted)
    shifted /= shifted.sum(axis=1, keepdims=True)
    return shifted


@dataclass
class Trace:
    """Activations kept by :func:`forward` for the backward pass.

    ``activations[0]`` is the input batch and ``activations[i + 1]`` the
    output of layer ``i``; ``pre[i]`` is that layer's affine output.
    """

    activations: list
    pre: list

    @property
    def output(self):
        return self.activations[-1]


def forward(layers, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidInputError(f"batch must be 2-D, got shape {X.shape}")
    if not layers:
        raise InvalidInputError("empty layer sequence")
    if X.shape[1] != layers[0].input_dim:
        raise InvalidInputError(
            f"batch has {X.shape[1]} columns, first layer expects {layers[0].input_dim}"
        )
    activations = [X]
    pre = []
    h = X
    for layer in layers:
        z = h @ layer.weight
        z += layer.bias
        pre.append(z)
        if layer.activation == "relu":
            h = np.maximum(z, 0.0)
        elif layer.activation == "softmax":
            h = softmax(z)
        else:
            h = z
        activations.append(h)
    return Trace(activations, pre)


def backward(layers, trace, grad_output, input_grad=True):
    """Backpropagate ``grad_output`` (dLoss/dOutput) through ``layers``.

    Returns ``(grads, grad_input)`` where ``grads`` is a list of
    ``(dW, db)`` pairs parallel to ``layers``.  ``grad_input`` is ``None``
    when ``input_grad`` is false, which skips one matrix product.
    """
    g = np.asarray(grad_output, dtype=np.float64)
    if g.shape != trace.output.shape:
        raise InvalidInputError(
            f"output gradient shape {g.shape} != output shape {trace.output.shape}"
        )
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        if layer.activation == "relu":
            g = g * (trace.pre[i] > 0)
        elif layer.activation == "softmax":
            s = trace.activations[i + 1]
            # Jacobian-vector product of softmax: s * (g - <g, s>)
            g = s * (g - np.sum(g * s, axis=1, keepdims=True))
        grads[i] = (trace.activations[i].T @ g, g.sum(axis=0))
        if i > 0 or input_grad:
            g = g @ layer.weight.T
    return grads, (g if input_grad else None)


@dataclass
class AdamState:
    first: list
    second: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # reusable work buffers, not part of the optimiser state proper
    scratch: list = field(default_factory=list, repr=False, compare=False)

    @classmethod
    def zeros_like(cls, params):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


@dataclass
class GldcModel:
    """Encoder, decoder and clustering head plus optimiser state."""

    encoder: list
    decoder: list
    head: list
    adam: AdamState = field(default=None, repr=False)

    def __post_init__(self):
        emb = self.encoder[-1].output_dim
        if self.decoder[0].input_dim != emb or self.head[0].input_dim != emb:
            raise InvalidInputError("encoder output, decoder input and head input dims differ")
        if self.decoder[-1].output_dim != self.encoder[0].input_dim:
            raise InvalidInputError("decoder must reconstruct the input dimension")
        if self.head[-1].activation != "softmax":
            raise InvalidInputError("head must end with softmax")
        if self.adam is None:
            self.reset_optimizer()

    @property
    def input_dim(self):
        return self.encoder[0].input_dim

    @property
    def embedding_dim(self):
        return self.encoder[-1].output_dim

    @property
    def n_clusters(self):
        return self.head[-1].output_dim

    def parts(self):
        return {"encoder": self.encoder, "decoder": self.decoder, "head": self.head}

    def parameters(self):
        """Parameter arrays in a fixed order: encoder, decoder, head; W then b."""
        out = []
        for layers in (self.encoder, self.decoder, self.head):
            for layer in layers:
                out.extend((layer.weight, layer.bias))
        return out

    def reset_optimizer(self):
        self.adam = AdamState.zeros_like(self.parameters())

    def copy(self):
        adam = AdamState(
            [m.copy() for m in self.adam.first],
            [v.copy() for v in self.adam.second],
            self.adam.step,
            self.adam.beta1,
            self.adam.beta2,
            self.adam.eps,
        )
        return GldcModel(
            [l.copy() for l in self.encoder],
            [l.copy() for l in self.decoder],
            [l.copy() for l in self.head],
            adam,
        )

    def embed(self, X):
        return forward(self.encoder, X).output

    def state_dict(self):
        """Flat ``name -> array`` mapping, suitable for ``np.savez``."""
        state = {}
        for part, layers in self.parts().items():
            for i, layer in enumerate(layers):
                state[f"{part}.{i}.weight"] = layer.weight
                state[f"{part}.{i}.bias"] = layer.bias
                state[f"{part}.{i}.activation"] = np.array(layer.activation)
        return state

    @classmethod
    def from_state_dict(cls, state):
        parts = {}
        for part in ("encoder", "decoder", "head"):
            layers = []
            i = 0
            while f"{part}.{i}.weight" in state:
                layers.append(
                    Layer(
                        np.array(state[f"{part}.{i}.weight"], dtype=np.float64),
                        np.array(state[f"{part}.{i}.bias"], dtype=np.float64),
                        str(state[f"{part}.{i}.activation"]),
                    )
                )
                i += 1
            if not layers:
                raise InvalidInputError(f"state has no {part} layers")
            parts[part] = layers
        return cls(**parts)


def build_model(input_dim, n_clusters, hidden_dims=(500, 500, 2000), embedding_dim=5, seed=0):
    """Autoencoder ``D-h1-..-e-..-h1-D`` with ReLU hidden layers and a softmax head.

    The embedding and reconstruction layers are linear; the head is a single
    ``embedding_dim -> n_clusters`` softmax layer.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    hidden = list(hidden_dims)
    enc_dims = [input_dim, *hidden, embedding_dim]
    dec_dims = enc_dims[::-1]
    enc_act = ["relu"] * len(hidden) + ["linear"]
    encoder = build_stack(enc_dims, enc_act, rng)
    decoder = build_stack(dec_dims, enc_act, rng)
    head = build_stack([embedding_dim, n_clusters], ["softmax"], rng)
    return GldcModel(encoder, decoder, head)


def adam_step(model, grads, learning_rate):
    """Apply one Adam update to ``model`` in place and return it.

    ``grads`` is a list parallel to ``model.parameters()``.
    """
    if learning_rate <= 0:
        raise InvalidInputError("learning_rate must be positive")
    params = model.parameters()
    if len(grads) != len(params):
        raise InvalidInputError(f"expected {len(params)} gradients, got {len(grads)}")
    for p, g in zip(params, grads):
        if g.shape != p.shape:
            raise InvalidInputError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingDivergenceError("non-finite gradient")
    st = model.adam
    st.step += 1
    b1, b2 = st.beta1, st.beta2
    step_size = learning_rate / (1.0 - b1 ** st.step)
    root_correction = np.sqrt(1.0 - b2 ** st.step)
    if len(st.scratch) != len(params):
        st.scratch = [np.empty_like(p) for p in params]
    for p, g, m, v, tmp in zip(params, grads, st.first, st.second, st.scratch):
        # fully in place: these arrays reach millions of entries
        np.multiply(g, 1.0 - b1, out=tmp)
        m *= b1
        m += tmp
        np.multiply(g, g, out=tmp)
        tmp *= 1.0 - b2
        v *= b2
        v += tmp
        np.sqrt(v, out=tmp)
        tmp /= root_correction
        tmp += st.eps
        np.divide(m, tmp, out=tmp)
        tmp *= step_size
        p -= tmp
    return model
