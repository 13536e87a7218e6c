"""Rational RNN: d independently parameterized chain WFSAs + a linear head.

Each WFSA stores its parameters as one ``(k, 2*d_emb + 2)`` array. Row
``i-1`` holds everything used to *enter* state ``i``::

    [ w_i (d_emb) | b_f,i | v_i (d_emb) | b_u,i ]

and is exactly one group for the group-lasso penalty. Per token ``z``::

    f_i = sigmoid(w_i . z + b_f,i)          # self-loop on state i
    u_i = (1 - f_i) * (v_i . z + b_u,i)     # main transition into state i
"""

from dataclasses import dataclass, field
import json

import numpy as np

from .numeric import sigmoid
from .wfsa import WfsaOverflowError, WfsaShape, forward_score

MODEL_FORMAT = "sparse-rrnn-model"
MODEL_VERSION = 1


def group_size(d_emb):
    return 2 * (d_emb + 1)


class StateParams:
    """View on the parameter row of one state; writes go to the model."""

    def __init__(self, row):
        self.row = row

    @property
    def d_emb(self):
        return (self.row.shape[0] - 2) // 2

    @property
    def w(self):
        return self.row[: self.d_emb]

    @property
    def b_f(self):
        return self.row[self.d_emb]

    @property
    def v(self):
        e = self.d_emb
        return self.row[e + 1 : 2 * e + 1]

    @property
    def b_u(self):
        return self.row[2 * self.d_emb + 1]


def transition_weights(state, z):
    """Self-loop weight ``f`` in (0, 1) and main-transition weight ``u``."""
    z = np.asarray(z, dtype=np.float64)
    f = sigmoid(np.dot(state.w, z) + state.b_f)
    u = (1.0 - f) * (np.dot(state.v, z) + state.b_u)
    return float(f), float(u)


@dataclass
class WfsaParams:
    params: np.ndarray  # (k, 2*d_emb + 2)

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.ndim != 2 or self.params.shape[0] < 1 or self.params.shape[1] % 2:
            raise ValueError(f"bad WFSA parameter array shape {self.params.shape}")

    @property
    def k(self):
        return self.params.shape[0]

    @property
    def shape(self):
        return WfsaShape(self.k)

    @property
    def d_emb(self):
        return self.params.shape[1] // 2 - 1

    def state(self, i):
        """Parameters entering state ``i`` (1-based)."""
        if not 1 <= i <= self.k:
            raise IndexError(f"state {i} outside 1..{self.k}")
        return StateParams(self.params[i - 1])

    @property
    def states(self):
        return [self.state(i) for i in range(1, self.k + 1)]

    # column blocks, shape (k, d_emb) or (k,)
    @property
    def w(self):
        return self.params[:, : self.d_emb]

    @property
    def b_f(self):
        return self.params[:, self.d_emb]

    @property
    def v(self):
        e = self.d_emb
        return self.params[:, e + 1 : 2 * e + 1]

    @property
    def b_u(self):
        return self.params[:, 2 * self.d_emb + 1]


def timestep_weights(wfsa, doc):
    """``(f, u)`` arrays of shape ``(n, k)`` for a document ``(n, d_emb)``."""
    doc = np.asarray(doc, dtype=np.float64)
    f = sigmoid(doc @ wfsa.w.T + wfsa.b_f)
    u = (1.0 - f) * (doc @ wfsa.v.T + wfsa.b_u)
    return f, u


def doc_score(wfsa, doc):
    """Score of one WFSA on one document via the Forward algorithm."""
    doc = np.asarray(doc, dtype=np.float64)
    if doc.ndim != 2 or doc.shape[0] == 0:
        raise ValueError("document must be a nonempty (n, d_emb) array")
    f, u = timestep_weights(wfsa, doc)
    return forward_score(f, u).total


@dataclass
class RationalModel:
    wfsas: list
    classifier_weight: np.ndarray
    classifier_bias: np.ndarray  # 0-d, so optimizers can update it in place
    d_emb: int

    def __post_init__(self):
        self.classifier_weight = np.asarray(self.classifier_weight, dtype=np.float64).reshape(-1)
        self.classifier_bias = np.array(self.classifier_bias, dtype=np.float64).reshape(())
        if self.classifier_weight.shape[0] != len(self.wfsas):
            raise ValueError("classifier weight length must equal the number of WFSAs")
        for w in self.wfsas:
            if w.d_emb != self.d_emb:
                raise ValueError(f"WFSA embedding dim {w.d_emb} != model d_emb {self.d_emb}")

    @classmethod
    def init(cls, ks, d_emb, rng):
        """Weights ~ U(-1/sqrt(d_emb), 1/sqrt(d_emb)), biases and classifier zero."""
        scale = 1.0 / np.sqrt(d_emb)
        wfsas = []
        for k in ks:
            p = np.zeros((k, group_size(d_emb)))
            p[:, :d_emb] = rng.uniform(-scale, scale, size=(k, d_emb))
            p[:, d_emb + 1 : 2 * d_emb + 1] = rng.uniform(-scale, scale, size=(k, d_emb))
            wfsas.append(WfsaParams(p))
        return cls(wfsas, np.zeros(len(ks)), 0.0, d_emb)

    @property
    def ks(self):
        return tuple(w.k for w in self.wfsas)

    @property
    def d(self):
        return len(self.wfsas)

    @property
    def total_transitions(self):
        return sum(self.ks)

    def named_parameters(self):
        out = {f"wfsa.{j}": w.params for j, w in enumerate(self.wfsas)}
        out["classifier.weight"] = self.classifier_weight
        out["classifier.bias"] = self.classifier_bias
        return out

    def copy(self):
        return RationalModel(
            [WfsaParams(w.params.copy()) for w in self.wfsas],
            self.classifier_weight.copy(),
            self.classifier_bias.copy(),
            self.d_emb,
        )

    def zeros_like(self):
        return RationalModel(
            [WfsaParams(np.zeros_like(w.params)) for w in self.wfsas],
            np.zeros_like(self.classifier_weight),
            0.0,
            self.d_emb,
        )

    def to_vector(self):
        return np.concatenate([p.reshape(-1) for p in self.named_parameters().values()])

    def set_vector(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        pos = 0
        for p in self.named_parameters().values():
            p[...] = vec[pos : pos + p.size].reshape(p.shape)
            pos += p.size
        if pos != vec.size:
            raise ValueError(f"vector has {vec.size} entries, model has {pos}")


def group_view(model):
    """``(wfsa_index, state_index, values)`` for every group, in chain order.

    ``values`` is a view: writing to it writes to the model. State indices
    are 1-based; classifier parameters belong to no group.
    """
    return [(j, i + 1, w.params[i]) for j, w in enumerate(model.wfsas) for i in range(w.k)]


@dataclass
class ForwardTrace:
    """Everything ``backward_batch`` needs; batch-first arrays.

    B documents padded to N tokens, d WFSAs padded to K states.
    """

    ks: tuple
    d_emb: int
    z: np.ndarray  # (B, N, E) after embedding dropout
    tmask: np.ndarray  # (B, N) real-token mask
    f: np.ndarray  # (B, N, d, K) sigmoid gate, before time masking
    g: np.ndarray  # (B, N, d, K) main-transition affine term
    uscale: np.ndarray  # (B, N, d, K) recurrent dropout mask times state mask
    f_eff: np.ndarray  # (B, N, d, K) weight actually used (1 on padding)
    u_eff: np.ndarray  # (B, N, d, K) weight actually used (0 on padding)
    c: np.ndarray  # (B, N+1, d, K+1)
    scores: np.ndarray  # (B, d)
    logits: np.ndarray  # (B,)
    lengths: np.ndarray = field(default=None)

    @property
    def logit(self):
        if self.logits.shape[0] != 1:
            raise ValueError("trace holds more than one document")
        return float(self.logits[0])

    @property
    def score_vector(self):
        if self.scores.shape[0] != 1:
            raise ValueError("trace holds more than one document")
        return self.scores[0]


class TraceMismatchError(ValueError):
    pass


def _pack(model):
    K = max(model.ks, default=1)
    P = np.zeros((model.d, K, group_size(model.d_emb)))
    smask = np.zeros((model.d, K))
    for j, w in enumerate(model.wfsas):
        P[j, : w.k] = w.params
        smask[j, : w.k] = 1.0
    return P, smask


def _affine(z, W, b):
    # Accumulate over the embedding axis in a fixed order, so the result for a
    # given (WFSA, state) does not depend on how many other WFSAs are packed.
    out = np.broadcast_to(b, z.shape[:2] + b.shape).copy()
    for e in range(z.shape[2]):
        out += z[:, :, e, None, None] * W[:, :, e]
    return out


def forward_batch(model, docs, rng=None, embedding_dropout=0.0, recurrent_dropout=0.0):
    """Score a batch of embedded documents; dropout only when ``rng`` is given."""
    docs = [np.asarray(x, dtype=np.float64) for x in docs]
    if not docs:
        raise ValueError("empty batch")
    E = model.d_emb
    for x in docs:
        if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] != E:
            raise ValueError(f"documents must be nonempty (n, {E}) arrays, got {x.shape}")
    B = len(docs)
    lengths = np.array([x.shape[0] for x in docs])
    N = int(lengths.max())
    z = np.zeros((B, N, E))
    tmask = np.zeros((B, N), dtype=bool)
    for b, x in enumerate(docs):
        z[b, : x.shape[0]] = x
        tmask[b, : x.shape[0]] = True

    P, smask = _pack(model)
    d, K = smask.shape
    if rng is not None and embedding_dropout > 0:
        keep = rng.random((B, N)) >= embedding_dropout
        z = z * (keep / (1.0 - embedding_dropout))[:, :, None]
    f = sigmoid(_affine(z, P[:, :, :E], P[:, :, E]))
    g = _affine(z, P[:, :, E + 1 : 2 * E + 1], P[:, :, 2 * E + 1])
    uscale = np.broadcast_to(smask, (B, N, d, K)).copy()
    if rng is not None and recurrent_dropout > 0:
        keep = rng.random((B, N, d, K)) >= recurrent_dropout
        uscale *= keep / (1.0 - recurrent_dropout)
    tm = tmask[:, :, None, None]
    f_eff = np.where(tm, f, 1.0)
    u_eff = np.where(tm, (1.0 - f) * g * uscale, 0.0)

    c = np.zeros((B, N + 1, d, K + 1))
    c[:, :, :, 0] = 1.0
    for t in range(1, N + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            c[:, t, :, 1:] = c[:, t - 1, :, 1:] * f_eff[:, t - 1] + c[:, t - 1, :, :-1] * u_eff[:, t - 1]
        if not np.all(np.isfinite(c[:, t])):
            raise WfsaOverflowError(t)

    scores = np.zeros((B, d))
    for i in range(K):
        scores += c[:, N, :, i + 1] * smask[:, i]
    logits = np.full(B, float(model.classifier_bias))
    for j in range(d):
        logits += model.classifier_weight[j] * scores[:, j]
    if not np.all(np.isfinite(logits)):
        raise WfsaOverflowError(N, "non-finite classifier logit")
    return ForwardTrace(model.ks, E, z, tmask, f, g, uscale, f_eff, u_eff, c, scores, logits, lengths)


def backward_batch(model, trace, labels, sample_weights=None):
    """Gradient of ``sum_b weight_b * logistic_loss(logit_b, label_b)``.

    Returned as a :class:`RationalModel` with the same layout as ``model``.
    Embeddings get no gradient.
    """
    if trace.ks != model.ks or trace.d_emb != model.d_emb:
        raise TraceMismatchError(f"trace for structure {trace.ks} used with model {model.ks}")
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    B = trace.logits.shape[0]
    if y.shape[0] != B:
        raise ValueError("one label per document required")
    if not np.all(np.isin(y, (1.0, -1.0))):
        raise ValueError("labels must be +1 or -1")
    sw = np.ones(B) if sample_weights is None else np.asarray(sample_weights, dtype=np.float64)
    E = model.d_emb
    _, smask = _pack(model)
    d, K = smask.shape
    N = trace.z.shape[1]

    dlogit = -y * sigmoid(-y * trace.logits) * sw  # (B,)
    grad = model.zeros_like()
    grad.classifier_weight[:] = dlogit @ trace.scores
    grad.classifier_bias[...] = dlogit.sum()

    delta = dlogit[:, None, None] * model.classifier_weight[None, :, None] * smask[None]
    dA = np.zeros((B, N, d, K))
    dG = np.zeros((B, N, d, K))
    for t in range(N, 0, -1):
        cprev = trace.c[:, t - 1]
        tm = trace.tmask[:, t - 1, None, None]
        dF = np.where(tm, delta * cprev[:, :, 1:], 0.0)
        dU = np.where(tm, delta * cprev[:, :, :-1], 0.0)
        new_delta = delta * trace.f_eff[:, t - 1]
        new_delta[:, :, :-1] += (delta * trace.u_eff[:, t - 1])[:, :, 1:]
        delta = new_delta
        f = trace.f[:, t - 1]
        g = trace.g[:, t - 1]
        s = trace.uscale[:, t - 1]
        dG[:, t - 1] = dU * (1.0 - f) * s
        dA[:, t - 1] = (dF - dU * g * s) * f * (1.0 - f)

    gW = np.einsum("bndk,bne->dke", dA, trace.z)
    gV = np.einsum("bndk,bne->dke", dG, trace.z)
    gbf = dA.sum(axis=(0, 1))
    gbu = dG.sum(axis=(0, 1))
    for j, w in enumerate(grad.wfsas):
        k = w.k
        w.params[:, :E] = gW[j, :k]
        w.params[:, E] = gbf[j, :k]
        w.params[:, E + 1 : 2 * E + 1] = gV[j, :k]
        w.params[:, 2 * E + 1] = gbu[j, :k]
    return grad


def model_forward(model, doc):
    return forward_batch(model, [doc])


def model_backward(model, trace, label):
    return backward_batch(model, trace, [label])


def predict_logits(model, docs, batch_size=256):
    out = []
    for s in range(0, len(docs), batch_size):
        out.append(forward_batch(model, docs[s : s + batch_size]).logits)
    return np.concatenate(out) if out else np.zeros(0)


def accuracy(model, docs, labels):
    if len(docs) == 0:
        return float("nan")
    logits = predict_logits(model, docs)
    pred = np.where(logits >= 0, 1, -1)
    return float(np.mean(pred == np.asarray(labels)))


def model_to_dict(model):
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "d_emb": model.d_emb,
        "wfsas": [{"k": w.k, "params": w.params.tolist()} for w in model.wfsas],
        "classifier_weight": model.classifier_weight.tolist(),
        "classifier_bias": float(model.classifier_bias),
    }


def model_from_dict(data):
    if data.get("format") != MODEL_FORMAT:
        raise ValueError("not a rational model document")
    if data.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model format version {data.get('version')!r}")
    d_emb = int(data["d_emb"])
    wfsas = []
    for entry in data["wfsas"]:
        p = np.array(entry["params"], dtype=np.float64).reshape(int(entry["k"]), group_size(d_emb))
        wfsas.append(WfsaParams(p))
    return RationalModel(wfsas, np.array(data["classifier_weight"], dtype=np.float64),
                         float(data["classifier_bias"]), d_emb)


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
