"""Discriminative training engine.

Weighted binary cross-entropy over detection trials (every batch sample
against every detector), hand-derived reverse-mode gradients through the
pairwise score polynomial, the length normalization, and the hierarchical
log-domain combination, optimized with Adam over a staged schedule with
balanced batches and dev-based checkpoint selection.

The engine works on plain parameter dictionaries (see get_params) and
writes back into backend objects only at checkpoint boundaries.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .backend import FlatBackend
from .dataio import EmbeddingSet, TrialSet, group_indices
from .hier import HierBackend
from .plda import PairScoreParams
from .preproc import AffinePreproc, LENGTH_NORM_EPS

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Schedule and loss configuration.

    The default schedule is a desk-scale reduction (10x) of the production
    one; production values (12000 and 3000 batches, 5 seeds) are expressed
    through the same fields. The final stage fine-tunes the best checkpoint
    selected on the dev metric.
    """

    batch_size: int = 2048
    pi: float = 0.01
    alpha: float = 0.0
    stages: tuple[tuple[int, float], ...] = ((1200, 5e-4), (300, 1e-3))
    finetune: tuple[int, float] = (100, 1e-5)
    seeds: tuple[int, ...] = (0,)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    checkpoint_every: int = 250
    select_metric: str = "loss"  # "loss" or "dcf"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.pi < 1.0:
            raise ValueError("pi must be in (0, 1)")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        for n, lr in tuple(self.stages) + (tuple(self.finetune),):
            if n < 0 or lr <= 0:
                raise ValueError("stage batch counts must be >= 0 and rates > 0")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.select_metric not in ("loss", "dcf"):
            raise ValueError("select_metric must be 'loss' or 'dcf'")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")


# ---------------------------------------------------------------------------
# Loss


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def bce_loss(scores: np.ndarray, label_idx: np.ndarray, pi: float) -> float:
    """Weighted binary cross-entropy over an (n, L) score batch.

    Each row contributes one positive trial (its label column) and L-1
    negative trials; positives are weighted pi / P and negatives
    (1 - pi) / N with P = n and N = n (L - 1). Scores are shifted by
    log(pi / (1 - pi)) before the sigmoid.
    """
    loss, _ = _bce_loss_grad(scores, label_idx, pi)
    return loss


def _bce_loss_grad(scores, label_idx, pi):
    scores = np.asarray(scores, dtype=np.float64)
    n, L = scores.shape
    if L < 2:
        raise ValueError("need at least 2 detectors")
    label_idx = np.asarray(label_idx, dtype=np.intp)
    if label_idx.shape != (n,) or label_idx.min() < 0 or label_idx.max() >= L:
        raise ValueError("label not in detectors")
    t0 = math.log(pi / (1.0 - pi))
    a = scores + t0
    rows = np.arange(n)
    P = float(n)
    N = float(n * (L - 1))
    log_1mq = -_softplus(a)
    log_q = -_softplus(-a)
    loss = -(pi / P) * log_q[rows, label_idx].sum()
    loss -= ((1.0 - pi) / N) * (log_1mq.sum() - log_1mq[rows, label_idx].sum())

    q = _sigmoid(a)
    G = ((1.0 - pi) / N) * q
    G[rows, label_idx] = -(pi / P) * (1.0 - q[rows, label_idx])
    return float(loss), G


def trial_bce(scores: np.ndarray, is_target: np.ndarray, pi: float) -> float:
    """Weighted binary cross-entropy over an arbitrary flat trial list."""
    scores = np.asarray(scores, dtype=np.float64)
    is_target = np.asarray(is_target, dtype=bool)
    P = int(is_target.sum())
    N = int((~is_target).sum())
    if P == 0 or N == 0:
        raise ValueError("need at least one target and one non-target trial")
    t0 = math.log(pi / (1.0 - pi))
    a = scores + t0
    loss = (pi / P) * _softplus(-a[is_target]).sum()
    loss += ((1.0 - pi) / N) * _softplus(a[~is_target]).sum()
    return float(loss)


def combined_loss(
    lan_scores: np.ndarray,
    cluster_scores: np.ndarray | None,
    label_idx: np.ndarray,
    cluster_label_idx: np.ndarray | None,
    pi: float,
    alpha: float,
) -> float:
    """(1 - alpha) * language loss + alpha * cluster loss."""
    if alpha > 0.0 and (cluster_scores is None or cluster_label_idx is None):
        raise ValueError("alpha > 0 requires cluster scores and labels")
    loss = 0.0
    if alpha < 1.0:
        loss += (1.0 - alpha) * bce_loss(lan_scores, label_idx, pi)
    if alpha > 0.0:
        loss += alpha * bce_loss(cluster_scores, cluster_label_idx, pi)
    return loss


# ---------------------------------------------------------------------------
# Parameter dictionaries

SYMMETRIC_SUFFIXES = ("Lambda", "Gamma")


def _is_symmetric_key(key: str) -> bool:
    return key.split(".")[-1] in SYMMETRIC_SUFFIXES


def _flat_param_dict(backend: FlatBackend, prefix: str = "") -> dict[str, np.ndarray]:
    return {
        prefix + "A": backend.preproc.A.copy(),
        prefix + "b": backend.preproc.b.copy(),
        prefix + "Lambda": backend.params.Lambda.copy(),
        prefix + "Gamma": backend.params.Gamma.copy(),
        prefix + "c": backend.params.c.copy(),
        prefix + "k": np.array(backend.params.k, dtype=np.float64),
        prefix + "detectors": backend.detectors.copy(),
    }


def get_params(backend) -> dict[str, np.ndarray]:
    """Copy of every trainable parameter group, keyed by name."""
    if isinstance(backend, HierBackend):
        params = _flat_param_dict(backend.stage1, "stage1.")
        params.update(_flat_param_dict(backend.stage2, "stage2."))
        params["shifts"] = backend.shifts.copy()
        return params
    if isinstance(backend, FlatBackend):
        return _flat_param_dict(backend)
    raise TypeError(f"unsupported backend type {type(backend).__name__}")


def _set_flat_params(backend: FlatBackend, params, prefix: str = "") -> None:
    backend.preproc = AffinePreproc(
        A=params[prefix + "A"].copy(), b=params[prefix + "b"].copy()
    )
    backend.params = PairScoreParams(
        Lambda=params[prefix + "Lambda"].copy(),
        Gamma=params[prefix + "Gamma"].copy(),
        c=params[prefix + "c"].copy(),
        k=float(params[prefix + "k"]),
    )
    backend.detectors = params[prefix + "detectors"].copy()


def set_params(backend, params: dict[str, np.ndarray]) -> None:
    if isinstance(backend, HierBackend):
        _set_flat_params(backend.stage1, params, "stage1.")
        _set_flat_params(backend.stage2, params, "stage2.")
        backend.shifts = params["shifts"].copy()
    elif isinstance(backend, FlatBackend):
        _set_flat_params(backend, params)
    else:
        raise TypeError(f"unsupported backend type {type(backend).__name__}")


@dataclass(frozen=True)
class HierCombineInfo:
    """Fixed combination tables of a hierarchical backend (not trained)."""

    lang_cluster_idx: np.ndarray
    P_c: np.ndarray
    P_lc: np.ndarray
    singleton: np.ndarray

    @classmethod
    def from_backend(cls, backend: HierBackend) -> "HierCombineInfo":
        return cls(
            lang_cluster_idx=backend._lang_cluster_idx,
            P_c=backend._P_c,
            P_lc=backend._P_lc,
            singleton=backend._singleton,
        )


# ---------------------------------------------------------------------------
# Forward / reverse passes on parameter dictionaries


def _stage_forward(A, b, X):
    Z = X @ A.T + b
    norms = np.linalg.norm(Z, axis=1)
    if np.any(norms < LENGTH_NORM_EPS):
        raise FloatingPointError("degenerate embedding in batch (near-zero norm)")
    return Z / norms[:, None], norms


def _pair_forward(Lam, Gam, c, k, detectors, U):
    cross = 2.0 * U @ Lam @ detectors.T
    q_u = np.einsum("ij,jk,ik->i", U, Gam, U)
    q_d = np.einsum("ij,jk,ik->i", detectors, Gam, detectors)
    return (
        cross
        + q_u[:, None]
        + q_d[None, :]
        + (U @ c)[:, None]
        + (detectors @ c)[None, :]
        + k
    )


def _pair_backward(Lam, Gam, c, detectors, U, G):
    """Gradients of sum(G * S) through the pairwise score matrix S.

    Exact for arbitrary (possibly asymmetric) stored Lambda/Gamma, which
    keeps entry-wise finite-difference checks honest.
    """
    row_sum = G.sum(axis=1)
    col_sum = G.sum(axis=0)
    g_Lambda = 2.0 * U.T @ G @ detectors
    g_Gamma = (U * row_sum[:, None]).T @ U + (detectors * col_sum[:, None]).T @ detectors
    g_c = U.T @ row_sum + detectors.T @ col_sum
    g_k = np.array(G.sum())
    sym_G = Gam + Gam.T
    g_det = 2.0 * G.T @ U @ Lam + col_sum[:, None] * (detectors @ sym_G + c)
    g_U = 2.0 * G @ detectors @ Lam.T + row_sum[:, None] * (U @ sym_G + c)
    return g_Lambda, g_Gamma, g_c, g_k, g_det, g_U


def _lengthnorm_backward(g_U, U, norms):
    inner = np.einsum("ij,ij->i", g_U, U)
    return (g_U - inner[:, None] * U) / norms[:, None]


def _flat_stage_grads(params, prefix, X, G, U, norms):
    """Parameter gradients of one flat stage plus the gradient w.r.t. its input X."""
    Lam, Gam, c = params[prefix + "Lambda"], params[prefix + "Gamma"], params[prefix + "c"]
    dets = params[prefix + "detectors"]
    g_Lambda, g_Gamma, g_c, g_k, g_det, g_U = _pair_backward(Lam, Gam, c, dets, U, G)
    g_Z = _lengthnorm_backward(g_U, U, norms)
    grads = {
        prefix + "A": g_Z.T @ X,
        prefix + "b": g_Z.sum(axis=0),
        prefix + "Lambda": g_Lambda,
        prefix + "Gamma": g_Gamma,
        prefix + "c": g_c,
        prefix + "k": g_k,
        prefix + "detectors": g_det,
    }
    return grads, g_Z @ params[prefix + "A"]


def flat_loss_grads(params, X, label_idx, pi):
    """Loss and gradients for a flat backend given its parameter dict."""
    U, norms = _stage_forward(params["A"], params["b"], X)
    S = _pair_forward(
        params["Lambda"], params["Gamma"], params["c"], float(params["k"]),
        params["detectors"], U,
    )
    loss, G = _bce_loss_grad(S, label_idx, pi)
    grads, _ = _flat_stage_grads(params, "", X, G, U, norms)
    _check_finite(loss, grads)
    return loss, grads


def hier_loss_grads(params, info: HierCombineInfo, X, label_idx, pi, alpha):
    """Loss and gradients for a hierarchical backend given its parameter dict."""
    cidx = info.lang_cluster_idx
    singleton = info.singleton
    C = params["shifts"].shape[0]
    L = len(cidx)

    U1, norms1 = _stage_forward(params["stage1.A"], params["stage1.b"], X)
    S1 = _pair_forward(
        params["stage1.Lambda"], params["stage1.Gamma"], params["stage1.c"],
        float(params["stage1.k"]), params["stage1.detectors"], U1,
    )

    n = X.shape[0]
    S2 = np.zeros((n, L))
    cache = {}
    dets2 = params["stage2.detectors"]
    for ci in range(C):
        cols = np.flatnonzero(cidx == ci)
        Xc = X - params["shifts"][ci]
        U2, norms2 = _stage_forward(params["stage2.A"], params["stage2.b"], Xc)
        cache[ci] = (Xc, U2, norms2, cols)
        if len(cols):
            S2[:, cols] = _pair_forward(
                params["stage2.Lambda"], params["stage2.Gamma"], params["stage2.c"],
                float(params["stage2.k"]), dets2[cols], U2,
            )

    # Log-domain combination; softmax terms reused in the backward pass.
    S1_per_lang = S1[:, cidx]
    log_Pc = np.log(info.P_c)
    log_Plc = np.where(singleton, 0.0, np.log(info.P_lc))
    a_c = S1_per_lang + log_Pc[None, :]
    a_lc = S2 + log_Plc[None, :]
    m = np.maximum(np.maximum(a_c, a_lc), 0.0)
    lse = m + np.log(np.exp(a_c - m) + np.exp(a_lc - m) + np.exp(-m))
    const = np.log(info.P_c + np.where(singleton, 0.0, info.P_lc) + 1.0)
    S = S1_per_lang + S2 + const[None, :] - lse
    S[:, singleton] = S1_per_lang[:, singleton]

    loss_lan, G_lan = _bce_loss_grad(S, label_idx, pi)
    loss = (1.0 - alpha) * loss_lan
    G_lan *= 1.0 - alpha

    d_c = 1.0 - np.exp(a_c - lse)
    d_lc = 1.0 - np.exp(a_lc - lse)
    d_c[:, singleton] = 1.0
    d_lc[:, singleton] = 0.0
    G2 = G_lan * d_lc
    contrib = G_lan * d_c
    G1 = np.zeros_like(S1)
    for ci in range(C):
        cols = np.flatnonzero(cidx == ci)
        if len(cols):
            G1[:, ci] = contrib[:, cols].sum(axis=1)

    if alpha > 0.0:
        loss_clu, G_clu = _bce_loss_grad(S1, cidx[label_idx], pi)
        loss += alpha * loss_clu
        G1 += alpha * G_clu

    grads, _ = _flat_stage_grads(params, "stage1.", X, G1, U1, norms1)

    d2 = params["stage2.A"].shape[0]
    D = X.shape[1]
    grads.update(
        {
            "stage2.A": np.zeros((d2, D)),
            "stage2.b": np.zeros(d2),
            "stage2.Lambda": np.zeros((d2, d2)),
            "stage2.Gamma": np.zeros((d2, d2)),
            "stage2.c": np.zeros(d2),
            "stage2.k": np.array(0.0),
            "stage2.detectors": np.zeros_like(dets2),
            "shifts": np.zeros_like(params["shifts"]),
        }
    )
    Lam2, Gam2, c2 = params["stage2.Lambda"], params["stage2.Gamma"], params["stage2.c"]
    for ci in range(C):
        Xc, U2, norms2, cols = cache[ci]
        if not len(cols):
            continue
        Gc = G2[:, cols]
        g_Lam, g_Gam, g_c, g_k, g_det, g_U = _pair_backward(
            Lam2, Gam2, c2, dets2[cols], U2, Gc
        )
        g_Z = _lengthnorm_backward(g_U, U2, norms2)
        grads["stage2.Lambda"] += g_Lam
        grads["stage2.Gamma"] += g_Gam
        grads["stage2.c"] += g_c
        grads["stage2.k"] = grads["stage2.k"] + g_k
        grads["stage2.detectors"][cols] += g_det
        grads["stage2.A"] += g_Z.T @ Xc
        grads["stage2.b"] += g_Z.sum(axis=0)
        grads["shifts"][ci] = -(g_Z @ params["stage2.A"]).sum(axis=0)

    _check_finite(loss, grads)
    return loss, grads


def backward(backend, X: np.ndarray, label_idx: np.ndarray, config: TrainConfig):
    """Loss and analytic gradients of one batch for a backend object.

    label_idx indexes the backend's detector order; alpha > 0 on a flat
    backend is an error.
    """
    X = np.asarray(X, dtype=np.float64)
    label_idx = np.asarray(label_idx, dtype=np.intp)
    params = get_params(backend)
    if isinstance(backend, HierBackend):
        info = HierCombineInfo.from_backend(backend)
        return hier_loss_grads(params, info, X, label_idx, config.pi, config.alpha)
    if config.alpha > 0.0:
        raise ValueError("alpha > 0 requires a hierarchical backend")
    return flat_loss_grads(params, X, label_idx, config.pi)


def _check_finite(loss, grads):
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite loss")
    for key, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter group {key!r}")


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: dict[str, np.ndarray], config: TrainConfig) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.eps,
    )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> dict[str, np.ndarray]:
    """One bias-corrected Adam update; Lambda/Gamma re-symmetrized afterwards."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    out = {}
    for key, p in params.items():
        g = grads[key]
        state.m[key] = b1 * state.m[key] + (1.0 - b1) * g
        state.v[key] = b2 * state.v[key] + (1.0 - b2) * g * g
        m_hat = state.m[key] / (1.0 - b1 ** state.t)
        v_hat = state.v[key] / (1.0 - b2 ** state.t)
        new = p - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        if _is_symmetric_key(key) and new.ndim == 2:
            new = 0.5 * (new + new.T)
        out[key] = new
    return out


# ---------------------------------------------------------------------------
# Batching


def sample_batch(
    train: EmbeddingSet, batch_size: int, rng: np.random.Generator
) -> np.ndarray:
    """Balanced batch indices: near-equal quotas per (language, dataset) group.

    The per-group quota is ceil(batch_size / #groups); the excess over
    batch_size is removed from the tail of a random group permutation, and
    samples are drawn with replacement within each group.
    """
    groups = list(group_indices(train).values())
    return _sample_from_groups(groups, batch_size, rng)


def _sample_from_groups(groups, batch_size, rng):
    G = len(groups)
    q = -(-batch_size // G)  # ceil
    excess = q * G - batch_size
    perm = rng.permutation(G)
    parts = []
    for pos, gi in enumerate(perm):
        quota = q - 1 if pos >= G - excess else q
        if quota == 0:
            continue
        members = groups[gi]
        parts.append(members[rng.integers(0, len(members), size=quota)])
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# Training loop


@dataclass
class Checkpoint:
    index: int
    batches_seen: int
    lr: float
    train_loss: float
    dev_losses: tuple[float, ...]
    params: dict[str, np.ndarray] = field(repr=False, default_factory=dict)

    @property
    def avg_dev(self) -> float:
        return float(np.mean(self.dev_losses))


@dataclass
class TrainResult:
    backend: object
    log: list[Checkpoint]
    best_avg_dev: float
    best_index: int
    seed: int
    diverged: bool = False


def _copy_params(params):
    return {k: p.copy() for k, p in params.items()}


def _dev_evaluator(backend, dev_sets: list[tuple[EmbeddingSet, TrialSet]], config):
    det_pos = {lab: i for i, lab in enumerate(backend.detector_labels)}
    prepared = []
    for es, ts in dev_sets:
        sample_pos = {sid: i for i, sid in enumerate(es.sample_ids)}
        rows = np.array([sample_pos[sid] for sid in ts.sample_ids], dtype=np.intp)
        cols = np.array([det_pos[lab] for lab in ts.detector_languages], dtype=np.intp)
        prepared.append((es, ts, rows, cols))

    if config.select_metric == "dcf":
        from .metrics import actual_dcf

        def metric(flat_scores, ts):
            return actual_dcf(flat_scores, ts.is_target)[2]

    else:

        def metric(flat_scores, ts):
            return trial_bce(flat_scores, ts.is_target, config.pi)

    def evaluate():
        losses = []
        for es, ts, rows, cols in prepared:
            S = backend.score_matrix(es.vectors)
            losses.append(metric(S[rows, cols], ts))
        return tuple(losses)

    return evaluate


def train(
    backend,
    train_set: EmbeddingSet,
    dev_sets: list[tuple[EmbeddingSet, TrialSet]],
    config: TrainConfig,
    seed: int = 0,
) -> TrainResult:
    """Staged discriminative training with dev-selected checkpointing.

    Runs the configured stages, checkpoints every `checkpoint_every`
    batches (and at stage ends), restores the best checkpoint by average
    dev metric, fine-tunes it, and returns the overall best checkpoint.
    A non-finite loss aborts training, falling back to the best checkpoint
    recorded so far.
    """
    det_pos = {lab: i for i, lab in enumerate(backend.detector_labels)}
    missing = sorted(set(train_set.languages) - set(det_pos))
    if missing:
        raise ValueError(f"training languages without a detector: {missing}")
    label_idx_all = np.array([det_pos[l] for l in train_set.languages], dtype=np.intp)
    groups = list(group_indices(train_set).values())
    evaluate_dev = _dev_evaluator(backend, dev_sets, config)

    is_hier = isinstance(backend, HierBackend)
    info = HierCombineInfo.from_backend(backend) if is_hier else None
    if config.alpha > 0.0 and not is_hier:
        raise ValueError("alpha > 0 requires a hierarchical backend")

    rng = np.random.default_rng(seed)
    params = get_params(backend)
    checkpoints: list[Checkpoint] = []

    def record(batches_seen, lr, train_loss):
        set_params(backend, params)
        checkpoints.append(
            Checkpoint(
                index=len(checkpoints),
                batches_seen=batches_seen,
                lr=lr,
                train_loss=train_loss,
                dev_losses=evaluate_dev(),
                params=_copy_params(params),
            )
        )

    record(0, 0.0, float("nan"))
    batches_seen = 0
    diverged = False

    def run_stage(n_batches, lr):
        nonlocal params, batches_seen, diverged
        state = adam_init(params, config)
        running: list[float] = []
        for b in range(n_batches):
            idx = _sample_from_groups(groups, config.batch_size, rng)
            X = train_set.vectors[idx]
            y = label_idx_all[idx]
            try:
                if is_hier:
                    loss, grads = hier_loss_grads(params, info, X, y, config.pi, config.alpha)
                else:
                    loss, grads = flat_loss_grads(params, X, y, config.pi)
            except FloatingPointError as exc:
                logger.warning("training diverged (%s); falling back to best checkpoint", exc)
                diverged = True
                return
            params = adam_step(params, grads, state, lr)
            running.append(loss)
            batches_seen += 1
            if batches_seen % config.checkpoint_every == 0 or b == n_batches - 1:
                record(batches_seen, lr, float(np.mean(running)))
                running = []

    for n_batches, lr in config.stages:
        run_stage(n_batches, lr)
        if diverged:
            break

    def best_checkpoint():
        return min(checkpoints, key=lambda c: (c.avg_dev, c.index))

    best = best_checkpoint()
    params = _copy_params(best.params)
    set_params(backend, params)

    n_ft, lr_ft = config.finetune
    if not diverged and n_ft > 0:
        run_stage(n_ft, lr_ft)

    best = best_checkpoint()
    set_params(backend, _copy_params(best.params))
    return TrainResult(
        backend=backend,
        log=checkpoints,
        best_avg_dev=best.avg_dev,
        best_index=best.index,
        seed=seed,
        diverged=diverged,
    )


def multi_seed_train(
    make_backend,
    train_set: EmbeddingSet,
    dev_sets: list[tuple[EmbeddingSet, TrialSet]],
    config: TrainConfig,
) -> TrainResult:
    """Run train() once per configured seed and keep the best dev result.

    Ties break toward the lowest seed; duplicate seeds are collapsed.
    """
    seen = set()
    seeds = [s for s in config.seeds if not (s in seen or seen.add(s))]
    results = []
    for seed in seeds:
        results.append(train(make_backend(), train_set, dev_sets, config, seed=seed))
    return min(results, key=lambda r: (r.best_avg_dev, r.seed))


def format_training_log(log: list[Checkpoint]) -> str:
    """TSV rendering: checkpoint, batches_seen, lr, train_loss, dev losses."""
    n_dev = len(log[0].dev_losses) if log else 0
    header = ["checkpoint", "batches_seen", "lr", "train_loss"]
    header += [f"dev_loss_{i + 1}" for i in range(n_dev)]
    header.append("avg_dev_loss")
    lines = ["\t".join(header)]
    for cp in log:
        row = [str(cp.index), str(cp.batches_seen), "%.9g" % cp.lr, "%.9g" % cp.train_loss]
        row += ["%.9g" % v for v in cp.dev_losses]
        row.append("%.9g" % cp.avg_dev)
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"
