"""Sequence-similarity estimators over clip features.

Three families:

  * learned sequential aggregation: visit all clip pairs in a fixed order,
    score each elementwise-product vector with the scoring net, and fold it
    into a running weighted average; similarity is the sum of the final
    aggregate's entries, which equals the score-weighted mean of the
    clip-pair cosines when inputs are unit vectors
  * mean pooling with or without per-clip normalization
  * top-t percent: average the largest cosines among projected clip pairs

The learned estimator's training path processes a whole batch of sequence
pairs step-locked (every pair advances to step t together) so the scoring
net's batch-norm sees all pairs at the same step as one batch, and returns
exact gradients by unrolling the recurrence backward.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .numerics import cosine, l2_normalize

NORMALIZATION_TOL = 1e-6


def pair_order(m_query: int, m_gallery: int) -> list:
    """Canonical visiting order: query clip outer, gallery clip inner."""
    return [(a, b) for a in range(m_query) for b in range(m_gallery)]


def _as_clip_matrix(feats, who: str) -> np.ndarray:
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] < 1:
        raise InvalidArgumentError(f"{who}: expected (M, D) clip features, got {feats.shape}")
    if not np.all(np.isfinite(feats)):
        raise InvalidArgumentError(f"{who}: non-finite clip features")
    return feats


def _check_normalized(feats: np.ndarray, who: str) -> None:
    norms = np.linalg.norm(feats, axis=1)
    worst = np.max(np.abs(norms - 1.0))
    if worst > NORMALIZATION_TOL:
        raise InvalidArgumentError(
            f"{who}: clip features must be unit length, worst deviation {worst:.3e}"
        )


@dataclass
class AggregationTrace:
    """Everything one learned-aggregation run produced, for inspection."""

    pair_order: list
    alphas: np.ndarray
    cosines: np.ndarray
    r: np.ndarray
    total_mass: float
    similarity: float


def aggregate_learned(query_feats, gallery_feats, net, check_normalized=True) -> AggregationTrace:
    """Learned aggregation of one sequence pair; the net runs in eval mode.

    Step t uses the difference between the running aggregate and the pair's
    elementwise product as the scorer input; the first pair initializes the
    aggregate directly.
    """
    q = _as_clip_matrix(query_feats, "query")
    g = _as_clip_matrix(gallery_feats, "gallery")
    if q.shape[1] != g.shape[1]:
        raise InvalidArgumentError(f"feature dims differ: {q.shape[1]} vs {g.shape[1]}")
    if check_normalized:
        _check_normalized(q, "query")
        _check_normalized(g, "gallery")
    if net.mode != "eval":
        raise InvalidArgumentError("single-pair aggregation requires the net in eval mode")

    order = pair_order(q.shape[0], g.shape[0])
    d = q.shape[1]
    r = np.zeros(d)
    mass = 0.0
    alphas = np.empty(len(order))
    cosines = np.empty(len(order))
    for t, (a, b) in enumerate(order):
        c = q[a] * g[b]
        cosines[t] = c.sum()
        alpha, _ = net.forward((r - c)[None, :])
        alpha = float(alpha[0])
        alphas[t] = alpha
        if t == 0:
            r = c.copy()
            mass = alpha
        else:
            new_mass = mass + alpha
            r = (mass * r + alpha * c) / new_mass
            mass = new_mass
    return AggregationTrace(
        pair_order=order,
        alphas=alphas,
        cosines=cosines,
        r=r,
        total_mass=mass,
        similarity=float(r.sum()),
    )


def similarity_weighted_mean(cosines, alphas) -> float:
    """Weighted mean of clip-pair cosines: sum(a*s) / sum(a)."""
    cosines = np.asarray(cosines, dtype=np.float64)
    alphas = np.asarray(alphas, dtype=np.float64)
    if cosines.ndim != 1 or alphas.shape != cosines.shape or cosines.size == 0:
        raise InvalidArgumentError("cosines and alphas must be equal-length non-empty vectors")
    if np.any(alphas <= 0):
        raise InvalidArgumentError("importance scores must be positive")
    return float(np.sum(alphas * cosines) / np.sum(alphas))


def aggregate_mean(feats, normalize: bool) -> np.ndarray:
    """Sequence embedding: mean of clips, each optionally unit-normalized."""
    feats = _as_clip_matrix(feats, "sequence")
    if normalize:
        feats = np.stack([l2_normalize(f) for f in feats])
    return feats.mean(axis=0)


def mean_similarity(query_feats, gallery_feats, normalize: bool) -> float:
    return cosine(aggregate_mean(query_feats, normalize), aggregate_mean(gallery_feats, normalize))


# ---------------------------------------------------------------------------
# top-t percent baseline


class ProjectionLayer:
    """Affine map on clip features, shared by query and gallery sides.

    Starts at the identity so an untrained baseline reproduces plain cosine
    scores; training moves it from there.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise InvalidArgumentError("dim must be >= 1")
        self.dim = dim
        self.params = {"w": np.eye(dim), "b": np.zeros(dim)}

    def apply(self, feats: np.ndarray) -> np.ndarray:
        return feats @ self.params["w"] + self.params["b"]

    def zero_like_params(self):
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def save(self, path, extra=None):
        from . import checkpoint

        meta = {"kind": "projection", "dim": self.dim, "extra": extra or {}}
        checkpoint.write_tensors(path, self.params, meta)

    @classmethod
    def load(cls, path):
        from . import checkpoint
        from .errors import ManifestError

        tensors, meta = checkpoint.read_tensors(path)
        if meta.get("kind") != "projection":
            raise ManifestError(f"{path}: checkpoint kind {meta.get('kind')!r}, expected projection")
        proj = cls(int(meta["dim"]))
        for k in proj.params:
            if k not in tensors or tensors[k].shape != proj.params[k].shape:
                raise ManifestError(f"{path}: tensor {k} missing or mis-shaped")
            proj.params[k] = tensors[k]
        return proj


def top_t_pair_count(t_percent: float, num_pairs: int) -> int:
    """How many highest-cosine pairs survive selection at t percent."""
    if not 0.0 < t_percent <= 100.0:
        raise InvalidArgumentError(f"t={t_percent} outside (0, 100]")
    return max(1, int(np.ceil(t_percent / 100.0 * num_pairs)))


@dataclass
class TopTTape:
    order: list
    selected: np.ndarray  # indices into the pair order
    cosines: np.ndarray
    uq: np.ndarray  # projected query clips
    ug: np.ndarray  # projected gallery clips
    q: np.ndarray
    g: np.ndarray


def top_t_forward(query_feats, gallery_feats, proj: ProjectionLayer, t_percent: float):
    """Similarity plus the tape needed for exact gradients.

    Selection keeps the k largest cosines; equal values are broken in favor
    of the earlier pair in canonical order, so the selected index set is
    deterministic.
    """
    q = _as_clip_matrix(query_feats, "query")
    g = _as_clip_matrix(gallery_feats, "gallery")
    order = pair_order(q.shape[0], g.shape[0])
    k = top_t_pair_count(t_percent, len(order))

    uq = proj.apply(q)
    ug = proj.apply(g)
    cos = np.empty(len(order))
    for idx, (a, b) in enumerate(order):
        cos[idx] = cosine(uq[a], ug[b])
    # stable sort on descending value keeps earlier pairs first among ties
    selected = np.argsort(-cos, kind="stable")[:k]
    sim = float(cos[selected].mean())
    tape = TopTTape(order=order, selected=selected, cosines=cos, uq=uq, ug=ug, q=q, g=g)
    return sim, tape


def top_t_backward(proj: ProjectionLayer, tape: TopTTape, dsim: float):
    """Gradients of dsim * similarity w.r.t. the projection parameters.

    Only the selected pairs carry gradient; the selection itself is treated
    as constant, which is the exact subgradient almost everywhere.
    """
    k = len(tape.selected)
    duq = np.zeros_like(tape.uq)
    dug = np.zeros_like(tape.ug)
    for idx in tape.selected:
        a, b = tape.order[idx]
        u, v = tape.uq[a], tape.ug[b]
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        uhat, vhat = u / nu, v / nv
        c = tape.cosines[idx]
        coef = dsim / k
        duq[a] += coef * (vhat - c * uhat) / nu
        dug[b] += coef * (uhat - c * vhat) / nv
    grads = {
        "w": tape.q.T @ duq + tape.g.T @ dug,
        "b": duq.sum(axis=0) + dug.sum(axis=0),
    }
    return grads


def top_t_similarity(query_feats, gallery_feats, proj: ProjectionLayer, t_percent: float) -> float:
    sim, _ = top_t_forward(query_feats, gallery_feats, proj, t_percent)
    return sim


@dataclass
class TopTBatchTape:
    pair_list: list
    k: int
    u: np.ndarray  # projected clips (N, M, D)
    uhat: np.ndarray
    norms: np.ndarray  # (N, M)
    feats: np.ndarray
    selected: list  # per pair: flat indices into the M*M cosine grid
    cosines: list  # per pair: flat cosine vector


def top_t_batch_forward(feats, proj: ProjectionLayer, pair_list, t_percent: float):
    """Top-t similarities for many (i, j) tracklet pairs at once.

    feats is an (N, M, D) stack; pair_list holds index pairs into it. Each
    tracklet is projected once and reused across pairs. Selection semantics
    match top_t_forward: k largest cosines, earlier canonical pair on ties.
    """
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 3:
        raise InvalidArgumentError(f"expected (N, M, D) stack, got {feats.shape}")
    n, m, d = feats.shape
    k = top_t_pair_count(t_percent, m * m)

    u = feats @ proj.params["w"] + proj.params["b"]
    norms = np.linalg.norm(u, axis=2)
    if np.any(norms < 1e-12):
        raise InvalidArgumentError("projection collapsed a clip to the zero vector")
    uhat = u / norms[:, :, None]

    sims = np.empty(len(pair_list))
    selected, cos_store = [], []
    for idx, (i, j) in enumerate(pair_list):
        cos = (uhat[i] @ uhat[j].T).reshape(-1)  # row-major = canonical order
        sel = np.argsort(-cos, kind="stable")[:k]
        sims[idx] = cos[sel].mean()
        selected.append(sel)
        cos_store.append(cos)
    tape = TopTBatchTape(
        pair_list=list(pair_list), k=k, u=u, uhat=uhat, norms=norms,
        feats=feats, selected=selected, cosines=cos_store,
    )
    return sims, tape


def top_t_batch_backward(proj: ProjectionLayer, tape: TopTBatchTape, dsims):
    """Projection gradients for sum(dsims * sims) from the batched forward."""
    dsims = np.asarray(dsims, dtype=np.float64)
    if dsims.shape != (len(tape.pair_list),):
        raise InvalidArgumentError("dsims length must match the pair list")
    n, m, d = tape.u.shape
    duhat = np.zeros_like(tape.uhat)
    for idx, (i, j) in enumerate(tape.pair_list):
        coef = dsims[idx] / tape.k
        for flat in tape.selected[idx]:
            a, b = divmod(int(flat), m)
            duhat[i, a] += coef * tape.uhat[j, b]
            duhat[j, b] += coef * tape.uhat[i, a]
    # through the per-clip normalization: du = (duhat - uhat (uhat . duhat)) / |u|
    inner = (duhat * tape.uhat).sum(axis=2, keepdims=True)
    du = (duhat - tape.uhat * inner) / tape.norms[:, :, None]
    flat_f = tape.feats.reshape(-1, d)
    flat_du = du.reshape(-1, d)
    return {"w": flat_f.T @ flat_du, "b": flat_du.sum(axis=0)}


# ---------------------------------------------------------------------------
# similarity matrices


def pairwise_similarity_matrix(queries, galleries, estimator) -> np.ndarray:
    """Apply a two-argument estimator to every (query, gallery) combination."""
    if len(queries) == 0 or len(galleries) == 0:
        raise InvalidArgumentError("need at least one query and one gallery sequence")
    out = np.empty((len(queries), len(galleries)))
    for i, qf in enumerate(queries):
        for j, gf in enumerate(galleries):
            try:
                out[i, j] = estimator(qf, gf)
            except Exception as e:
                raise type(e)(f"estimator failed at query {i}, gallery {j}: {e}") from e
    return out


def _uniform_stack(seqs, who: str) -> np.ndarray:
    mats = [_as_clip_matrix(f, who) for f in seqs]
    m = mats[0].shape
    if any(x.shape != m for x in mats):
        raise InvalidArgumentError(f"{who}: batched path needs uniform clip counts and dims")
    return np.stack(mats)


def learned_similarity_matrix(queries, galleries, net, check_normalized=True, return_alphas=False):
    """Eval-mode learned similarity for all pairs, step-locked over pairs.

    Equivalent to calling aggregate_learned per cell, but each recurrence
    step runs the scoring net once over every (query, gallery) combination.
    With return_alphas the per-step importance scores come back as an
    (nq, ng, M_q*M_g) array alongside the similarity matrix.
    """
    if net.mode != "eval":
        raise InvalidArgumentError("similarity matrices are an eval-mode operation")
    qs = _uniform_stack(queries, "query")
    gs = _uniform_stack(galleries, "gallery")
    if qs.shape[2] != gs.shape[2]:
        raise InvalidArgumentError(f"feature dims differ: {qs.shape[2]} vs {gs.shape[2]}")
    if check_normalized:
        _check_normalized(qs.reshape(-1, qs.shape[2]), "query")
        _check_normalized(gs.reshape(-1, gs.shape[2]), "gallery")

    nq, mq, d = qs.shape
    ng, mg, _ = gs.shape
    n_pairs = nq * ng
    order = pair_order(mq, mg)
    r = np.zeros((n_pairs, d))
    mass = np.zeros(n_pairs)
    alpha_steps = np.empty((len(order), n_pairs)) if return_alphas else None
    for t, (a, b) in enumerate(order):
        c = (qs[:, a, :][:, None, :] * gs[:, b, :][None, :, :]).reshape(n_pairs, d)
        alphas, _ = net.forward(r - c)
        if return_alphas:
            alpha_steps[t] = alphas
        if t == 0:
            r = c.copy()
            mass = alphas.copy()
        else:
            new_mass = mass + alphas
            r = (mass[:, None] * r + alphas[:, None] * c) / new_mass[:, None]
            mass = new_mass
    sims = r.sum(axis=1).reshape(nq, ng)
    if return_alphas:
        return sims, alpha_steps.T.reshape(nq, ng, len(order))
    return sims


def mean_similarity_matrix(queries, galleries, normalize: bool) -> np.ndarray:
    qe = np.stack([aggregate_mean(f, normalize) for f in queries])
    ge = np.stack([aggregate_mean(f, normalize) for f in galleries])
    qn = np.linalg.norm(qe, axis=1, keepdims=True)
    gn = np.linalg.norm(ge, axis=1, keepdims=True)
    if np.any(qn < 1e-12) or np.any(gn < 1e-12):
        raise InvalidArgumentError("zero-norm sequence embedding")
    return np.clip((qe / qn) @ (ge / gn).T, -1.0, 1.0)


def top_t_similarity_matrix(queries, galleries, proj: ProjectionLayer, t_percent: float) -> np.ndarray:
    """Top-t similarity for all pairs via one projection of each side.

    The mean of the k largest values does not depend on which tied pair is
    chosen, so this sorts values only; the per-pair tape path is the one
    that defines tie order for gradients.
    """
    qs = _uniform_stack(queries, "query")
    gs = _uniform_stack(galleries, "gallery")
    nq, mq, d = qs.shape
    ng, mg, _ = gs.shape
    k = top_t_pair_count(t_percent, mq * mg)

    uq = qs.reshape(-1, d) @ proj.params["w"] + proj.params["b"]
    ug = gs.reshape(-1, d) @ proj.params["w"] + proj.params["b"]
    uq = uq / np.linalg.norm(uq, axis=1, keepdims=True)
    ug = ug / np.linalg.norm(ug, axis=1, keepdims=True)
    cos = np.clip(uq @ ug.T, -1.0, 1.0)  # (nq*mq, ng*mg)
    cos = cos.reshape(nq, mq, ng, mg).transpose(0, 2, 1, 3).reshape(nq, ng, mq * mg)
    top = np.sort(cos, axis=2)[:, :, mq * mg - k :]
    return top.mean(axis=2)


# ---------------------------------------------------------------------------
# training path for the learned estimator


@dataclass
class BatchAggregationTape:
    pair_order: list
    step_tapes: list
    alphas: np.ndarray  # (T, B)
    masses: np.ndarray  # (T+1, B), masses[0] = 0
    r_hist: np.ndarray  # (T+1, B, D), r_hist[0] = 0
    c_hist: np.ndarray  # (T, B, D)
    similarities: np.ndarray  # (B,)


def aggregate_learned_train_forward(
    q_batch, g_batch, net, dropout_seed: int, update_running=True, check_normalized=True
):
    """Train-mode learned aggregation over a batch of sequence pairs.

    q_batch and g_batch are (B, M, D) stacks; entry i of each forms one
    sequence pair. All pairs advance through the recurrence together so the
    scoring net's batch-norm batch at step t is the B difference vectors of
    that step. Dropout masks are derived from (dropout_seed, step).
    """
    qs = np.asarray(q_batch, dtype=np.float64)
    gs = np.asarray(g_batch, dtype=np.float64)
    if qs.ndim != 3 or gs.ndim != 3 or qs.shape[0] != gs.shape[0] or qs.shape[2] != gs.shape[2]:
        raise InvalidArgumentError(f"expected matching (B, M, D) stacks, got {qs.shape} and {gs.shape}")
    if net.mode != "train":
        raise InvalidArgumentError("training forward requires the net in train mode")
    if check_normalized:
        _check_normalized(qs.reshape(-1, qs.shape[2]), "query")
        _check_normalized(gs.reshape(-1, gs.shape[2]), "gallery")

    b, mq, d = qs.shape
    mg = gs.shape[1]
    order = pair_order(mq, mg)
    t_total = len(order)

    alphas = np.empty((t_total, b))
    masses = np.zeros((t_total + 1, b))
    r_hist = np.zeros((t_total + 1, b, d))
    c_hist = np.empty((t_total, b, d))
    step_tapes = []

    for t, (a, bb) in enumerate(order):
        c = qs[:, a, :] * gs[:, bb, :]
        c_hist[t] = c
        x = r_hist[t] - c
        rng = np.random.default_rng(np.random.SeedSequence([int(dropout_seed), t]))
        alpha, tape = net.forward(x, rng=rng, update_running=update_running)
        step_tapes.append(tape)
        alphas[t] = alpha
        if t == 0:
            r_hist[1] = c
            masses[1] = alpha
        else:
            masses[t + 1] = masses[t] + alpha
            r_hist[t + 1] = (masses[t][:, None] * r_hist[t] + alpha[:, None] * c) / masses[t + 1][
                :, None
            ]

    sims = r_hist[t_total].sum(axis=1)
    tape = BatchAggregationTape(
        pair_order=order,
        step_tapes=step_tapes,
        alphas=alphas,
        masses=masses,
        r_hist=r_hist,
        c_hist=c_hist,
        similarities=sims,
    )
    return sims, tape


def aggregate_learned_train_backward(net, tape: BatchAggregationTape, dsims):
    """Exact scoring-net gradients of sum(dsims * similarities).

    Unrolls the recurrence backward; at every step the whole pair batch is
    pushed through the net's backward at once so batch-norm coupling between
    pairs is accounted for.
    """
    dsims = np.asarray(dsims, dtype=np.float64)
    t_total, b = tape.alphas.shape
    if dsims.shape != (b,):
        raise InvalidArgumentError(f"dsims must have shape ({b},), got {dsims.shape}")

    grads = net.zero_like_params()
    dr = np.repeat(dsims[:, None], tape.r_hist.shape[2], axis=1)
    da_mass = np.zeros(b)

    for t in range(t_total - 1, 0, -1):
        r_now = tape.r_hist[t + 1]
        r_prev = tape.r_hist[t]
        c = tape.c_hist[t]
        mass_now = tape.masses[t + 1]
        mass_prev = tape.masses[t]
        alpha = tape.alphas[t]

        dalpha = ((c - r_now) / mass_now[:, None] * dr).sum(axis=1) + da_mass
        da_prev = ((r_prev - r_now) / mass_now[:, None] * dr).sum(axis=1) + da_mass
        dc = dr * (alpha / mass_now)[:, None]
        dr_prev = dr * (mass_prev / mass_now)[:, None]

        pgrads, dx = net.backward(tape.step_tapes[t], dalpha)
        for k in grads:
            grads[k] += pgrads[k]
        dr_prev += dx  # x_t = r_{t-1} - c_t
        dc -= dx
        del dc  # clip features are fixed inputs; their gradient is unused

        dr, da_mass = dr_prev, da_prev

    # first step: r_1 = c_1 exactly, mass_1 = alpha_1
    dalpha1 = da_mass
    pgrads, _ = net.backward(tape.step_tapes[0], dalpha1)
    for k in grads:
        grads[k] += pgrads[k]
    return grads
