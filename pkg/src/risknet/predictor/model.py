"""Multimodal trajectory predictor.

A gated recurrent encoder with graph message passing over per-frame
interaction graphs, temporal attention over the encoded history, and a
per-mode decoder that emits accelerations and process-noise scales,
propagating state and covariance through a constant-Jacobian kinematic
filter step.  The mixture is trained by negative log-likelihood on
positions.

All forward math runs on autodiff tensors so the training gradients and
the gradient checker exercise exactly the production path.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import DegenerateCovariance, NotPSD, ShapeMismatch
from ..scene import AgentState, InteractionGraph
from . import autodiff as ad
from .autodiff import Tensor

D_IN = 7  # position 2, velocity 2, acceleration 2, lateral lane offset 1
STATE_DIM = 4  # x, y, vx, vy
COV_REG = 1e-6  # ridge added to position covariance blocks before inversion

LOG_2PI = math.log(2.0 * math.pi)


# ==================== parameters ====================

@dataclass
class GateBlock:
    """Weights of one gate: feature-path self/neighbor maps, hidden-path
    self/neighbor maps, and a bias."""

    w_self: Tensor  # (d_h, d_in)
    w_nbr: Tensor   # (d_h, d_in)
    u_self: Tensor  # (d_h, d_h)
    u_nbr: Tensor   # (d_h, d_h)
    bias: Tensor    # (d_h,)


@dataclass
class GraphCellParams:
    d_in: int
    d_h: int
    reset: GateBlock
    update: GateBlock
    cand: GateBlock


@dataclass
class ModeHead:
    """Per-mode readout from the attended context: a control output and
    process-noise log-scales."""

    w_u: Tensor  # (2, d_h)
    b_u: Tensor  # (2,)
    w_s: Tensor  # (2, d_h)
    b_s: Tensor  # (2,)


@dataclass
class DecoderParams:
    d_h: int
    modes: int
    horizon: int  # prediction steps
    dt: float  # s
    w_att: Tensor  # (STATE_DIM, d_h) bilinear attention scoring
    heads: List[ModeHead]
    w_pi: Tensor  # (modes, d_h) mode logits from the last hidden
    b_pi: Tensor  # (modes,)

    def __post_init__(self):
        if self.modes < 1 or self.horizon < 1:
            raise ShapeMismatch("decoder needs modes >= 1 and horizon >= 1")
        if len(self.heads) != self.modes:
            raise ShapeMismatch("one head required per mode")


def parameter_items(
    cell: GraphCellParams, dec: DecoderParams
) -> List[Tuple[str, Tensor]]:
    """All trainable tensors in canonical order (also the serialization
    order)."""
    items: List[Tuple[str, Tensor]] = []
    for gate_name in ("reset", "update", "cand"):
        gate: GateBlock = getattr(cell, gate_name)
        for part in ("w_self", "w_nbr", "u_self", "u_nbr", "bias"):
            items.append((f"cell.{gate_name}.{part}", getattr(gate, part)))
    items.append(("dec.w_att", dec.w_att))
    for i, head in enumerate(dec.heads):
        for part in ("w_u", "b_u", "w_s", "b_s"):
            items.append((f"dec.head{i}.{part}", getattr(head, part)))
    items.append(("dec.w_pi", dec.w_pi))
    items.append(("dec.b_pi", dec.b_pi))
    return items


# ==================== encoder ====================

def _zeros(n: int) -> Tensor:
    return Tensor(np.zeros(n))


def _neighbor_mean(vectors: List[Tensor]) -> Optional[Tensor]:
    """Mean over the neighbor set; None stands for the zero vector of the
    empty set (whose contribution through any weight matrix vanishes)."""
    if not vectors:
        return None
    total = vectors[0]
    for v in vectors[1:]:
        total = ad.add(total, v)
    return ad.div(total, float(len(vectors)))


def _gate_preact(gate: GateBlock, psi, psi_bar, h, h_bar):
    kappa = ad.matmul(gate.w_self, psi)
    if psi_bar is not None:
        kappa = ad.add(kappa, ad.matmul(gate.w_nbr, psi_bar))
    xi = ad.matmul(gate.u_self, h)
    if h_bar is not None:
        xi = ad.add(xi, ad.matmul(gate.u_nbr, h_bar))
    return kappa, xi


def cell_step(
    params: GraphCellParams,
    features: Mapping[int, Tensor],
    hiddens: Mapping[int, Tensor],
    graph: InteractionGraph,
    agent_id: int,
) -> Tensor:
    """One recurrent update for one agent.

    Gate pre-activations combine a self term with the mean over graph
    neighbors, on both the feature path and the hidden path; the mean
    over an empty neighbor set is the zero vector.
    """
    if agent_id not in features or agent_id not in hiddens:
        raise ShapeMismatch(f"agent {agent_id} missing from features/hiddens")
    psi = ad.as_tensor(features[agent_id])
    h_prev = ad.as_tensor(hiddens[agent_id])
    if psi.shape != (params.d_in,):
        raise ShapeMismatch(
            f"feature dim {psi.shape} does not match d_in={params.d_in}"
        )
    if h_prev.shape != (params.d_h,):
        raise ShapeMismatch(
            f"hidden dim {h_prev.shape} does not match d_h={params.d_h}"
        )
    nbr_ids = [w for w in graph.neighbors(agent_id) if w in features]
    psi_bar = _neighbor_mean([ad.as_tensor(features[w]) for w in nbr_ids])
    h_bar = _neighbor_mean(
        [ad.as_tensor(hiddens[w]) for w in nbr_ids if w in hiddens]
    )

    k_r, x_r = _gate_preact(params.reset, psi, psi_bar, h_prev, h_bar)
    k_z, x_z = _gate_preact(params.update, psi, psi_bar, h_prev, h_bar)
    k_h, x_h = _gate_preact(params.cand, psi, psi_bar, h_prev, h_bar)

    r = ad.sigmoid(ad.add(ad.add(k_r, x_r), params.reset.bias))
    z = ad.sigmoid(ad.add(ad.add(k_z, x_z), params.update.bias))
    h_tilde = ad.tanh(ad.add(ad.add(k_h, ad.mul(r, x_h)), params.cand.bias))
    one_minus_z = ad.sub(1.0, z)
    return ad.add(ad.mul(one_minus_z, h_tilde), ad.mul(z, h_prev))


HistoryStep = Tuple[Mapping[int, Tensor], InteractionGraph]


def encode(
    params: GraphCellParams, history: Sequence[HistoryStep]
) -> Dict[int, List[Tensor]]:
    """Run the recurrent cell over the history, oldest step first.

    Every agent starts from a zero hidden state, including agents that
    first appear mid-history.  Returns each agent's hidden sequence over
    the steps it was present.
    """
    if not history:
        raise ShapeMismatch("history must contain at least one step")
    hiddens: Dict[int, Tensor] = {}
    sequences: Dict[int, List[Tensor]] = {}
    for features, graph in history:
        step_ids = sorted(features.keys())
        prev = {
            a: hiddens.get(a, _zeros(params.d_h)) for a in step_ids
        }
        for a in step_ids:
            h = cell_step(params, features, prev, graph, a)
            hiddens[a] = h
            sequences.setdefault(a, []).append(h)
    return sequences


# ==================== attention ====================

def _attend_stacked(dec: DecoderParams, H: Tensor, query: Tensor) -> Tensor:
    w = ad.matmul(ad.as_tensor(query), dec.w_att)  # (d_h,)
    scores = ad.mul(ad.matmul(H, w), 1.0 / math.sqrt(dec.d_h))
    weights = ad.softmax(scores)
    return ad.matmul(weights, H)


def _fused_attend(H: Tensor, w_att: Tensor, query: Tensor,
                  scale: float) -> Tensor:
    """Single-node bilinear attention; numerically identical to the
    composed-op form, with a hand-derived backward pass."""
    Hd, Wd, qd = H.data, w_att.data, query.data
    w = qd @ Wd
    scores = (Hd @ w) * scale
    e = np.exp(scores - scores.max())
    a = e / e.sum()
    out = a @ Hd

    def backward(g):
        Hg = Hd @ g
        ds = a * (Hg - float(a @ Hg)) * scale
        if H.requires_grad:
            H._accum(np.outer(a, g) + np.outer(ds, w))
        gw = Hd.T @ ds
        if w_att.requires_grad:
            w_att._accum(np.outer(qd, gw))
        if query.requires_grad:
            query._accum(Wd @ gw)

    return ad._node(out, (H, w_att, query), backward)


def attend(
    dec: DecoderParams, hiddens: Sequence[Tensor], query: Tensor
) -> Tensor:
    """Attention-weighted context over a hidden sequence.

    Scores are a bilinear form between the decoder state (the query) and
    each hidden, scaled by 1/sqrt(d_h); weights are their softmax.
    """
    return _attend_stacked(dec, ad.stack(list(hiddens)), query)


def attention_weights(
    dec: DecoderParams, hiddens: Sequence[Tensor], query: Tensor
) -> np.ndarray:
    """The softmax weights alone, for inspection and tests."""
    with ad.no_grad():
        H = ad.stack(list(hiddens))
        w = ad.matmul(ad.as_tensor(query), dec.w_att)
        scores = ad.mul(ad.matmul(H, w), 1.0 / math.sqrt(dec.d_h))
        return ad.softmax(scores).data.copy()


# ==================== EKF propagation ====================

def kinematic_matrices(dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """Constant Jacobian F of the motion model and control map G."""
    F = np.eye(STATE_DIM)
    F[0, 2] = dt
    F[1, 3] = dt
    G = np.array([
        [0.5 * dt * dt, 0.0],
        [0.0, 0.5 * dt * dt],
        [dt, 0.0],
        [0.0, dt],
    ])
    return F, G


def _check_psd(mat: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(mat)):
        raise NotPSD(f"{name} has non-finite entries")
    if not np.allclose(mat, mat.T, atol=1e-9, rtol=0.0):
        raise NotPSD(f"{name} is not symmetric")
    if np.linalg.eigvalsh(mat).min() < -1e-9:
        raise NotPSD(f"{name} has a negative eigenvalue")


def ekf_propagate(
    state: np.ndarray,
    cov: np.ndarray,
    control: np.ndarray,
    Q: np.ndarray,
    dt: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """One time update of the kinematic filter.

    Positions advance by v*dt + u*dt^2/2, velocities by u*dt; the
    covariance is pushed through the constant Jacobian and inflated by
    the control-mapped process noise.
    """
    state = np.asarray(state, float)
    cov = np.asarray(cov, float)
    control = np.asarray(control, float)
    Q = np.asarray(Q, float)
    if state.shape != (STATE_DIM,) or cov.shape != (STATE_DIM, STATE_DIM):
        raise ShapeMismatch("state must be (4,), covariance (4, 4)")
    if control.shape != (2,) or Q.shape != (2, 2):
        raise ShapeMismatch("control must be (2,), Q (2, 2)")
    _check_psd(cov, "covariance")
    _check_psd(Q, "process noise")
    F, G = kinematic_matrices(dt)
    new_state = F @ state + G @ control
    new_cov = F @ cov @ F.T + G @ Q @ G.T
    return new_state, new_cov


def _ekf_consts(dt: float):
    F, G = kinematic_matrices(dt)
    g0, g1 = G[:, 0], G[:, 1]
    return F, G, np.outer(g0, g0), np.outer(g1, g1)


def _fused_mean_step(x: Tensor, u: Tensor, F: np.ndarray,
                     G: np.ndarray) -> Tensor:
    out = F @ x.data + G @ u.data

    def backward(g):
        if x.requires_grad:
            x._accum(F.T @ g)
        if u.requires_grad:
            u._accum(G.T @ g)

    return ad._node(out, (x, u), backward)


def _fused_cov_step(P: Tensor, q: Tensor, F: np.ndarray, M0: np.ndarray,
                    M1: np.ndarray) -> Tensor:
    """Covariance time update with the control-mapped diagonal process
    noise: F P F^T + q0 M0 + q1 M1, where Mk = outer(G[:,k], G[:,k])."""
    out = F @ P.data @ F.T + q.data[0] * M0 + q.data[1] * M1

    def backward(g):
        if P.requires_grad:
            P._accum(F.T @ g @ F)
        if q.requires_grad:
            q._accum(np.array([(g * M0).sum(), (g * M1).sum()]))

    return ad._node(out, (P, q), backward)


def _ekf_step_t(x: Tensor, P: Tensor, u: Tensor, q: Tensor,
                consts: Tuple) -> Tuple[Tensor, Tensor]:
    """Tensor-path filter step; q holds the two process-noise variances
    (already exponentiated), applied as G diag(q) G^T."""
    F, G, M0, M1 = consts
    return (_fused_mean_step(x, u, F, G),
            _fused_cov_step(P, q, F, M0, M1))


# ==================== decoder ====================

@dataclass
class PredictionMode:
    pi: float
    states: np.ndarray  # (t_f, 4)
    covariances: np.ndarray  # (t_f, 4, 4)


@dataclass
class MixturePrediction:
    """Weighted multimodal forecast for one agent.

    ``anchor`` carries the agent's state at prediction time so downstream
    risk fusion can form finite-difference velocities; predictions made
    directly from decode() leave it unset.
    """

    modes: List[PredictionMode]
    dt: float
    anchor: Optional[AgentState] = None

    @property
    def horizon(self) -> int:
        return self.modes[0].states.shape[0]

    def validate(self) -> None:
        total = sum(m.pi for m in self.modes)
        if abs(total - 1.0) > 1e-9 or any(m.pi < 0 for m in self.modes):
            raise ValueError("mode probabilities must be nonnegative, sum 1")
        for m in self.modes:
            for p in range(m.states.shape[0]):
                cov = m.covariances[p]
                if not np.allclose(cov, cov.T, atol=1e-9, rtol=0.0):
                    raise ValueError("covariance not symmetric")
                if np.linalg.eigvalsh(cov).min() < -1e-9:
                    raise ValueError("covariance not PSD")


def _decode_graph(
    dec: DecoderParams, hidden_seq: Sequence[Tensor], x0: Tensor
) -> Tuple[Tensor, List[List[Tensor]], List[List[Tensor]]]:
    """Roll every mode forward on the tape.

    Returns mode logits, per-mode state tensors, and per-mode covariance
    tensors.  The attention query at each step is the mode's current
    state, so modes diverge through their own rollouts even though the
    scoring weights are shared.
    """
    consts = _ekf_consts(dec.dt)
    H = ad.stack(list(hidden_seq))
    scale = 1.0 / math.sqrt(dec.d_h)
    logits = ad.add(ad.matmul(dec.w_pi, hidden_seq[-1]), dec.b_pi)
    all_states: List[List[Tensor]] = []
    all_covs: List[List[Tensor]] = []
    for head in dec.heads:
        x = ad.as_tensor(x0)
        P = Tensor(np.zeros((STATE_DIM, STATE_DIM)))
        states: List[Tensor] = []
        covs: List[Tensor] = []
        for _ in range(dec.horizon):
            context = _fused_attend(H, dec.w_att, x, scale)
            u = ad.add(ad.matmul(head.w_u, context), head.b_u)
            log_scale = ad.add(ad.matmul(head.w_s, context), head.b_s)
            q = ad.exp(log_scale)
            x, P = _ekf_step_t(x, P, u, q, consts)
            states.append(x)
            covs.append(P)
        all_states.append(states)
        all_covs.append(covs)
    return logits, all_states, all_covs


def decode(
    dec: DecoderParams,
    hiddens: Union[Mapping[int, Sequence[Tensor]], Sequence[Tensor]],
    graph: Optional[InteractionGraph],
    x0: np.ndarray,
) -> MixturePrediction:
    """Decode a mixture forecast from encoded hiddens.

    ``hiddens`` may be the per-agent map produced by encode (the target
    is then selected through ``graph.ego_id``) or one agent's hidden
    sequence directly.
    """
    if isinstance(hiddens, Mapping):
        if graph is None:
            raise ShapeMismatch("graph required to select the target agent")
        seq = hiddens[graph.ego_id]
    else:
        seq = hiddens
    with ad.no_grad():
        logits, states_t, covs_t = _decode_graph(
            dec, [ad.as_tensor(h) for h in seq], ad.as_tensor(np.asarray(x0, float))
        )
        pis = ad.softmax(logits).data
    modes = []
    for l in range(dec.modes):
        states = np.stack([s.data for s in states_t[l]])
        covs = np.stack([c.data for c in covs_t[l]])
        modes.append(PredictionMode(pi=float(pis[l]), states=states,
                                    covariances=covs))
    return MixturePrediction(modes=modes, dt=dec.dt)


# ==================== likelihood ====================

def _step_log_density(
    state: Tensor, cov: Tensor, truth_xy: np.ndarray
) -> Tensor:
    """Log density of the 2-D position Gaussian at one step, with the
    ridge regularizer on the position covariance block.

    Single fused node: the 2x2 system is inverted by adjugate and the
    backward pass applies the closed-form partials in a, b, c, d and the
    position residual.
    """
    a = float(cov.data[0, 0]) + COV_REG
    b = float(cov.data[0, 1])
    c = float(cov.data[1, 0])
    d = float(cov.data[1, 1]) + COV_REG
    det = a * d - b * c
    if not math.isfinite(det) or det <= 0.0:
        raise DegenerateCovariance(f"position covariance determinant {det}")
    dx = float(truth_xy[0]) - float(state.data[0])
    dy = float(truth_xy[1]) - float(state.data[1])
    quad = (d * dx * dx - (b + c) * dx * dy + a * dy * dy) / det
    ll = -LOG_2PI - 0.5 * math.log(det) - 0.5 * quad

    def backward(g):
        inv = 1.0 / det
        if cov.requires_grad:
            dquad_da = (dy * dy - quad * d) * inv
            dquad_db = (-dx * dy + quad * c) * inv
            dquad_dc = (-dx * dy + quad * b) * inv
            dquad_dd = (dx * dx - quad * a) * inv
            gc = np.zeros((STATE_DIM, STATE_DIM))
            gc[0, 0] = -0.5 * (d * inv + dquad_da)
            gc[0, 1] = 0.5 * (c * inv - dquad_db)
            gc[1, 0] = 0.5 * (b * inv - dquad_dc)
            gc[1, 1] = -0.5 * (a * inv + dquad_dd)
            cov._accum(g * gc)
        if state.requires_grad:
            gs = np.zeros(STATE_DIM)
            gs[0] = 0.5 * (2.0 * d * dx - (b + c) * dy) * inv
            gs[1] = 0.5 * (2.0 * a * dy - (b + c) * dx) * inv
            state._accum(g * gs)

    return ad._node(np.asarray(ll), (state, cov), backward)


def _mixture_nll(
    log_pis: Sequence[Tensor],
    mode_states: Sequence[Sequence[Tensor]],
    mode_covs: Sequence[Sequence[Tensor]],
    truth: np.ndarray,
) -> Tensor:
    horizon = len(mode_states[0])
    step_terms = []
    for p in range(horizon):
        per_mode = []
        for l in range(len(mode_states)):
            ll = _step_log_density(mode_states[l][p], mode_covs[l][p],
                                   truth[p])
            per_mode.append(ad.add(log_pis[l], ll))
        step_terms.append(ad.logsumexp(ad.stack(per_mode)))
    total = ad.neg(ad.tsum(ad.stack(step_terms)))
    if not math.isfinite(float(total.data)):
        raise DegenerateCovariance("non-finite mixture likelihood")
    return total


def nll_loss(pred: MixturePrediction, truth: np.ndarray) -> float:
    """Negative log-likelihood of the truth positions under the mixture.

    Sums over steps the negative log of the probability-weighted 2-D
    Gaussian densities on the position block of each mode.
    """
    truth = np.asarray(truth, float)
    if truth.shape != (pred.horizon, 2):
        raise ShapeMismatch(
            f"truth shape {truth.shape} does not match horizon"
        )
    log_pis = [Tensor(np.log(max(m.pi, 1e-300))) for m in pred.modes]
    states = [[Tensor(m.states[p]) for p in range(pred.horizon)]
              for m in pred.modes]
    covs = [[Tensor(m.covariances[p]) for p in range(pred.horizon)]
            for m in pred.modes]
    with ad.no_grad():
        return float(_mixture_nll(log_pis, states, covs, truth).data)


# ==================== prediction metrics ====================

def metrics(pred: MixturePrediction, truth: np.ndarray) -> Dict[str, float]:
    """Displacement and likelihood metrics for one prediction.

    ade/fde are evaluated on the minimum-ADE mode, apde on the
    highest-probability mode, anll is the per-step mixture NLL, and fnll
    averages the per-step NLL of the highest-probability mode alone.
    """
    truth = np.asarray(truth, float)
    horizon = pred.horizon
    per_mode_err = []
    for m in pred.modes:
        err = np.linalg.norm(m.states[:, :2] - truth, axis=1)
        per_mode_err.append(err)
    ades = [float(e.mean()) for e in per_mode_err]
    best = int(np.argmin(ades))
    top = int(np.argmax([m.pi for m in pred.modes]))
    anll = nll_loss(pred, truth) / horizon

    top_mode = pred.modes[top]
    fnll_terms = []
    for p in range(horizon):
        cov = top_mode.covariances[p][:2, :2] + COV_REG * np.eye(2)
        det = float(np.linalg.det(cov))
        if det <= 0 or not math.isfinite(det):
            raise DegenerateCovariance(f"degenerate top-mode covariance: {det}")
        diff = truth[p] - top_mode.states[p, :2]
        quad = float(diff @ np.linalg.solve(cov, diff))
        fnll_terms.append(0.5 * (math.log(det) + quad) + LOG_2PI)
    return {
        "ade": ades[best],
        "fde": float(per_mode_err[best][-1]),
        "apde": float(per_mode_err[top].mean()),
        "anll": anll,
        "fnll": float(np.mean(fnll_terms)),
    }
