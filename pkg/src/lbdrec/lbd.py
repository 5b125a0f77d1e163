"""Learned beta distributions for rating prediction.

A user and an item embedding give a mean (through cosine similarity) and a
confidence (through a positive function of the pair).  Those become beta
shape parameters, optionally shifted by bias terms, and the beta CDF is
integrated over rating bins to give a discrete rating distribution.  The
model is trained by minimizing the negative log-likelihood of observed
ratings; gradients are analytic all the way down to the embeddings.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .base import RatingModel, init_embeddings, nll_from_probs, scatter_rows
from .distribution import DiscreteRatingDistribution, normalize_rows
from .specfun import (
    BetaShape, DomainError, betainc_fast, betainc_with_grad, cdf_to_masses, _check_shapes,
    _check_unit,
)

CONFIDENCE_FNS = ("norm", "sum", "dot")
BIAS_SCHEMES = ("none", "alpha_beta", "mu_nu")
BINNINGS = ("static", "adaptive")

# Interior adaptive edges are kept this far from 0 and 1 so the CDF
# derivatives stay finite even for degenerate softmax widths.
EDGE_MARGIN = 1e-12


@dataclass(frozen=True)
class LbdConfig:
    embedding_dim: int = 512
    confidence_fn: str = "sum"
    bias_scheme: str = "alpha_beta"
    binning: str = "static"
    epsilon: float = 1e-8
    mu_clamp: float = 1e-6
    separate_embeddings: bool = False

    def __post_init__(self):
        if self.embedding_dim < 1:
            raise ValueError("embedding_dim must be positive")
        if self.confidence_fn not in CONFIDENCE_FNS:
            raise ValueError(f"confidence_fn must be one of {CONFIDENCE_FNS}")
        if self.bias_scheme not in BIAS_SCHEMES:
            raise ValueError(f"bias_scheme must be one of {BIAS_SCHEMES}")
        if self.binning not in BINNINGS:
            raise ValueError(f"binning must be one of {BINNINGS}")
        for name in ("epsilon", "mu_clamp"):
            v = getattr(self, name)
            if not 0 < v <= 1e-2:
                raise ValueError(f"{name} must lie in (0, 1e-2]")
        if self.separate_embeddings and self.embedding_dim % 2:
            raise ValueError("separate embeddings need an even embedding_dim")


# ---------------------------------------------------------------------------
# Elementary maps.  These accept scalars or broadcastable arrays.
# ---------------------------------------------------------------------------

def predict_mu(u_vec, v_vec, mu_clamp=1e-6):
    """``1/2 + cos(u, v)/2`` clamped to ``[mu_clamp, 1 - mu_clamp]``."""
    u_vec = np.asarray(u_vec, dtype=float)
    v_vec = np.asarray(v_vec, dtype=float)
    nu = np.linalg.norm(u_vec, axis=-1)
    nv = np.linalg.norm(v_vec, axis=-1)
    if np.any(nu == 0) or np.any(nv == 0):
        raise DomainError("embeddings must be non-zero")
    cos = np.sum(u_vec * v_vec, axis=-1) / (nu * nv)
    return np.clip(0.5 + 0.5 * cos, mu_clamp, 1.0 - mu_clamp)


def predict_nu(u_vec, v_vec, fn="sum", epsilon=1e-8):
    u_vec = np.asarray(u_vec, dtype=float)
    v_vec = np.asarray(v_vec, dtype=float)
    if fn == "norm":
        raw = np.linalg.norm(u_vec, axis=-1) * np.linalg.norm(v_vec, axis=-1)
    elif fn == "sum":
        raw = np.linalg.norm(u_vec + v_vec, axis=-1)
    elif fn == "dot":
        raw = np.abs(np.sum(u_vec * v_vec, axis=-1))
    else:
        raise ValueError(f"unknown confidence function {fn!r}")
    return np.maximum(raw, epsilon)


def reparameterize(mu, nu):
    """Mean/confidence to beta shapes: ``(mu * nu, (1 - mu) * nu)``."""
    return mu * nu, (1.0 - mu) * nu


def apply_alpha_beta_bias(alpha, beta, a0, a_i, a_j, b0, b_i, b_j, epsilon=1e-8):
    return (np.maximum(a0 + a_i + a_j + alpha, epsilon),
            np.maximum(b0 + b_i + b_j + beta, epsilon))


def _mu_pivot(mu, p):
    """Piecewise-linear map sending 0 -> 0, p -> 1/2, 1 -> 1."""
    return np.where(mu < p, mu / (2.0 * p), 0.5 + (mu - p) / (2.0 * (1.0 - p)))


def apply_mu_nu_bias(mu, nu, u0, u_i, u_j, v0, v_i, v_j, mu_clamp=1e-6):
    p = u0 * u_i * u_j
    mu2 = np.clip(_mu_pivot(mu, p), mu_clamp, 1.0 - mu_clamp)
    return mu2, v0 * v_i * v_j * nu


def static_edges(n):
    """Edges of ``n`` equal bins, accumulated exactly like adaptive widths."""
    e = np.concatenate([[0.0], np.cumsum(np.full(n, 1.0 / n))])
    e[-1] = 1.0
    return e


def bin_edges(n, theta_i=None, theta_j=None):
    """Length ``n + 1`` bin edges on ``[0, 1]``; softmax widths when thetas are given."""
    if theta_i is None and theta_j is None:
        return static_edges(n)
    if theta_i is None or theta_j is None:
        raise ValueError("adaptive binning needs both user and item thetas")
    z = np.asarray(theta_i, dtype=float) + np.asarray(theta_j, dtype=float)
    w = np.exp(z - z.max(axis=-1, keepdims=True))
    w = w / w.sum(axis=-1, keepdims=True)
    e = np.concatenate([np.zeros(w.shape[:-1] + (1,)), np.cumsum(w, axis=-1)], axis=-1)
    e[..., -1] = 1.0
    return e


def rating_distribution(alpha, beta, edges, scale=None):
    """Bin probabilities ``I(e[r+1]) - I(e[r])``.

    With scalar shapes and one edge vector a :class:`DiscreteRatingDistribution`
    is returned when ``scale`` is given; otherwise a probability array.
    """
    edges = np.asarray(edges, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    alpha, beta = _check_shapes(alpha, beta)
    edges = _check_unit(edges)
    if np.any(np.diff(edges, axis=-1) < 0):
        raise ValueError("bin edges must be non-decreasing")
    probs = _binned(edges[..., 1:-1], alpha, beta)
    if scale is not None and probs.ndim == 1:
        return DiscreteRatingDistribution(probs, scale)
    return probs


def _binned(inner, alpha, beta):
    cdf, comp = betainc_fast(inner, alpha[..., None], beta[..., None])
    pad = np.zeros(cdf.shape[:-1] + (1,))
    cdf = np.concatenate([pad, cdf, pad + 1.0], axis=-1)
    comp = np.concatenate([pad + 1.0, comp, pad], axis=-1)
    return normalize_rows(cdf_to_masses(cdf, comp))


# ---------------------------------------------------------------------------

def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _logit(p):
    return np.log(p) - np.log1p(-p)


class LbdModel(RatingModel):
    """Learned beta distribution model (LBD-S / LBD-A)."""

    kind = "lbd"

    def __init__(self, num_users, num_items, scale, config=None, seed=0):
        super().__init__(num_users, num_items, scale)
        self.config = config or LbdConfig()
        cfg = self.config
        self.kind = "lbd-a" if cfg.binning == "adaptive" else "lbd-s"
        D = cfg.embedding_dim
        rng = np.random.default_rng(seed)
        p = self.params
        p["U"] = init_embeddings(rng, self.num_users, D, 1.0 / np.sqrt(D))
        p["V"] = init_embeddings(rng, self.num_items, D, 1.0 / np.sqrt(D))
        if cfg.bias_scheme == "alpha_beta":
            for s in ("a", "b"):
                p[f"{s}0"] = np.zeros(())
                p[f"{s}_user"] = np.zeros(self.num_users)
                p[f"{s}_item"] = np.zeros(self.num_items)
        elif cfg.bias_scheme == "mu_nu":
            # mean pivot u0*u_i*u_j starts at 1/2, i.e. the identity map
            start = _logit(0.5 ** (1.0 / 3.0))
            p["u0_logit"] = np.full((), start)
            p["u_user_logit"] = np.full(self.num_users, start)
            p["u_item_logit"] = np.full(self.num_items, start)
            p["v0_log"] = np.zeros(())
            p["v_user_log"] = np.zeros(self.num_users)
            p["v_item_log"] = np.zeros(self.num_items)
        if cfg.binning == "adaptive":
            p["theta_user"] = np.zeros((self.num_users, scale.n))
            p["theta_item"] = np.zeros((self.num_items, scale.n))

    def config_dict(self):
        return asdict(self.config)

    # -- pipeline ----------------------------------------------------------
    def _split(self, Ui, Vj):
        if self.config.separate_embeddings:
            h = self.config.embedding_dim // 2
            return Ui[:, :h], Vj[:, :h], Ui[:, h:], Vj[:, h:]
        return Ui, Vj, Ui, Vj

    def _forward(self, users, items):
        """Shapes, edges and every intermediate the backward pass needs."""
        cfg, p = self.config, self.params
        c, eps = cfg.mu_clamp, cfg.epsilon
        Ui, Vj = p["U"][users], p["V"][items]
        Pu, Pv, Cu, Cv = self._split(Ui, Vj)
        f = {"Ui": Ui, "Vj": Vj, "Pu": Pu, "Pv": Pv, "Cu": Cu, "Cv": Cv}

        nu_u = np.linalg.norm(Pu, axis=1)
        nu_v = np.linalg.norm(Pv, axis=1)
        if np.any(nu_u == 0) or np.any(nu_v == 0):
            raise DomainError("embeddings must be non-zero")
        dot = np.einsum("ij,ij->i", Pu, Pv)
        cos = dot / (nu_u * nu_v)
        mu_raw = 0.5 + 0.5 * cos
        mu = np.clip(mu_raw, c, 1.0 - c)
        f.update(nu_u=nu_u, nu_v=nu_v, cos=cos, mu=mu,
                 mu_free=(mu_raw > c) & (mu_raw < 1.0 - c))

        fn = cfg.confidence_fn
        if fn == "norm":
            cu_n, cv_n = np.linalg.norm(Cu, axis=1), np.linalg.norm(Cv, axis=1)
            conf_raw = cu_n * cv_n
            f.update(cu_n=cu_n, cv_n=cv_n)
        elif fn == "sum":
            s = Cu + Cv
            conf_raw = np.linalg.norm(s, axis=1)
            f["s"] = s
        else:
            cdot = np.einsum("ij,ij->i", Cu, Cv)
            conf_raw = np.abs(cdot)
            f["cdot"] = cdot
        nu = np.maximum(conf_raw, eps)
        f.update(conf_raw=conf_raw, nu=nu, nu_free=conf_raw > eps)

        scheme = cfg.bias_scheme
        if scheme == "none":
            alpha, beta = reparameterize(mu, nu)
        elif scheme == "alpha_beta":
            a_raw = p["a0"] + p["a_user"][users] + p["a_item"][items] + mu * nu
            b_raw = p["b0"] + p["b_user"][users] + p["b_item"][items] + (1.0 - mu) * nu
            alpha, beta = np.maximum(a_raw, eps), np.maximum(b_raw, eps)
            f.update(a_free=a_raw > eps, b_free=b_raw > eps)
        else:
            su0 = _sigmoid(p["u0_logit"])
            sui = _sigmoid(p["u_user_logit"][users])
            suj = _sigmoid(p["u_item_logit"][items])
            piv = su0 * sui * suj
            vscale = np.exp(p["v0_log"] + p["v_user_log"][users] + p["v_item_log"][items])
            mu2_raw = _mu_pivot(mu, piv)
            mu2 = np.clip(mu2_raw, c, 1.0 - c)
            nu2 = vscale * nu
            alpha, beta = reparameterize(mu2, nu2)
            f.update(su=(su0, sui, suj), piv=piv, vscale=vscale, mu2=mu2, nu2=nu2,
                     mu2_free=(mu2_raw > c) & (mu2_raw < 1.0 - c))
        f["alpha"], f["beta"] = alpha, beta

        n = self.scale.n
        if cfg.binning == "adaptive":
            z = p["theta_user"][users] + p["theta_item"][items]
            w = np.exp(z - z.max(axis=1, keepdims=True))
            w /= w.sum(axis=1, keepdims=True)
            inner_raw = np.cumsum(w, axis=1)[:, :-1]
            inner = np.clip(inner_raw, EDGE_MARGIN, 1.0 - EDGE_MARGIN)
            f.update(W=w, edge_free=inner == inner_raw)
        else:
            inner = np.broadcast_to(static_edges(n)[1:-1], (len(users), n - 1))
        f["inner"] = inner
        return f

    def shape(self, user, item):
        f = self._forward(np.array([user]), np.array([item]))
        return BetaShape(float(f["alpha"][0]), float(f["beta"][0]))

    def edges(self, users, items):
        inner = self._forward(np.asarray(users), np.asarray(items))["inner"]
        m = inner.shape[0]
        return np.concatenate([np.zeros((m, 1)), inner, np.ones((m, 1))], axis=1)

    def distribution(self, users, items):
        users, items = np.asarray(users), np.asarray(items)
        f = self._forward(users, items)
        return _binned(f["inner"], f["alpha"], f["beta"])

    def forward(self, user, item):
        return DiscreteRatingDistribution(self.distribution([user], [item])[0], self.scale)

    # -- objective -----------------------------------------------------------
    def loss_and_grad(self, users, items, ratings):
        users = np.asarray(users)
        items = np.asarray(items)
        ratings = np.asarray(ratings)
        if len(users) == 0:
            raise ValueError("empty batch")
        cfg, p = self.config, self.params
        n = self.scale.n
        m = len(users)
        f = self._forward(users, items)
        alpha, beta, inner = f["alpha"], f["beta"], f["inner"]
        rows = np.arange(m)

        # CDF at the lower and upper edge of each observed rating's bin
        has_lo = ratings > 0
        has_hi = ratings < n - 1
        lo_rows, hi_rows = rows[has_lo], rows[has_hi]
        xs = np.concatenate([inner[lo_rows, ratings[has_lo] - 1],
                             inner[hi_rows, ratings[has_hi]]])
        ab_rows = np.concatenate([lo_rows, hi_rows])
        val, comp, dx, da, db = betainc_with_grad(xs, alpha[ab_rows], beta[ab_rows])
        k = len(lo_rows)
        I_lo, Q_lo = np.zeros(m), np.ones(m)
        I_hi, Q_hi = np.ones(m), np.zeros(m)
        I_lo[lo_rows], I_hi[hi_rows] = val[:k], val[k:]
        Q_lo[lo_rows], Q_hi[hi_rows] = comp[:k], comp[k:]
        prob = np.where(I_lo > 0.5, Q_lo - Q_hi, I_hi - I_lo)
        loss, gP = nll_from_probs(prob)

        g_alpha = np.zeros(m)
        g_beta = np.zeros(m)
        np.add.at(g_alpha, lo_rows, -gP[lo_rows] * da[:k])
        np.add.at(g_alpha, hi_rows, gP[hi_rows] * da[k:])
        np.add.at(g_beta, lo_rows, -gP[lo_rows] * db[:k])
        np.add.at(g_beta, hi_rows, gP[hi_rows] * db[k:])

        grads = {}
        scheme = cfg.bias_scheme
        mu, nu = f["mu"], f["nu"]
        if scheme == "none":
            g_mu = nu * (g_alpha - g_beta)
            g_nu = mu * g_alpha + (1.0 - mu) * g_beta
        elif scheme == "alpha_beta":
            ga = g_alpha * f["a_free"]
            gb = g_beta * f["b_free"]
            grads["a0"] = np.asarray(ga.sum())
            grads["b0"] = np.asarray(gb.sum())
            grads["a_user"] = scatter_rows(self.num_users, users, ga)
            grads["b_user"] = scatter_rows(self.num_users, users, gb)
            grads["a_item"] = scatter_rows(self.num_items, items, ga)
            grads["b_item"] = scatter_rows(self.num_items, items, gb)
            g_mu = nu * (ga - gb)
            g_nu = mu * ga + (1.0 - mu) * gb
        else:
            mu2, nu2, piv = f["mu2"], f["nu2"], f["piv"]
            g_mu2 = nu2 * (g_alpha - g_beta) * f["mu2_free"]
            g_nu2 = mu2 * g_alpha + (1.0 - mu2) * g_beta
            g_logv = g_nu2 * nu2
            grads["v0_log"] = np.asarray(g_logv.sum())
            grads["v_user_log"] = scatter_rows(self.num_users, users, g_logv)
            grads["v_item_log"] = scatter_rows(self.num_items, items, g_logv)
            below = mu < piv
            dmu = np.where(below, 1.0 / (2.0 * piv), 1.0 / (2.0 * (1.0 - piv)))
            dpiv = np.where(below, -mu / (2.0 * piv ** 2),
                            (mu - 1.0) / (2.0 * (1.0 - piv) ** 2))
            g_piv = g_mu2 * dpiv
            su0, sui, suj = f["su"]
            grads["u0_logit"] = np.asarray(np.sum(g_piv * piv * (1.0 - su0)))
            grads["u_user_logit"] = scatter_rows(self.num_users, users, g_piv * piv * (1.0 - sui))
            grads["u_item_logit"] = scatter_rows(self.num_items, items, g_piv * piv * (1.0 - suj))
            g_mu = g_mu2 * dmu
            g_nu = g_nu2 * f["vscale"]

        # mean: cosine similarity of the preference embeddings
        g_cos = 0.5 * g_mu * f["mu_free"]
        Pu, Pv, nu_u, nu_v, cos = f["Pu"], f["Pv"], f["nu_u"], f["nu_v"], f["cos"]
        inv = 1.0 / (nu_u * nu_v)
        gPu = g_cos[:, None] * (Pv * inv[:, None] - Pu * (cos / nu_u ** 2)[:, None])
        gPv = g_cos[:, None] * (Pu * inv[:, None] - Pv * (cos / nu_v ** 2)[:, None])

        # confidence
        g_conf = g_nu * f["nu_free"]
        Cu, Cv = f["Cu"], f["Cv"]
        fn = cfg.confidence_fn
        if fn == "norm":
            cu_n, cv_n = f["cu_n"], f["cv_n"]
            gCu = (g_conf * cv_n / cu_n)[:, None] * Cu
            gCv = (g_conf * cu_n / cv_n)[:, None] * Cv
        elif fn == "sum":
            s = f["s"]
            norm_s = np.where(f["conf_raw"] > 0, f["conf_raw"], 1.0)
            gCu = (g_conf / norm_s)[:, None] * s
            gCv = gCu
        else:
            sgn = np.sign(f["cdot"])
            gCu = (g_conf * sgn)[:, None] * Cv
            gCv = (g_conf * sgn)[:, None] * Cu

        if cfg.separate_embeddings:
            gUi = np.concatenate([gPu, gCu], axis=1)
            gVj = np.concatenate([gPv, gCv], axis=1)
        else:
            gUi, gVj = gPu + gCu, gPv + gCv
        grads["U"] = scatter_rows(self.num_users, users, gUi)
        grads["V"] = scatter_rows(self.num_items, items, gVj)

        if cfg.binning == "adaptive":
            g_edge = np.zeros((m, n - 1))
            g_edge[lo_rows, ratings[has_lo] - 1] = -gP[lo_rows] * dx[:k]
            g_edge[hi_rows, ratings[has_hi]] += gP[hi_rows] * dx[k:]
            g_edge *= f["edge_free"]
            # e_r = sum_{s<r} W_s, so dL/dW_s sums the edge gradients above s
            gW = np.zeros((m, n))
            gW[:, :-1] = np.cumsum(g_edge[:, ::-1], axis=1)[:, ::-1]
            W = f["W"]
            gz = W * (gW - np.sum(W * gW, axis=1, keepdims=True))
            grads["theta_user"] = scatter_rows(self.num_users, users, gz)
            grads["theta_item"] = scatter_rows(self.num_items, items, gz)
        return float(loss), grads

    # -- convenience -------------------------------------------------------
    def mean_confidence(self, users, items):
        f = self._forward(np.asarray(users), np.asarray(items))
        return f["mu"], f["nu"]
