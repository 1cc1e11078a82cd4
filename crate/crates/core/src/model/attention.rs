use std::rc::Rc;

use crate::numerics::{EdgeList, Graph, ParamId, Real, SoftmaxMask, Var};

use super::ModelConfig;

#[derive(Debug, Clone)]
pub struct AttentionLayerIds {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wk_rel: ParamId,
    pub wv_rel: ParamId,
    pub ln1: (ParamId, ParamId),
    pub ff: [ParamId; 4],
    pub ln2: (ParamId, ParamId),
}

/// `Vanilla` drops both relation terms from the attention scores and the
/// aggregated values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionMode {
    Relational,
    Vanilla,
}

/// Scaled dot-product attention per head on precomputed `q`, `k`, `v`
/// (all `· × d`), heads concatenated along columns.
pub(crate) fn multi_head<F: Real>(
    g: &mut Graph<'_, F>,
    cfg: &ModelConfig,
    q: Var,
    k: Var,
    v: Var,
    mask: &SoftmaxMask,
) -> Var {
    let dk = cfg.dim / cfg.heads;
    let scale = F::of(1.0 / (dk as f64).sqrt());
    let mut heads = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let qh = g.slice_cols(q, h * dk, dk);
        let kh = g.slice_cols(k, h * dk, dk);
        let vh = g.slice_cols(v, h * dk, dk);
        let s = g.matmul_t(qh, false, kh, true);
        let s = g.scale(s, scale);
        let a = g.softmax_rows(s, mask);
        let a = g.dropout(a, cfg.dropout);
        heads.push(g.matmul(a, vh));
    }
    g.concat_cols(&heads)
}

pub(crate) fn residual_norm<F: Real>(
    g: &mut Graph<'_, F>,
    cfg: &ModelConfig,
    x: Var,
    sub: Var,
    ln: (ParamId, ParamId),
) -> Var {
    let sub = g.dropout(sub, cfg.dropout);
    let s = g.add(x, sub);
    let gain = g.param(ln.0);
    let bias = g.param(ln.1);
    g.layer_norm(s, gain, bias)
}

pub(crate) fn feed_forward<F: Real>(g: &mut Graph<'_, F>, cfg: &ModelConfig, x: Var, ff: &[ParamId; 4]) -> Var {
    let w1 = g.param(ff[0]);
    let b1 = g.param(ff[1]);
    let w2 = g.param(ff[2]);
    let b2 = g.param(ff[3]);
    let h = g.matmul(x, w1);
    let h = g.add_row(h, b1);
    let h = g.gelu(h);
    let h = g.dropout(h, cfg.dropout);
    let h = g.matmul(h, w2);
    g.add_row(h, b2)
}

/// One encoder block. Per head the scores are
/// `(q_i·k_j + Σ_{r: (i,r,j)} q_i·(x_r W_K'))/√d_k`, and the output row is
/// `Σ_j α_ij v_j + Σ_j α_ij Σ_{r: (i,r,j)} x_r W_V'`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn encoder_layer<F: Real>(
    g: &mut Graph<'_, F>,
    cfg: &ModelConfig,
    ids: &AttentionLayerIds,
    x: Var,
    xr: Var,
    edges: &Rc<EdgeList>,
    mask: &SoftmaxMask,
    mode: AttentionMode,
) -> Var {
    let dk = cfg.dim / cfg.heads;
    let scale = F::of(1.0 / (dk as f64).sqrt());
    let wq = g.param(ids.wq);
    let wk = g.param(ids.wk);
    let wv = g.param(ids.wv);
    let q = g.matmul(x, wq);
    let k = g.matmul(x, wk);
    let v = g.matmul(x, wv);
    let relational = mode == AttentionMode::Relational;
    let (kr, vr) = if relational {
        let wkr = g.param(ids.wk_rel);
        let wvr = g.param(ids.wv_rel);
        (Some(g.matmul(xr, wkr)), Some(g.matmul(xr, wvr)))
    } else {
        (None, None)
    };
    let mut heads = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let qh = g.slice_cols(q, h * dk, dk);
        let kh = g.slice_cols(k, h * dk, dk);
        let vh = g.slice_cols(v, h * dk, dk);
        let mut s = g.matmul_t(qh, false, kh, true);
        if let Some(kr) = kr {
            let krh = g.slice_cols(kr, h * dk, dk);
            let qr = g.matmul_t(qh, false, krh, true);
            let e = g.edge_scores(qr, edges);
            s = g.add(s, e);
        }
        let s = g.scale(s, scale);
        let a = g.softmax_rows(s, mask);
        let a = g.dropout(a, cfg.dropout);
        let mut z = g.matmul(a, vh);
        if let Some(vr) = vr {
            let vrh = g.slice_cols(vr, h * dk, dk);
            let c = g.edge_collect(a, edges);
            let rz = g.matmul(c, vrh);
            z = g.add(z, rz);
        }
        heads.push(z);
    }
    let z = g.concat_cols(&heads);
    let hdn = residual_norm(g, cfg, x, z, ids.ln1);
    let f = feed_forward(g, cfg, hdn, &ids.ff);
    residual_norm(g, cfg, hdn, f, ids.ln2)
}
