//! Per-sequence forward and backward passes of the post-LN encoder stack.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use super::params::{dropout_mask, LayerParams};

const LN_EPS: f64 = 1e-12;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub(crate) fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_A * u * u * u)).tanh())
}

pub(crate) fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + GELU_A * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * u * u)
}

#[derive(Debug, Clone)]
pub(crate) struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

pub(crate) fn layer_norm(x: &Array2<f64>, g: &Array1<f64>, b: &Array1<f64>) -> (Array2<f64>, LnCache) {
    let m = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, inv) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mu = row.sum() / m;
        row.mapv_inplace(|v| v - mu);
        let var = row.iter().map(|v| v * v).sum::<f64>() / m;
        *inv = 1.0 / (var + LN_EPS).sqrt();
        let s = *inv;
        row.mapv_inplace(|v| v * s);
    }
    let y = &xhat * g + b;
    (y, LnCache { xhat, inv_std })
}

/// Returns dx; accumulates dg, db.
pub(crate) fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    g: &Array1<f64>,
    dg: &mut Array1<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    *dg += &(dy * &cache.xhat).sum_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0));
    let m = dy.ncols() as f64;
    let dxhat = dy * g;
    let mut dx = Array2::zeros(dy.raw_dim());
    for (((mut out, dh), xh), &inv) in dx
        .rows_mut()
        .into_iter()
        .zip(dxhat.rows())
        .zip(cache.xhat.rows())
        .zip(cache.inv_std.iter())
    {
        let mean_dh = dh.sum() / m;
        let mean_dhx = dh.dot(&xh) / m;
        for ((o, &d), &x) in out.iter_mut().zip(dh).zip(xh) {
            *o = inv * (d - mean_dh - x * mean_dhx);
        }
    }
    dx
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    drop1: Option<Array2<f64>>,
    ln1: LnCache,
    y1: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
    drop2: Option<Array2<f64>>,
    ln2: LnCache,
}

fn affine(x: &ArrayView2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    x.dot(w) + b
}

pub(crate) fn layer_forward<R: rand::RngCore + ?Sized>(
    p: &LayerParams,
    x: &Array2<f64>,
    key_valid: &[bool],
    heads: usize,
    rate: f64,
    mut rng: Option<&mut R>,
) -> (Array2<f64>, LayerCache) {
    let (l, m) = x.dim();
    let dh = m / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let xv = x.view();
    let q = affine(&xv, &p.wq, &p.bq);
    let k = affine(&xv, &p.wk, &p.bk);
    let v = affine(&xv, &p.wv, &p.bv);

    let mut ctx = Array2::zeros((l, m));
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut sc = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        for mut row in sc.rows_mut() {
            let mut max = f64::NEG_INFINITY;
            for (j, val) in row.iter().enumerate() {
                if key_valid[j] && *val > max {
                    max = *val;
                }
            }
            let mut sum = 0.0;
            for (j, val) in row.iter_mut().enumerate() {
                *val = if key_valid[j] { (*val - max).exp() } else { 0.0 };
                sum += *val;
            }
            row.mapv_inplace(|e| e / sum);
        }
        ctx.slice_mut(cols).assign(&sc.dot(&v.slice(cols)));
        probs.push(sc);
    }

    let mut attn = affine(&ctx.view(), &p.wo, &p.bo);
    let drop1 = rng.as_deref_mut().and_then(|r| dropout_mask(l, m, rate, r));
    if let Some(d) = &drop1 {
        attn *= d;
    }
    let (y1, ln1) = layer_norm(&(x + &attn), &p.ln1_g, &p.ln1_b);
    let pre = affine(&y1.view(), &p.w1, &p.b1);
    let act = pre.mapv(gelu);
    let mut ff = affine(&act.view(), &p.w2, &p.b2);
    let drop2 = rng.and_then(|r| dropout_mask(l, m, rate, r));
    if let Some(d) = &drop2 {
        ff *= d;
    }
    let (out, ln2) = layer_norm(&(&y1 + &ff), &p.ln2_g, &p.ln2_b);
    (
        out,
        LayerCache {
            x: x.clone(),
            q,
            k,
            v,
            probs,
            ctx,
            drop1,
            ln1,
            y1,
            pre,
            act,
            drop2,
            ln2,
        },
    )
}

fn accumulate_affine(
    x: &Array2<f64>,
    dout: &Array2<f64>,
    w: &Array2<f64>,
    dw: &mut Array2<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    *dw += &x.t().dot(dout);
    *db += &dout.sum_axis(Axis(0));
    dout.dot(&w.t())
}

/// Returns the gradient w.r.t. the layer input; accumulates into `g`.
pub(crate) fn layer_backward(
    p: &LayerParams,
    c: &LayerCache,
    dout: &Array2<f64>,
    heads: usize,
    g: &mut LayerParams,
) -> Array2<f64> {
    let (l, m) = c.x.dim();
    let dh = m / heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let dr2 = layer_norm_backward(dout, &c.ln2, &p.ln2_g, &mut g.ln2_g, &mut g.ln2_b);
    let mut dff = dr2.clone();
    if let Some(d) = &c.drop2 {
        dff *= d;
    }
    let dact = accumulate_affine(&c.act, &dff, &p.w2, &mut g.w2, &mut g.b2);
    let mut dpre = dact;
    dpre.zip_mut_with(&c.pre, |d, &u| *d *= gelu_grad(u));
    let mut dy1 = accumulate_affine(&c.y1, &dpre, &p.w1, &mut g.w1, &mut g.b1);
    dy1 += &dr2;

    let dr1 = layer_norm_backward(&dy1, &c.ln1, &p.ln1_g, &mut g.ln1_g, &mut g.ln1_b);
    let mut dattn = dr1.clone();
    if let Some(d) = &c.drop1 {
        dattn *= d;
    }
    let dctx = accumulate_affine(&c.ctx, &dattn, &p.wo, &mut g.wo, &mut g.bo);

    let mut dq = Array2::zeros((l, m));
    let mut dk = Array2::zeros((l, m));
    let mut dv = Array2::zeros((l, m));
    for (h, pr) in c.probs.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let dctx_h = dctx.slice(cols);
        let dp = dctx_h.dot(&c.v.slice(cols).t());
        dv.slice_mut(cols).assign(&pr.t().dot(&dctx_h));
        let mut ds = dp;
        for (mut drow, prow) in ds.rows_mut().into_iter().zip(pr.rows()) {
            let dot = drow.dot(&prow);
            drow.zip_mut_with(&prow, |d, &pv| *d = pv * (*d - dot) * scale);
        }
        dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
    }

    let mut dx = dr1;
    dx += &accumulate_affine(&c.x, &dq, &p.wq, &mut g.wq, &mut g.bq);
    dx += &accumulate_affine(&c.x, &dk, &p.wk, &mut g.wk, &mut g.bk);
    dx += &accumulate_affine(&c.x, &dv, &p.wv, &mut g.wv, &mut g.bv);
    dx
}

