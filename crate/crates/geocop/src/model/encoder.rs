//! Encoder: point embedding, LSTM over the sorted points, optional
//! single-head residual self-attention, and the appended end-sentinel row.

use super::ModelParams;
use crate::geometry::PointSet;
use crate::nncore::{
    lstm_backward_step, lstm_forward_step, softmax_stable, LstmStepCache, Parameter,
};

/// Encoder forward pass with everything the backward pass needs.
///
/// `rows` holds the m contextual embeddings plus the end-sentinel as row m;
/// attention is applied to the point rows only, never the sentinel.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub m: usize,
    pub hidden: usize,
    /// `(m + 1) x H`, row-major.
    pub rows: Vec<f64>,
    pub final_h: Vec<f64>,
    pub final_c: Vec<f64>,
    // caches for the backward pass
    pub(crate) x_emb: Vec<f64>,
    pub(crate) hs: Vec<f64>,
    pub(crate) cs: Vec<f64>,
    pub(crate) step_caches: Vec<LstmStepCache>,
    pub(crate) attn: Option<AttnCache>,
}

#[derive(Debug, Clone)]
pub struct AttnCache {
    /// Pre-attention encoder states, `m x H`.
    pub(crate) e: Vec<f64>,
    pub(crate) q: Vec<f64>,
    pub(crate) k: Vec<f64>,
    pub(crate) v: Vec<f64>,
    /// Attention weights, `m x m`.
    pub(crate) a: Vec<f64>,
}

/// Embeds every point (2 -> H), runs the encoder LSTM in input order, then
/// re-embeds the outputs with residual self-attention when enabled.
pub fn encode(points: &PointSet, params: &ModelParams) -> EncoderOutput {
    let m = points.len();
    let h = params.config.hidden;

    let mut x_emb = Vec::with_capacity(m * h);
    for p in &points.points {
        x_emb.extend_from_slice(&params.embed_point(p.x, p.y));
    }

    let mut hs = vec![0.0; (m + 1) * h];
    let mut cs = vec![0.0; (m + 1) * h];
    let mut step_caches = Vec::with_capacity(m);
    for j in 0..m {
        let (nh, nc, cache) = lstm_forward_step(
            &params.enc,
            &x_emb[j * h..(j + 1) * h],
            &hs[j * h..(j + 1) * h].to_vec(),
            &cs[j * h..(j + 1) * h].to_vec(),
        )
        .expect("encoder shapes are fixed by construction");
        hs[(j + 1) * h..(j + 2) * h].copy_from_slice(&nh);
        cs[(j + 1) * h..(j + 2) * h].copy_from_slice(&nc);
        step_caches.push(cache);
    }

    let e: Vec<f64> = hs[h..].to_vec(); // rows 1..=m are e_1..e_m
    let (point_rows, attn) = if params.config.self_attention {
        let (rows, cache) = self_attend(&e, m, params);
        (rows, Some(cache))
    } else {
        (e.clone(), None)
    };

    let mut rows = point_rows;
    rows.extend_from_slice(params.end_emb.value.data());

    EncoderOutput {
        m,
        hidden: h,
        final_h: hs[m * h..(m + 1) * h].to_vec(),
        final_c: cs[m * h..(m + 1) * h].to_vec(),
        rows,
        x_emb,
        hs,
        cs,
        step_caches,
        attn,
    }
}

/// Single-head scaled dot-product self-attention with a residual connection:
/// `E' = E + softmax(E Wq (E Wk)^T / sqrt(d_k)) E Wv`. No layer norm.
pub fn self_attend(e: &[f64], m: usize, params: &ModelParams) -> (Vec<f64>, AttnCache) {
    let h = params.config.hidden;
    let dk = params.config.d_k;
    let dv = params.config.d_v;
    debug_assert_eq!(e.len(), m * h);

    let q = project(e, m, h, dk, params.attn_q.value.data());
    let k = project(e, m, h, dk, params.attn_k.value.data());
    let v = project(e, m, h, dv, params.attn_v.value.data());

    let scale = 1.0 / (dk as f64).sqrt();
    let mut a = vec![0.0; m * m];
    for i in 0..m {
        let qi = &q[i * dk..(i + 1) * dk];
        let mut scores = vec![0.0; m];
        for j in 0..m {
            scores[j] = dot(qi, &k[j * dk..(j + 1) * dk]) * scale;
        }
        let probs = softmax_stable(&scores).expect("attention scores are finite");
        a[i * m..(i + 1) * m].copy_from_slice(&probs);
    }

    let mut out = e.to_vec();
    for i in 0..m {
        let (ai, oi) = (&a[i * m..(i + 1) * m], &mut out[i * h..(i + 1) * h]);
        for j in 0..m {
            let w = ai[j];
            let vj = &v[j * dv..(j + 1) * dv];
            for (o, val) in oi.iter_mut().zip(vj) {
                *o += w * val;
            }
        }
    }
    (out, AttnCache { e: e.to_vec(), q, k, v, a })
}

/// Backward through the encoder stack. `d_rows` is the gradient for the full
/// `(m + 1) x H` output (sentinel row included); `dh_final`/`dc_final` are
/// the gradients flowing back from the decoder's initial state. Accumulates
/// into the parameter gradients.
pub(crate) fn encoder_backward(
    params: &mut ModelParams,
    points: &PointSet,
    cache: &EncoderOutput,
    d_rows: &[f64],
    dh_final: &[f64],
    dc_final: &[f64],
) {
    let m = cache.m;
    let h = cache.hidden;

    add(params.end_emb.grad.data_mut(), &d_rows[m * h..(m + 1) * h]);

    let d_e = match &cache.attn {
        Some(attn) => self_attend_backward(params, attn, m, &d_rows[..m * h]),
        None => d_rows[..m * h].to_vec(),
    };

    let mut dh = dh_final.to_vec();
    let mut dc = dc_final.to_vec();
    for j in (0..m).rev() {
        add(&mut dh, &d_e[j * h..(j + 1) * h]);
        let mut dx = vec![0.0; h];
        let mut dh_prev = vec![0.0; h];
        let mut dc_prev = vec![0.0; h];
        lstm_backward_step(
            &mut params.enc,
            &cache.x_emb[j * h..(j + 1) * h],
            &cache.hs[j * h..(j + 1) * h],
            &cache.cs[j * h..(j + 1) * h],
            &cache.step_caches[j],
            &dh,
            &dc,
            &mut dx,
            &mut dh_prev,
            &mut dc_prev,
        );
        embed_backward(&mut params.emb_w, &mut params.emb_b, points, j, &dx, h);
        dh = dh_prev;
        dc = dc_prev;
    }
}

/// Gradient of the shared input embedding for one embedded point.
pub(crate) fn embed_backward(
    emb_w: &mut Parameter,
    emb_b: &mut Parameter,
    points: &PointSet,
    idx: usize,
    dx: &[f64],
    h: usize,
) {
    let p = points[idx];
    let gw = emb_w.grad.data_mut();
    for k in 0..h {
        gw[k] += p.x * dx[k];
        gw[h + k] += p.y * dx[k];
    }
    add(emb_b.grad.data_mut(), dx);
}

fn self_attend_backward(
    params: &mut ModelParams,
    cache: &AttnCache,
    m: usize,
    d_out: &[f64],
) -> Vec<f64> {
    let h = params.config.hidden;
    let dk = params.config.d_k;
    let dv = params.config.d_v;
    let scale = 1.0 / (dk as f64).sqrt();

    // d_out feeds both the residual and the context sum.
    let mut d_e = d_out.to_vec();

    let mut d_v = vec![0.0; m * dv];
    let mut d_a = vec![0.0; m * m];
    for i in 0..m {
        let doi = &d_out[i * h..(i + 1) * h];
        let ai = &cache.a[i * m..(i + 1) * m];
        for j in 0..m {
            let vj = &cache.v[j * dv..(j + 1) * dv];
            d_a[i * m + j] = dot(doi, vj);
            let w = ai[j];
            for (dvk, dok) in d_v[j * dv..(j + 1) * dv].iter_mut().zip(doi) {
                *dvk += w * dok;
            }
        }
    }

    // Softmax backward per row, then the scaled dot products.
    let mut d_q = vec![0.0; m * dk];
    let mut d_k = vec![0.0; m * dk];
    for i in 0..m {
        let ai = &cache.a[i * m..(i + 1) * m];
        let dai = &d_a[i * m..(i + 1) * m];
        let inner: f64 = ai.iter().zip(dai).map(|(a, d)| a * d).sum();
        for j in 0..m {
            let ds = ai[j] * (dai[j] - inner) * scale;
            let kj = &cache.k[j * dk..(j + 1) * dk];
            let qi = &cache.q[i * dk..(i + 1) * dk];
            for (dqk, kk) in d_q[i * dk..(i + 1) * dk].iter_mut().zip(kj) {
                *dqk += ds * kk;
            }
            for (dkk, qk) in d_k[j * dk..(j + 1) * dk].iter_mut().zip(qi) {
                *dkk += ds * qk;
            }
        }
    }

    project_backward(&mut params.attn_q, &cache.e, &d_q, m, h, dk, &mut d_e);
    project_backward(&mut params.attn_k, &cache.e, &d_k, m, h, dk, &mut d_e);
    project_backward(&mut params.attn_v, &cache.e, &d_v, m, h, dv, &mut d_e);
    d_e
}

fn project(e: &[f64], m: usize, n_in: usize, n_out: usize, w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m * n_out];
    for i in 0..m {
        crate::nncore::matvec_accum(
            &mut out[i * n_out..(i + 1) * n_out],
            &e[i * n_in..(i + 1) * n_in],
            w,
            n_in,
            n_out,
        );
    }
    out
}

fn project_backward(
    w: &mut Parameter,
    e: &[f64],
    d_proj: &[f64],
    m: usize,
    n_in: usize,
    n_out: usize,
    d_e: &mut [f64],
) {
    for i in 0..m {
        let xi = &e[i * n_in..(i + 1) * n_in];
        let dyi = &d_proj[i * n_out..(i + 1) * n_out];
        crate::nncore::outer_accum(w.grad.data_mut(), xi, dyi, n_in, n_out);
        crate::nncore::matvec_t_accum(
            &mut d_e[i * n_in..(i + 1) * n_in],
            dyi,
            w.value.data(),
            n_in,
            n_out,
        );
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    crate::nncore::dot(a, b)
}

fn add(y: &mut [f64], x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi;
    }
}
