//! Shared test oracles: straight-line reference evaluations written
//! independently of the library's tape, plus a finite-difference runner.

#![allow(dead_code)]

use viewfuse::config::RunConfig;
use viewfuse::nn::Tensor;

/// Reference scaled dot-product attention with optional key masking,
/// written as explicit loops.
pub fn oracle_attention(
    q: &[Vec<f64>],
    k: &[Vec<f64>],
    v: &[Vec<f64>],
    d_k: usize,
    valid: usize,
) -> Vec<Vec<f64>> {
    let rows = q.len();
    let dim = q[0].len();
    let scale = 1.0 / (d_k as f64).sqrt();
    let mut out = vec![vec![0.0; dim]; rows];
    if valid == 0 {
        return out;
    }
    for i in 0..rows {
        let mut scores = vec![0.0; valid];
        for (j, s) in scores.iter_mut().enumerate() {
            let mut acc = 0.0;
            for c in 0..dim {
                acc += q[i][c] * k[j][c];
            }
            *s = acc * scale;
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for (j, e) in exps.iter().enumerate() {
            let w = e / sum;
            for c in 0..dim {
                out[i][c] += w * v[j][c];
            }
        }
    }
    out
}

/// Reference multi-head encoder: contiguous column slices, per-slice
/// attention, concatenation, then multiplication by w_o.
pub fn oracle_mvsa(
    x: &[Vec<f64>],
    n_heads: usize,
    w_o: &[Vec<f64>],
    valid: usize,
) -> Vec<Vec<f64>> {
    let rows = x.len();
    let d = x[0].len();
    let d_k = d / n_heads;
    let mut concat = vec![vec![0.0; d]; rows];
    for h in 0..n_heads {
        let slice: Vec<Vec<f64>> = x
            .iter()
            .map(|row| row[h * d_k..(h + 1) * d_k].to_vec())
            .collect();
        let head = oracle_attention(&slice, &slice, &slice, d_k, valid);
        for r in 0..rows {
            concat[r][h * d_k..(h + 1) * d_k].copy_from_slice(&head[r]);
        }
    }
    let mut out = vec![vec![0.0; d]; rows];
    for r in 0..rows {
        for j in 0..d {
            let mut acc = 0.0;
            for p in 0..d {
                acc += concat[r][p] * w_o[p][j];
            }
            out[r][j] = acc;
        }
    }
    out
}

/// Reference classifier head with explicit loops: valid conv, ReLU,
/// per-kernel mean pool, two affine layers, sigmoid.
pub struct OracleHead {
    pub kernels: Vec<Vec<Vec<f64>>>, // [c][kh][kw]
    pub w1: Vec<Vec<f64>>,           // [hidden][c]
    pub b1: Vec<f64>,
    pub w2: Vec<f64>, // [hidden]
    pub b2: f64,
}

pub fn oracle_head_forward(fused: &[Vec<f64>], head: &OracleHead) -> f64 {
    let (h, w) = (fused.len(), fused[0].len());
    let c = head.kernels.len();
    let (kh, kw) = (head.kernels[0].len(), head.kernels[0][0].len());
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut pooled = vec![0.0; c];
    for ch in 0..c {
        let mut sum = 0.0;
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = 0.0;
                for a in 0..kh {
                    for b in 0..kw {
                        acc += fused[i + a][j + b] * head.kernels[ch][a][b];
                    }
                }
                sum += acc.max(0.0);
            }
        }
        pooled[ch] = sum / (oh * ow) as f64;
    }
    let hidden: Vec<f64> = head
        .w1
        .iter()
        .zip(&head.b1)
        .map(|(row, b)| {
            let z: f64 = row.iter().zip(&pooled).map(|(w, p)| w * p).sum::<f64>() + b;
            z.max(0.0)
        })
        .collect();
    let logit: f64 = head.w2.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + head.b2;
    1.0 / (1.0 + (-logit).exp())
}

pub fn tensor_to_rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

/// Central finite differences of `f` at `x`.
pub fn finite_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let dn = f(&probe);
        probe[i] = x[i];
        out.push((up - dn) / (2.0 * h));
    }
    out
}

/// Symmetric relative error, ignoring entries where both sides are tiny.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs());
    if denom < 1e-8 {
        0.0
    } else {
        (a - b).abs() / denom
    }
}

/// Mean batch loss under fixed parameters, built on a fresh graph.
pub fn batch_loss(
    params: &viewfuse::nn::ModelParams,
    cfg: &RunConfig,
    batch: &[(viewfuse::nn::SampleInput, f64)],
    mask: viewfuse::nn::AblationMask,
) -> f64 {
    use viewfuse::nn::{register_params, sample_probability, Graph};
    let mut g = Graph::new();
    let pv = register_params(&mut g, params).unwrap();
    let mut losses = Vec::new();
    for (input, y) in batch {
        let p = sample_probability(&mut g, &pv, input, cfg, mask).unwrap();
        losses.push(g.bce_loss(p, *y).unwrap());
    }
    let mean = g.mean_scalars(&losses).unwrap();
    g.value(mean).item()
}

/// Gradients of the mean batch loss for every parameter, declared order.
pub fn batch_grads(
    params: &viewfuse::nn::ModelParams,
    cfg: &RunConfig,
    batch: &[(viewfuse::nn::SampleInput, f64)],
    mask: viewfuse::nn::AblationMask,
) -> Vec<Tensor> {
    use viewfuse::nn::{collect_grads, register_params, sample_probability, Graph};
    let mut g = Graph::new();
    let pv = register_params(&mut g, params).unwrap();
    let mut losses = Vec::new();
    for (input, y) in batch {
        let p = sample_probability(&mut g, &pv, input, cfg, mask).unwrap();
        losses.push(g.bce_loss(p, *y).unwrap());
    }
    let mean = g.mean_scalars(&losses).unwrap();
    g.backward(mean).unwrap();
    collect_grads(&g, &pv).unwrap()
}

/// The tiny configuration used for gradient checking: d=8, two heads,
/// 3-node graphs padded to 4 rows, a 4-token sequence, one 2x2 conv
/// kernel, MLP width 4.
pub fn tiny_config() -> RunConfig {
    RunConfig {
        d: 8,
        n_heads: 2,
        d_embed: 8,
        t_max: 4,
        l_ast: 4,
        l_cfg: 4,
        l_dfg: 4,
        conv_kernels: 1,
        conv_kh: 2,
        conv_kw: 2,
        mlp_hidden: 4,
        ..RunConfig::default()
    }
}
