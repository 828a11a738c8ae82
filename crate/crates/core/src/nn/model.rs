//! The model: per-view projections, multi-view self-attention encoders,
//! quad fusion, and the convolutional classifier head.
//!
//! Heads are contiguous column slices of the input matrix (query, key, and
//! value are the same slice); an optional flag adds learned per-head
//! projections. Each view runs through its own encoder and the four
//! outputs are fused into a single matrix for the head.

use super::tape::{Graph, VarId};
use super::tensor::Tensor;
use crate::config::{FusionMode, ProviderKind, RunConfig};
use crate::error::{Error, Result};
use crate::graphs::ViewGraph;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const VIEW_NAMES: [&str; 4] = ["ast", "cfg", "dfg", "css"];

/// Which views participate in fusion. Disabled views contribute all-zero
/// rows and their parameters receive exactly zero gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationMask {
    pub include_ast: bool,
    pub include_cfg: bool,
    pub include_dfg: bool,
    pub include_css: bool,
}

impl AblationMask {
    pub fn full() -> Self {
        AblationMask {
            include_ast: true,
            include_cfg: true,
            include_dfg: true,
            include_css: true,
        }
    }

    pub fn without(view: usize) -> Self {
        let mut m = Self::full();
        match view {
            0 => m.include_ast = false,
            1 => m.include_cfg = false,
            2 => m.include_dfg = false,
            3 => m.include_css = false,
            _ => panic!("view index out of range"),
        }
        m
    }

    pub fn includes(&self, view: usize) -> bool {
        match view {
            0 => self.include_ast,
            1 => self.include_cfg,
            2 => self.include_dfg,
            3 => self.include_css,
            _ => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if (0..4).any(|v| self.includes(v)) {
            Ok(())
        } else {
            Err(Error::config("ablation mask disables every view"))
        }
    }

    pub fn name(&self) -> String {
        match (self.include_ast, self.include_cfg, self.include_dfg, self.include_css) {
            (true, true, true, true) => "full".to_string(),
            (false, true, true, true) => "no_ast".to_string(),
            (true, false, true, true) => "no_cfg".to_string(),
            (true, true, false, true) => "no_dfg".to_string(),
            (true, true, true, false) => "no_css".to_string(),
            (a, b, c, d) => format!(
                "{}{}{}{}",
                u8::from(a),
                u8::from(b),
                u8::from(c),
                u8::from(d)
            ),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mask = match s {
            "full" => Self::full(),
            "no_ast" => Self::without(0),
            "no_cfg" => Self::without(1),
            "no_dfg" => Self::without(2),
            "no_css" => Self::without(3),
            bits if bits.len() == 4 && bits.chars().all(|c| c == '0' || c == '1') => {
                let b: Vec<bool> = bits.chars().map(|c| c == '1').collect();
                AblationMask {
                    include_ast: b[0],
                    include_cfg: b[1],
                    include_dfg: b[2],
                    include_css: b[3],
                }
            }
            _ => return Err(Error::config(format!("unknown ablation mask '{s}'"))),
        };
        mask.validate()?;
        Ok(mask)
    }
}

/// Scaled dot-product attention for one head. Query, key, and value must
/// have identical shapes; `valid` masks padding key positions so they get
/// exactly zero weight.
pub fn attention_head(
    g: &mut Graph,
    q: VarId,
    k: VarId,
    v: VarId,
    d_k: usize,
    valid: Option<usize>,
) -> Result<VarId> {
    if d_k == 0 {
        return Err(Error::config("d_k must be positive"));
    }
    let qs = g.value(q).shape().to_vec();
    if g.value(k).shape() != qs || g.value(v).shape() != qs {
        return Err(Error::config("attention inputs must have identical shapes"));
    }
    let rows = qs[0];
    let scores = g.matmul_nt(q, k)?;
    let scaled = g.scale(scores, 1.0 / (d_k as f64).sqrt())?;
    g.attention_mix(scaled, v, valid.unwrap_or(rows))
}

/// Multi-view self-attention encoder: split columns into `n` contiguous
/// head slices, attend per head, concatenate, and project by `w_o`.
pub fn mvsa(
    g: &mut Graph,
    x: VarId,
    n: usize,
    w_o: VarId,
    head_proj: Option<&[VarId]>,
    valid: Option<usize>,
) -> Result<VarId> {
    let shape = g.value(x).shape().to_vec();
    let d = shape[1];
    if n == 0 || d % n != 0 {
        return Err(Error::config(format!("width {d} not divisible into {n} heads")));
    }
    let d_k = d / n;
    let mut heads = Vec::with_capacity(n);
    for h in 0..n {
        let slice = g.slice_cols(x, h * d_k, d_k)?;
        let (q, k, v) = match head_proj {
            Some(hp) => (
                g.matmul(slice, hp[3 * h])?,
                g.matmul(slice, hp[3 * h + 1])?,
                g.matmul(slice, hp[3 * h + 2])?,
            ),
            None => (slice, slice, slice),
        };
        heads.push(attention_head(g, q, k, v, d_k, valid)?);
    }
    let cat = g.concat_cols(&heads)?;
    g.matmul(cat, w_o)
}

/// All trainable tensors, in the fixed checkpoint order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embed_table: Option<Tensor>,
    /// Per-view input projections, indexed ast/cfg/dfg/css.
    pub proj: [Tensor; 4],
    pub w_o: [Tensor; 4],
    /// Per-head q/k/v projections when enabled: view-major, head-major,
    /// q, k, v — each [d_k, d_k].
    pub head_proj: Option<Vec<Tensor>>,
    pub conv_kernels: Tensor,
    pub mlp_w1: Tensor,
    pub mlp_b1: Tensor,
    pub mlp_w2: Tensor,
    pub mlp_b2: Tensor,
}

fn xavier(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let std = (2.0 / (rows + cols) as f64).sqrt();
    Tensor::randn(&[rows, cols], std, rng)
}

impl ModelParams {
    /// Seeded init. The embedding table uses N(0, 0.02^2); weight matrices
    /// use Xavier-style scaling; biases start at zero. The draw order is
    /// fixed so identical seeds give identical parameters regardless of
    /// any ablation mask applied later.
    pub fn init(cfg: &RunConfig, vocab_size: Option<usize>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embed_table = match (cfg.provider, vocab_size) {
            (ProviderKind::Learned, Some(v)) => {
                Some(Tensor::randn(&[v, cfg.d_embed], 0.02, &mut rng))
            }
            _ => None,
        };
        let widths = [cfg.l_ast, cfg.l_cfg, cfg.l_dfg, cfg.d_embed];
        let proj = widths.map(|w| xavier(w, cfg.d, &mut rng));
        let w_o = [0, 1, 2, 3].map(|_| xavier(cfg.d, cfg.d, &mut rng));
        let head_proj = cfg.head_projections.then(|| {
            let d_k = cfg.d / cfg.n_heads;
            (0..4 * cfg.n_heads * 3)
                .map(|_| xavier(d_k, d_k, &mut rng))
                .collect()
        });
        let conv_std = (2.0 / (cfg.conv_kh * cfg.conv_kw) as f64).sqrt();
        let conv_kernels = Tensor::randn(
            &[cfg.conv_kernels, cfg.conv_kh, cfg.conv_kw],
            conv_std,
            &mut rng,
        );
        let mlp_w1 = xavier(cfg.mlp_hidden, cfg.conv_kernels, &mut rng);
        let mlp_b1 = Tensor::zeros(&[cfg.mlp_hidden]);
        let mlp_w2 = xavier(1, cfg.mlp_hidden, &mut rng);
        let mlp_b2 = Tensor::zeros(&[1]);
        ModelParams {
            embed_table,
            proj,
            w_o,
            head_proj,
            conv_kernels,
            mlp_w1,
            mlp_b1,
            mlp_w2,
            mlp_b2,
        }
    }

    /// Parameters as (name, tensor) pairs in the declared order.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        if let Some(t) = &self.embed_table {
            out.push(("embed_table".to_string(), t));
        }
        for (v, t) in self.proj.iter().enumerate() {
            out.push((format!("proj_{}", VIEW_NAMES[v]), t));
        }
        for (v, t) in self.w_o.iter().enumerate() {
            out.push((format!("w_o_{}", VIEW_NAMES[v]), t));
        }
        if let Some(hp) = &self.head_proj {
            let per_view = hp.len() / 4;
            for (i, t) in hp.iter().enumerate() {
                let view = i / per_view;
                let within = i % per_view;
                let role = ["q", "k", "v"][within % 3];
                out.push((
                    format!("headproj_{}_{}_{}", VIEW_NAMES[view], within / 3, role),
                    t,
                ));
            }
        }
        out.push(("conv_kernels".to_string(), &self.conv_kernels));
        out.push(("mlp_w1".to_string(), &self.mlp_w1));
        out.push(("mlp_b1".to_string(), &self.mlp_b1));
        out.push(("mlp_w2".to_string(), &self.mlp_w2));
        out.push(("mlp_b2".to_string(), &self.mlp_b2));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        if let Some(t) = &mut self.embed_table {
            out.push(("embed_table".to_string(), t));
        }
        for (v, t) in self.proj.iter_mut().enumerate() {
            out.push((format!("proj_{}", VIEW_NAMES[v]), t));
        }
        for (v, t) in self.w_o.iter_mut().enumerate() {
            out.push((format!("w_o_{}", VIEW_NAMES[v]), t));
        }
        if let Some(hp) = &mut self.head_proj {
            let per_view = hp.len() / 4;
            for (i, t) in hp.iter_mut().enumerate() {
                let view = i / per_view;
                let within = i % per_view;
                let role = ["q", "k", "v"][within % 3];
                out.push((
                    format!("headproj_{}_{}_{}", VIEW_NAMES[view], within / 3, role),
                    t,
                ));
            }
        }
        out.push(("conv_kernels".to_string(), &mut self.conv_kernels));
        out.push(("mlp_w1".to_string(), &mut self.mlp_w1));
        out.push(("mlp_b1".to_string(), &mut self.mlp_b1));
        out.push(("mlp_w2".to_string(), &mut self.mlp_w2));
        out.push(("mlp_b2".to_string(), &mut self.mlp_b2));
        out
    }

    pub fn param_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }
}

/// VarIds of all registered parameters inside one graph, in the same
/// order as [`ModelParams::named`].
pub struct ParamVars {
    pub table: Option<VarId>,
    pub proj: [VarId; 4],
    pub w_o: [VarId; 4],
    pub head_proj: Option<Vec<VarId>>,
    pub conv: VarId,
    pub w1: VarId,
    pub b1: VarId,
    pub w2: VarId,
    pub b2: VarId,
    pub ordered: Vec<(String, VarId)>,
}

pub fn register_params(g: &mut Graph, p: &ModelParams) -> Result<ParamVars> {
    let mut ordered = Vec::new();
    let reg = |g: &mut Graph, name: String, t: &Tensor, ordered: &mut Vec<(String, VarId)>| -> Result<VarId> {
        let id = g.leaf(t.clone())?;
        ordered.push((name, id));
        Ok(id)
    };
    let table = match &p.embed_table {
        Some(t) => Some(reg(g, "embed_table".to_string(), t, &mut ordered)?),
        None => None,
    };
    let mut proj = [VarId::default(); 4];
    for v in 0..4 {
        proj[v] = reg(g, format!("proj_{}", VIEW_NAMES[v]), &p.proj[v], &mut ordered)?;
    }
    let mut w_o = [VarId::default(); 4];
    for v in 0..4 {
        w_o[v] = reg(g, format!("w_o_{}", VIEW_NAMES[v]), &p.w_o[v], &mut ordered)?;
    }
    let head_proj = match &p.head_proj {
        Some(hp) => {
            let per_view = hp.len() / 4;
            let mut ids = Vec::with_capacity(hp.len());
            for (i, t) in hp.iter().enumerate() {
                let role = ["q", "k", "v"][(i % per_view) % 3];
                let name = format!(
                    "headproj_{}_{}_{}",
                    VIEW_NAMES[i / per_view],
                    (i % per_view) / 3,
                    role
                );
                ids.push(reg(g, name, t, &mut ordered)?);
            }
            Some(ids)
        }
        None => None,
    };
    let conv = reg(g, "conv_kernels".to_string(), &p.conv_kernels, &mut ordered)?;
    let w1 = reg(g, "mlp_w1".to_string(), &p.mlp_w1, &mut ordered)?;
    let b1 = reg(g, "mlp_b1".to_string(), &p.mlp_b1, &mut ordered)?;
    let w2 = reg(g, "mlp_w2".to_string(), &p.mlp_w2, &mut ordered)?;
    let b2 = reg(g, "mlp_b2".to_string(), &p.mlp_b2, &mut ordered)?;
    Ok(ParamVars {
        table,
        proj,
        w_o,
        head_proj,
        conv,
        w1,
        b1,
        w2,
        b2,
        ordered,
    })
}

/// A structural view padded (or truncated, with a warning) to its row
/// budget, ready to feed the projection.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedView {
    pub matrix: Tensor,
    pub valid: usize,
}

pub fn pad_adjacency(g: &ViewGraph, budget: usize) -> PaddedView {
    if g.n > budget {
        log::warn!("{} view with {} nodes truncated to {budget}", g.kind, g.n);
    }
    let valid = g.n.min(budget);
    let mut m = Tensor::zeros(&[budget, budget]);
    for i in 0..valid {
        for j in 0..valid {
            if g.has_edge(i, j) {
                m.set(i, j, 1.0);
            }
        }
    }
    PaddedView { matrix: m, valid }
}

/// The token view of one sample: ids into the trainable table, or a
/// precomputed constant matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum CssInput {
    /// Token ids, already truncated to the sequence budget.
    Ids(Vec<usize>),
    /// [t_max, d_embed] constant.
    Matrix(Tensor),
}

/// Everything the network needs for one snippet.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleInput {
    pub ast: PaddedView,
    pub cfg: PaddedView,
    pub dfg: PaddedView,
    pub css: CssInput,
    pub css_valid: usize,
    /// Optional sinusoidal position matrix added to the embedding rows.
    pub positions: Option<Tensor>,
}

/// Build the fused matrix for one sample: project each enabled view to
/// width d, run its encoder, zero its padding rows, and fuse. Disabled
/// views contribute exactly-zero blocks and touch no parameters.
pub fn build_fused(
    g: &mut Graph,
    pv: &ParamVars,
    input: &SampleInput,
    cfg: &RunConfig,
    mask: AblationMask,
) -> Result<VarId> {
    mask.validate()?;
    let mut blocks = Vec::with_capacity(4);
    for view in 0..4 {
        let rows = [cfg.l_ast, cfg.l_cfg, cfg.l_dfg, cfg.t_max][view];
        let valid = match view {
            0 => input.ast.valid,
            1 => input.cfg.valid,
            2 => input.dfg.valid,
            _ => input.css_valid,
        };
        if !mask.includes(view) || valid == 0 {
            g.set_context(format!("view {} (masked)", VIEW_NAMES[view]));
            blocks.push(g.leaf(Tensor::zeros(&[rows, cfg.d]))?);
            continue;
        }
        g.set_context(format!("view {}", VIEW_NAMES[view]));
        let raw = match view {
            0 => g.leaf(input.ast.matrix.clone())?,
            1 => g.leaf(input.cfg.matrix.clone())?,
            2 => g.leaf(input.dfg.matrix.clone())?,
            _ => {
                let base = match &input.css {
                    CssInput::Ids(ids) => {
                        let table = pv.table.ok_or_else(|| {
                            Error::config("token ids given but no embedding table")
                        })?;
                        g.gather(table, ids, cfg.t_max)?
                    }
                    CssInput::Matrix(m) => g.leaf(m.clone())?,
                };
                match &input.positions {
                    Some(pe) => g.add_const(base, pe)?,
                    None => base,
                }
            }
        };
        // Padding rows are zero before the encoder and zero after it, so
        // the encoder runs on the valid rows only and the block is padded
        // back afterwards. Key masking is implied: sliced keys are all
        // valid.
        let live = g.slice_rows(raw, valid)?;
        let projected = g.matmul(live, pv.proj[view])?;
        let hp = pv
            .head_proj
            .as_ref()
            .map(|ids| &ids[view * cfg.n_heads * 3..(view + 1) * cfg.n_heads * 3]);
        let encoded = mvsa(g, projected, cfg.n_heads, pv.w_o[view], hp, Some(valid))?;
        blocks.push(g.pad_rows(encoded, rows)?);
    }
    g.set_context("fusion");
    match cfg.fusion {
        FusionMode::RowConcat => g.concat_rows(&blocks),
        FusionMode::Sum => {
            let target = cfg.max_view_rows();
            let mut acc = g.pad_rows(blocks[0], target)?;
            for &b in &blocks[1..] {
                let padded = g.pad_rows(b, target)?;
                acc = g.add(acc, padded)?;
            }
            Ok(acc)
        }
        FusionMode::ColConcat => {
            let target = cfg.max_view_rows();
            let mut padded = Vec::with_capacity(4);
            for &b in &blocks {
                padded.push(g.pad_rows(b, target)?);
            }
            g.concat_cols(&padded)
        }
    }
}

/// Classifier head: valid convolution, ReLU, global average pool per
/// kernel, then a two-layer MLP ending in a sigmoid probability.
pub fn head_forward(g: &mut Graph, pv: &ParamVars, fused: VarId) -> Result<VarId> {
    g.set_context("classifier head");
    let conv = g.conv2d_valid(fused, pv.conv)?;
    let act = g.relu(conv)?;
    let pooled = g.global_avg_pool(act)?;
    let hidden = g.affine_vec(pooled, pv.w1, pv.b1)?;
    let hidden = g.relu(hidden)?;
    let logit = g.affine_vec(hidden, pv.w2, pv.b2)?;
    g.sigmoid(logit)
}

/// Full forward pass producing the vulnerability probability.
pub fn sample_probability(
    g: &mut Graph,
    pv: &ParamVars,
    input: &SampleInput,
    cfg: &RunConfig,
    mask: AblationMask,
) -> Result<VarId> {
    let fused = build_fused(g, pv, input, cfg, mask)?;
    head_forward(g, pv, fused)
}

/// Gradients for every parameter in declared order; parameters outside
/// the computation (masked views) get exact zeros.
pub fn collect_grads(g: &Graph, pv: &ParamVars) -> Result<Vec<Tensor>> {
    pv.ordered
        .iter()
        .map(|(name, id)| g.leaf_grad(*id, name))
        .collect()
}
