//! Training loop, evaluation, ablation runs, and single-snippet
//! prediction.

use super::dataset::LabeledSnippet;
use super::metrics::Metrics;
use crate::config::{ProviderKind, RunConfig};
use crate::embedding::{build_vocabulary, load_css_file, sinusoid, Vocabulary};
use crate::error::{Error, Result};
use crate::frontend::{parse, tokenize, Token};
use crate::graphs::{apply_metapath, build_ast_graph, build_cfg, build_dfg};
use crate::nn::{
    collect_grads, pad_adjacency, register_params, sample_probability, AblationMask, AdamState,
    CssInput, Graph, ModelParams, SampleInput, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// A snippet preprocessed into network inputs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub id: String,
    pub label: f64,
    pub input: SampleInput,
}

fn snippet_tokens(snippet: &LabeledSnippet) -> Result<Vec<Token>> {
    tokenize(&snippet.source).map_err(Error::Parse)
}

/// Parse and build the three structural views plus the token view for one
/// snippet.
pub fn prepare_snippet(
    snippet: &LabeledSnippet,
    cfg: &RunConfig,
    vocab: Option<&Vocabulary>,
) -> Result<Prepared> {
    let tokens = snippet_tokens(snippet)?;
    let tree = parse(tokens.clone()).map_err(Error::Parse)?;
    let mut ast = build_ast_graph(&tree);
    let mut cfg_view = build_cfg(&tree)?;
    let mut dfg = build_dfg(&tree)?;
    if cfg.metapath {
        ast = apply_metapath(&ast);
        cfg_view = apply_metapath(&cfg_view);
        dfg = apply_metapath(&dfg);
    }

    let (css, css_valid) = match cfg.provider {
        ProviderKind::Learned => {
            let vocab = vocab.ok_or_else(|| {
                Error::config("learned provider requires a vocabulary")
            })?;
            let mut ids = vocab.encode(&tokens);
            ids.truncate(cfg.t_max);
            let valid = ids.len();
            (CssInput::Ids(ids), valid)
        }
        ProviderKind::FileBacked => {
            let path = snippet.css_path.as_ref().ok_or_else(|| {
                Error::config(format!(
                    "snippet '{}' has no css file for the file-backed provider",
                    snippet.id
                ))
            })?;
            let m = load_css_file(path, cfg.t_max, cfg.d_embed)?;
            let valid = m.valid_len;
            (CssInput::Matrix(m.to_tensor()), valid)
        }
    };

    let positions = cfg.positions.then(|| {
        let mut pe = Tensor::zeros(&[cfg.t_max, cfg.d_embed]);
        for t in 0..css_valid {
            for c in 0..cfg.d_embed {
                pe.set(t, c, sinusoid(t, c, cfg.d_embed));
            }
        }
        pe
    });

    Ok(Prepared {
        id: snippet.id.clone(),
        label: snippet.label as f64,
        input: SampleInput {
            ast: pad_adjacency(&ast, cfg.l_ast),
            cfg: pad_adjacency(&cfg_view, cfg.l_cfg),
            dfg: pad_adjacency(&dfg, cfg.l_dfg),
            css,
            css_valid,
            positions,
        },
    })
}

fn prepare_all(
    snippets: &[LabeledSnippet],
    cfg: &RunConfig,
    vocab: Option<&Vocabulary>,
) -> Result<Vec<Prepared>> {
    let wrap = |s: &LabeledSnippet| {
        prepare_snippet(s, cfg, vocab).map_err(|e| contextualize(e, &s.id))
    };
    if cfg.jobs <= 1 {
        snippets.iter().map(wrap).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::config(format!("worker pool: {e}")))?;
        pool.install(|| snippets.par_iter().map(wrap).collect())
    }
}

fn contextualize(e: Error, id: &str) -> Error {
    match e {
        Error::Parse(d) => Error::Parse(crate::frontend::ParseDiagnostic {
            message: format!("{id}: {}", d.message),
            ..d
        }),
        other => other,
    }
}

/// One metric-log row, as written to the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub split: &'static str,
    pub loss: f64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// Best-validation-F1 parameters (final parameters when no validation
    /// set is given).
    pub params: ModelParams,
    pub vocab: Option<Vocabulary>,
    pub log: Vec<EpochRow>,
    pub best_epoch: Option<usize>,
    pub param_count: usize,
}

/// Probability of every prepared sample under fixed parameters, in input
/// order. Evaluation-only: the graph is dropped after each sample.
fn probabilities(
    params: &ModelParams,
    prepared: &[Prepared],
    cfg: &RunConfig,
    mask: AblationMask,
) -> Result<Vec<f64>> {
    let eval_one = |p: &Prepared| -> Result<f64> {
        let mut g = Graph::new();
        let pv = register_params(&mut g, params)?;
        let prob = sample_probability(&mut g, &pv, &p.input, cfg, mask)?;
        Ok(g.value(prob).item())
    };
    if cfg.jobs <= 1 {
        prepared.iter().map(eval_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::config(format!("worker pool: {e}")))?;
        pool.install(|| prepared.par_iter().map(eval_one).collect())
    }
}

/// Threshold probabilities and accumulate confusion counts plus the mean
/// cross-entropy. The reduction runs serially in input order.
fn score(probs: &[f64], prepared: &[Prepared], threshold: f64) -> Result<(Metrics, f64)> {
    let (mut tp, mut fp, mut tn, mut fnn) = (0u64, 0u64, 0u64, 0u64);
    let mut loss_sum = 0.0;
    for (p, sample) in probs.iter().zip(prepared) {
        loss_sum += crate::nn::ce_loss(*p, sample.label)?;
        let predicted = *p >= threshold;
        let actual = sample.label >= 0.5;
        match (predicted, actual) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fnn += 1,
        }
    }
    let n = prepared.len().max(1) as f64;
    Ok((Metrics::from_counts(tp, fp, tn, fnn), loss_sum / n))
}

fn evaluate_prepared(
    params: &ModelParams,
    prepared: &[Prepared],
    cfg: &RunConfig,
    mask: AblationMask,
) -> Result<(Metrics, f64)> {
    let probs = probabilities(params, prepared, cfg, mask)?;
    score(&probs, prepared, cfg.threshold)
}

/// Train on the given splits. Per epoch: seeded shuffle, batches of
/// `batch_size` (the last partial batch kept), forward, mean
/// cross-entropy, backward, Adam step; then train and validation metrics
/// are logged and the best-validation-F1 checkpoint is retained.
pub fn train(
    train_set: &[LabeledSnippet],
    val_set: &[LabeledSnippet],
    cfg: &RunConfig,
    mask: AblationMask,
) -> Result<TrainOutput> {
    cfg.validate()?;
    mask.validate()?;
    if train_set.is_empty() {
        return Err(Error::config("training set is empty"));
    }

    // Vocabulary from the training split only.
    let vocab = match cfg.provider {
        ProviderKind::Learned => {
            let corpus: Vec<Vec<Token>> = train_set
                .iter()
                .map(snippet_tokens)
                .collect::<Result<_>>()?;
            Some(build_vocabulary(&corpus, cfg.min_count)?)
        }
        ProviderKind::FileBacked => None,
    };

    let train_prepared = prepare_all(train_set, cfg, vocab.as_ref())?;
    let val_prepared = prepare_all(val_set, cfg, vocab.as_ref())?;

    let mut params = ModelParams::init(cfg, vocab.as_ref().map(|v| v.size()), cfg.seed);
    let param_count = params.param_count();
    let mut adam = AdamState::new(cfg.lr, &params);

    let mut log = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train_prepared.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(
            cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }

        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            step_batch(&mut params, &mut adam, &train_prepared, batch, cfg, mask).map_err(
                |e| match e {
                    Error::NonFinite(what) => Error::NonFinite(format!(
                        "{what} at epoch {epoch}, batch {batch_idx}"
                    )),
                    other => other,
                },
            )?;
        }

        let (train_metrics, train_loss) = evaluate_prepared(&params, &train_prepared, cfg, mask)?;
        log.push(EpochRow {
            epoch,
            split: "train",
            loss: train_loss,
            metrics: train_metrics,
        });
        if !val_prepared.is_empty() {
            let (val_metrics, val_loss) = evaluate_prepared(&params, &val_prepared, cfg, mask)?;
            log.push(EpochRow {
                epoch,
                split: "val",
                loss: val_loss,
                metrics: val_metrics,
            });
            let better = match &best {
                Some((f1, _, _)) => val_metrics.f1 > *f1,
                None => true,
            };
            if better {
                best = Some((val_metrics.f1, epoch, params.clone()));
            }
        }
    }

    let (params, best_epoch) = match best {
        Some((_, epoch, p)) => (p, Some(epoch)),
        None => (params, None),
    };
    Ok(TrainOutput {
        params,
        vocab,
        log,
        best_epoch,
        param_count,
    })
}

fn step_batch(
    params: &mut ModelParams,
    adam: &mut AdamState,
    prepared: &[Prepared],
    batch: &[usize],
    cfg: &RunConfig,
    mask: AblationMask,
) -> Result<()> {
    let mut g = Graph::new();
    let pv = register_params(&mut g, params)?;
    let mut losses = Vec::with_capacity(batch.len());
    for &idx in batch {
        let sample = &prepared[idx];
        let p = sample_probability(&mut g, &pv, &sample.input, cfg, mask)?;
        losses.push(g.bce_loss(p, sample.label)?);
    }
    let mean = g.mean_scalars(&losses)?;
    g.backward(mean)?;
    let grads = collect_grads(&g, &pv)?;
    adam.step(params, &grads)
}

/// Evaluate parameters on labeled snippets: probability at least the
/// threshold predicts 1, confusion counts accumulate, derived metrics
/// follow the documented conventions.
pub fn evaluate(
    params: &ModelParams,
    vocab: Option<&Vocabulary>,
    snippets: &[LabeledSnippet],
    cfg: &RunConfig,
    mask: AblationMask,
) -> Result<(Metrics, f64)> {
    let prepared = prepare_all(snippets, cfg, vocab)?;
    evaluate_prepared(params, &prepared, cfg, mask)
}

/// Full pipeline on one snippet: parse failure is an error, not a
/// prediction. Returns (label, probability).
pub fn predict(
    params: &ModelParams,
    vocab: Option<&Vocabulary>,
    cfg: &RunConfig,
    mask: AblationMask,
    source: &str,
    css_path: Option<&std::path::Path>,
) -> Result<(u8, f64)> {
    let snippet = LabeledSnippet {
        id: "<input>".to_string(),
        source: source.to_string(),
        label: 0,
        css_path: css_path.map(|p| p.to_path_buf()),
    };
    let prepared = prepare_snippet(&snippet, cfg, vocab)?;
    let mut g = Graph::new();
    let pv = register_params(&mut g, params)?;
    let prob = sample_probability(&mut g, &pv, &prepared.input, cfg, mask)?;
    let p = g.value(prob).item();
    Ok((u8::from(p >= cfg.threshold), p))
}

/// The standard five ablation rows, trained and evaluated with identical
/// seeds: full, then each view removed one at a time.
pub fn standard_masks() -> [AblationMask; 5] {
    [
        AblationMask::full(),
        AblationMask::without(0),
        AblationMask::without(1),
        AblationMask::without(2),
        AblationMask::without(3),
    ]
}

/// Train and evaluate the full model and each single-view-removed mask.
pub fn ablate(
    train_set: &[LabeledSnippet],
    val_set: &[LabeledSnippet],
    test_set: &[LabeledSnippet],
    cfg: &RunConfig,
) -> Result<Vec<(String, Metrics)>> {
    let mut rows = Vec::with_capacity(5);
    for mask in standard_masks() {
        let out = train(train_set, val_set, cfg, mask)?;
        let (metrics, _) = evaluate(&out.params, out.vocab.as_ref(), test_set, cfg, mask)?;
        rows.push((mask.name(), metrics));
    }
    Ok(rows)
}

/// Token-id view of a source snippet, used by tests asserting vocabulary
/// behavior.
pub fn encode_source(source: &str, vocab: &Vocabulary, t_max: usize) -> Result<Vec<usize>> {
    let tokens = tokenize(source).map_err(Error::Parse)?;
    let mut ids = vocab.encode(&tokens);
    ids.truncate(t_max);
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::synth;

    fn tiny_cfg() -> RunConfig {
        RunConfig {
            d: 8,
            n_heads: 2,
            d_embed: 8,
            t_max: 96,
            l_ast: 160,
            l_cfg: 16,
            l_dfg: 16,
            conv_kernels: 2,
            conv_kh: 2,
            conv_kw: 2,
            mlp_hidden: 4,
            lr: 1e-3,
            batch_size: 4,
            epochs: 2,
            seed: 5,
            ..RunConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_params_and_empty_log() {
        let corpus = synth::generate_corpus(3, 3, 1, 1);
        let cfg = RunConfig {
            epochs: 0,
            ..tiny_cfg()
        };
        let out = train(&corpus.train, &corpus.val, &cfg, AblationMask::full()).unwrap();
        assert!(out.log.is_empty());
        assert_eq!(out.best_epoch, None);
        let fresh = ModelParams::init(&cfg, out.vocab.as_ref().map(|v| v.size()), cfg.seed);
        assert_eq!(out.params, fresh);
    }

    #[test]
    fn training_is_bit_deterministic() {
        let corpus = synth::generate_corpus(4, 3, 1, 1);
        let cfg = tiny_cfg();
        let a = train(&corpus.train, &corpus.val, &cfg, AblationMask::full()).unwrap();
        let b = train(&corpus.train, &corpus.val, &cfg, AblationMask::full()).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn loss_decreases_over_first_steps_on_fixed_batch() {
        let corpus = synth::generate_corpus(5, 4, 1, 1);
        let cfg = RunConfig {
            batch_size: 8,
            ..tiny_cfg()
        };
        let tokens: Vec<Vec<Token>> = corpus
            .train
            .iter()
            .map(|s| tokenize(&s.source).unwrap())
            .collect();
        let vocab = build_vocabulary(&tokens, 1).unwrap();
        let prepared = prepare_all(&corpus.train[..8], &cfg, Some(&vocab)).unwrap();
        let mut params = ModelParams::init(&cfg, Some(vocab.size()), cfg.seed);
        let mut adam = AdamState::new(cfg.lr, &params);
        let batch: Vec<usize> = (0..8).collect();
        let mask = AblationMask::full();

        let loss_of = |params: &ModelParams| -> f64 {
            let mut g = Graph::new();
            let pv = register_params(&mut g, params).unwrap();
            let mut losses = Vec::new();
            for p in &prepared {
                let prob = sample_probability(&mut g, &pv, &p.input, &cfg, mask).unwrap();
                losses.push(g.bce_loss(prob, p.label).unwrap());
            }
            let mean = g.mean_scalars(&losses).unwrap();
            g.value(mean).item()
        };

        let mut last = loss_of(&params);
        for _ in 0..5 {
            step_batch(&mut params, &mut adam, &prepared, &batch, &cfg, mask).unwrap();
            let now = loss_of(&params);
            assert!(now < last, "loss must strictly decrease: {now} !< {last}");
            last = now;
        }
    }

    #[test]
    fn evaluate_is_order_independent() {
        let corpus = synth::generate_corpus(6, 3, 1, 1);
        let cfg = RunConfig {
            epochs: 1,
            ..tiny_cfg()
        };
        let out = train(&corpus.train, &corpus.val, &cfg, AblationMask::full()).unwrap();
        let (m1, _) = evaluate(
            &out.params,
            out.vocab.as_ref(),
            &corpus.test,
            &cfg,
            AblationMask::full(),
        )
        .unwrap();
        let mut reversed = corpus.test.clone();
        reversed.reverse();
        let (m2, _) = evaluate(
            &out.params,
            out.vocab.as_ref(),
            &reversed,
            &cfg,
            AblationMask::full(),
        )
        .unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn parse_failure_in_predict_is_an_error() {
        let cfg = tiny_cfg();
        let corpus = synth::generate_corpus(7, 3, 1, 1);
        let out = train(&corpus.train, &corpus.val, &cfg, AblationMask::full()).unwrap();
        let res = predict(
            &out.params,
            out.vocab.as_ref(),
            &cfg,
            AblationMask::full(),
            "int broken(  {",
            None,
        );
        assert!(matches!(res, Err(Error::Parse(_))));
    }

    #[test]
    fn jobs_parallelism_matches_serial_results() {
        let corpus = synth::generate_corpus(8, 4, 1, 1);
        let serial_cfg = tiny_cfg();
        let parallel_cfg = RunConfig {
            jobs: 4,
            ..tiny_cfg()
        };
        let a = train(&corpus.train, &corpus.val, &serial_cfg, AblationMask::full()).unwrap();
        let b = train(&corpus.train, &corpus.val, &parallel_cfg, AblationMask::full()).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log, b.log);
    }
}
