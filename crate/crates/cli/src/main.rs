//! Command-line interface: parse, graph, embed, train, eval, ablate, and
//! predict subcommands over the snippet classifier.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 input/parse
//! error, 3 numeric failure, 4 I/O error.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use viewfuse::config::{FusionMode, ProviderKind, RunConfig};
use viewfuse::embedding::{build_vocabulary, load_css_file, seeded_table, write_cssm, Vocabulary};
use viewfuse::error::Error;
use viewfuse::frontend::{parse_source, tokenize};
use viewfuse::graphs::{
    apply_metapath, build_ast_graph, build_cfg, build_dfg, export_dot, ViewGraph,
};
use viewfuse::nn::{
    checkpoint_header, config_from_header, load_checkpoint, save_checkpoint,
    validate_header_against, AblationMask,
};
use viewfuse::pipeline::{
    ablate, evaluate, load_dataset, predict, split, train, LabeledSnippet, Metrics, SplitSpec,
};

#[derive(Parser)]
#[command(
    name = "viewfuse",
    about = "Classify Java snippets as vulnerable by fusing syntax, control-flow, data-flow, and token views",
    version
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// Configuration: built-in defaults, overridden by --config file
/// key=value lines, overridden by these flags.
#[derive(Args, Debug, Clone)]
struct Overrides {
    /// Config file with key=value lines
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Common width d every view is projected to [default: 64]
    #[arg(long, global = true)]
    d: Option<usize>,
    /// Attention heads n_heads per view encoder [default: 4]
    #[arg(long, global = true)]
    n_heads: Option<usize>,
    /// Token embedding width d_embed [default: 64]
    #[arg(long, global = true)]
    d_embed: Option<usize>,
    /// Token sequence budget t_max [default: 512]
    #[arg(long, global = true)]
    t_max: Option<usize>,
    /// Syntax view row budget l_ast [default: 256]
    #[arg(long, global = true)]
    l_ast: Option<usize>,
    /// Control-flow view row budget l_cfg [default: 64]
    #[arg(long, global = true)]
    l_cfg: Option<usize>,
    /// Data-flow view row budget l_dfg [default: 64]
    #[arg(long, global = true)]
    l_dfg: Option<usize>,
    /// Convolution kernel count conv_kernels [default: 8]
    #[arg(long, global = true)]
    conv_kernels: Option<usize>,
    /// Kernel height conv_kh [default: 3]
    #[arg(long, global = true)]
    conv_kh: Option<usize>,
    /// Kernel width conv_kw [default: 3]
    #[arg(long, global = true)]
    conv_kw: Option<usize>,
    /// Classifier hidden width mlp_hidden [default: 32]
    #[arg(long, global = true)]
    mlp_hidden: Option<usize>,
    /// Adam learning rate lr [default: 1e-5]
    #[arg(long, global = true)]
    lr: Option<f64>,
    /// Batch size [default: 16]
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    /// Training epoch cap [default: 20]
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Seed for every random choice [default: 42]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Add reverse edges to structural views (metapath) [default: true]
    #[arg(long, global = true)]
    metapath: Option<bool>,
    /// Fusion mode [default: row_concat]
    #[arg(long, global = true, value_enum)]
    fusion: Option<FusionArg>,
    /// Embedding provider [default: learned]
    #[arg(long, global = true, value_enum)]
    provider: Option<ProviderArg>,
    /// Decision threshold [default: 0.5]
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Vocabulary min_count frequency cutoff [default: 1]
    #[arg(long, global = true)]
    min_count: Option<usize>,
    /// Learn per-head q/k/v projections (head_projections) [default: false]
    #[arg(long, global = true)]
    head_projections: Option<bool>,
    /// Add sinusoidal positions to embeddings [default: false]
    #[arg(long, global = true)]
    positions: Option<bool>,
    /// Split ratio train_ratio [default: 0.8]
    #[arg(long, global = true)]
    train_ratio: Option<f64>,
    /// Split ratio val_ratio [default: 0.1]
    #[arg(long, global = true)]
    val_ratio: Option<f64>,
    /// Split ratio test_ratio [default: 0.1]
    #[arg(long, global = true)]
    test_ratio: Option<f64>,
    /// Worker parallelism (jobs) [default: 1]
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory for produced artifacts
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FusionArg {
    RowConcat,
    Sum,
    ColConcat,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProviderArg {
    Learned,
    File,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ViewArg {
    Ast,
    Cfg,
    Dfg,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a snippet and print its syntax tree
    Parse {
        /// UTF-8 .java file
        input: PathBuf,
    },
    /// Build a structural view of a snippet and print it
    Graph {
        /// Which view to build
        #[arg(long, value_enum)]
        view: ViewArg,
        /// Emit DOT (default)
        #[arg(long, conflicts_with = "matrix")]
        dot: bool,
        /// Emit the adjacency matrix: first line n, then n rows of 0/1
        #[arg(long)]
        matrix: bool,
        /// Skip reverse-edge augmentation for this graph
        #[arg(long)]
        no_metapath: bool,
        input: PathBuf,
    },
    /// Produce a CSS embedding matrix file for one snippet
    Embed {
        /// Snippet to embed (learned provider)
        #[arg(long)]
        input: Option<PathBuf>,
        /// Existing CSSM file to validate (file provider)
        #[arg(long)]
        css: Option<PathBuf>,
        /// Vocabulary to encode with; built from the input when absent
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Train on a manifest dataset and write checkpoint + metric log
    Train {
        /// CSV manifest: path,label[,css]
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Evaluate a checkpoint on a manifest split
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Which split to evaluate: train, val, test, or all
        #[arg(long, default_value = "test")]
        split: String,
        /// Vocabulary path; defaults to vocab.json beside the checkpoint
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Train the full model and each single-view ablation, then report
    Ablate {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Classify one snippet with a trained checkpoint
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Vocabulary path; defaults to vocab.json beside the checkpoint
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// CSSM file for the file-backed provider
        #[arg(long)]
        css: Option<PathBuf>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version print and exit 0; real usage errors exit 1.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        Error::Parse(_) | Error::Dot { .. } | Error::Graph(_) | Error::Dataset { .. }
        | Error::Format(_) => 2,
        Error::NonFinite(_) => 3,
        Error::Io(_) => 4,
    }
}

fn build_config(ov: &Overrides) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &ov.config {
        cfg.apply_file(path)?;
    }
    apply_overrides(&mut cfg, ov);
    cfg.validate()?;
    Ok(cfg)
}

fn apply_overrides(cfg: &mut RunConfig, ov: &Overrides) {
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = ov.$field { cfg.$field = v; })*
        };
    }
    set!(
        d, n_heads, d_embed, t_max, l_ast, l_cfg, l_dfg, conv_kernels, conv_kh, conv_kw,
        mlp_hidden, lr, batch_size, epochs, seed, metapath, threshold, min_count,
        head_projections, positions, train_ratio, val_ratio, test_ratio, jobs
    );
    if let Some(f) = ov.fusion {
        cfg.fusion = match f {
            FusionArg::RowConcat => FusionMode::RowConcat,
            FusionArg::Sum => FusionMode::Sum,
            FusionArg::ColConcat => FusionMode::ColConcat,
        };
    }
    if let Some(p) = ov.provider {
        cfg.provider = match p {
            ProviderArg::Learned => ProviderKind::Learned,
            ProviderArg::File => ProviderKind::FileBacked,
        };
    }
}

/// For eval/predict the checkpoint header is the config source; any
/// explicitly passed architecture flag must agree with it.
fn config_from_checkpoint(
    header: &[(String, String)],
    ov: &Overrides,
) -> Result<(RunConfig, usize, AblationMask), Error> {
    let (mut cfg, vocab_size, mask) = config_from_header(header)?;
    // Requested config: defaults + file + flags, used only for validation.
    let mut requested = RunConfig::default();
    if let Some(path) = &ov.config {
        requested.apply_file(path)?;
    }
    apply_overrides(&mut requested, ov);
    validate_header_against(header, &merge_arch(&cfg, &requested, ov))?;
    // Runtime knobs come from the request.
    cfg.jobs = requested.jobs;
    cfg.seed = requested.seed;
    cfg.train_ratio = requested.train_ratio;
    cfg.val_ratio = requested.val_ratio;
    cfg.test_ratio = requested.test_ratio;
    Ok((cfg, vocab_size, mask))
}

/// Architecture fields the user did not explicitly set are taken from the
/// header so validation only bites on real conflicts.
fn merge_arch(header_cfg: &RunConfig, requested: &RunConfig, ov: &Overrides) -> RunConfig {
    let mut merged = header_cfg.clone();
    macro_rules! adopt {
        ($($field:ident),*) => {
            $(if ov.$field.is_some() { merged.$field = requested.$field; })*
        };
    }
    adopt!(
        d, n_heads, d_embed, t_max, l_ast, l_cfg, l_dfg, conv_kernels, conv_kh, conv_kw,
        mlp_hidden, threshold, metapath, positions, head_projections
    );
    if ov.fusion.is_some() {
        merged.fusion = requested.fusion;
    }
    if ov.provider.is_some() {
        merged.provider = requested.provider;
    }
    merged
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Parse { ref input } => cmd_parse(input),
        Command::Graph {
            view,
            matrix,
            no_metapath,
            ref input,
            ..
        } => {
            let cfg = build_config(&cli.overrides)?;
            cmd_graph(&cfg, view, matrix, no_metapath, input)
        }
        Command::Embed {
            ref input,
            ref css,
            ref vocab,
        } => {
            let cfg = build_config(&cli.overrides)?;
            cmd_embed(&cfg, &cli.overrides, input.as_deref(), css.as_deref(), vocab.as_deref())
        }
        Command::Train { ref manifest } => {
            let cfg = build_config(&cli.overrides)?;
            cmd_train(&cfg, &cli.overrides, manifest)
        }
        Command::Eval {
            ref checkpoint,
            ref manifest,
            ref split,
            ref vocab,
        } => cmd_eval(&cli.overrides, checkpoint, manifest, split, vocab.as_deref()),
        Command::Ablate { ref manifest } => {
            let cfg = build_config(&cli.overrides)?;
            cmd_ablate(&cfg, &cli.overrides, manifest)
        }
        Command::Predict {
            ref checkpoint,
            ref input,
            ref vocab,
            ref css,
        } => cmd_predict(&cli.overrides, checkpoint, input, vocab.as_deref(), css.as_deref()),
    }
}

fn read_source(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(Error::Io)
}

fn cmd_parse(input: &Path) -> Result<(), Error> {
    let source = read_source(input)?;
    let tree = parse_source(&source).map_err(Error::Parse)?;
    print!("{}", tree.pretty());
    Ok(())
}

fn build_view(
    cfg: &RunConfig,
    view: ViewArg,
    no_metapath: bool,
    source: &str,
) -> Result<ViewGraph, Error> {
    let tree = parse_source(source).map_err(Error::Parse)?;
    let g = match view {
        ViewArg::Ast => build_ast_graph(&tree),
        ViewArg::Cfg => build_cfg(&tree)?,
        ViewArg::Dfg => build_dfg(&tree)?,
    };
    Ok(if cfg.metapath && !no_metapath {
        apply_metapath(&g)
    } else {
        g
    })
}

fn cmd_graph(
    cfg: &RunConfig,
    view: ViewArg,
    matrix: bool,
    no_metapath: bool,
    input: &Path,
) -> Result<(), Error> {
    let source = read_source(input)?;
    let g = build_view(cfg, view, no_metapath, &source)?;
    if matrix {
        let mut out = String::new();
        out.push_str(&format!("{}\n", g.n));
        for i in 0..g.n {
            let row: Vec<String> = (0..g.n)
                .map(|j| if g.has_edge(i, j) { "1".into() } else { "0".into() })
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        print!("{out}");
    } else {
        print!("{}", export_dot(&g));
    }
    Ok(())
}

fn cmd_embed(
    cfg: &RunConfig,
    ov: &Overrides,
    input: Option<&Path>,
    css: Option<&Path>,
    vocab_path: Option<&Path>,
) -> Result<(), Error> {
    match cfg.provider {
        ProviderKind::FileBacked => {
            let css = css.ok_or_else(|| {
                Error::config("file provider needs --css pointing at a CSSM file")
            })?;
            let m = load_css_file(css, cfg.t_max, cfg.d_embed)?;
            println!("{} {} {}", m.rows(), m.cols(), m.valid_len);
            Ok(())
        }
        ProviderKind::Learned => {
            let input = input.ok_or_else(|| Error::config("learned provider needs --input"))?;
            let source = read_source(input)?;
            let tokens = tokenize(&source).map_err(Error::Parse)?;
            let vocab = match vocab_path {
                Some(p) => Vocabulary::load(p)?,
                None => build_vocabulary(&[tokens.clone()], cfg.min_count)?,
            };
            let table = seeded_table(vocab.size(), cfg.d_embed, cfg.seed);
            let m = viewfuse::embedding::encode_learned(
                &tokens,
                &vocab,
                &table,
                cfg.t_max,
                cfg.positions,
            );
            let out_dir = ov.out.clone().unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&out_dir)?;
            let stem = input
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| "snippet".to_string());
            let path = out_dir.join(format!("{stem}.cssm"));
            let data: Vec<f32> = m.data().iter().map(|&v| v as f32).collect();
            write_cssm(&path, m.rows() as u32, m.cols() as u32, &data)?;
            println!("{} {} {} {}", path.display(), m.rows(), m.cols(), m.valid_len);
            Ok(())
        }
    }
}

fn out_dir(ov: &Overrides) -> Result<PathBuf, Error> {
    let dir = ov.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn split_dataset(
    cfg: &RunConfig,
    manifest: &Path,
) -> Result<(Vec<LabeledSnippet>, Vec<LabeledSnippet>, Vec<LabeledSnippet>), Error> {
    let dataset = load_dataset(manifest)?;
    let spec = SplitSpec::new(cfg.train_ratio, cfg.val_ratio, cfg.test_ratio, cfg.seed)?;
    split(&dataset, &spec)
}

fn write_metrics_log(path: &Path, rows: &[viewfuse::pipeline::EpochRow]) -> Result<(), Error> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "epoch,split,loss,accuracy,precision,recall,f1")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.epoch, r.split, r.loss, r.metrics.accuracy, r.metrics.precision,
            r.metrics.recall, r.metrics.f1
        )?;
    }
    Ok(())
}

fn write_produced(dir: &Path, names: &[&str]) -> Result<(), Error> {
    let mut f = std::fs::File::create(dir.join("files.txt"))?;
    for n in names {
        writeln!(f, "{n}")?;
    }
    Ok(())
}

fn cmd_train(cfg: &RunConfig, ov: &Overrides, manifest: &Path) -> Result<(), Error> {
    let (train_set, val_set, test_set) = split_dataset(cfg, manifest)?;
    let out = train(&train_set, &val_set, cfg, AblationMask::full())?;
    eprintln!("parameters: {}", out.param_count);

    let dir = out_dir(ov)?;
    let header = checkpoint_header(
        cfg,
        out.vocab.as_ref().map(|v| v.size()).unwrap_or(0),
        AblationMask::full(),
    );
    save_checkpoint(&dir.join("checkpoint.vfck"), &header, &out.params)?;
    let mut produced = vec!["checkpoint.vfck", "metrics.csv"];
    if let Some(vocab) = &out.vocab {
        vocab.save(&dir.join("vocab.json"))?;
        produced.push("vocab.json");
    }
    write_metrics_log(&dir.join("metrics.csv"), &out.log)?;
    produced.push("files.txt");
    write_produced(&dir, &produced)?;

    let (test_metrics, _) = evaluate(
        &out.params,
        out.vocab.as_ref(),
        &test_set,
        cfg,
        AblationMask::full(),
    )?;
    println!(
        "train done: epochs={} best_epoch={} test_accuracy={:.6} test_f1={:.6}",
        cfg.epochs,
        out.best_epoch.map(|e| e.to_string()).unwrap_or_else(|| "-".into()),
        test_metrics.accuracy,
        test_metrics.f1
    );
    Ok(())
}

fn load_vocab_for(
    checkpoint: &Path,
    vocab: Option<&Path>,
    cfg: &RunConfig,
    vocab_size: usize,
) -> Result<Option<Vocabulary>, Error> {
    if cfg.provider != ProviderKind::Learned {
        return Ok(None);
    }
    let path = match vocab {
        Some(p) => p.to_path_buf(),
        None => checkpoint
            .parent()
            .unwrap_or(Path::new("."))
            .join("vocab.json"),
    };
    let v = Vocabulary::load(&path)?;
    if v.size() != vocab_size {
        return Err(Error::config(format!(
            "vocabulary size {} does not match checkpoint vocab_size {vocab_size}",
            v.size()
        )));
    }
    Ok(Some(v))
}

fn metrics_line(m: &Metrics) -> String {
    format!(
        "{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
        m.true_pos, m.false_pos, m.true_neg, m.false_neg, m.accuracy, m.precision, m.recall, m.f1
    )
}

fn cmd_eval(
    ov: &Overrides,
    checkpoint: &Path,
    manifest: &Path,
    which: &str,
    vocab: Option<&Path>,
) -> Result<(), Error> {
    let (header, params) = load_checkpoint(checkpoint)?;
    let (cfg, vocab_size, mask) = config_from_checkpoint(&header, ov)?;
    let vocab = load_vocab_for(checkpoint, vocab, &cfg, vocab_size)?;
    let (train_set, val_set, test_set) = split_dataset(&cfg, manifest)?;
    let chosen: Vec<LabeledSnippet> = match which {
        "train" => train_set,
        "val" => val_set,
        "test" => test_set,
        "all" => train_set.into_iter().chain(val_set).chain(test_set).collect(),
        other => return Err(Error::config(format!("unknown split '{other}'"))),
    };
    let (m, loss) = evaluate(&params, vocab.as_ref(), &chosen, &cfg, mask)?;
    println!("tp,fp,tn,fn,accuracy,precision,recall,f1");
    println!("{}", metrics_line(&m));
    log::info!("mean loss {loss:.6}");
    if ov.out.is_some() {
        let dir = out_dir(ov)?;
        let mut f = std::fs::File::create(dir.join("eval.csv"))?;
        writeln!(f, "tp,fp,tn,fn,accuracy,precision,recall,f1")?;
        writeln!(f, "{}", metrics_line(&m))?;
        write_produced(&dir, &["eval.csv", "files.txt"])?;
    }
    Ok(())
}

fn cmd_ablate(cfg: &RunConfig, ov: &Overrides, manifest: &Path) -> Result<(), Error> {
    let (train_set, val_set, test_set) = split_dataset(cfg, manifest)?;
    let rows = ablate(&train_set, &val_set, &test_set, cfg)?;
    let dir = out_dir(ov)?;
    let mut f = std::fs::File::create(dir.join("ablation.csv"))?;
    writeln!(f, "mask,accuracy,precision,recall,f1")?;
    println!("mask,accuracy,precision,recall,f1");
    for (mask, m) in &rows {
        let line = format!(
            "{mask},{:.6},{:.6},{:.6},{:.6}",
            m.accuracy, m.precision, m.recall, m.f1
        );
        writeln!(f, "{line}")?;
        println!("{line}");
    }
    write_produced(&dir, &["ablation.csv", "files.txt"])?;
    Ok(())
}

fn cmd_predict(
    ov: &Overrides,
    checkpoint: &Path,
    input: &Path,
    vocab: Option<&Path>,
    css: Option<&Path>,
) -> Result<(), Error> {
    let (header, params) = load_checkpoint(checkpoint)?;
    let (cfg, vocab_size, mask) = config_from_checkpoint(&header, ov)?;
    let vocab = load_vocab_for(checkpoint, vocab, &cfg, vocab_size)?;
    let source = read_source(input)?;
    let (label, p) = predict(&params, vocab.as_ref(), &cfg, mask, &source, css)?;
    println!("{label} {p:.6}");
    Ok(())
}
