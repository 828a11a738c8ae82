//! Write a synthetic hardcoded-credential corpus to disk for trying the
//! CLI: `cargo run --example gen_corpus -- <dir> [seed]`.

use viewfuse::pipeline::synth::{case2_pair, generate_corpus, write_corpus_dir};

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = std::path::PathBuf::from(args.next().unwrap_or_else(|| "corpus".to_string()));
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(42);
    let corpus = generate_corpus(seed, 32, 8, 8);
    let manifest = write_corpus_dir(&dir, &corpus).expect("write corpus");
    let (vul, fix) = case2_pair();
    std::fs::write(dir.join("case2_vul.java"), vul).expect("write case file");
    std::fs::write(dir.join("case2_fix.java"), fix).expect("write case file");
    println!("{}", manifest.display());
}
