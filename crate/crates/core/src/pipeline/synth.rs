//! Synthetic hardcoded-credential corpus generator.
//!
//! Snippets come in matched pairs built from one randomly drawn template:
//! the vulnerable member resolves its credential from a hardcoded string
//! literal, the safe member resolves it from the externally supplied
//! argument. Both members of a pair share every other token, so their
//! syntax trees have identical shape and all three structural adjacency
//! matrices are equal — the class signal lives only in the token text.
//! Structural variation (filler statements, loop style, guard) is drawn
//! per pair, independent of the label.

use super::dataset::LabeledSnippet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const METHODS: [&str; 6] = [
    "login",
    "openSession",
    "authorize",
    "initAccount",
    "verifyUser",
    "bindClient",
];
const USERS: [&str; 4] = ["user", "account", "principal", "client"];
const ENVS: [&str; 4] = ["env", "config", "request", "context"];
const PWDS: [&str; 4] = ["password", "secret", "credential", "accessKey"];
const STATUSES: [&str; 4] = ["status", "code", "result", "outcome"];
const FILLERS: [&str; 4] = ["tag", "scope", "region", "mode"];
const RESOLVERS: [&str; 3] = ["resolve", "lookup", "derive"];
const CONNECTORS: [&str; 3] = ["connect", "openChannel", "attach"];
const FILLER_FNS: [&str; 2] = ["trim", "normalize"];
const POLL_FNS: [&str; 2] = ["poll", "retry"];
const LITERALS: [&str; 4] = ["\"hunter2\"", "\"s3cr3t!\"", "\"letmein\"", "\"p4ssw0rd\""];

fn pick<'a, R: Rng>(rng: &mut R, pool: &[&'a str]) -> &'a str {
    pool[rng.random_range(0..pool.len())]
}

/// Everything that varies between pairs but not within one.
struct Template {
    method: String,
    user: String,
    env: String,
    pwd: String,
    status: String,
    resolver: String,
    connector: String,
    literal: String,
    fillers: Vec<(String, String)>, // (var, fn)
    loop_style: u8,                 // 0 none, 1 for, 2 while
    guard: bool,
    throws: bool,
}

impl Template {
    fn draw<R: Rng>(rng: &mut R) -> Self {
        let n_fillers = rng.random_range(0..=2);
        let mut filler_vars: Vec<&str> = FILLERS.to_vec();
        let fillers = (0..n_fillers)
            .map(|_| {
                let idx = rng.random_range(0..filler_vars.len());
                let var = filler_vars.remove(idx);
                (var.to_string(), pick(rng, &FILLER_FNS).to_string())
            })
            .collect();
        Template {
            method: pick(rng, &METHODS).to_string(),
            user: pick(rng, &USERS).to_string(),
            env: pick(rng, &ENVS).to_string(),
            pwd: pick(rng, &PWDS).to_string(),
            status: pick(rng, &STATUSES).to_string(),
            resolver: pick(rng, &RESOLVERS).to_string(),
            connector: pick(rng, &CONNECTORS).to_string(),
            literal: pick(rng, &LITERALS).to_string(),
            fillers,
            loop_style: rng.random_range(0..3),
            guard: rng.random_bool(0.5),
            throws: rng.random_bool(0.5),
        }
    }

    /// Render the snippet. The only token that depends on `vulnerable` is
    /// the resolver's second argument: a string literal versus the
    /// external parameter.
    fn render(&self, vulnerable: bool) -> String {
        let mut out = String::new();
        let throws = if self.throws { " throws Exception" } else { "" };
        out.push_str(&format!(
            "int {}(String {}, String {}){} {{\n",
            self.method, self.user, self.env, throws
        ));
        for (var, f) in &self.fillers {
            out.push_str(&format!("    String {var} = {f}({});\n", self.env));
        }
        let second_arg = if vulnerable { &self.literal } else { &self.env };
        out.push_str(&format!(
            "    String {} = {}({}, {});\n",
            self.pwd, self.resolver, self.env, second_arg
        ));
        out.push_str(&format!(
            "    int {} = {}({}, {});\n",
            self.status, self.connector, self.user, self.pwd
        ));
        match self.loop_style {
            1 => out.push_str(&format!(
                "    for (int i = 0; i < 3; i++) {{\n        {st} += {poll}({st});\n    }}\n",
                st = self.status,
                poll = POLL_FNS[0]
            )),
            2 => out.push_str(&format!(
                "    while ({st} < 3) {{\n        {st} += {poll}({st});\n    }}\n",
                st = self.status,
                poll = POLL_FNS[1]
            )),
            _ => {}
        }
        if self.guard {
            out.push_str(&format!(
                "    if ({st} > 0) {{\n        audit({st});\n    }}\n",
                st = self.status
            ));
        }
        out.push_str(&format!("    return {};\n}}\n", self.status));
        out
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub train: Vec<LabeledSnippet>,
    pub val: Vec<LabeledSnippet>,
    pub test: Vec<LabeledSnippet>,
}

fn make_pair<R: Rng>(rng: &mut R, split: &str, pair_idx: usize) -> [LabeledSnippet; 2] {
    let template = Template::draw(rng);
    let vul = LabeledSnippet {
        id: format!("synth_{split}_{pair_idx:03}_vul.java"),
        source: template.render(true),
        label: 1,
        css_path: None,
    };
    let fix = LabeledSnippet {
        id: format!("synth_{split}_{pair_idx:03}_fix.java"),
        source: template.render(false),
        label: 0,
        css_path: None,
    };
    [vul, fix]
}

/// Generate a balanced corpus of matched pairs: `train_pairs` pairs for
/// training and so on (each pair is one vulnerable + one safe snippet).
pub fn generate_corpus(
    seed: u64,
    train_pairs: usize,
    val_pairs: usize,
    test_pairs: usize,
) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gen_split = |name: &str, pairs: usize| -> Vec<LabeledSnippet> {
        (0..pairs)
            .flat_map(|i| make_pair(&mut rng, name, i))
            .collect()
    };
    SynthCorpus {
        train: gen_split("train", train_pairs),
        val: gen_split("val", val_pairs),
        test: gen_split("test", test_pairs),
    }
}

/// Write every snippet of a corpus into `dir` with a single
/// `manifest.csv` covering all of them. Returns the manifest path.
pub fn write_corpus_dir(
    dir: &std::path::Path,
    corpus: &SynthCorpus,
) -> crate::error::Result<std::path::PathBuf> {
    use std::io::Write;
    std::fs::create_dir_all(dir)?;
    let manifest = dir.join("manifest.csv");
    let mut f = std::fs::File::create(&manifest)?;
    writeln!(f, "path,label")?;
    for s in corpus.train.iter().chain(&corpus.val).chain(&corpus.test) {
        std::fs::write(dir.join(&s.id), &s.source)?;
        writeln!(f, "{},{}", s.id, s.label)?;
    }
    Ok(manifest)
}

/// The canonical hardcoded-password snippet and its patched variant: the
/// fix replaces the hardcoded literal with the externally supplied value.
/// Neither text is part of [`generate_corpus`] output.
pub fn case2_pair() -> (String, String) {
    let template = Template {
        method: "login".to_string(),
        user: "user".to_string(),
        env: "env".to_string(),
        pwd: "password".to_string(),
        status: "status".to_string(),
        resolver: "resolve".to_string(),
        connector: "connect".to_string(),
        literal: "\"hunter2\"".to_string(),
        fillers: vec![("tag".to_string(), "trim".to_string())],
        loop_style: 1,
        guard: true,
        throws: false,
    };
    (template.render(true), template.render(false))
}
