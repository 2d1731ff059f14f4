//! Command implementations behind the `pairlab` binary.
//!
//! Every command is reproducible: all randomness flows from explicit seed
//! flags (with the `PAIRLAB_SEED` environment variable as fallback), and
//! artifact-producing commands write a run manifest recording the resolved
//! configuration, seeds and input fingerprints.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use pairlab::checkpoint;
use pairlab::codec::{encode_target, parse_target, resolve_triplets, TargetStyle};
use pairlab::corpus::{
    self, dataset_stats, load_dataset, save_dataset, serialize_triplet_list, Dataset, Split,
    SynthSpec,
};
use pairlab::eval::{compare_strategies, export_embeddings, EvalReport};
use pairlab::trainer::{train, Profile, TrainConfig};

/// Errors grouped by process exit code: usage 1, data 2, numeric 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) => 2,
            Self::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) | Self::Data(m) | Self::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<pairlab::Error> for CliError {
    fn from(e: pairlab::Error) -> Self {
        use pairlab::Error as E;
        match &e {
            E::InvalidSpec(_) => Self::Usage(e.to_string()),
            E::NumericalError(_)
            | E::NonFiniteLoss { .. }
            | E::NonFiniteGradient(_)
            | E::DegenerateBatch(_)
            | E::DegenerateCovariance(_) => Self::Numeric(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Resolve the seed list: explicit `--seeds`, then `--seed`, then the
/// `PAIRLAB_SEED` environment variable, then 0.
pub fn resolve_seeds(seeds: &Option<Vec<u64>>, seed: Option<u64>) -> CliResult<Vec<u64>> {
    if let Some(list) = seeds {
        if list.is_empty() {
            return Err(CliError::Usage("--seeds needs at least one value".into()));
        }
        return Ok(list.clone());
    }
    if let Some(s) = seed {
        return Ok(vec![s]);
    }
    match std::env::var("PAIRLAB_SEED") {
        Ok(v) => {
            let s: u64 = v
                .parse()
                .map_err(|_| CliError::Usage(format!("PAIRLAB_SEED={v:?} is not an integer")))?;
            Ok(vec![s])
        }
        Err(_) => Ok(vec![0]),
    }
}

/// Dataset name and split inferred from a file path, e.g.
/// `data/14lap/train_triplets.txt` -> ("14lap", train).
pub fn infer_dataset_and_split(path: &Path) -> (String, Split) {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    let split = if stem.starts_with("train") {
        Split::Train
    } else if stem.starts_with("dev") || stem.starts_with("val") {
        Split::Val
    } else if stem.starts_with("test") {
        Split::Test
    } else {
        Split::Train
    };
    let name = path
        .parent()
        .and_then(Path::file_name)
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty() && s != ".")
        .unwrap_or_else(|| stem.clone());
    (name, split)
}

fn load_inferred(
    path: &Path,
    dataset: &Option<String>,
    split: &Option<Split>,
) -> CliResult<Dataset> {
    let (name, inferred_split) = infer_dataset_and_split(path);
    let ds = load_dataset(
        path,
        dataset.as_deref().unwrap_or(&name),
        split.unwrap_or(inferred_split),
    )
    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(ds)
}

/// One row per (dataset, split): TSV of sentence and multi-term counts.
pub fn cmd_stats(
    files: &[PathBuf],
    dataset: &Option<String>,
    split: &Option<Split>,
) -> CliResult<String> {
    if files.is_empty() {
        return Err(CliError::Usage("stats needs at least one dataset file".into()));
    }
    let mut out = String::from("dataset\tsplit\tsentences\tmulti_aspect\tmulti_opinion\tmulti_both\n");
    for path in files {
        let ds = load_inferred(path, dataset, split)?;
        let row = dataset_stats(&ds);
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            ds.name, ds.split, row.sentences, row.multi_aspect, row.multi_opinion, row.multi_both
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct InputFingerprint {
    pub path: String,
    pub sha256: String,
}

/// Reproducibility record written next to every artifact set.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<InputFingerprint>,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ablation: Option<String>,
    pub timestamp_unix: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seeds: Vec<u64>) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seeds,
            inputs: Vec::new(),
            outputs: Vec::new(),
            ablation: None,
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn fingerprint(&mut self, path: &Path) -> CliResult<()> {
        let bytes = fs::read(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let digest = Sha256::digest(&bytes);
        self.inputs.push(InputFingerprint {
            path: path.display().to_string(),
            sha256: format!("{digest:x}"),
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Data(e.to_string()))?;
        fs::write(dir.join("manifest.json"), json + "\n")?;
        Ok(())
    }
}

/// Optional config-file / flag overlay on top of profile defaults.
/// Precedence: flags > config file > profile defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub dropout: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub tau: Option<f64>,
    pub pair_description: Option<String>,
    pub unpair_description: Option<String>,
}

impl TrainOverrides {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))
    }

    pub fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.dropout {
            cfg.dropout = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.tau {
            cfg.tau_init = v;
        }
        if let Some(v) = &self.pair_description {
            cfg.descriptions.pair = v.clone();
        }
        if let Some(v) = &self.unpair_description {
            cfg.descriptions.unpair = v.clone();
        }
    }
}

pub struct TrainRequest {
    pub train_path: PathBuf,
    pub val_path: PathBuf,
    pub out_dir: PathBuf,
    pub profile: Profile,
    pub config_file: Option<PathBuf>,
    pub flag_overrides: TrainOverrides,
    pub seeds: Vec<u64>,
    pub dataset: Option<String>,
}

/// Train one model per seed; write checkpoint, metrics and manifest.
///
/// Single-seed runs write directly into the output directory; multi-seed
/// runs use one `seed-<s>/` subdirectory per seed plus a summary TSV.
pub fn cmd_train(req: &TrainRequest) -> CliResult<String> {
    let mut cfg = match req.profile {
        Profile::Desk => TrainConfig::default(),
        Profile::PaperFaithful => TrainConfig::paper_faithful(),
    };
    if let Some(path) = &req.config_file {
        TrainOverrides::from_file(path)?.apply(&mut cfg);
    }
    req.flag_overrides.apply(&mut cfg);
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let train_ds = load_inferred(&req.train_path, &req.dataset, &Some(Split::Train))?;
    let val_ds = load_inferred(&req.val_path, &req.dataset, &Some(Split::Val))?;

    fs::create_dir_all(&req.out_dir)?;
    let mut summary = String::from("seed\tbest_epoch\tbest_val_pair_f1\n");
    let mut best_f1s = Vec::new();
    for &seed in &req.seeds {
        cfg.seed = seed;
        let run_dir = if req.seeds.len() == 1 {
            req.out_dir.clone()
        } else {
            let d = req.out_dir.join(format!("seed-{seed}"));
            fs::create_dir_all(&d)?;
            d
        };
        let outcome = train(&train_ds, &val_ds, &cfg)?;
        checkpoint::save_model(&outcome.model, run_dir.join("checkpoint.json"))?;
        let mut metrics = String::new();
        for m in &outcome.metrics {
            metrics.push_str(&serde_json::to_string(m).map_err(|e| CliError::Data(e.to_string()))?);
            metrics.push('\n');
        }
        fs::write(run_dir.join("metrics.jsonl"), metrics)?;

        let best = outcome
            .metrics
            .iter()
            .map(|m| m.val_pair_f1)
            .fold(0.0, f64::max);
        best_f1s.push(best);
        summary.push_str(&format!("{seed}\t{}\t{best:.6}\n", outcome.best_epoch));

        let mut manifest = RunManifest::new(
            "train",
            serde_json::to_value(&cfg).map_err(|e| CliError::Data(e.to_string()))?,
            vec![seed],
        );
        if cfg.beta == 0.0 {
            manifest.ablation = Some("w/o CL".into());
        }
        manifest.fingerprint(&req.train_path)?;
        manifest.fingerprint(&req.val_path)?;
        manifest.outputs = vec!["checkpoint.json".into(), "metrics.jsonl".into()];
        manifest.write(&run_dir)?;
    }

    if req.seeds.len() > 1 {
        let (mean, std) = mean_std(&best_f1s);
        summary.push_str(&format!("mean±std\t\t{mean:.6}±{std:.6}\n"));
        fs::write(req.out_dir.join("summary.tsv"), &summary)?;
        let mut manifest = RunManifest::new(
            "train",
            serde_json::json!({"profile": req.profile.to_string(), "multi_seed": true}),
            req.seeds.clone(),
        );
        manifest.fingerprint(&req.train_path)?;
        manifest.fingerprint(&req.val_path)?;
        manifest.outputs = req
            .seeds
            .iter()
            .map(|s| format!("seed-{s}/"))
            .chain(["summary.tsv".into()])
            .collect();
        manifest.write(&req.out_dir)?;
    }
    Ok(summary)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub struct CompareRequest {
    pub data_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub out_dir: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub dataset: Option<String>,
    pub split: Option<Split>,
}

/// Pairing-strategy comparison TSV: one row per strategy with per-seed
/// means and the F1 standard deviation over seeds.
pub fn cmd_compare(req: &CompareRequest) -> CliResult<String> {
    let ds = load_inferred(&req.data_path, &req.dataset, &req.split)?;
    let model = checkpoint::load_model(&req.checkpoint_path)
        .map_err(|e| CliError::from(e))?;

    let mut per_strategy: [Vec<EvalReport>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for &seed in &req.seeds {
        let reports = compare_strategies(&ds, &model, seed)?;
        per_strategy[0].push(reports.random);
        per_strategy[1].push(reports.linear);
        per_strategy[2].push(reports.contrastive);
    }

    let mut out = String::from("metric\tstrategy\tdataset\tsplit\tprecision\trecall\tf1\tstd\n");
    for (name, reports) in ["random", "linear", "contrastive"].iter().zip(&per_strategy) {
        let mean_of = |f: fn(&EvalReport) -> f64| {
            reports.iter().map(f).sum::<f64>() / reports.len() as f64
        };
        let f1s: Vec<f64> = reports.iter().map(|r| r.f1).collect();
        let (f1_mean, f1_std) = mean_std(&f1s);
        out.push_str(&format!(
            "pair_f1\t{name}\t{}\t{}\t{:.6}\t{:.6}\t{f1_mean:.6}\t{f1_std:.6}\n",
            ds.name,
            ds.split,
            mean_of(|r| r.precision),
            mean_of(|r| r.recall),
        ));
    }

    if let Some(dir) = &req.out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("compare.tsv"), &out)?;
        let mut manifest = RunManifest::new(
            "compare",
            serde_json::json!({
                "checkpoint": req.checkpoint_path.display().to_string(),
            }),
            req.seeds.clone(),
        );
        manifest.fingerprint(&req.data_path)?;
        manifest.fingerprint(&req.checkpoint_path)?;
        manifest.outputs = vec!["compare.tsv".into()];
        manifest.write(dir)?;
    }
    Ok(out)
}

pub struct ExportRequest {
    pub data_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub out_dir: PathBuf,
    pub dataset: Option<String>,
    pub split: Option<Split>,
}

/// Project every candidate pair embedding to 2D and write the CSV dump.
pub fn cmd_export(req: &ExportRequest) -> CliResult<String> {
    let ds = load_inferred(&req.data_path, &req.dataset, &req.split)?;
    let model = checkpoint::load_model(&req.checkpoint_path).map_err(CliError::from)?;
    let dump = export_embeddings(&ds, &model)?;
    let csv = dump.to_csv();
    fs::create_dir_all(&req.out_dir)?;
    fs::write(req.out_dir.join("embeddings.csv"), &csv)?;
    let mut manifest = RunManifest::new(
        "export",
        serde_json::json!({
            "checkpoint": req.checkpoint_path.display().to_string(),
        }),
        Vec::new(),
    );
    manifest.fingerprint(&req.data_path)?;
    manifest.fingerprint(&req.checkpoint_path)?;
    manifest.outputs = vec!["embeddings.csv".into()];
    manifest.write(&req.out_dir)?;
    Ok(csv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodecDirection {
    Encode,
    Decode,
}

impl std::str::FromStr for CodecDirection {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.to_ascii_lowercase().as_str() {
            "encode" => Ok(Self::Encode),
            "decode" => Ok(Self::Decode),
            other => Err(CliError::Usage(format!("unknown direction {other:?}"))),
        }
    }
}

pub struct CodecOutput {
    pub stdout: String,
    pub stderr: String,
}

/// Encode gold triplets to target strings, or parse target strings back to
/// resolved triplets.
///
/// Encode direction reads standard dataset lines. Decode direction reads
/// `sentence####target text` lines (the sentence is needed for span
/// resolution) and prints the resolved triplet list in the dataset's index
/// format; parse problems are warnings on stderr, never fatal.
pub fn cmd_codec(input: &Path, style: TargetStyle, direction: CodecDirection) -> CliResult<CodecOutput> {
    let content = fs::read_to_string(input)
        .map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
    let mut stdout = String::new();
    let mut stderr = String::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match direction {
            CodecDirection::Encode => {
                let s = corpus::parse_dataset_line(line).map_err(|e| {
                    CliError::Data(format!("{} line {}: {e}", input.display(), i + 1))
                })?;
                stdout.push_str(&encode_target(&s, style));
                stdout.push('\n');
            }
            CodecDirection::Decode => {
                let Some((sentence_text, target)) = line.split_once("####") else {
                    stderr.push_str(&format!(
                        "line {}: expected `sentence####target`, skipping\n",
                        i + 1
                    ));
                    continue;
                };
                let tokens: Vec<String> =
                    sentence_text.split_whitespace().map(str::to_string).collect();
                let sentence = corpus::Sentence::new(tokens, Vec::new()).map_err(|e| {
                    CliError::Data(format!("{} line {}: {e}", input.display(), i + 1))
                })?;
                let parsed = parse_target(target, style);
                let resolved = resolve_triplets(&parsed.triplets, &sentence);
                let warnings = parsed.diagnostics.len() + resolved.diagnostics.len();
                if warnings > 0 {
                    stderr.push_str(&format!("line {}: {warnings} warnings\n", i + 1));
                    for d in parsed.diagnostics.iter() {
                        stderr.push_str(&format!("  malformed group: {:?} ({})\n", d.fragment, d.reason));
                    }
                    for d in resolved.diagnostics.iter() {
                        stderr.push_str(&format!("  unresolved term: {:?} ({})\n", d.fragment, d.reason));
                    }
                }
                stdout.push_str(&serialize_triplet_list(&resolved.triplets));
                stdout.push('\n');
            }
        }
    }
    Ok(CodecOutput { stdout, stderr })
}

pub struct SynthRequest {
    pub out_path: PathBuf,
    pub sentences: usize,
    pub vocab_size: usize,
    pub min_aspects: usize,
    pub max_aspects: usize,
    pub min_opinions: usize,
    pub max_opinions: usize,
    pub max_term_tokens: usize,
    pub separable: bool,
    pub seed: u64,
}

/// Generate a synthetic corpus file in the dataset line format.
pub fn cmd_synth(req: &SynthRequest) -> CliResult<String> {
    let spec = SynthSpec {
        vocab_size: req.vocab_size,
        sentences: req.sentences,
        aspects_per_sentence: (req.min_aspects, req.max_aspects),
        opinions_per_sentence: (req.min_opinions, req.max_opinions),
        max_term_tokens: req.max_term_tokens,
        pairing: if req.separable {
            corpus::GoldPairing::Separable
        } else {
            corpus::GoldPairing::Matching
        },
    };
    let ds = pairlab::corpus::synth_corpus(&spec, req.seed)?;
    save_dataset(&ds, &req.out_path)?;
    Ok(format!(
        "wrote {} sentences to {}\n",
        ds.sentences.len(),
        req.out_path.display()
    ))
}
