//! End-to-end experiment orchestration: corpus preparation, embeddings,
//! sequence-model training, layer probing, geometry, and figure
//! rendering, recorded in a content-hash manifest.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{
    clean_file, make_sequences_multi, read_conllu, read_lexicon, save_tokens, split_samples,
    tag_with_lexicon, CleaningRules, SequenceSample, SplitSpec, TaggedToken,
};
use crate::embeddings::{train_skipgram, EmbeddingTable};
use crate::error::{LexError, Result};
use crate::geometry::{
    dead_dimensions, distance_matrix, gdv_curve, mds_classical, save_mds_csv, GdvReport, MdsPoint,
};
use crate::probe::{cloud_from_records, extract_activations, stratified_subsample};
use crate::report::{render_gdv_curve, render_scatter};
use crate::seqmodel::{save_checkpoint, train, ModelParams, ModelShape, TrainConfig};
use crate::synth::PcfgGrammar;

fn default_window() -> usize {
    9
}
fn default_horizon() -> usize {
    1
}
fn default_hidden() -> Vec<usize> {
    vec![128, 128, 64, 64]
}
fn default_seed() -> u64 {
    1
}
fn default_embed_dim() -> usize {
    64
}
fn default_embed_context() -> usize {
    5
}
fn default_embed_negatives() -> usize {
    5
}
fn default_embed_epochs() -> usize {
    5
}
fn default_embed_lr() -> f64 {
    0.025
}
fn default_train_lr() -> f64 {
    0.001
}
fn default_train_epochs() -> usize {
    100
}
fn default_train_batch() -> usize {
    32
}
fn default_probe_cap() -> usize {
    2000
}
fn default_min_count() -> usize {
    10
}

/// Where the tagged corpus comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CorpusSource {
    /// Synthetic corpus from a grammar file; "bundled" selects the
    /// built-in 4-class grammar.
    Grammar { grammar: String, sentences: usize },
    /// Already-tagged CoNLL-U files, one document each.
    Conllu { conllu: Vec<PathBuf> },
    /// Raw text files cleaned in-repo and tagged via a lexicon file.
    Text { text: Vec<PathBuf>, tags: PathBuf },
}

/// Word-vector provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum EmbeddingSource {
    Train {
        #[serde(default = "default_embed_dim")]
        dim: usize,
        #[serde(default = "default_embed_context")]
        context_window: usize,
        #[serde(default = "default_embed_negatives")]
        negatives: usize,
        #[serde(default = "default_embed_epochs")]
        epochs: usize,
        #[serde(default = "default_embed_lr")]
        lr: f64,
    },
    Load {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitSection {
    Fraction { train_fraction: f64 },
    Docs { test_docs: Vec<usize> },
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection::Fraction { train_fraction: 0.8 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSection {
    #[serde(default = "default_train_lr")]
    pub lr: f64,
    #[serde(default = "default_train_epochs")]
    pub epochs: usize,
    #[serde(default = "default_train_batch")]
    pub batch: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection { lr: 0.001, epochs: 100, batch: 32 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeSection {
    #[serde(default = "default_probe_cap")]
    pub cap: usize,
    #[serde(default = "default_min_count")]
    pub min_count: usize,
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection { cap: 2000, min_count: 10 }
    }
}

/// Full description of one experiment run, loadable from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub corpus: CorpusSource,
    #[serde(default)]
    pub cleaning_rules: Option<PathBuf>,
    pub embedding: EmbeddingSource,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_hidden")]
    pub hidden_sizes: Vec<usize>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub output_dir: PathBuf,
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(LexError::Config(format!(
            "{what} file not found: {}",
            path.display()
        )));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path).map_err(|e| LexError::io(path, e))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| LexError::Config(format!("bad experiment config: {e}")))?;
        Ok(config)
    }

    /// Checks value ranges and that every referenced file exists.
    pub fn validate(&self) -> Result<()> {
        ModelShape {
            window: self.window,
            embed_dim: 1,
            horizon: self.horizon,
            hidden_sizes: self.hidden_sizes.clone(),
        }
        .validate()?;
        TrainConfig {
            window: self.window,
            horizon: self.horizon,
            hidden_sizes: self.hidden_sizes.clone(),
            lr: self.train.lr,
            epochs: self.train.epochs,
            batch: self.train.batch,
            seed: self.seed,
        }
        .validate()?;
        if self.probe.cap == 0 {
            return Err(LexError::Config("probe cap must be positive".into()));
        }
        match &self.corpus {
            CorpusSource::Grammar { grammar, sentences } => {
                if *sentences == 0 {
                    return Err(LexError::Config("sentence count must be positive".into()));
                }
                if grammar != "bundled" {
                    require_file(Path::new(grammar), "grammar")?;
                }
            }
            CorpusSource::Conllu { conllu } => {
                if conllu.is_empty() {
                    return Err(LexError::Config("no CoNLL-U files given".into()));
                }
                for p in conllu {
                    require_file(p, "corpus")?;
                }
            }
            CorpusSource::Text { text, tags } => {
                if text.is_empty() {
                    return Err(LexError::Config("no text files given".into()));
                }
                for p in text {
                    require_file(p, "corpus")?;
                }
                require_file(tags, "tag lexicon")?;
            }
        }
        if let Some(rules) = &self.cleaning_rules {
            require_file(rules, "cleaning rules")?;
        }
        if let EmbeddingSource::Load { path } = &self.embedding {
            require_file(path, "embedding")?;
        }
        if let SplitSection::Fraction { train_fraction } = &self.split {
            if !(*train_fraction > 0.0 && *train_fraction < 1.0) {
                return Err(LexError::Config(format!(
                    "train fraction {train_fraction} outside (0, 1)"
                )));
            }
        }
        Ok(())
    }
}

/// One produced file with its SHA-256.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub path: String,
    pub sha256: String,
}

/// Manifest persisted as run.json next to the artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub config: ExperimentConfig,
    pub artifacts: Vec<ArtifactRecord>,
    pub notices: Vec<String>,
}

/// In-memory result of a pipeline run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub layer_names: Vec<String>,
    pub gdv: GdvReport,
    pub epoch_losses: Vec<f64>,
    pub artifacts: Vec<ArtifactRecord>,
    pub notices: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write as _;
        write!(out, "{b:02x}").expect("string write");
    }
    out
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| LexError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Display names for the probed layers: the recurrent layers, then
/// flatten, then output.
pub fn layer_names(n_recurrent: usize) -> Vec<String> {
    let mut names: Vec<String> = (1..=n_recurrent).map(|i| format!("layer {i}")).collect();
    names.push("flatten".into());
    names.push("output".into());
    names
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

struct ArtifactSink {
    root: PathBuf,
    records: Vec<ArtifactRecord>,
}

impl ArtifactSink {
    fn record(&mut self, rel: &str) -> Result<()> {
        let hash = file_sha256(&self.root.join(rel))?;
        self.records.push(ArtifactRecord { path: rel.to_string(), sha256: hash });
        Ok(())
    }
}

/// Loads the grammar named by a config reference.
pub fn grammar_from_ref(reference: &str) -> Result<PcfgGrammar> {
    if reference == "bundled" {
        Ok(PcfgGrammar::bundled())
    } else {
        PcfgGrammar::from_file(Path::new(reference))
    }
}

fn load_corpus(config: &ExperimentConfig) -> Result<(Vec<Vec<TaggedToken>>, Vec<String>)> {
    let mut notices = Vec::new();
    let docs = match &config.corpus {
        CorpusSource::Grammar { grammar, sentences } => {
            let grammar = grammar_from_ref(grammar)?;
            let stream = crate::synth::generate_corpus(&grammar, *sentences, config.seed)?;
            vec![stream.into_iter().flatten().collect()]
        }
        CorpusSource::Conllu { conllu } => {
            let mut docs = Vec::with_capacity(conllu.len());
            for path in conllu {
                let (tokens, warnings) = read_conllu(path)?;
                if warnings.unknown_tags > 0 {
                    notices.push(format!(
                        "{}: {} unknown tags mapped to X",
                        path.display(),
                        warnings.unknown_tags
                    ));
                }
                if warnings.odd_forms > 0 {
                    notices.push(format!(
                        "{}: {} forms with whitespace rewritten",
                        path.display(),
                        warnings.odd_forms
                    ));
                }
                docs.push(tokens);
            }
            docs
        }
        CorpusSource::Text { text, tags } => {
            let rules = match &config.cleaning_rules {
                Some(path) => CleaningRules::from_file(path)?,
                None => CleaningRules::default(),
            };
            rules.validate()?;
            let lexicon = read_lexicon(tags)?;
            let mut docs = Vec::with_capacity(text.len());
            for path in text {
                let forms = clean_file(path, &rules)?;
                docs.push(tag_with_lexicon(&forms, &lexicon));
            }
            docs
        }
    };
    for (i, doc) in docs.iter().enumerate() {
        if doc.len() < config.window + config.horizon {
            notices.push(format!(
                "document {i} has {} tokens, too short for any window",
                doc.len()
            ));
        }
    }
    Ok((docs, notices))
}

/// Per-form majority tag over the corpus, ties broken by tag name.
/// Untagged occurrences do not vote.
pub fn majority_lexicon(docs: &[Vec<TaggedToken>]) -> Vec<(String, String)> {
    let mut votes: HashMap<&str, HashMap<&str, usize>> = HashMap::new();
    for token in docs.iter().flatten() {
        if let Some(tag) = &token.tag {
            *votes
                .entry(token.form.as_str())
                .or_default()
                .entry(tag.as_str())
                .or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(String, String)> = votes
        .into_iter()
        .map(|(form, tally)| {
            let mut best: Vec<(&str, usize)> = tally.into_iter().collect();
            best.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
            (form.to_string(), best[0].0.to_string())
        })
        .collect();
    entries.sort();
    entries
}

fn write_tag_lexicon(entries: &[(String, String)], path: &Path) -> Result<()> {
    let mut out = String::new();
    for (form, tag) in entries {
        out.push_str(form);
        out.push('\t');
        out.push_str(tag);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| LexError::io(path, e))
}

fn write_losses(losses: &[f64], path: &Path) -> Result<()> {
    let mut out = String::from("epoch,loss\n");
    for (i, loss) in losses.iter().enumerate() {
        use std::fmt::Write as _;
        writeln!(out, "{},{loss}", i + 1).expect("string write");
    }
    fs::write(path, out).map_err(|e| LexError::io(path, e))
}

/// Everything the pipeline has produced once training is done.
pub struct TrainOutcome {
    pub model: ModelParams,
    pub table: EmbeddingTable,
    pub test_samples: Vec<SequenceSample>,
    pub epoch_losses: Vec<f64>,
    pub artifacts: Vec<ArtifactRecord>,
    pub notices: Vec<String>,
    started: u64,
}

/// Runs the pipeline through training: corpus preparation, embeddings,
/// the sample split, model fitting, and the checkpoint.
pub fn run_training(config: &ExperimentConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let started = unix_now();
    let out = config.output_dir.clone();
    for sub in ["corpus", "activations", "analysis", "report"] {
        let dir = out.join(sub);
        fs::create_dir_all(&dir).map_err(|e| LexError::io(&dir, e))?;
    }
    let mut sink = ArtifactSink { root: out.clone(), records: Vec::new() };

    // corpus stage
    let (docs, mut notices) = load_corpus(config)?;
    for (i, doc) in docs.iter().enumerate() {
        save_tokens(doc, &out.join(format!("corpus/doc_{i}.txt")))?;
        sink.record(&format!("corpus/doc_{i}.txt"))?;
    }
    let lexicon = majority_lexicon(&docs);
    write_tag_lexicon(&lexicon, &out.join("corpus/tags.tsv"))?;
    sink.record("corpus/tags.tsv")?;

    // embedding stage
    let all_forms: Vec<String> = docs
        .iter()
        .flatten()
        .map(|t| t.form.clone())
        .collect();
    if all_forms.is_empty() {
        return Err(LexError::Config("corpus is empty after preparation".into()));
    }
    let table = match &config.embedding {
        EmbeddingSource::Train { dim, context_window, negatives, epochs, lr } => train_skipgram(
            &all_forms,
            *dim,
            *context_window,
            *negatives,
            *epochs,
            *lr,
            config.seed.wrapping_add(1),
        )?,
        EmbeddingSource::Load { path } => EmbeddingTable::load(path)?,
    };
    table.save(&out.join("embeddings.txt"))?;
    sink.record("embeddings.txt")?;
    table.vocab().save(&out.join("corpus/vocab.tsv"))?;
    sink.record("corpus/vocab.tsv")?;

    // sequence + split stage
    let samples = make_sequences_multi(&docs, table.vocab(), config.window, config.horizon);
    let spec = match &config.split {
        SplitSection::Fraction { train_fraction } => SplitSpec::Fraction(*train_fraction),
        SplitSection::Docs { test_docs } => SplitSpec::TestDocs(test_docs.clone()),
    };
    let (train_samples, test_samples) = split_samples(samples, &spec)?;
    if train_samples.is_empty() {
        return Err(LexError::Config("split leaves no training samples".into()));
    }
    if test_samples.is_empty() {
        return Err(LexError::Config("split leaves no test samples".into()));
    }
    notices.push(format!(
        "{} training samples, {} test samples",
        train_samples.len(),
        test_samples.len()
    ));

    // training stage
    let shape = ModelShape {
        window: config.window,
        embed_dim: table.dim(),
        horizon: config.horizon,
        hidden_sizes: config.hidden_sizes.clone(),
    };
    let mut model = ModelParams::init_glorot(&shape, config.seed.wrapping_add(2))?;
    let train_config = TrainConfig {
        window: config.window,
        horizon: config.horizon,
        hidden_sizes: config.hidden_sizes.clone(),
        lr: config.train.lr,
        epochs: config.train.epochs,
        batch: config.train.batch,
        seed: config.seed.wrapping_add(3),
    };
    let run = train(&mut model, &train_samples, &table, &train_config)?;
    save_checkpoint(&out.join("model.lxm"), &model, &table)?;
    sink.record("model.lxm")?;
    write_losses(&run.epoch_losses, &out.join("losses.csv"))?;
    sink.record("losses.csv")?;

    Ok(TrainOutcome {
        model,
        table,
        test_samples,
        epoch_losses: run.epoch_losses,
        artifacts: sink.records,
        notices,
        started,
    })
}

/// Runs the whole experiment described by `config`, returning the
/// summary after writing all artifacts and the manifest.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary> {
    let TrainOutcome {
        model,
        table,
        test_samples,
        epoch_losses,
        artifacts,
        mut notices,
        started,
    } = run_training(config)?;
    let out = config.output_dir.clone();
    let mut sink = ArtifactSink { root: out.clone(), records: artifacts };

    // probe stage
    let record_sets = extract_activations(&model, &test_samples, &table)?;
    let labelled = record_sets[0].len();
    if labelled < test_samples.len() {
        notices.push(format!(
            "{} unlabelled test samples skipped",
            test_samples.len() - labelled
        ));
    }
    if labelled == 0 {
        return Err(LexError::Analysis("no labelled test samples to probe".into()));
    }
    let names = layer_names(config.hidden_sizes.len());
    let mut clouds = Vec::with_capacity(record_sets.len());
    for (k, set) in record_sets.iter().enumerate() {
        let cloud = cloud_from_records(set)?;
        let (sub, dropped) = stratified_subsample(
            &cloud,
            config.probe.cap,
            config.probe.min_count,
            config.seed.wrapping_add(4),
        )?;
        if k == 0 {
            for class in dropped {
                notices.push(format!("class {class} below min_count, dropped"));
            }
        }
        let dead = dead_dimensions(&sub.points);
        if dead > 0 {
            notices.push(format!("{}: {dead} constant dimensions", names[k]));
        }
        dump_and_record(&mut sink, &sub, k)?;
        clouds.push(sub);
    }

    // analysis stage
    let gdv = gdv_curve(&clouds, config.probe.min_count)?;
    gdv.save(&out.join("analysis/gdv.csv"))?;
    sink.record("analysis/gdv.csv")?;
    let mut projections = Vec::with_capacity(clouds.len());
    for (k, cloud) in clouds.iter().enumerate() {
        let dist = distance_matrix(&cloud.points);
        let proj = mds_classical(&dist)?;
        let points: Vec<MdsPoint> = (0..cloud.labels.len())
            .map(|i| MdsPoint {
                sample_id: cloud.sample_ids[i],
                label: cloud.class_name(cloud.labels[i]).to_string(),
                x: proj.coords[(i, 0)],
                y: proj.coords[(i, 1)],
            })
            .collect();
        save_mds_csv(&points, &out.join(format!("analysis/mds_layer_{k}.csv")))?;
        sink.record(&format!("analysis/mds_layer_{k}.csv"))?;
        projections.push(points);
    }

    // report stage
    for (k, points) in projections.iter().enumerate() {
        let svg = render_scatter(points, &format!("{} projection", names[k]))?;
        let path = out.join(format!("report/layer_{k}.svg"));
        fs::write(&path, svg).map_err(|e| LexError::io(&path, e))?;
        sink.record(&format!("report/layer_{k}.svg"))?;
    }
    let curve = render_gdv_curve(&gdv, &names, "class separability by layer")?;
    let curve_path = out.join("report/gdv_curve.svg");
    fs::write(&curve_path, curve).map_err(|e| LexError::io(&curve_path, e))?;
    sink.record("report/gdv_curve.svg")?;

    // manifest
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: started,
        finished_unix: unix_now(),
        config: config.clone(),
        artifacts: sink.records.clone(),
        notices: notices.clone(),
    };
    let manifest_path = out.join("run.json");
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| LexError::Config(format!("manifest serialization failed: {e}")))?;
    fs::write(&manifest_path, text).map_err(|e| LexError::io(&manifest_path, e))?;

    Ok(RunSummary {
        out_dir: out,
        layer_names: names,
        gdv,
        epoch_losses,
        artifacts: sink.records,
        notices,
    })
}

fn dump_and_record(
    sink: &mut ArtifactSink,
    cloud: &crate::probe::LabeledPointCloud,
    k: usize,
) -> Result<()> {
    let rel = format!("activations/layer_{k}.csv");
    crate::probe::dump_cloud(cloud, &sink.root.join(&rel))?;
    sink.record(&rel)
}
