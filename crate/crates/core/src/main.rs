use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lexicast::corpus::{
    clean_file, load_tokens, make_sequences, read_lexicon, save_tokens, tag_with_lexicon,
    CleaningRules,
};
use lexicast::embeddings::{train_skipgram, EmbeddingTable};
use lexicast::geometry::{
    distance_matrix, gdv_curve, load_mds_csv, mds_classical, save_mds_csv, GdvReport, MdsPoint,
};
use lexicast::pipeline::{
    grammar_from_ref, layer_names, run_experiment, run_training, ExperimentConfig,
};
use lexicast::probe::{cloud_from_records, dump_cloud, extract_activations, load_cloud,
    stratified_subsample, LabeledPointCloud};
use lexicast::report::{render_gdv_curve, render_scatter};
use lexicast::seqmodel::{load_checkpoint, predict_word};
use lexicast::synth::generate_corpus;
use lexicast::{LexError, Result};

#[derive(Parser)]
#[command(
    name = "lexicast",
    version,
    about = "Trains a next-word predictor and measures word-class clustering in its layers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean raw text into a one-token-per-line file
    Clean {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Cleaning-rule JSON; bundled defaults when omitted
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Generate a tagged synthetic corpus from a grammar
    Synth {
        /// Grammar JSON path, or "bundled" for the built-in 4-class grammar
        #[arg(long)]
        grammar: String,
        #[arg(long)]
        sentences: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory; writes tokens.txt and tags.tsv
        #[arg(long)]
        out: PathBuf,
    },
    /// Train word embeddings from a token file, or convert a loaded table
    Embed {
        /// Token file to train on (exclusive with --load)
        #[arg(long)]
        tokens: Option<PathBuf>,
        /// Existing word2vec-text table to load (exclusive with --tokens)
        #[arg(long)]
        load: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 5)]
        context_window: usize,
        #[arg(long, default_value_t = 5)]
        negatives: usize,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 0.025)]
        lr: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the pipeline through training and save a model checkpoint
    Train {
        /// Experiment config JSON
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Probe a checkpoint with test tokens and dump per-layer activations
    Probe {
        #[arg(long)]
        model: PathBuf,
        /// Test token file, one token per line
        #[arg(long)]
        test: PathBuf,
        /// Tag lexicon file, "form<TAB>TAG" per line
        #[arg(long)]
        tags: PathBuf,
        #[arg(long, default_value_t = 2000)]
        cap: usize,
        #[arg(long, default_value_t = 10)]
        min_count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the GDV table and MDS projections from dumped activations
    Analyze {
        /// Directory holding layer_<k>.csv files
        #[arg(long)]
        activations: PathBuf,
        #[arg(long, default_value_t = 10)]
        min_count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render SVG figures for a completed run directory
    Report {
        /// Run directory containing analysis/gdv.csv and analysis/mds_layer_<k>.csv
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Execute the full experiment pipeline from a config file
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Predict successor words for a space-separated window of tokens
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        words: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| LexError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| LexError::io(path, e))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Clean { input, out, rules } => {
            let rules = match rules {
                Some(path) => CleaningRules::from_file(&path)?,
                None => CleaningRules::default(),
            };
            rules.validate()?;
            let tokens = clean_file(&input, &rules)?;
            let mut text = tokens.join("\n");
            if !text.is_empty() {
                text.push('\n');
            }
            write_text(&out, &text)?;
            println!("{} tokens written to {}", tokens.len(), out.display());
            Ok(())
        }
        Command::Synth { grammar, sentences, seed, out } => {
            let grammar = grammar_from_ref(&grammar)?;
            let stream = generate_corpus(&grammar, sentences, seed)?;
            let tokens: Vec<_> = stream.into_iter().flatten().collect();
            ensure_dir(&out)?;
            save_tokens(&tokens, &out.join("tokens.txt"))?;
            let mut classes: Vec<(String, String)> =
                grammar.word_classes().into_iter().collect();
            classes.sort();
            let mut text = String::new();
            for (form, class) in &classes {
                text.push_str(form);
                text.push('\t');
                text.push_str(class);
                text.push('\n');
            }
            write_text(&out.join("tags.tsv"), &text)?;
            println!(
                "{} tokens over {} types written to {}",
                tokens.len(),
                classes.len(),
                out.display()
            );
            Ok(())
        }
        Command::Embed {
            tokens,
            load,
            dim,
            context_window,
            negatives,
            epochs,
            lr,
            seed,
            out,
        } => {
            let table = match (tokens, load) {
                (Some(tokens), None) => {
                    let forms = load_tokens(&tokens)?;
                    train_skipgram(&forms, dim, context_window, negatives, epochs, lr, seed)?
                }
                (None, Some(path)) => EmbeddingTable::load(&path)?,
                _ => {
                    return Err(LexError::Config(
                        "pass exactly one of --tokens or --load".into(),
                    ))
                }
            };
            table.save(&out)?;
            println!(
                "{} vectors of dimension {} written to {}",
                table.vocab().type_count(),
                table.dim(),
                out.display()
            );
            Ok(())
        }
        Command::Train { config, out } => {
            let mut config = ExperimentConfig::from_file(&config)?;
            if let Some(out) = out {
                config.output_dir = out;
            }
            let outcome = run_training(&config)?;
            for notice in &outcome.notices {
                println!("note: {notice}");
            }
            let last = outcome.epoch_losses.last().copied().unwrap_or(f64::NAN);
            println!(
                "trained {} epochs, final loss {last:.6}; checkpoint at {}",
                outcome.epoch_losses.len(),
                config.output_dir.join("model.lxm").display()
            );
            Ok(())
        }
        Command::Probe { model, test, tags, cap, min_count, seed, out } => {
            let (model, table) = load_checkpoint(&model)?;
            let forms = load_tokens(&test)?;
            let lexicon = read_lexicon(&tags)?;
            let doc = tag_with_lexicon(&forms, &lexicon);
            let samples = make_sequences(
                &doc,
                table.vocab(),
                model.shape.window,
                model.shape.horizon,
                0,
            );
            if samples.is_empty() {
                return Err(LexError::Config(format!(
                    "test file yields no windows of length {}",
                    model.shape.window
                )));
            }
            let sets = extract_activations(&model, &samples, &table)?;
            if sets[0].is_empty() {
                return Err(LexError::Analysis(
                    "no labelled test samples to probe".into(),
                ));
            }
            if sets[0].len() < samples.len() {
                println!("note: {} unlabelled samples skipped", samples.len() - sets[0].len());
            }
            ensure_dir(&out)?;
            for (k, set) in sets.iter().enumerate() {
                let cloud = cloud_from_records(set)?;
                let (sub, dropped) = stratified_subsample(&cloud, cap, min_count, seed)?;
                if k == 0 {
                    for class in dropped {
                        println!("note: class {class} below min_count, dropped");
                    }
                }
                dump_cloud(&sub, &out.join(format!("layer_{k}.csv")))?;
            }
            println!("{} layer files written to {}", sets.len(), out.display());
            Ok(())
        }
        Command::Analyze { activations, min_count, out } => {
            let clouds = load_layer_clouds(&activations)?;
            ensure_dir(&out)?;
            let report = gdv_curve(&clouds, min_count)?;
            report.save(&out.join("gdv.csv"))?;
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
                save_mds_csv(&points, &out.join(format!("mds_layer_{k}.csv")))?;
            }
            for row in &report.rows {
                println!("layer {}: gdv {:.6}", row.layer, row.gdv);
            }
            Ok(())
        }
        Command::Report { run, out } => {
            let report = GdvReport::load(&run.join("analysis/gdv.csv"))?;
            if report.rows.len() < 3 {
                return Err(LexError::Analysis(
                    "GDV table has fewer rows than layers".into(),
                ));
            }
            let names = layer_names(report.rows.len() - 2);
            ensure_dir(&out)?;
            for k in 0..report.rows.len() {
                let points = load_mds_csv(&run.join(format!("analysis/mds_layer_{k}.csv")))?;
                let svg = render_scatter(&points, &format!("{} projection", names[k]))?;
                write_text(&out.join(format!("layer_{k}.svg")), &svg)?;
            }
            let curve = render_gdv_curve(&report, &names, "class separability by layer")?;
            write_text(&out.join("gdv_curve.svg"), &curve)?;
            println!("{} figures written to {}", report.rows.len() + 1, out.display());
            Ok(())
        }
        Command::Run { config } => {
            let config = ExperimentConfig::from_file(&config)?;
            let summary = run_experiment(&config)?;
            for notice in &summary.notices {
                println!("note: {notice}");
            }
            for (name, row) in summary.layer_names.iter().zip(&summary.gdv.rows) {
                println!("{name}: gdv {:.6}", row.gdv);
            }
            println!(
                "{} artifacts written to {}",
                summary.artifacts.len(),
                summary.out_dir.display()
            );
            Ok(())
        }
        Command::Predict { model, words, k } => {
            let (model, table) = load_checkpoint(&model)?;
            let window: Vec<String> = words.split_whitespace().map(str::to_string).collect();
            let ranked = predict_word(&model, &table, &window, k)?;
            for (slot, hits) in ranked.iter().enumerate() {
                let line: Vec<String> = hits
                    .iter()
                    .map(|(form, score)| format!("{form} ({score:.4})"))
                    .collect();
                println!("slot {}: {}", slot + 1, line.join(", "));
            }
            Ok(())
        }
    }
}

fn load_layer_clouds(dir: &Path) -> Result<Vec<LabeledPointCloud>> {
    let mut clouds = Vec::new();
    loop {
        let path = dir.join(format!("layer_{}.csv", clouds.len()));
        if !path.is_file() {
            break;
        }
        clouds.push(load_cloud(&path)?);
    }
    if clouds.is_empty() {
        return Err(LexError::Config(format!(
            "no layer_0.csv under {}",
            dir.display()
        )));
    }
    Ok(clouds)
}
