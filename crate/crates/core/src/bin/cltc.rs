use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cltc::align::{align_svd, apply_projection, eval_translation, load_dictionary};
use cltc::classifiers::{train_classifier, ArchConfig, Architecture, ClassifierModel, EmbeddingTable, TrainConfig};
use cltc::embedding::{load_embeddings, save_embeddings, MultilingualSpace};
use cltc::gradsuite::{run_gradient_suite, TOLERANCE};
use cltc::harness::{
    emit_report, gen_synthetic, load_classification_tsv, macro_metrics, parse_report_tsv, run_experiment,
    stratified_split, write_synthetic, ExperimentConfig, ReportFormat, Split, SyntheticConfig,
};
use cltc::merge::{merge_bilingual_spaces, MergeOptions};
use cltc::multitask::{alternate_train, MultitaskConfig, MultitaskModel};
use cltc::nn::{save_checkpoint, Checkpoint};
use cltc::sent_align::{load_parallel_corpus, mean_pair_cosine, train_sent_align, SentAlignConfig};
use cltc::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "cltc", version, about = "Multilingual embeddings and cross-lingual text classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Align a source space onto a target space with orthogonal Procrustes.
    AlignSvd {
        #[arg(long)]
        src: PathBuf,
        #[arg(long, default_value = "src")]
        src_lang: String,
        #[arg(long)]
        tgt: PathBuf,
        #[arg(long, default_value = "tgt")]
        tgt_lang: String,
        /// `<source>\t<target>` training pairs.
        #[arg(long)]
        dict: PathBuf,
        /// Held-out pairs for P@1/5/10.
        #[arg(long)]
        test_dict: Option<PathBuf>,
        #[arg(long)]
        sv_threshold: Option<f64>,
        /// In reduced mode, write source vectors re-embedded in the full
        /// target dimension instead of the reduced space.
        #[arg(long)]
        reembed: bool,
        /// Directory receiving `emb.<lang>.txt` files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge two bilingual spaces through a shared pivot language.
    MergeSpaces {
        /// `lang=path`, repeated.
        #[arg(long, required = true, num_args = 1..)]
        moving: Vec<String>,
        /// `lang=path`, repeated.
        #[arg(long, required = true, num_args = 1..)]
        anchor: Vec<String>,
        #[arg(long, default_value = "en")]
        pivot: String,
        #[arg(long, default_value_t = 100)]
        passes: usize,
        #[arg(long, default_value_t = 0.5)]
        learning_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        allow_underdetermined: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train embeddings so that translated sentences share representations.
    TrainSentAlign {
        /// `<lang>\t<source>\t<target>` lines.
        #[arg(long)]
        corpus: PathBuf,
        /// Initial spaces, `lang=path`, repeated.
        #[arg(long, required = true, num_args = 1..)]
        init: Vec<String>,
        #[arg(long, default_value = "en")]
        target_lang: String,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 64)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one classifier and report test metrics.
    TrainClassifier {
        #[arg(long)]
        arch: String,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        valid: PathBuf,
        #[arg(long)]
        test: Option<PathBuf>,
        /// `lang=path`, repeated.
        #[arg(long, required = true, num_args = 1..)]
        embeddings: Vec<String>,
        #[arg(long, value_enum, default_value_t = ClassifierMode::Multi)]
        mode: ClassifierMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
        /// Checkpoint path for the best model.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Alternate document classification and sentence alignment.
    Multitask {
        #[arg(long)]
        docs: PathBuf,
        #[arg(long)]
        parallel: PathBuf,
        /// `lang=path`, repeated.
        #[arg(long, required = true, num_args = 1..)]
        embeddings: Vec<String>,
        #[arg(long, default_value = "en")]
        target_lang: String,
        #[arg(long, default_value_t = 10000)]
        limit_per_lang: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a mono / mono-transfer / multi experiment from a TOML config.
    /// Trailing `--key value` pairs override config entries.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Write a synthetic multilingual benchmark to a directory.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        /// TOML file with generator settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        languages: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        docs_per_language: Option<Vec<usize>>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        vocab_size: Option<usize>,
    },
    /// Finite-difference gradient checks for every layer, loss and model.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        configs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-render a TSV report, verifying its summary rows.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
        format: OutputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ClassifierMode {
    Mono,
    Multi,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutputFormat {
    Text,
    Tsv,
}

fn parse_lang_paths(specs: &[String]) -> Result<Vec<(String, PathBuf)>> {
    specs
        .iter()
        .map(|s| match s.split_once('=') {
            Some((l, p)) if !l.is_empty() && !p.is_empty() => Ok((l.to_string(), PathBuf::from(p))),
            _ => Err(Error::InvalidConfig(format!("expected `lang=path`, got `{s}`"))),
        })
        .collect()
}

fn load_spaces(specs: &[String]) -> Result<MultilingualSpace> {
    let mut out = MultilingualSpace::new();
    for (lang, path) in parse_lang_paths(specs)? {
        out.insert(load_embeddings(&path, &lang, None)?)?;
    }
    Ok(out)
}

fn write_spaces(space: &MultilingualSpace, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    for s in space.spaces() {
        let path = dir.join(format!("emb.{}.txt", s.language()));
        save_embeddings(s, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let key = flag
            .strip_prefix("--")
            .ok_or_else(|| Error::InvalidConfig(format!("expected `--key value`, got `{flag}`")))?;
        match key.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let value = it
                    .next()
                    .ok_or_else(|| Error::InvalidConfig(format!("missing value for `--{key}`")))?;
                out.push((key.to_string(), value.clone()));
            }
        }
    }
    Ok(out)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::AlignSvd {
            src,
            src_lang,
            tgt,
            tgt_lang,
            dict,
            test_dict,
            sv_threshold,
            reembed,
            out,
        } => {
            let s = load_embeddings(&src, &src_lang, None)?;
            let t = load_embeddings(&tgt, &tgt_lang, None)?;
            let d = load_dictionary(&dict, &src_lang, &tgt_lang)?;
            let alignment = align_svd(&s, &t, &d, sv_threshold)?;
            println!(
                "used {} pairs ({} dropped), kept {} of {} components, orthogonality error {:.3e}",
                alignment.used_pairs,
                alignment.dropped_pairs,
                alignment.kept_components(),
                alignment.singular_values.len(),
                alignment.source.orthogonality_error()
            );
            let (src_map, tgt_map) = if reembed {
                (alignment.reembedded_source(), None)
            } else {
                (alignment.source.clone(), alignment.target.clone())
            };
            let mut space = MultilingualSpace::new();
            space.insert(apply_projection(&s.normalize_rows()?, &src_map)?)?;
            let t_n = t.normalize_rows()?;
            space.insert(match &tgt_map {
                Some(m) => apply_projection(&t_n, m)?,
                None => t_n,
            })?;
            if let Some(path) = test_dict {
                let test = load_dictionary(&path, &src_lang, &tgt_lang)?;
                for (k, p) in eval_translation(&space, &test, &[1, 5, 10])? {
                    println!("P@{k} = {p:.4}");
                }
            }
            write_spaces(&space, &out)
        }
        Command::MergeSpaces {
            moving,
            anchor,
            pivot,
            passes,
            learning_rate,
            seed,
            allow_underdetermined,
            out,
        } => {
            let opts = MergeOptions {
                passes,
                learning_rate,
                seed,
                allow_underdetermined,
            };
            let outcome = merge_bilingual_spaces(&load_spaces(&moving)?, &load_spaces(&anchor)?, &pivot, &opts)?;
            println!(
                "{} shared `{pivot}` words, mean pivot displacement {:.6}",
                outcome.shared_pivot_words, outcome.mean_pivot_displacement
            );
            write_spaces(&outcome.merged, &out)
        }
        Command::TrainSentAlign {
            corpus,
            init,
            target_lang,
            epochs,
            batch,
            seed,
            out,
        } => {
            let corpus = load_parallel_corpus(&corpus, &target_lang)?;
            let init = load_spaces(&init)?;
            let config = SentAlignConfig {
                epochs,
                batch_size: batch,
                seed,
                ..SentAlignConfig::default()
            };
            let (model, history) = train_sent_align(&corpus, &init, &config)?;
            println!("initial loss {:.6}", history.initial_loss);
            for (i, l) in history.epoch_losses.iter().enumerate() {
                println!("epoch {:>3} loss {l:.6}", i + 1);
            }
            println!("mean pair cosine {:.4}", mean_pair_cosine(&model, &corpus.pairs));
            write_spaces(&model.to_space()?, &out)
        }
        Command::TrainClassifier {
            arch,
            train,
            valid,
            test,
            embeddings,
            mode,
            seed,
            max_epochs,
            batch_size,
            patience,
            out,
        } => {
            let arch: Architecture = arch.parse()?;
            let train = load_classification_tsv(&train)?;
            let valid = load_classification_tsv(&valid)?;
            if train.label_names != valid.label_names {
                return Err(Error::InvalidConfig("train and validation label sets differ".into()));
            }
            let mut space = load_spaces(&embeddings)?;
            if let ClassifierMode::Mono = mode {
                let langs = train.languages();
                if langs.len() != 1 {
                    return Err(Error::InvalidConfig(format!(
                        "mono mode needs one training language, found {}",
                        langs.len()
                    )));
                }
                let own = space
                    .space(&langs[0])
                    .ok_or_else(|| Error::InvalidConfig(format!("no embeddings for `{}`", langs[0])))?
                    .clone();
                space = MultilingualSpace::from_spaces([own])?;
            }
            let mut cfg = TrainConfig {
                seed,
                ..TrainConfig::default()
            };
            cfg.max_epochs = max_epochs.unwrap_or(cfg.max_epochs);
            cfg.batch_size = batch_size.unwrap_or(cfg.batch_size);
            cfg.patience = patience.unwrap_or(cfg.patience);
            let arch_cfg = ArchConfig::for_arch(arch);
            let table = EmbeddingTable::from_space(&space, arch_cfg.train_embeddings)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = ClassifierModel::new(arch_cfg.clone(), table, train.classes(), &mut rng)?;
            let (mut model, history) = train_classifier(model, &train.examples, &valid.examples, &cfg)?;
            println!(
                "best validation macro-F1 {:.4} at epoch {} of {}",
                history.best_valid_f1,
                history.best_epoch,
                history.epoch_losses.len()
            );
            if let Some(path) = test {
                let test = load_classification_tsv(&path)?;
                for lang in test.languages() {
                    let docs = model.encode_examples(&test.select(Split::Train, Some(&lang)))?;
                    let preds = model.predict(&docs)?;
                    let truths: Vec<usize> = docs.iter().map(|d| d.label).collect();
                    let m = macro_metrics(&truths, &preds, model.classes);
                    println!("{lang}: F1 {:.4} P {:.4} R {:.4}", m.f1, m.precision, m.recall);
                }
            }
            if let Some(path) = out {
                let config = serde_json::to_value(&arch_cfg).map_err(|e| Error::Serde(e.to_string()))?;
                save_checkpoint(&Checkpoint::from_module(&mut model, config), &path)?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Multitask {
            docs,
            parallel,
            embeddings,
            target_lang,
            limit_per_lang,
            seed,
            max_epochs,
            beta,
            out,
        } => {
            let dataset = load_classification_tsv(&docs)?.limit_per_language(limit_per_lang)?;
            let dataset = stratified_split(&dataset, [0.6, 0.2, 0.2], seed)?;
            let corpus = load_parallel_corpus(&parallel, &target_lang)?;
            let space = load_spaces(&embeddings)?;
            let mut config = MultitaskConfig {
                seed,
                ..MultitaskConfig::default()
            };
            config.max_epochs = max_epochs.unwrap_or(config.max_epochs);
            config.beta = beta.unwrap_or(config.beta);
            let table = EmbeddingTable::from_space(&space, true)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = MultitaskModel::new(&config, table, dataset.classes(), &mut rng)?;
            let (model, history) = alternate_train(
                model,
                &dataset.select(Split::Train, None),
                &dataset.select(Split::Valid, None),
                &corpus,
                &config,
            )?;
            if let Some(h) = &history.classification {
                println!("best validation macro-F1 {:.4} at epoch {}", h.best_valid_f1, h.best_epoch);
            }
            if let Some(last) = history.alignment_losses.last() {
                println!("final alignment loss {last:.6}");
            }
            for lang in dataset.languages() {
                let test = model.classifier.encode_examples(&dataset.select(Split::Test, Some(&lang)))?;
                if test.is_empty() {
                    continue;
                }
                let preds = model.classifier.predict(&test)?;
                let truths: Vec<usize> = test.iter().map(|d| d.label).collect();
                let m = macro_metrics(&truths, &preds, dataset.classes());
                println!("{lang}: F1 {:.4} P {:.4} R {:.4}", m.f1, m.precision, m.recall);
            }
            if let Some(dir) = out {
                write_spaces(&model.embeddings().to_multilingual_space()?, &dir)?;
            }
            Ok(())
        }
        Command::Evaluate { config, out, overrides } => {
            let base = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default(),
            };
            let mut cfg = base.with_overrides(&parse_overrides(&overrides)?)?;
            if out.is_some() {
                cfg.experiment.output_dir = out;
            }
            let report = run_experiment(&cfg)?;
            print!("{}", emit_report(&report, ReportFormat::Text));
            if let Some(dir) = &cfg.experiment.output_dir {
                println!("artifacts in {}", dir.display());
            }
            Ok(())
        }
        Command::GenSynthetic {
            out,
            config,
            seed,
            noise,
            languages,
            docs_per_language,
            dim,
            vocab_size,
        } => {
            let mut cfg = match config {
                Some(p) => {
                    let text = fs::read_to_string(&p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
                    toml::from_str::<SyntheticConfig>(&text).map_err(|e| Error::InvalidConfig(e.to_string()))?
                }
                None => SyntheticConfig::default(),
            };
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.noise = noise.unwrap_or(cfg.noise);
            cfg.dim = dim.unwrap_or(cfg.dim);
            cfg.vocab_size = vocab_size.unwrap_or(cfg.vocab_size);
            if let Some(l) = languages {
                cfg.languages = l;
            }
            if let Some(d) = docs_per_language {
                cfg.docs_per_language = d;
            }
            let data = gen_synthetic(&cfg)?;
            write_synthetic(&data, &out)?;
            println!(
                "wrote {} documents, {} parallel pairs, {} languages to {}",
                data.dataset.len(),
                data.corpus.len(),
                cfg.languages.len(),
                out.display()
            );
            Ok(())
        }
        Command::Gradcheck { configs, seed } => {
            let entries = run_gradient_suite(configs, seed)?;
            let mut failed = 0;
            for e in &entries {
                println!(
                    "{:<32} {:>3} configs {:>7} entries  max rel {:.2e}  {}",
                    e.component.name(),
                    e.configs,
                    e.report.checked,
                    e.report.max_rel_error,
                    if e.passed() { "ok" } else { "FAIL" }
                );
                if !e.passed() {
                    failed += 1;
                }
            }
            if failed > 0 {
                return Err(Error::Divergence {
                    stage: "gradient check".into(),
                    detail: format!("{failed} components above relative error {TOLERANCE:e}"),
                });
            }
            Ok(())
        }
        Command::Report { input, format, out } => {
            let text = fs::read_to_string(&input).map_err(|e| Error::Io {
                path: input.clone(),
                source: e,
            })?;
            let report = parse_report_tsv(&text)?;
            let fmt = match format {
                OutputFormat::Text => ReportFormat::Text,
                OutputFormat::Tsv => ReportFormat::Tsv,
            };
            let rendered = emit_report(&report, fmt);
            match out {
                Some(path) => write_text(&path, &rendered),
                None => {
                    print!("{rendered}");
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
