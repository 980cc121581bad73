use std::io::{BufReader, Write};
use std::net::TcpListener;
use std::path::Path;

use comom::augment::{build_dictionaries, generate_dataset, label_counts, merge_wordlist_dir, AugmentSpec};
use comom::backends::protocol::serve;
use comom::backends::{
    train_native_with, Backend, Capability, CompositeBackend, ConnectOptions, FeatureConfig, MockBackend, NativeModel,
    TrainConfig,
};
use comom::ensemble::{bootstrap_train, make_folds, EnsembleBackend};
use comom::eval::e_t5_macro;
use comom::ingest::{dataset_stats, export_dataset, import_dataset, lint_dataset, read_dataset, Format, Imported, LintReport};
use comom::pipeline::{run_experiment, run_pipeline, PipelineBackends, PipelineConfig};
use comom::{ComparisonLabel, Error};
use serde_json::{json, Value};

use crate::config::{path_value, write_json, CliConfig, Provenance};
use crate::{parse_averaging, Cli, Command, Failure};

struct Session {
    config: CliConfig,
    seed: Option<u64>,
    quiet: bool,
}

impl Session {
    fn note(&self, message: impl std::fmt::Display) {
        if !self.quiet {
            eprintln!("{message}");
        }
    }

    fn format(&self, flag: Option<Format>) -> Format {
        flag.or(self.config.format).unwrap_or(Format::CanonicalJsonl)
    }

    fn import(&self, path: &Path, format: Format) -> Result<Imported, Failure> {
        let imported = import_dataset(path, format).map_err(|e| Failure::from(e).context(path))?;
        for w in &imported.warnings {
            self.note(format_args!("warning: {w}"));
        }
        Ok(imported)
    }

    fn connect(&self) -> ConnectOptions {
        self.config.connect
    }
}

fn print(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("value serializes"));
}

pub fn run(cli: Cli) -> Result<u8, Failure> {
    let config = CliConfig::load(cli.config.as_deref())?;
    let session = Session { seed: cli.seed.or(config.seed), config, quiet: cli.quiet };
    match cli.command {
        Command::Clean { input, output, format } => {
            let format = session.format(format.format);
            let imported = session.import(&input, format)?;
            export_dataset(&imported.dataset, &output).map_err(|e| Failure::from(e).context(&output))?;
            let settings = json!({ "input": path_value(&input), "format": format });
            Provenance::new("clean", None, settings).write_sidecar(&output)?;
            println!("{} sentences, {} warnings", imported.dataset.len(), imported.warnings.len());
            Ok(0)
        }
        Command::Stats { input, format, json } => {
            let format = session.format(format.format);
            let stats = dataset_stats(&session.import(&input, format)?.dataset);
            if json {
                let provenance = Provenance::new("stats", None, json!({ "input": path_value(&input), "format": format }));
                print(&provenance.attach(serde_json::to_value(&stats).map_err(Error::Json)?));
            } else {
                print!("{}", stats.render_table());
            }
            Ok(0)
        }
        Command::Lint { input, format, max_predicate_tokens, json } => {
            let format = session.format(format.format);
            let mut lint = session.config.lint;
            if let Some(n) = max_predicate_tokens {
                lint.max_predicate_tokens = n;
            }
            let report = match import_dataset(&input, format) {
                Ok(imported) => lint_dataset(&imported.dataset, &lint),
                Err(Error::InvalidRecords(records)) => LintReport::default().with_record_errors(&records),
                Err(e) => return Err(Failure::from(e).context(&input)),
            };
            if json {
                let settings = json!({ "input": path_value(&input), "format": format, "lint": lint });
                let provenance = Provenance::new("lint", None, settings);
                print(&provenance.attach(serde_json::to_value(&report).map_err(Error::Json)?));
            } else {
                print!("{}", report.render_table());
            }
            Ok(u8::from(!report.is_clean()))
        }
        Command::Augment { input, spec, version, wordlists, output, format } => {
            let format = session.format(format.format);
            let source = session.import(&input, format)?.dataset;
            let built = build_dictionaries(&source)?;
            for w in &built.warnings {
                let labels: Vec<&str> = w.labels.iter().map(|l| l.as_str()).collect();
                session.note(format_args!("warning: predicate {:?} listed under {}", w.phrase, labels.join(", ")));
            }
            let mut dicts = built.dictionaries;
            if let Some(dir) = &wordlists {
                dicts = merge_wordlist_dir(dicts, dir).map_err(|e| Failure::from(e).context(dir))?;
            }
            let mut spec = match (&spec, version.as_deref()) {
                (Some(path), _) => {
                    let text = std::fs::read_to_string(path).map_err(|e| Failure::from(Error::Io(e)).context(path))?;
                    let spec: AugmentSpec =
                        serde_json::from_str(&text).map_err(|e| Failure::from(Error::Json(e)).context(path))?;
                    spec
                }
                (None, Some("v2")) => AugmentSpec::version2(session.seed.unwrap_or(0)),
                (None, Some("v3")) => AugmentSpec::version3(session.seed.unwrap_or(0)),
                (None, other) => return Err(Failure::usage("UsageError", format!("unknown version {other:?}; expected v2 or v3"))),
            };
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            let augmented = generate_dataset(&source, &dicts, &spec)?;
            export_dataset(&augmented, &output).map_err(|e| Failure::from(e).context(&output))?;
            let settings = json!({
                "input": path_value(&input),
                "format": format,
                "spec": spec,
                "wordlists": wordlists.as_deref().map(path_value),
            });
            Provenance::new("augment", Some(spec.seed), settings).write_sidecar(&output)?;
            let counts = label_counts(&augmented);
            for label in ComparisonLabel::ALL {
                println!("{:<5} {:>7}", label.as_str(), counts.get(&label).copied().unwrap_or(0));
            }
            Ok(0)
        }
        Command::Train { task, input, output, bootstrap, learning_rate, epochs, batch_size, profile, hash_bits } => {
            let data = read_dataset(&input).map_err(|e| Failure::from(e).context(&input))?;
            let train = TrainConfig {
                learning_rate: learning_rate.unwrap_or(session.config.train.learning_rate),
                epochs: epochs.unwrap_or(session.config.train.epochs),
                batch_size: batch_size.unwrap_or(session.config.train.batch_size),
                seed: session.seed.unwrap_or(session.config.train.seed),
                ..session.config.train
            };
            let mut features: FeatureConfig = session.config.features;
            if let Some(p) = &profile {
                features.profile = serde_json::from_value(json!(p))
                    .map_err(|_| Failure::usage("UsageError", format!("unknown profile {p:?}; expected words, chars or full")))?;
            }
            if let Some(bits) = hash_bits {
                features.hash_bits = bits;
            }
            let settings = json!({
                "input": path_value(&input),
                "task": task,
                "train": train,
                "features": features,
                "bootstrap": bootstrap,
            });
            let summary = match bootstrap {
                Some(k) => {
                    let plan = make_folds(&data, k, train.seed)?;
                    let ensemble = bootstrap_train(task, &data, &plan, &train, features)?;
                    let manifest = ensemble.save(&output)?;
                    json!({ "task": task, "members": manifest.members.len(), "validation": manifest.validation })
                }
                None => {
                    let model = train_native_with(task, &data, &train, features)?;
                    model.save(&output).map_err(|e| Failure::from(e).context(&output))?;
                    json!({ "task": task, "epoch_losses": model.report.epoch_losses })
                }
            };
            Provenance::new("train", Some(train.seed), settings).write_sidecar(&output)?;
            print(&summary);
            Ok(0)
        }
        Command::Predict { input, pipeline, output, workers } => {
            let data = read_dataset(&input).map_err(|e| Failure::from(e).context(&input))?;
            let config = PipelineConfig::read(&pipeline).map_err(|e| Failure::from(e).context(&pipeline))?;
            let base = pipeline.parent().unwrap_or(Path::new("."));
            let backends = PipelineBackends::open(&config, base, &session.connect())?;
            let workers = workers.or(session.config.workers).unwrap_or(1);
            let settings = json!({ "input": path_value(&input), "pipeline": config, "workers": workers });
            let provenance = Provenance::new("predict", None, settings);
            match run_pipeline(&data, &config, &backends, workers) {
                Ok(run) => {
                    export_dataset(&run.predictions, &output).map_err(|e| Failure::from(e).context(&output))?;
                    provenance.write_sidecar(&output)?;
                    print(&serde_json::to_value(&run.report).map_err(Error::Json)?);
                    Ok(0)
                }
                Err(failure) => {
                    export_dataset(&failure.partial.predictions, &output)?;
                    provenance.write_sidecar(&output)?;
                    session.note(format_args!(
                        "wrote {} predictions before the failure to {}",
                        failure.partial.predictions.len(),
                        output.display()
                    ));
                    Err(Failure { code: 3, kind: failure.error.kind().into(), message: failure.to_string(), details: None })
                }
            }
        }
        Command::Eval { gold, pred, averaging, output, json } => {
            let averaging = parse_averaging(averaging.as_deref())?.unwrap_or(session.config.averaging);
            let gold_data = read_dataset(&gold).map_err(|e| Failure::from(e).context(&gold))?;
            let pred_data = read_dataset(&pred).map_err(|e| Failure::from(e).context(&pred))?;
            let mut report = e_t5_macro(&gold_data, &pred_data, averaging)?;
            let settings = json!({ "gold": path_value(&gold), "pred": path_value(&pred), "averaging": averaging });
            report.provenance = Some(Provenance::new("eval", None, settings).to_value());
            if let Some(path) = &output {
                write_json(path, &report)?;
            }
            if json {
                print(&serde_json::to_value(&report).map_err(Error::Json)?);
            } else {
                print!("{}", report.render_table());
            }
            Ok(0)
        }
        Command::Experiment { preset, data, output, learning_rate, epochs } => {
            let mut config = preset.config(session.seed.unwrap_or(0));
            if let Some(lr) = learning_rate {
                config.train.learning_rate = lr;
            }
            if let Some(n) = epochs {
                config.train.epochs = n;
            }
            let outcome = run_experiment(&config, &data, &output)?;
            let settings = json!({ "data": path_value(&data), "experiment": config });
            write_json(&output.join("provenance.json"), &Provenance::new("experiment", Some(config.seed), settings))?;
            print!("{}", outcome.report.render_table());
            Ok(0)
        }
        Command::Serve { models, listen } => {
            let connect = session.connect();
            let mut opened = Vec::new();
            for path in &models {
                let backend: Box<dyn Backend> = if path.extension().is_some_and(|e| e == "json") {
                    Box::new(EnsembleBackend::load(path, &connect).map_err(|e| Failure::from(e).context(path))?)
                } else {
                    Box::new(NativeModel::load(path).map_err(|e| Failure::from(e).context(path))?)
                };
                opened.push(backend);
            }
            let backend: Box<dyn Backend> = if opened.len() == 1 {
                opened.remove(0)
            } else {
                Box::new(opened.into_iter().fold(CompositeBackend::new("served"), CompositeBackend::with))
            };
            serve_on(&session, backend.as_ref(), listen.as_deref())
        }
        Command::MockServe { fixture, listen } => {
            let text = std::fs::read_to_string(&fixture).map_err(|e| Failure::from(Error::Io(e)).context(&fixture))?;
            let mock = MockBackend::from_json(&text).map_err(|e| Failure::from(e).context(&fixture))?;
            serve_on(&session, &mock, listen.as_deref())
        }
    }
}

/// Serves stdin/stdout, or every TCP connection in turn when `listen` is set.
fn serve_on(session: &Session, backend: &dyn Backend, listen: Option<&str>) -> Result<u8, Failure> {
    let caps: Vec<&str> = backend.capabilities().iter().map(|c: &Capability| c.as_str()).collect();
    let Some(address) = listen else {
        let stats = serve(backend, std::io::stdin().lock(), std::io::stdout().lock())?;
        session.note(format_args!("served {} requests, {} errors", stats.requests, stats.errors));
        return Ok(0);
    };
    let listener = TcpListener::bind(address).map_err(|e| Failure::from(Error::Io(e)))?;
    let local = listener.local_addr().map_err(|e| Failure::from(Error::Io(e)))?;
    // Always printed: callers binding port 0 need the address.
    eprintln!("listening on {local} ({})", caps.join(", "));
    let _ = std::io::stderr().flush();
    for stream in listener.incoming() {
        let stream = stream.map_err(|e| Failure::from(Error::Io(e)))?;
        let reader = BufReader::new(stream.try_clone().map_err(|e| Failure::from(Error::Io(e)))?);
        match serve(backend, reader, stream) {
            Ok(stats) => session.note(format_args!("served {} requests, {} errors", stats.requests, stats.errors)),
            Err(e) => session.note(format_args!("connection closed: {e}")),
        }
    }
    Ok(0)
}
