//! `aitee` command line. Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use aitee_core::circuit_graph::build_graph;
use aitee_core::dataset::{generate_corpus, read_corpus, write_corpus, LabeledNetlist};
use aitee_core::embedding::{embed_circuit, similarity_map};
use aitee_core::gnn::{accuracy, grad_check, load_model, model_hash, save_model, train, GnnConfig, GnnModel, TrainConfig};
use aitee_core::knowledge_base::{build_index, load_kb, load_or_build_index, retrieve_units, write_index};
use aitee_core::netlist::{derive_node_context, parse_netlist, serialize_netlist, Netlist};
use aitee_core::reconstruct::{load_scene_files, reconstruct};
use aitee_core::simulate::{solve_dc, superposition_report};
use aitee_core::tutor::harness::{parse_scripts, run_didactic_harness, BUNDLED_SCRIPTS};
use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::engine::{make_backend, Engine};
use crate::error::{classify, EngineError};

#[derive(Parser, Debug)]
#[command(name = "aitee", version, about = "Circuit-tutoring engine")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse a netlist and print its canonical form and node context.
    Parse { netlist: PathBuf },
    /// Print the circuit graph with node features.
    Graph { netlist: PathBuf },
    /// Generate a labelled train/validation corpus.
    Gen {
        #[arg(long, default_value_t = 150)]
        train: usize,
        #[arg(long, default_value_t = 30)]
        val: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the circuit classifier.
    Train(TrainArgs),
    /// Finite-difference gradient check on generated circuits.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the 11-value embedding of a circuit.
    Embed {
        netlist: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Print per-entry explanation.
        #[arg(long)]
        explain: bool,
    },
    /// Pairwise similarity map over a corpus.
    Simmap {
        /// Corpus directory with manifest.tsv; default is a generated
        /// 16-circuit set.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        seed: u64,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        tsv: Option<PathBuf>,
        #[arg(long)]
        ppm: Option<PathBuf>,
        #[arg(long, default_value_t = 24)]
        cell: u32,
    },
    /// Rebuild a netlist from detections and a sketch image.
    Reconstruct { detections: PathBuf, image: PathBuf },
    /// DC operating point.
    Simulate {
        netlist: PathBuf,
        #[arg(long)]
        superposition: bool,
    },
    /// Knowledge-base maintenance and retrieval.
    Kb {
        #[command(subcommand)]
        command: KbCommand,
    },
    /// Terminal tutoring session over the configured backend.
    Chat { netlist: PathBuf },
    /// Run the didactic harness and print the TSV report.
    Harness {
        /// Dialogue script; default is the bundled set of five dialogues.
        #[arg(long)]
        script: Option<PathBuf>,
    },
    /// Start the HTTP API.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training corpus directory; generated when omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, requires = "corpus")]
    val_corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 150)]
    train: usize,
    #[arg(long, default_value_t = 30)]
    val: usize,
    #[arg(long, default_value_t = 42)]
    data_seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum KbCommand {
    /// Embed every index netlist and write kb.index.
    Index {
        dir: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Rank units for a query circuit.
    Query {
        netlist: PathBuf,
        #[arg(short, long)]
        k: Option<usize>,
        #[arg(long)]
        kb: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        CliError::Data(format!("[{}] {e}", classify(&e).0))
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_netlist(path: &Path) -> Result<Netlist, CliError> {
    parse_netlist(&read_text(path)?).map_err(|e| CliError::from(EngineError::Netlist(e)))
}

fn load_model_file(path: &Path) -> Result<GnnModel, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    load_model(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Result<Config, CliError> {
    Config::load(path).map_err(|e| CliError::Usage(format!("config: {e}")))
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    1
                }
            };
        }
    };
    match execute(cli, input, out) {
        Ok(()) => 0,
        Err(e) => {
            let msg = match &e {
                CliError::Usage(m) | CliError::Data(m) => m,
            };
            let _ = writeln!(err, "error: {msg}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg_path = cli.config.as_deref();
    let w = |out: &mut dyn Write, s: &str| out.write_all(s.as_bytes()).map_err(data);
    match cli.command {
        Command::Parse { netlist } => {
            let net = read_netlist(&netlist)?;
            w(out, &serialize_netlist(&net))?;
            w(out, "\n# node context\n")?;
            w(out, &derive_node_context(&net))?;
            for warning in net.warnings() {
                w(out, &format!("# warning: {warning}\n"))?;
            }
        }
        Command::Graph { netlist } => {
            let net = read_netlist(&netlist)?;
            w(out, &build_graph(&net).to_table())?;
        }
        Command::Gen { train, val, seed, out: dir } => {
            let (t, v) = generate_corpus(train, val, seed);
            write_corpus(&dir.join("train"), &t).map_err(data)?;
            write_corpus(&dir.join("val"), &v).map_err(data)?;
            w(out, &format!("wrote {} train and {} validation circuits to {}\n", t.len(), v.len(), dir.display()))?;
        }
        Command::Train(a) => run_train(a, out)?,
        Command::Gradcheck { cases, seed } => {
            let (items, _) = generate_corpus(cases, 0, seed);
            let mut worst: f64 = 0.0;
            for (i, item) in items.iter().enumerate() {
                let model = GnnModel::new(GnnConfig::default(), seed + i as u64);
                let err = grad_check(&model, &build_graph(&item.netlist), item.class).map_err(data)?;
                w(out, &format!("case {:>3}\t{}\t{err:.3e}\n", i + 1, item.class.name()))?;
                worst = worst.max(err);
            }
            w(out, &format!("max relative error {worst:.3e}\n"))?;
            if worst >= 1e-4 {
                return Err(CliError::Data(format!("gradient check failed: {worst:.3e} >= 1e-4")));
            }
        }
        Command::Embed { netlist, model, explain } => {
            let cfg = load_config(cfg_path)?;
            let model = load_model_file(model.as_deref().unwrap_or(&cfg.model))?;
            let net = read_netlist(&netlist)?;
            let e = embed_circuit(&net, &model, &netlist.display().to_string()).map_err(|e| CliError::from(EngineError::Embedding(e)))?;
            if explain {
                w(out, &e.explain())?;
            } else {
                let vals: Vec<String> = e.values.iter().map(|v| format!("{v:.6}")).collect();
                w(out, &format!("{}\n", vals.join("\t")))?;
            }
        }
        Command::Simmap { corpus, seed, model, tsv, ppm, cell } => {
            let cfg = load_config(cfg_path)?;
            let model = load_model_file(model.as_deref().unwrap_or(&cfg.model))?;
            let mut items: Vec<LabeledNetlist> = match corpus {
                Some(dir) => read_corpus(&dir).map_err(data)?,
                None => generate_corpus(16, 0, seed).0,
            };
            // group classes so same-class blocks sit on the diagonal
            items.sort_by_key(|it| it.class.id());
            let named: Vec<(String, Netlist)> = items
                .iter()
                .enumerate()
                .map(|(i, it)| (format!("{:02}-c{}", i + 1, it.class.id()), it.netlist.clone()))
                .collect();
            let map = similarity_map(&named, &model).map_err(|e| CliError::from(EngineError::Embedding(e)))?;
            let groups: Vec<usize> = items.iter().map(|it| it.class.id()).collect();
            let (intra, inter) = map.intra_inter(&groups);
            if let Some(p) = tsv {
                write_file(&p, map.to_tsv().as_bytes())?;
            }
            if let Some(p) = ppm {
                write_file(&p, &map.to_ppm(cell))?;
            }
            w(out, &format!("circuits\t{}\nintra\t{intra:.4}\ninter\t{inter:.4}\ngap\t{:.4}\n", items.len(), intra - inter))?;
        }
        Command::Reconstruct { detections, image } => {
            let cfg = load_config(cfg_path)?;
            let scene = load_scene_files(&detections, &image).map_err(|e| CliError::from(EngineError::Reconstruct(e)))?;
            let r = reconstruct(&scene, &cfg.reconstruct).map_err(|e| CliError::from(EngineError::Reconstruct(e)))?;
            w(out, &serialize_netlist(&r.netlist))?;
            w(
                out,
                &format!(
                    "# {} valid and {} rejected connections\n",
                    r.valid_connections.len(),
                    r.rejected_connections.len()
                ),
            )?;
            for d in &r.diagnostics {
                w(out, &format!("# {d}\n"))?;
            }
        }
        Command::Simulate { netlist, superposition } => {
            let net = read_netlist(&netlist)?;
            let sim = solve_dc(&net).map_err(|e| CliError::from(EngineError::Simulation(e)))?;
            w(out, &sim.to_table())?;
            if superposition {
                let r = superposition_report(&net).map_err(|e| CliError::from(EngineError::Simulation(e)))?;
                w(out, &r.to_table())?;
            }
        }
        Command::Kb { command } => run_kb(command, cfg_path, out)?,
        Command::Chat { netlist } => {
            let cfg = load_config(cfg_path)?;
            let text = read_text(&netlist)?;
            let engine = Engine::from_config(cfg)?;
            run_chat(&engine, &text, input, out)?;
        }
        Command::Harness { script } => {
            let cfg = load_config(cfg_path)?;
            let text = match script {
                Some(p) => read_text(&p)?,
                None => BUNDLED_SCRIPTS.to_string(),
            };
            let scripts = parse_scripts(&text).map_err(|e| CliError::from(EngineError::Tutor(e)))?;
            let backend = make_backend(&cfg)?;
            let report = run_didactic_harness(&scripts, backend.as_ref(), &cfg.tutor());
            w(out, &report.to_tsv())?;
        }
        Command::Serve { bind } => {
            let mut cfg = load_config(cfg_path)?;
            if let Some(b) = bind {
                cfg.bind = b;
            }
            let engine = Arc::new(Engine::from_config(cfg)?);
            let rt = tokio::runtime::Runtime::new().map_err(data)?;
            rt.block_on(crate::api::serve(engine)).map_err(data)?;
        }
    }
    Ok(())
}

fn run_train(a: TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (train_set, val_set) = match &a.corpus {
        Some(dir) => {
            let t = read_corpus(dir).map_err(data)?;
            let v = match &a.val_corpus {
                Some(d) => read_corpus(d).map_err(data)?,
                None => Vec::new(),
            };
            (t, v)
        }
        None => generate_corpus(a.train, a.val, a.data_seed),
    };
    let defaults = TrainConfig::default();
    let tc = TrainConfig {
        epochs: a.epochs.unwrap_or(defaults.epochs),
        learning_rate: a.lr.unwrap_or(defaults.learning_rate),
        l2: a.l2.unwrap_or(defaults.l2),
        seed: a.seed,
    };
    let init = GnnModel::new(GnnConfig::default(), a.seed);
    let report = train(&init, &train_set, &tc).map_err(data)?;
    let bytes = save_model(&report.model);
    write_file(&a.out, &bytes)?;
    let mut s = format!(
        "epochs\t{}\nfinal loss\t{:.6}\ntrain accuracy\t{:.4}\n",
        tc.epochs,
        report.losses.last().copied().unwrap_or(f64::NAN),
        accuracy(&report.model, &train_set).map_err(data)?
    );
    if !val_set.is_empty() {
        s.push_str(&format!("validation accuracy\t{:.4}\n", accuracy(&report.model, &val_set).map_err(data)?));
    }
    s.push_str(&format!("model\t{}\nsha256\t{}\n", a.out.display(), model_hash(&report.model)));
    out.write_all(s.as_bytes()).map_err(data)
}

fn run_kb(command: KbCommand, cfg_path: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(cfg_path)?;
    match command {
        KbCommand::Index { dir, model } => {
            let dir = dir.unwrap_or(cfg.kb_dir);
            let model = load_model_file(model.as_deref().unwrap_or(&cfg.model))?;
            let kb = load_kb(&dir).map_err(|e| CliError::from(EngineError::Kb(e)))?;
            let indexed = build_index(&kb, &model).map_err(|e| CliError::from(EngineError::Kb(e)))?;
            write_index(&dir, &indexed).map_err(|e| CliError::from(EngineError::Kb(e)))?;
            out.write_all(
                format!(
                    "indexed {} units, {} netlists\nmodel {}\n",
                    indexed.units.len(),
                    indexed.index.len(),
                    model_hash(&model)
                )
                .as_bytes(),
            )
            .map_err(data)
        }
        KbCommand::Query { netlist, k, kb, model } => {
            let dir = kb.unwrap_or(cfg.kb_dir);
            let model = load_model_file(model.as_deref().unwrap_or(&cfg.model))?;
            let net = read_netlist(&netlist)?;
            let kb = load_kb(&dir).map_err(|e| CliError::from(EngineError::Kb(e)))?;
            let kb = load_or_build_index(&dir, &kb, &model).map_err(|e| CliError::from(EngineError::Kb(e)))?;
            let k = k.unwrap_or(cfg.retrieval_k);
            if k == 0 {
                return Err(CliError::Usage("-k must be at least 1".into()));
            }
            let hits = retrieve_units(&kb, &net, &model, k).map_err(|e| CliError::from(EngineError::Kb(e)))?;
            let mut s = String::new();
            for (i, h) in hits.iter().enumerate() {
                s.push_str(&format!("{}\t{}\t{:.6}\t{}\n", i + 1, h.unit_id, h.score, h.title));
            }
            out.write_all(s.as_bytes()).map_err(data)
        }
    }
}

/// REPL over one session. `/quit` or end of input stops it.
pub fn run_chat(engine: &Engine, netlist: &str, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    let info = engine.add_netlist(netlist)?;
    let created = engine.create_session(&info.circuit_id)?;
    let mut s = format!("session {}\n", created.session_id);
    if !created.retrieved.is_empty() {
        s.push_str(&format!("learning units: {}\n", created.retrieved.join(", ")));
    }
    s.push_str(&format!("{}\n", created.description.trim_end()));
    out.write_all(s.as_bytes()).map_err(data)?;
    let mut line = String::new();
    loop {
        out.write_all(b"> ").map_err(data)?;
        out.flush().map_err(data)?;
        line.clear();
        if input.read_line(&mut line).map_err(data)? == 0 {
            break;
        }
        let msg = line.trim();
        if msg == "/quit" {
            break;
        }
        if msg.is_empty() {
            continue;
        }
        let reply = engine.send_message(&created.session_id, msg)?;
        out.write_all(format!("{}\n", reply.reply).as_bytes()).map_err(data)?;
    }
    Ok(())
}
