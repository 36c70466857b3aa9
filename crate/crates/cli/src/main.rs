//! `scenediff` command-line tool.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use scenediff::eval::{default_universe, evaluate_sample, EvaluationReport};
use scenediff::exec::{map_slice, Execution};
use scenediff::geometric::{infer_tasks_geometric_with_diagnostics, GeoConfig};
use scenediff::io::{encode_png, write_atomic};
use scenediff::plugin::{PluginClassifier, DEFAULT_TIMEOUT};
use scenediff::relation::{HeuristicClassifier, HeuristicConfig, RelationClassifier};
use scenediff::render::overlay;
use scenediff::scene::{read_scene, ClassList, Scene, SceneFormat, ScenePair, TasksDocument};
use scenediff::sim::{generate_dataset, DatasetOptions, OracleClassifier, SimConfig};
use scenediff::transition::{infer_tasks_transition, SceneImages};
use scenediff::{ClassifyError, ParseError, SimError};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Transport(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Transport(_) => 3,
        }
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ClassifyError> for CliError {
    fn from(e: ClassifyError) -> Self {
        if e.is_transport() {
            CliError::Transport(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(m) => CliError::Usage(format!("invalid simulator config: {m}")),
            SimError::Classify(c) => c.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Parser, Debug)]
#[command(name = "scenediff", version, about = "Infer pick-and-place tasks from two tabletop scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic scene pairs with ground truth
    Simulate {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Write initial.png and final.png per sample
        #[arg(long)]
        render: bool,
        /// Write labelled pair crops (implies --render)
        #[arg(long)]
        emit_crops: bool,
        /// Generate adversarial samples
        #[arg(long)]
        adversarial: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Infer tasks for one scene pair
    Infer {
        #[arg(long, value_enum)]
        method: InferMethod,
        #[arg(long)]
        initial: PathBuf,
        #[arg(long = "final")]
        final_: PathBuf,
        #[arg(long, num_args = 2, value_names = ["IMG1", "IMG2"])]
        images: Option<Vec<PathBuf>>,
        #[arg(long, value_enum, default_value = "heuristic")]
        classifier: ClassifierKind,
        #[arg(long)]
        plugin_cmd: Option<String>,
        /// Truth file with relations, for the oracle classifier
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Also write <out>.debug.json
        #[arg(long)]
        debug: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Class list for detector text files, one name per line
        #[arg(long)]
        classes: Option<PathBuf>,
        /// Image size for detector text files, e.g. 640x480
        #[arg(long)]
        image_size: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against ground truth
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Draw boxes and task arrows over a scene image
    Overlay {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        tasks: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InferMethod {
    Geometric,
    Transition,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ClassifierKind {
    Heuristic,
    Oracle,
    Plugin,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    sim: SimConfig,
    geo: GeoConfig,
    heuristic: HeuristicConfig,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    write_atomic(path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("serializable");
    out.push('\n');
    out
}

/// Runs `f` with the requested parallelism. `--jobs 1` is sequential.
fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce(Execution) -> T + Send) -> Result<T> {
    match jobs {
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(1) => Ok(f(Execution::Sequential)),
        #[cfg(feature = "parallel")]
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(pool.install(|| f(Execution::Parallel)))
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => Ok(f(Execution::Sequential)),
        None => Ok(f(Execution::default())),
    }
}

fn parse_size(text: &str) -> Result<(u32, u32)> {
    let bad = || CliError::Usage(format!("--image-size expects WxH, got '{text}'"));
    let (w, h) = text.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((w.trim().parse().map_err(|_| bad())?, h.trim().parse().map_err(|_| bad())?))
}

fn load_scene(path: &Path, classes: &ClassList, size: Option<(u32, u32)>) -> Result<Scene> {
    let format = if path.extension().is_some_and(|e| e == "txt") {
        let (width, height) = size.ok_or_else(|| {
            CliError::Usage(format!("{}: detector text needs --image-size", path.display()))
        })?;
        SceneFormat::DetectorTxt { width, height }
    } else {
        SceneFormat::SceneJson
    };
    Ok(read_scene(path, format, classes)?)
}

fn load_image(path: &Path) -> Result<image::RgbImage> {
    image::open(path)
        .map(|i| i.to_rgb8())
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Image named by the scene file, resolved next to it.
fn scene_image(scene: &Scene, scene_path: &Path) -> Option<PathBuf> {
    let rel = scene.image_path()?;
    Some(scene_path.parent().unwrap_or(Path::new(".")).join(rel))
}

fn simulate(
    n: u64,
    seed: Option<u64>,
    out: &Path,
    options: DatasetOptions,
    config: Option<&Path>,
    jobs: Option<usize>,
) -> Result<()> {
    let mut cfg = load_config(config)?.sim;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let manifest = with_jobs(jobs, |exec| generate_dataset(&cfg, n, out, options, exec))??;
    eprintln!("wrote {} samples ({} files) to {}", n, manifest.files.len(), out.display());
    Ok(())
}

struct InferArgs {
    method: InferMethod,
    initial: PathBuf,
    final_: PathBuf,
    images: Option<Vec<PathBuf>>,
    classifier: ClassifierKind,
    plugin_cmd: Option<String>,
    truth: Option<PathBuf>,
    debug: bool,
    config: Option<PathBuf>,
    classes: Option<PathBuf>,
    image_size: Option<String>,
    out: PathBuf,
}

fn infer(a: InferArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    cfg.geo.validate().map_err(CliError::Usage)?;
    let classes = match &a.classes {
        Some(p) => ClassList::parse(&read_text(p)?),
        None => ClassList::default(),
    };
    let size = a.image_size.as_deref().map(parse_size).transpose()?;
    let initial = load_scene(&a.initial, &classes, size)?;
    let final_ = load_scene(&a.final_, &classes, size)?;
    let pair = ScenePair::new(initial, final_)?;

    let (doc, debug) = match a.method {
        InferMethod::Geometric => {
            let diag = infer_tasks_geometric_with_diagnostics(&pair, &cfg.geo);
            (TasksDocument::new(diag.tasks.clone()), to_json(&diag))
        }
        InferMethod::Transition => {
            let mut classifier: Box<dyn RelationClassifier> = match a.classifier {
                ClassifierKind::Heuristic => Box::new(HeuristicClassifier {
                    config: cfg.heuristic,
                }),
                ClassifierKind::Oracle => {
                    let path = match &a.truth {
                        Some(p) => p.clone(),
                        None => a.initial.parent().unwrap_or(Path::new(".")).join("truth.json"),
                    };
                    let truth = TasksDocument::from_json(&read_text(&path)?)?;
                    let relations = truth.relations.ok_or_else(|| {
                        CliError::Data(format!("{}: no relations for the oracle", path.display()))
                    })?;
                    Box::new(OracleClassifier::from_truth(&relations))
                }
                ClassifierKind::Plugin => {
                    let cmd = a
                        .plugin_cmd
                        .as_deref()
                        .ok_or_else(|| CliError::Usage("--classifier plugin needs --plugin-cmd".into()))?;
                    Box::new(PluginClassifier::spawn(cmd, DEFAULT_TIMEOUT)?)
                }
            };
            let image_paths = match &a.images {
                Some(v) => Some((v[0].clone(), v[1].clone())),
                None if matches!(a.classifier, ClassifierKind::Plugin) => {
                    match (scene_image(&pair.initial, &a.initial), scene_image(&pair.final_, &a.final_)) {
                        (Some(i), Some(f)) => Some((i, f)),
                        _ => {
                            return Err(CliError::Usage(
                                "the plugin classifier needs --images or image paths in the scene files".into(),
                            ))
                        }
                    }
                }
                None => None,
            };
            let images = match image_paths {
                Some((i, f)) => Some((load_image(&i)?, load_image(&f)?)),
                None => None,
            };
            let views = SceneImages {
                initial: images.as_ref().map(|(i, _)| i),
                final_: images.as_ref().map(|(_, f)| f),
            };
            let outcome = infer_tasks_transition(&pair, views, classifier.as_mut(), &cfg.geo)?;
            let mut doc = TasksDocument::new(outcome.tasks.clone());
            doc.relations = Some(outcome.relations.clone());
            (doc, to_json(&outcome))
        }
    };
    write_out(&a.out, doc.to_json().as_bytes())?;
    if a.debug {
        let mut name = a.out.clone().into_os_string();
        name.push(".debug.json");
        write_out(Path::new(&name), debug.as_bytes())?;
    }
    Ok(())
}

/// `sample_<k>` directories under `dir`, ordered by k.
fn sample_dirs(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        let name = entry.file_name();
        let Some(k) = name.to_str().and_then(|n| n.strip_prefix("sample_")).and_then(|k| k.parse().ok()) else {
            continue;
        };
        if entry.path().is_dir() {
            out.push((k, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

fn evaluate(pred: &Path, truth: &Path, report: &Path, jobs: Option<usize>) -> Result<()> {
    let samples = sample_dirs(truth)?;
    if samples.is_empty() {
        return Err(CliError::Data(format!("{}: no sample_<k> directories", truth.display())));
    }
    let classes = ClassList::default();
    let one = |(k, dir): &(u64, PathBuf)| -> Result<_> {
        let name = format!("sample_{k}");
        let truth_doc = TasksDocument::from_json(&read_text(&dir.join("truth.json"))?)?;
        let pred_doc = TasksDocument::from_json(&read_text(&pred.join(format!("{name}.json")))?)?;
        let initial = read_scene(&dir.join("initial.json"), SceneFormat::SceneJson, &classes)?;
        let final_ = read_scene(&dir.join("final.json"), SceneFormat::SceneJson, &classes)?;
        let pair = ScenePair::new(initial, final_)?;
        let universe = default_universe(&pair, &truth_doc.tasks);
        evaluate_sample(name.clone(), &pred_doc, &truth_doc, &universe)
            .map_err(|e| CliError::Data(format!("{name}: {e}")))
    };
    let results = with_jobs(jobs, |exec| map_slice(&samples, exec, one))?;
    let evaluations = results.into_iter().collect::<Result<Vec<_>>>()?;
    let rep = EvaluationReport::from_samples(evaluations).map_err(|e| CliError::Data(e.to_string()))?;
    write_out(report, rep.to_json().as_bytes())?;
    eprintln!(
        "accuracy {:.4} over {} pairs in {} scene pairs",
        rep.accuracy, rep.n_pairs, rep.n_scene_pairs
    );
    Ok(())
}

fn draw_overlay(scene: &Path, image: &Path, tasks: &[PathBuf], out: &Path) -> Result<()> {
    let scene = load_scene(scene, &ClassList::default(), None)?;
    let mut img = load_image(image)?;
    for path in tasks {
        let doc = TasksDocument::from_json(&read_text(path)?)?;
        overlay(&mut img, &scene, &doc.tasks).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    let png = encode_png(&img).map_err(|e| CliError::Data(e.to_string()))?;
    write_out(out, &png)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            n,
            seed,
            out,
            render,
            emit_crops,
            adversarial,
            config,
            jobs,
        } => simulate(
            n,
            seed,
            &out,
            DatasetOptions {
                render,
                emit_crops,
                adversarial,
            },
            config.as_deref(),
            jobs,
        ),
        Command::Infer {
            method,
            initial,
            final_,
            images,
            classifier,
            plugin_cmd,
            truth,
            debug,
            config,
            classes,
            image_size,
            out,
        } => infer(InferArgs {
            method,
            initial,
            final_,
            images,
            classifier,
            plugin_cmd,
            truth,
            debug,
            config,
            classes,
            image_size,
            out,
        }),
        Command::Evaluate {
            pred,
            truth,
            report,
            jobs,
        } => evaluate(&pred, &truth, &report, jobs),
        Command::Overlay {
            scene,
            image,
            tasks,
            out,
        } => draw_overlay(&scene, &image, &tasks, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
