mod args;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::Parser;
use serde::Serialize;
use serde_json::{json, Value};

use snapmap::detect::TransitionReport;
use snapmap::embed::{embed_dataset, EmbedConfig, Embedding};
use snapmap::observables::observable_series;
use snapmap::physics::{ising_sweep, tfim_sweep, toy_dataset, IsingConfig, TfimConfig};
use snapmap::pipeline::detect;
use snapmap::plot::{emit_plot, PlotData};
use snapmap::store::format::{read_manifest, sha256_hex};
use snapmap::store::{read_dataset, write_dataset, Dataset, MANIFEST_FILE};
use snapmap::{Error, ErrorClass, Result};

use args::{Cli, Command, EmbedArgs, GlobalArgs};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    subcommand: String,
    argv: Vec<String>,
    seed: Option<u64>,
    threads: usize,
    config: Value,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
    status: &'static str,
    error: Option<String>,
    exit_code: u8,
    duration_secs: f64,
}

#[derive(Default)]
struct RunContext {
    config: Value,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
}

impl RunContext {
    fn write(&mut self, dir: &Path, name: &str, text: &str) -> Result<()> {
        output::write_text(&dir.join(name), text)?;
        self.outputs.push(name.to_string());
        Ok(())
    }
}

fn progress(msg: &str) {
    eprintln!("[snapmap] {msg}");
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn timestamp(global: &GlobalArgs) -> Option<String> {
    if global.no_timestamp {
        return None;
    }
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    Some(format!("unix {secs}"))
}

fn load(input: &Path, ctx: &mut RunContext) -> Result<Dataset> {
    let manifest_path = input.join(MANIFEST_FILE);
    let manifest_bytes = std::fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    ctx.inputs.push(InputDigest {
        path: manifest_path.display().to_string(),
        sha256: sha256_hex(&manifest_bytes),
    });
    let manifest = read_manifest(input)?;
    for entry in &manifest.ensembles {
        ctx.inputs.push(InputDigest {
            path: input.join(&entry.blob).display().to_string(),
            sha256: entry.sha256.clone(),
        });
    }
    let ds = read_dataset(input)?;
    let (rows, cols) = ds.shape();
    progress(&format!(
        "loaded {} settings of {}x{} snapshots from {}",
        ds.len(),
        rows,
        cols,
        input.display()
    ));
    Ok(ds)
}

fn embed_config_json(args: &EmbedArgs, cfg: &EmbedConfig, ds: &Dataset) -> Value {
    let (rows, cols) = ds.shape();
    let resolved = cfg.wavelet.resolve(rows, cols);
    json!({
        "wavelet": args.wavelet == args::Switch::On,
        "wavelet_exponent": resolved.weight_exponent,
        "wavelet_spatial_dim": resolved.spatial_dim,
        "wavelet_levels": cfg.wavelet.levels,
        "svd_tol": cfg.rank.rel_tol,
        "svd_max_rank": cfg.rank.max_rank,
        "epsilon": cfg.bandwidth.epsilon,
        "epsilon_scale": cfg.bandwidth.scale,
        "alpha": cfg.alpha,
        "time": cfg.time,
        "dims": cfg.dims,
    })
}

fn run_embed(ds: &Dataset, cfg: &EmbedConfig) -> Result<Embedding> {
    let t = Instant::now();
    let emb = embed_dataset(ds, cfg)?;
    progress(&format!(
        "embedded {} settings (feature dim {}, bandwidth {:.4e}) in {:.2?}",
        ds.len(),
        emb.feature_dim,
        emb.kernel.bandwidth,
        t.elapsed()
    ));
    Ok(emb)
}

fn plot_data(emb: &Embedding, ds: &Dataset, fit: Option<TransitionReport>, global: &GlobalArgs) -> PlotData {
    PlotData {
        title: "Leading diffusion coordinate".into(),
        x_label: ds.parameter_name.clone(),
        y_label: "phi1".into(),
        x: emb.result.parameters.clone(),
        y: emb.result.phi(1),
        fit,
        timestamp: timestamp(global),
    }
}

fn emit_svg(ctx: &mut RunContext, out: &Path, data: &PlotData) -> Result<()> {
    emit_plot(data, &out.join("embedding.svg"))?;
    ctx.outputs.push("embedding.svg".into());
    Ok(())
}

fn run(cli: &Cli, ctx: &mut RunContext) -> Result<()> {
    let g = &cli.global;
    let out = &g.out;
    ensure_dir(out)?;
    match &cli.command {
        Command::GenTfim(a) => {
            let cfg = TfimConfig {
                length: a.length,
                lambdas: a.lambdas.0.clone(),
                shots: a.shots,
                seed: g.seed,
            };
            ctx.config = serde_json::to_value(&cfg).expect("config serializes");
            let t = Instant::now();
            let ds = tfim_sweep(&cfg)?;
            progress(&format!("sampled {} TFIM settings in {:.2?}", ds.len(), t.elapsed()));
            write_dataset(&ds, out)?;
            ctx.outputs.push(MANIFEST_FILE.into());
        }
        Command::GenIsing(a) => {
            let cfg = IsingConfig {
                side: a.side,
                temperatures: a.temperatures.0.clone(),
                shots: a.shots,
                burn_in: a.burn_in,
                decorrelation: a.decorrelation,
                seed: g.seed,
                algorithm: a.algorithm.into(),
            };
            ctx.config = serde_json::to_value(&cfg).expect("config serializes");
            let t = Instant::now();
            let ds = ising_sweep(&cfg)?;
            progress(&format!("sampled {} Ising temperatures in {:.2?}", ds.len(), t.elapsed()));
            write_dataset(&ds, out)?;
            ctx.outputs.push(MANIFEST_FILE.into());
        }
        Command::GenToy(a) => {
            let kind = a.kind.into();
            ctx.config = json!({ "kind": kind, "settings": a.settings, "shots": a.shots, "seed": g.seed });
            let ds = toy_dataset(kind, a.settings, a.shots, g.seed)?;
            write_dataset(&ds, out)?;
            ctx.outputs.push(MANIFEST_FILE.into());
        }
        Command::Embed(a) => {
            let ds = load(&a.input, ctx)?;
            let cfg = a.embed.config();
            ctx.config = json!({ "embed": embed_config_json(&a.embed, &cfg, &ds) });
            let emb = run_embed(&ds, &cfg)?;
            ctx.write(out, "embedding.csv", &output::embedding_csv(&emb.result, &ds.parameter_name))?;
            if a.dump_matrices {
                let p = &emb.result.parameters;
                ctx.write(out, "distances.csv", &output::matrix_csv(&emb.kernel.distances, p))?;
                ctx.write(out, "kernel.csv", &output::matrix_csv(&emb.kernel.similarities, p))?;
            }
            if a.plot {
                emit_svg(ctx, out, &plot_data(&emb, &ds, None, g))?;
            }
        }
        Command::Detect(a) => {
            let ds = load(&a.input, ctx)?;
            let cfg = a.embed.config();
            let dcfg = a.detect.config(g.seed);
            ctx.config = json!({ "embed": embed_config_json(&a.embed, &cfg, &ds), "detect": dcfg });
            let emb = run_embed(&ds, &cfg)?;
            let t = Instant::now();
            let det = detect(&ds, &emb, &cfg, &dcfg)?;
            progress(&format!(
                "{:?} p_c = {:.4} ± {:.4} ({:.2?})",
                det.headline.method,
                det.headline.p_c,
                det.headline.p_c_stderr,
                t.elapsed()
            ));
            ctx.write(out, "transition.json", &output::transition_json(&det, &ds.parameter_name))?;
            if a.plot {
                emit_svg(ctx, out, &plot_data(&emb, &ds, Some(det.headline.clone()), g))?;
            }
        }
        Command::Observables(a) => {
            let ds = load(&a.input, ctx)?;
            let req = a.observables.request();
            ctx.config = json!({ "observables": req });
            if a.observables.is_empty() {
                return Err(Error::InvalidConfig("no observable requested (use --brane, --edge or --nnparity)".into()));
            }
            let series = observable_series(&ds, &req)?;
            ctx.write(out, "observables.csv", &output::observables_csv(&series))?;
        }
        Command::Pipeline(a) => {
            let ds = load(&a.input, ctx)?;
            let cfg = a.embed.config();
            let dcfg = a.detect.config(g.seed);
            let mut req = a.observables.request();
            if a.observables.is_empty() {
                req.nn_parity = true;
            }
            ctx.config = json!({
                "embed": embed_config_json(&a.embed, &cfg, &ds),
                "detect": dcfg,
                "observables": req,
            });
            let emb = run_embed(&ds, &cfg)?;
            ctx.write(out, "embedding.csv", &output::embedding_csv(&emb.result, &ds.parameter_name))?;
            if a.dump_matrices {
                let p = &emb.result.parameters;
                ctx.write(out, "distances.csv", &output::matrix_csv(&emb.kernel.distances, p))?;
                ctx.write(out, "kernel.csv", &output::matrix_csv(&emb.kernel.similarities, p))?;
            }
            let t = Instant::now();
            let det = detect(&ds, &emb, &cfg, &dcfg);
            if let Ok(d) = &det {
                progress(&format!(
                    "{:?} p_c = {:.4} ± {:.4} ({:.2?})",
                    d.headline.method,
                    d.headline.p_c,
                    d.headline.p_c_stderr,
                    t.elapsed()
                ));
                ctx.write(out, "transition.json", &output::transition_json(d, &ds.parameter_name))?;
            }
            let fit = det.as_ref().ok().map(|d| d.headline.clone());
            emit_svg(ctx, out, &plot_data(&emb, &ds, fit, g))?;
            let series = observable_series(&ds, &req)?;
            ctx.write(out, "observables.csv", &output::observables_csv(&series))?;
            det?;
        }
    }
    Ok(())
}

/// Best-effort `--out` lookup for runs whose arguments failed to parse.
fn out_from_argv(argv: &[String]) -> Option<PathBuf> {
    argv.iter().enumerate().find_map(|(i, a)| {
        if a == "--out" {
            argv.get(i + 1).map(PathBuf::from)
        } else {
            a.strip_prefix("--out=").map(PathBuf::from)
        }
    })
}

fn write_manifest(dir: &Path, manifest: &RunManifest) {
    let path = dir.join("run.json");
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes") + "\n";
    if let Err(e) = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&path, text)) {
        eprintln!("warning: could not write {}: {e}", path.display());
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let start = Instant::now();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            if let Some(dir) = out_from_argv(&argv) {
                write_manifest(
                    &dir,
                    &RunManifest {
                        tool: env!("CARGO_PKG_NAME"),
                        version: env!("CARGO_PKG_VERSION"),
                        subcommand: argv.get(1).cloned().unwrap_or_default(),
                        argv: argv.clone(),
                        seed: None,
                        threads: 0,
                        config: Value::Null,
                        inputs: Vec::new(),
                        outputs: Vec::new(),
                        status: "error",
                        error: Some(e.to_string().trim_end().to_string()),
                        exit_code: EXIT_USAGE,
                        duration_secs: start.elapsed().as_secs_f64(),
                    },
                );
            }
            return ExitCode::from(EXIT_USAGE);
        }
    };

    let mut pool_error = None;
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            pool_error = Some(e.to_string());
        }
    }
    let mut ctx = RunContext::default();
    let result = match pool_error {
        Some(msg) => Err(Error::InvalidConfig(format!("thread pool: {msg}"))),
        None => run(&cli, &mut ctx),
    };
    let (code, error) = match &result {
        Ok(()) => (0, None),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e.class() {
                ErrorClass::Numerical => EXIT_NUMERICAL,
                ErrorClass::Data | ErrorClass::Io => EXIT_DATA,
            };
            (code, Some(e.to_string()))
        }
    };
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        subcommand: cli.command.name().to_string(),
        argv,
        seed: Some(cli.global.seed),
        threads: rayon::current_num_threads(),
        config: ctx.config,
        inputs: ctx.inputs,
        outputs: ctx.outputs,
        status: if code == 0 { "ok" } else { "error" },
        error,
        exit_code: code,
        duration_secs: start.elapsed().as_secs_f64(),
    };
    write_manifest(&cli.global.out, &manifest);
    progress(&format!("done in {:.2?}", start.elapsed()));
    ExitCode::from(code)
}
