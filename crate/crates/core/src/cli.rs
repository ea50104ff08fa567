//! Command-line front end: config loading, flag overrides, artifacts.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use chrono::Utc;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use toml::Value;

use crate::error::{Error, Result};
use crate::harness::artifacts::{self, SCHEMA_VERSION};
use crate::harness::config::ExperimentConfig;
use crate::harness::cumulant::{cumulant_expansion_validate, sin_derivative};
use crate::harness::runs::{self, all_pass, Verdict};
use crate::linalg::C64;
use crate::ncfree::{enumerate_nc, free_cumulants, kreweras, MAX_K};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FAILED: i32 = 2;

pub const OUT_DIR_ENV: &str = "QUELAB_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "quelab", version, about = "Edge eigenvector overlap experiments for Wigner matrices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Edge CLT: moments, KS distance and histogram of the normalised overlap.
    Clt(RunArgs),
    /// Largest scaled overlap over all eigenvectors.
    Que(RunArgs),
    /// Rigidity ratio and level-repulsion frequencies.
    Rigidity(RunArgs),
    /// Normalised local-law residuals over a spectral grid and the edge window.
    Locallaw(RunArgs),
    /// Joint sample of the overlap and its regularised proxy.
    Regcheck(RunArgs),
    /// Truncated cumulant expansion of E[Y sin(Y)].
    Cumulant(CumulantArgs),
    /// Non-crossing partitions, Kreweras complements and free cumulants as JSON.
    Nc(NcArgs),
}

#[derive(Args, Debug, Default, Clone)]
pub struct RunArgs {
    /// TOML config with [ensemble], [experiment], [regularization], [output].
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in config; see `--preset help`.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub beta: Option<u8>,
    /// gaussian, rademacher or uniform.
    #[arg(long)]
    pub law: Option<String>,
    #[arg(long)]
    pub diag_variance_factor: Option<f64>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// 1-based index, `bottom` or `top`.
    #[arg(long)]
    pub ell: Option<String>,
    /// |I| as a count (`150`) or a fraction (`0.5`).
    #[arg(long)]
    pub index_set: Option<String>,
    /// standard or haar.
    #[arg(long)]
    pub basis: Option<String>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Comma-separated extra sizes for trend checks.
    #[arg(long, value_delimiter = ',')]
    pub n_sweep: Option<Vec<usize>>,
    /// `default` or `E:eta,E:eta,...`.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub edge_points: Option<usize>,
    /// practical, paper or custom.
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub eps0: Option<f64>,
    #[arg(long)]
    pub c0: Option<f64>,
    /// Five comma-separated exponents for the custom profile.
    #[arg(long, value_delimiter = ',')]
    pub delta: Option<Vec<f64>>,
    /// Output directory (overrides the environment and the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Validate the config and stop.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Args, Debug, Clone)]
pub struct CumulantArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Truncation orders to evaluate.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,6,8")]
    pub orders: Vec<usize>,
    /// Scale of Y; defaults to 1/sqrt(N).
    #[arg(long)]
    pub scale: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct NcArgs {
    #[arg(long)]
    pub k: usize,
    /// Spectral parameters `re:im`, one per point; the last one is repeated.
    #[arg(long, value_delimiter = ',')]
    pub z: Vec<String>,
}

pub const PRESETS: &[(&str, &str)] = &[
    ("goe-n300-edge", "[ensemble]\nn = 300\nbeta = 1\nlaw = \"gaussian\"\n[experiment]\ntrials = 4000\nseed = 7\nell = 1\nindex_set = 150\n"),
    ("rademacher-n300-edge", "[ensemble]\nn = 300\nbeta = 1\nlaw = \"rademacher\"\n[experiment]\ntrials = 4000\nseed = 7\nell = 1\nindex_set = 150\n"),
    ("goe-n300-top", "[ensemble]\nn = 300\nbeta = 1\nlaw = \"gaussian\"\n[experiment]\ntrials = 4000\nseed = 7\nell = \"top\"\nindex_set = 150\n"),
    ("goe-n300-large-set", "[ensemble]\nn = 300\nbeta = 1\nlaw = \"gaussian\"\n[experiment]\ntrials = 4000\nseed = 7\nell = 1\nindex_set = 270\n"),
    ("que-n500", "[ensemble]\nn = 500\n[experiment]\ntrials = 100\nseed = 7\nindex_set = 0.5\nn_sweep = [250, 1000]\n"),
    ("rigidity-n1000", "[ensemble]\nn = 1000\n[experiment]\ntrials = 50\nseed = 7\n"),
    ("locallaw-n1000", "[ensemble]\nn = 1000\n[experiment]\ntrials = 20\nseed = 7\nell = 1\nindex_set = 0.5\nn_sweep = [250]\n"),
    ("regcheck-n200", "[ensemble]\nn = 200\n[experiment]\ntrials = 200\nseed = 7\nell = 1\nindex_set = 0.5\n[regularization]\nprofile = \"practical\"\n"),
    ("cumulant-rademacher", "[ensemble]\nn = 100\nlaw = \"rademacher\"\n"),
];

pub fn preset(name: &str) -> Result<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        Error::Config(format!("unknown preset `{name}` (available: {})", names.join(", ")))
    })
}

fn table_mut<'a>(root: &'a mut toml::Table, key: &str) -> Result<&'a mut toml::Table> {
    root.entry(key.to_string())
        .or_insert_with(|| Value::Table(toml::Table::new()))
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("`{key}` must be a table")))
}

fn parse_scalar(s: &str) -> Value {
    if let Ok(i) = s.parse::<i64>() {
        Value::Integer(i)
    } else if let Ok(f) = s.parse::<f64>() {
        Value::Float(f)
    } else {
        Value::String(s.to_string())
    }
}

fn parse_grid(s: &str) -> Result<Vec<Value>> {
    if s == "default" {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| {
            let (e, eta) = p.split_once(':').ok_or_else(|| Error::Config(format!("--grid: `{p}` is not `E:eta`")))?;
            let e: f64 = e.trim().parse().map_err(|_| Error::Config(format!("--grid: bad energy `{e}`")))?;
            let eta: f64 = eta.trim().parse().map_err(|_| Error::Config(format!("--grid: bad eta `{eta}`")))?;
            Ok(Value::Array(vec![Value::Float(e), Value::Float(eta)]))
        })
        .collect()
}

/// Builds the effective config: preset or file, then flag overrides.
pub fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let text = match (&args.config, &args.preset) {
        (Some(_), Some(_)) => return Err(Error::Config("use either --config or --preset, not both".into())),
        (Some(path), None) => std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        (None, Some(name)) => preset(name)?.to_string(),
        (None, None) => String::new(),
    };
    let mut root: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    {
        let has_ensemble_flags = args.n.is_some() || args.beta.is_some() || args.law.is_some() || args.diag_variance_factor.is_some();
        if has_ensemble_flags {
            let ens = table_mut(&mut root, "ensemble")?;
            if let Some(n) = args.n {
                ens.insert("n".into(), Value::Integer(n as i64));
            }
            if let Some(b) = args.beta {
                ens.insert("beta".into(), Value::Integer(b as i64));
            }
            if let Some(l) = &args.law {
                ens.insert("law".into(), Value::String(l.clone()));
            }
            if let Some(d) = args.diag_variance_factor {
                ens.insert("diag_variance_factor".into(), Value::Float(d));
            }
        }
    }
    {
        let ex = table_mut(&mut root, "experiment")?;
        if let Some(t) = args.trials {
            ex.insert("trials".into(), Value::Integer(t as i64));
        }
        if let Some(s) = args.seed {
            ex.insert("seed".into(), Value::Integer(s as i64));
        }
        if let Some(l) = &args.ell {
            ex.insert("ell".into(), parse_scalar(l));
        }
        if let Some(i) = &args.index_set {
            ex.insert("index_set".into(), parse_scalar(i));
        }
        if let Some(b) = &args.basis {
            ex.insert("basis".into(), Value::String(b.clone()));
        }
        if let Some(w) = args.workers {
            ex.insert("workers".into(), Value::Integer(w as i64));
        }
        if let Some(ns) = &args.n_sweep {
            ex.insert("n_sweep".into(), Value::Array(ns.iter().map(|&n| Value::Integer(n as i64)).collect()));
        }
        if let Some(g) = &args.grid {
            ex.insert("z_grid".into(), Value::Array(parse_grid(g)?));
        }
        if let Some(k) = args.edge_points {
            ex.insert("edge_points".into(), Value::Integer(k as i64));
        }
    }
    {
        let reg = table_mut(&mut root, "regularization")?;
        if let Some(p) = &args.profile {
            reg.insert("profile".into(), Value::String(p.clone()));
        }
        if let Some(t) = args.tau {
            reg.insert("tau".into(), Value::Float(t));
        }
        if let Some(e) = args.eps0 {
            reg.insert("eps0".into(), Value::Float(e));
        }
        if let Some(c) = args.c0 {
            reg.insert("c0".into(), Value::Float(c));
        }
        if let Some(d) = &args.delta {
            if d.len() != 5 {
                return Err(Error::Config(format!("--delta needs 5 exponents, got {}", d.len())));
            }
            reg.insert("delta".into(), Value::Array(d.iter().map(|&x| Value::Float(x)).collect()));
        }
    }
    if let Some(out) = &args.out {
        table_mut(&mut root, "output")?.insert("dir".into(), Value::String(out.display().to_string()));
    }
    let cfg: ExperimentConfig = Value::Table(root).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// `--out` beats the environment, which beats `output.dir`.
pub fn output_dir(args: &RunArgs, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(o) = &args.out {
        return o.clone();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(&cfg.output.dir),
    }
}

/// SHA-256 of the canonical JSON form of the config.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let canonical = serde_json::to_string(cfg).map_err(|e| Error::Io(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<String>,
}

struct Outputs {
    results_csv: String,
    summary: String,
    passed: bool,
}

fn write_run(command: &str, cfg: &ExperimentConfig, dir: &Path, started: String, out: Outputs) -> Result<()> {
    artifacts::write_text(dir, "results.csv", &out.results_csv)?;
    artifacts::write_text(dir, "summary.json", &out.summary)?;
    artifacts::write_text(dir, "config.echo.json", &artifacts::config_echo_json(cfg)?)?;
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        command: command.to_string(),
        config_hash: config_hash(cfg)?,
        seed: cfg.experiment.seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started_at: started,
        finished_at: Utc::now().to_rfc3339(),
        outputs: vec!["results.csv".into(), "summary.json".into(), "config.echo.json".into(), "manifest.json".into()],
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    artifacts::write_text(dir, "manifest.json", &text)?;
    println!("{}: {} -> {}", command, if out.passed { "thresholds met" } else { "thresholds FAILED" }, dir.display());
    Ok(())
}

fn print_verdicts(v: &[Verdict]) {
    for x in v {
        println!("  [{}] {} = {:.6} (threshold {:.6})", if x.pass { "pass" } else { "FAIL" }, x.criterion, x.value, x.threshold);
    }
}

fn execute(command: &str, cfg: &ExperimentConfig, extra: Option<&CumulantArgs>) -> Result<Outputs> {
    match command {
        "clt" => {
            let r = runs::run_clt(cfg)?;
            print_verdicts(&r.verdicts);
            let passed = all_pass(&r.verdicts);
            Ok(Outputs { results_csv: artifacts::trial_csv(&r.records), summary: artifacts::summary_json(command, passed, &r)?, passed })
        }
        "que" => {
            let r = runs::run_que_check(cfg)?;
            print_verdicts(&r.verdicts);
            let passed = all_pass(&r.verdicts);
            Ok(Outputs { results_csv: artifacts::trial_csv(&r.records), summary: artifacts::summary_json(command, passed, &r)?, passed })
        }
        "rigidity" => {
            let r = runs::run_rigidity_and_repulsion(cfg)?;
            print_verdicts(&r.verdicts);
            let passed = all_pass(&r.verdicts);
            Ok(Outputs { results_csv: artifacts::trial_csv(&r.records), summary: artifacts::summary_json(command, passed, &r)?, passed })
        }
        "locallaw" => {
            let r = runs::run_local_law_sweep(cfg)?;
            print_verdicts(&r.verdicts);
            let passed = all_pass(&r.verdicts);
            Ok(Outputs { results_csv: artifacts::local_law_csv(&r.rows), summary: artifacts::summary_json(command, passed, &r)?, passed })
        }
        "regcheck" => {
            let r = runs::run_regularization_fidelity(cfg)?;
            print_verdicts(&r.verdicts);
            let passed = all_pass(&r.verdicts);
            Ok(Outputs { results_csv: artifacts::trial_csv(&r.records), summary: artifacts::summary_json(command, passed, &r)?, passed })
        }
        "cumulant" => {
            let args = extra.expect("cumulant arguments");
            let law = cfg.ensemble.law.resolve()?;
            let scale = args.scale.unwrap_or(1.0 / (cfg.ensemble.n as f64).sqrt());
            let mut rows = String::from("law,scale,truncation,lhs,expansion,residual,moment_t_plus_2\n");
            let mut results = Vec::new();
            for &t in &args.orders {
                let r = cumulant_expansion_validate(&law, scale, &sin_derivative, t)?;
                rows.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    law.name(),
                    artifacts::fmt_f64(scale),
                    t,
                    artifacts::fmt_f64(r.lhs),
                    artifacts::fmt_f64(r.expansion),
                    artifacts::fmt_f64(r.residual),
                    artifacts::fmt_f64(r.moment_t_plus_2)
                ));
                results.push((t, r));
            }
            let th = cfg.experiment.thresholds.stein_residual;
            let mut verdicts = Vec::new();
            if matches!(law, crate::ensembles::EntryLaw::Gaussian) {
                let worst = results.iter().map(|(_, r)| r.residual.abs()).fold(0.0, f64::max);
                verdicts.push(Verdict::at_most("Gaussian expansion residual", worst, th));
            } else {
                let mut tail: Vec<&(usize, _)> = results.iter().filter(|(t, _)| *t >= 2).collect();
                tail.sort_by_key(|(t, _)| *t);
                let ok = tail.windows(2).all(|w| w[1].1.residual.abs() <= w[0].1.residual.abs());
                verdicts.push(Verdict {
                    criterion: "residual non-increasing in the truncation order".into(),
                    value: tail.last().map_or(0.0, |x| x.1.residual.abs()),
                    threshold: tail.first().map_or(0.0, |x| x.1.residual.abs()),
                    pass: ok,
                });
            }
            print_verdicts(&verdicts);
            let passed = all_pass(&verdicts);
            let report = json!({
                "law": law.name(),
                "scale": scale,
                "results": results.iter().map(|(t, r)| json!({"truncation": t, "residual": r})).collect::<Vec<_>>(),
                "verdicts": verdicts,
            });
            Ok(Outputs { results_csv: rows, summary: artifacts::summary_json(command, passed, &report)?, passed })
        }
        other => Err(Error::InvalidArgument(format!("unknown command `{other}`"))),
    }
}

fn run_command(command: &str, args: &RunArgs, extra: Option<&CumulantArgs>) -> Result<i32> {
    let cfg = load_config(args)?;
    if args.dry_run {
        println!("{command}: config ok (hash {})", config_hash(&cfg)?);
        return Ok(EXIT_OK);
    }
    let dir = output_dir(args, &cfg);
    let started = Utc::now().to_rfc3339();
    let out = execute(command, &cfg, extra)?;
    let passed = out.passed;
    write_run(command, &cfg, &dir, started, out)?;
    Ok(if passed { EXIT_OK } else { EXIT_FAILED })
}

fn parse_z(s: &str) -> Result<C64> {
    let (re, im) = s.split_once(':').ok_or_else(|| Error::InvalidArgument(format!("--z: `{s}` is not `re:im`")))?;
    let re: f64 = re.trim().parse().map_err(|_| Error::InvalidArgument(format!("--z: bad real part `{re}`")))?;
    let im: f64 = im.trim().parse().map_err(|_| Error::InvalidArgument(format!("--z: bad imaginary part `{im}`")))?;
    Ok(C64::new(re, im))
}

fn cplx(z: C64) -> serde_json::Value {
    json!([z.re, z.im])
}

/// JSON dump of `NC[k]`, the Kreweras complements and the free cumulants.
pub fn nc_json(k: usize, zs: &[C64]) -> Result<String> {
    if k == 0 || k > MAX_K {
        return Err(Error::InvalidArgument(format!("k must lie in 1..={MAX_K}, got {k}")));
    }
    let mut points: Vec<C64> = zs.to_vec();
    if points.is_empty() {
        points.push(C64::new(0.5, 1.0));
    }
    while points.len() < k {
        points.push(*points.last().unwrap());
    }
    points.truncate(k);
    let parts = enumerate_nc(k)?;
    let mut list = Vec::new();
    for p in parts.iter() {
        let kp = kreweras(p)?;
        list.push(json!({ "blocks": p.blocks(), "kreweras": kp.blocks() }));
    }
    let table = free_cumulants(&points)?;
    let cumulants: Vec<_> = (1u32..(1 << k))
        .map(|mask| {
            let block: Vec<usize> = (0..k).filter(|j| mask & (1 << j) != 0).map(|j| j + 1).collect();
            json!({ "block": block, "moment": cplx(table.moment_mask(mask)), "cumulant": cplx(table.cumulant_mask(mask)) })
        })
        .collect();
    let v = json!({
        "schema_version": SCHEMA_VERSION,
        "k": k,
        "count": parts.len(),
        "z": points.iter().map(|&z| cplx(z)).collect::<Vec<_>>(),
        "partitions": list,
        "cumulants": cumulants,
    });
    serde_json::to_string_pretty(&v).map_err(|e| Error::Io(e.to_string()))
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Clt(a) => run_command("clt", &a, None),
        Command::Que(a) => run_command("que", &a, None),
        Command::Rigidity(a) => run_command("rigidity", &a, None),
        Command::Locallaw(a) => run_command("locallaw", &a, None),
        Command::Regcheck(a) => run_command("regcheck", &a, None),
        Command::Cumulant(a) => run_command("cumulant", &a.run, Some(&a)),
        Command::Nc(a) => {
            let zs = a.z.iter().map(|s| parse_z(s)).collect::<Result<Vec<_>>>()?;
            println!("{}", nc_json(a.k, &zs)?);
            Ok(EXIT_OK)
        }
    }
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
