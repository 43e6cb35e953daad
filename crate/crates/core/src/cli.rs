//! The `fixhead` command line.
//!
//! Every setting can come from a flag or from a `key=value` file given with
//! `--config`; flags win. Keys are the long flag names without dashes in
//! front (`batch-size=128`). The fully resolved settings are printed before
//! anything runs and saved as `config.txt` next to the outputs, so feeding
//! that file back through `--config` repeats the run.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fmt::{self, Display};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::bench::{baseline_speedup, bench_head};
use crate::data::write_idx;
use crate::error::Error;
use crate::experiment::{
    compare_fixed_vs_learned, format_sig9, metrics_csv_string, run, sweep_alpha, AlphaPolicy,
    BlobsConfig, DataSource, ExperimentConfig, RunOutcome,
};
use crate::gradcheck::run_suite;
use crate::head::{HeadMode, LossKind};
use crate::net::SgdConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Environment variable holding the number of gradient workers.
pub const THREADS_ENV: &str = "FIXHEAD_THREADS";

/// `gen-data` maps feature values in `[-GEN_DATA_RANGE, GEN_DATA_RANGE]`
/// onto the 0..=255 pixel range.
pub const GEN_DATA_RANGE: f64 = 2.5;

/// Largest relative gradient error `check-grad` accepts.
pub const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Parser, Debug)]
#[command(name = "fixhead", version, arg_required_else_help = true)]
#[command(about = "Train MLPs with fixed or learned classifier heads and compare them")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a blobs dataset and write it as IDX files
    GenData {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        blobs: BlobArgs,
    },
    /// Train one model; writes metrics.csv and model.fxhc
    Train(RunArgs),
    /// Train a learned and a fixed head on identical data and sample order
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Number of paired runs, at seeds seed, seed+1, ...
        #[arg(long, value_name = "N")]
        pairs: Option<String>,
    },
    /// Train with frozen scales and with a trainable scale
    SweepAlpha {
        #[command(flatten)]
        run: RunArgs,
        /// Frozen scale values, comma separated
        #[arg(long, value_name = "A,B,..")]
        values: Option<String>,
    },
    /// Compare analytic gradients with central finite differences
    CheckGrad {
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<String>,
        /// Random configurations per head/loss combination
        #[arg(long, value_name = "N")]
        cases: Option<String>,
    },
    /// Time the fast transform against the dense product
    Bench {
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: Option<String>,
        /// Representation width (power of two)
        #[arg(long)]
        n: Option<String>,
        /// Number of classes
        #[arg(long)]
        c: Option<String>,
        #[arg(long)]
        reps: Option<String>,
        /// File of `n,c,min_speedup` lines to compare against
        #[arg(long, value_name = "FILE")]
        baseline: Option<String>,
    },
}

#[derive(Args, Debug)]
pub struct CommonArgs {
    /// key=value settings file; flags take precedence
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<String>,
}

#[derive(Args, Debug)]
pub struct BlobArgs {
    #[arg(long)]
    pub classes: Option<String>,
    #[arg(long)]
    pub dim: Option<String>,
    #[arg(long)]
    pub per_class: Option<String>,
    /// Per-coordinate noise standard deviation
    #[arg(long)]
    pub sigma: Option<String>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// learned | orthonormal | hadamard
    #[arg(long)]
    pub head: Option<String>,
    /// `train` or a frozen value
    #[arg(long)]
    pub alpha: Option<String>,
    /// ce | cosine | cosine-mean
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long)]
    pub momentum: Option<String>,
    #[arg(long)]
    pub wd: Option<String>,
    /// Learning-rate multipliers, e.g. `20:0.1,25:0.01`
    #[arg(long, value_name = "EPOCH:MULT,..")]
    pub lr_schedule: Option<String>,
    /// Dense layer widths, e.g. `64,64`
    #[arg(long)]
    pub widths: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    /// blobs | idx
    #[arg(long)]
    pub data: Option<String>,
    #[command(flatten)]
    pub blobs: BlobArgs,
    #[arg(long, value_name = "FILE")]
    pub images: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub labels: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub val_images: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub val_labels: Option<String>,
    /// Read at most this many training samples
    #[arg(long)]
    pub limit: Option<String>,
}

type Flags = Vec<(&'static str, Option<String>)>;

impl CommonArgs {
    fn flags(&self) -> Flags {
        vec![("seed", self.seed.clone()), ("out", self.out.clone())]
    }
}

impl BlobArgs {
    fn flags(&self) -> Flags {
        vec![
            ("classes", self.classes.clone()),
            ("dim", self.dim.clone()),
            ("per-class", self.per_class.clone()),
            ("sigma", self.sigma.clone()),
        ]
    }
}

impl RunArgs {
    fn flags(&self) -> Flags {
        let mut f = self.common.flags();
        f.extend([
            ("head", self.head.clone()),
            ("alpha", self.alpha.clone()),
            ("loss", self.loss.clone()),
            ("epochs", self.epochs.clone()),
            ("lr", self.lr.clone()),
            ("momentum", self.momentum.clone()),
            ("wd", self.wd.clone()),
            ("lr-schedule", self.lr_schedule.clone()),
            ("widths", self.widths.clone()),
            ("batch-size", self.batch_size.clone()),
            ("data", self.data.clone()),
        ]);
        f.extend(self.blobs.flags());
        f.extend([
            ("images", self.images.clone()),
            ("labels", self.labels.clone()),
            ("val-images", self.val_images.clone()),
            ("val-labels", self.val_labels.clone()),
            ("limit", self.limit.clone()),
        ]);
        f
    }
}

/// Fully resolved `key=value` settings of one invocation, in flag order.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    entries: Vec<(&'static str, String)>,
}

impl Settings {
    /// Starts from `defaults`, applies `file` (if any) and then every flag
    /// that was given. Keys in the file must be known.
    pub fn resolve(
        defaults: Vec<(&'static str, String)>,
        file: Option<&Path>,
        flags: Flags,
    ) -> CliResult<Self> {
        let mut s = Settings { entries: defaults };
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    usage(format!(
                        "{}:{}: expected key=value",
                        path.display(),
                        lineno + 1
                    ))
                })?;
                s.set(k.trim(), v.trim()).map_err(|_| {
                    usage(format!(
                        "{}:{}: unknown key `{}`",
                        path.display(),
                        lineno + 1,
                        k.trim()
                    ))
                })?;
            }
        }
        for (k, v) in flags {
            if let Some(v) = v {
                s.set(k, v.trim())
                    .expect("flag keys are part of the defaults");
            }
        }
        Ok(s)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), ()> {
        let slot = self.entries.iter_mut().find(|(k, _)| *k == key).ok_or(())?;
        slot.1 = value.to_string();
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.entries
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v.as_str())
            .unwrap_or_else(|| panic!("no setting `{key}`"))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> CliResult<T>
    where
        T::Err: Display,
    {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|e| usage(format!("invalid value `{raw}` for {key}: {e}")))
    }

    /// Like [`Settings::parse`], with an empty value meaning "not set".
    pub fn optional<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        if self.raw(key).is_empty() {
            Ok(None)
        } else {
            self.parse(key).map(Some)
        }
    }

    pub fn render(&self) -> String {
        self.entries.iter().fold(String::new(), |mut out, (k, v)| {
            let _ = writeln!(out, "{k}={v}");
            out
        })
    }
}

fn common_defaults() -> Vec<(&'static str, String)> {
    vec![("seed", "0".into()), ("out", "fixhead-out".into())]
}

fn blob_defaults() -> Vec<(&'static str, String)> {
    let b = BlobsConfig::default();
    vec![
        ("classes", b.n_classes.to_string()),
        ("dim", b.dim.to_string()),
        ("per-class", b.per_class.to_string()),
        ("sigma", b.noise_sigma.to_string()),
    ]
}

fn run_defaults() -> Vec<(&'static str, String)> {
    let c = ExperimentConfig::default();
    let mut d = common_defaults();
    d.extend([
        ("head", c.head_mode.to_string()),
        ("alpha", "train".into()),
        ("loss", c.loss.to_string()),
        ("epochs", c.epochs.to_string()),
        ("lr", c.sgd.learning_rate.to_string()),
        ("momentum", c.sgd.momentum.to_string()),
        ("wd", c.sgd.weight_decay.to_string()),
        ("lr-schedule", format_schedule(&c.sgd.lr_schedule)),
        ("widths", join(&c.widths)),
        ("batch-size", c.batch_size.to_string()),
        ("data", "blobs".into()),
    ]);
    d.extend(blob_defaults());
    d.extend(["images", "labels", "val-images", "val-labels", "limit"].map(|k| (k, String::new())));
    d
}

fn join<T: Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn format_schedule(schedule: &[(usize, f64)]) -> String {
    schedule
        .iter()
        .map(|(e, m)| format!("{e}:{m}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> CliResult<Vec<T>>
where
    T::Err: Display,
{
    raw.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|e| usage(format!("invalid entry `{p}` in {key}: {e}")))
        })
        .collect()
}

fn parse_schedule(raw: &str) -> CliResult<Vec<(usize, f64)>> {
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',')
        .map(|p| {
            let bad = || {
                usage(format!(
                    "invalid lr-schedule entry `{p}`, expected EPOCH:MULT"
                ))
            };
            let (e, m) = p.trim().split_once(':').ok_or_else(bad)?;
            Ok((
                e.trim().parse().map_err(|_| bad())?,
                m.trim().parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

/// Worker count from [`THREADS_ENV`], 1 when unset.
pub fn threads_from_env() -> CliResult<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(usage(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))),
        },
    }
}

fn blobs_config(s: &Settings) -> CliResult<BlobsConfig> {
    Ok(BlobsConfig {
        n_classes: s.parse("classes")?,
        dim: s.parse("dim")?,
        per_class: s.parse("per-class")?,
        noise_sigma: s.parse("sigma")?,
    })
}

/// Builds and validates the experiment described by `s`.
pub fn experiment_config(s: &Settings, threads: usize) -> CliResult<ExperimentConfig> {
    let alpha_policy = match s.raw("alpha") {
        "train" => AlphaPolicy::Trainable,
        _ => AlphaPolicy::Frozen(s.parse("alpha")?),
    };
    let data = match s.raw("data") {
        "blobs" => DataSource::Blobs(blobs_config(s)?),
        "idx" => DataSource::Idx {
            images: s
                .optional::<PathBuf>("images")?
                .ok_or_else(|| usage("--data idx needs --images"))?,
            labels: s
                .optional::<PathBuf>("labels")?
                .ok_or_else(|| usage("--data idx needs --labels"))?,
            val_images: s.optional("val-images")?,
            val_labels: s.optional("val-labels")?,
            limit: s.optional("limit")?,
        },
        other => {
            return Err(usage(format!(
                "unknown data source `{other}` (blobs | idx)"
            )))
        }
    };
    let config = ExperimentConfig {
        head_mode: s.parse::<HeadMode>("head")?,
        alpha_policy,
        loss: s.parse::<LossKind>("loss")?,
        widths: parse_list("widths", s.raw("widths"))?,
        sgd: SgdConfig {
            learning_rate: s.parse("lr")?,
            momentum: s.parse("momentum")?,
            weight_decay: s.parse("wd")?,
            lr_schedule: parse_schedule(s.raw("lr-schedule"))?,
        },
        epochs: s.parse("epochs")?,
        batch_size: s.parse("batch-size")?,
        data,
        seed: s.parse("seed")?,
        threads,
        checkpoint: None,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

/// Prints the settings and saves them as `config.txt` in `out` (if given).
fn announce(command: &str, s: &Settings, out: Option<&Path>, threads: usize) -> CliResult<()> {
    let text = format!(
        "# fixhead {command}\n# {THREADS_ENV}={threads}\n{}",
        s.render()
    );
    print!("{text}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join("config.txt"), &text)?;
    }
    Ok(())
}

fn write_file(path: &Path, body: &str) -> CliResult<()> {
    std::fs::write(path, body).map_err(|e| CliError::Runtime(Error::io(path, e)))
}

fn out_dir(s: &Settings) -> PathBuf {
    PathBuf::from(s.raw("out"))
}

fn summarize(label: &str, r: &RunOutcome) -> String {
    let f = r.final_row();
    let alpha = f
        .alpha
        .map(|a| format!(" alpha={}", format_sig9(a)))
        .unwrap_or_default();
    format!(
        "{label}: epochs={} train_error={} val_error={}{alpha}",
        r.metrics.len(),
        format_sig9(f.train_error),
        format_sig9(f.val_error)
    )
}

fn cmd_gen_data(common: &CommonArgs, blobs: &BlobArgs, threads: usize) -> CliResult<()> {
    let mut defaults = common_defaults();
    defaults.extend(blob_defaults());
    let mut flags = common.flags();
    flags.extend(blobs.flags());
    let s = Settings::resolve(defaults, common.config.as_deref(), flags)?;
    let config = ExperimentConfig {
        data: DataSource::Blobs(blobs_config(&s)?),
        seed: s.parse("seed")?,
        ..ExperimentConfig::default()
    };
    let out = out_dir(&s);
    announce("gen-data", &s, Some(&out), threads)?;
    let (train, val) = config.load_data()?;
    for (name, ds) in [("train", &train), ("val", &val)] {
        let ds = ds.to_unit_range(-GEN_DATA_RANGE, GEN_DATA_RANGE);
        write_idx(
            &ds,
            out.join(format!("{name}-images.idx")),
            out.join(format!("{name}-labels.idx")),
        )?;
    }
    println!(
        "wrote {} train and {} val samples to {}",
        train.len(),
        val.len(),
        out.display()
    );
    Ok(())
}

fn cmd_train(args: &RunArgs, threads: usize) -> CliResult<()> {
    let s = Settings::resolve(run_defaults(), args.common.config.as_deref(), args.flags())?;
    let out = out_dir(&s);
    let mut config = experiment_config(&s, threads)?;
    config.checkpoint = Some(out.join("model.fxhc"));
    announce("train", &s, Some(&out), threads)?;
    let outcome = run(&config)?;
    write_file(
        &out.join("metrics.csv"),
        &metrics_csv_string(&outcome.metrics),
    )?;
    println!("{}", summarize(config.head_mode.as_str(), &outcome));
    Ok(())
}

fn cmd_compare(args: &RunArgs, pairs: Option<&String>, threads: usize) -> CliResult<()> {
    let mut defaults = run_defaults();
    defaults.push(("pairs", "1".into()));
    let mut flags = args.flags();
    flags.push(("pairs", pairs.cloned()));
    let s = Settings::resolve(defaults, args.common.config.as_deref(), flags)?;
    let base = experiment_config(&s, threads)?;
    let pairs: u64 = s.parse("pairs")?;
    if pairs == 0 {
        return Err(usage("pairs must be at least 1"));
    }
    let out = out_dir(&s);
    announce("compare", &s, Some(&out), threads)?;

    let mut summary = String::from(
        "seed,learned_train_error,fixed_train_error,learned_val_error,fixed_val_error,same_order\n",
    );
    let (mut sum_learned, mut sum_fixed) = (0.0, 0.0);
    for k in 0..pairs {
        let seed = base.seed.wrapping_add(k);
        let c = compare_fixed_vs_learned(&base.with_seed(seed))?;
        write_file(
            &out.join(format!("learned-seed{seed}.csv")),
            &metrics_csv_string(&c.learned.metrics),
        )?;
        write_file(
            &out.join(format!("fixed-seed{seed}.csv")),
            &metrics_csv_string(&c.fixed.metrics),
        )?;
        let mut deltas = String::from("epoch,train_error_delta,val_error_delta\n");
        for d in &c.deltas {
            let _ = writeln!(
                deltas,
                "{},{},{}",
                d.epoch,
                format_sig9(d.train_error),
                format_sig9(d.val_error)
            );
        }
        write_file(&out.join(format!("deltas-seed{seed}.csv")), &deltas)?;

        let (l, f) = (c.learned.final_row(), c.fixed.final_row());
        let same = c.learned.shuffle_checksum == c.fixed.shuffle_checksum;
        let _ = writeln!(
            summary,
            "{seed},{},{},{},{},{same}",
            format_sig9(l.train_error),
            format_sig9(f.train_error),
            format_sig9(l.val_error),
            format_sig9(f.val_error)
        );
        sum_learned += l.val_error;
        sum_fixed += f.val_error;
        println!("seed {seed}");
        println!("  {}", summarize("learned", &c.learned));
        println!(
            "  {}",
            summarize(c.fixed.model.head().mode().as_str(), &c.fixed)
        );
    }
    write_file(&out.join("summary.csv"), &summary)?;
    let n = pairs as f64;
    println!(
        "mean val_error: learned={} fixed={} difference={}",
        format_sig9(sum_learned / n),
        format_sig9(sum_fixed / n),
        format_sig9((sum_fixed - sum_learned) / n)
    );
    Ok(())
}

fn cmd_sweep(args: &RunArgs, values: Option<&String>, threads: usize) -> CliResult<()> {
    let mut defaults = run_defaults();
    defaults.push(("values", "0.1,1,10".into()));
    let mut flags = args.flags();
    flags.push(("values", values.cloned()));
    let s = Settings::resolve(defaults, args.common.config.as_deref(), flags)?;
    let base = experiment_config(&s, threads)?;
    if !base.head_mode.is_fixed() {
        return Err(usage("sweep-alpha needs --head orthonormal or hadamard"));
    }
    let values: Vec<f64> = parse_list("values", s.raw("values"))?;
    if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(usage("alpha values must be positive"));
    }
    let out = out_dir(&s);
    announce("sweep-alpha", &s, Some(&out), threads)?;
    let sweep = sweep_alpha(&base, &values)?;
    for (a, r) in &sweep.frozen {
        write_file(
            &out.join(format!("alpha-{a}.csv")),
            &metrics_csv_string(&r.metrics),
        )?;
    }
    write_file(
        &out.join("alpha-train.csv"),
        &metrics_csv_string(&sweep.trainable.metrics),
    )?;
    let mut table = String::from("alpha,train_error,val_error,final_alpha\n");
    for (label, tr, va, a) in sweep.table() {
        let _ = writeln!(
            table,
            "{label},{},{},{}",
            format_sig9(tr),
            format_sig9(va),
            format_sig9(a)
        );
    }
    write_file(&out.join("sweep.csv"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_check_grad(
    config: Option<&Path>,
    seed: Option<&String>,
    cases: Option<&String>,
) -> CliResult<bool> {
    let s = Settings::resolve(
        vec![("seed", "0".into()), ("cases", "20".into())],
        config,
        vec![("seed", seed.cloned()), ("cases", cases.cloned())],
    )?;
    let cases: usize = s.parse("cases")?;
    if cases == 0 {
        return Err(usage("cases must be at least 1"));
    }
    announce("check-grad", &s, None, 1)?;
    let suite = run_suite(s.parse("seed")?, cases)?;
    println!(
        "cases={} compared={}",
        suite.cases.len(),
        suite.overall.compared
    );
    println!("max_rel_error={:e}", suite.overall.max_rel_error);
    println!("worst={}", suite.overall.worst);
    let ok = suite.overall.max_rel_error < GRAD_TOLERANCE;
    if !ok {
        eprintln!("gradient check failed: tolerance is {GRAD_TOLERANCE:e}");
    }
    Ok(ok)
}

fn cmd_bench(config: Option<&Path>, flags: Flags) -> CliResult<()> {
    let s = Settings::resolve(
        vec![
            ("out", "fixhead-out".into()),
            ("n", "1024".into()),
            ("c", "1024".into()),
            ("reps", "30".into()),
            ("baseline", String::new()),
        ],
        config,
        flags,
    )?;
    let (n, c, reps): (usize, usize, usize) = (s.parse("n")?, s.parse("c")?, s.parse("reps")?);
    let out = out_dir(&s);
    announce("bench", &s, Some(&out), 1)?;
    let report = bench_head(n, c, reps)?;
    report.write(out.join("bench.csv"), out.join("bench-samples.csv"))?;
    print!("{}", report.csv());
    println!("max_abs_diff={:e}", report.max_abs_diff);
    if let Some(path) = s.optional::<PathBuf>("baseline")? {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        match baseline_speedup(&text, n, c) {
            Some(min) if report.speedup < min => {
                eprintln!(
                    "warning: speedup {:.3} is below the baseline {min}",
                    report.speedup
                )
            }
            Some(min) => println!("speedup {:.3} meets the baseline {min}", report.speedup),
            None => eprintln!("warning: no baseline entry for n={n} c={c}"),
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<bool> {
    let threads = threads_from_env()?;
    match &cli.command {
        Command::GenData { common, blobs } => cmd_gen_data(common, blobs, threads)?,
        Command::Train(args) => cmd_train(args, threads)?,
        Command::Compare { run, pairs } => cmd_compare(run, pairs.as_ref(), threads)?,
        Command::SweepAlpha { run, values } => cmd_sweep(run, values.as_ref(), threads)?,
        Command::CheckGrad {
            config,
            seed,
            cases,
        } => return cmd_check_grad(config.as_deref(), seed.as_ref(), cases.as_ref()),
        Command::Bench {
            config,
            out,
            n,
            c,
            reps,
            baseline,
        } => cmd_bench(
            config.as_deref(),
            vec![
                ("out", out.clone()),
                ("n", n.clone()),
                ("c", c.clone()),
                ("reps", reps.clone()),
                ("baseline", baseline.clone()),
            ],
        )?,
    }
    Ok(true)
}

/// Runs the command line and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    EXIT_OK
                }
                _ => {
                    let _ = e.print();
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_RUNTIME,
        Err(e @ CliError::Usage(_)) => {
            eprintln!("{e}");
            eprintln!("run `fixhead --help` for the synopsis");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("{e}");
            EXIT_RUNTIME
        }
    }
}

struct StderrLogger;

impl log::Log for StderrLogger {
    fn enabled(&self, metadata: &log::Metadata<'_>) -> bool {
        metadata.level() <= log::Level::Warn
    }

    fn log(&self, record: &log::Record<'_>) {
        if self.enabled(record.metadata()) {
            eprintln!(
                "{}: {}",
                record.level().as_str().to_lowercase(),
                record.args()
            );
        }
    }

    fn flush(&self) {}
}

/// Sends warnings from the library to stderr.
pub fn init_logging() {
    static LOGGER: StderrLogger = StderrLogger;
    if log::set_logger(&LOGGER).is_ok() {
        log::set_max_level(log::LevelFilter::Warn);
    }
}
