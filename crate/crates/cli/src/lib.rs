//! `qcount` command line: argument handling, config files, report output.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use num_traits::ToPrimitive;
use serde::Serialize;
use thiserror::Error;

use qcount::archimedean::{closed_form_family, leray_quadrature, ArchIntegral};
use qcount::asymptotics::{verify, VerifyReport};
use qcount::enumeration::{count_family_fast_with_budget, count_generic_with_guard, CountResult, GENERIC_T_GUARD};
use qcount::euler_product::{
    finite_constant_square_case, nonsquare_constant_assembled, nonsquare_constant_family, prefactor_numberfield,
    DensitySource,
};
use qcount::local_density::{alpha_p_brute_with, alpha_p_closed_family, DensityConfig, DensityMethod, LocalDensity};
use qcount::{Classify, ErrorClass, NormKind, NormSpec, RegimeClass, Target, TernaryForm};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DOMAIN: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "QCOUNT_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{message}")]
    Core { message: String, class: ErrorClass },
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("json output failed: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core { class: ErrorClass::Domain, .. } => EXIT_DOMAIN,
            CliError::Core { class: ErrorClass::Resource, .. } => EXIT_RESOURCE,
            CliError::Io { .. } | CliError::Csv(_) | CliError::Json(_) => EXIT_RESOURCE,
        }
    }
}

fn core<E: Classify + std::fmt::Display>(e: E) -> CliError {
    CliError::Core { message: e.to_string(), class: e.class() }
}

#[derive(Debug, Parser)]
#[command(
    name = "qcount",
    version,
    about = "Local densities, singular integrals and integral-point counts for f(x,y,z) = a"
)]
pub struct Cli {
    /// key = value file mirroring the flags; explicit flags win
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// worker threads (default: $QCOUNT_THREADS, else all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct FormArgs {
    /// six comma-separated integers a11,a22,a33,a12,a13,a23
    #[arg(long, allow_hyphen_values = true)]
    pub form: String,
    /// nonzero integer right-hand side
    #[arg(long, allow_hyphen_values = true)]
    pub a: i64,
}

impl FormArgs {
    /// Syntax errors are usage errors; a well-formed but degenerate form is a domain error.
    fn parse(&self) -> Result<(TernaryForm, Target), CliError> {
        let coeffs: Vec<i64> = self
            .form
            .split(',')
            .map(|c| c.trim().parse::<i64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Usage(format!("--form {:?}: {e}", self.form)))?;
        let coeffs: [i64; 6] = coeffs
            .try_into()
            .map_err(|_| CliError::Usage(format!("--form {:?}: expected six comma-separated integers", self.form)))?;
        Ok((TernaryForm::new(coeffs).map_err(core)?, self.target()?))
    }

    fn target(&self) -> Result<Target, CliError> {
        Target::new(self.a).map_err(core)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DensityMethodArg {
    Brute,
    Closed,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum IntegralMethodArg {
    Closed,
    Quad,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CountMethodArg {
    Generic,
    Fast,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormArg {
    Euclidean,
    Sup,
}

impl From<NormArg> for NormSpec {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Euclidean => NormSpec::EUCLIDEAN,
            NormArg::Sup => NormSpec::SUP,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DensitySourceArg {
    Brute,
    Closed,
}

impl From<DensitySourceArg> for DensitySource {
    fn from(d: DensitySourceArg) -> Self {
        match d {
            DensitySourceArg::Brute => DensitySource::Brute,
            DensitySourceArg::Closed => DensitySource::Closed,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Local density alpha_p(f, a)
    Density {
        #[command(flatten)]
        form: FormArgs,
        #[arg(long)]
        p: u64,
        #[arg(long, value_enum, default_value = "brute")]
        method: DensityMethodArg,
        /// largest modulus p^k a count may use
        #[arg(long, default_value_t = qcount::local_density::DEFAULT_CAP)]
        cap: u64,
        #[arg(long)]
        json: bool,
    },
    /// Finite Euler constant (square case) or the linear-growth constant (family)
    Constant {
        #[command(flatten)]
        form: FormArgs,
        #[arg(long, value_enum, default_value = "brute")]
        densities: DensitySourceArg,
        #[arg(long)]
        json: bool,
    },
    /// Archimedean volume of the norm ball on f = a
    Integral {
        #[command(flatten)]
        form: FormArgs,
        #[arg(long = "T")]
        t: f64,
        #[arg(long, value_enum, default_value = "euclidean")]
        norm: NormArg,
        #[arg(long, value_enum, default_value = "quad")]
        method: IntegralMethodArg,
        #[arg(long)]
        json: bool,
    },
    /// Exact number of integral points with norm at most T
    Count {
        #[command(flatten)]
        form: FormArgs,
        #[arg(long = "T")]
        t: f64,
        #[arg(long, value_enum, default_value = "euclidean")]
        norm: NormArg,
        #[arg(long, value_enum, default_value = "generic")]
        method: CountMethodArg,
        /// Pollard rho restarts per factorization
        #[arg(long, default_value_t = qcount::arith::DEFAULT_RETRY_BUDGET)]
        retry_budget: u32,
        /// largest T the generic scan accepts (at most the built-in 1e6)
        #[arg(long, default_value_t = GENERIC_T_GUARD)]
        t_guard: f64,
        #[arg(long)]
        json: bool,
    },
    /// Counts against the predicted main term along a geometric ladder
    Verify {
        #[command(flatten)]
        form: FormArgs,
        #[arg(long)]
        t_min: f64,
        #[arg(long)]
        t_max: f64,
        #[arg(long)]
        rungs: usize,
        #[arg(long, value_enum, default_value = "euclidean")]
        norm: NormArg,
        #[arg(long, value_enum, default_value = "brute")]
        densities: DensitySourceArg,
        /// write the JSON report here
        #[arg(long)]
        out: Option<PathBuf>,
        /// write the ladder as CSV here
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// 2^r (2 pi)^s / (w sqrt|d|) * R * h
    Prefactor {
        #[arg(long)]
        r: u32,
        #[arg(long)]
        s: u32,
        #[arg(long)]
        w: u32,
        #[arg(long, allow_hyphen_values = true)]
        d: i64,
        #[arg(long = "R")]
        regulator: f64,
        #[arg(long)]
        h: u64,
        #[arg(long)]
        json: bool,
    },
}

/// Parses a `key = value` config file. Blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", i + 1)))?;
        let key = k.trim().trim_start_matches("--").to_string();
        if key.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key", i + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Splices config entries into `argv` after the subcommand name, skipping any
/// key already given on the command line and any key the subcommand lacks.
fn merge_config(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let strings: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let config_path = strings.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            strings.get(i + 1).cloned()
        } else {
            a.strip_prefix("--config=").map(str::to_string)
        }
    });
    let Some(path) = config_path else {
        return Ok(argv);
    };
    let text =
        std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("cannot read config {path}: {e}")))?;
    let entries = parse_config(&text)?;

    let root = Cli::command();
    let sub_names: Vec<String> = root.get_subcommands().map(|c| c.get_name().to_string()).collect();
    let Some(sub_pos) = strings.iter().position(|a| sub_names.contains(a)) else {
        return Ok(argv);
    };
    let sub = root.find_subcommand(&strings[sub_pos]).expect("listed above");
    let given = |key: &str| {
        let flag = format!("--{key}");
        let prefix = format!("--{key}=");
        strings.iter().any(|a| *a == flag || a.starts_with(&prefix))
    };
    let mut extra: Vec<OsString> = Vec::new();
    for (key, value) in entries {
        if key == "config" || given(&key) {
            continue;
        }
        let arg = sub.get_arguments().chain(root.get_arguments()).find(|a| a.get_long() == Some(key.as_str()));
        let Some(arg) = arg else { continue };
        let is_flag = matches!(arg.get_action(), clap::ArgAction::SetTrue);
        if is_flag {
            match value.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" | "on" => extra.push(format!("--{key}").into()),
                "false" | "no" | "0" | "off" => {}
                other => return Err(CliError::Usage(format!("config key {key}: expected a boolean, got {other:?}"))),
            }
        } else {
            extra.push(format!("--{key}={value}").into());
        }
    }
    let mut merged = argv;
    let tail = merged.split_off(sub_pos + 1);
    merged.extend(extra);
    merged.extend(tail);
    Ok(merged)
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Some(n) = flag {
        return if n == 0 { Err(CliError::Usage("--threads must be positive".into())) } else { Ok(Some(n)) };
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("{THREADS_ENV} must be a positive integer (got {v:?})"))),
        },
        Err(_) => Ok(None),
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let mut stdout = std::io::stdout();
    match run_to(argv, &mut stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// As [`run`], writing the report text to `out`.
pub fn run_to<W: std::io::Write>(argv: Vec<OsString>, out: &mut W) -> Result<(), CliError> {
    let argv = merge_config(argv)?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                write!(out, "{e}").map_err(|source| CliError::Io { path: "<stdout>".into(), source })?;
                return Ok(());
            }
            let message = e.to_string();
            let message = message.trim_start_matches("error: ").trim_end().to_string();
            return Err(CliError::Usage(format!("{message}\n\n{}", Cli::command().render_help())));
        }
    };
    let text = match thread_count(cli.threads)? {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?;
            pool.install(|| dispatch(&cli.command))?
        }
        None => dispatch(&cli.command)?,
    };
    out.write_all(text.as_bytes()).map_err(|source| CliError::Io { path: "<stdout>".into(), source })
}

fn to_json<S: Serialize>(v: &S) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn dispatch(cmd: &Command) -> Result<String, CliError> {
    match cmd {
        Command::Density { form, p, method, cap, json } => density(form, *p, *method, *cap, *json),
        Command::Constant { form, densities, json } => constant(form, (*densities).into(), *json),
        Command::Integral { form, t, norm, method, json } => integral(form, *t, (*norm).into(), *method, *json),
        Command::Count { form, t, norm, method, retry_budget, t_guard, json } => {
            if !(*t_guard > 0.0 && *t_guard <= GENERIC_T_GUARD) {
                return Err(CliError::Usage(format!("--t-guard must lie in (0, {GENERIC_T_GUARD:e}]")));
            }
            count(form, *t, (*norm).into(), *method, (*retry_budget, *t_guard), *json)
        }
        Command::Verify { form, t_min, t_max, rungs, norm, densities, out, csv, json } => verify_cmd(
            form,
            (*t_min, *t_max, *rungs),
            (*norm).into(),
            (*densities).into(),
            out.as_deref(),
            csv.as_deref(),
            *json,
        ),
        Command::Prefactor { r, s, w, d, regulator, h, json } => {
            let value = prefactor_numberfield(*r, *s, *w, *d, *regulator, *h).map_err(core)?;
            if *json {
                to_json(&serde_json::json!({ "r": r, "s": s, "w": w, "d": d, "R": regulator, "h": h, "value": value }))
            } else {
                Ok(format!("prefactor = {value}\n"))
            }
        }
    }
}

#[derive(Debug, Serialize)]
struct DensityRow {
    method: &'static str,
    p: u64,
    alpha: String,
    alpha_num: String,
    alpha_den: String,
    alpha_float: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    k_used: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    case: Option<String>,
    stabilized: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    counts: Vec<String>,
}

impl From<&LocalDensity> for DensityRow {
    fn from(d: &LocalDensity) -> Self {
        let (method, k_used, case) = match &d.method {
            DensityMethod::BruteForce { k_used } => ("brute", Some(*k_used), None),
            DensityMethod::ClosedForm(c) => ("closed", None, Some(format!("{c:?}"))),
        };
        DensityRow {
            method,
            p: d.p,
            alpha: d.value.to_string(),
            alpha_num: d.value.numer().to_string(),
            alpha_den: d.value.denom().to_string(),
            alpha_float: d.value.to_f64().unwrap_or(f64::NAN),
            k_used,
            case,
            stabilized: d.stabilized,
            counts: d.counts.iter().map(|c| c.to_string()).collect(),
        }
    }
}

fn density(form: &FormArgs, p: u64, method: DensityMethodArg, cap: u64, json: bool) -> Result<String, CliError> {
    let (form, a) = form.parse()?;
    let mut rows: Vec<DensityRow> = Vec::new();
    if matches!(method, DensityMethodArg::Brute | DensityMethodArg::Both) {
        let d = alpha_p_brute_with(&form, a, p, &DensityConfig { cap }).map_err(core)?;
        rows.push((&d).into());
    }
    if matches!(method, DensityMethodArg::Closed | DensityMethodArg::Both) {
        let delta = form.family_delta().filter(|_| a.get() == 1).ok_or_else(|| CliError::Core {
            message: "the closed-form table covers x^2 + y^2 - delta z^2 = 1 only".into(),
            class: ErrorClass::Domain,
        })?;
        let d = alpha_p_closed_family(delta, p).map_err(core)?;
        rows.push((&d).into());
    }
    let agree = rows.windows(2).all(|w| w[0].alpha == w[1].alpha);
    if json {
        return to_json(&serde_json::json!({
            "form": form.to_string(), "a": a.get(), "p": p, "results": rows, "agree": agree,
        }));
    }
    let mut s = String::new();
    for r in rows.iter() {
        let how = match (&r.k_used, &r.case) {
            (Some(k), _) => format!("stabilized counts, k = {k}"),
            (_, Some(c)) => format!("closed form, {c}"),
            _ => String::new(),
        };
        let _ = writeln!(s, "alpha_{p} = {} ({how})", r.alpha);
    }
    if rows.len() == 2 && !agree {
        let _ = writeln!(s, "note: the two methods disagree");
    }
    Ok(s)
}

fn constant(form: &FormArgs, source: DensitySource, json: bool) -> Result<String, CliError> {
    let (form, a) = form.parse()?;
    let regime = form.classify(a).map_err(core)?;
    match regime {
        RegimeClass::SquareCase { root } => {
            let c = finite_constant_square_case(&form, a, source).map_err(core)?;
            let ramified: Vec<DensityRow> = c.ramified.iter().map(Into::into).collect();
            if json {
                return to_json(&serde_json::json!({
                    "form": form.to_string(), "a": a.get(), "regime": "SquareCase",
                    "square_root": root.to_string(), "density_source": source,
                    "ramified": ramified, "ramified_factor": c.ramified_factor.to_string(),
                    "value": c.value, "interval": [c.interval.0, c.interval.1],
                }));
            }
            let mut s = format!("regime: SquareCase (-a det f = ({root})^2)\n");
            for r in ramified.iter() {
                let _ = writeln!(s, "  alpha_{} = {} ({})", r.p, r.alpha, r.method);
            }
            let _ = writeln!(s, "ramified factor = {}", c.ramified_factor);
            let _ = writeln!(s, "constant = {:.15} in [{:.15}, {:.15}]", c.value, c.interval.0, c.interval.1);
            Ok(s)
        }
        RegimeClass::NonSquareCase => {
            let delta = form.family_delta().filter(|_| a.get() == 1).ok_or_else(|| CliError::Core {
                message: "non-square constants are available for x^2 + y^2 - delta z^2 = 1 only".into(),
                class: ErrorClass::Domain,
            })?;
            let c = nonsquare_constant_assembled(delta, source).map_err(core)?;
            let table = nonsquare_constant_family(delta).map_err(core)?;
            let ramified: Vec<DensityRow> = c.ramified.iter().map(Into::into).collect();
            if json {
                return to_json(&serde_json::json!({
                    "form": form.to_string(), "a": a.get(), "regime": "NonSquareCase",
                    "density_source": source, "ramified": ramified,
                    "density_product": c.density_product, "coefficient": c.coefficient,
                    "table_coefficient": table, "l_value": c.l_value,
                }));
            }
            let mut s = String::from("regime: NonSquareCase (N ~ c T)\n");
            for r in ramified.iter() {
                let _ = writeln!(s, "  alpha_{} = {} ({})", r.p, r.alpha, r.method);
            }
            let _ = writeln!(s, "L(1, chi) = {:.12} (delta0 = {})", c.l_value.value, c.l_value.delta0);
            let _ = writeln!(s, "prod alpha_p = {:.12}", c.density_product);
            let _ = writeln!(s, "c = {:.12} (from these densities)", c.coefficient);
            let _ = writeln!(s, "c = {table:.12} (case table)");
            Ok(s)
        }
    }
}

fn integral(
    form: &FormArgs,
    t: f64,
    norm: NormSpec,
    method: IntegralMethodArg,
    json: bool,
) -> Result<String, CliError> {
    let (form, a) = form.parse()?;
    let mut results: Vec<ArchIntegral> = Vec::new();
    if matches!(method, IntegralMethodArg::Closed | IntegralMethodArg::Both) {
        let delta =
            form.family_delta().filter(|_| a.get() == 1 && norm.kind == NormKind::Euclidean).ok_or_else(|| {
                CliError::Core {
                    message: "the closed form covers x^2 + y^2 - delta z^2 = 1 with the Euclidean norm only".into(),
                    class: ErrorClass::Domain,
                }
            })?;
        results.push(closed_form_family(delta, t).map_err(core)?);
    }
    if matches!(method, IntegralMethodArg::Quad | IntegralMethodArg::Both) {
        results.push(leray_quadrature(&form, a, t, norm).map_err(core)?);
    }
    if json {
        return to_json(&serde_json::json!({ "form": form.to_string(), "a": a.get(), "results": results }));
    }
    let mut s = String::new();
    for r in results.iter() {
        let _ = writeln!(s, "integral = {:.12} ({:?}, est. error {:.1e})", r.value, r.method, r.est_error);
    }
    if let [x, y] = &results[..] {
        let _ = writeln!(
            s,
            "relative difference = {:.2e}",
            (x.value - y.value).abs() / x.value.abs().max(f64::MIN_POSITIVE)
        );
    }
    Ok(s)
}

fn count(
    form: &FormArgs,
    t: f64,
    norm: NormSpec,
    method: CountMethodArg,
    (budget, guard): (u32, f64),
    json: bool,
) -> Result<String, CliError> {
    let (form, a) = form.parse()?;
    let mut results: Vec<CountResult> = Vec::new();
    if matches!(method, CountMethodArg::Generic | CountMethodArg::Both) {
        results.push(count_generic_with_guard(&form, a, t, norm, guard).map_err(core)?);
    }
    if matches!(method, CountMethodArg::Fast | CountMethodArg::Both) {
        let delta = form.family_delta().filter(|&d| d >= 1).ok_or_else(|| CliError::Core {
            message: "the fast path needs x^2 + y^2 - delta z^2".into(),
            class: ErrorClass::Domain,
        })?;
        results.push(count_family_fast_with_budget(delta, a, t, norm, budget).map_err(core)?);
    }
    let agree = results.windows(2).all(|w| w[0].count == w[1].count);
    let body = if json {
        to_json(&serde_json::json!({ "form": form.to_string(), "a": a.get(), "results": results, "agree": agree }))?
    } else {
        let mut s = String::new();
        for r in results.iter() {
            let _ = writeln!(s, "N(T = {}) = {} ({:?}, {} ms)", r.t, r.count, r.method, r.elapsed_ms);
        }
        s
    };
    if !agree {
        return Err(CliError::Core {
            message: format!("counting methods disagree: {} vs {}", results[0].count, results[1].count),
            class: ErrorClass::Resource,
        });
    }
    Ok(body)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// RFC 4180 ladder table.
pub fn ladder_csv(report: &VerifyReport) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "T",
        "count",
        "predicted",
        "ratio",
        "elapsed_ms",
        "prefactor",
        "finite_constant",
        "log_factor",
        "arch_integral",
    ])?;
    for r in report.ladder.iter() {
        w.write_record([
            r.t.to_string(),
            r.count.to_string(),
            r.predicted.to_string(),
            r.ratio.to_string(),
            r.elapsed_ms.to_string(),
            r.breakdown.prefactor.to_string(),
            r.breakdown.finite_constant.to_string(),
            r.breakdown.log_factor.to_string(),
            r.breakdown.arch_integral.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| CliError::Io { path: "<csv buffer>".into(), source: e.into_error() })
}

fn verify_cmd(
    form: &FormArgs,
    (t_min, t_max, rungs): (f64, f64, usize),
    norm: NormSpec,
    source: DensitySource,
    out: Option<&Path>,
    csv_path: Option<&Path>,
    json: bool,
) -> Result<String, CliError> {
    let (form, a) = form.parse()?;
    let report = verify(&form, a, t_min, t_max, rungs, norm, source).map_err(core)?;
    let json_text = to_json(&report)?;
    if let Some(path) = out {
        write_file(path, json_text.as_bytes())?;
    }
    if let Some(path) = csv_path {
        write_file(path, &ladder_csv(&report)?)?;
    }
    if json {
        return Ok(json_text);
    }
    let mut s = format!(
        "form {} = {}, regime {}, constant {:.12} ({:?} densities)\n",
        report.form, report.a, report.regime, report.constant.value, report.density_source
    );
    let _ = writeln!(s, "{:>14} {:>14} {:>18} {:>10} {:>10}", "T", "count", "predicted", "ratio", "ms");
    for r in report.ladder.iter() {
        let _ = writeln!(s, "{:>14} {:>14} {:>18.3} {:>10.5} {:>10}", r.t, r.count, r.predicted, r.ratio, r.elapsed_ms);
    }
    let _ = writeln!(s, "trend_ok = {}", report.trend_ok);
    let _ = writeln!(s, "note: {}", report.tolerance_note);
    Ok(s)
}
