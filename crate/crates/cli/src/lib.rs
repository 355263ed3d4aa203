//! Configuration and orchestration for the `eigenmoment` command.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use eigenmoment::bounds::{bounds_report, sweep_csv, sweep_radii};
use eigenmoment::comparison::{
    balance_check, build_comparison_space_on, transplanted_convexity_check, RadialFunctionDescriptor,
    SpecDescriptor,
};
use eigenmoment::growth::reconcile;
use eigenmoment::moments::{build_hierarchy_on, lambda1_sandwich_with};
use eigenmoment::quadrature::uniform_grid;
use eigenmoment::warping::{validate_warping, WarpingDescriptor};
use eigenmoment::{ComparisonSpaceSpec, EigenEstimate, Execution, ModelSpace, SandwichOptions, WarpingFunction};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "EIGENMOMENT_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Help or version text requested; not a failure.
    #[error("{0}")]
    Help(String),
    #[error("{0}")]
    Usage(String),
    #[error("{path}:{line}:{column}: {message}")]
    Config { path: String, line: usize, column: usize, message: String },
    #[error(transparent)]
    Compute(#[from] eigenmoment::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Help(_) => EXIT_OK,
            CliError::Usage(_) | CliError::Config { .. } => EXIT_USAGE,
            CliError::Compute(e) if e.is_infeasible() => EXIT_INFEASIBLE,
            CliError::Compute(_) | CliError::Io { .. } => EXIT_NUMERICAL,
        }
    }
}

// ---------------------------------------------------------------------------
// Command line

#[derive(Parser, Debug)]
#[command(name = "eigenmoment", version, about = "First Dirichlet eigenvalues of model-space balls from exit-time moments")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Sandwich estimate of λ₁ with the eigenfunction profile
    Lambda1,
    /// Moment hierarchy table k, ρ_k, σ_k, ln A_k
    Moments,
    /// Closed-form bounds next to the sandwich estimate
    Bounds,
    /// Build the isoperimetric comparison space
    BuildComparison,
    /// Check the balance condition of a comparison space
    CheckBalance,
    /// Bounds and sandwich over a range of radii
    Sweep,
    /// Compare the growth-rate estimates with the sandwich
    Reconcile,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Lambda1 => "lambda1",
            Command::Moments => "moments",
            Command::Bounds => "bounds",
            Command::BuildComparison => "build-comparison",
            Command::CheckBalance => "check-balance",
            Command::Sweep => "sweep",
            Command::Reconcile => "reconcile",
        }
    }
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// Space-form curvature, as `b=VALUE` or `VALUE`
    #[arg(long, global = true, allow_hyphen_values = true, value_name = "b=VALUE")]
    space_form: Option<String>,
    /// Dimension m ≥ 2
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// Ball radius, or `start:stop:step` for sweep
    #[arg(long, global = true, value_name = "R|A:B:STEP")]
    radius: Option<String>,
    /// Relative stopping tolerance of the sandwich
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Maximum hierarchy depth
    #[arg(long, global = true)]
    k_max: Option<usize>,
    /// Grid nodes
    #[arg(long, global = true)]
    grid_n: Option<usize>,
    /// Output directory
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// JSON configuration file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// JSON comparison-space specification
    #[arg(long, global = true)]
    spec: Option<PathBuf>,
    /// Named preset: hyperbolic, euclidean, theorem-b
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Constant mean-curvature bound h
    #[arg(long, global = true, allow_hyphen_values = true)]
    h: Option<f64>,
    /// Require strict balance
    #[arg(long, global = true)]
    strict: bool,
    /// Hierarchy depth of the transplanted convexity check
    #[arg(long, global = true)]
    k_small: Option<usize>,
}

/// Keys accepted in a `--config` file.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    command: Option<Command>,
    space_form: Option<f64>,
    warping: Option<WarpingDescriptor>,
    dim: Option<usize>,
    radius: Option<RadiusValue>,
    tol: Option<f64>,
    k_max: Option<usize>,
    grid_n: Option<usize>,
    output: Option<PathBuf>,
    spec: Option<SpecDescriptor>,
    preset: Option<String>,
    h: Option<f64>,
    strict: Option<bool>,
    k_small: Option<usize>,
}

#[derive(Deserialize, Debug)]
#[serde(untagged)]
enum RadiusValue {
    Single(f64),
    Text(String),
}

// ---------------------------------------------------------------------------
// Resolved configuration

/// A validated run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub warping: WarpingDescriptor,
    pub dim: usize,
    /// One radius, or the sweep radii in order.
    pub radii: Vec<f64>,
    pub spec: Option<SpecDescriptor>,
    pub h: f64,
    pub tol: f64,
    pub k_max: usize,
    pub grid_n: usize,
    pub output: PathBuf,
    pub strict: bool,
    pub k_small: usize,
}

impl RunConfig {
    pub fn radius(&self) -> f64 {
        self.radii[0]
    }

    pub fn options(&self) -> SandwichOptions {
        SandwichOptions { tol: self.tol, k_max: self.k_max, grid_n: self.grid_n, execution: Execution::Sequential }
    }

    fn curvature(&self) -> Result<f64, CliError> {
        match self.warping {
            WarpingDescriptor::SpaceForm { b, .. } => Ok(b),
            _ => Err(CliError::Usage(format!("{} needs a space form (--space-form)", self.command.name()))),
        }
    }

    fn space(&self) -> Result<ModelSpace, CliError> {
        Ok(ModelSpace::new(self.dim, WarpingFunction::from_descriptor(&self.warping)?, self.radius())?)
    }

    fn comparison_spec(&self) -> Result<ComparisonSpaceSpec, CliError> {
        let desc = self.spec.clone().unwrap_or_else(|| SpecDescriptor {
            w: self.warping.clone(),
            g: RadialFunctionDescriptor::Value(1.0),
            h: RadialFunctionDescriptor::Value(self.h),
            m: self.dim,
            radius: self.radius(),
        });
        Ok(ComparisonSpaceSpec::from_descriptor(&desc)?)
    }
}

fn parse_curvature(text: &str) -> Result<f64, CliError> {
    let value = text.strip_prefix("b=").unwrap_or(text);
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value '{text}' for '--space-form': expected b=VALUE")))
}

fn parse_radii(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("invalid value '{text}' for '--radius': expected R or A:B:STEP"));
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [single] => Ok(vec![single.trim().parse().map_err(|_| bad())?]),
        [a, b, step] => {
            let (a, b, step): (f64, f64, f64) = (
                a.trim().parse().map_err(|_| bad())?,
                b.trim().parse().map_err(|_| bad())?,
                step.trim().parse().map_err(|_| bad())?,
            );
            if !(step > 0.0 && b >= a) {
                return Err(bad());
            }
            let count = ((b - a) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| a + step * i as f64).collect())
        }
        _ => Err(bad()),
    }
}

fn read_config(path: &Path) -> Result<ConfigFile, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text).map_err(|e| CliError::Config {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn read_spec(path: &Path) -> Result<SpecDescriptor, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text).map_err(|e| CliError::Config {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// `(b, dim, R, h)` of a named preset.
fn preset(name: &str) -> Result<(f64, usize, f64, f64), CliError> {
    match name {
        "hyperbolic" => Ok((-1.0, 3, 5.0, 0.0)),
        "euclidean" => Ok((0.0, 3, 1.0, 0.0)),
        "theorem-b" => Ok((-1.0, 3, 2.0, 0.0)),
        other => Err(CliError::Usage(format!(
            "unknown preset '{other}': expected hyperbolic, euclidean or theorem-b"
        ))),
    }
}

/// Parses `argv` (program name first) and an optional `--config` file.
///
/// Precedence, lowest first: built-in defaults, preset, file, flags.
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => CliError::Help(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    })?;
    let flags = cli.flags;
    let file = match &flags.config {
        Some(path) => read_config(path)?,
        None => ConfigFile::default(),
    };

    let command = cli
        .command
        .or(file.command)
        .ok_or_else(|| CliError::Usage("missing command; run with --help for usage".into()))?;

    let (mut b, mut dim, mut radius, mut h) = (0.0, 2usize, 1.0, 0.0);
    if let Some(name) = flags.preset.as_deref().or(file.preset.as_deref()) {
        (b, dim, radius, h) = preset(name)?;
    }
    let mut warping = WarpingDescriptor::SpaceForm { b, cap: None };
    let mut radii = vec![radius];

    if let Some(v) = file.space_form {
        warping = WarpingDescriptor::SpaceForm { b: v, cap: None };
    }
    if let Some(w) = file.warping {
        warping = w;
    }
    dim = file.dim.unwrap_or(dim);
    match file.radius {
        Some(RadiusValue::Single(r)) => radii = vec![r],
        Some(RadiusValue::Text(t)) => radii = parse_radii(&t)?,
        None => {}
    }
    h = file.h.unwrap_or(h);
    let mut spec = file.spec;

    if let Some(text) = &flags.space_form {
        warping = WarpingDescriptor::SpaceForm { b: parse_curvature(text)?, cap: None };
    }
    dim = flags.dim.unwrap_or(dim);
    if let Some(text) = &flags.radius {
        radii = parse_radii(text)?;
    }
    h = flags.h.unwrap_or(h);
    if let Some(path) = &flags.spec {
        spec = Some(read_spec(path)?);
    }

    let config = RunConfig {
        command,
        warping,
        dim,
        radii,
        spec,
        h,
        tol: flags.tol.or(file.tol).unwrap_or(1e-4),
        k_max: flags.k_max.or(file.k_max).unwrap_or(200),
        grid_n: flags.grid_n.or(file.grid_n).unwrap_or(4097),
        output: flags.output.or(file.output).unwrap_or_else(|| PathBuf::from(".")),
        strict: flags.strict || file.strict.unwrap_or(false),
        k_small: flags.k_small.or(file.k_small).unwrap_or(10),
    };
    validate(&config)?;
    Ok(config)
}

fn validate(config: &RunConfig) -> Result<(), CliError> {
    if !(config.tol > 0.0) {
        return Err(CliError::Usage(format!("--tol must be positive, got {}", config.tol)));
    }
    if config.k_max < 2 {
        return Err(CliError::Usage(format!("--k-max must be at least 2, got {}", config.k_max)));
    }
    if config.grid_n < 17 {
        return Err(CliError::Usage(format!("--grid-n must be at least 17, got {}", config.grid_n)));
    }
    if config.radii.len() > 1 && config.command != Command::Sweep {
        return Err(CliError::Usage("a radius range is only meaningful for sweep".into()));
    }
    // every radius must describe a valid ball
    let warping = WarpingFunction::from_descriptor(&config.warping).map_err(|e| CliError::Usage(e.to_string()))?;
    for &r in &config.radii {
        ModelSpace::new(config.dim, warping.clone(), r).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Execution

/// What a run produced.
#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    /// Summary printed on stdout.
    pub summary: serde_json::Value,
    pub files: Vec<PathBuf>,
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.display().to_string(), source })?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
        self.files.push(path);
        Ok(())
    }

    fn json(&mut self, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
        text.push('\n');
        self.write(name, &text)
    }
}

fn plot_script(csv: &str, xlabel: &str, ylabel: &str, columns: &[(usize, &str)]) -> String {
    let mut out = String::from("set datafile separator \",\"\nset key outside\n");
    out.push_str(&format!("set xlabel \"{xlabel}\"\nset ylabel \"{ylabel}\"\nplot \\\n"));
    let lines: Vec<String> = columns
        .iter()
        .map(|(c, title)| format!("  \"{csv}\" using 1:{c} skip 1 with lines title \"{title}\""))
        .collect();
    out.push_str(&lines.join(", \\\n"));
    out.push_str("\npause -1\n");
    out
}

fn profile_csv(est: &EigenEstimate) -> String {
    let g = &est.eigenfunction;
    let mut out = String::from("r,g\n");
    for (r, v) in g.grid().nodes().zip(g.values()) {
        out.push_str(&format!("{r:.15e},{v:.15e}\n"));
    }
    out
}

fn estimate_json(est: &EigenEstimate) -> serde_json::Value {
    serde_json::to_value(est).expect("estimate serializes")
}

/// Runs a parsed configuration, honouring [`THREADS_ENV`].
pub fn run(config: &RunConfig) -> Result<RunOutcome, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(value) => {
            let threads: usize = value
                .trim()
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got '{value}'")))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot start {threads} worker threads: {e}")))?;
            pool.install(|| execute(config))
        }
        Err(_) => execute(config),
    }
}

fn execute(config: &RunConfig) -> Result<RunOutcome, CliError> {
    let mut out = Writer::new(&config.output)?;
    let mut exit_code = EXIT_OK;
    let summary = match config.command {
        Command::Lambda1 => {
            let space = config.space()?;
            let (est, converged) = match lambda1_sandwich_with(&space, &config.options()) {
                Ok(est) => (est, true),
                Err(eigenmoment::Error::NotConverged(partial)) => (*partial, false),
                Err(e) => return Err(e.into()),
            };
            if !converged {
                exit_code = EXIT_NUMERICAL;
            }
            let summary = json!({
                "dim": config.dim,
                "radius": config.radius(),
                "warping": config.warping,
                "estimate": estimate_json(&est),
            });
            out.json("lambda1.json", &summary)?;
            out.write("eigenfunction.csv", &profile_csv(&est))?;
            out.write("eigenfunction.gp", &plot_script("eigenfunction.csv", "r", "g", &[(2, "g_k")]))?;
            summary
        }
        Command::Moments => {
            let space = config.space()?;
            let grid = uniform_grid(space.radius(), config.grid_n)?;
            let h = build_hierarchy_on(&space, grid, config.k_max, Execution::Sequential)?;
            out.write("moments.csv", &h.to_csv())?;
            out.write(
                "moments.gp",
                &plot_script("moments.csv", "k", "quotient", &[(2, "rho_k"), (3, "sigma_k")]),
            )?;
            let k = h.k_max();
            json!({
                "k_max": k,
                "rho": h.lower_quotients()[k - 1],
                "sigma": h.upper_quotients()[k - 1],
                "ln_A": h.log_moments()[k],
            })
        }
        Command::Bounds => {
            let report = bounds_report(config.curvature()?, config.dim, config.radius(), config.h, &config.options())?;
            let summary = serde_json::to_value(&report).expect("report serializes");
            out.json("bounds.json", &summary)?;
            summary
        }
        Command::BuildComparison => {
            let spec = config.comparison_spec()?;
            let result = build_comparison_space_on(&spec, config.grid_n)?;
            let w = result.w_model.warping();
            let validation = validate_warping(w, spec.dim());
            let summary = json!({
                "stretched_radius": result.stretched_radius,
                "W_at_0": w.eval(0.0),
                "W_prime_at_0": w.deriv(0.0),
                "W_at_end": w.eval(result.stretched_radius),
                "valid_warping": validation.is_valid(),
                "violations": validation.violations,
            });
            out.json("comparison.json", &summary)?;
            out.write("comparison_profile.csv", &result.profile_csv())?;
            out.write(
                "comparison_profile.gp",
                &plot_script("comparison_profile.csv", "r", "profile", &[(2, "s"), (4, "W(s(r))")]),
            )?;
            summary
        }
        Command::CheckBalance => {
            let spec = config.comparison_spec()?;
            let result = build_comparison_space_on(&spec, config.grid_n)?;
            let report = balance_check(&result, &spec, config.strict);
            let convexity = if report.balanced {
                Some(transplanted_convexity_check(&result, &spec, config.k_small)?)
            } else {
                exit_code = EXIT_INFEASIBLE;
                None
            };
            let mut summary = serde_json::to_value(&report).expect("report serializes");
            if let Some(map) = summary.as_object_mut() {
                map.remove("violating_radii");
                map.remove("positivity_violations");
                map.insert("violation_count".into(), json!(report.violating_radii.len()));
                map.insert("positivity_violation_count".into(), json!(report.positivity_violations.len()));
                map.insert("convexity".into(), serde_json::to_value(&convexity).expect("report serializes"));
            }
            out.json("balance.json", &summary)?;
            if let Some(margins) = &report.margins {
                let mut csv = String::from("r,margin\n");
                for (r, v) in margins.grid().nodes().zip(margins.values()) {
                    csv.push_str(&format!("{r:.15e},{v:.15e}\n"));
                }
                out.write("balance_margins.csv", &csv)?;
                out.write("balance_margins.gp", &plot_script("balance_margins.csv", "r", "margin", &[(2, "margin")]))?;
            }
            summary
        }
        Command::Sweep => {
            let rows = sweep_radii(
                config.curvature()?,
                config.dim,
                config.h,
                &config.radii,
                &config.options(),
                Execution::default(),
            )?;
            out.write("sweep.csv", &sweep_csv(&rows))?;
            out.write(
                "sweep.gp",
                &plot_script(
                    "sweep.csv",
                    "R",
                    "eigenvalue",
                    &[(2, "mckean"), (3, "cheung_leung"), (4, "bessa_montenegro"), (5, "l_r"), (7, "lambda_lo"), (8, "lambda_hi")],
                ),
            )?;
            json!({ "rows": rows.len() })
        }
        Command::Reconcile => {
            let space = config.space()?;
            let sandwich = lambda1_sandwich_with(&space, &config.options())?;
            let grid = uniform_grid(space.radius(), config.grid_n)?;
            let hierarchy = build_hierarchy_on(&space, grid, config.k_max, Execution::Sequential)?;
            let report = reconcile(&hierarchy, &sandwich)?;
            let summary = json!({
                "sandwich": estimate_json(&sandwich),
                "growth": report.entries(),
                "ratio_gap": report.ratio_gap,
                "root_gap": report.root_gap,
                "flagged": report.flagged,
            });
            out.json("reconcile.json", &summary)?;
            summary
        }
    };
    Ok(RunOutcome { exit_code, summary, files: out.files })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig, CliError> {
        parse_config(std::iter::once("eigenmoment").chain(args.iter().copied()))
    }

    #[test]
    fn defaults() {
        let c = parse(&["lambda1"]).unwrap();
        assert_eq!((c.tol, c.k_max, c.grid_n), (1e-4, 200, 4097));
        assert_eq!(c.radii, vec![1.0]);
    }

    #[test]
    fn space_form_syntax() {
        assert_eq!(parse_curvature("b=-1").unwrap(), -1.0);
        assert_eq!(parse_curvature("0.5").unwrap(), 0.5);
        assert!(parse_curvature("x=1").is_err());
        let c = parse(&["lambda1", "--space-form", "b=-1", "--dim", "3"]).unwrap();
        assert_eq!(c.warping, WarpingDescriptor::SpaceForm { b: -1.0, cap: None });
    }

    #[test]
    fn radius_ranges() {
        let r = parse_radii("0.5:5:0.5").unwrap();
        assert_eq!(r.len(), 10);
        assert!((r[9] - 5.0).abs() < 1e-12);
        assert!(parse_radii("1:0:1").is_err());
        assert!(parse(&["lambda1", "--radius", "1:2:0.5"]).is_err());
    }

    #[test]
    fn usage_errors() {
        assert_eq!(parse(&[]).unwrap_err().exit_code(), EXIT_USAGE);
        assert_eq!(parse(&["lambda1", "--bogus"]).unwrap_err().exit_code(), EXIT_USAGE);
        assert_eq!(parse(&["lambda1", "--tol", "abc"]).unwrap_err().exit_code(), EXIT_USAGE);
        let err = parse(&["lambda1", "--space-form", "b=1", "--radius", "3.141592653589793"]).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_USAGE);
        assert!(parse(&["lambda1", "--preset", "nowhere"]).is_err());
        assert!(parse(&["lambda1", "--grid-n", "16"]).is_err());
    }

    #[test]
    fn presets() {
        let c = parse(&["check-balance", "--preset", "hyperbolic"]).unwrap();
        assert_eq!(c.warping, WarpingDescriptor::SpaceForm { b: -1.0, cap: None });
        assert_eq!((c.dim, c.radius()), (3, 5.0));
        let c = parse(&["check-balance", "--preset", "theorem-b", "--h", "0.1"]).unwrap();
        assert_eq!(c.h, 0.1);
    }
}
