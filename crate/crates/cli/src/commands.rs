use std::f64::consts::{E, PI};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use devfactor_core::cutoff::{
    fmt17, sample_over_cutoffs, ComplexIntegrand, CutoffError, CutoffSamples, QuadratureSpec,
};
use devfactor_core::deviation::{
    class_a_check, convergence_check, factor_from_model, gauge_multiply, regularize_coefficient, resum_coulomb_series,
    Coupling, DeviationFactor,
};
use devfactor_core::fitter::{
    classify_with, fit_with, AsymptoticModel, FitError, FitOptions, FitReport, DEFAULT_MAX_POLYLOG_DEGREE,
};
use devfactor_core::integrand::{parse_integrand, screen_singularities, IntegrandExpr};
use devfactor_core::spectral::{
    build_doubled, build_hamiltonian, eigenvectors_closed_form, random_commuting_unitary, simultaneous_diagonalize,
    spectral_subspaces, BlockSource, DiracMatrix, Mass, Momentum3,
};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{
    self, parse_quad_orders, CheckConfig, ClassAFixture, FitConfig, IntegrateConfig, ModelChoice, RegularizeConfig,
    ResumConfig, SpectraConfig,
};
use crate::error::{CliError, Result};

/// Eigen-residual tolerance relative to `max(|H|, 1)`.
const EIGEN_TOL: f64 = 1e-10;
const MODULUS_TOL: f64 = 1e-10;
const RECONSTRUCTION_TOL: f64 = 1e-9;
const UNIT_MODULUS_TOL: f64 = 1e-14;
const RESUM_TOL: f64 = 1e-12;
/// At most this many failing cases are dumped per suite.
const MAX_DUMPED_FAILURES: usize = 20;

#[derive(Parser, Debug, Clone)]
#[command(
    name = "devfactor",
    version,
    about = "Cutoff integrals, divergence fits and deviation factors"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Eigenvalues and eigenvectors of H(q) over a momentum grid.
    Spectra,
    /// Cutoff integrals over a grid of ball radii.
    Integrate,
    /// Fit samples against a divergence model, or classify them.
    Fit,
    /// Build the deviation factor and the regularized coefficient.
    Regularize,
    /// Run the invariant suites.
    Check,
    /// Verify the Coulomb-type resummation identity order by order.
    Resum,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectra => "spectra",
            Command::Integrate => "integrate",
            Command::Fit => "fit",
            Command::Regularize => "regularize",
            Command::Check => "check",
            Command::Resum => "resum",
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct Options {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for Monte-Carlo quadrature and the check suites.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Tensor Gauss-Legendre orders `r,a1,a2,a3`.
    #[arg(long, global = true, value_parser = parse_quad_orders)]
    pub quad_orders: Option<[usize; 4]>,
    /// Divergence model: log, powerlog, polylog[N] or auto.
    #[arg(long, global = true)]
    pub model: Option<ModelChoice>,
    /// Expansion parameter.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    /// Worker threads for the integrator (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Samples CSV for fit and regularize, overriding the config.
    #[arg(long, global = true)]
    pub samples: Option<PathBuf>,
    /// Fit report JSON for regularize, overriding the config.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
}

/// One-line result plus the files written and diagnostics for stderr.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub line: String,
    pub files: Vec<PathBuf>,
    pub notes: Vec<String>,
}

pub fn run(cli: &Cli) -> Result<Summary> {
    match cli.opts.threads {
        Some(0) => Err(CliError::Config("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?
            .install(|| dispatch(cli.command, &cli.opts)),
        None => dispatch(cli.command, &cli.opts),
    }
}

pub fn dispatch(command: Command, opts: &Options) -> Result<Summary> {
    match command {
        Command::Spectra => cmd_spectra(opts),
        Command::Integrate => cmd_integrate(opts),
        Command::Fit => cmd_fit(opts),
        Command::Regularize => cmd_regularize(opts),
        Command::Check => cmd_check(opts),
        Command::Resum => cmd_resum(opts),
    }
}

fn required_config<T: serde::de::DeserializeOwned + config::Resolve>(opts: &Options, command: &str) -> Result<T> {
    match &opts.config {
        Some(path) => config::load(path),
        None => Err(CliError::Config(format!("{command} requires --config"))),
    }
}

fn optional_config<T: serde::de::DeserializeOwned + config::Resolve + Default>(opts: &Options) -> Result<T> {
    match &opts.config {
        Some(path) => config::load(path),
        None => Ok(T::default()),
    }
}

struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Output {
    fn new(opts: &Options) -> Result<Self> {
        let dir = opts.out.clone().unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir).map_err(|source| CliError::Io {
            action: "create output directory",
            path: dir.clone(),
            source,
        })?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|source| CliError::Io {
            action: "write",
            path: path.clone(),
            source,
        })?;
        self.files.push(path);
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &impl serde::Serialize) -> Result<()> {
        let mut text =
            serde_json::to_string_pretty(value).map_err(|e| CliError::Config(format!("serialize {name}: {e}")))?;
        text.push('\n');
        self.write(name, &text)
    }

    fn listing(&self) -> String {
        self.files
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(", ")
    }

    fn summary(self, line: String, notes: Vec<String>) -> Summary {
        let line = format!("{line}; wrote {}", self.listing());
        Summary {
            line,
            files: self.files,
            notes,
        }
    }
}

fn complex_pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

fn matrix_rows(m: &DMatrix<Complex64>) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| complex_pair(m[(i, j)])).collect())
        .collect()
}

fn mass(m: f64) -> Result<Mass> {
    Mass::new(m).map_err(|e| CliError::Config(e.to_string()))
}

pub fn cmd_spectra(opts: &Options) -> Result<Summary> {
    let cfg: SpectraConfig = required_config(opts, "spectra")?;
    let m = mass(cfg.m)?;
    let momenta = cfg.momenta()?;
    let mut csv = String::from("q1,q2,q3,m,lambda1,lambda2,lambda3,lambda4\n");
    let mut points = Vec::with_capacity(momenta.len());
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for q in momenta {
        if !q.is_finite() {
            return Err(CliError::Config(format!("non-finite momentum {q:?}")));
        }
        let h = build_hamiltonian(q, m).map_err(|e| CliError::Config(e.to_string()))?;
        let sys = eigenvectors_closed_form(q, m).map_err(|e| CliError::Config(e.to_string()))?;
        let sub = spectral_subspaces(q, m).map_err(|e| CliError::Config(e.to_string()))?;
        let scale = h.entries().norm().max(1.0);
        let residual = sys.max_residual(&h);
        worst = worst.max(residual / scale);
        if residual > EIGEN_TOL * scale {
            failures.push(format!("q = {q:?}: residual {residual:e}"));
        }
        let fields = [q.q1, q.q2, q.q3, m.value()]
            .into_iter()
            .chain(sys.eigenvalues)
            .map(fmt17)
            .collect::<Vec<_>>()
            .join(",");
        csv.push_str(&fields);
        csv.push('\n');
        points.push(json!({
            "q": [q.q1, q.q2, q.q3],
            "m": m.value(),
            "eigenvalues": sys.eigenvalues,
            "eigenvectors": sys.eigenvectors.iter().map(|v| v.iter().map(|z| complex_pair(*z)).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "fallback": sys.fallback,
            "residual": residual,
            "negative_subspace": matrix_rows(&sub.negative),
            "positive_subspace": matrix_rows(&sub.positive),
        }));
    }
    let mut out = Output::new(opts)?;
    out.write("spectra.csv", &csv)?;
    out.write_json("spectra.json", &json!({ "mass": m.value(), "points": points }))?;
    if !failures.is_empty() {
        return Err(CliError::CheckFailed(format!(
            "{} of {} points exceed the eigen-residual tolerance:\n{}",
            failures.len(),
            points.len(),
            failures.join("\n")
        )));
    }
    let line = format!(
        "spectra: {} points, max relative eigen residual {worst:.3e} <= {EIGEN_TOL:e}, all residual checks pass",
        points.len()
    );
    Ok(out.summary(line, Vec::new()))
}

fn parse_part(source: &Option<String>, field: &str) -> Result<Option<IntegrandExpr>> {
    source
        .as_deref()
        .map(|s| {
            parse_integrand(s).map_err(|e| CliError::Parse {
                field: field.into(),
                source: e,
            })
        })
        .transpose()
}

fn quadrature(cfg: &IntegrateConfig, opts: &Options) -> Result<QuadratureSpec> {
    let mut spec = cfg.quadrature.unwrap_or_default();
    if let Some([r, a1, a2, a3]) = opts.quad_orders {
        spec = QuadratureSpec::TensorGauss {
            radial: r,
            angular: [a1, a2, a3],
        };
    }
    if let (QuadratureSpec::MonteCarlo { samples, .. }, Some(seed)) = (spec, opts.seed) {
        spec = QuadratureSpec::MonteCarlo { samples, seed };
    }
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(spec)
}

/// Parses, screens and integrates; the shared front half of integrate, fit
/// and regularize.
pub fn integrate_samples(cfg: &IntegrateConfig, opts: &Options) -> Result<CutoffSamples> {
    let re = parse_part(&cfg.integrand.re, "integrand.re")?;
    let im = parse_part(&cfg.integrand.im, "integrand.im")?;
    if re.is_none() && im.is_none() {
        return Err(CliError::Config("integrand needs `re` or `im`".into()));
    }
    let kin = cfg.kinematics.to_kinematics()?;
    let cutoffs = cfg.cutoffs()?;
    let spec = quadrature(cfg, opts)?;
    let q4 = [kin.q0, kin.q.q1, kin.q.q2, kin.q.q3];
    for (field, part) in [("integrand.re", &re), ("integrand.im", &im)] {
        if let Some(expr) = part {
            for &l in &cutoffs {
                let report = screen_singularities(expr, q4, kin.m, l);
                if report.flagged {
                    return Err(CliError::Singular {
                        field: field.into(),
                        cutoff: l,
                        report,
                    });
                }
            }
        }
    }
    let f = ComplexIntegrand::new(re, im);
    sample_over_cutoffs(&f, &kin, &cutoffs, &spec).map_err(|e| match e {
        CutoffError::Singular(report) => CliError::Singular {
            field: "integrand".into(),
            cutoff: f64::NAN,
            report,
        },
        e @ (CutoffError::Evaluation { .. } | CutoffError::NotIntegrable { .. }) => {
            CliError::Integration(e.to_string())
        }
        e => CliError::Config(e.to_string()),
    })
}

pub fn cmd_integrate(opts: &Options) -> Result<Summary> {
    let cfg: IntegrateConfig = required_config(opts, "integrate")?;
    let samples = integrate_samples(&cfg, opts)?;
    let mut out = Output::new(opts)?;
    out.write("samples.csv", &samples.to_csv())?;
    let max_err = samples.errors.iter().fold(0.0f64, |m, e| m.max(*e));
    let line = format!(
        "integrate: {} samples, L in [{}, {}], max error estimate {max_err:.3e}",
        samples.len(),
        samples.cutoffs[0],
        samples.cutoffs[samples.len() - 1]
    );
    Ok(out.summary(line, Vec::new()))
}

fn read_samples(path: &Path) -> Result<CutoffSamples> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        action: "read samples",
        path: path.to_path_buf(),
        source,
    })?;
    CutoffSamples::from_csv(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Minimum grid size for the fitting commands.
const MIN_FIT_GRID: usize = 4;

fn load_fit_samples(
    flag: &Option<PathBuf>,
    file: &Option<PathBuf>,
    integrate: &Option<IntegrateConfig>,
    opts: &Options,
) -> Result<CutoffSamples> {
    let samples = match (flag.as_ref().or(file.as_ref()), integrate) {
        (Some(path), _) => read_samples(path)?,
        (None, Some(cfg)) => integrate_samples(cfg, opts)?,
        (None, None) => {
            return Err(CliError::Config(
                "no samples: give --samples, `samples` or `integrate`".into(),
            ))
        }
    };
    if samples.len() < MIN_FIT_GRID {
        return Err(CliError::Config(format!(
            "fitting needs at least {MIN_FIT_GRID} cutoffs, got {}",
            samples.len()
        )));
    }
    Ok(samples)
}

fn fit_error(e: FitError) -> CliError {
    match e {
        FitError::ModelMismatch { .. } => CliError::Mismatch(e.to_string()),
        FitError::Unclassified { .. } => CliError::Unclassified(e.to_string()),
        e => CliError::Config(e.to_string()),
    }
}

fn model_choice(flag: Option<ModelChoice>, cfg: &Option<String>) -> Result<ModelChoice> {
    match (flag, cfg) {
        (Some(c), _) => Ok(c),
        (None, Some(s)) => s.parse().map_err(CliError::Config),
        (None, None) => Ok(ModelChoice::Auto),
    }
}

fn describe(report: &FitReport) -> String {
    let coeffs = report
        .coefficient_names
        .iter()
        .zip(report.model.coefficients())
        .map(|(n, c)| format!("{n}={c}"))
        .collect::<Vec<_>>()
        .join(" ");
    format!(
        "{} {coeffs} window [{}, {}] decay {}",
        report.model.kind(),
        report.window[0],
        report.window[1],
        if report.decay.passed { "pass" } else { "fail" }
    )
}

pub fn cmd_fit(opts: &Options) -> Result<Summary> {
    let cfg: FitConfig = optional_config(opts)?;
    let samples = load_fit_samples(&opts.samples, &cfg.samples, &cfg.integrate, opts)?;
    let fit_opts = FitOptions::with_tail_fraction(cfg.tail_fraction.unwrap_or(1.0));
    let choice = model_choice(opts.model, &cfg.model)?;
    let result = match choice {
        ModelChoice::Auto => classify_with(
            &samples,
            &fit_opts,
            cfg.max_polylog_degree.unwrap_or(DEFAULT_MAX_POLYLOG_DEGREE),
        ),
        ModelChoice::Kind(kind) => fit_with(&samples, kind, &fit_opts),
    };
    let mut out = Output::new(opts)?;
    match result {
        Ok(report) => {
            out.write_json("fit.json", &report)?;
            let notes = if report.decay.passed {
                Vec::new()
            } else {
                vec![format!(
                    "warning: O(1/L) remainder check fails (sup |R L| = {:.3e}, head median {:.3e})",
                    report.decay.sup_scaled, report.decay.median_scaled_head
                )]
            };
            Ok(out.summary(format!("fit: {}", describe(&report)), notes))
        }
        Err(FitError::Unclassified { reports }) => {
            out.write_json("fit.json", &json!({ "outcome": "unclassified", "reports": reports }))?;
            let tried = reports.iter().map(describe).collect::<Vec<_>>().join("\n");
            Err(CliError::Unclassified(format!(
                "unclassified divergence, all reports in {}:\n{tried}",
                out.listing()
            )))
        }
        Err(e) => Err(fit_error(e)),
    }
}

fn read_report(path: &Path) -> Result<FitReport> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        action: "read report",
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn coupling(eps: f64) -> Result<Coupling> {
    Coupling::new(eps).map_err(|e| CliError::Config(e.to_string()))
}

pub fn cmd_regularize(opts: &Options) -> Result<Summary> {
    let cfg: RegularizeConfig = optional_config(opts)?;
    let samples = load_fit_samples(&opts.samples, &cfg.samples, &cfg.integrate, opts)?;
    let eps = opts
        .epsilon
        .or(cfg.epsilon)
        .ok_or_else(|| CliError::Config("regularize needs --epsilon or `epsilon`".into()))?;
    let eps = coupling(eps)?;
    let order = cfg.order.unwrap_or(2);
    let fit_opts = FitOptions::with_tail_fraction(cfg.tail_fraction.unwrap_or(1.0));
    let mut notes = Vec::new();

    let model = match (opts.report.as_ref().or(cfg.report.as_ref()), &cfg.fitted_model) {
        (Some(path), _) => read_report(path)?.model,
        (None, Some(m)) => m.clone(),
        (None, None) => {
            let report = match model_choice(opts.model, &cfg.model)? {
                ModelChoice::Auto => classify_with(&samples, &fit_opts, DEFAULT_MAX_POLYLOG_DEGREE),
                ModelChoice::Kind(kind) => fit_with(&samples, kind, &fit_opts),
            }
            .map_err(fit_error)?;
            report.model
        }
    };

    // The given model must describe these samples: refit its kind and
    // require the remainder check to pass.
    match fit_with(&samples, model.kind(), &fit_opts) {
        Ok(r) if r.decay.passed => {}
        Ok(r) => {
            return Err(CliError::Mismatch(format!(
                "{} model does not describe the samples: O(1/L) remainder check fails (sup |R L| = {:.3e}, head median {:.3e})",
                model.kind(),
                r.decay.sup_scaled,
                r.decay.median_scaled_head
            )))
        }
        Err(FitError::InsufficientSamples { needed, found, .. }) => notes.push(format!(
            "note: {found} samples are too few to re-verify the {} model (needs {needed})",
            model.kind()
        )),
        Err(e) => return Err(fit_error(e)),
    }

    let factor = factor_from_model(&model, eps, order).map_err(|e| CliError::Mismatch(e.to_string()))?;
    let regularized = regularize_coefficient(&samples, &model);
    let conv = convergence_check(&regularized).map_err(|e| CliError::Config(e.to_string()))?;

    let mut csv = String::from("L,re,im\n");
    for (l, v) in regularized.cutoffs.iter().zip(&regularized.values) {
        let _ = writeln!(csv, "{},{},{}", fmt17(*l), fmt17(v.re), fmt17(v.im));
    }
    let mut out = Output::new(opts)?;
    out.write_json("factor.json", &factor)?;
    out.write("regularized.csv", &csv)?;
    out.write_json(
        "regularize.json",
        &json!({
            "model": model,
            "epsilon": eps.value(),
            "order": order,
            "factor": factor,
            "convergence": conv,
        }),
    )?;
    let last = regularized.values[regularized.len() - 1];
    let line = format!(
        "regularize: {} model, a~(L_max) = {}{:+}i, |a~(L_max) - a~(L_max/2)| = {:.3e}, differences {}",
        model.kind(),
        last.re,
        last.im,
        conv.last_difference,
        if conv.shrinking { "shrinking" } else { "not shrinking" }
    );
    Ok(out.summary(line, notes))
}

#[derive(Debug, Clone, serde::Serialize)]
struct Failure {
    case: usize,
    seed: Option<u64>,
    input: Value,
    message: String,
}

#[derive(Debug, Clone, serde::Serialize)]
struct Suite {
    name: &'static str,
    cases: usize,
    worst: f64,
    tolerance: f64,
    passed: bool,
    failures: Vec<Failure>,
}

impl Suite {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            cases: 0,
            worst: 0.0,
            tolerance,
            passed: true,
            failures: Vec::new(),
        }
    }

    fn record(&mut self, value: f64) {
        self.cases += 1;
        self.worst = self.worst.max(value);
    }

    fn fail(&mut self, failure: Failure) {
        self.passed = false;
        if self.failures.len() < MAX_DUMPED_FAILURES {
            self.failures.push(failure);
        }
    }
}

fn random_point(rng: &mut ChaCha8Rng) -> (Momentum3, Mass) {
    loop {
        let q = Momentum3::new(
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
        );
        if q.norm() <= 10.0 {
            let m = Mass::new(rng.random_range(0.0..10.0)).expect("non-negative mass");
            return (q, m);
        }
    }
}

/// Rotation by `angle` in the plane of the first and third basis vectors,
/// which mixes the energy eigenspaces of `H(q)` for generic `q`.
fn tamper(s: &DMatrix<Complex64>, angle: f64) -> DMatrix<Complex64> {
    let mut rot = DMatrix::<Complex64>::identity(s.nrows(), s.ncols());
    let (sn, c) = angle.sin_cos();
    rot[(0, 0)] = Complex64::new(c, 0.0);
    rot[(0, 2)] = Complex64::new(-sn, 0.0);
    rot[(2, 0)] = Complex64::new(sn, 0.0);
    rot[(2, 2)] = Complex64::new(c, 0.0);
    rot * s
}

fn eigen_suite(rng: &mut ChaCha8Rng, cases: usize) -> Suite {
    let mut suite = Suite::new("eigen-residuals", EIGEN_TOL);
    for case in 0..cases {
        let (q, m) = random_point(rng);
        let input = json!({ "q": [q.q1, q.q2, q.q3], "m": m.value() });
        let outcome = build_hamiltonian(q, m).and_then(|h| Ok((eigenvectors_closed_form(q, m)?, h)));
        let (sys, h) = match outcome {
            Ok(v) => v,
            Err(e) => {
                suite.fail(Failure {
                    case,
                    seed: None,
                    input,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let scale = h.entries().norm().max(1.0);
        let mut oracle: Vec<f64> = h
            .entries()
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        oracle.sort_by(f64::total_cmp);
        let eig_err = sys
            .eigenvalues
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let err = sys.max_residual(&h).max(eig_err) / scale;
        suite.record(err);
        if err > EIGEN_TOL {
            suite.fail(Failure {
                case,
                seed: None,
                input,
                message: format!("relative eigen residual {err:e}"),
            });
        }
    }
    suite
}

fn scattering_suite(rng: &mut ChaCha8Rng, cases: usize, fault: Option<f64>) -> Suite {
    let mut suite = Suite::new("scattering-diagonal", RECONSTRUCTION_TOL);
    for case in 0..cases {
        let (q, m) = random_point(rng);
        let case_seed: u64 = rng.random();
        let doubled = case % 2 == 1;
        let input = json!({ "q": [q.q1, q.q2, q.q3], "m": m.value(), "doubled": doubled, "fault": fault });
        let result = (|| -> std::result::Result<f64, String> {
            let h: DiracMatrix = if doubled {
                build_doubled(q, m)
            } else {
                build_hamiltonian(q, m)
            }
            .map_err(|e| e.to_string())?;
            let mut s = random_commuting_unitary(&h, BlockSource::Seed(case_seed)).map_err(|e| e.to_string())?;
            if let Some(angle) = fault {
                s = tamper(&s, angle);
            }
            let diag = simultaneous_diagonalize(&h, &s).map_err(|e| e.to_string())?;
            let modulus = diag.max_modulus_defect();
            let recon = (diag.reconstruct() - &s).norm();
            if modulus > MODULUS_TOL {
                return Err(format!("| |d_k| - 1 | = {modulus:e}"));
            }
            if recon > RECONSTRUCTION_TOL {
                return Err(format!("reconstruction error {recon:e}"));
            }
            Ok(recon.max(modulus))
        })();
        match result {
            Ok(err) => suite.record(err),
            Err(message) => {
                suite.cases += 1;
                suite.fail(Failure {
                    case,
                    seed: Some(case_seed),
                    input,
                    message,
                });
            }
        }
    }
    suite
}

fn random_factor(rng: &mut ChaCha8Rng) -> DeviationFactor {
    let scale = 10f64.powf(rng.random_range(-4.0..1.0));
    let c_l2 = if rng.random_bool(0.5) {
        rng.random_range(-1.0..1.0) * scale
    } else {
        0.0
    };
    let c_l = if rng.random_bool(0.5) {
        rng.random_range(-1.0..1.0) * scale
    } else {
        0.0
    };
    let c_ln: Vec<f64> = (0..rng.random_range(0..4))
        .map(|_| rng.random_range(-1.0..1.0) * scale)
        .collect();
    DeviationFactor::from_exponents(c_l2, c_l, &c_ln, rng.random_range(-PI..PI)).expect("finite coefficients")
}

fn modulus_suite(rng: &mut ChaCha8Rng, cases: usize) -> Suite {
    let mut suite = Suite::new("unit-modulus", UNIT_MODULUS_TOL);
    for case in 0..cases * 50 {
        let u = random_factor(rng);
        let l = 10f64.powf(rng.random_range(-3.0..4.0));
        let defect = (u.evaluate(l).norm() - 1.0).abs();
        suite.record(defect);
        if defect > UNIT_MODULUS_TOL {
            suite.fail(Failure {
                case,
                seed: None,
                input: json!({ "factor": u, "L": l }),
                message: format!("| |U0| - 1 | = {defect:e}"),
            });
        }
    }
    suite
}

/// Class-A fixtures used when the config gives none.
fn default_fixtures(eps: Coupling) -> Vec<ClassAFixture> {
    let e2 = eps.value() * eps.value();
    let log = factor_from_model(&AsymptoticModel::Log { phi: 3.0, psi: 2.0 }, eps, 2).expect("finite model");
    let fixture = |name: &str, factor: DeviationFactor, expected| ClassAFixture {
        name: name.into(),
        factor,
        expected,
    };
    vec![
        fixture("identity", DeviationFactor::identity(), true),
        fixture("log", log.clone(), true),
        fixture(
            "gauged-log",
            gauge_multiply(&log, PI / 3.0).expect("finite gauge"),
            true,
        ),
        fixture(
            "polylog",
            DeviationFactor::from_exponents(0.0, 0.0, &[0.1, -0.05, 0.01], 0.0).expect("finite"),
            true,
        ),
        fixture(
            "linear",
            DeviationFactor::from_exponents(0.0, e2, &[], 0.0).expect("finite"),
            false,
        ),
        fixture(
            "quadratic",
            DeviationFactor::from_exponents(e2, 0.0, &[e2], 0.0).expect("finite"),
            false,
        ),
    ]
}

fn class_a_suite(fixtures: &[ClassAFixture]) -> (Suite, Vec<Value>) {
    let mut suite = Suite::new("class-a", 0.0);
    let grid: Vec<f64> = (0..12).map(|k| 10.0 * 2f64.powi(k)).collect();
    let mut verdicts = Vec::new();
    for (case, fx) in fixtures.iter().enumerate() {
        suite.cases += 1;
        match class_a_check(&fx.factor, 1.0, &grid) {
            Ok(check) => {
                verdicts.push(json!({
                    "name": fx.name,
                    "verdict": check.verdict,
                    "expected": fx.expected,
                    "ratio_decreasing": check.ratio_decreasing,
                    "final_deviation": check.deviations.last(),
                }));
                if check.verdict != fx.expected {
                    suite.fail(Failure {
                        case,
                        seed: None,
                        input: json!({ "name": fx.name, "factor": fx.factor }),
                        message: format!("class-A verdict {} but expected {}", check.verdict, fx.expected),
                    });
                }
            }
            Err(e) => suite.fail(Failure {
                case,
                seed: None,
                input: json!({ "name": fx.name }),
                message: e.to_string(),
            }),
        }
    }
    (suite, verdicts)
}

pub fn cmd_check(opts: &Options) -> Result<Summary> {
    let cfg: CheckConfig = optional_config(opts)?;
    let cases = cfg.cases.unwrap_or(200);
    let seed = opts.seed.or(cfg.seed).unwrap_or(0);
    let eps = coupling(opts.epsilon.or(cfg.epsilon).unwrap_or(0.1))?;
    if let Some(f) = cfg.fault {
        if !f.is_finite() {
            return Err(CliError::Config("fault angle must be finite".into()));
        }
    }
    let fixtures = cfg.class_a.clone().unwrap_or_else(|| default_fixtures(eps));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eigen = eigen_suite(&mut rng, cases);
    let scattering = scattering_suite(&mut rng, cases, cfg.fault);
    let modulus = modulus_suite(&mut rng, cases);
    let (class_a, verdicts) = class_a_suite(&fixtures);
    let suites = [eigen, scattering, modulus, class_a];
    let passed = suites.iter().all(|s| s.passed);

    let mut out = Output::new(opts)?;
    out.write_json(
        "check.json",
        &json!({
            "seed": seed,
            "cases": cases,
            "epsilon": eps.value(),
            "passed": passed,
            "suites": suites,
            "class_a_verdicts": verdicts,
        }),
    )?;
    if !passed {
        let mut dump = String::new();
        for s in suites.iter().filter(|s| !s.passed) {
            let _ = writeln!(dump, "suite {} failed:", s.name);
            for f in &s.failures {
                let seed = f.seed.map_or(String::new(), |sd| format!(" seed {sd}"));
                let _ = writeln!(dump, "  case {}{seed} input {}: {}", f.case, f.input, f.message);
            }
        }
        return Err(CliError::CheckFailed(format!("run seed {seed}\n{}", dump.trim_end())));
    }
    let line = format!(
        "check: all {} suites pass (seed {seed}, {cases} cases); class-A verdicts {}",
        suites.len(),
        verdicts
            .iter()
            .map(|v| format!("{}={}", v["name"].as_str().unwrap_or("?"), v["verdict"]))
            .collect::<Vec<_>>()
            .join(" ")
    );
    Ok(out.summary(line, Vec::new()))
}

pub fn cmd_resum(opts: &Options) -> Result<Summary> {
    let cfg: ResumConfig = required_config(opts, "resum")?;
    let eps = opts
        .epsilon
        .or(cfg.epsilon)
        .ok_or_else(|| CliError::Config("resum needs --epsilon or `epsilon`".into()))?;
    let eps = coupling(eps)?;
    let order = cfg.order.unwrap_or(cfg.psi.len().saturating_sub(1));
    let cutoffs = cfg.cutoffs.clone().unwrap_or_else(|| vec![1.0, E, 10.0, 100.0]);
    let mut csv = String::from("L,m,re,im,psi,residual\n");
    let mut runs = Vec::new();
    let mut worst = 0.0f64;
    for &l in &cutoffs {
        // psi_0 != 1, a too-high order and a bad cutoff are all invalid input.
        let r = resum_coulomb_series(&cfg.psi, cfg.phi, eps, order, l).map_err(|e| CliError::Config(e.to_string()))?;
        for (m, (c, res)) in r.coefficients.iter().zip(&r.residuals).enumerate() {
            let _ = writeln!(
                csv,
                "{},{m},{},{},{},{}",
                fmt17(l),
                fmt17(c.re),
                fmt17(c.im),
                fmt17(cfg.psi[m]),
                fmt17(*res)
            );
        }
        worst = worst.max(r.max_residual());
        runs.push(json!({ "L": l, "result": r }));
    }
    let mut out = Output::new(opts)?;
    out.write("resum.csv", &csv)?;
    out.write_json(
        "resum.json",
        &json!({ "phi": cfg.phi, "epsilon": eps.value(), "order": order, "max_residual": worst, "runs": runs }),
    )?;
    if worst > RESUM_TOL {
        return Err(CliError::CheckFailed(format!(
            "max per-order residual {worst:e} exceeds {RESUM_TOL:e}"
        )));
    }
    let line = format!(
        "resum: order {order} at {} cutoffs, max per-order residual {worst:.3e} <= {RESUM_TOL:e}",
        cutoffs.len()
    );
    Ok(out.summary(line, Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tamper_keeps_unitarity() {
        let s = DMatrix::<Complex64>::identity(4, 4);
        let t = tamper(&s, 1e-3);
        assert!((t.adjoint() * &t - DMatrix::identity(4, 4)).norm() < 1e-15);
        assert!((t - s).norm() > 1e-4);
    }

    #[test]
    fn default_fixtures_have_expected_verdicts() {
        let (suite, verdicts) = class_a_suite(&default_fixtures(Coupling::new(0.1).unwrap()));
        assert!(suite.passed, "{:?}", suite.failures);
        assert_eq!(verdicts.len(), 6);
    }

    #[test]
    fn suites_pass_with_small_case_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(eigen_suite(&mut rng, 20).passed);
        assert!(scattering_suite(&mut rng, 20, None).passed);
        assert!(modulus_suite(&mut rng, 20).passed);
        let faulty = scattering_suite(&mut rng, 4, Some(1e-3));
        assert!(!faulty.passed);
        assert!(faulty.failures[0].message.contains("commutation defect"));
    }
}
