//! Integration of `F(P, Q)` over the Euclidean 4-ball `|P| <= L`.
//!
//! Points are parameterized as
//! `P = r (cos chi, sin chi cos theta, sin chi sin theta cos phi, sin chi sin theta sin phi)`
//! with volume element `r^3 sin^2 chi sin theta dr dchi dtheta dphi`. The
//! radial Gauss-Legendre rule is applied in `u` with `r = L u^2`.
//!
//! Tensor rules split the work into cells keyed by (radial node, chi node).
//! Cell sums are computed independently and combined by a pairwise tree
//! reduction in cell order, so results do not depend on the thread count.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrand::{screen_singularities, EvalContext, EvalError, IntegrandExpr, SingularityReport};
use crate::spectral::Momentum3;

pub const DEFAULT_RADIAL_ORDER: usize = 64;
pub const DEFAULT_ANGULAR_ORDERS: [usize; 3] = [32, 32, 32];
pub const MIN_MONTE_CARLO_SAMPLES: usize = 1000;
const MONTE_CARLO_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CutoffError {
    #[error("cutoff radius must be finite and positive, got {0}")]
    InvalidCutoff(f64),
    #[error("invalid shell [{inner}, {outer}]")]
    InvalidShell { inner: f64, outer: f64 },
    #[error("invalid quadrature: {0}")]
    InvalidQuadrature(String),
    #[error("cutoff grid must be strictly ascending and positive")]
    UnsortedGrid,
    #[error("integrand is near-singular on the ball: {0}")]
    Singular(SingularityReport),
    #[error("integrand evaluation failed at P = {point:?}: {source}")]
    Evaluation { point: [f64; 4], source: EvalError },
    #[error("radial integrand is not integrable on [0, {cutoff}]: {reason}")]
    NotIntegrable { cutoff: f64, reason: String },
    #[error("malformed samples table at line {line}: {reason}")]
    Table { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, CutoffError>;

/// The ball `|P| <= L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallRegion {
    cutoff: f64,
}

impl BallRegion {
    pub fn new(cutoff: f64) -> Result<Self> {
        if cutoff.is_finite() && cutoff > 0.0 {
            Ok(Self { cutoff })
        } else {
            Err(CutoffError::InvalidCutoff(cutoff))
        }
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn volume(&self) -> f64 {
        0.5 * PI * PI * self.cutoff.powi(4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum QuadratureSpec {
    TensorGauss { radial: usize, angular: [usize; 3] },
    MonteCarlo { samples: usize, seed: u64 },
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec::TensorGauss {
            radial: DEFAULT_RADIAL_ORDER,
            angular: DEFAULT_ANGULAR_ORDERS,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            QuadratureSpec::TensorGauss { radial, angular } => {
                if radial < 2 || angular.iter().any(|&n| n < 2) {
                    return Err(CutoffError::InvalidQuadrature(format!(
                        "tensor orders must be >= 2, got radial {radial}, angular {angular:?}"
                    )));
                }
            }
            QuadratureSpec::MonteCarlo { samples, .. } => {
                if samples < MIN_MONTE_CARLO_SAMPLES {
                    return Err(CutoffError::InvalidQuadrature(format!(
                        "monte-carlo needs at least {MIN_MONTE_CARLO_SAMPLES} samples, got {samples}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Orders scaled by 1.5 (rounded up), used for the error estimate.
    fn refined(&self) -> Self {
        match *self {
            QuadratureSpec::TensorGauss { radial, angular } => QuadratureSpec::TensorGauss {
                radial: (3 * radial).div_ceil(2),
                angular: angular.map(|n| (3 * n).div_ceil(2)),
            },
            mc => mc,
        }
    }
}

/// Real and imaginary parts of a complex integrand. A missing part is zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComplexIntegrand {
    pub re: Option<IntegrandExpr>,
    pub im: Option<IntegrandExpr>,
}

impl ComplexIntegrand {
    pub fn new(re: Option<IntegrandExpr>, im: Option<IntegrandExpr>) -> Self {
        Self { re, im }
    }

    fn parts(&self) -> impl Iterator<Item = &IntegrandExpr> {
        self.re.iter().chain(self.im.iter())
    }

    #[inline]
    fn eval_fast(&self, ctx: &EvalContext) -> (f64, f64) {
        let re = self.re.as_ref().map_or(0.0, |e| e.root().eval_unchecked(ctx));
        let im = self.im.as_ref().map_or(0.0, |e| e.root().eval_unchecked(ctx));
        (re, im)
    }

    /// Re-evaluates with full checks to name the failing subexpression.
    fn diagnose(&self, ctx: &EvalContext) -> CutoffError {
        for part in self.parts() {
            if let Err(source) = part.evaluate(ctx) {
                return CutoffError::Evaluation { point: ctx.p, source };
            }
        }
        CutoffError::Evaluation {
            point: ctx.p,
            source: EvalError::NonFinite {
                subexpression: "integrand".into(),
            },
        }
    }
}

/// External momentum `(q0, q)` and mass bound into every evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Kinematics {
    pub q0: f64,
    pub q: Momentum3,
    pub m: f64,
}

impl Kinematics {
    pub fn new(q0: f64, q: Momentum3, m: f64) -> Self {
        Self { q0, q, m }
    }

    fn four_vector(&self) -> [f64; 4] {
        [self.q0, self.q.q1, self.q.q2, self.q.q3]
    }

    fn context(&self, cutoff: f64) -> EvalContext {
        EvalContext {
            p: [0.0; 4],
            q: self.four_vector(),
            m: self.m,
            cutoff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: Complex64,
    /// Difference against the refined rule (tensor) or standard error
    /// (Monte-Carlo).
    pub error: f64,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn mapped_rule(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    x.iter().zip(&w).map(|(&x, &w)| (mid + half * x, half * w)).collect()
}

/// Sums a slice by recursive halving; the association depends only on the length.
pub fn pairwise_sum(values: &[(f64, f64)]) -> (f64, f64) {
    match values.len() {
        0 => (0.0, 0.0),
        1 => values[0],
        n => {
            let (a, b) = values.split_at(n / 2);
            let (x, y) = (pairwise_sum(a), pairwise_sum(b));
            (x.0 + y.0, x.1 + y.1)
        }
    }
}

fn tensor_shell(
    f: &ComplexIntegrand,
    kin: &Kinematics,
    cutoff: f64,
    inner: f64,
    outer: f64,
    radial: usize,
    angular: [usize; 3],
) -> Result<Complex64> {
    // r = inner + (outer - inner) u^2 clusters nodes toward the inner
    // radius, where rational integrands vary on the mass scale.
    let span = outer - inner;
    let r_rule: Vec<(f64, f64)> = mapped_rule(radial, 0.0, 1.0)
        .into_iter()
        .map(|(u, w)| (inner + span * u * u, 2.0 * span * u * w))
        .collect();
    let chi_rule: Vec<(f64, f64, f64)> = mapped_rule(angular[0], 0.0, PI)
        .into_iter()
        .map(|(x, w)| {
            let (s, c) = x.sin_cos();
            (c, s, w * s * s)
        })
        .collect();
    let theta_rule: Vec<(f64, f64, f64)> = mapped_rule(angular[1], 0.0, PI)
        .into_iter()
        .map(|(x, w)| {
            let (s, c) = x.sin_cos();
            (c, s, w * s)
        })
        .collect();
    let phi_rule: Vec<(f64, f64, f64)> = mapped_rule(angular[2], 0.0, 2.0 * PI)
        .into_iter()
        .map(|(x, w)| {
            let (s, c) = x.sin_cos();
            (c, s, w)
        })
        .collect();

    let base = kin.context(cutoff);
    let n_chi = chi_rule.len();
    let cells: Vec<(f64, f64)> = (0..r_rule.len() * n_chi)
        .into_par_iter()
        .map(|cell| {
            let (r, wr) = r_rule[cell / n_chi];
            let (cc, sc, wc) = chi_rule[cell % n_chi];
            let mut ctx = base;
            ctx.p[0] = r * cc;
            let rs = r * sc;
            let (mut acc_re, mut acc_im) = (0.0, 0.0);
            for &(ct, st, wt) in &theta_rule {
                ctx.p[1] = rs * ct;
                let rst = rs * st;
                let (mut row_re, mut row_im) = (0.0, 0.0);
                for &(cp, sp, wp) in &phi_rule {
                    ctx.p[2] = rst * cp;
                    ctx.p[3] = rst * sp;
                    let (re, im) = f.eval_fast(&ctx);
                    if !(re.is_finite() && im.is_finite()) {
                        return Err(f.diagnose(&ctx));
                    }
                    row_re += wp * re;
                    row_im += wp * im;
                }
                acc_re += wt * row_re;
                acc_im += wt * row_im;
            }
            let w = wr * r * r * r * wc;
            Ok((w * acc_re, w * acc_im))
        })
        .collect::<Result<_>>()?;
    let (re, im) = pairwise_sum(&cells);
    Ok(Complex64::new(re, im))
}

fn monte_carlo_shell(
    f: &ComplexIntegrand,
    kin: &Kinematics,
    cutoff: f64,
    inner: f64,
    outer: f64,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    let (r0, r1) = (inner.powi(4), outer.powi(4));
    let volume = 0.5 * PI * PI * (r1 - r0);
    let base = kin.context(cutoff);
    let chunks = samples.div_ceil(MONTE_CARLO_CHUNK);
    // (sum re, sum im), (sum re^2 + im^2, 0) per chunk
    let partial: Vec<[(f64, f64); 2]> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let count = MONTE_CARLO_CHUNK.min(samples - chunk * MONTE_CARLO_CHUNK);
            let mut ctx = base;
            let (mut s_re, mut s_im, mut s_sq) = (0.0, 0.0, 0.0);
            for _ in 0..count {
                let u: f64 = rng.random();
                let r = (r0 + u * (r1 - r0)).powf(0.25);
                let dir: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
                let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
                ctx.p = dir.map(|x| r * x / norm);
                let (re, im) = f.eval_fast(&ctx);
                if !(re.is_finite() && im.is_finite()) {
                    return Err(f.diagnose(&ctx));
                }
                s_re += re;
                s_im += im;
                s_sq += re * re + im * im;
            }
            Ok([(s_re, s_im), (s_sq, 0.0)])
        })
        .collect::<Result<_>>()?;
    let sums: Vec<(f64, f64)> = partial.iter().map(|p| p[0]).collect();
    let squares: Vec<(f64, f64)> = partial.iter().map(|p| p[1]).collect();
    let (s_re, s_im) = pairwise_sum(&sums);
    let (s_sq, _) = pairwise_sum(&squares);
    let n = samples as f64;
    let mean = Complex64::new(s_re / n, s_im / n);
    let variance = (s_sq / n - mean.norm_sqr()).max(0.0) * n / (n - 1.0);
    Ok(Estimate {
        value: mean * volume,
        error: volume * (variance / n).sqrt(),
    })
}

fn screen(f: &ComplexIntegrand, kin: &Kinematics, cutoff: f64) -> Result<()> {
    for part in f.parts() {
        let report = screen_singularities(part, kin.four_vector(), kin.m, cutoff);
        if report.flagged {
            return Err(CutoffError::Singular(report));
        }
    }
    Ok(())
}

/// Integral over the shell `inner <= |P| <= outer`; `L` in the integrand
/// is bound to `cutoff`.
pub fn integrate_shell(
    f: &ComplexIntegrand,
    kin: &Kinematics,
    cutoff: f64,
    inner: f64,
    outer: f64,
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    if !(inner.is_finite() && outer.is_finite() && 0.0 <= inner && inner < outer) {
        return Err(CutoffError::InvalidShell { inner, outer });
    }
    spec.validate()?;
    match *spec {
        QuadratureSpec::TensorGauss { radial, angular } => {
            screen(f, kin, outer.max(cutoff))?;
            let coarse = tensor_shell(f, kin, cutoff, inner, outer, radial, angular)?;
            let QuadratureSpec::TensorGauss { radial, angular } = spec.refined() else {
                unreachable!()
            };
            let fine = tensor_shell(f, kin, cutoff, inner, outer, radial, angular)?;
            Ok(Estimate {
                value: coarse,
                error: (fine - coarse).norm(),
            })
        }
        QuadratureSpec::MonteCarlo { samples, seed } => monte_carlo_shell(f, kin, cutoff, inner, outer, samples, seed),
    }
}

/// `∫_{|P| <= L} F(P, Q) d^4P`.
pub fn integrate_ball(
    f: &ComplexIntegrand,
    kin: &Kinematics,
    region: BallRegion,
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    integrate_shell(f, kin, region.cutoff, 0.0, region.cutoff, spec)
}

/// `2 pi^2 ∫_0^L r^3 f(r) dr` by adaptive Gauss-Kronrod (7/15).
///
/// Independent of the tensor rule; for radially symmetric integrands it
/// equals the 4-ball integral.
pub fn radial_oracle<F>(f: F, cutoff: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    BallRegion::new(cutoff)?;
    let g = |r: f64| r * r * r * f(r);
    let (whole, _) = kronrod15(&g, 0.0, cutoff);
    let scale = whole.abs().max(f64::MIN_POSITIVE);
    let mut total = 0.0;
    let mut stack = vec![(0.0, cutoff, 0u32)];
    while let Some((a, b, depth)) = stack.pop() {
        let (k, err) = kronrod15(&g, a, b);
        if !k.is_finite() || !err.is_finite() {
            return Err(CutoffError::NotIntegrable {
                cutoff,
                reason: format!("non-finite values on [{a}, {b}]"),
            });
        }
        if err <= 1e-14 * scale * (b - a) / cutoff || err <= 1e-15 * k.abs() {
            total += k;
        } else if depth >= 60 {
            return Err(CutoffError::NotIntegrable {
                cutoff,
                reason: format!("no convergence near [{a:e}, {b:e}]"),
            });
        } else {
            let mid = 0.5 * (a + b);
            stack.push((mid, b, depth + 1));
            stack.push((a, mid, depth + 1));
        }
    }
    Ok(2.0 * PI * PI * total)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<G: Fn(f64) -> f64>(g: &G, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = g(mid);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = g(mid - dx) + g(mid + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// `a(q, L_i)` on an ascending grid of cutoffs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffSamples {
    pub kinematics: Kinematics,
    pub cutoffs: Vec<f64>,
    pub values: Vec<Complex64>,
    pub errors: Vec<f64>,
}

impl CutoffSamples {
    pub fn new(kinematics: Kinematics, cutoffs: Vec<f64>, values: Vec<Complex64>, errors: Vec<f64>) -> Result<Self> {
        check_grid(&cutoffs)?;
        if values.len() != cutoffs.len() || errors.len() != cutoffs.len() {
            return Err(CutoffError::Table {
                line: 0,
                reason: "column lengths differ".into(),
            });
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(CutoffError::Table {
                line: 0,
                reason: "non-finite value".into(),
            });
        }
        Ok(Self {
            kinematics,
            cutoffs,
            values,
            errors,
        })
    }

    /// Samples of `f(L)` with zero error bars.
    pub fn from_fn<F: Fn(f64) -> Complex64>(cutoffs: Vec<f64>, f: F) -> Result<Self> {
        let values = cutoffs.iter().map(|&l| f(l)).collect();
        let errors = vec![0.0; cutoffs.len()];
        Self::new(Kinematics::default(), cutoffs, values, errors)
    }

    pub fn len(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cutoffs.is_empty()
    }

    /// CSV with header `L,re,im,err`, 17 significant digits, LF endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("L,re,im,err\n");
        for ((l, v), e) in self.cutoffs.iter().zip(&self.values).zip(&self.errors) {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt17(*l),
                fmt17(v.re),
                fmt17(v.im),
                fmt17(*e)
            ));
        }
        out
    }

    /// Reads the `to_csv` layout; the `err` column is optional.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let header: Vec<&str> = match lines.next() {
            Some((_, h)) => h.split(',').map(str::trim).collect(),
            None => {
                return Err(CutoffError::Table {
                    line: 1,
                    reason: "empty table".into(),
                })
            }
        };
        let column = |name: &str| header.iter().position(|h| *h == name);
        let (Some(cl), Some(cre), Some(cim)) = (column("L"), column("re"), column("im")) else {
            return Err(CutoffError::Table {
                line: 1,
                reason: "header must contain L, re, im".into(),
            });
        };
        let cerr = column("err");
        let (mut cutoffs, mut values, mut errors) = (Vec::new(), Vec::new(), Vec::new());
        for (idx, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let get = |c: usize| -> Result<f64> {
                fields
                    .get(c)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| CutoffError::Table {
                        line: idx + 1,
                        reason: format!("missing or invalid field {c}"),
                    })
            };
            cutoffs.push(get(cl)?);
            values.push(Complex64::new(get(cre)?, get(cim)?));
            errors.push(match cerr {
                Some(c) => get(c)?,
                None => 0.0,
            });
        }
        Self::new(Kinematics::default(), cutoffs, values, errors)
    }
}

/// `{:e}` with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn check_grid(grid: &[f64]) -> Result<()> {
    let positive = grid.iter().all(|&l| l.is_finite() && l > 0.0);
    let ascending = grid.windows(2).all(|w| w[0] < w[1]);
    if positive && ascending {
        Ok(())
    } else {
        Err(CutoffError::UnsortedGrid)
    }
}

/// `start * ratio^k` for `k = 0..count`.
pub fn geometric_grid(start: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start * ratio.powi(k as i32)).collect()
}

pub fn sample_over_cutoffs(
    f: &ComplexIntegrand,
    kin: &Kinematics,
    grid: &[f64],
    spec: &QuadratureSpec,
) -> Result<CutoffSamples> {
    check_grid(grid)?;
    let mut values = Vec::with_capacity(grid.len());
    let mut errors = Vec::with_capacity(grid.len());
    for &l in grid {
        let est = integrate_ball(f, kin, BallRegion::new(l)?, spec)?;
        values.push(est.value);
        errors.push(est.error);
    }
    CutoffSamples::new(*kin, grid.to_vec(), values, errors)
}

impl fmt::Display for Estimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ± {:.3e}", self.value, self.error)
    }
}
