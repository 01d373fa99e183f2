//! Deviation factors `U0(L) = exp(i [sum_t c_t b_t(L) + gauge])` with
//! `b_t` one of `L^2`, `L`, `ln^p L`, and the regularized series
//! `U0(L)^{-1} d(L)`.
//!
//! Each exponent term stores its raw coefficient together with the power of
//! the coupling it carries, so `c_t = coefficient * epsilon^eps_power`. The
//! power is needed to expand `U0^{-1} d` order by order in the coupling.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cutoff::CutoffSamples;
use crate::fitter::AsymptoticModel;

pub const DEFAULT_COUPLING_BOUND: f64 = 1.0;
/// Tolerance on `|psi_0 - 1|` in the Coulomb-type resummation.
pub const LEADING_COEFFICIENT_TOL: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeviationError {
    #[error("coupling {epsilon} outside [-{bound}, {bound}]")]
    InvalidCoupling { epsilon: f64, bound: f64 },
    #[error("model coefficients must be finite reals: {0}")]
    Domain(String),
    #[error("cutoff must be finite and positive, got {0}")]
    InvalidCutoff(f64),
    #[error("series coefficient a_{order} has no sample at L = {cutoff}")]
    NotSampled { order: usize, cutoff: f64 },
    #[error("leading coefficient psi_0 must equal 1, got {0}")]
    LeadingCoefficient(f64),
    #[error("truncation order {order} needs {order} + 1 coefficients, got {available}")]
    InvalidOrder { order: usize, available: usize },
    #[error("cutoff grid must be ascending with at least two points")]
    InvalidGrid,
}

pub type Result<T> = std::result::Result<T, DeviationError>;

/// The small expansion parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling(f64);

impl Coupling {
    pub fn new(epsilon: f64) -> Result<Self> {
        Self::with_bound(epsilon, DEFAULT_COUPLING_BOUND)
    }

    pub fn with_bound(epsilon: f64, bound: f64) -> Result<Self> {
        if epsilon.is_finite() && epsilon.abs() <= bound {
            Ok(Self(epsilon))
        } else {
            Err(DeviationError::InvalidCoupling { epsilon, bound })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentBasis {
    L2,
    L,
    /// `ln^p L` with `p >= 1`.
    LnPow(u32),
}

impl ExponentBasis {
    pub fn eval(self, l: f64) -> f64 {
        match self {
            ExponentBasis::L2 => l * l,
            ExponentBasis::L => l,
            ExponentBasis::LnPow(p) => l.ln().powi(p as i32),
        }
    }

    /// `b(L + L0) - b(L)` without cancellation.
    pub fn increment(self, l: f64, l0: f64) -> f64 {
        match self {
            ExponentBasis::L2 => l0 * (2.0 * l + l0),
            ExponentBasis::L => l0,
            ExponentBasis::LnPow(p) => {
                let (a, b) = ((l + l0).ln(), l.ln());
                let diff = (l0 / l).ln_1p();
                let sum: f64 = (0..p).map(|j| a.powi((p - 1 - j) as i32) * b.powi(j as i32)).sum();
                diff * sum
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentTerm {
    pub basis: ExponentBasis,
    pub eps_power: u32,
    pub coefficient: f64,
}

/// A unit-modulus factor `exp(i [sum_t c_t b_t(L) + gauge])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "FactorRepr", try_from = "FactorRepr")]
pub struct DeviationFactor {
    epsilon: f64,
    terms: Vec<ExponentTerm>,
    gauge: f64,
}

/// JSON layout: the effective coefficients plus the term structure.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FactorRepr {
    #[serde(rename = "c_L2", default)]
    c_l2: f64,
    #[serde(rename = "c_L", default)]
    c_l: f64,
    #[serde(default)]
    c_ln: Vec<f64>,
    #[serde(default)]
    gauge: f64,
    #[serde(default)]
    epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    terms: Option<Vec<ExponentTerm>>,
}

impl From<DeviationFactor> for FactorRepr {
    fn from(f: DeviationFactor) -> Self {
        Self {
            c_l2: f.c_l2(),
            c_l: f.c_l(),
            c_ln: f.c_ln(),
            gauge: f.gauge,
            epsilon: f.epsilon,
            terms: Some(f.terms),
        }
    }
}

impl TryFrom<FactorRepr> for DeviationFactor {
    type Error = DeviationError;

    fn try_from(r: FactorRepr) -> Result<Self> {
        let factor = match r.terms {
            Some(terms) => DeviationFactor::from_terms(r.epsilon, terms, r.gauge)?,
            None => {
                let mut f = DeviationFactor::from_exponents(r.c_l2, r.c_l, &r.c_ln, r.gauge)?;
                f.epsilon = r.epsilon;
                f
            }
        };
        Ok(factor)
    }
}

/// Maps a phase to `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

impl DeviationFactor {
    pub fn identity() -> Self {
        Self {
            epsilon: 0.0,
            terms: Vec::new(),
            gauge: 0.0,
        }
    }

    pub fn from_terms(epsilon: f64, terms: Vec<ExponentTerm>, gauge: f64) -> Result<Self> {
        if !epsilon.is_finite() || !gauge.is_finite() {
            return Err(DeviationError::Domain("epsilon and gauge must be finite".into()));
        }
        for t in &terms {
            if !t.coefficient.is_finite() {
                return Err(DeviationError::Domain(format!(
                    "coefficient {} of {:?}",
                    t.coefficient, t.basis
                )));
            }
            if t.basis == ExponentBasis::LnPow(0) {
                return Err(DeviationError::Domain(
                    "ln^0 terms belong to the convergent remainder".into(),
                ));
            }
        }
        Ok(Self {
            epsilon,
            terms,
            gauge: wrap_phase(gauge),
        })
    }

    /// Coefficients given with their coupling powers already applied.
    /// `c_ln[p - 1]` multiplies `ln^p L`.
    pub fn from_exponents(c_l2: f64, c_l: f64, c_ln: &[f64], gauge: f64) -> Result<Self> {
        let mut terms = vec![
            ExponentTerm {
                basis: ExponentBasis::L2,
                eps_power: 0,
                coefficient: c_l2,
            },
            ExponentTerm {
                basis: ExponentBasis::L,
                eps_power: 0,
                coefficient: c_l,
            },
        ];
        terms.extend(c_ln.iter().enumerate().map(|(i, &c)| ExponentTerm {
            basis: ExponentBasis::LnPow(i as u32 + 1),
            eps_power: 0,
            coefficient: c,
        }));
        terms.retain(|t| t.coefficient != 0.0);
        Self::from_terms(0.0, terms, gauge)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn terms(&self) -> &[ExponentTerm] {
        &self.terms
    }

    pub fn gauge(&self) -> f64 {
        self.gauge
    }

    fn effective(&self, t: &ExponentTerm) -> f64 {
        t.coefficient * self.epsilon.powi(t.eps_power as i32)
    }

    fn effective_sum(&self, pred: impl Fn(ExponentBasis) -> bool) -> f64 {
        self.terms
            .iter()
            .filter(|t| pred(t.basis))
            .map(|t| self.effective(t))
            .sum()
    }

    pub fn c_l2(&self) -> f64 {
        self.effective_sum(|b| b == ExponentBasis::L2)
    }

    pub fn c_l(&self) -> f64 {
        self.effective_sum(|b| b == ExponentBasis::L)
    }

    /// Effective `ln^p L` coefficients for `p = 1..=max_p`.
    pub fn c_ln(&self) -> Vec<f64> {
        let max_p = self
            .terms
            .iter()
            .filter_map(|t| match t.basis {
                ExponentBasis::LnPow(p) => Some(p),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        (1..=max_p)
            .map(|p| self.effective_sum(|b| b == ExponentBasis::LnPow(p)))
            .collect()
    }

    /// Exponent without the gauge phase.
    pub fn exponent(&self, l: f64) -> f64 {
        self.terms.iter().map(|t| self.effective(t) * t.basis.eval(l)).sum()
    }

    pub fn evaluate(&self, l: f64) -> Complex64 {
        evaluate_factor(self, l)
    }

    /// True iff only logarithmic terms survive, i.e. `c_L2 = c_L = 0`.
    pub fn is_class_a(&self) -> bool {
        self.c_l2() == 0.0 && self.c_l() == 0.0
    }

    /// Product of two factors. The coupling of `self` is kept unless it is zero.
    pub fn compose(&self, other: &DeviationFactor) -> Result<DeviationFactor> {
        let epsilon = if self.epsilon != 0.0 {
            self.epsilon
        } else {
            other.epsilon
        };
        if self.epsilon != 0.0 && other.epsilon != 0.0 && self.epsilon != other.epsilon {
            return Err(DeviationError::Domain("factors built with different couplings".into()));
        }
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Self::from_terms(epsilon, terms, self.gauge + other.gauge)
    }
}

/// `U0(L) = exp(i [exponent(L) + gauge])`.
pub fn evaluate_factor(u0: &DeviationFactor, l: f64) -> Complex64 {
    Complex64::cis(u0.exponent(l) + u0.gauge)
}

/// Multiplies `U0` by the constant phase `e^{i gamma}`.
pub fn gauge_multiply(u0: &DeviationFactor, gamma: f64) -> Result<DeviationFactor> {
    if !gamma.is_finite() {
        return Err(DeviationError::Domain(format!("gauge phase {gamma}")));
    }
    let mut out = u0.clone();
    out.gauge = wrap_phase(u0.gauge + gamma);
    Ok(out)
}

/// Deviation factor absorbing the divergent terms of `model`, fitted to the
/// coefficient of `epsilon^order`. Constant terms are left out.
pub fn factor_from_model(model: &AsymptoticModel, epsilon: Coupling, order: u32) -> Result<DeviationFactor> {
    if !model.is_real() {
        return Err(DeviationError::Domain(format!("{model:?}")));
    }
    let term = |basis, coefficient| ExponentTerm {
        basis,
        eps_power: order,
        coefficient,
    };
    let terms = match model {
        AsymptoticModel::Log { phi, .. } => vec![term(ExponentBasis::LnPow(1), *phi)],
        AsymptoticModel::PowerLog { phi, psi, nu, .. } => vec![
            term(ExponentBasis::L2, *phi),
            term(ExponentBasis::L, *psi),
            term(ExponentBasis::LnPow(1), *nu),
        ],
        AsymptoticModel::PolyLog { coefficients } => coefficients
            .iter()
            .enumerate()
            .skip(1)
            .map(|(p, &c)| term(ExponentBasis::LnPow(p as u32), c))
            .collect(),
    };
    DeviationFactor::from_terms(epsilon.value(), terms, 0.0)
}

/// Poly-logarithmic coefficients of several perturbation orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyLogOrder {
    pub order: u32,
    /// `coefficients[p]` multiplies `ln^p L`.
    pub coefficients: Vec<f64>,
}

/// Factor with `c_ln,p = sum_m epsilon^m psi(p, m)` over the given orders.
pub fn factor_from_table(table: &[PolyLogOrder], epsilon: Coupling) -> Result<DeviationFactor> {
    let mut factor = DeviationFactor::from_terms(epsilon.value(), Vec::new(), 0.0)?;
    for row in table {
        let model = AsymptoticModel::PolyLog {
            coefficients: row.coefficients.clone(),
        };
        factor = factor.compose(&factor_from_model(&model, epsilon, row.order)?)?;
    }
    Ok(factor)
}

/// `a(L) - i * (divergent part of the model)` pointwise.
pub fn regularize_coefficient(samples: &CutoffSamples, model: &AsymptoticModel) -> CutoffSamples {
    let mut out = samples.clone();
    for (v, &l) in out.values.iter_mut().zip(&samples.cutoffs) {
        *v -= Complex64::new(0.0, model.divergent_bracket(l));
    }
    out
}

/// A single series coefficient `a_m`, either constant or sampled over `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesCoefficient {
    Constant(Complex64),
    Sampled(CutoffSamples),
}

impl SeriesCoefficient {
    fn value_at(&self, l: f64, order: usize) -> Result<Complex64> {
        match self {
            SeriesCoefficient::Constant(c) => Ok(*c),
            SeriesCoefficient::Sampled(s) => s
                .cutoffs
                .iter()
                .position(|&x| (x - l).abs() <= 1e-12 * l)
                .map(|i| s.values[i])
                .ok_or(DeviationError::NotSampled { order, cutoff: l }),
        }
    }
}

/// `d(L) = 1 + sum_{m=1..N} epsilon^m a_m(L)`; `coefficients[m - 1]` is `a_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTruncation {
    pub coefficients: Vec<SeriesCoefficient>,
}

impl SeriesTruncation {
    pub fn new(coefficients: Vec<SeriesCoefficient>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(DeviationError::InvalidOrder { order: 1, available: 0 });
        }
        Ok(Self { coefficients })
    }

    pub fn constants(values: &[Complex64]) -> Result<Self> {
        Self::new(values.iter().copied().map(SeriesCoefficient::Constant).collect())
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    /// `[1, a_1(L), ..., a_N(L)]`.
    pub fn values_at(&self, l: f64) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::new(1.0, 0.0)];
        for (i, c) in self.coefficients.iter().enumerate() {
            out.push(c.value_at(l, i + 1)?);
        }
        Ok(out)
    }
}

/// Value of `U0^{-1} d` at one cutoff and its coupling expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizedSeries {
    pub cutoff: f64,
    pub value: Complex64,
    /// `tilde a_m` for `m = 0..=N`, with `tilde a_0` the zeroth order term.
    pub coefficients: Vec<Complex64>,
}

/// Coefficients of `U0(L)^{-1}` as a power series in the coupling, to order `n`.
fn inverse_factor_series(u0: &DeviationFactor, l: f64, n: usize) -> Vec<Complex64> {
    // exp(sum_k S_k eps^k) with S_k = -i sum over terms of power k.
    let mut s = vec![Complex64::new(0.0, 0.0); n + 1];
    let mut s0 = -u0.gauge;
    for t in u0.terms() {
        let k = t.eps_power as usize;
        let v = t.coefficient * t.basis.eval(l);
        if k == 0 {
            s0 -= v;
        } else if k <= n {
            s[k] -= Complex64::new(0.0, v);
        }
    }
    let mut e = vec![Complex64::new(0.0, 0.0); n + 1];
    e[0] = Complex64::new(1.0, 0.0);
    for m in 1..=n {
        let acc: Complex64 = (1..=m).map(|k| s[k] * e[m - k] * k as f64).sum();
        e[m] = acc / m as f64;
    }
    let lead = Complex64::cis(s0);
    e.iter().map(|x| x * lead).collect()
}

/// `tilde d(L) = U0(L)^{-1} (1 + sum epsilon^m a_m(L))` together with the
/// order-by-order coefficients of the product truncated at `N`.
pub fn regularized_series(
    trunc: &SeriesTruncation,
    u0: &DeviationFactor,
    epsilon: Coupling,
    l: f64,
) -> Result<RegularizedSeries> {
    if !(l.is_finite() && l > 0.0) {
        return Err(DeviationError::InvalidCutoff(l));
    }
    let coupled = u0.terms.iter().any(|t| t.eps_power > 0);
    if coupled && u0.epsilon != epsilon.value() {
        return Err(DeviationError::Domain(format!(
            "factor built with coupling {}, series uses {}",
            u0.epsilon,
            epsilon.value()
        )));
    }
    let a = trunc.values_at(l)?;
    let n = trunc.order();
    let eps = epsilon.value();
    let d: Complex64 = a.iter().enumerate().map(|(m, am)| am * eps.powi(m as i32)).sum();
    let value = d / evaluate_factor(u0, l);
    let inv = inverse_factor_series(u0, l, n);
    let coefficients = (0..=n).map(|m| (0..=m).map(|j| inv[j] * a[m - j]).sum()).collect();
    Ok(RegularizedSeries {
        cutoff: l,
        value,
        coefficients,
    })
}

/// Ratio curve `U0(L + L0) / U0(L)` and the class-A verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassACheck {
    /// `c_L2 = c_L = 0`; this decides the verdict.
    pub verdict: bool,
    /// Diagnostic: `|r(L) - 1|` is non-increasing over the second half of the grid.
    pub ratio_decreasing: bool,
    pub cutoffs: Vec<f64>,
    pub ratios: Vec<Complex64>,
    pub deviations: Vec<f64>,
}

pub fn class_a_check(u0: &DeviationFactor, l0: f64, grid: &[f64]) -> Result<ClassACheck> {
    if !(l0.is_finite() && l0 > 0.0) {
        return Err(DeviationError::InvalidCutoff(l0));
    }
    if grid.len() < 2 || grid.iter().any(|&l| !(l.is_finite() && l > 0.0)) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DeviationError::InvalidGrid);
    }
    let increments: Vec<f64> = grid
        .iter()
        .map(|&l| {
            u0.terms()
                .iter()
                .map(|t| u0.effective(t) * t.basis.increment(l, l0))
                .sum()
        })
        .collect();
    let ratios: Vec<Complex64> = increments.iter().map(|&d| Complex64::cis(d)).collect();
    // |e^{id} - 1| = 2 |sin(d/2)| avoids cancellation for small d.
    let deviations: Vec<f64> = increments.iter().map(|&d| 2.0 * (0.5 * d).sin().abs()).collect();
    let tail = &deviations[grid.len() / 2..];
    let ratio_decreasing = tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 4.0 * f64::EPSILON));
    Ok(ClassACheck {
        verdict: u0.is_class_a(),
        ratio_decreasing,
        cutoffs: grid.to_vec(),
        ratios,
        deviations,
    })
}

/// Convergence diagnostics of a regularized coefficient sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    /// `|tilde a(L_max) - tilde a(L')|` with `L'` the grid point nearest `L_max / 2`.
    pub last_difference: f64,
    /// Successive differences `|tilde a(L_{i+1}) - tilde a(L_i)|`.
    pub differences: Vec<f64>,
    /// Differences shrink monotonically over the second half of the grid.
    pub shrinking: bool,
}

pub fn convergence_check(samples: &CutoffSamples) -> Result<Convergence> {
    let n = samples.len();
    if n < 2 {
        return Err(DeviationError::InvalidGrid);
    }
    let l_max = samples.cutoffs[n - 1];
    let half = samples.cutoffs[..n - 1]
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - 0.5 * l_max).abs().total_cmp(&(b.1 - 0.5 * l_max).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let differences: Vec<f64> = samples.values.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let tail = &differences[differences.len() / 2..];
    Ok(Convergence {
        last_difference: (samples.values[n - 1] - samples.values[half]).norm(),
        shrinking: tail.windows(2).all(|w| w[1] <= w[0]),
        differences,
    })
}

/// Output of the Coulomb-type resummation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resummation {
    /// `a_m(L)` for `m = 1..=N`.
    pub a: Vec<Complex64>,
    /// `1 + sum epsilon^m a_m(L)`.
    pub d: Complex64,
    /// `L^{-i epsilon phi} d(L)`.
    pub d_tilde: Complex64,
    /// Order-by-order coefficients of `L^{-i epsilon phi} d`, `m = 0..=N`.
    pub coefficients: Vec<Complex64>,
    /// `|coefficient_m - psi_m|`, `m = 0..=N`.
    pub residuals: Vec<f64>,
}

impl Resummation {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0f64, |m, r| m.max(*r))
    }
}

/// Builds `a_m = sum_k psi_{m-k} (i phi ln L)^k / k!` and checks that
/// `L^{-i epsilon phi}` times the series has coefficients `psi_m`.
pub fn resum_coulomb_series(psi: &[f64], phi: f64, epsilon: Coupling, order: usize, l: f64) -> Result<Resummation> {
    let Some(&psi0) = psi.first() else {
        return Err(DeviationError::InvalidOrder { order, available: 0 });
    };
    if (psi0 - 1.0).abs() > LEADING_COEFFICIENT_TOL {
        return Err(DeviationError::LeadingCoefficient(psi0));
    }
    if order == 0 || order >= psi.len() {
        return Err(DeviationError::InvalidOrder {
            order,
            available: psi.len(),
        });
    }
    if !(l.is_finite() && l > 0.0) {
        return Err(DeviationError::InvalidCutoff(l));
    }
    if !phi.is_finite() || psi.iter().any(|p| !p.is_finite()) {
        return Err(DeviationError::Domain("psi and phi must be finite".into()));
    }
    let x = Complex64::new(0.0, phi * l.ln());
    // powers[k] = x^k / k!
    let mut powers = vec![Complex64::new(1.0, 0.0); order + 1];
    for k in 1..=order {
        powers[k] = powers[k - 1] * x / k as f64;
    }
    let a: Vec<Complex64> = (1..=order)
        .map(|m| (0..=m).map(|k| powers[k] * psi[m - k]).sum())
        .collect();
    let u0 = DeviationFactor::from_terms(
        epsilon.value(),
        vec![ExponentTerm {
            basis: ExponentBasis::LnPow(1),
            eps_power: 1,
            coefficient: phi,
        }],
        0.0,
    )?;
    let trunc = SeriesTruncation::constants(&a)?;
    let series = regularized_series(&trunc, &u0, epsilon, l)?;
    let d = series.value * evaluate_factor(&u0, l);
    let residuals = series
        .coefficients
        .iter()
        .zip(psi)
        .map(|(c, &p)| (c - p).norm())
        .collect();
    Ok(Resummation {
        a,
        d,
        d_tilde: series.value,
        coefficients: series.coefficients,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::E;

    use super::*;
    use crate::cutoff::geometric_grid;

    fn eps(x: f64) -> Coupling {
        Coupling::new(x).unwrap()
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn coupling_bounds() {
        assert!(Coupling::new(0.5).is_ok());
        assert!(Coupling::new(1.5).is_err());
        assert!(Coupling::new(f64::NAN).is_err());
        assert!(Coupling::with_bound(1.5, 2.0).is_ok());
    }

    #[test]
    fn factor_from_model_examples() {
        let log = AsymptoticModel::Log { phi: 3.0, psi: 2.0 };
        let u = factor_from_model(&log, eps(0.1), 2).unwrap();
        assert!((u.c_ln()[0] - 0.03).abs() < 1e-16);
        assert_eq!((u.c_l2(), u.c_l()), (0.0, 0.0));
        let l = 7.5f64;
        assert!(close(u.evaluate(l), Complex64::cis(0.03 * l.ln()), 1e-15));

        let pl = AsymptoticModel::PowerLog {
            phi: 0.0,
            psi: 1.0,
            nu: 0.0,
            mu: 0.0,
        };
        for e in [0.05, 0.3, -0.7] {
            let u = factor_from_model(&pl, eps(e), 2).unwrap();
            for l in [1.0, 10.0, 123.0] {
                assert!(close(u.evaluate(l), Complex64::cis(e * e * l), 1e-13));
            }
        }

        let table = [PolyLogOrder {
            order: 2,
            coefficients: vec![0.0, 5.0, 0.0],
        }];
        let u = factor_from_table(&table, eps(0.1)).unwrap();
        assert!((u.c_ln()[0] - 0.05).abs() < 1e-16);
    }

    #[test]
    fn constant_terms_are_not_absorbed() {
        let pl = AsymptoticModel::PowerLog {
            phi: 0.0,
            psi: 0.0,
            nu: 0.0,
            mu: 9.0,
        };
        let u = factor_from_model(&pl, eps(0.2), 2).unwrap();
        assert_eq!(u.evaluate(50.0), Complex64::new(1.0, 0.0));
        let poly = AsymptoticModel::PolyLog {
            coefficients: vec![4.0, 0.0, 1.0],
        };
        let u = factor_from_model(&poly, eps(0.5), 2).unwrap();
        assert_eq!(u.c_ln(), vec![0.0, 0.25]);
    }

    #[test]
    fn non_finite_model_is_a_domain_error() {
        let bad = AsymptoticModel::Log {
            phi: f64::NAN,
            psi: 0.0,
        };
        assert!(matches!(
            factor_from_model(&bad, eps(0.1), 2),
            Err(DeviationError::Domain(_))
        ));
    }

    #[test]
    fn evaluate_factor_examples() {
        assert_eq!(DeviationFactor::identity().evaluate(3.0), Complex64::new(1.0, 0.0));
        let u = DeviationFactor::from_exponents(0.0, 0.0, &[0.03], 0.0).unwrap();
        assert!(close(u.evaluate(E), Complex64::cis(0.03), 1e-16));
        let u = DeviationFactor::from_exponents(0.0, 0.01, &[], 0.0).unwrap();
        assert!(close(u.evaluate(100.0), Complex64::cis(1.0), 1e-15));
    }

    #[test]
    fn gauge_examples() {
        let u = DeviationFactor::from_exponents(0.0, 0.3, &[0.1, -0.2], 0.4).unwrap();
        assert_eq!(gauge_multiply(&u, 0.0).unwrap(), u);
        let minus = gauge_multiply(&DeviationFactor::identity(), PI).unwrap();
        assert!(close(minus.evaluate(12.0), Complex64::new(-1.0, 0.0), 1e-15));
        assert_eq!(minus.gauge(), PI);
        assert_eq!(wrap_phase(-PI), PI);
        assert!((wrap_phase(3.0 * PI + 0.5) - (-PI + 0.5)).abs() < 1e-15);
        assert!(gauge_multiply(&u, f64::INFINITY).is_err());
    }

    #[test]
    fn class_a_examples() {
        let grid = geometric_grid(10.0, 2.0, 10);
        let log = factor_from_model(&AsymptoticModel::Log { phi: 3.0, psi: 0.0 }, eps(0.1), 2).unwrap();
        let c = class_a_check(&log, 1.0, &grid).unwrap();
        assert!(c.verdict && c.ratio_decreasing);
        for (d, l) in c.deviations.iter().zip(&grid) {
            assert!((d - 0.03 / l).abs() < 0.03 / l * 0.1);
        }

        let e = 0.3;
        let lin = DeviationFactor::from_exponents(0.0, e * e, &[], 0.0).unwrap();
        let c = class_a_check(&lin, 2.0, &grid).unwrap();
        assert!(!c.verdict);
        for r in &c.ratios {
            assert!(close(*r, Complex64::cis(e * e * 2.0), 1e-14));
        }

        let one = class_a_check(&DeviationFactor::identity(), 1.0, &grid).unwrap();
        assert!(one.verdict && one.deviations.iter().all(|&d| d == 0.0));

        for gamma in [0.3, -2.0, PI] {
            let g = gauge_multiply(&log, gamma).unwrap();
            assert!(class_a_check(&g, 1.0, &grid).unwrap().verdict);
            let g = gauge_multiply(&lin, gamma).unwrap();
            assert!(!class_a_check(&g, 2.0, &grid).unwrap().verdict);
        }
        assert!(class_a_check(&log, 1.0, &[3.0, 2.0]).is_err());
    }

    #[test]
    fn regularize_examples() {
        let grid = geometric_grid(10.0, 10f64.powf(0.125), 17);
        let s = CutoffSamples::from_fn(grid.clone(), |l| Complex64::new(0.0, 3.0 * l.ln() + 2.0)).unwrap();
        let r = regularize_coefficient(&s, &AsymptoticModel::Log { phi: 3.0, psi: 0.0 });
        assert!(r.values.iter().all(|v| close(*v, Complex64::new(0.0, 2.0), 1e-13)));

        let grid = geometric_grid(100.0, 10f64.powf(0.125), 17);
        let s = CutoffSamples::from_fn(grid, |l| {
            Complex64::new(0.0, 0.5 * l * l - l + 4.0 * l.ln() + 7.0 + 1.0 / l)
        })
        .unwrap();
        let model = AsymptoticModel::PowerLog {
            phi: 0.5,
            psi: -1.0,
            nu: 4.0,
            mu: 0.0,
        };
        let r = regularize_coefficient(&s, &model);
        for (v, l) in r.values.iter().zip(&r.cutoffs) {
            assert!(close(*v, Complex64::new(0.0, 7.0 + 1.0 / l), 1e-8 * l * l));
        }
        let conv = convergence_check(&r).unwrap();
        assert!(conv.shrinking);
    }

    #[test]
    fn regularized_series_examples() {
        let c = Complex64::new(0.3, -1.2);
        let trunc = SeriesTruncation::constants(&[c]).unwrap();
        let out = regularized_series(&trunc, &DeviationFactor::identity(), eps(0.1), 5.0).unwrap();
        assert!(close(out.value, 1.0 + 0.1 * c, 1e-15));
        assert_eq!(out.coefficients, vec![Complex64::new(1.0, 0.0), c]);

        let grid = geometric_grid(10.0, 2.0, 6);
        let a2 = CutoffSamples::from_fn(grid.clone(), |l| Complex64::new(0.0, 3.0 * l.ln() + 2.0)).unwrap();
        let a1 = Complex64::new(0.7, 0.0);
        let trunc =
            SeriesTruncation::new(vec![SeriesCoefficient::Constant(a1), SeriesCoefficient::Sampled(a2)]).unwrap();
        let u0 = factor_from_model(&AsymptoticModel::Log { phi: 3.0, psi: 2.0 }, eps(0.1), 2).unwrap();
        for &l in &grid {
            let out = regularized_series(&trunc, &u0, eps(0.1), l).unwrap();
            assert!(close(out.coefficients[1], a1, 1e-15));
            assert!(
                close(out.coefficients[2], Complex64::new(0.0, 2.0), 1e-13),
                "{}",
                out.coefficients[2]
            );
        }
        assert!(matches!(
            regularized_series(&trunc, &u0, eps(0.1), 11.0),
            Err(DeviationError::NotSampled { order: 2, .. })
        ));
        assert!(regularized_series(&trunc, &u0, eps(0.2), 10.0).is_err());
    }

    #[test]
    fn resummation_examples() {
        let psi = [1.0, 0.5, 0.25];
        let r = resum_coulomb_series(&psi, 0.0, eps(0.1), 2, 17.0).unwrap();
        for (a, p) in r.a.iter().zip(&psi[1..]) {
            assert_eq!(*a, Complex64::new(*p, 0.0));
        }
        let r = resum_coulomb_series(&psi, 2.0, eps(0.1), 2, E).unwrap();
        assert!(r.max_residual() <= 1e-15, "{:?}", r.residuals);
        // Agreement with the truncated psi series holds up to order epsilon^3.
        assert!(close(
            r.d_tilde,
            Complex64::new(1.0 + 0.05 + 0.0025, 0.0),
            10.0 * 0.1f64.powi(3)
        ));
        let r = resum_coulomb_series(&[1.0, -3.0, 2.0, 7.5], 1.3, eps(0.2), 3, 1.0).unwrap();
        for (a, p) in r.a.iter().zip([-3.0, 2.0, 7.5]) {
            assert!(close(*a, Complex64::new(p, 0.0), 0.0));
        }
        assert!(matches!(
            resum_coulomb_series(&[0.9, 1.0], 1.0, eps(0.1), 1, 2.0),
            Err(DeviationError::LeadingCoefficient(_))
        ));
        assert!(matches!(
            resum_coulomb_series(&psi, 1.0, eps(0.1), 3, 2.0),
            Err(DeviationError::InvalidOrder { .. })
        ));
    }

    #[test]
    fn json_layout() {
        let u = factor_from_model(
            &AsymptoticModel::PowerLog {
                phi: 1.0,
                psi: 2.0,
                nu: 3.0,
                mu: 4.0,
            },
            eps(0.5),
            2,
        )
        .unwrap();
        let text = serde_json::to_string(&u).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["c_L2"], 0.25);
        assert_eq!(v["c_L"], 0.5);
        assert_eq!(v["c_ln"][0], 0.75);
        assert_eq!(v["gauge"], 0.0);
        let back: DeviationFactor = serde_json::from_str(&text).unwrap();
        assert_eq!(back, u);
        let plain: DeviationFactor =
            serde_json::from_str(r#"{"c_L2": 0, "c_L": 0.01, "c_ln": [], "gauge": 0}"#).unwrap();
        assert!(close(plain.evaluate(100.0), Complex64::cis(1.0), 1e-15));
    }
}
