use devfactor_core::cutoff::{sample_over_cutoffs, ComplexIntegrand, CutoffSamples, Kinematics, QuadratureSpec};
use devfactor_core::deviation::{
    class_a_check, convergence_check, factor_from_model, regularize_coefficient, resum_coulomb_series, Coupling,
    DeviationFactor,
};
use devfactor_core::fitter::{self, AsymptoticModel, FitReport, ModelKind};
use devfactor_core::integrand::{parse_integrand, EvalContext, IntegrandExpr};
use devfactor_core::spectral::{self, Mass, Momentum3};
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

create_exception!(devfactor, DevfactorError, PyException);
create_exception!(devfactor, IntegrandParseError, DevfactorError);
create_exception!(devfactor, ModelMismatchError, DevfactorError);

fn err(e: impl std::fmt::Display) -> PyErr {
    DevfactorError::new_err(e.to_string())
}

fn mass(m: f64) -> PyResult<Mass> {
    Mass::new(m).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Sorted eigenvalues `(-E, -E, E, E)` of `H(q)`.
#[pyfunction]
fn eigenvalues(q: [f64; 3], m: f64) -> PyResult<[f64; 4]> {
    spectral::eigenvalues(Momentum3::from(q), mass(m)?).map_err(err)
}

/// Closed-form eigenvalues and orthonormal eigenvectors of `H(q)`.
#[pyfunction]
fn eigenvectors(q: [f64; 3], m: f64) -> PyResult<([f64; 4], Vec<Vec<Complex64>>)> {
    let sys = spectral::eigenvectors_closed_form(Momentum3::from(q), mass(m)?).map_err(err)?;
    let vecs = sys.eigenvectors.iter().map(|v| v.iter().copied().collect()).collect();
    Ok((sys.eigenvalues, vecs))
}

/// Parsed integrand expression over `p0..p3`, `q0..q3`, `m`, `L`, `P2`, `Q2`, `PQ`.
#[pyclass(name = "Integrand", frozen)]
struct PyIntegrand {
    expr: IntegrandExpr,
}

#[pymethods]
impl PyIntegrand {
    #[new]
    fn new(source: &str) -> PyResult<Self> {
        parse_integrand(source)
            .map(|expr| Self { expr })
            .map_err(|e| IntegrandParseError::new_err((e.to_string(), e.offset())))
    }

    #[pyo3(signature = (p, q=[0.0; 4], m=0.0, cutoff=1.0))]
    fn evaluate(&self, p: [f64; 4], q: [f64; 4], m: f64, cutoff: f64) -> PyResult<f64> {
        self.expr.evaluate(&EvalContext { p, q, m, cutoff }).map_err(err)
    }

    fn __str__(&self) -> String {
        self.expr.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Integrand('{}')", self.expr)
    }
}

/// Cutoff integrals over a grid; returns `(cutoffs, values, errors)`.
#[pyfunction]
#[pyo3(signature = (cutoffs, re=None, im=None, q0=0.0, q=[0.0; 3], m=0.0, radial=None, angular=None, mc_samples=None, seed=0))]
#[allow(clippy::too_many_arguments)]
fn integrate(
    py: Python<'_>,
    cutoffs: Vec<f64>,
    re: Option<&str>,
    im: Option<&str>,
    q0: f64,
    q: [f64; 3],
    m: f64,
    radial: Option<usize>,
    angular: Option<[usize; 3]>,
    mc_samples: Option<usize>,
    seed: u64,
) -> PyResult<(Vec<f64>, Vec<Complex64>, Vec<f64>)> {
    let parse = |s: Option<&str>| {
        s.map(parse_integrand)
            .transpose()
            .map_err(|e| IntegrandParseError::new_err((e.to_string(), e.offset())))
    };
    let f = ComplexIntegrand::new(parse(re)?, parse(im)?);
    let spec = match (mc_samples, QuadratureSpec::default()) {
        (Some(samples), _) => QuadratureSpec::MonteCarlo { samples, seed },
        (
            None,
            QuadratureSpec::TensorGauss {
                radial: r0,
                angular: a0,
            },
        ) => QuadratureSpec::TensorGauss {
            radial: radial.unwrap_or(r0),
            angular: angular.unwrap_or(a0),
        },
        (None, spec) => spec,
    };
    let kin = Kinematics::new(q0, Momentum3::from(q), m);
    let s = py
        .detach(|| sample_over_cutoffs(&f, &kin, &cutoffs, &spec))
        .map_err(err)?;
    Ok((s.cutoffs, s.values, s.errors))
}

fn samples(cutoffs: Vec<f64>, values: Vec<Complex64>) -> PyResult<CutoffSamples> {
    let errors = vec![0.0; cutoffs.len()];
    CutoffSamples::new(Kinematics::default(), cutoffs, values, errors).map_err(err)
}

/// Result of fitting a divergence model.
#[pyclass(name = "FitReport", frozen)]
struct PyFitReport {
    report: FitReport,
}

#[pymethods]
impl PyFitReport {
    #[getter]
    fn kind(&self) -> String {
        self.report.model.kind().to_string()
    }

    #[getter]
    fn coefficients(&self) -> Vec<f64> {
        self.report.model.coefficients()
    }

    #[getter]
    fn coefficient_names(&self) -> Vec<String> {
        self.report.coefficient_names.clone()
    }

    #[getter]
    fn standard_errors(&self) -> Vec<f64> {
        self.report.standard_errors.clone()
    }

    #[getter]
    fn decay_passed(&self) -> bool {
        self.report.decay.passed
    }

    #[getter]
    fn max_residual(&self) -> f64 {
        self.report.max_residual
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.report).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "FitReport(kind='{}', coefficients={:?})",
            self.kind(),
            self.coefficients()
        )
    }
}

fn fit_err(e: fitter::FitError) -> PyErr {
    match e {
        fitter::FitError::ModelMismatch { .. } => ModelMismatchError::new_err(e.to_string()),
        e => err(e),
    }
}

/// Fits `Im a(L)` against `kind` (`log`, `powerlog`, `polylogN`).
#[pyfunction]
#[pyo3(signature = (cutoffs, values, kind, tail_fraction=1.0))]
fn fit(cutoffs: Vec<f64>, values: Vec<Complex64>, kind: &str, tail_fraction: f64) -> PyResult<PyFitReport> {
    let kind: ModelKind = kind.parse().map_err(PyValueError::new_err)?;
    let report = fitter::fit(&samples(cutoffs, values)?, kind, tail_fraction).map_err(fit_err)?;
    Ok(PyFitReport { report })
}

/// Smallest model whose remainder decays like `1/L`.
#[pyfunction]
fn classify(cutoffs: Vec<f64>, values: Vec<Complex64>) -> PyResult<PyFitReport> {
    let report = fitter::classify(&samples(cutoffs, values)?).map_err(fit_err)?;
    Ok(PyFitReport { report })
}

/// Unit-modulus factor `exp(i(c_L2 L^2 + c_L L + sum c_p ln^p L + gauge))`.
#[pyclass(name = "DeviationFactor", frozen)]
struct PyDeviationFactor {
    factor: DeviationFactor,
}

#[pymethods]
impl PyDeviationFactor {
    #[new]
    #[pyo3(signature = (c_l2=0.0, c_l=0.0, c_ln=Vec::new(), gauge=0.0))]
    fn new(c_l2: f64, c_l: f64, c_ln: Vec<f64>, gauge: f64) -> PyResult<Self> {
        let factor = DeviationFactor::from_exponents(c_l2, c_l, &c_ln, gauge).map_err(err)?;
        Ok(Self { factor })
    }

    /// Factor removing the divergent part of a fitted model at `epsilon^order`.
    #[staticmethod]
    #[pyo3(signature = (report, epsilon, order=2))]
    fn from_fit(report: &PyFitReport, epsilon: f64, order: u32) -> PyResult<Self> {
        let eps = Coupling::new(epsilon).map_err(err)?;
        let factor = factor_from_model(&report.report.model, eps, order).map_err(err)?;
        Ok(Self { factor })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let factor = serde_json::from_str(text).map_err(err)?;
        Ok(Self { factor })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.factor).map_err(err)
    }

    fn evaluate(&self, cutoff: f64) -> Complex64 {
        self.factor.evaluate(cutoff)
    }

    fn exponent(&self, cutoff: f64) -> f64 {
        self.factor.exponent(cutoff)
    }

    #[getter]
    fn c_l2(&self) -> f64 {
        self.factor.c_l2()
    }

    #[getter]
    fn c_l(&self) -> f64 {
        self.factor.c_l()
    }

    #[getter]
    fn c_ln(&self) -> Vec<f64> {
        self.factor.c_ln()
    }

    #[getter]
    fn gauge(&self) -> f64 {
        self.factor.gauge()
    }

    fn is_class_a(&self) -> bool {
        self.factor.is_class_a()
    }

    /// Returns `(verdict, ratios)` with `ratios[i] = U0(L_i + l0) / U0(L_i)`.
    fn class_a_check(&self, l0: f64, grid: Vec<f64>) -> PyResult<(bool, Vec<Complex64>)> {
        let check = class_a_check(&self.factor, l0, &grid).map_err(err)?;
        Ok((check.verdict, check.ratios))
    }

    fn __repr__(&self) -> String {
        format!(
            "DeviationFactor(c_l2={}, c_l={}, c_ln={:?}, gauge={})",
            self.c_l2(),
            self.c_l(),
            self.c_ln(),
            self.gauge()
        )
    }
}

/// Regularized samples `a(L) - i * divergent(L)` and the final difference
/// `|a~(L_max) - a~(L_max/2)|`.
#[pyfunction]
fn regularize(cutoffs: Vec<f64>, values: Vec<Complex64>, report: &PyFitReport) -> PyResult<(Vec<Complex64>, f64)> {
    let model: &AsymptoticModel = &report.report.model;
    let reg = regularize_coefficient(&samples(cutoffs, values)?, model);
    let conv = convergence_check(&reg).map_err(err)?;
    Ok((reg.values, conv.last_difference))
}

/// Coulomb-type resummation; returns `(coefficients, residuals)` per order.
#[pyfunction]
fn resum(psi: Vec<f64>, phi: f64, epsilon: f64, order: usize, cutoff: f64) -> PyResult<(Vec<Complex64>, Vec<f64>)> {
    let eps = Coupling::new(epsilon).map_err(err)?;
    let r = resum_coulomb_series(&psi, phi, eps, order, cutoff).map_err(err)?;
    Ok((r.coefficients, r.residuals))
}

#[pymodule]
fn devfactor(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DevfactorError", m.py().get_type::<DevfactorError>())?;
    m.add("IntegrandParseError", m.py().get_type::<IntegrandParseError>())?;
    m.add("ModelMismatchError", m.py().get_type::<ModelMismatchError>())?;
    m.add_class::<PyIntegrand>()?;
    m.add_class::<PyFitReport>()?;
    m.add_class::<PyDeviationFactor>()?;
    m.add_function(wrap_pyfunction!(eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(eigenvectors, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(regularize, m)?)?;
    m.add_function(wrap_pyfunction!(resum, m)?)?;
    Ok(())
}
