//! Momentum-space Dirac Hamiltonian, its closed-form eigensystem, and
//! simultaneous diagonalization with commuting unitaries.
//!
//! The free Hamiltonian acts on four-component spinors as multiplication
//! by the Hermitian matrix
//!
//! ```text
//!     [ m   0   q3       q1-iq2 ]
//!     [ 0   m   q1+iq2  -q3     ]
//!     [ q3  q1-iq2  -m   0      ]
//!     [ q1+iq2  -q3  0  -m      ]
//! ```
//!
//! whose spectrum is `-E, -E, +E, +E` with `E = sqrt(m^2 + |q|^2)`. The
//! doubled system is the block-diagonal pair of two copies of this matrix.
//! Any unitary that commutes with the Hamiltonian leaves both energy
//! eigenspaces invariant, so it can be diagonalized inside each one; the
//! resulting eigenvalues are the scattering diagonal elements.

use nalgebra::{DMatrix, DVector, Vector4};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Default relative tolerance for the commutation precondition.
pub const DEFAULT_COMMUTATION_TOL: f64 = 1e-8;

/// Below `QZERO_RELATIVE * max(m, 1)` the closed-form eigenvectors are
/// replaced by canonical basis vectors.
const QZERO_RELATIVE: f64 = 1e-12;

/// Clusters of Hermitian-part eigenvalues closer than this are re-split
/// with the anti-Hermitian part.
const CLUSTER_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("mass must be non-negative, got {0}")]
    NegativeMass(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("matrix is not unitary: |S*S - I| = {defect:.3e} exceeds {tol:.3e}")]
    NotUnitary { defect: f64, tol: f64 },
    #[error("commutation defect {defect:.3e} exceeds tolerance {tol:.3e}")]
    CommutationDefect { defect: f64, tol: f64 },
    #[error("unitary mixes the energy eigenspaces: leakage {leakage:.3e} exceeds {tol:.3e}")]
    BlockLeakage { leakage: f64, tol: f64 },
    #[error("expected {expected} explicit 2x2 blocks, got {found}")]
    BlockCount { expected: usize, found: usize },
}

pub type Result<T> = std::result::Result<T, SpectralError>;

/// Spatial momentum in natural units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Momentum3 {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

impl Momentum3 {
    pub const fn new(q1: f64, q2: f64, q3: f64) -> Self {
        Self { q1, q2, q3 }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.q1 * self.q1 + self.q2 * self.q2 + self.q3 * self.q3
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.q1.is_finite() && self.q2.is_finite() && self.q3.is_finite()
    }

    fn check(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(SpectralError::NonFinite("momentum"))
        }
    }
}

impl From<[f64; 3]> for Momentum3 {
    fn from(q: [f64; 3]) -> Self {
        Self::new(q[0], q[1], q[2])
    }
}

/// Non-negative rest mass.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct Mass(f64);

impl Mass {
    pub fn new(m: f64) -> Result<Self> {
        if !m.is_finite() {
            return Err(SpectralError::NonFinite("mass"));
        }
        if m < 0.0 {
            return Err(SpectralError::NegativeMass(m));
        }
        Ok(Self(m))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Positive energy `sqrt(m^2 + |q|^2)`.
pub fn energy(q: Momentum3, m: Mass) -> f64 {
    (m.0 * m.0 + q.norm_sqr()).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SystemSize {
    /// 4x4 Hamiltonian.
    Single,
    /// 8x8 block-diagonal pair of Hamiltonians.
    Doubled,
}

impl SystemSize {
    pub fn dim(self) -> usize {
        match self {
            SystemSize::Single => 4,
            SystemSize::Doubled => 8,
        }
    }

    fn copies(self) -> usize {
        self.dim() / 4
    }
}

/// A Dirac Hamiltonian at a fixed kinematic point.
///
/// Keeps `(q, m)` alongside the entries so the closed-form eigenspaces are
/// available to the diagonalization routines.
#[derive(Debug, Clone, PartialEq)]
pub struct DiracMatrix {
    q: Momentum3,
    m: Mass,
    size: SystemSize,
    entries: DMatrix<Complex64>,
}

impl DiracMatrix {
    pub fn momentum(&self) -> Momentum3 {
        self.q
    }

    pub fn mass(&self) -> Mass {
        self.m
    }

    pub fn size(&self) -> SystemSize {
        self.size
    }

    pub fn dim(&self) -> usize {
        self.size.dim()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<Complex64> {
        self.entries
    }

    pub fn apply(&self, v: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        if v.len() != self.dim() {
            return Err(SpectralError::SizeMismatch {
                expected: self.dim(),
                found: v.len(),
            });
        }
        Ok(&self.entries * v)
    }

    /// Maximum entrywise deviation from Hermiticity, relative to the largest entry.
    pub fn hermiticity_defect(&self) -> f64 {
        let scale = self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let diff = &self.entries - self.entries.adjoint();
        diff.iter().map(|z| z.norm()).fold(0.0, f64::max) / scale
    }

    /// Orthonormal frames of the negative and positive energy eigenspaces.
    ///
    /// For the doubled system each frame has four columns: the copy-1 pair
    /// followed by the copy-2 pair.
    pub fn eigenspace_frames(&self) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
        // (q, m) were validated at construction.
        let sub = spectral_subspaces(self.q, self.m).expect("validated kinematics");
        match self.size {
            SystemSize::Single => (sub.negative, sub.positive),
            SystemSize::Doubled => (block_diag_frame(&sub.negative), block_diag_frame(&sub.positive)),
        }
    }
}

fn block_diag_frame(f: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (r, c) = f.shape();
    let mut out = DMatrix::zeros(2 * r, 2 * c);
    out.view_mut((0, 0), (r, c)).copy_from(f);
    out.view_mut((r, c), (r, c)).copy_from(f);
    out
}

/// The 4x4 free Dirac Hamiltonian at momentum `q` and mass `m`.
pub fn build_hamiltonian(q: Momentum3, m: Mass) -> Result<DiracMatrix> {
    q.check()?;
    let mm = Complex64::new(m.0, 0.0);
    let q3 = Complex64::new(q.q3, 0.0);
    let minus = Complex64::new(q.q1, -q.q2);
    let plus = Complex64::new(q.q1, q.q2);
    #[rustfmt::skip]
    let entries = DMatrix::from_row_slice(4, 4, &[
        mm,    ZERO,  q3,    minus,
        ZERO,  mm,    plus,  -q3,
        q3,    minus, -mm,   ZERO,
        plus,  -q3,   ZERO,  -mm,
    ]);
    Ok(DiracMatrix {
        q,
        m,
        size: SystemSize::Single,
        entries,
    })
}

/// Block-diagonal 8x8 pair of Hamiltonians.
pub fn build_doubled(q: Momentum3, m: Mass) -> Result<DiracMatrix> {
    let single = build_hamiltonian(q, m)?;
    let entries = block_diag_frame(&single.entries);
    Ok(DiracMatrix {
        q,
        m,
        size: SystemSize::Doubled,
        entries,
    })
}

/// Eigenvalues ordered `(-E, -E, +E, +E)`.
pub fn eigenvalues(q: Momentum3, m: Mass) -> Result<[f64; 4]> {
    q.check()?;
    let e = energy(q, m);
    Ok([-e, -e, e, e])
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub eigenvalues: [f64; 4],
    /// Unit eigenvectors; the first two span the negative-energy space.
    pub eigenvectors: [Vector4<Complex64>; 4],
    /// `true` when `q` was small enough that canonical basis vectors were
    /// returned instead of the closed-form expressions.
    pub fallback: bool,
    /// Index pairs sharing an eigenvalue.
    pub degenerate_pairs: [(usize, usize); 2],
}

impl EigenSystem {
    /// Largest `|H g_k - lambda_k g_k|` over the four eigenpairs.
    pub fn max_residual(&self, h: &DiracMatrix) -> f64 {
        let hm = h.entries.fixed_view::<4, 4>(0, 0).into_owned();
        self.eigenvectors
            .iter()
            .zip(self.eigenvalues.iter())
            .map(|(g, &l)| (hm * g - g * Complex64::new(l, 0.0)).norm())
            .fold(0.0, f64::max)
    }
}

/// Rotates `v` so its last nonzero component is real and positive.
fn fix_phase<'a, I>(components: I) -> Option<Complex64>
where
    I: DoubleEndedIterator<Item = &'a Complex64>,
{
    components.rev().find(|z| z.norm() > 1e-14).map(|z| z.conj() / z.norm())
}

fn normalized(v: Vector4<Complex64>) -> Vector4<Complex64> {
    let v = v.unscale(v.norm());
    match fix_phase(v.iter()) {
        Some(phase) => v * phase,
        None => v,
    }
}

/// Closed-form eigenvectors, normalized, with last nonzero component real
/// positive.
pub fn eigenvectors_closed_form(q: Momentum3, m: Mass) -> Result<EigenSystem> {
    let eigenvalues = eigenvalues(q, m)?;
    let e = eigenvalues[2];
    let q_sq = q.norm_sqr();
    let unit = |i: usize| {
        let mut v = Vector4::from_element(ZERO);
        v[i] = ONE;
        v
    };

    let (eigenvectors, fallback) = if q.norm() < QZERO_RELATIVE * m.0.max(1.0) {
        ([unit(2), unit(3), unit(0), unit(1)], true)
    } else {
        let above = m.0 + e;
        // m - E rewritten to avoid cancellation when |q| << m.
        let below = -q_sq / above;
        let pair = |den: f64| {
            let a = Complex64::new(-q.q1, q.q2) / den;
            let b = Complex64::new(q.q3 / den, 0.0);
            let c = Complex64::new(-q.q3 / den, 0.0);
            let d = Complex64::new(-q.q1, -q.q2) / den;
            (
                normalized(Vector4::new(a, b, ZERO, ONE)),
                normalized(Vector4::new(c, d, ONE, ZERO)),
            )
        };
        let (g1, g2) = pair(above);
        let (g3, g4) = pair(below);
        ([g1, g2, g3, g4], false)
    };

    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
        fallback,
        degenerate_pairs: [(0, 1), (2, 3)],
    })
}

/// Orthonormal frames for the two energy eigenspaces, stored as 4x2
/// column matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSubspaces {
    /// Span of `g1, g2` (energy `-E`).
    pub negative: DMatrix<Complex64>,
    /// Span of `g3, g4` (energy `+E`).
    pub positive: DMatrix<Complex64>,
}

impl SpectralSubspaces {
    pub fn negative_projector(&self) -> DMatrix<Complex64> {
        &self.negative * self.negative.adjoint()
    }

    pub fn positive_projector(&self) -> DMatrix<Complex64> {
        &self.positive * self.positive.adjoint()
    }
}

/// Modified Gram-Schmidt with one reorthogonalization pass.
fn gram_schmidt(columns: &[DVector<Complex64>]) -> DMatrix<Complex64> {
    let mut basis: Vec<DVector<Complex64>> = Vec::with_capacity(columns.len());
    for col in columns {
        let mut v = col.clone();
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dotc(&v);
                v -= b * proj;
            }
        }
        let n = v.norm();
        v.unscale_mut(n);
        if let Some(phase) = fix_phase(v.iter()) {
            v *= phase;
        }
        basis.push(v);
    }
    DMatrix::from_columns(&basis)
}

pub fn spectral_subspaces(q: Momentum3, m: Mass) -> Result<SpectralSubspaces> {
    let sys = eigenvectors_closed_form(q, m)?;
    let col = |i: usize| DVector::from_iterator(4, sys.eigenvectors[i].iter().copied());
    Ok(SpectralSubspaces {
        negative: gram_schmidt(&[col(0), col(1)]),
        positive: gram_schmidt(&[col(2), col(3)]),
    })
}

/// Spinor field sampled on a finite set of momentum nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    pub nodes: Vec<Momentum3>,
    pub values: Vec<DVector<Complex64>>,
}

/// Pointwise `(A f)(q) = H(q) f(q)` over the sampled nodes.
pub fn apply_multiplication_operator<F>(hamiltonian_at: F, f: &SpinorField) -> Result<SpinorField>
where
    F: Fn(Momentum3) -> Result<DiracMatrix>,
{
    if f.nodes.len() != f.values.len() {
        return Err(SpectralError::SizeMismatch {
            expected: f.nodes.len(),
            found: f.values.len(),
        });
    }
    let values = f
        .nodes
        .iter()
        .zip(&f.values)
        .map(|(&q, v)| hamiltonian_at(q)?.apply(v))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpinorField {
        nodes: f.nodes.clone(),
        values,
    })
}

/// `f(H)` assembled from the closed-form spectral projectors.
pub fn spectral_function<F>(h: &DiracMatrix, f: F) -> DMatrix<Complex64>
where
    F: Fn(f64) -> Complex64,
{
    let e = energy(h.q, h.m);
    let (neg, pos) = h.eigenspace_frames();
    &neg * neg.adjoint() * f(-e) + &pos * pos.adjoint() * f(e)
}

/// `exp(i t H)`.
pub fn exp_i_hamiltonian(h: &DiracMatrix, t: f64) -> DMatrix<Complex64> {
    spectral_function(h, |l| Complex64::cis(t * l))
}

/// Frobenius norm of `S* S - I`.
pub fn unitarity_defect(s: &DMatrix<Complex64>) -> f64 {
    let n = s.nrows();
    (s.adjoint() * s - DMatrix::<Complex64>::identity(n, n)).norm()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Commutation {
    /// `|HS - SH| / (|H| |S|)` in Frobenius norm.
    pub defect: f64,
    pub commutes: bool,
}

pub fn commutes(h: &DiracMatrix, s: &DMatrix<Complex64>, tol: f64) -> Result<Commutation> {
    check_square(h.dim(), s)?;
    let unitary = unitarity_defect(s);
    if unitary > tol.max(1e-12) {
        return Err(SpectralError::NotUnitary {
            defect: unitary,
            tol: tol.max(1e-12),
        });
    }
    let hm = &h.entries;
    let scale = hm.norm() * s.norm();
    let defect = if scale == 0.0 {
        0.0
    } else {
        (hm * s - s * hm).norm() / scale
    };
    Ok(Commutation {
        defect,
        commutes: defect <= tol,
    })
}

fn check_square(dim: usize, s: &DMatrix<Complex64>) -> Result<()> {
    if s.nrows() != dim || s.ncols() != dim {
        return Err(SpectralError::SizeMismatch {
            expected: dim,
            found: if s.nrows() != dim { s.nrows() } else { s.ncols() },
        });
    }
    Ok(())
}

/// Common eigenvectors of `H` and `S` with the eigenvalues of `S` on them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringDiagonal {
    /// Unit vectors; the first half lie in the negative-energy space.
    pub vectors: Vec<DVector<Complex64>>,
    pub diagonal: Vec<Complex64>,
}

impl ScatteringDiagonal {
    /// `sum_k d_k h_k h_k*`.
    pub fn reconstruct(&self) -> DMatrix<Complex64> {
        let n = self.vectors.first().map_or(0, |v| v.len());
        let mut out = DMatrix::zeros(n, n);
        for (h, &d) in self.vectors.iter().zip(&self.diagonal) {
            out += h * h.adjoint() * d;
        }
        out
    }

    pub fn max_modulus_defect(&self) -> f64 {
        self.diagonal.iter().map(|d| (d.norm() - 1.0).abs()).fold(0.0, f64::max)
    }
}

pub fn simultaneous_diagonalize(h: &DiracMatrix, s: &DMatrix<Complex64>) -> Result<ScatteringDiagonal> {
    simultaneous_diagonalize_with_tol(h, s, DEFAULT_COMMUTATION_TOL)
}

pub fn simultaneous_diagonalize_with_tol(
    h: &DiracMatrix,
    s: &DMatrix<Complex64>,
    tol: f64,
) -> Result<ScatteringDiagonal> {
    let check = commutes(h, s, tol)?;
    if !check.commutes {
        return Err(SpectralError::CommutationDefect {
            defect: check.defect,
            tol,
        });
    }
    let (neg, pos) = h.eigenspace_frames();
    let leakage = (neg.adjoint() * s * &pos).norm().max((pos.adjoint() * s * &neg).norm());
    if leakage > tol {
        return Err(SpectralError::BlockLeakage { leakage, tol });
    }

    let mut vectors = Vec::with_capacity(h.dim());
    let mut diagonal = Vec::with_capacity(h.dim());
    for frame in [&neg, &pos] {
        let block = frame.adjoint() * s * frame;
        let rotation = diagonalize_normal_block(&block);
        let common = frame * rotation;
        for col in common.column_iter() {
            let v: DVector<Complex64> = col.into_owned();
            diagonal.push(v.dotc(&(s * &v)));
            vectors.push(v);
        }
    }
    Ok(ScatteringDiagonal { vectors, diagonal })
}

/// Unitary `W` with `W* B W` diagonal for a normal matrix `B`, columns
/// ordered by ascending phase of the corresponding eigenvalue.
pub(crate) fn diagonalize_normal_block(b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let k = b.nrows();
    let herm = (b + b.adjoint()).unscale(2.0);
    let anti = (b - b.adjoint()) * Complex64::new(0.0, -0.5);
    let w = match k {
        0 | 1 => DMatrix::identity(k, k),
        2 => {
            // Both parts share eigenvectors; the one with the wider
            // eigenvalue split gives the better-conditioned basis.
            let (wh, spread_h) = hermitian_2x2(&herm);
            let (wa, spread_a) = hermitian_2x2(&anti);
            if spread_h >= spread_a {
                wh
            } else {
                wa
            }
        }
        _ => split_clusters(&herm, &anti),
    };
    sort_by_phase(b, w)
}

/// Eigenvectors of a 2x2 Hermitian matrix and half the eigenvalue gap.
fn hermitian_2x2(k: &DMatrix<Complex64>) -> (DMatrix<Complex64>, f64) {
    let a = k[(0, 0)].re;
    let d = k[(1, 1)].re;
    let b = k[(0, 1)];
    let half = 0.5 * (a - d);
    let r = half.hypot(b.norm());
    if r == 0.0 {
        return (DMatrix::identity(2, 2), 0.0);
    }
    let v = if half >= 0.0 {
        [Complex64::new(half + r, 0.0), b.conj()]
    } else {
        [b, Complex64::new(r - half, 0.0)]
    };
    let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    let v = [v[0] / n, v[1] / n];
    let w = [-v[1].conj(), v[0].conj()];
    (DMatrix::from_column_slice(2, 2, &[v[0], v[1], w[0], w[1]]), r)
}

fn split_clusters(herm: &DMatrix<Complex64>, anti: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let k = herm.nrows();
    let eig = herm.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let mut columns: Vec<DVector<Complex64>> = Vec::with_capacity(k);
    let mut start = 0;
    while start < k {
        let mut end = start + 1;
        while end < k && eig.eigenvalues[order[end]] - eig.eigenvalues[order[end - 1]] <= CLUSTER_TOL {
            end += 1;
        }
        let frame = DMatrix::from_columns(
            &order[start..end]
                .iter()
                .map(|&i| eig.eigenvectors.column(i).into_owned())
                .collect::<Vec<_>>(),
        );
        if end - start == 1 {
            columns.push(frame.column(0).into_owned());
        } else {
            let inner = (frame.adjoint() * anti * &frame).symmetric_eigen();
            let rotated = &frame * inner.eigenvectors;
            columns.extend(rotated.column_iter().map(|c| c.into_owned()));
        }
        start = end;
    }
    DMatrix::from_columns(&columns)
}

fn sort_by_phase(b: &DMatrix<Complex64>, w: DMatrix<Complex64>) -> DMatrix<Complex64> {
    let mut cols: Vec<(f64, DVector<Complex64>)> = w
        .column_iter()
        .map(|c| {
            let c = c.into_owned();
            (c.dotc(&(b * &c)).arg(), c)
        })
        .collect();
    cols.sort_by(|x, y| x.0.total_cmp(&y.0));
    DMatrix::from_columns(&cols.into_iter().map(|(_, c)| c).collect::<Vec<_>>())
}

/// How the generator picks the 2x2 unitary blocks.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockSource {
    Seed(u64),
    /// One 2x2 unitary per (copy, eigenspace) pair: negative then positive
    /// energy for copy 1, then the same for copy 2 in the doubled system.
    Explicit(Vec<DMatrix<Complex64>>),
}

/// Random element of `U(2)`, built from Euler-type angles.
pub fn random_unitary_2x2<R: Rng + ?Sized>(rng: &mut R) -> DMatrix<Complex64> {
    let tau = std::f64::consts::TAU;
    let alpha = rng.random::<f64>() * tau;
    let beta = rng.random::<f64>() * tau;
    let delta = rng.random::<f64>() * tau;
    let gamma = rng.random::<f64>().sqrt().asin();
    let (s, c) = gamma.sin_cos();
    let global = Complex64::cis(alpha);
    DMatrix::from_row_slice(
        2,
        2,
        &[
            global * Complex64::cis(beta) * c,
            global * Complex64::cis(delta) * s,
            -global * Complex64::cis(-delta) * s,
            global * Complex64::cis(-beta) * c,
        ],
    )
}

/// A unitary commuting with `h`, of the form `B diag(U_1, ..) B*` where
/// `B` stacks the eigenspace frames.
pub fn random_commuting_unitary(h: &DiracMatrix, source: BlockSource) -> Result<DMatrix<Complex64>> {
    let sub = spectral_subspaces(h.q, h.m)?;
    let copies = h.size.copies();
    let count = 2 * copies;
    let blocks = match source {
        BlockSource::Seed(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count).map(|_| random_unitary_2x2(&mut rng)).collect()
        }
        BlockSource::Explicit(blocks) => {
            if blocks.len() != count {
                return Err(SpectralError::BlockCount {
                    expected: count,
                    found: blocks.len(),
                });
            }
            for b in &blocks {
                check_square(2, b)?;
            }
            blocks
        }
    };

    let dim = h.dim();
    let mut basis = DMatrix::zeros(dim, dim);
    let mut inner = DMatrix::zeros(dim, dim);
    for copy in 0..copies {
        for (slot, frame) in [&sub.negative, &sub.positive].into_iter().enumerate() {
            let idx = 2 * copy + slot;
            basis.view_mut((4 * copy, 2 * idx), (4, 2)).copy_from(frame);
            inner.view_mut((2 * idx, 2 * idx), (2, 2)).copy_from(&blocks[idx]);
        }
    }
    Ok(&basis * inner * basis.adjoint())
}
