//! Dense complex linear algebra for finite-dimensional observables.
//!
//! Everything here is a value type: operations never mutate their inputs and
//! always return fresh matrices, so all types are `Send + Sync` and can be
//! shared freely between worker threads.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Numerical tolerances shared across the crate.
pub mod tol {
    /// Hermiticity, `‖M − M†‖_max`.
    pub const HERM: f64 = 1e-10;
    /// Idempotence of projections, `‖P² − P‖_max`.
    pub const IDEM: f64 = 1e-10;
    /// Mutual orthogonality of instrument projections.
    pub const ORTH: f64 = 1e-10;
    /// Partition of unity of an instrument.
    pub const SUM: f64 = 1e-10;
    /// Smallest admissible eigenvalue of a positive operator is `-PSD`.
    pub const PSD: f64 = 1e-9;
    /// Eigenvalues closer than this are merged into one spectral projection.
    pub const DEGEN: f64 = 1e-8;
    /// Unit trace of a density matrix.
    pub const TRACE: f64 = 1e-10;
    /// Reconstruction of a matrix from its spectral decomposition.
    pub const RECON: f64 = 1e-10;
    /// Weights at or below this are treated as zero.
    pub const NULL: f64 = 1e-12;
}

/// A square complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<C64>);

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexMatrix({}x{}) {:?}", self.dim(), self.dim(), self.0.as_slice())
    }
}

impl ComplexMatrix {
    pub fn from_inner(inner: DMatrix<C64>) -> Result<Self> {
        if inner.nrows() != inner.ncols() {
            return Err(Error::NotSquare(format!("{}x{}", inner.nrows(), inner.ncols())));
        }
        if inner.nrows() == 0 {
            return Err(Error::NotSquare("0x0".into()));
        }
        Ok(Self(inner))
    }

    /// Builds a matrix from row-major rows.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::NotSquare("no rows".into()));
        }
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(Error::NotSquare(format!(
                "row {i} has {} entries, expected {dim}",
                row.len()
            )));
        }
        Ok(Self(DMatrix::from_fn(dim, dim, |i, j| rows[i][j])))
    }

    /// Builds a matrix from row-major `[re, im]` pairs, the config file layout.
    pub fn from_pairs(rows: &[Vec<[f64; 2]>]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&[re, im]| C64::new(re, im)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    /// Row-major `[re, im]` pairs.
    pub fn to_pairs(&self) -> Vec<Vec<[f64; 2]>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| [self.0[(i, j)].re, self.0[(i, j)].im]).collect())
            .collect()
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self(DMatrix::from_fn(n, n, |i, j| if i == j { C64::new(diag[i], 0.0) } else { C64::new(0.0, 0.0) }))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    /// `|ψ⟩⟨ψ|` for an arbitrary (not necessarily normalized) vector.
    pub fn outer(psi: &[C64]) -> Self {
        let n = psi.len();
        Self(DMatrix::from_fn(n, n, |i, j| psi[i] * psi[j].conj()))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn inner(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn scale(&self, c: C64) -> Self {
        Self(&self.0 * c)
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// Entrywise maximum modulus, `‖M‖_max`.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `‖self − other‖_max`.
    pub fn max_diff(&self, other: &Self) -> Result<f64> {
        check_dims(self.dim(), other.dim())?;
        Ok(self.0.iter().zip(other.0.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }

    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol
    }

    /// `(M + M†)/2`.
    pub fn hermitian_part(&self) -> Self {
        Self((&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0))
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        Self(self.0.kronecker(&other.0))
    }

    /// Operator norm (largest singular value).
    pub fn op_norm(&self) -> f64 {
        self.0.clone().singular_values().iter().copied().fold(0.0, f64::max)
    }

    /// Ascending eigenvalues and matching orthonormal eigenvectors (columns).
    ///
    /// nalgebra's Hermitian solver occasionally returns vectors that are not
    /// eigenvectors when the spectrum is degenerate, so its result is
    /// validated and replaced by a cyclic Jacobi solve when it fails.
    pub fn eigh(&self) -> Result<(Vec<f64>, DMatrix<C64>)> {
        let deviation = self.hermitian_deviation();
        if deviation > tol::HERM {
            return Err(Error::NonHermitian { deviation });
        }
        let a = self.hermitian_part().0;
        let eig = SymmetricEigen::new(a.clone());
        let (mut values, mut vectors) = (eig.eigenvalues.as_slice().to_vec(), eig.eigenvectors);
        if !is_eigensystem(&a, &values, &vectors) {
            (values, vectors) = jacobi_eigh(a);
        }
        let n = self.dim();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| values[x].total_cmp(&values[y]));
        let sorted = order.iter().map(|&k| values[k]).collect();
        let vectors = DMatrix::from_fn(n, n, |i, j| vectors[(i, order[j])]);
        Ok((sorted, vectors))
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigh()?.0[0])
    }

    /// Positive square root of a positive semidefinite matrix.
    ///
    /// Eigenvalues in `[-tol::PSD, 0)` are clipped to zero; anything more
    /// negative is a genuine positivity violation.
    pub fn psd_sqrt(&self) -> Result<Self> {
        let (values, vectors) = self.eigh()?;
        if values[0] < -tol::PSD {
            return Err(Error::NotPositive { min_eigenvalue: values[0] });
        }
        let n = self.dim();
        let roots = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(values[i].max(0.0).sqrt(), 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        Ok(Self(&vectors * roots * vectors.adjoint()))
    }
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

impl<'a> Mul<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &'a ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 * &rhs.0)
    }
}

impl<'a> Add<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &'a ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 + &rhs.0)
    }
}

impl<'a> Sub<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &'a ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 - &rhs.0)
    }
}

impl ComplexMatrix {
    /// Dimension-checked product.
    pub fn try_mul(&self, rhs: &Self) -> Result<Self> {
        check_dims(self.dim(), rhs.dim())?;
        Ok(self * rhs)
    }

    /// Dimension-checked sum.
    pub fn try_add(&self, rhs: &Self) -> Result<Self> {
        check_dims(self.dim(), rhs.dim())?;
        Ok(self + rhs)
    }

    /// In-place `self += c · rhs`, used by the enumeration loops.
    pub(crate) fn axpy(&mut self, c: C64, rhs: &Self) {
        self.0.zip_apply(&rhs.0, |a, b| *a += c * b);
    }
}

/// A normal state, represented by its density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(ComplexMatrix);

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let deviation = matrix.hermitian_deviation();
        if deviation > tol::HERM {
            return Err(Error::NonHermitian { deviation });
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > tol::TRACE || trace.im.abs() > tol::TRACE {
            return Err(Error::BadTrace { trace: trace.re });
        }
        let min_eigenvalue = matrix.min_eigenvalue()?;
        if min_eigenvalue < -tol::PSD {
            return Err(Error::NotPositive { min_eigenvalue });
        }
        Ok(Self(matrix))
    }

    /// `|ψ⟩⟨ψ|/⟨ψ|ψ⟩`.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if norm2 <= tol::NULL {
            return Err(Error::InvalidArgument("zero state vector".into()));
        }
        Self::new(ComplexMatrix::outer(psi).scale_real(1.0 / norm2))
    }

    pub fn diagonal(probabilities: &[f64]) -> Result<Self> {
        Self::new(ComplexMatrix::from_real_diagonal(probabilities))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64))
    }

    /// `G G* / tr(G G*)` for a matrix `G` of independent entries uniform on
    /// the unit square; full rank with probability one.
    pub fn random<R: rand::Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let g = DMatrix::from_fn(dim, dim, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let gg = &g * g.adjoint();
        let tr = gg.trace().re;
        let m = ComplexMatrix(gg.map(|z| z / tr));
        Self(m.hermitian_part())
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    /// `ω(A) = tr(P_ω A)`.
    pub fn expectation(&self, a: &ComplexMatrix) -> Result<C64> {
        check_dims(self.dim(), a.dim())?;
        let (r, a) = (self.0.inner(), a.inner());
        let n = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += r[(i, j)] * a[(j, i)];
            }
        }
        Ok(acc)
    }
}

/// An orthogonal projection `Π = Π* = Π²`.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection(ComplexMatrix);

impl Projection {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let deviation = matrix.hermitian_deviation();
        if deviation > tol::HERM {
            return Err(Error::NonHermitian { deviation });
        }
        let deviation = (&matrix * &matrix).max_diff(&matrix)?;
        if deviation > tol::IDEM {
            return Err(Error::NotIdempotent { deviation });
        }
        Ok(Self(matrix))
    }

    /// Projection onto the span of the given orthonormal vectors.
    pub fn onto(dim: usize, vectors: &[Vec<C64>]) -> Result<Self> {
        let mut acc = ComplexMatrix::zeros(dim);
        for v in vectors {
            if v.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: v.len() });
            }
            acc = &acc + &ComplexMatrix::outer(v);
        }
        Self::new(acc)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }
}

/// A single direct-measurement apparatus: mutually orthogonal projections,
/// one per outcome symbol, summing to the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct Instrument {
    alphabet: Alphabet,
    projections: Vec<Projection>,
}

impl Instrument {
    pub fn new(alphabet: Alphabet, projections: Vec<Projection>) -> Result<Self> {
        if projections.len() != alphabet.len() {
            return Err(Error::InvalidAlphabet(format!(
                "{} symbols but {} projections",
                alphabet.len(),
                projections.len()
            )));
        }
        let dim = projections[0].dim();
        let mut sum = ComplexMatrix::zeros(dim);
        for p in &projections {
            check_dims(dim, p.dim())?;
            sum = &sum + p.matrix();
        }
        let deviation = sum.max_diff(&ComplexMatrix::identity(dim))?;
        if deviation > tol::SUM {
            return Err(Error::IncompleteInstrument { deviation });
        }
        for (a, pa) in projections.iter().enumerate() {
            for (b, pb) in projections.iter().enumerate().skip(a + 1) {
                let deviation = (pa.matrix() * pb.matrix()).max_abs();
                if deviation > tol::ORTH {
                    return Err(Error::NonOrthogonal { first: a, second: b, deviation });
                }
            }
        }
        Ok(Self { alphabet, projections })
    }

    /// The spectral instrument of a Hermitian observable: one outcome per
    /// distinct eigenvalue, labelled by its value.
    pub fn from_observable(observable: &ComplexMatrix, labels: Option<Vec<String>>) -> Result<Self> {
        let parts = spectral_decompose(observable)?;
        let labels = match labels {
            Some(l) => l,
            None => parts.iter().map(|c| format!("{}", c.eigenvalue)).collect(),
        };
        Self::new(Alphabet::new(labels)?, parts.into_iter().map(|c| c.projection).collect())
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn projections(&self) -> &[Projection] {
        &self.projections
    }

    pub fn projection(&self, symbol: usize) -> &Projection {
        &self.projections[symbol]
    }

    pub fn dim(&self) -> usize {
        self.projections[0].dim()
    }
}

fn is_eigensystem(a: &DMatrix<C64>, values: &[f64], vectors: &DMatrix<C64>) -> bool {
    let n = a.nrows();
    let scale = a.iter().fold(1.0f64, |m, z| m.max(z.norm()));
    let tol = 1e-12 * scale * n.max(1) as f64;
    let av = a * vectors;
    let gram = vectors.adjoint() * vectors;
    (0..n).all(|j| {
        (0..n).all(|i| {
            let eye = if i == j { 1.0 } else { 0.0 };
            (av[(i, j)] - vectors[(i, j)] * values[j]).norm() <= tol && (gram[(i, j)] - eye).norm() <= 1e-12 * n.max(1) as f64
        })
    })
}

/// Cyclic complex Jacobi: rotations `G*AG` zeroing one off-diagonal pair at
/// a time until the off-diagonal mass is negligible.
fn jacobi_eigh(mut a: DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = a.nrows();
    let mut v = DMatrix::<C64>::identity(n, n);
    let total: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].norm_sqr()).sum();
        if off <= 1e-32 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let b = a[(p, q)];
                let abs = b.norm();
                if abs == 0.0 {
                    continue;
                }
                let e = b / abs;
                let tau = (a[(q, q)].re - a[(p, p)].re) / (2.0 * abs);
                let t = if tau == 0.0 { 1.0 } else { tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt()) };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (x, y) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = x * c - y * e.conj() * s;
                    a[(k, q)] = x * e * s + y * c;
                }
                for k in 0..n {
                    let (x, y) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = x * c - y * e * s;
                    a[(q, k)] = x * e.conj() * s + y * c;
                }
                a[(p, q)] = C64::new(0.0, 0.0);
                a[(q, p)] = C64::new(0.0, 0.0);
                for k in 0..n {
                    let (x, y) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = x * c - y * e.conj() * s;
                    v[(k, q)] = x * e * s + y * c;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)].re).collect(), v)
}

/// One term `α Π_α` of a spectral decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralComponent {
    pub eigenvalue: f64,
    pub projection: Projection,
}

/// Decomposes a Hermitian matrix as `Σ_α α Π_α` over its distinct
/// eigenvalues, sorted ascending. Eigenvalues within `tol::DEGEN` of their
/// neighbour are merged into one projection.
pub fn spectral_decompose(a: &ComplexMatrix) -> Result<Vec<SpectralComponent>> {
    let (values, vectors) = a.eigh()?;
    let n = a.dim();
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (k, &v) in values.iter().enumerate() {
        match clusters.last_mut() {
            Some(c) if v - values[*c.last().unwrap()] <= tol::DEGEN => c.push(k),
            _ => clusters.push(vec![k]),
        }
    }
    clusters
        .into_iter()
        .map(|cluster| {
            let eigenvalue = cluster.iter().map(|&k| values[k]).sum::<f64>() / cluster.len() as f64;
            let mut p = DMatrix::<C64>::zeros(n, n);
            for &k in &cluster {
                let v = vectors.column(k);
                p += v * v.adjoint();
            }
            // Exact Hermitian symmetry so that the projection check is not
            // spoiled by rounding in the outer products.
            let p = ComplexMatrix(p).hermitian_part();
            Ok(SpectralComponent { eigenvalue, projection: Projection::new(p)? })
        })
        .collect()
}

/// `Σ α Π_α`.
pub fn reconstruct(components: &[SpectralComponent]) -> Result<ComplexMatrix> {
    let first = components
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty spectral decomposition".into()))?;
    let mut acc = ComplexMatrix::zeros(first.projection.dim());
    for c in components {
        acc = acc.try_add(&c.projection.matrix().scale_real(c.eigenvalue))?;
    }
    Ok(acc)
}

/// Born's rule, `tr(P_ω P)`, clamped to `[0, 1]`.
pub fn born_probability(state: &DensityMatrix, projection: &Projection) -> Result<f64> {
    Ok(state.expectation(projection.matrix())?.re.clamp(0.0, 1.0))
}

/// `‖AB − BA‖_max`.
pub fn commutator_norm(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    a.try_mul(b)?.max_diff(&(b * a))
}

/// True iff `‖AB − BA‖_max ≤ tol`.
pub fn commutes(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> Result<bool> {
    Ok(commutator_norm(a, b)? <= tol)
}
