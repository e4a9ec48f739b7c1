//! Gaussian densities in moment and information form.
//!
//! Information form `(S, b)` with `S = Σ⁻¹` and `b = S·μ` is the canonical
//! representation used across the crate: the normalized product of two
//! Gaussians adds information, and division subtracts it. Moment form is
//! derived on demand through a Cholesky solve.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{BrslError, Result};

/// Relative asymmetry accepted when constructing an information matrix.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Scale-relative slack for positive-definiteness checks.
pub const PD_RELATIVE_TOLERANCE: f64 = 1e-10;

/// A univariate Gaussian in moment form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moment1D {
    mean: f64,
    variance: f64,
}

impl Moment1D {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() || !variance.is_finite() {
            return Err(BrslError::NonFiniteInput(format!(
                "moment ({mean}, {variance})"
            )));
        }
        if variance <= 0.0 {
            return Err(BrslError::Domain(format!(
                "variance must be strictly positive, got {variance}"
            )));
        }
        Ok(Self { mean, variance })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn precision(&self) -> f64 {
        1.0 / self.variance
    }

    /// Converts to a one-dimensional information form.
    pub fn to_information(&self) -> InformationForm {
        let s = self.precision();
        InformationForm {
            info_matrix: DMatrix::from_element(1, 1, s),
            info_vector: DVector::from_element(1, s * self.mean),
        }
    }
}

/// A Gaussian (possibly improper) in information form.
///
/// The matrix is symmetric by construction. Positive definiteness is checked
/// on demand: improper intermediates are allowed while a recursion is in
/// flight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformationForm {
    info_matrix: DMatrix<f64>,
    info_vector: DVector<f64>,
}

impl InformationForm {
    /// Builds an information form, symmetrizing `info_matrix`.
    ///
    /// Fails when the dimensions disagree, an entry is non-finite or the
    /// matrix is asymmetric beyond [`SYMMETRY_TOLERANCE`] (relative).
    pub fn new(info_matrix: DMatrix<f64>, info_vector: DVector<f64>) -> Result<Self> {
        let d = info_matrix.nrows();
        if info_matrix.ncols() != d || info_vector.len() != d {
            return Err(BrslError::DimensionMismatch(format!(
                "information matrix {}x{} with vector of length {}",
                info_matrix.nrows(),
                info_matrix.ncols(),
                info_vector.len()
            )));
        }
        if info_matrix.iter().chain(info_vector.iter()).any(|v| !v.is_finite()) {
            return Err(BrslError::NonFiniteInput(
                "information form contains non-finite entries".into(),
            ));
        }
        let scale = info_matrix.amax().max(1.0);
        let asym = (&info_matrix - info_matrix.transpose()).amax();
        if asym > SYMMETRY_TOLERANCE * scale {
            return Err(BrslError::Domain(format!(
                "information matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        Ok(Self {
            info_matrix: symmetrize(info_matrix),
            info_vector,
        })
    }

    /// The zero (flat, improper) density of dimension `d`.
    pub fn zeros(d: usize) -> Self {
        Self {
            info_matrix: DMatrix::zeros(d, d),
            info_vector: DVector::zeros(d),
        }
    }

    /// Converts a moment-form Gaussian `N(mean, covariance)`.
    pub fn from_moments(mean: &DVector<f64>, covariance: &DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
            return Err(BrslError::DimensionMismatch(format!(
                "covariance {}x{} for mean of length {}",
                covariance.nrows(),
                covariance.ncols(),
                mean.len()
            )));
        }
        let chol = Cholesky::new(symmetrize(covariance.clone())).ok_or_else(|| {
            BrslError::NotPositiveDefinite {
                min_eigenvalue: min_eigenvalue(covariance),
                tolerance: 0.0,
            }
        })?;
        let s = chol.inverse();
        let b = &s * mean;
        Self::new(symmetrize(s), b)
    }

    pub(crate) fn from_parts_unchecked(info_matrix: DMatrix<f64>, info_vector: DVector<f64>) -> Self {
        Self {
            info_matrix,
            info_vector,
        }
    }

    pub fn dim(&self) -> usize {
        self.info_vector.len()
    }

    pub fn info_matrix(&self) -> &DMatrix<f64> {
        &self.info_matrix
    }

    pub fn info_vector(&self) -> &DVector<f64> {
        &self.info_vector
    }

    pub fn into_parts(self) -> (DMatrix<f64>, DVector<f64>) {
        (self.info_matrix, self.info_vector)
    }

    /// Round-off slack for this matrix: `1e-10 · (1 + trace(S)/d)`.
    pub fn pd_tolerance(&self) -> f64 {
        pd_tolerance(&self.info_matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.info_matrix)
    }

    /// True when the smallest eigenvalue clears the scale-relative tolerance.
    pub fn is_positive_definite(&self) -> bool {
        self.dim() > 0 && Cholesky::new(self.info_matrix.clone()).is_some()
            && self.min_eigenvalue() > self.pd_tolerance()
    }

    /// Mean `μ = S⁻¹ b`.
    pub fn mean(&self) -> Result<DVector<f64>> {
        Ok(self.cholesky()?.solve(&self.info_vector))
    }

    /// Covariance `Σ = S⁻¹`.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        Ok(symmetrize(self.cholesky()?.inverse()))
    }

    pub(crate) fn cholesky(&self) -> Result<Cholesky<f64, nalgebra::Dyn>> {
        Cholesky::new(self.info_matrix.clone()).ok_or_else(|| {
            BrslError::SingularInformation(format!(
                "Cholesky factorization failed (smallest eigenvalue {:e})",
                self.min_eigenvalue()
            ))
        })
    }

    /// Log density up to an additive constant: `-½ xᵀSx + bᵀx`.
    pub fn log_density_unnormalized(&self, x: &DVector<f64>) -> f64 {
        -0.5 * x.dot(&(&self.info_matrix * x)) + self.info_vector.dot(x)
    }
}

/// Normalized product of two Gaussians: information adds.
pub fn multiply_information(a: &InformationForm, b: &InformationForm) -> Result<InformationForm> {
    check_same_dim(a, b)?;
    Ok(InformationForm {
        info_matrix: symmetrize(&a.info_matrix + &b.info_matrix),
        info_vector: &a.info_vector + &b.info_vector,
    })
}

/// Division of Gaussians: information subtracts.
///
/// The quotient must be a proper density, so the difference of information
/// matrices has to be positive definite beyond the round-off tolerance.
pub fn divide_information(num: &InformationForm, den: &InformationForm) -> Result<InformationForm> {
    check_same_dim(num, den)?;
    let s = symmetrize(&num.info_matrix - &den.info_matrix);
    let tolerance = pd_tolerance(&s);
    let min_eig = min_eigenvalue(&s);
    if min_eig <= tolerance {
        return Err(BrslError::NotPositiveDefinite {
            min_eigenvalue: min_eig,
            tolerance,
        });
    }
    Ok(InformationForm {
        info_matrix: s,
        info_vector: &num.info_vector - &den.info_vector,
    })
}

/// Divides `num` by `den` where `num ∝ den · quotient`.
///
/// Requires `σ_num² < σ_den²`; the quotient has precision
/// `σ_num⁻² − σ_den⁻²` and mean `(μ_num σ_num⁻² − μ_den σ_den⁻²) / (σ_num⁻² − σ_den⁻²)`.
pub fn divide_gaussian(num: &Moment1D, den: &Moment1D) -> Result<Moment1D> {
    if num.variance >= den.variance {
        return Err(BrslError::PrecisionViolation {
            numerator: num.variance,
            denominator: den.variance,
        });
    }
    let p1 = num.precision();
    let p2 = den.precision();
    let p3 = p1 - p2;
    Moment1D::new((num.mean * p1 - den.mean * p2) / p3, 1.0 / p3)
}

/// Normalized product of two univariate Gaussians.
pub fn multiply_gaussian(a: &Moment1D, b: &Moment1D) -> Result<Moment1D> {
    let p = a.precision() + b.precision();
    Moment1D::new((a.mean * a.precision() + b.mean * b.precision()) / p, 1.0 / p)
}

fn check_same_dim(a: &InformationForm, b: &InformationForm) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(BrslError::DimensionMismatch(format!(
            "information forms of dimension {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// `(M + Mᵀ)/2`.
pub fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

pub fn pd_tolerance(s: &DMatrix<f64>) -> f64 {
    let d = s.nrows().max(1) as f64;
    PD_RELATIVE_TOLERANCE * (1.0 + (s.trace() / d).abs())
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn sorted_eigenvalues(s: &DMatrix<f64>) -> Vec<f64> {
    if s.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(s.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(s: &DMatrix<f64>) -> f64 {
    sorted_eigenvalues(s).first().copied().unwrap_or(f64::NAN)
}
