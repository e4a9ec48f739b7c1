//! Well-posedness and excitation diagnostics.
//!
//! The recursion may divide out old data only while new data brings strictly
//! more information: `Ψ_newᵀΨ_new − Ψ_oldᵀΨ_old ≻ 0`. The eigenvalues `κᵢ`
//! of that differential classify each incoming batch.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::dictionary::DictionarySpec;
use crate::error::Result;
use crate::gaussian::{sorted_eigenvalues, symmetrize};

/// Relative scale of the `κ` classification boundary.
pub const KAPPA_RELATIVE_TOLERANCE: f64 = 1e-8;

const PE_RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    /// Every `κᵢ > ε_κ`: the division is well posed.
    Informative,
    /// Smallest `κ` within `±ε_κ`: new data repeats what is being forgotten.
    Redundant,
    /// Some `κᵢ < −ε_κ`: the batch removes more information than it adds.
    Degrading,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Informative => "informative",
            Classification::Redundant => "redundant",
            Classification::Degrading => "degrading",
        }
    }
}

/// Eigenvalues of the information differential and their verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    /// Ascending.
    pub kappas: Vec<f64>,
    pub classification: Classification,
    pub differential_trace: f64,
    /// The boundary `ε_κ` used for classification.
    pub tolerance: f64,
    /// Upper Cholesky factor `Λ` with `ΛᵀΛ` equal to the differential, only
    /// computed for informative batches.
    #[serde(skip)]
    pub cholesky: Option<DMatrix<f64>>,
}

impl UtilityReport {
    pub fn kappa_min(&self) -> f64 {
        self.kappas.first().copied().unwrap_or(0.0)
    }

    pub fn kappa_max(&self) -> f64 {
        self.kappas.last().copied().unwrap_or(0.0)
    }

    pub fn is_informative(&self) -> bool {
        self.classification == Classification::Informative
    }
}

/// Empirical excitation over a window of regressors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeReport {
    pub window_len: usize,
    /// Smallest eigenvalue of `(1/N)·ΨᵀΨ`.
    pub min_avg_eig: f64,
    /// Largest eigenvalue of `(1/N)·ΨᵀΨ`.
    pub max_avg_eig: f64,
    pub alpha1: f64,
    pub satisfied: bool,
}

/// `Ψ_newᵀΨ_new − Ψ_oldᵀΨ_old`, symmetrized.
pub fn information_differential<N: AsRef<[f64]>, O: AsRef<[f64]>>(
    spec: &DictionarySpec,
    new_states: &[N],
    old_states: &[O],
) -> Result<DMatrix<f64>> {
    Ok(differential_parts(spec, new_states, old_states)?.0)
}

fn differential_parts<N: AsRef<[f64]>, O: AsRef<[f64]>>(
    spec: &DictionarySpec,
    new_states: &[N],
    old_states: &[O],
) -> Result<(DMatrix<f64>, f64)> {
    let g_new = spec.gram(new_states)?;
    let g_old = spec.gram(old_states)?;
    let gross = g_new.trace() + g_old.trace();
    Ok((symmetrize(g_new - g_old), gross))
}

/// Classification boundary `ε_κ = 1e-8 · (1 + gross/n_p)` where `gross` is
/// `tr(Ψ_newᵀΨ_new) + tr(Ψ_oldᵀΨ_old)`.
pub fn kappa_tolerance(gross_trace: f64, n_terms: usize) -> f64 {
    KAPPA_RELATIVE_TOLERANCE * (1.0 + gross_trace.abs() / n_terms.max(1) as f64)
}

pub fn classify(kappa_min: f64, tolerance: f64) -> Classification {
    if kappa_min > tolerance {
        Classification::Informative
    } else if kappa_min >= -tolerance {
        Classification::Redundant
    } else {
        Classification::Degrading
    }
}

/// Eigen-analysis of the information differential between a new and an old
/// block of states.
pub fn utility<N: AsRef<[f64]>, O: AsRef<[f64]>>(
    spec: &DictionarySpec,
    new_states: &[N],
    old_states: &[O],
) -> Result<UtilityReport> {
    let (diff, gross) = differential_parts(spec, new_states, old_states)?;
    Ok(report_from_differential(diff, kappa_tolerance(gross, spec.n_terms())))
}

/// Builds a report for an already assembled differential.
pub fn report_from_differential(diff: DMatrix<f64>, tolerance: f64) -> UtilityReport {
    let kappas = sorted_eigenvalues(&diff);
    let kappa_min = kappas.first().copied().unwrap_or(0.0);
    let classification = classify(kappa_min, tolerance);
    let cholesky = if classification == Classification::Informative {
        Cholesky::new(diff.clone()).map(|c| c.l().transpose())
    } else {
        None
    };
    UtilityReport {
        kappas,
        classification,
        differential_trace: diff.trace(),
        tolerance,
        cholesky,
    }
}

/// Extreme eigenvalues of the window-averaged Gram `(1/N)·ΨᵀΨ`;
/// satisfied iff the smallest is at least `alpha1`.
pub fn check_pe<S: AsRef<[f64]>>(spec: &DictionarySpec, states: &[S], alpha1: f64) -> Result<PeReport> {
    let n = states.len();
    let gram = spec.gram(states)?;
    let avg = if n == 0 { gram } else { gram / n as f64 };
    let ev = sorted_eigenvalues(&symmetrize(avg));
    let max_avg_eig = ev.last().copied().unwrap_or(0.0).max(0.0);
    // Eigenvalues at round-off level relative to the largest are rank
    // deficiency, not excitation.
    let min_avg_eig = match ev.first().copied() {
        Some(v) if v > PE_RANK_TOLERANCE * max_avg_eig => v,
        _ => 0.0,
    };
    Ok(PeReport {
        window_len: n,
        min_avg_eig,
        max_avg_eig,
        alpha1,
        satisfied: n > 0 && min_avg_eig >= alpha1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec2() -> DictionarySpec {
        DictionarySpec::polynomial(2, 1, false).unwrap()
    }

    #[test]
    fn empty_old_is_new_gram() {
        let spec = spec2();
        let new = vec![vec![1.0, 2.0], vec![-0.5, 0.3]];
        let d = information_differential(&spec, &new, &Vec::<Vec<f64>>::new()).unwrap();
        assert!((d - spec.gram(&new).unwrap()).amax() < 1e-15);
    }

    #[test]
    fn identical_blocks_cancel() {
        let spec = spec2();
        let s = vec![vec![1.0, 2.0], vec![-0.5, 0.3]];
        let d = information_differential(&spec, &s, &s).unwrap();
        assert_eq!(d.amax(), 0.0);
        let r = utility(&spec, &s, &s).unwrap();
        assert_eq!(r.classification, Classification::Redundant);
        assert!(r.cholesky.is_none());
    }

    #[test]
    fn zero_new_rows_degrade() {
        let spec = spec2();
        let new = vec![vec![0.0, 0.0]; 3];
        let old = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let r = utility(&spec, &new, &old).unwrap();
        assert_eq!(r.classification, Classification::Degrading);
    }

    #[test]
    fn doubled_rows_give_three_times_old_gram() {
        let spec = spec2();
        let old = vec![vec![1.0, 0.2], vec![-0.3, 0.8], vec![0.5, 0.5]];
        let new: Vec<Vec<f64>> = old.iter().map(|s| s.iter().map(|v| 2.0 * v).collect()).collect();
        let r = utility(&spec, &new, &old).unwrap();
        let old_ev = sorted_eigenvalues(&spec.gram(&old).unwrap());
        for (k, e) in r.kappas.iter().zip(old_ev) {
            assert!((k - 3.0 * e).abs() < 1e-12);
        }
        assert_eq!(r.classification, Classification::Informative);
        let l = r.cholesky.unwrap();
        assert!((l.transpose() * &l - spec.gram(&old).unwrap() * 3.0).amax() < 1e-12);
    }

    #[test]
    fn pe_examples() {
        let spec = DictionarySpec::polynomial(1, 0, true).unwrap();
        let r = check_pe(&spec, &vec![vec![3.0]; 5], 0.5).unwrap();
        assert!((r.min_avg_eig - 1.0).abs() < 1e-15);
        assert!(r.satisfied);

        let spec = DictionarySpec::polynomial(1, 1, false).unwrap();
        let r = check_pe(&spec, &vec![vec![0.0]; 4], 1e-12).unwrap();
        assert_eq!(r.min_avg_eig, 0.0);
        assert!(!r.satisfied);

        let spec = DictionarySpec::polynomial(2, 1, false).unwrap();
        let r = check_pe(&spec, &vec![vec![1.0, 1.0]; 4], 1e-12).unwrap();
        assert!(r.min_avg_eig < 1e-15);
        assert!(!r.satisfied);
    }

    #[test]
    fn classification_boundaries() {
        assert_eq!(classify(1.0, 1e-8), Classification::Informative);
        assert_eq!(classify(1e-9, 1e-8), Classification::Redundant);
        assert_eq!(classify(-1e-9, 1e-8), Classification::Redundant);
        assert_eq!(classify(-1.0, 1e-8), Classification::Degrading);
    }
}
