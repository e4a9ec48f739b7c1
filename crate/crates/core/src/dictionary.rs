//! Basis-function library: polynomial terms plus optional known drift terms.
//!
//! Polynomial columns come first in graded lexicographic order (total degree,
//! then lexicographic in variable index), followed by the known drift
//! functions in the order they were registered.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{BrslError, Result};

pub type DriftFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A named scalar function of the state whose form is known a priori.
#[derive(Clone)]
pub struct KnownDrift {
    pub name: String,
    pub func: DriftFn,
}

impl fmt::Debug for KnownDrift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KnownDrift").field("name", &self.name).finish()
    }
}

/// One sampled instant: timestamp, state and observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub timestamp: f64,
    pub state: Vec<f64>,
    pub observation: Vec<f64>,
}

impl Sample {
    pub fn new(timestamp: f64, state: Vec<f64>, observation: Vec<f64>) -> Self {
        Self {
            timestamp,
            state,
            observation,
        }
    }
}

/// Description of the dictionary `Ψ_d`.
#[derive(Debug, Clone)]
pub struct DictionarySpec {
    state_dim: usize,
    poly_degree: usize,
    include_bias: bool,
    known_drift: Vec<KnownDrift>,
    column_scale: Option<Vec<f64>>,
    /// Exponent vector for each polynomial column.
    monomials: Vec<Vec<u32>>,
    labels: Vec<String>,
}

impl DictionarySpec {
    /// Every monomial of total degree `0..=poly_degree` in `state_dim`
    /// variables (the constant term only when `include_bias`).
    pub fn polynomial(state_dim: usize, poly_degree: usize, include_bias: bool) -> Result<Self> {
        if state_dim == 0 {
            return Err(BrslError::InvalidConfig("state dimension must be positive".into()));
        }
        let mut monomials = Vec::new();
        let start = if include_bias { 0 } else { 1 };
        for degree in start..=poly_degree {
            push_monomials(state_dim, degree, &mut monomials);
        }
        let labels = monomials.iter().map(|e| monomial_label(e)).collect();
        Ok(Self {
            state_dim,
            poly_degree,
            include_bias,
            known_drift: Vec::new(),
            column_scale: None,
            monomials,
            labels,
        })
    }

    /// Appends a known drift column after all polynomial columns.
    pub fn with_drift(
        mut self,
        name: impl Into<String>,
        func: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let name = name.into();
        if self.labels.contains(&name) {
            return Err(BrslError::InvalidConfig(format!("duplicate column label {name:?}")));
        }
        self.labels.push(name.clone());
        self.known_drift.push(KnownDrift {
            name,
            func: Arc::new(func),
        });
        if let Some(scale) = &mut self.column_scale {
            scale.push(1.0);
        }
        Ok(self)
    }

    /// Multiplies column `j` by `scale[j]` in every generated row.
    pub fn with_column_scale(mut self, scale: Vec<f64>) -> Result<Self> {
        if scale.len() != self.n_terms() {
            return Err(BrslError::DimensionMismatch(format!(
                "{} column scales for {} columns",
                scale.len(),
                self.n_terms()
            )));
        }
        if scale.iter().any(|s| !s.is_finite() || *s == 0.0) {
            return Err(BrslError::InvalidConfig("column scales must be finite and non-zero".into()));
        }
        self.column_scale = Some(scale);
        Ok(self)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn poly_degree(&self) -> usize {
        self.poly_degree
    }

    pub fn include_bias(&self) -> bool {
        self.include_bias
    }

    pub fn known_drift(&self) -> &[KnownDrift] {
        &self.known_drift
    }

    /// Number of columns `n_p`.
    pub fn n_terms(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn monomials(&self) -> &[Vec<u32>] {
        &self.monomials
    }

    /// Column index of the monomial with the given exponents, if present.
    pub fn monomial_index(&self, exponents: &[u32]) -> Option<usize> {
        self.monomials.iter().position(|m| m.as_slice() == exponents)
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Evaluates every column at one state.
    pub fn build_row(&self, state: &[f64]) -> Result<DVector<f64>> {
        if state.len() != self.state_dim {
            return Err(BrslError::DimensionMismatch(format!(
                "state of length {} for a dictionary over {} variables",
                state.len(),
                self.state_dim
            )));
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(BrslError::NonFiniteInput(format!("state {state:?}")));
        }
        let mut row = DVector::zeros(self.n_terms());
        self.fill_row(state, row.as_mut_slice());
        Ok(row)
    }

    fn fill_row(&self, state: &[f64], out: &mut [f64]) {
        for (slot, exps) in out.iter_mut().zip(&self.monomials) {
            *slot = exps
                .iter()
                .zip(state)
                .filter(|(e, _)| **e > 0)
                .map(|(e, x)| x.powi(*e as i32))
                .product();
        }
        let offset = self.monomials.len();
        for (slot, drift) in out[offset..].iter_mut().zip(&self.known_drift) {
            *slot = (drift.func)(state);
        }
        if let Some(scale) = &self.column_scale {
            for (v, s) in out.iter_mut().zip(scale) {
                *v *= s;
            }
        }
    }

    /// Stacks `build_row` for each state, preserving order.
    pub fn build_matrix<S: AsRef<[f64]>>(&self, states: &[S]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(states.len(), self.n_terms());
        for (i, s) in states.iter().enumerate() {
            let row = self.build_row(s.as_ref())?;
            m.set_row(i, &row.transpose());
        }
        Ok(m)
    }

    /// `ΨᵀΨ` over the given states. Empty input gives the zero matrix.
    pub fn gram<S: AsRef<[f64]>>(&self, states: &[S]) -> Result<DMatrix<f64>> {
        let n = self.n_terms();
        let mut g = DMatrix::zeros(n, n);
        for s in states {
            let row = self.build_row(s.as_ref())?;
            g.ger(1.0, &row, &row, 1.0);
        }
        Ok(g)
    }
}

fn push_monomials(n_vars: usize, degree: usize, out: &mut Vec<Vec<u32>>) {
    // Non-decreasing index tuples (i1 <= i2 <= ... <= i_degree) enumerate
    // monomials of one degree in lexicographic order.
    fn rec(n_vars: usize, remaining: usize, start: usize, exps: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if remaining == 0 {
            out.push(exps.clone());
            return;
        }
        for i in start..n_vars {
            exps[i] += 1;
            rec(n_vars, remaining - 1, i, exps, out);
            exps[i] -= 1;
        }
    }
    let mut exps = vec![0u32; n_vars];
    rec(n_vars, degree, 0, &mut exps, out);
}

fn monomial_label(exps: &[u32]) -> String {
    let parts: Vec<String> = exps
        .iter()
        .enumerate()
        .filter(|(_, e)| **e > 0)
        .map(|(i, e)| {
            if *e == 1 {
                format!("x{}", i + 1)
            } else {
                format!("x{}^{}", i + 1, e)
            }
        })
        .collect();
    if parts.is_empty() {
        "1".to_string()
    } else {
        parts.join("*")
    }
}

/// Number of monomials of total degree at most `degree` in `n` variables.
pub fn monomial_count(n: usize, degree: usize) -> usize {
    // C(n + degree, degree)
    (1..=degree).fold(1usize, |acc, k| acc * (n + k) / k)
}
