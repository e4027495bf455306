//! The least-squares eigenvalue misfit G(q), its gradient, and the
//! mean-preserving variant G̃.
//!
//! For target eigenvalues λ_{Q,i,n} over a finite index set I,
//!
//!   G(q) = Σ_{(i,n) ∈ I} ω_{i,n} (λ_{q,i,n} − λ_{Q,i,n})²,
//!
//! and since dλ/dq in direction h is ∫ h g², the L² gradient is
//! ∇G = 2 Σ ω (λ_q − λ_Q) g²_{q,i,n}, assembled here on q's grid.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forward::{self, BoundaryTriple, EigenSolution, ForwardError, Spectrum};
use crate::grid::{GridError, GridFunction};

#[derive(Debug, Error)]
pub enum FunctionalError {
    #[error("target spectra contain no entries")]
    EmptyTargets,
    #[error("spectrum {spectrum} not strictly increasing: lambda[{n}] = {prev} >= lambda[{m}] = {next}")]
    NotIncreasing {
        spectrum: u8,
        n: u32,
        m: u32,
        prev: f64,
        next: f64,
    },
    #[error("no custom weight stored for index ({spectrum},{n})")]
    MissingWeight { spectrum: u8, n: u32 },
    #[error("weight for index ({spectrum},{n}) must be positive, got {weight}")]
    NonPositiveWeight { spectrum: u8, n: u32, weight: f64 },
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// (i, n): which spectrum an eigenvalue belongs to and its index within it.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SpectralIndex {
    pub spectrum: Spectrum,
    pub n: u32,
}

impl SpectralIndex {
    pub fn new(spectrum: Spectrum, n: u32) -> Self {
        SpectralIndex { spectrum, n }
    }
}

/// The data of the inverse problem: boundary angles plus the finite set of
/// prescribed eigenvalues λ_{Q,i,n}.
#[derive(Debug, Clone)]
pub struct TargetSpectra {
    bc: BoundaryTriple,
    entries: BTreeMap<SpectralIndex, f64>,
}

impl TargetSpectra {
    pub fn new(
        bc: BoundaryTriple,
        entries: BTreeMap<SpectralIndex, f64>,
    ) -> Result<Self, FunctionalError> {
        if entries.is_empty() {
            return Err(FunctionalError::EmptyTargets);
        }
        bc.validate()?;
        // BTreeMap iterates (spectrum, n) lexicographically, so adjacent keys
        // of the same spectrum are consecutive in n-order.
        let mut prev: Option<(SpectralIndex, f64)> = None;
        for (&idx, &lam) in &entries {
            if let Some((p_idx, p_lam)) = prev {
                if p_idx.spectrum == idx.spectrum && p_lam >= lam {
                    return Err(FunctionalError::NotIncreasing {
                        spectrum: idx.spectrum.index(),
                        n: p_idx.n,
                        m: idx.n,
                        prev: p_lam,
                        next: lam,
                    });
                }
            }
            prev = Some((idx, lam));
        }
        Ok(TargetSpectra { bc, entries })
    }

    /// Solve the forward problem for `q` and record the first `n_pairs`
    /// eigenvalues of both spectra as targets.
    pub fn synthesize(
        q: &GridFunction,
        bc: &BoundaryTriple,
        n_pairs: u32,
    ) -> Result<Self, FunctionalError> {
        let mut entries = BTreeMap::new();
        for spectrum in Spectrum::BOTH {
            for n in 0..n_pairs {
                let lambda = forward::eigenvalue(q, bc, spectrum, n)?;
                entries.insert(SpectralIndex::new(spectrum, n), lambda);
            }
        }
        TargetSpectra::new(*bc, entries)
    }

    pub fn bc(&self) -> &BoundaryTriple {
        &self.bc
    }

    pub fn entries(&self) -> &BTreeMap<SpectralIndex, f64> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Mean of the target eigenvalue magnitudes; a scale for tolerances.
    pub fn lambda_scale(&self) -> f64 {
        self.entries.values().map(|l| l.abs()).sum::<f64>() / self.len() as f64
    }
}

/// ω_{i,n}: all schemes produce strictly positive weights.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightScheme {
    Uniform,
    InverseSquareN,
    Custom(BTreeMap<SpectralIndex, f64>),
}

impl WeightScheme {
    pub fn weight_of(&self, idx: SpectralIndex) -> Result<f64, FunctionalError> {
        match self {
            WeightScheme::Uniform => Ok(1.0),
            WeightScheme::InverseSquareN => {
                let k = idx.n as f64 + 1.0;
                Ok(1.0 / (k * k))
            }
            WeightScheme::Custom(map) => {
                let w = *map.get(&idx).ok_or(FunctionalError::MissingWeight {
                    spectrum: idx.spectrum.index(),
                    n: idx.n,
                })?;
                if !(w > 0.0) {
                    return Err(FunctionalError::NonPositiveWeight {
                        spectrum: idx.spectrum.index(),
                        n: idx.n,
                        weight: w,
                    });
                }
                Ok(w)
            }
        }
    }
}

/// A full evaluation: value, per-index residuals λ_q − λ_Q, assembled
/// gradient, and the eigensolutions behind it (kept for warm starts and for
/// the structural-identity checks).
#[derive(Debug, Clone)]
pub struct FunctionalEval {
    pub value: f64,
    pub residuals: BTreeMap<SpectralIndex, f64>,
    pub gradient: GridFunction,
    pub eigensolutions: BTreeMap<SpectralIndex, EigenSolution>,
}

impl FunctionalEval {
    /// Computed eigenvalues per index, the natural warm-start hints for
    /// evaluations at nearby potentials.
    pub fn lambdas(&self) -> BTreeMap<SpectralIndex, f64> {
        self.eigensolutions
            .iter()
            .map(|(&idx, sol)| (idx, sol.lambda))
            .collect()
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.residuals.values().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Warm-start eigenvalue hints keyed by spectral index.
pub type LambdaHints = BTreeMap<SpectralIndex, f64>;

pub fn evaluate(
    q: &GridFunction,
    targets: &TargetSpectra,
    weights: &WeightScheme,
) -> Result<FunctionalEval, FunctionalError> {
    evaluate_with_hints(q, targets, weights, None)
}

pub fn evaluate_with_hints(
    q: &GridFunction,
    targets: &TargetSpectra,
    weights: &WeightScheme,
    hints: Option<&LambdaHints>,
) -> Result<FunctionalEval, FunctionalError> {
    evaluate_variant(q, targets, weights, hints, None)
}

/// The mean-preserving variant: residuals λ_{q,i,n} − λ_{Q,i,n} + ∫(Q − q),
/// gradient factor g² − 1 (mean-free, so the flow preserves ∫q).
pub fn evaluate_tilde(
    q: &GridFunction,
    targets: &TargetSpectra,
    weights: &WeightScheme,
    mean_q_target: f64,
) -> Result<FunctionalEval, FunctionalError> {
    evaluate_tilde_with_hints(q, targets, weights, mean_q_target, None)
}

pub fn evaluate_tilde_with_hints(
    q: &GridFunction,
    targets: &TargetSpectra,
    weights: &WeightScheme,
    mean_q_target: f64,
    hints: Option<&LambdaHints>,
) -> Result<FunctionalEval, FunctionalError> {
    evaluate_variant(q, targets, weights, hints, Some(mean_q_target))
}

/// Shared assembly for both functionals. `mean_q_target = Some(∫Q)` selects
/// the mean-preserving variant.
fn evaluate_variant(
    q: &GridFunction,
    targets: &TargetSpectra,
    weights: &WeightScheme,
    hints: Option<&LambdaHints>,
    mean_q_target: Option<f64>,
) -> Result<FunctionalEval, FunctionalError> {
    if targets.is_empty() {
        return Err(FunctionalError::EmptyTargets);
    }
    let shift = mean_q_target.map(|m| m - q.integrate()).unwrap_or(0.0);
    let mut value = 0.0;
    let mut residuals = BTreeMap::new();
    let mut eigensolutions = BTreeMap::new();
    let mut grad = vec![0.0; q.n_intervals() + 1];
    for (&idx, &lam_target) in targets.entries() {
        let w = weights.weight_of(idx)?;
        let hint = hints.and_then(|h| h.get(&idx)).copied();
        let sol = forward::eigenfunction_with_hint(q, targets.bc(), idx.spectrum, idx.n, hint)?;
        let r = sol.lambda - lam_target + shift;
        value += w * r * r;
        let coeff = 2.0 * w * r;
        let offset = if mean_q_target.is_some() { 1.0 } else { 0.0 };
        for (gk, &g2k) in grad.iter_mut().zip(sol.g_squared.values()) {
            *gk += coeff * (g2k - offset);
        }
        residuals.insert(idx, r);
        eigensolutions.insert(idx, sol);
    }
    Ok(FunctionalEval {
        value,
        residuals,
        gradient: GridFunction::make(grad)?,
        eigensolutions,
    })
}

/// Value-only evaluation (no eigenfunction integration); the cheap path for
/// line-search probes. Returns the value and the solved eigenvalues so the
/// next probe can warm-start from them.
pub fn value_with_hints(
    q: &GridFunction,
    targets: &TargetSpectra,
    weights: &WeightScheme,
    hints: Option<&LambdaHints>,
    mean_q_target: Option<f64>,
) -> Result<(f64, LambdaHints), FunctionalError> {
    if targets.is_empty() {
        return Err(FunctionalError::EmptyTargets);
    }
    let shift = mean_q_target.map(|m| m - q.integrate()).unwrap_or(0.0);
    let mut value = 0.0;
    let mut lambdas = BTreeMap::new();
    for (&idx, &lam_target) in targets.entries() {
        let w = weights.weight_of(idx)?;
        let hint = hints.and_then(|h| h.get(&idx)).copied();
        let lambda =
            forward::eigenvalue_with_hint(q, targets.bc(), idx.spectrum, idx.n, hint)?;
        let r = lambda - lam_target + shift;
        value += w * r * r;
        lambdas.insert(idx, lambda);
    }
    Ok((value, lambdas))
}

/// Compare inner(∇G, h) against the central difference
/// (G(q+εh) − G(q−εh)) / 2ε. Returns (analytic, finite_difference).
pub fn gradient_check(
    q: &GridFunction,
    targets: &TargetSpectra,
    weights: &WeightScheme,
    h: &GridFunction,
    epsilon: f64,
) -> Result<(f64, f64), FunctionalError> {
    assert!(epsilon > 0.0, "epsilon must be positive");
    let eval = evaluate(q, targets, weights)?;
    let analytic = eval.gradient.inner(h)?;
    let hints = eval.lambdas();
    let plus = GridFunction::axpy(epsilon, h, q)?;
    let minus = GridFunction::axpy(-epsilon, h, q)?;
    let (gp, _) = value_with_hints(&plus, targets, weights, Some(&hints), None)?;
    let (gm, _) = value_with_hints(&minus, targets, weights, Some(&hints), None)?;
    Ok((analytic, (gp - gm) / (2.0 * epsilon)))
}

/// Which interlacing pattern a pair of spectra follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InterlacingPattern {
    /// λ_{1,n} < λ_{2,n} < λ_{1,n+1}
    FirstBelow,
    /// λ_{2,n} < λ_{1,n} < λ_{2,n+1}
    SecondBelow,
}

/// Diagnostic (never an error): do the targets interlace, and where do they
/// fail if not.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterlacingReport {
    pub holds: bool,
    pub pattern: Option<InterlacingPattern>,
    /// Indices n at which the better-fitting pattern is violated.
    pub violations: Vec<u32>,
}

pub fn validate_interlacing(targets: &TargetSpectra) -> InterlacingReport {
    let mut first = BTreeMap::new();
    let mut second = BTreeMap::new();
    for (&idx, &lam) in targets.entries() {
        match idx.spectrum {
            Spectrum::First => first.insert(idx.n, lam),
            Spectrum::Second => second.insert(idx.n, lam),
        };
    }
    let violations_for = |low: &BTreeMap<u32, f64>, high: &BTreeMap<u32, f64>| {
        // Pattern low[n] < high[n] < low[n+1].
        let mut bad = Vec::new();
        for (&n, &l) in low {
            if let Some(&h) = high.get(&n) {
                let next_ok = match low.get(&(n + 1)) {
                    Some(&l_next) => h < l_next,
                    None => true,
                };
                if !(l < h && next_ok) {
                    bad.push(n);
                }
            }
        }
        bad
    };
    let first_below = violations_for(&first, &second);
    let second_below = violations_for(&second, &first);
    if first_below.is_empty() {
        InterlacingReport {
            holds: true,
            pattern: Some(InterlacingPattern::FirstBelow),
            violations: Vec::new(),
        }
    } else if second_below.is_empty() {
        InterlacingReport {
            holds: true,
            pattern: Some(InterlacingPattern::SecondBelow),
            violations: Vec::new(),
        }
    } else if first_below.len() <= second_below.len() {
        InterlacingReport {
            holds: false,
            pattern: Some(InterlacingPattern::FirstBelow),
            violations: first_below,
        }
    } else {
        InterlacingReport {
            holds: false,
            pattern: Some(InterlacingPattern::SecondBelow),
            violations: second_below,
        }
    }
}
