//! Polak–Ribière conjugate-gradient descent on the eigenvalue misfit, with
//! plain steepest descent as a reference mode.
//!
//! Each iteration minimizes the one-dimensional function α ↦ G(q − α d) by
//! bracketing plus golden-section/parabolic refinement; eigenvalue solves are
//! warm-started from the previous probe throughout.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::functional::{
    self, FunctionalError, LambdaHints, SpectralIndex, TargetSpectra, WeightScheme,
};
use crate::grid::{GridError, GridFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerMode {
    Prcg,
    SteepestDescent,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    /// Stop once G drops below this (absolute).
    pub g_tolerance: f64,
    pub mode: OptimizerMode,
    /// Forget the previous direction every this many iterations.
    pub restart_period: usize,
    /// Relative width of the final line-search bracket.
    pub line_search_tolerance: f64,
    /// Some(∫Q) switches to the mean-preserving functional.
    pub mean_q_target: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iterations: 500,
            g_tolerance: 1e-18,
            mode: OptimizerMode::Prcg,
            restart_period: 20,
            line_search_tolerance: 1e-3,
            mean_q_target: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationReason {
    Tolerance,
    MaxIterations,
    Stalled,
}

/// One accepted iterate: objective value, distance to the known potential
/// (when available), worst eigenvalue misfit, and the accepted step length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub g_value: f64,
    pub delta2: Option<f64>,
    pub delta_lambda: f64,
    pub step_size: f64,
}

#[derive(Debug, Clone)]
pub struct ReconstructionReport {
    pub trace: Vec<IterationRecord>,
    pub final_q: GridFunction,
    pub converged: bool,
    pub termination_reason: TerminationReason,
}

impl ReconstructionReport {
    pub fn final_g(&self) -> f64 {
        self.trace.last().expect("trace is never empty").g_value
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,g_value,delta2,delta_lambda,step_size\n");
        for r in &self.trace {
            let d2 = r.delta2.map(|d| format!("{d:.12e}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{:.12e},{},{:.12e},{:.12e}\n",
                r.iteration, r.g_value, d2, r.delta_lambda, r.step_size
            ));
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum LineSearchError<E> {
    /// The objective increases in every probed direction scale.
    #[error("no descent: objective increases immediately along the direction")]
    NoDescent,
    #[error(transparent)]
    Inner(E),
}

/// Minimize a one-dimensional objective α ↦ φ(α) for α ≥ 0, given
/// φ(0) = `phi0`. Brackets a minimum by geometric expansion from
/// `alpha_init`, then refines by golden-section steps with parabolic
/// shortcuts until the bracket width shrinks below `rel_tol` relative to the
/// minimizer. Returns (α*, φ(α*)) with φ(α*) ≤ φ(0); (0, φ(0)) means no
/// improvement is possible at any probed scale.
pub fn line_search<E>(
    mut phi: impl FnMut(f64) -> Result<f64, E>,
    phi0: f64,
    alpha_init: f64,
    rel_tol: f64,
) -> Result<(f64, f64), LineSearchError<E>> {
    assert!(alpha_init > 0.0 && rel_tol > 0.0);
    let mut call = |a: f64| phi(a).map_err(LineSearchError::Inner);

    // Find any improving step, shrinking geometrically if needed.
    let mut a1 = alpha_init;
    let mut f1 = call(a1)?;
    let mut shrinks = 0;
    while f1 >= phi0 && shrinks < 24 {
        a1 *= 0.25;
        f1 = call(a1)?;
        shrinks += 1;
    }
    if f1 >= phi0 {
        // Flat at machine scale (e.g. already at the minimum) is benign;
        // a genuine increase at the smallest scale is a bad direction.
        if f1 - phi0 > 1e-14 * (1.0 + phi0.abs()) {
            return Err(LineSearchError::NoDescent);
        }
        return Ok((0.0, phi0));
    }

    // Expand until the objective turns back up: bracket (a0, a1, a2).
    let mut a0 = 0.0;
    let mut f0 = phi0;
    let mut a2 = 2.0 * a1;
    let mut f2 = call(a2)?;
    let mut expansions = 0;
    while f2 < f1 && expansions < 60 {
        a0 = a1;
        f0 = f1;
        a1 = a2;
        f1 = f2;
        a2 *= 2.0;
        f2 = call(a2)?;
        expansions += 1;
    }

    // Refine: keep f1 < min(f0, f2), shrink [a0, a2].
    const INV_GOLD: f64 = 0.381_966_011_250_105; // 2 − φ
    for _ in 0..100 {
        if a2 - a0 <= rel_tol * a1.abs() {
            break;
        }
        // Parabola through the three points; fall back to golden section.
        let (la, lf) = (a1 - a0, f1 - f0);
        let (ra, rf) = (a2 - a1, f2 - f1);
        let denom = ra * lf - la * rf;
        let mut u = if denom.abs() > 0.0 {
            a1 - 0.5 * (la * la * rf + ra * ra * lf) / denom
        } else {
            f64::NAN
        };
        let margin = 0.1 * (a2 - a0);
        if !(u.is_finite() && u > a0 + margin && u < a2 - margin && (u - a1).abs() > 1e-3 * margin)
        {
            u = if a1 - a0 > a2 - a1 {
                a1 - INV_GOLD * (a1 - a0)
            } else {
                a1 + INV_GOLD * (a2 - a1)
            };
        }
        let fu = call(u)?;
        if fu < f1 {
            if u < a1 {
                a2 = a1;
                f2 = f1;
            } else {
                a0 = a1;
                f0 = f1;
            }
            a1 = u;
            f1 = fu;
        } else if u < a1 {
            a0 = u;
            f0 = fu;
        } else {
            a2 = u;
            f2 = fu;
        }
    }
    Ok((a1, f1))
}

/// Δ₂ = ‖q − Q‖₂ (when Q is known) and Δ_λ = max |residual|.
pub fn metrics(
    q: &GridFunction,
    known_q: Option<&GridFunction>,
    residuals: &BTreeMap<SpectralIndex, f64>,
) -> Result<(Option<f64>, f64), GridError> {
    let delta2 = match known_q {
        Some(big_q) => Some(GridFunction::axpy(-1.0, big_q, q)?.l2_norm()),
        None => None,
    };
    let delta_lambda = residuals.values().fold(0.0_f64, |m, r| m.max(r.abs()));
    Ok((delta2, delta_lambda))
}

/// Run the descent from `q0`. `known_q` is only used for the Δ₂ diagnostic.
pub fn minimize(
    q0: &GridFunction,
    targets: &TargetSpectra,
    weights: &WeightScheme,
    config: &OptimizerConfig,
    known_q: Option<&GridFunction>,
) -> Result<ReconstructionReport, FunctionalError> {
    let mean_q = config.mean_q_target;
    let full = |q: &GridFunction, hints: Option<&LambdaHints>| match mean_q {
        None => functional::evaluate_with_hints(q, targets, weights, hints),
        Some(m) => functional::evaluate_tilde_with_hints(q, targets, weights, m, hints),
    };

    let mut q = q0.clone();
    let mut eval = full(&q, None)?;
    let (d2, dl) = metrics(&q, known_q, &eval.residuals)?;
    let mut trace = vec![IterationRecord {
        iteration: 0,
        g_value: eval.value,
        delta2: d2,
        delta_lambda: dl,
        step_size: 0.0,
    }];

    let mut direction: Option<GridFunction> = None; // previous d
    let mut prev_grad: Option<GridFunction> = None;
    let mut prev_gg = 0.0;
    let mut since_restart = 0;
    let mut stall_count = 0;
    let mut alpha_prev: Option<f64> = None;

    let mut reason = TerminationReason::MaxIterations;
    if eval.value < config.g_tolerance {
        reason = TerminationReason::Tolerance;
    } else {
        for iteration in 1..=config.max_iterations {
            let grad = eval.gradient.clone();
            let gg = grad.inner(&grad)?;
            if gg == 0.0 {
                reason = TerminationReason::Stalled;
                break;
            }

            // Direction update: PR+ with periodic restart; steepest descent
            // is the β ≡ 0 special case.
            let mut beta = 0.0;
            if config.mode == OptimizerMode::Prcg && since_restart < config.restart_period {
                if let (Some(pg), Some(_)) = (&prev_grad, &direction) {
                    beta = ((gg - grad.inner(pg)?) / prev_gg).max(0.0);
                }
            }
            let mut d = match (&direction, beta > 0.0) {
                (Some(dp), true) => GridFunction::axpy(beta, dp, &grad)?,
                _ => grad.clone(),
            };
            if d.inner(&grad)? <= 0.0 {
                // Not a descent direction: restart.
                d = grad.clone();
                beta = 0.0;
            }
            if beta == 0.0 {
                since_restart = 0;
            }

            // Line search along −d, warm-starting every probe's eigenvalue
            // brackets from the most recent probe.
            let mut hints = eval.lambdas();
            let dd = d.inner(&d)?;
            let alpha_init = alpha_prev.unwrap_or(eval.value / dd.max(1e-300)).max(1e-300);
            let phi0 = eval.value;
            let searched = line_search(
                |alpha| -> Result<f64, FunctionalError> {
                    let cand = GridFunction::axpy(-alpha, &d, &q)?;
                    let (v, lam) =
                        functional::value_with_hints(&cand, targets, weights, Some(&hints), mean_q)?;
                    hints = lam;
                    Ok(v)
                },
                phi0,
                alpha_init,
                config.line_search_tolerance,
            );
            let (alpha, value) = match searched {
                Ok(pair) => pair,
                Err(LineSearchError::NoDescent) => (0.0, phi0),
                Err(LineSearchError::Inner(e)) => return Err(e),
            };

            if alpha == 0.0 || value >= phi0 {
                // No progress along this direction. Forget history so the
                // next attempt is pure steepest descent; after repeated
                // failures we are at the numerical floor.
                direction = None;
                prev_grad = None;
                since_restart = 0;
                stall_count += 1;
                if stall_count >= 3 {
                    reason = TerminationReason::Stalled;
                    break;
                }
                continue;
            }

            let q_next = GridFunction::axpy(-alpha, &d, &q)?;
            let eval_next = full(&q_next, Some(&hints))?;
            if eval_next.value >= phi0 {
                // Re-evaluation noise at the floor; keep the last good iterate.
                reason = TerminationReason::Stalled;
                break;
            }
            if (phi0 - eval_next.value) < 1e-14 * phi0 {
                stall_count += 1;
            } else {
                stall_count = 0;
            }

            q = q_next;
            prev_gg = gg;
            prev_grad = Some(grad);
            direction = Some(d);
            since_restart += 1;
            alpha_prev = Some(alpha);
            eval = eval_next;

            let (d2, dl) = metrics(&q, known_q, &eval.residuals)?;
            trace.push(IterationRecord {
                iteration,
                g_value: eval.value,
                delta2: d2,
                delta_lambda: dl,
                step_size: alpha,
            });

            if eval.value < config.g_tolerance {
                reason = TerminationReason::Tolerance;
                break;
            }
            if stall_count >= 3 {
                reason = TerminationReason::Stalled;
                break;
            }
        }
    }

    Ok(ReconstructionReport {
        trace,
        final_q: q,
        converged: reason == TerminationReason::Tolerance,
        termination_reason: reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::BoundaryTriple;

    #[test]
    fn line_search_quadratic() {
        let phi = |a: f64| -> Result<f64, ()> { Ok((a - 2.0) * (a - 2.0)) };
        let (a, v) = line_search(phi, 4.0, 0.5, 1e-4).unwrap();
        assert!((a - 2.0).abs() < 1e-3, "alpha = {a}");
        assert!(v < 1e-5);
    }

    #[test]
    fn line_search_already_minimal() {
        let phi = |a: f64| -> Result<f64, ()> { Ok(a * a) };
        let (a, v) = line_search(phi, 0.0, 1.0, 1e-4).unwrap();
        assert_eq!(a, 0.0);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn line_search_rejects_ascent() {
        let phi = |a: f64| -> Result<f64, ()> { Ok(1.0 + a.sqrt()) };
        assert!(matches!(
            line_search(phi, 1.0, 1.0, 1e-4),
            Err(LineSearchError::NoDescent)
        ));
    }

    #[test]
    fn metrics_max_residual() {
        use crate::forward::Spectrum;
        let q = GridFunction::zero(16);
        let residuals: BTreeMap<_, _> = [
            (SpectralIndex::new(Spectrum::First, 0), 0.3),
            (SpectralIndex::new(Spectrum::First, 1), -0.5),
        ]
        .into_iter()
        .collect();
        let (d2, dl) = metrics(&q, Some(&q), &residuals).unwrap();
        assert_eq!(d2, Some(0.0));
        assert_eq!(dl, 0.5);
    }

    fn small_problem() -> (GridFunction, TargetSpectra) {
        let big_q =
            GridFunction::sample(128, |x| (2.0 * std::f64::consts::PI * x).cos()).unwrap();
        let bc = BoundaryTriple::default_angles();
        let targets = TargetSpectra::synthesize(&big_q, &bc, 5).unwrap();
        (big_q, targets)
    }

    #[test]
    fn exact_start_returns_immediately() {
        let (big_q, targets) = small_problem();
        let cfg = OptimizerConfig {
            g_tolerance: 1e-12,
            ..OptimizerConfig::default()
        };
        let report =
            minimize(&big_q, &targets, &WeightScheme::Uniform, &cfg, Some(&big_q)).unwrap();
        assert!(report.converged);
        assert_eq!(report.trace.len(), 1);
        assert_eq!(report.termination_reason, TerminationReason::Tolerance);
    }

    #[test]
    fn descent_makes_monotone_progress() {
        let (big_q, targets) = small_problem();
        let q0 = GridFunction::zero(128);
        let cfg = OptimizerConfig {
            max_iterations: 15,
            g_tolerance: 1e-16,
            ..OptimizerConfig::default()
        };
        let report = minimize(&q0, &targets, &WeightScheme::Uniform, &cfg, Some(&big_q)).unwrap();
        let g: Vec<f64> = report.trace.iter().map(|r| r.g_value).collect();
        assert!(g.len() > 5);
        for w in g.windows(2) {
            assert!(w[1] < w[0], "objective not decreasing: {w:?}");
        }
        assert!(
            g.last().unwrap() < &(1e-6 * g[0]),
            "insufficient reduction: {g:?}"
        );
        // Δ₂ improves too, though it is floored by the 5-pair truncation.
        let d2_first = report.trace[0].delta2.unwrap();
        let d2_last = report.trace.last().unwrap().delta2.unwrap();
        assert!(
            d2_last < 0.5 * d2_first,
            "delta2: {d2_first} -> {d2_last}"
        );
    }

    #[test]
    fn prcg_with_unit_restart_matches_steepest_descent() {
        let (_, targets) = small_problem();
        let q0 = GridFunction::zero(128);
        let run = |mode| {
            let cfg = OptimizerConfig {
                max_iterations: 4,
                restart_period: 1,
                mode,
                ..OptimizerConfig::default()
            };
            minimize(&q0, &targets, &WeightScheme::Uniform, &cfg, None).unwrap()
        };
        let a = run(OptimizerMode::Prcg);
        let b = run(OptimizerMode::SteepestDescent);
        assert_eq!(a.trace.len(), b.trace.len());
        for (ra, rb) in a.trace.iter().zip(&b.trace) {
            let rel = (ra.g_value - rb.g_value).abs() / ra.g_value.max(1e-300);
            assert!(rel < 1e-12, "{} vs {}", ra.g_value, rb.g_value);
        }
    }

    #[test]
    fn trace_csv_header() {
        let (big_q, targets) = small_problem();
        let cfg = OptimizerConfig {
            g_tolerance: 1e-12,
            ..OptimizerConfig::default()
        };
        let report =
            minimize(&big_q, &targets, &WeightScheme::Uniform, &cfg, Some(&big_q)).unwrap();
        let csv = report.trace_csv();
        assert!(csv.starts_with("iteration,g_value,delta2,delta_lambda,step_size\n"));
        assert_eq!(csv.lines().count(), 1 + report.trace.len());
    }
}
