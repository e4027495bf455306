//! Forward Sturm-Liouville solver: eigenvalues and normalized eigenfunctions
//! of -u'' + q u = λ u on [0,1] under separated boundary conditions, via
//! Prüfer-phase shooting with bracketing and bisection/secant refinement.

use crate::grid::{GridError, GridFunction};
use crate::ode::{self, OdeError};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Integrator tolerances: eigenvalue accuracy has to exceed what the
/// optimizer needs by a couple of digits.
pub const ODE_RTOL: f64 = 1e-12;
pub const ODE_ATOL: f64 = 1e-12;

/// Relative bracket width at which the eigenvalue search stops.
pub const LAMBDA_TOL: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum ForwardError {
    #[error("invalid boundary triple: |sin(beta - gamma)| = {0:e} too small")]
    InvalidBoundary(f64),
    #[error("phase integration failed: {0}")]
    IntegrationFailure(#[from] OdeError),
    #[error("bracketing failed for spectrum {spectrum}, n = {n}: {detail}")]
    BracketFailure {
        spectrum: u8,
        n: u32,
        detail: String,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Which of the two spectra an eigenvalue belongs to: right-end angle β or γ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Spectrum {
    First,
    Second,
}

impl Spectrum {
    pub const BOTH: [Spectrum; 2] = [Spectrum::First, Spectrum::Second];

    pub fn index(self) -> u8 {
        match self {
            Spectrum::First => 1,
            Spectrum::Second => 2,
        }
    }
}

impl TryFrom<u8> for Spectrum {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Spectrum::First),
            2 => Ok(Spectrum::Second),
            _ => Err(format!("spectrum index must be 1 or 2, got {v}")),
        }
    }
}

impl From<Spectrum> for u8 {
    fn from(s: Spectrum) -> u8 {
        s.index()
    }
}

/// The three angles defining the two spectral problems: α at x=0 shared,
/// β resp. γ at x=1.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundaryTriple {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl BoundaryTriple {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, ForwardError> {
        let s = (beta - gamma).sin().abs();
        if s <= 1e-12 {
            return Err(ForwardError::InvalidBoundary(s));
        }
        Ok(BoundaryTriple { alpha, beta, gamma })
    }

    /// Paper defaults: α = β = 0, γ = π/2.
    pub fn default_angles() -> Self {
        BoundaryTriple {
            alpha: 0.0,
            beta: 0.0,
            gamma: PI / 2.0,
        }
    }

    pub fn right_angle(&self, spectrum: Spectrum) -> f64 {
        match spectrum {
            Spectrum::First => self.beta,
            Spectrum::Second => self.gamma,
        }
    }

    pub fn validate(&self) -> Result<(), ForwardError> {
        Self::new(self.alpha, self.beta, self.gamma).map(|_| ())
    }
}

/// One eigenvalue with its L²-normalized eigenfunction and its square.
#[derive(Debug, Clone)]
pub struct EigenSolution {
    pub spectrum: Spectrum,
    pub n: u32,
    pub lambda: f64,
    pub g: GridFunction,
    pub g_squared: GridFunction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RightKind {
    /// s-solution: value sin β, derivative -cos β at x = 1.
    S,
    /// c-solution: value sin γ, derivative -cos γ at x = 1.
    C,
}

/// Solution of (SL) anchored by initial values at the right endpoint.
#[derive(Debug, Clone)]
pub struct RightSolution {
    pub kind: RightKind,
    pub n: u32,
    pub lambda: f64,
    pub values: GridFunction,
}

/// Initial Prüfer angle θ(0) in [0,π) so that u(0)cosα + u'(0)sinα = 0
/// with u = ρ sinθ, u' = ρ cosθ.
pub fn left_phase(alpha: f64) -> f64 {
    (-alpha).rem_euclid(PI)
}

/// Target phase θ(1) for the n-th eigenvalue under right-end angle `angle`:
/// the representative of -angle mod π in (0, π], shifted by nπ. The phase
/// crosses multiples of π only upward, so this pins the oscillation count.
pub fn right_target_phase(angle: f64, n: u32) -> f64 {
    let mut base = (-angle).rem_euclid(PI);
    if base <= 0.0 {
        base = PI;
    }
    base + n as f64 * PI
}

/// Leading eigenvalue asymptotics for boundary angles (α, right-end angle).
/// Case selection is total: the three cases partition the angle pairs.
pub fn asymptotic_estimate(bc: &BoundaryTriple, spectrum: Spectrum, n: u32, mean_q: f64) -> f64 {
    let a = bc.alpha;
    let b = bc.right_angle(spectrum);
    let nf = n as f64;
    let (sa, sb) = (a.sin(), b.sin());
    if (sa * sb).abs() > 1e-9 {
        PI * PI * nf * nf - 2.0 * (b - a).sin() / (sa * sb) + mean_q
    } else if (b - a).sin().abs() > 1e-9 {
        PI * PI * (nf + 0.5) * (nf + 0.5) + 2.0 * a.cos() * b.cos() / (b - a).sin() + mean_q
    } else {
        PI * PI * (nf + 1.0) * (nf + 1.0) + mean_q
    }
}

/// Integrate the Prüfer phase θ' = cos²θ + (λ - q)sin²θ from θ(0) = θ₀(α)
/// to x = 1. Strictly increasing in λ for fixed q.
pub fn pruefer_angle_at_right(
    q: &GridFunction,
    lambda: f64,
    alpha: f64,
) -> Result<f64, ForwardError> {
    let theta0 = left_phase(alpha);
    let rhs = |x: f64, y: &[f64; 1]| {
        let (s, c) = y[0].sin_cos();
        [c * c + (lambda - q_at(q, x)) * s * s]
    };
    let y = ode::integrate(rhs, 0.0, 1.0, [theta0], ODE_RTOL, ODE_ATOL)?;
    Ok(y[0])
}

fn q_at(q: &GridFunction, x: f64) -> f64 {
    // Stage abscissae can land a rounding error outside [0,1].
    q.eval(x.clamp(0.0, 1.0)).expect("clamped into domain")
}

/// Scaled Prüfer phase: with u = r sin θ̃, u' = S r cos θ̃ the phase obeys
/// θ̃' = S cos²θ̃ + ((λ-q)/S) sin²θ̃. For S = √λ the right-hand side stays
/// O(√λ + q/√λ), so high eigenvalues integrate in few steps; S = 1 recovers
/// the textbook equation. Multiples of π are fixed points of the rescaling,
/// so oscillation counting is unchanged.
fn scaled_phase_at_right(
    q: &GridFunction,
    lambda: f64,
    alpha: f64,
    s: f64,
) -> Result<f64, ForwardError> {
    let theta0 = (-s * alpha.sin()).atan2(alpha.cos()).rem_euclid(PI);
    let rhs = |x: f64, y: &[f64; 1]| {
        let (sn, cs) = y[0].sin_cos();
        [s * cs * cs + (lambda - q_at(q, x)) / s * sn * sn]
    };
    let y = ode::integrate(rhs, 0.0, 1.0, [theta0], ODE_RTOL, ODE_ATOL)?;
    Ok(y[0])
}

/// Target phase of the scaled Prüfer angle: tan θ̃(1) = -S tan(angle),
/// branch in (0, π], shifted by nπ.
fn scaled_target_phase(angle: f64, n: u32, s: f64) -> f64 {
    let mut base = (-s * angle.sin()).atan2(angle.cos()).rem_euclid(PI);
    if base <= 0.0 {
        base = PI;
    }
    base + n as f64 * PI
}

fn phase_scale(lambda: f64) -> f64 {
    lambda.max(1.0).sqrt()
}

/// The eigenvalue λ_{q,i,n}: unique λ with θ(1;λ) equal to the target phase.
pub fn eigenvalue(
    q: &GridFunction,
    bc: &BoundaryTriple,
    spectrum: Spectrum,
    n: u32,
) -> Result<f64, ForwardError> {
    eigenvalue_with_hint(q, bc, spectrum, n, None)
}

/// Same as [`eigenvalue`], with an optional warm-start center for the bracket
/// (e.g. the eigenvalue at a nearby potential during a line search).
pub fn eigenvalue_with_hint(
    q: &GridFunction,
    bc: &BoundaryTriple,
    spectrum: Spectrum,
    n: u32,
    hint: Option<f64>,
) -> Result<f64, ForwardError> {
    let angle = bc.right_angle(spectrum);
    // Signed phase defect; same sign structure as the unscaled phase versus
    // its target, since the rescaling is a monotone circle map fixing kπ.
    let phase = |lambda: f64| -> Result<f64, ForwardError> {
        let s = phase_scale(lambda);
        Ok(scaled_phase_at_right(q, lambda, bc.alpha, s)? - scaled_target_phase(angle, n, s))
    };

    let (center, mut width) = match hint {
        Some(h) => (h, (1e-3 * h.abs()).max(0.5)),
        None => {
            let est = asymptotic_estimate(bc, spectrum, n, q.integrate());
            // Half the gap to the neighboring estimates, floored at 10.
            let up = asymptotic_estimate(bc, spectrum, n + 1, q.integrate());
            let down = if n > 0 {
                asymptotic_estimate(bc, spectrum, n - 1, q.integrate())
            } else {
                est - (up - est)
            };
            let gap = (up - est).min(est - down).abs();
            (est, (0.5 * gap).max(10.0))
        }
    };

    let mut lo = center - width;
    let mut hi = center + width;
    let mut p_lo = phase(lo)?;
    let mut p_hi = phase(hi)?;
    let mut expansions = 0;
    while p_lo > 0.0 {
        width *= 2.0;
        lo -= width;
        p_lo = phase(lo)?;
        expansions += 1;
        if expansions > 60 {
            return Err(ForwardError::BracketFailure {
                spectrum: spectrum.index(),
                n,
                detail: format!("phase never fell below target going down to λ = {lo:e}"),
            });
        }
    }
    while p_hi < 0.0 {
        width *= 2.0;
        hi += width;
        p_hi = phase(hi)?;
        expansions += 1;
        if expansions > 60 {
            return Err(ForwardError::BracketFailure {
                spectrum: spectrum.index(),
                n,
                detail: format!("phase never exceeded target going up to λ = {hi:e}"),
            });
        }
    }

    // Illinois-damped regula falsi with bisection safeguard: the phase is
    // smooth and strictly monotone, so the bracket shrinks fast.
    let mut side = 0i32;
    let mut last_two = [(lo, p_lo), (hi, p_hi)];
    for _ in 0..200 {
        if hi - lo <= LAMBDA_TOL * lo.abs().max(hi.abs()).max(1.0) {
            break;
        }
        let denom = p_hi - p_lo;
        let mut x = if denom.abs() > 0.0 {
            lo - p_lo * (hi - lo) / denom
        } else {
            0.5 * (lo + hi)
        };
        let margin = 1e-3 * (hi - lo);
        if !(x > lo + margin && x < hi - margin) {
            x = 0.5 * (lo + hi);
        }
        let p = phase(x)?;
        if p == 0.0 {
            return Ok(x);
        }
        last_two = [last_two[1], (x, p)];
        if p < 0.0 {
            lo = x;
            p_lo = p;
            if side == -1 {
                p_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            p_hi = p;
            if side == 1 {
                p_lo *= 0.5;
            }
            side = 1;
        }
    }

    // Secant polish through the last two genuinely evaluated points (the
    // Illinois damping rescales bracket residuals, so those are unusable).
    let ((x1, p1), (x2, p2)) = (last_two[0], last_two[1]);
    if (p2 - p1).abs() > 0.0 {
        let x = x2 - p2 * (x2 - x1) / (p2 - p1);
        if x >= lo && x <= hi {
            return Ok(x);
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Integrate (SL) at λ = λ_{q,i,n} from the left boundary data and normalize.
/// Sign convention: g'(0) > 0, falling back to g(0) > 0 when g'(0) vanishes.
pub fn eigenfunction(
    q: &GridFunction,
    bc: &BoundaryTriple,
    spectrum: Spectrum,
    n: u32,
) -> Result<EigenSolution, ForwardError> {
    eigenfunction_with_hint(q, bc, spectrum, n, None)
}

pub fn eigenfunction_with_hint(
    q: &GridFunction,
    bc: &BoundaryTriple,
    spectrum: Spectrum,
    n: u32,
    hint: Option<f64>,
) -> Result<EigenSolution, ForwardError> {
    let lambda = eigenvalue_with_hint(q, bc, spectrum, n, hint)?;
    let u = shoot_on_grid(q, lambda, (-bc.alpha.sin(), bc.alpha.cos()))?;
    let g_raw = GridFunction::make(u)?;
    let norm = g_raw.l2_norm();
    let mut scale = 1.0 / norm;
    let d0 = bc.alpha.cos();
    let v0 = -bc.alpha.sin();
    let flip = if d0.abs() > 1e-12 { d0 < 0.0 } else { v0 < 0.0 };
    if flip {
        scale = -scale;
    }
    let g = g_raw.scale(scale);
    let g_squared = g.product(&g)?;
    Ok(EigenSolution {
        spectrum,
        n,
        lambda,
        g,
        g_squared,
    })
}

/// Left-to-right solution values of -u'' + qu = λu on the nodes of q's grid.
fn shoot_on_grid(
    q: &GridFunction,
    lambda: f64,
    init: (f64, f64),
) -> Result<Vec<f64>, ForwardError> {
    let n = q.n_intervals();
    let nodes: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
    let mut u = Vec::with_capacity(n + 1);
    let rhs = |x: f64, y: &[f64; 2]| [y[1], (q_at(q, x) - lambda) * y[0]];
    ode::integrate_with_checkpoints(
        rhs,
        0.0,
        1.0,
        [init.0, init.1],
        ODE_RTOL,
        ODE_ATOL,
        &nodes,
        |_, y| u.push(y[0]),
    )?;
    Ok(u)
}

/// The right-anchored solutions s_{i,n} (angle β data) and c_{i,n} (angle γ
/// data) at λ = λ_{q,i,n}, integrated backwards from x = 1.
pub fn right_solutions(
    q: &GridFunction,
    bc: &BoundaryTriple,
    spectrum: Spectrum,
    n: u32,
) -> Result<(RightSolution, RightSolution), ForwardError> {
    let lambda = eigenvalue(q, bc, spectrum, n)?;
    let s = shoot_backwards(q, lambda, (bc.beta.sin(), -bc.beta.cos()))?;
    let c = shoot_backwards(q, lambda, (bc.gamma.sin(), -bc.gamma.cos()))?;
    Ok((
        RightSolution {
            kind: RightKind::S,
            n,
            lambda,
            values: GridFunction::make(s)?,
        },
        RightSolution {
            kind: RightKind::C,
            n,
            lambda,
            values: GridFunction::make(c)?,
        },
    ))
}

fn shoot_backwards(
    q: &GridFunction,
    lambda: f64,
    init: (f64, f64),
) -> Result<Vec<f64>, ForwardError> {
    let n = q.n_intervals();
    let nodes: Vec<f64> = (0..=n).rev().map(|k| k as f64 / n as f64).collect();
    let mut u = Vec::with_capacity(n + 1);
    let rhs = |x: f64, y: &[f64; 2]| [y[1], (q_at(q, x) - lambda) * y[0]];
    ode::integrate_with_checkpoints(
        rhs,
        1.0,
        0.0,
        [init.0, init.1],
        ODE_RTOL,
        ODE_ATOL,
        &nodes,
        |_, y| u.push(y[0]),
    )?;
    u.reverse();
    Ok(u)
}

/// Count sign changes of the node values strictly inside (0,1).
pub fn interior_sign_changes(f: &GridFunction) -> usize {
    let v = f.values();
    let n = v.len();
    let mut count = 0;
    let mut prev = 0.0_f64;
    for &x in &v[1..n - 1] {
        if x == 0.0 {
            continue;
        }
        if prev != 0.0 && x.signum() != prev.signum() {
            count += 1;
        }
        prev = x;
    }
    count
}
