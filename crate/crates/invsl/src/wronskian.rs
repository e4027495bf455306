//! The Wronskian [f,g] = fg′ − f′g, the bilinear form Γ(f,g) = ∫₀¹ [f,g] dx,
//! and numerical verification of the structural identities behind the
//! no-spurious-minima property:
//!
//!   (i)  Γ(g²_{i,n}, g²_{i,m}) = 0
//!   (ii) Γ(c_{i,n} s_{i,n}, g²_{j,m}) = (−1)^i sin(γ−β) δ_{n,m} δ_{i,j}
//!
//! where s, c are the right-anchored solutions and g the normalized
//! eigenfunctions. Derivatives come from spline differentiation of the
//! stored node values, so the tolerance budget is ~1e-5 on a 512 grid.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::forward::{self, BoundaryTriple, ForwardError, Spectrum};
use crate::grid::{GridError, GridFunction};

/// Which identity a verification row belongss to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LemmaPart {
    /// Γ of two squared eigenfunctions from the same spectrum.
    SquareSquare,
    /// Γ of a product c·s against a squared eigenfunction.
    ProductSquare,
}

impl LemmaPart {
    pub fn label(self) -> &'static str {
        match self {
            LemmaPart::SquareSquare => "g2_g2",
            LemmaPart::ProductSquare => "cs_g2",
        }
    }
}

/// One verified pairing: computed Γ, its exact value, and the gap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaResult {
    pub part: LemmaPart,
    pub i: u8,
    pub n: u32,
    pub j: u8,
    pub m: u32,
    pub value: f64,
    pub expected: f64,
    pub abs_error: f64,
}

impl GammaResult {
    /// Human-readable description of the pairing.
    pub fn pair(&self) -> String {
        match self.part {
            LemmaPart::SquareSquare => format!(
                "Gamma(g^2_({},{}), g^2_({},{}))",
                self.i, self.n, self.j, self.m
            ),
            LemmaPart::ProductSquare => format!(
                "Gamma(c_({},{}) s_({},{}), g^2_({},{}))",
                self.i, self.n, self.i, self.n, self.j, self.m
            ),
        }
    }
}

/// [f,g](x) = f(x)g′(x) − f′(x)g(x), derivatives from the splines.
pub fn wronskian_bracket(f: &GridFunction, g: &GridFunction, x: f64) -> Result<f64, GridError> {
    Ok(f.eval(x)? * g.derivative(x)? - f.derivative(x)? * g.eval(x)?)
}

/// Γ(f,g) = ∫₀¹ [f,g] dx by grid quadrature of the node-sampled bracket.
pub fn gamma_form(f: &GridFunction, g: &GridFunction) -> Result<f64, GridError> {
    Ok(bracket_grid(f, g)?.integrate())
}

/// [f,g] sampled on the shared grid.
pub fn bracket_grid(f: &GridFunction, g: &GridFunction) -> Result<GridFunction, GridError> {
    let fg1 = f.product(&g.derivative_grid_refit())?;
    let f1g = f.derivative_grid_refit().product(g)?;
    GridFunction::axpy(-1.0, &f1g, &fg1)
}

/// Check both identities for all index combinations with n, m < n_max.
pub fn verify_lemma(
    q: &GridFunction,
    bc: &BoundaryTriple,
    n_max: u32,
) -> Result<Vec<GammaResult>, ForwardError> {
    bc.validate()?;
    let sin_gb = (bc.gamma - bc.beta).sin();

    // One forward solve per index: normalized square plus the c·s product.
    let mut squares = Vec::new(); // (i, n, g²)
    let mut products = Vec::new(); // (i, n, c·s)
    for spectrum in Spectrum::BOTH {
        for n in 0..n_max {
            let sol = forward::eigenfunction(q, bc, spectrum, n)?;
            let (s, c) = forward::right_solutions(q, bc, spectrum, n)?;
            let cs = c.values.product(&s.values)?;
            squares.push((spectrum.index(), n, sol.g_squared));
            products.push((spectrum.index(), n, cs));
        }
    }

    let mut results = Vec::new();
    for (i, n, f) in &squares {
        for (j, m, g) in &squares {
            if i != j {
                continue;
            }
            let value = gamma_form(f, g)?;
            results.push(GammaResult {
                part: LemmaPart::SquareSquare,
                i: *i,
                n: *n,
                j: *j,
                m: *m,
                value,
                expected: 0.0,
                abs_error: value.abs(),
            });
        }
    }
    for (i, n, cs) in &products {
        for (j, m, g) in &squares {
            let value = gamma_form(cs, g)?;
            let expected = if i == j && n == m {
                if *i == 1 {
                    -sin_gb
                } else {
                    sin_gb
                }
            } else {
                0.0
            };
            results.push(GammaResult {
                part: LemmaPart::ProductSquare,
                i: *i,
                n: *n,
                j: *j,
                m: *m,
                value,
                expected,
                abs_error: (value - expected).abs(),
            });
        }
    }
    Ok(results)
}

pub fn results_to_csv(results: &[GammaResult]) -> String {
    let mut out = String::from("part,i,n,j,m,value,expected,abs_error\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{},{:.12e},{:.12e},{:.12e}\n",
            r.part.label(),
            r.i,
            r.n,
            r.j,
            r.m,
            r.value,
            r.expected,
            r.abs_error
        ));
    }
    out
}

/// Conditioning of the family {g²_{i,n}} in H¹: smallest and largest Gram
/// eigenvalue and their ratio. A strictly positive smallest eigenvalue is
/// the finite-section signature of linear independence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndependenceDiagnostics {
    pub dimension: usize,
    pub smallest_eigenvalue: f64,
    pub largest_eigenvalue: f64,
    pub condition: f64,
}

/// Gram matrix under the H¹ inner product ∫fg + ∫f′g′.
pub fn h1_gram(functions: &[GridFunction]) -> Result<DMatrix<f64>, GridError> {
    let k = functions.len();
    let derivs: Vec<GridFunction> = functions.iter().map(|f| f.derivative_grid()).collect();
    let mut gram = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let v = functions[a].inner(&functions[b])? + derivs[a].inner(&derivs[b])?;
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    Ok(gram)
}

pub fn gram_diagnostics(gram: &DMatrix<f64>) -> IndependenceDiagnostics {
    let eigen = gram.clone().symmetric_eigen();
    let smallest = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let largest = eigen.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    IndependenceDiagnostics {
        dimension: gram.nrows(),
        smallest_eigenvalue: smallest,
        largest_eigenvalue: largest,
        condition: largest / smallest,
    }
}

pub fn independence_probe(
    q: &GridFunction,
    bc: &BoundaryTriple,
    n_max: u32,
) -> Result<IndependenceDiagnostics, ForwardError> {
    assert!(n_max >= 2, "need at least two indices per spectrum");
    let mut squares = Vec::new();
    for spectrum in Spectrum::BOTH {
        for n in 0..n_max {
            squares.push(forward::eigenfunction(q, bc, spectrum, n)?.g_squared);
        }
    }
    let gram = h1_gram(&squares)?;
    Ok(gram_diagnostics(&gram))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const GRID: usize = 512;

    #[test]
    fn bracket_of_function_with_itself_vanishes() {
        let f = GridFunction::sample(GRID, |x| (x * 3.0).sin() + x).unwrap();
        for x in [0.0, 0.25, 1.0 / 3.0, 0.9] {
            assert_eq!(wronskian_bracket(&f, &f, x).unwrap(), 0.0);
        }
    }

    #[test]
    fn bracket_linear_against_constant() {
        let f = GridFunction::sample(GRID, |x| x).unwrap();
        let g = GridFunction::constant(GRID, 1.0).unwrap();
        for x in [0.1, 0.5, 0.77] {
            assert!((wronskian_bracket(&f, &g, x).unwrap() + 1.0).abs() < 1e-9);
        }
        assert!((gamma_form(&f, &g).unwrap() + 1.0).abs() < 1e-9);
    }

    #[test]
    fn bracket_sine_cosine() {
        let f = GridFunction::sample(GRID, |x| (PI * x).sin()).unwrap();
        let g = GridFunction::sample(GRID, |x| (PI * x).cos()).unwrap();
        for x in [0.2, 0.5, 0.8] {
            assert!((wronskian_bracket(&f, &g, x).unwrap() + PI).abs() < 1e-4);
        }
        assert!((gamma_form(&f, &g).unwrap() + PI).abs() < 1e-4);
    }

    #[test]
    fn gamma_is_antisymmetric_and_bilinear() {
        let f = GridFunction::sample(GRID, |x| (2.0 * PI * x).cos() + 0.3 * x).unwrap();
        let g = GridFunction::sample(GRID, |x| (PI * x).sin() * (1.0 - x)).unwrap();
        let h = GridFunction::sample(GRID, |x| x * x - 0.5).unwrap();
        let fg = gamma_form(&f, &g).unwrap();
        let gf = gamma_form(&g, &f).unwrap();
        assert!((fg + gf).abs() <= 1e-12 * fg.abs().max(1.0));

        let (a, b) = (1.7, -0.4);
        let combo = GridFunction::axpy(a / b, &f, &h).unwrap().scale(b); // a f + b h
        let lhs = gamma_form(&combo, &g).unwrap();
        let rhs = a * fg + b * gamma_form(&h, &g).unwrap();
        assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
    }

    #[test]
    fn bracket_derivative_rule_for_two_solutions() {
        // For solutions at λ₁ ≠ λ₂ of the same equation,
        // d/dx [f₁,f₂] = (λ₁−λ₂) f₁ f₂.
        let q = GridFunction::sample(GRID, |x| (2.0 * PI * x).cos()).unwrap();
        let bc = BoundaryTriple::default_angles();
        let s1 = forward::eigenfunction(&q, &bc, Spectrum::First, 0).unwrap();
        let s2 = forward::eigenfunction(&q, &bc, Spectrum::First, 2).unwrap();
        let w = bracket_grid(&s1.g, &s2.g).unwrap();
        let w_prime = w.derivative_grid();
        let rhs = s1.g.product(&s2.g).unwrap().scale(s1.lambda - s2.lambda);
        let scale = (s1.lambda - s2.lambda).abs();
        let worst = w_prime
            .values()
            .iter()
            .zip(rhs.values())
            .skip(2)
            .take(GRID - 3)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        assert!(worst < 1e-3 * scale, "worst dev {worst:e}, scale {scale:e}");
    }

    #[test]
    fn bracket_vanishes_at_shared_left_condition() {
        // Both eigenfunctions satisfy the same condition at x = 0, so the
        // Wronskian vanishes there.
        let q = GridFunction::sample(GRID, |x| (2.0 * PI * x).cos()).unwrap();
        let bc = BoundaryTriple::default_angles();
        let f1 = forward::eigenfunction(&q, &bc, Spectrum::First, 1).unwrap();
        let f2 = forward::eigenfunction(&q, &bc, Spectrum::Second, 3).unwrap();
        let w0 = wronskian_bracket(&f1.g, &f2.g, 0.0).unwrap();
        assert!(w0.abs() < 1e-8, "[f1,f2](0) = {w0:e}");
    }

    #[test]
    fn lemma_holds_for_free_potential() {
        let q = GridFunction::zero(GRID);
        let bc = BoundaryTriple::default_angles();
        let results = verify_lemma(&q, &bc, 4).unwrap();
        // counts: part (i) 2·4², part (ii) (2·4)²
        assert_eq!(results.len(), 32 + 64);
        for r in &results {
            assert!(r.abs_error < 1e-5, "{}: error {:e}", r.pair(), r.abs_error);
        }
        // Spot-check the signed diagonal values.
        let diag = |i: u8, n: u32| {
            results
                .iter()
                .find(|r| {
                    r.part == LemmaPart::ProductSquare
                        && r.i == i
                        && r.j == i
                        && r.n == n
                        && r.m == n
                })
                .unwrap()
                .value
        };
        assert!((diag(1, 0) + 1.0).abs() < 1e-5);
        assert!((diag(2, 3) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn independence_probe_positive_and_detects_duplicates() {
        let q = GridFunction::zero(GRID);
        let bc = BoundaryTriple::default_angles();
        let diag = independence_probe(&q, &bc, 3).unwrap();
        assert_eq!(diag.dimension, 6);
        assert!(diag.smallest_eigenvalue > 0.0);
        assert!(diag.condition.is_finite());

        // Injecting a duplicate column must collapse the smallest eigenvalue.
        let f = forward::eigenfunction(&q, &bc, Spectrum::First, 0)
            .unwrap()
            .g_squared;
        let g = forward::eigenfunction(&q, &bc, Spectrum::First, 1)
            .unwrap()
            .g_squared;
        let gram = h1_gram(&[f.clone(), g, f]).unwrap();
        let collapsed = gram_diagnostics(&gram);
        assert!(collapsed.smallest_eigenvalue.abs() < 1e-10);
    }

    #[test]
    fn csv_round_trip_shape() {
        let q = GridFunction::zero(128);
        let bc = BoundaryTriple::default_angles();
        let results = verify_lemma(&q, &bc, 2).unwrap();
        let csv = results_to_csv(&results);
        assert!(csv.starts_with("part,i,n,j,m,value,expected,abs_error\n"));
        assert_eq!(csv.lines().count(), 1 + results.len());
    }
}
