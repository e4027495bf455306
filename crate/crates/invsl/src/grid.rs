//! Uniform-grid functions on [0,1] with natural cubic spline evaluation,
//! differentiation and exact piecewise quadrature.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("sample values must all be finite")]
    NonFinite,
    #[error("need at least 3 samples, got {0}")]
    TooFewSamples(usize),
    #[error("argument {0} outside [0,1]")]
    OutOfDomain(f64),
    #[error("grid mismatch: {0} vs {1} intervals")]
    GridMismatch(usize, usize),
}

/// A real function on [0,1] sampled at `x_k = k/n_intervals`, interpolated by
/// a natural cubic spline. Immutable after construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GridFunctionRepr", into = "GridFunctionRepr")]
pub struct GridFunction {
    n_intervals: usize,
    values: Vec<f64>,
    /// Spline second derivatives at the nodes (M-table), natural end conditions.
    second_derivs: Vec<f64>,
}

/// Wire form: {"n_intervals": N, "values": [...]}. The spline table is derived.
#[derive(Serialize, Deserialize)]
struct GridFunctionRepr {
    n_intervals: usize,
    values: Vec<f64>,
}

impl TryFrom<GridFunctionRepr> for GridFunction {
    type Error = GridError;
    fn try_from(r: GridFunctionRepr) -> Result<Self, GridError> {
        if r.values.len() != r.n_intervals + 1 {
            return Err(GridError::TooFewSamples(r.values.len()));
        }
        GridFunction::make(r.values)
    }
}

impl From<GridFunction> for GridFunctionRepr {
    fn from(f: GridFunction) -> Self {
        GridFunctionRepr {
            n_intervals: f.n_intervals,
            values: f.values,
        }
    }
}

impl GridFunction {
    /// Fit a natural cubic spline through `values` at the uniform nodes.
    pub fn make(values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() < 3 {
            return Err(GridError::TooFewSamples(values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GridError::NonFinite);
        }
        let n = values.len() - 1;
        let second_derivs = natural_spline_table(&values, n);
        Ok(GridFunction {
            n_intervals: n,
            values,
            second_derivs,
        })
    }

    /// Sample a closed-form function at the nodes of an `n`-interval grid.
    pub fn sample(n_intervals: usize, f: impl Fn(f64) -> f64) -> Result<Self, GridError> {
        let h = 1.0 / n_intervals as f64;
        Self::make((0..=n_intervals).map(|k| f(k as f64 * h)).collect())
    }

    pub fn zero(n_intervals: usize) -> Self {
        Self::make(vec![0.0; n_intervals + 1]).expect("n_intervals >= 2")
    }

    pub fn constant(n_intervals: usize, c: f64) -> Result<Self, GridError> {
        Self::make(vec![c; n_intervals + 1])
    }

    pub fn n_intervals(&self) -> usize {
        self.n_intervals
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn h(&self) -> f64 {
        1.0 / self.n_intervals as f64
    }

    /// Piece index and local offset for x in [0,1].
    fn locate(&self, x: f64) -> Result<(usize, f64), GridError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(GridError::OutOfDomain(x));
        }
        let h = self.h();
        let k = ((x * self.n_intervals as f64) as usize).min(self.n_intervals - 1);
        Ok((k, x - k as f64 * h))
    }

    /// Spline value at x; exact at the nodes.
    pub fn eval(&self, x: f64) -> Result<f64, GridError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(GridError::OutOfDomain(x));
        }
        let xn = x * self.n_intervals as f64;
        let k_near = xn.round();
        if (xn - k_near).abs() <= 1e-9 {
            return Ok(self.values[k_near as usize]);
        }
        let (k, t) = self.locate(x)?;
        let h = self.h();
        let s = h - t;
        let (m0, m1) = (self.second_derivs[k], self.second_derivs[k + 1]);
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        Ok(m0 * s * s * s / (6.0 * h)
            + m1 * t * t * t / (6.0 * h)
            + (y0 / h - m0 * h / 6.0) * s
            + (y1 / h - m1 * h / 6.0) * t)
    }

    /// Spline first derivative at x.
    pub fn derivative(&self, x: f64) -> Result<f64, GridError> {
        let (k, t) = self.locate(x)?;
        let h = self.h();
        let s = h - t;
        let (m0, m1) = (self.second_derivs[k], self.second_derivs[k + 1]);
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        Ok(-m0 * s * s / (2.0 * h) + m1 * t * t / (2.0 * h) + (y1 - y0) / h
            - (m1 - m0) * h / 6.0)
    }

    /// ∫₀¹ f dx by closed-form integration of each spline piece.
    pub fn integrate(&self) -> f64 {
        let h = self.h();
        let mut total = 0.0;
        for k in 0..self.n_intervals {
            total += h * (self.values[k] + self.values[k + 1]) / 2.0
                - h * h * h * (self.second_derivs[k] + self.second_derivs[k + 1]) / 24.0;
        }
        total
    }

    fn check_same_grid(&self, other: &GridFunction) -> Result<(), GridError> {
        if self.n_intervals != other.n_intervals {
            return Err(GridError::GridMismatch(self.n_intervals, other.n_intervals));
        }
        Ok(())
    }

    /// a·f + g, resampled on the shared grid.
    pub fn axpy(a: f64, f: &GridFunction, g: &GridFunction) -> Result<GridFunction, GridError> {
        f.check_same_grid(g)?;
        let values = f
            .values
            .iter()
            .zip(&g.values)
            .map(|(x, y)| a * x + y)
            .collect();
        GridFunction::make(values)
    }

    pub fn scale(&self, a: f64) -> GridFunction {
        GridFunction::make(self.values.iter().map(|v| a * v).collect())
            .expect("scaling preserves finiteness for finite a")
    }

    /// Nodewise product, refit on the shared grid.
    pub fn product(&self, other: &GridFunction) -> Result<GridFunction, GridError> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| x * y)
            .collect();
        GridFunction::make(values)
    }

    /// The spline derivative resampled as a grid function.
    pub fn derivative_grid(&self) -> GridFunction {
        let h = self.h();
        let values = (0..=self.n_intervals)
            .map(|k| self.derivative(k as f64 * h).expect("node in domain"))
            .collect();
        GridFunction::make(values).expect("derivative of finite spline is finite")
    }

    /// Node derivatives from a not-a-knot refit of the same values. The
    /// natural end condition costs an O(h) derivative error at the boundary
    /// when f″ does not vanish there; the identity checks in the Wronskian
    /// module need the not-a-knot accuracy instead.
    pub(crate) fn derivative_grid_refit(&self) -> GridFunction {
        let n = self.n_intervals;
        let h = self.h();
        let m = notaknot_spline_table(&self.values, n);
        let mut d = Vec::with_capacity(n + 1);
        for k in 0..n {
            d.push((self.values[k + 1] - self.values[k]) / h - h * (2.0 * m[k] + m[k + 1]) / 6.0);
        }
        d.push((self.values[n] - self.values[n - 1]) / h + h * (2.0 * m[n] + m[n - 1]) / 6.0);
        GridFunction::make(d).expect("derivative of finite spline is finite")
    }

    /// ‖f‖₂ = sqrt(∫ f²).
    pub fn l2_norm(&self) -> f64 {
        self.product(self).expect("same grid").integrate().max(0.0).sqrt()
    }

    /// ∫₀¹ f dx (domain has unit length).
    pub fn mean(&self) -> f64 {
        self.integrate()
    }

    /// L² inner product ∫ fg.
    pub fn inner(&self, other: &GridFunction) -> Result<f64, GridError> {
        Ok(self.product(other)?.integrate())
    }

    /// Two-column x,value CSV for plotting.
    pub fn to_csv(&self) -> String {
        let h = self.h();
        let mut out = String::from("x,value\n");
        for (k, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", k as f64 * h, v));
        }
        out
    }
}

/// Solve the natural-spline tridiagonal system for the node second derivatives.
/// Uniform spacing h = 1/n: M_{k-1} + 4 M_k + M_{k+1} = 6 (y_{k-1} - 2y_k + y_{k+1}) / h².
fn natural_spline_table(values: &[f64], n: usize) -> Vec<f64> {
    let h = 1.0 / n as f64;
    let mut m = vec![0.0; n + 1];
    if n < 2 {
        return m;
    }
    // Thomas algorithm on the interior unknowns M_1..M_{n-1}.
    let inner = n - 1;
    let mut c_prime = vec![0.0; inner];
    let mut d_prime = vec![0.0; inner];
    let rhs = |k: usize| 6.0 * (values[k - 1] - 2.0 * values[k] + values[k + 1]) / (h * h);
    c_prime[0] = 1.0 / 4.0;
    d_prime[0] = rhs(1) / 4.0;
    for j in 1..inner {
        let denom = 4.0 - c_prime[j - 1];
        c_prime[j] = 1.0 / denom;
        d_prime[j] = (rhs(j + 1) - d_prime[j - 1]) / denom;
    }
    m[inner] = d_prime[inner - 1];
    for j in (1..inner).rev() {
        m[j] = d_prime[j - 1] - c_prime[j - 1] * m[j + 1];
    }
    m
}

/// Second-derivative table with not-a-knot end conditions (third derivative
/// continuous across x_1 and x_{n-1}). On a uniform grid the end conditions
/// decouple: M_1 and M_{n-1} come out in closed form, the rest is tridiagonal.
fn notaknot_spline_table(values: &[f64], n: usize) -> Vec<f64> {
    if n < 3 {
        return natural_spline_table(values, n);
    }
    let h = 1.0 / n as f64;
    let d2 = |k: usize| (values[k - 1] - 2.0 * values[k] + values[k + 1]) / (h * h);
    let mut m = vec![0.0; n + 1];
    m[1] = d2(1);
    m[n - 1] = d2(n - 1);
    // Thomas algorithm for M_2..M_{n-2}.
    let inner = n - 3;
    if inner > 0 {
        let mut c_prime = vec![0.0; inner];
        let mut d_prime = vec![0.0; inner];
        let rhs = |j: usize| {
            // row for M_{j+2}: M_{j+1} + 4 M_{j+2} + M_{j+3} = 6 d2(j+2)
            let mut r = 6.0 * d2(j + 2);
            if j == 0 {
                r -= m[1];
            }
            if j == inner - 1 {
                r -= m[n - 1];
            }
            r
        };
        c_prime[0] = 1.0 / 4.0;
        d_prime[0] = rhs(0) / 4.0;
        for j in 1..inner {
            let denom = 4.0 - c_prime[j - 1];
            c_prime[j] = 1.0 / denom;
            d_prime[j] = (rhs(j) - d_prime[j - 1]) / denom;
        }
        m[inner + 1] = d_prime[inner - 1];
        for j in (1..inner).rev() {
            m[j + 1] = d_prime[j - 1] - c_prime[j - 1] * m[j + 2];
        }
    }
    m[0] = 2.0 * m[1] - m[2];
    m[n] = 2.0 * m[n - 1] - m[n - 2];
    m
}
