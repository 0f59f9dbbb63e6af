//! Dense symmetric eigendecomposition, largest-eigenvalue estimation, and
//! Chebyshev filter fitting/application.
//!
//! The eigensolver is the classic Householder tridiagonalization followed by
//! implicit-shift QL, written out here so results are bit-reproducible across
//! platforms and scalar types. It targets the desk-scale dense regime
//! (`n <= 5000`); anything larger should go through the Chebyshev path.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::graph::DENSE_NODE_LIMIT;
use crate::Scalar;

/// Symmetry tolerance accepted by [`eigendecompose`].
const SYMMETRY_TOL: f64 = 1e-10;

/// QL iteration budget per eigenvalue.
const QL_BUDGET: usize = 60;

/// Power iteration budget for [`lambda_max_estimate`].
const POWER_BUDGET: usize = 800;

/// Eigenvalues in ascending order with matching orthonormal eigenvector
/// columns. Each column is sign-fixed so its largest-magnitude entry (first
/// such entry on ties) is positive.
#[derive(Debug, Clone)]
pub struct EigenDecomposition<F: Scalar> {
    pub eigenvalues: Array1<F>,
    pub eigenvectors: Array2<F>,
}

impl<F: Scalar> EigenDecomposition<F> {
    /// `V diag(f(λ)) Vᵀ X` for an arbitrary spectral map `f`.
    pub fn apply_spectral<G: Fn(F) -> F>(&self, f: G, x: &Array2<F>) -> Array2<F> {
        let vt_x = self.eigenvectors.t().dot(x);
        let mut scaled = vt_x;
        for (k, mut row) in scaled.axis_iter_mut(Axis(0)).enumerate() {
            let g = f(self.eigenvalues[k]);
            row.mapv_inplace(|v| v * g);
        }
        self.eigenvectors.dot(&scaled)
    }
}

/// Full eigendecomposition of a symmetric matrix.
///
/// The input must be symmetric within `1e-10` entrywise; it is symmetrized
/// exactly before reduction so the solver sees `(M + Mᵀ)/2`.
pub fn eigendecompose<F: Scalar>(m: &Array2<F>) -> Result<EigenDecomposition<F>> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "eigendecompose needs a nonempty square matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    if n > DENSE_NODE_LIMIT {
        return Err(Error::DenseLimit { n, limit: DENSE_NODE_LIMIT });
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let delta = (m[(i, j)] - m[(j, i)]).abs().to_f64();
            if delta > SYMMETRY_TOL {
                return Err(Error::NotSymmetric { i, j, delta });
            }
        }
    }
    let half = F::c(0.5);
    let mut z = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            z[(i, j)] = (m[(i, j)] + m[(j, i)]) * half;
        }
    }
    let mut d = vec![F::zero(); n];
    let mut e = vec![F::zero(); n];
    tred2(&mut z, &mut d, &mut e);
    tql2(&mut d, &mut e, &mut z)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("finite eigenvalues"));
    let mut eigenvalues = Array1::zeros(n);
    let mut eigenvectors = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        eigenvalues[col] = d[src];
        let mut dst = eigenvectors.column_mut(col);
        dst.assign(&z.column(src));
        let mut lead = F::zero();
        let mut lead_abs = F::zero();
        for &v in dst.iter() {
            if v.abs() > lead_abs {
                lead_abs = v.abs();
                lead = v;
            }
        }
        if lead < F::zero() {
            dst.mapv_inplace(|v| -v);
        }
    }
    Ok(EigenDecomposition { eigenvalues, eigenvectors })
}

/// Householder reduction to tridiagonal form with accumulated transforms
/// (EISPACK `tred2`). On exit `a` holds the orthogonal accumulation, `d` the
/// diagonal and `e` the subdiagonal (in `e[1..]`).
fn tred2<F: Scalar>(a: &mut Array2<F>, d: &mut [F], e: &mut [F]) {
    let n = d.len();
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = F::zero();
        if l > 0 {
            let mut scale = F::zero();
            for k in 0..=l {
                scale = scale + a[(i, k)].abs();
            }
            if scale == F::zero() {
                e[i] = a[(i, l)];
            } else {
                for k in 0..=l {
                    a[(i, k)] = a[(i, k)] / scale;
                    h = h + a[(i, k)] * a[(i, k)];
                }
                let mut f = a[(i, l)];
                let g = if f >= F::zero() { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h = h - f * g;
                a[(i, l)] = f - g;
                f = F::zero();
                for j in 0..=l {
                    a[(j, i)] = a[(i, j)] / h;
                    let mut g = F::zero();
                    for k in 0..=j {
                        g = g + a[(j, k)] * a[(i, k)];
                    }
                    for k in (j + 1)..=l {
                        g = g + a[(k, j)] * a[(i, k)];
                    }
                    e[j] = g / h;
                    f = f + e[j] * a[(i, j)];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let f = a[(i, j)];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        a[(j, k)] = a[(j, k)] - (f * e[k] + g * a[(i, k)]);
                    }
                }
            }
        } else {
            e[i] = a[(i, l)];
        }
        d[i] = h;
    }
    d[0] = F::zero();
    e[0] = F::zero();
    for i in 0..n {
        if d[i] != F::zero() {
            for j in 0..i {
                let mut g = F::zero();
                for k in 0..i {
                    g = g + a[(i, k)] * a[(k, j)];
                }
                for k in 0..i {
                    a[(k, j)] = a[(k, j)] - g * a[(k, i)];
                }
            }
        }
        d[i] = a[(i, i)];
        a[(i, i)] = F::one();
        for j in 0..i {
            a[(j, i)] = F::zero();
            a[(i, j)] = F::zero();
        }
    }
}

fn sign_of<F: Scalar>(mag: F, sgn: F) -> F {
    if sgn >= F::zero() {
        mag.abs()
    } else {
        -mag.abs()
    }
}

/// Implicit-shift QL on the tridiagonal output of [`tred2`] (EISPACK
/// `tql2`), rotating eigenvectors along the way.
fn tql2<F: Scalar>(d: &mut [F], e: &mut [F], z: &mut Array2<F>) -> Result<()> {
    let n = d.len();
    if n == 1 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = F::zero();
    let two = F::c(2.0);
    for l in 0..n {
        let mut iter = 0usize;
        loop {
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= F::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            if iter == QL_BUDGET {
                return Err(Error::NoConvergence { what: "tridiagonal QL sweep", budget: QL_BUDGET });
            }
            iter += 1;
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(F::one());
            g = d[m] - d[l] + e[l] / (g + sign_of(r, g));
            let mut s = F::one();
            let mut c = F::one();
            let mut p = F::zero();
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == F::zero() {
                    d[i + 1] = d[i + 1] - p;
                    e[m] = F::zero();
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    f = z[(k, i + 1)];
                    z[(k, i + 1)] = s * z[(k, i)] + c * f;
                    z[(k, i)] = c * z[(k, i)] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] = d[l] - p;
            e[l] = g;
            e[m] = F::zero();
        }
    }
    Ok(())
}

/// Power-iteration estimate of the largest eigenvalue of a symmetric
/// positive-semidefinite operator. Returns `(estimate, converged)` with the
/// estimate inflated by `1 + tol` so it upper-bounds the true value for
/// Chebyshev domain purposes (the raw iterate only ever approaches from
/// below).
///
/// Two deterministic starts are run: the uniform vector and the coordinate
/// vector at the largest diagonal entry. The second start rescues graphs
/// where the uniform vector sits in (or near) the nullspace, e.g. the
/// augmented Laplacian of a regular graph. If either run exhausts its
/// budget the universal normalized-Laplacian bound 2 is returned with
/// `converged = false`.
pub fn lambda_max_estimate<F: Scalar>(lap: &Array2<F>, tol: F) -> Result<(F, bool)> {
    let n = lap.nrows();
    if n == 0 || lap.ncols() != n {
        return Err(Error::ShapeMismatch("lambda_max_estimate needs a square matrix".into()));
    }
    let run = |mut v: Array1<F>| -> (F, bool) {
        let norm = v.dot(&v).sqrt();
        if norm <= F::min_positive_value() {
            return (F::zero(), true);
        }
        v.mapv_inplace(|x| x / norm);
        let mut est = F::zero();
        for _ in 0..POWER_BUDGET {
            let w = lap.dot(&v);
            let wn = w.dot(&w).sqrt();
            if wn <= F::min_positive_value() {
                // Landed in the nullspace; whatever we saw so far stands.
                return (est, true);
            }
            let next = wn;
            v = w.mapv(|x| x / wn);
            if (next - est).abs() <= tol * next.max(F::one()) {
                return (next, true);
            }
            est = next;
        }
        (est, false)
    };

    let uniform = Array1::from_elem(n, F::one() / F::c(n as f64).sqrt());
    let mut arg = 0usize;
    for i in 1..n {
        if lap[(i, i)] > lap[(arg, arg)] {
            arg = i;
        }
    }
    let mut coord = Array1::zeros(n);
    coord[arg] = F::one();

    let (e1, c1) = run(uniform);
    let (e2, c2) = run(coord);
    if !(c1 && c2) {
        return Ok((F::c(2.0), false));
    }
    Ok((e1.max(e2) * (F::one() + tol), true))
}

/// Largest singular value, computed exactly via the eigendecomposition of
/// the smaller Gram matrix. Intended for weight-matrix-sized inputs.
pub fn spectral_norm<F: Scalar>(m: &Array2<F>) -> Result<F> {
    let (r, c) = (m.nrows(), m.ncols());
    if r == 0 || c == 0 {
        return Ok(F::zero());
    }
    let gram = if c <= r { m.t().dot(m) } else { m.dot(&m.t()) };
    let eig = eigendecompose(&gram)?;
    let top = eig.eigenvalues[eig.eigenvalues.len() - 1];
    Ok(top.max(F::zero()).sqrt())
}

/// A fitted Chebyshev approximation of a spectral response on `[0,
/// domain_upper]`.
///
/// `coefficients[0]` is stored ready to sum (the constant term itself, not
/// its doubled quadrature value), so evaluation is plainly
/// `Σ_j c_j T_j(x)` with `x = 2λ/domain_upper − 1`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(bound = "")]
pub struct ChebyshevFilter<F: Scalar> {
    pub coefficients: Vec<F>,
    pub degree: usize,
    pub domain_upper: F,
    /// Which response this fits, e.g. `"low"` or `"high.1.2"`.
    pub target: String,
    /// Max abs deviation from the target on a dense grid over the domain.
    pub fit_max_error: F,
}

/// Fit a degree-`t` Chebyshev approximation to `f` on `[0, domain_upper]`
/// by Chebyshev-Gauss quadrature at `2t + 2` nodes. Quadrature runs in f64
/// regardless of `F` so f32 filters do not pay double rounding.
pub fn chebyshev_fit<F: Scalar>(
    f: impl Fn(F) -> F,
    degree: usize,
    domain_upper: F,
    target: impl Into<String>,
) -> Result<ChebyshevFilter<F>> {
    if degree < 1 {
        return Err(Error::InvalidConfig("chebyshev degree must be at least 1".into()));
    }
    let u = domain_upper.to_f64();
    if !(u > 0.0) || !u.is_finite() {
        return Err(Error::InvalidConfig(format!("chebyshev domain upper bound {u} must be positive")));
    }
    let m = 2 * degree + 2;
    let mut samples = Vec::with_capacity(m);
    for k in 0..m {
        let theta = std::f64::consts::PI * (k as f64 + 0.5) / m as f64;
        let x = theta.cos();
        let lambda = u * (x + 1.0) / 2.0;
        samples.push((theta, f(F::c(lambda)).to_f64()));
    }
    let mut coefficients = Vec::with_capacity(degree + 1);
    for j in 0..=degree {
        let mut acc = 0.0f64;
        for &(theta, y) in &samples {
            acc += y * (j as f64 * theta).cos();
        }
        let scale = if j == 0 { 1.0 } else { 2.0 };
        coefficients.push(F::c(scale * acc / m as f64));
    }
    let mut filter = ChebyshevFilter {
        coefficients,
        degree,
        domain_upper,
        target: target.into(),
        fit_max_error: F::zero(),
    };
    let grid = 1000usize;
    let mut worst = F::zero();
    for g in 0..grid {
        let lambda = F::c(u * g as f64 / (grid - 1) as f64);
        let err = (f(lambda) - filter.evaluate(lambda)).abs();
        worst = worst.max(err);
    }
    filter.fit_max_error = worst;
    Ok(filter)
}

impl<F: Scalar> ChebyshevFilter<F> {
    /// Scalar evaluation by Clenshaw recurrence.
    pub fn evaluate(&self, lambda: F) -> F {
        let x = F::c(2.0) * lambda / self.domain_upper - F::one();
        let mut b1 = F::zero();
        let mut b2 = F::zero();
        for &c in self.coefficients.iter().skip(1).rev() {
            let next = F::c(2.0) * x * b1 - b2 + c;
            b2 = b1;
            b1 = next;
        }
        self.coefficients[0] + x * b1 - b2
    }

    /// Error when the operator's spectrum may poke past the fitted domain.
    pub fn check_domain(&self, lambda_max: F) -> Result<()> {
        if lambda_max > self.domain_upper {
            return Err(Error::DomainExceeded {
                lambda_max: lambda_max.to_f64(),
                domain_upper: self.domain_upper.to_f64(),
            });
        }
        Ok(())
    }

    /// Apply the fitted polynomial of `op` to the columns of `x` by the
    /// three-term recurrence. Estimates the spectral range first and errors
    /// if it pokes past the fitted domain; callers that have already
    /// verified the range can use [`ChebyshevFilter::apply_unchecked`].
    pub fn apply(&self, op: &Array2<F>, x: &Array2<F>) -> Result<Array2<F>> {
        let (lambda_max, _) = lambda_max_estimate(op, F::c(1e-3))?;
        self.check_domain(lambda_max)?;
        self.apply_unchecked(op, x)
    }

    /// Three-term recurrence without the spectral-range probe; never forms
    /// the polynomial matrix.
    pub fn apply_unchecked(&self, op: &Array2<F>, x: &Array2<F>) -> Result<Array2<F>> {
        let n = op.nrows();
        if op.ncols() != n {
            return Err(Error::ShapeMismatch("chebyshev operator must be square".into()));
        }
        if x.nrows() != n {
            return Err(Error::ShapeMismatch(format!(
                "signal has {} rows for an operator of size {}",
                x.nrows(),
                n
            )));
        }
        let scale = F::c(2.0) / self.domain_upper;
        let shifted = |y: &Array2<F>| -> Array2<F> { op.dot(y) * scale - y };
        let mut t_prev = x.clone();
        let mut acc = t_prev.clone() * self.coefficients[0];
        if self.degree == 0 {
            return Ok(acc);
        }
        let mut t_curr = shifted(&t_prev);
        acc = acc + &t_curr * self.coefficients[1];
        for j in 2..=self.degree {
            let t_next = shifted(&t_curr) * F::c(2.0) - &t_prev;
            acc = acc + &t_next * self.coefficients[j];
            t_prev = t_curr;
            t_curr = t_next;
        }
        Ok(acc)
    }
}
