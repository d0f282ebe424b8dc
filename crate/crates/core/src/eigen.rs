//! Hermitian eigendecomposition of small dense matrices by cyclic complex
//! Jacobi rotations.
//!
//! Output is canonical: eigenvalues descending, near-equal eigenvalues
//! ordered by the magnitude profile of their eigenvectors, and each
//! eigenvector's phase fixed so its first nonzero entry is real positive.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAX_SWEEPS: usize = 64;

const CLAMP_TOL: f64 = 1e-10;
const TIE_TOL: f64 = 1e-12;
const PHASE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct HermitianEigen {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// `vectors[j]` is the unit eigenvector for `values[j]`.
    pub vectors: Vec<Vec<Complex64>>,
}

impl HermitianEigen {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Number of eigenvalues above `tol · trace`.
    pub fn rank(&self, tol: f64) -> usize {
        let trace: f64 = self.values.iter().sum();
        if trace <= 0.0 {
            return 0;
        }
        self.values.iter().filter(|&&l| l > tol * trace).count()
    }

    /// `Σ_j λ_j y_j y_j*`, row-major.
    pub fn reconstruct(&self) -> Vec<Complex64> {
        let m = self.dim();
        let mut out = vec![Complex64::new(0.0, 0.0); m * m];
        for (l, y) in self.values.iter().zip(&self.vectors) {
            for i in 0..m {
                for j in 0..m {
                    out[i * m + j] += y[i] * y[j].conj() * *l;
                }
            }
        }
        out
    }
}

fn off_diagonal_norm(a: &[Complex64], m: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                s += a[i * m + j].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Diagonalizes the Hermitian matrix `a` (row-major, `m × m`).
pub fn hermitian_eigen(a: &[Complex64], m: usize) -> Result<HermitianEigen> {
    assert_eq!(a.len(), m * m, "matrix has wrong size");
    let mut a = a.to_vec();
    // Symmetrize against rounding in the input.
    for i in 0..m {
        a[i * m + i] = Complex64::new(a[i * m + i].re, 0.0);
        for j in i + 1..m {
            let v = (a[i * m + j] + a[j * m + i].conj()) * 0.5;
            a[i * m + j] = v;
            a[j * m + i] = v.conj();
        }
    }
    let mut q = vec![Complex64::new(0.0, 0.0); m * m];
    for i in 0..m {
        q[i * m + i] = Complex64::new(1.0, 0.0);
    }
    let scale = a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let target = f64::EPSILON * scale;

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&a, m);
        if off <= target || off == 0.0 {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence {
                sweeps,
                residual: off,
            });
        }
        sweeps += 1;
        for p in 0..m {
            for qq in p + 1..m {
                let apq = a[p * m + qq];
                let mag = apq.norm();
                if mag <= f64::MIN_POSITIVE || mag <= 1e-3 * target / (m as f64) {
                    continue;
                }
                let e = apq / mag;
                let app = a[p * m + p].re;
                let aqq = a[qq * m + qq].re;
                let tau = (aqq - app) / (2.0 * mag);
                let t = if tau == 0.0 {
                    1.0
                } else {
                    tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let ec = e.conj();
                for k in 0..m {
                    let kp = a[k * m + p];
                    let kq = a[k * m + qq];
                    a[k * m + p] = kp * c - ec * kq * s;
                    a[k * m + qq] = kp * s + ec * kq * c;
                    let kp = q[k * m + p];
                    let kq = q[k * m + qq];
                    q[k * m + p] = kp * c - ec * kq * s;
                    q[k * m + qq] = kp * s + ec * kq * c;
                }
                for k in 0..m {
                    let pk = a[p * m + k];
                    let qk = a[qq * m + k];
                    a[p * m + k] = pk * c - e * qk * s;
                    a[qq * m + k] = pk * s + e * qk * c;
                }
                a[p * m + qq] = Complex64::new(0.0, 0.0);
                a[qq * m + p] = Complex64::new(0.0, 0.0);
                a[p * m + p] = Complex64::new(a[p * m + p].re, 0.0);
                a[qq * m + qq] = Complex64::new(a[qq * m + qq].re, 0.0);
            }
        }
    }

    let trace: f64 = (0..m).map(|i| a[i * m + i].re).sum();
    let trace_abs: f64 = (0..m).map(|i| a[i * m + i].re.abs()).sum();
    let mut pairs: Vec<(f64, Vec<Complex64>)> = (0..m)
        .map(|j| {
            let mut l = a[j * m + j].re;
            if l < 0.0 && l >= -CLAMP_TOL * trace.max(0.0) {
                l = 0.0;
            }
            let mut y: Vec<Complex64> = (0..m).map(|i| q[i * m + j]).collect();
            fix_phase(&mut y);
            (l, y)
        })
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));

    // Reorder runs of near-equal eigenvalues by magnitude profile.
    let tie = TIE_TOL * trace_abs;
    let mut start = 0;
    while start < m {
        let mut end = start + 1;
        while end < m && pairs[end - 1].0 - pairs[end].0 <= tie {
            end += 1;
        }
        if end - start > 1 {
            pairs[start..end].sort_by(|x, y| {
                for (a, b) in x.1.iter().zip(&y.1) {
                    match b.norm().total_cmp(&a.norm()) {
                        std::cmp::Ordering::Equal => continue,
                        o => return o,
                    }
                }
                std::cmp::Ordering::Equal
            });
        }
        start = end;
    }

    let (values, vectors) = pairs.into_iter().unzip();
    Ok(HermitianEigen { values, vectors })
}

fn fix_phase(y: &mut [Complex64]) {
    if let Some(lead) = y.iter().find(|v| v.norm() > PHASE_TOL) {
        let phase = lead.conj() / lead.norm();
        for v in y.iter_mut() {
            *v *= phase;
        }
        if let Some(lead) = y.iter_mut().find(|v| v.norm() > PHASE_TOL) {
            lead.im = 0.0;
        }
    }
}
