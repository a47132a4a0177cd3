//! Projections onto the three power-constraint families.

use matmono_core::linalg::{c, hermitian_inv_sqrt, hermitian_sqrt, scale_columns, sorted_evd, sorted_svd, CMat};
use matmono_core::{PowerConstraint, Result};

const DYKSTRA_MAX_ITER: usize = 500;
const DYKSTRA_TOL: f64 = 1e-8;

/// Precomputed projector for one constraint on `rows x cols` matrices.
pub struct Projector {
    kind: Kind,
}

enum Kind {
    /// `X -> R^{1/2} clip(R^{-1/2} X)`, singular values clipped at 1.
    Shaping { sqrt: CMat, inv_sqrt: CMat },
    Joint { total: f64, cap: f64 },
    Weighted { terms: Vec<Ellipsoid> },
}

struct Ellipsoid {
    /// Eigenvectors and eigenvalues of the weight.
    basis: CMat,
    eig: Vec<f64>,
    budget: f64,
}

/// Outcome of a projection.
pub struct Projected {
    pub matrix: CMat,
    pub converged: bool,
}

impl Projector {
    pub fn new(constraint: &PowerConstraint, rows: usize) -> Result<Self> {
        constraint.validate(rows)?;
        let kind = match constraint {
            PowerConstraint::Shaping { shape } => {
                // A small ridge keeps the metric finite for singular shapes.
                let n = shape.nrows();
                let ridge = 1e-12 * shape.trace().re.max(1e-300) / n as f64;
                let reg = shape + CMat::identity(n, n) * c(ridge);
                Kind::Shaping { sqrt: hermitian_sqrt(shape)?, inv_sqrt: hermitian_inv_sqrt(&reg)? }
            }
            PowerConstraint::Joint { total, cap } => Kind::Joint { total: *total, cap: *cap },
            PowerConstraint::Weighted { terms } => Kind::Weighted {
                terms: terms
                    .iter()
                    .map(|t| {
                        let e = sorted_evd(&t.weight)?;
                        Ok(Ellipsoid {
                            basis: e.vectors,
                            eig: e.values.iter().map(|v| v.max(0.0)).collect(),
                            budget: t.budget,
                        })
                    })
                    .collect::<Result<_>>()?,
            },
        };
        Ok(Projector { kind })
    }

    pub fn project(&self, x: &CMat) -> Result<Projected> {
        match &self.kind {
            Kind::Shaping { sqrt, inv_sqrt } => {
                let svd = sorted_svd(&(inv_sqrt * x))?;
                let k = svd.values.len();
                let s: Vec<f64> = svd.values.iter().map(|v| v.min(1.0)).collect();
                let core = scale_columns(&svd.u.columns(0, k).into_owned(), &s) * svd.v.columns(0, k).adjoint();
                Ok(Projected { matrix: sqrt * core, converged: true })
            }
            Kind::Joint { total, cap } => {
                let svd = sorted_svd(x)?;
                let k = svd.values.len();
                let s = project_ball_box(&svd.values, *total, cap.sqrt());
                let m = scale_columns(&svd.u.columns(0, k).into_owned(), &s) * svd.v.columns(0, k).adjoint();
                Ok(Projected { matrix: m, converged: true })
            }
            Kind::Weighted { terms } => Ok(dykstra(terms, x)),
        }
    }
}

/// Euclidean projection of `s >= 0` onto `{sum t_i^2 <= total, t_i <= cap}`.
fn project_ball_box(s: &[f64], total: f64, cap: f64) -> Vec<f64> {
    let at = |nu: f64| -> Vec<f64> { s.iter().map(|v| (v / (1.0 + nu)).min(cap)).collect() };
    let energy = |t: &[f64]| -> f64 { t.iter().map(|v| v * v).sum() };
    let t0 = at(0.0);
    if energy(&t0) <= total {
        return t0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while energy(&at(hi)) > total {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if energy(&at(mid)) > total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(hi)
}

impl Ellipsoid {
    /// Project onto `{X : Tr(Omega X X^H) <= budget}`.
    fn project(&self, x: &CMat) -> CMat {
        let y = self.basis.adjoint() * x;
        let rows: Vec<f64> = (0..y.nrows()).map(|i| y.row(i).iter().map(|z| z.norm_sqr()).sum()).collect();
        let load = |nu: f64| -> f64 {
            self.eig
                .iter()
                .zip(&rows)
                .map(|(l, r)| l * r / (1.0 + nu * l).powi(2))
                .sum()
        };
        if load(0.0) <= self.budget {
            return x.clone();
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        while load(hi) > self.budget {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if load(mid) > self.budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut y = y;
        for (i, l) in self.eig.iter().enumerate() {
            let f = 1.0 / (1.0 + hi * l);
            y.row_mut(i).iter_mut().for_each(|z| *z *= f);
        }
        &self.basis * y
    }
}

fn dykstra(terms: &[Ellipsoid], x0: &CMat) -> Projected {
    let mut x = x0.clone();
    let mut incr: Vec<CMat> = terms.iter().map(|_| CMat::zeros(x0.nrows(), x0.ncols())).collect();
    for _ in 0..DYKSTRA_MAX_ITER {
        let before = x.clone();
        for (t, p) in terms.iter().zip(incr.iter_mut()) {
            let z = &x + &*p;
            let y = t.project(&z);
            *p = z - &y;
            x = y;
        }
        let change = matmono_core::linalg::frobenius(&(&x - before));
        if change <= DYKSTRA_TOL * matmono_core::linalg::frobenius(&x).max(1.0) {
            return Projected { matrix: x, converged: true };
        }
    }
    Projected { matrix: x, converged: false }
}
