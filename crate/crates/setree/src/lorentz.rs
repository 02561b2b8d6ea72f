//! The Lorentz (hyperboloid) model of hyperbolic space with curvature κ < 0,
//! embedded in Minkowski space R^{1,d}: points satisfy ⟨x,x⟩_L = 1/κ with
//! x₀ > 0, where ⟨x,y⟩_L = −x₀y₀ + Σ_i x_i y_i.
//!
//! Provides distances, exponential/logarithmic maps, the weighted gyromidpoint
//! used for aggregation and coarsening, Lorentz boosts (the linear isometries
//! fixing the metric), and the stereographic projection to the Poincaré ball
//! for visualization.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Minkowski inner product ⟨a,b⟩_L = −a₀b₀ + Σ_{i≥1} a_i b_i.
pub fn minkowski_inner(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let mut s = -a[0] * b[0];
    for i in 1..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// arccosh with a series branch near 1: exact 0 at a ≤ 1, √(2(a−1)) on
/// [1, 1+1e−7] where the direct formula loses precision, arccosh above.
pub(crate) fn arccosh_stable(a: f64) -> f64 {
    if a <= 1.0 {
        0.0
    } else if a < 1.0 + 1e-7 {
        (2.0 * (a - 1.0)).sqrt()
    } else {
        a.acosh()
    }
}

/// A point on the hyperboloid, stored in ambient coordinates (d+1 entries).
#[derive(Debug, Clone, PartialEq)]
pub struct LorentzPoint(pub DVector<f64>);

impl LorentzPoint {
    pub fn ambient_dim(&self) -> usize {
        self.0.len()
    }

    pub fn spatial_dim(&self) -> usize {
        self.0.len() - 1
    }

    /// The spatial part x_{1..d}.
    pub fn spatial(&self) -> DVector<f64> {
        DVector::from_iterator(self.spatial_dim(), self.0.iter().skip(1).copied())
    }
}

/// A tangent vector at some point of the hyperboloid (⟨x,u⟩_L = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector(pub DVector<f64>);

impl TangentVector {
    /// Riemannian norm √⟨u,u⟩_L (tangent vectors are spacelike).
    pub fn norm(&self) -> f64 {
        minkowski_inner(&self.0, &self.0).max(0.0).sqrt()
    }
}

/// The hyperboloid of curvature κ < 0; all geometric operations live here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzSpace {
    kappa: f64,
}

impl LorentzSpace {
    pub fn new(kappa: f64) -> Result<LorentzSpace> {
        if !(kappa < 0.0) || !kappa.is_finite() {
            return Err(Error::Validation(format!(
                "curvature must be negative and finite, got {kappa}"
            )));
        }
        Ok(LorentzSpace { kappa })
    }

    /// The standard space with κ = −1.
    pub fn standard() -> LorentzSpace {
        LorentzSpace { kappa: -1.0 }
    }

    pub fn curvature(&self) -> f64 {
        self.kappa
    }

    fn sqrt_neg_kappa(&self) -> f64 {
        (-self.kappa).sqrt()
    }

    /// The apex (1/√−κ, 0, …, 0) with `spatial_dim` spatial coordinates.
    pub fn origin(&self, spatial_dim: usize) -> LorentzPoint {
        let mut v = DVector::zeros(spatial_dim + 1);
        v[0] = 1.0 / self.sqrt_neg_kappa();
        LorentzPoint(v)
    }

    /// Lifts spatial coordinates onto the hyperboloid by solving for the time
    /// coordinate: x₀ = √(‖s‖² − 1/κ).
    pub fn lift_spatial(&self, spatial: &DVector<f64>) -> LorentzPoint {
        let mut v = DVector::zeros(spatial.len() + 1);
        v[0] = (spatial.norm_squared() - 1.0 / self.kappa).sqrt();
        for i in 0..spatial.len() {
            v[i + 1] = spatial[i];
        }
        LorentzPoint(v)
    }

    /// Whether ⟨x,x⟩_L = 1/κ within `tol` and x₀ > 0.
    pub fn on_manifold(&self, x: &LorentzPoint, tol: f64) -> bool {
        x.0[0] > 0.0 && (minkowski_inner(&x.0, &x.0) - 1.0 / self.kappa).abs() <= tol
    }

    /// Rescales a timelike vector back onto the hyperboloid so that
    /// ⟨x,x⟩_L = 1/κ exactly; used after centroid-style averaging.
    pub fn renormalize(&self, x: &LorentzPoint) -> Result<LorentzPoint> {
        let q = minkowski_inner(&x.0, &x.0);
        if q >= 0.0 || x.0[0] <= 0.0 {
            return Err(Error::Degenerate(
                "cannot renormalize a vector that is not future-pointing timelike".into(),
            ));
        }
        let scale = 1.0 / (self.sqrt_neg_kappa() * (-q).sqrt());
        Ok(LorentzPoint(&x.0 * scale))
    }

    /// Geodesic distance d(x,y) = (1/√−κ)·arccosh(κ⟨x,y⟩_L), clamped so
    /// roundoff below the domain boundary maps to distance 0.
    pub fn distance(&self, x: &LorentzPoint, y: &LorentzPoint) -> Result<f64> {
        if x.ambient_dim() != y.ambient_dim() {
            return Err(Error::Dimension(format!(
                "point dimensions differ: {} vs {}",
                x.ambient_dim(),
                y.ambient_dim()
            )));
        }
        let arg = self.kappa * minkowski_inner(&x.0, &y.0);
        Ok(arccosh_stable(arg) / self.sqrt_neg_kappa())
    }

    /// Orthogonal projection of an ambient vector onto the tangent space at x:
    /// proj_x(v) = v − κ⟨x,v⟩_L·x.
    pub fn project_tangent(&self, x: &LorentzPoint, v: &DVector<f64>) -> TangentVector {
        let c = self.kappa * minkowski_inner(&x.0, v);
        TangentVector(v - &x.0 * c)
    }

    /// Exponential map: follows the geodesic from x with initial velocity u
    /// for unit time. exp_x(0) = x.
    pub fn exp_map(&self, x: &LorentzPoint, u: &TangentVector) -> Result<LorentzPoint> {
        if x.ambient_dim() != u.0.len() {
            return Err(Error::Dimension("tangent vector dimension mismatch".into()));
        }
        let norm = u.norm();
        if norm == 0.0 {
            return Ok(x.clone());
        }
        let t = self.sqrt_neg_kappa() * norm;
        Ok(LorentzPoint(&x.0 * t.cosh() + &u.0 * (t.sinh() / t)))
    }

    /// Logarithmic map: the tangent vector at x pointing to y with
    /// ‖log_x(y)‖ = d(x,y). Inverse of exp_map on the hyperboloid.
    pub fn log_map(&self, x: &LorentzPoint, y: &LorentzPoint) -> Result<TangentVector> {
        if x.ambient_dim() != y.ambient_dim() {
            return Err(Error::Dimension("point dimensions differ".into()));
        }
        let alpha = self.kappa * minkowski_inner(&x.0, &y.0);
        // alpha → 1 as y → x; the prefactor arccosh(α)/√(α²−1) → 1.
        if alpha <= 1.0 + 1e-14 {
            return Ok(TangentVector(&y.0 - &x.0 * alpha));
        }
        let factor = alpha.acosh() / (alpha * alpha - 1.0).sqrt();
        Ok(TangentVector((&y.0 - &x.0 * alpha) * factor))
    }

    /// Weighted gyromidpoint of points with nonnegative weights c:
    /// μ = (Σ c_i x_i) / (√−κ·|‖Σ c_j x_j‖_L|). Lies on the hyperboloid by
    /// construction; fails if the weighted sum is not timelike.
    pub fn weighted_midpoint(
        &self,
        points: &[LorentzPoint],
        weights: &[f64],
    ) -> Result<LorentzPoint> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::Dimension(format!(
                "midpoint needs matching nonempty points/weights, got {} points, {} weights",
                points.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::Validation("midpoint weights must be nonnegative and finite".into()));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Degenerate("midpoint weights sum to zero".into()));
        }
        let dim = points[0].ambient_dim();
        let mut z = DVector::zeros(dim);
        for (p, &w) in points.iter().zip(weights) {
            if p.ambient_dim() != dim {
                return Err(Error::Dimension("midpoint points have mixed dimensions".into()));
            }
            z += &p.0 * w;
        }
        let q = minkowski_inner(&z, &z);
        if q >= 0.0 {
            return Err(Error::Degenerate(
                "weighted combination left the timelike cone; midpoint undefined".into(),
            ));
        }
        Ok(LorentzPoint(&z / (self.sqrt_neg_kappa() * (-q).sqrt())))
    }

    /// Stereographic projection to the Poincaré ball:
    /// Ψ(x) = x_{1..d} / (1 + √−κ·x₀). Output norm < 1/√−κ.
    pub fn to_poincare(&self, x: &LorentzPoint) -> DVector<f64> {
        x.spatial() / (1.0 + self.sqrt_neg_kappa() * x.0[0])
    }
}

/// A Lorentz boost: the linear map that carries the origin to the point with
/// velocity β while preserving the Minkowski metric (LᵀηL = η).
#[derive(Debug, Clone, PartialEq)]
pub struct LorentzBoost {
    m: DMatrix<f64>,
}

impl LorentzBoost {
    /// Builds the boost with velocity β (‖β‖ < 1):
    ///
    /// L = [[w, vᵀ], [v, W]],  w = 1/√(1−‖β‖²),  v = −wβ,
    /// W = I + (w−1)/‖β‖²·ββᵀ.
    ///
    /// β = 0 yields the identity explicitly (the ‖β‖² division never runs).
    pub fn from_beta(beta: &DVector<f64>) -> Result<LorentzBoost> {
        let d = beta.len();
        let b2 = beta.norm_squared();
        if !(b2 < 1.0) || !b2.is_finite() {
            return Err(Error::Domain(format!(
                "boost velocity must satisfy ‖β‖ < 1, got ‖β‖² = {b2}"
            )));
        }
        if b2 == 0.0 {
            return Ok(LorentzBoost::identity(d));
        }
        let w = 1.0 / (1.0 - b2).sqrt();
        let mut m = DMatrix::zeros(d + 1, d + 1);
        m[(0, 0)] = w;
        for i in 0..d {
            let vi = -w * beta[i];
            m[(0, i + 1)] = vi;
            m[(i + 1, 0)] = vi;
        }
        let c = (w - 1.0) / b2;
        for i in 0..d {
            for j in 0..d {
                m[(i + 1, j + 1)] = c * beta[i] * beta[j] + if i == j { 1.0 } else { 0.0 };
            }
        }
        Ok(LorentzBoost { m })
    }

    pub fn identity(spatial_dim: usize) -> LorentzBoost {
        LorentzBoost { m: DMatrix::identity(spatial_dim + 1, spatial_dim + 1) }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn spatial_dim(&self) -> usize {
        self.m.nrows() - 1
    }

    pub fn apply(&self, x: &LorentzPoint) -> Result<LorentzPoint> {
        if x.ambient_dim() != self.m.nrows() {
            return Err(Error::Dimension(format!(
                "boost is {}x{} but point has dimension {}",
                self.m.nrows(),
                self.m.ncols(),
                x.ambient_dim()
            )));
        }
        Ok(LorentzPoint(&self.m * &x.0))
    }

    /// Maximum entry of |LᵀηL − η|; zero for an exact isometry.
    pub fn metric_defect(&self) -> f64 {
        let n = self.m.nrows();
        let mut eta = DMatrix::identity(n, n);
        eta[(0, 0)] = -1.0;
        let defect = self.m.transpose() * &eta * &self.m - eta;
        defect.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()))
    }
}
