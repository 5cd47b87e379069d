//! The two hard SCO instances on the hypercube: the linear loss
//! `f(θ,z) = −⟨θ,z⟩` over the unit ball and its strongly convex variant
//! `f(θ,z) = −⟨θ,z⟩ + ½‖θ‖²`.

use crate::error::{Error, Result};
use crate::hypercube::{DenseVector, HypercubeVector, ProductDistribution};

/// Default absolute tolerance of the improper extension.
pub const IMPROPER_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProblemTag {
    Cvx,
    Scvx,
}

/// A problem instance with its Lipschitz constant `L`, strong convexity `λ`
/// and parameter radius `R`.
///
/// Rescaled instances use `L·R·f(θ/R, z)`, which keeps `λ = L/R` for the
/// strongly convex loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProblemKind {
    pub tag: ProblemTag,
    pub lipschitz: f64,
    pub strong_convexity: f64,
    pub radius: f64,
}

impl ProblemKind {
    pub fn cvx() -> Self {
        Self { tag: ProblemTag::Cvx, lipschitz: 1.0, strong_convexity: 0.0, radius: 1.0 }
    }

    pub fn scvx() -> Self {
        Self { tag: ProblemTag::Scvx, lipschitz: 1.0, strong_convexity: 1.0, radius: 1.0 }
    }

    pub fn rescaled(self, lipschitz: f64, radius: f64) -> Result<Self> {
        if !(lipschitz > 0.0 && radius > 0.0 && lipschitz.is_finite() && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("L = {lipschitz}, R = {radius}")));
        }
        let strong_convexity = match self.tag {
            ProblemTag::Cvx => 0.0,
            ProblemTag::Scvx => lipschitz / radius,
        };
        Ok(Self { tag: self.tag, lipschitz, strong_convexity, radius })
    }

    fn scale(&self) -> f64 {
        self.lipschitz * self.radius
    }
}

/// `−⟨θ,z⟩`.
pub fn loss_cvx(theta: &DenseVector, z: &HypercubeVector) -> Result<f64> {
    Ok(-z.inner_dense(theta)?)
}

/// `−⟨θ,z⟩ + ½‖θ‖²`.
pub fn loss_scvx(theta: &DenseVector, z: &HypercubeVector) -> Result<f64> {
    Ok(-z.inner_dense(theta)? + 0.5 * theta.norm_sq())
}

pub fn loss(kind: &ProblemKind, theta: &DenseVector, z: &HypercubeVector) -> Result<f64> {
    let r = kind.radius;
    let t = theta.scaled(1.0 / r);
    let base = match kind.tag {
        ProblemTag::Cvx => loss_cvx(&t, z)?,
        ProblemTag::Scvx => loss_scvx(&t, z)?,
    };
    Ok(kind.scale() * base)
}

/// `−z` for the linear loss, `θ − z` for the strongly convex one (times the
/// instance scaling).
pub fn subgradient(kind: &ProblemKind, theta: &DenseVector, z: &HypercubeVector) -> Result<DenseVector> {
    let minus_z = DenseVector::zeros(z.dim()).add_scaled_point(-kind.lipschitz, z)?;
    match kind.tag {
        ProblemTag::Cvx => {
            if theta.len() != z.dim() {
                return Err(Error::DimensionMismatch { left: theta.len(), right: z.dim() });
            }
            Ok(minus_z)
        }
        ProblemTag::Scvx => minus_z.add(&theta.scaled(kind.strong_convexity)),
    }
}

/// Closed-form `F_D(θ) = E f(θ,Z)`.
pub fn population_risk(kind: &ProblemKind, theta: &DenseVector, dist: &ProductDistribution) -> Result<f64> {
    let t = theta.scaled(1.0 / kind.radius);
    let mu = dist.mean_vector();
    let base = match kind.tag {
        ProblemTag::Cvx => -t.dot(mu)?,
        ProblemTag::Scvx => -t.dot(mu)? + 0.5 * t.norm_sq(),
    };
    Ok(kind.scale() * base)
}

/// `F_D(θ) − min F_D`: `‖μ‖ − ⟨θ,μ⟩` (unclamped) or `½‖θ−μ‖²`.
pub fn excess_risk(kind: &ProblemKind, theta: &DenseVector, dist: &ProductDistribution) -> Result<f64> {
    let t = theta.scaled(1.0 / kind.radius);
    let mu = dist.mean_vector();
    let base = match kind.tag {
        ProblemTag::Cvx => mu.norm() - t.dot(mu)?,
        ProblemTag::Scvx => 0.5 * t.sub(mu)?.norm_sq(),
    };
    Ok(kind.scale() * base)
}

/// Euclidean projection onto the unit ball.
pub fn project_ball(x: &DenseVector) -> DenseVector {
    project_ball_radius(x, 1.0)
}

pub fn project_ball_radius(x: &DenseVector, radius: f64) -> DenseVector {
    let norm = x.norm();
    if norm <= radius {
        x.clone()
    } else {
        x.scaled(radius / norm)
    }
}

/// `f̃(θ,z) = inf_{‖w‖≤1} −⟨w,z⟩ + ‖θ−w‖`, the 1-Lipschitz extension of the
/// linear loss to all of `R^d`. Equals `loss_cvx` on the unit ball.
pub fn improper_loss_cvx(theta: &DenseVector, z: &HypercubeVector, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")));
    }
    if theta.norm() <= 1.0 {
        return loss_cvx(theta, z);
    }
    improper_loss_cvx_numeric(theta, z, tol)
}

/// Numeric evaluation of the extension without the on-ball shortcut.
///
/// With `a = ⟨θ,z⟩`, `b = ‖θ − a z‖` and `w = α z + β e` (`e` the unit
/// vector of `θ − a z`), the objective is `−α + √((a−α)² + (b−β)²)` on
/// `α² + β² ≤ 1`; components of `w` orthogonal to the plane only hurt. For
/// fixed `α` the best `β` is `b` clipped to `±√(1−α²)`, and the remaining
/// one-dimensional convex problem is solved by golden-section search.
pub fn improper_loss_cvx_numeric(theta: &DenseVector, z: &HypercubeVector, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")));
    }
    let a = z.inner_dense(theta)?;
    let b = (theta.norm_sq() - a * a).max(0.0).sqrt();
    let g = |alpha: f64| {
        let half = (1.0 - alpha * alpha).max(0.0).sqrt();
        let beta = b.clamp(-half, half);
        -alpha + ((a - alpha).powi(2) + (b - beta).powi(2)).sqrt()
    };
    let (alpha, value) = golden_min(g, -1.0, 1.0, tol * 1e-3, 400).ok_or(Error::NonConvergence("improper extension"))?;
    // Endpoints are feasible and the search never evaluates them exactly.
    Ok(value.min(g(1.0)).min(g(-1.0)).min(g(alpha)))
}

/// Golden-section minimization of a convex function on `[lo, hi]`.
pub(crate) fn golden_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, width: f64, cap: usize) -> Option<(f64, f64)> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..cap {
        if hi - lo <= width {
            let x = (lo + hi) / 2.0;
            return Some((x, f(x).min(f1).min(f2)));
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypercube::sample_prior_scvx;
    use crate::rng::SeedSpec;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_dense<R: Rng>(d: usize, scale: f64, rng: &mut R) -> DenseVector {
        DenseVector::new((0..d).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
    }

    fn random_point<R: Rng>(d: usize, rng: &mut R) -> HypercubeVector {
        ProductDistribution::uniform(d).unwrap().sample_point(rng)
    }

    /// Brute-force polar grid over `w = r(cos φ ẑ + sin φ e)` in the unit
    /// disk, refined around the best cell; boundary points are on the grid.
    fn grid_oracle(theta: &DenseVector, z: &HypercubeVector) -> f64 {
        let a = z.inner_dense(theta).unwrap();
        let b = (theta.norm_sq() - a * a).max(0.0).sqrt();
        let g = |r: f64, phi: f64| {
            let (al, be) = (r * phi.cos(), r * phi.sin());
            -al + ((a - al).powi(2) + (b - be).powi(2)).sqrt()
        };
        let (mut cr, mut cp) = (0.5, 0.0);
        let (mut sr, mut sp) = (0.5, std::f64::consts::PI);
        let mut best = f64::INFINITY;
        for _ in 0..10 {
            let steps = 200;
            let (mut br, mut bp) = (cr, cp);
            for i in 0..=steps {
                let r = (cr - sr + 2.0 * sr * i as f64 / steps as f64).clamp(0.0, 1.0);
                for j in 0..=steps {
                    let phi = cp - sp + 2.0 * sp * j as f64 / steps as f64;
                    let v = g(r, phi);
                    if v < best {
                        best = v;
                        br = r;
                        bp = phi;
                    }
                }
            }
            cr = br;
            cp = bp;
            sr /= 20.0;
            sp /= 20.0;
        }
        best
    }

    #[test]
    fn loss_examples() {
        let z = HypercubeVector::from_signs(&[true, false, true, true]).unwrap();
        let zd = z.to_dense();
        assert_eq!(loss_cvx(&DenseVector::zeros(4), &z).unwrap(), 0.0);
        assert!((loss_cvx(&zd, &z).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(loss_cvx(&DenseVector::basis(4, 0, 1.0), &z).unwrap(), -0.5);
        assert_eq!(loss_scvx(&DenseVector::zeros(4), &z).unwrap(), 0.0);
        assert!((loss_scvx(&zd, &z).unwrap() + 0.5).abs() < 1e-15);
        assert!(loss_scvx(&zd.scaled(2.0), &z).unwrap().abs() < 1e-15);
        assert!(matches!(
            loss_cvx(&DenseVector::zeros(3), &z),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn subgradient_examples() {
        let z = HypercubeVector::from_signs(&[true, false, true]).unwrap();
        let g = subgradient(&ProblemKind::cvx(), &DenseVector::basis(3, 1, 0.7), &z).unwrap();
        assert_eq!(g, z.to_dense().scaled(-1.0));
        let g = subgradient(&ProblemKind::scvx(), &z.to_dense(), &z).unwrap();
        assert!(g.norm() < 1e-15);
    }

    #[test]
    fn subgradient_matches_central_difference() {
        let mut rng = SeedSpec::new(21).stream("fd", 0);
        let h = 1e-5;
        for kind in [ProblemKind::cvx(), ProblemKind::scvx()] {
            for _ in 0..200 {
                let theta = random_dense(12, 1.0, &mut rng);
                let v = random_dense(12, 1.0, &mut rng);
                let z = random_point(12, &mut rng);
                let fp = loss(&kind, &theta.add(&v.scaled(h)).unwrap(), &z).unwrap();
                let fm = loss(&kind, &theta.sub(&v.scaled(h)).unwrap(), &z).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                let g = subgradient(&kind, &theta, &z).unwrap();
                assert!((fd - g.dot(&v).unwrap()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn population_risk_examples() {
        let mut rng = SeedSpec::new(22).stream("risk", 0);
        let dist = sample_prior_scvx(50, &mut rng).unwrap();
        let mu = dist.mean_vector().clone();
        let unit = mu.scaled(1.0 / mu.norm());
        let cvx = ProblemKind::cvx();
        let scvx = ProblemKind::scvx();
        assert!((population_risk(&cvx, &unit, &dist).unwrap() + mu.norm()).abs() < 1e-12);
        assert!((population_risk(&scvx, &mu, &dist).unwrap() + 0.5 * mu.norm_sq()).abs() < 1e-12);
        assert!(excess_risk(&scvx, &mu, &dist).unwrap().abs() < 1e-15);
        assert!((excess_risk(&scvx, &DenseVector::zeros(50), &dist).unwrap() - 0.5 * mu.norm_sq()).abs() < 1e-15);
        assert!(excess_risk(&cvx, &unit, &dist).unwrap().abs() < 1e-12);
    }

    #[test]
    fn population_risk_matches_monte_carlo() {
        // Loss values lie in [-1.5, 1.5]; 1e5 draws give sd below 0.005.
        let mut rng = SeedSpec::new(23).stream("risk", 0);
        let dist = sample_prior_scvx(20, &mut rng).unwrap();
        let theta = random_dense(20, 0.2, &mut rng);
        for kind in [ProblemKind::cvx(), ProblemKind::scvx()] {
            let mut acc = 0.0;
            for _ in 0..100_000 {
                acc += loss(&kind, &theta, &dist.sample_point(&mut rng)).unwrap();
            }
            let closed = population_risk(&kind, &theta, &dist).unwrap();
            assert!((acc / 1e5 - closed).abs() < 0.01);
        }
    }

    #[test]
    fn projection_examples() {
        let x = DenseVector::new(vec![0.3, -0.4]).unwrap();
        assert_eq!(project_ball(&x), x);
        let y = DenseVector::basis(3, 0, 3.0);
        assert_eq!(project_ball(&y), DenseVector::basis(3, 0, 1.0));
    }

    #[test]
    fn improper_examples() {
        let mut rng = SeedSpec::new(24).stream("imp", 0);
        let z = random_point(9, &mut rng);
        assert_eq!(improper_loss_cvx(&DenseVector::zeros(9), &z, IMPROPER_TOL).unwrap(), 0.0);
        let two_z = z.to_dense().scaled(2.0);
        let v = improper_loss_cvx(&two_z, &z, IMPROPER_TOL).unwrap();
        assert!(v.abs() < 1e-9, "{v}");
        assert!((v - grid_oracle(&two_z, &z)).abs() < 1e-8);
        let inside = random_dense(9, 0.3, &mut rng);
        assert_eq!(improper_loss_cvx(&inside, &z, IMPROPER_TOL).unwrap(), loss_cvx(&inside, &z).unwrap());
        assert!(improper_loss_cvx(&inside, &z, 0.0).is_err());
    }

    #[test]
    fn improper_matches_grid_oracle() {
        let mut rng = SeedSpec::new(25).stream("imp", 0);
        for _ in 0..20 {
            let z = random_point(6, &mut rng);
            let theta = random_dense(6, 2.0, &mut rng);
            let fast = improper_loss_cvx_numeric(&theta, &z, IMPROPER_TOL).unwrap();
            let slow = grid_oracle(&theta, &z);
            assert!(fast <= slow + 1e-9, "fast {fast} slow {slow}");
            assert!(slow - fast < 1e-7, "fast {fast} slow {slow}");
        }
    }

    #[test]
    fn numeric_extension_agrees_on_ball() {
        let mut rng = SeedSpec::new(26).stream("imp", 0);
        for _ in 0..2000 {
            let z = random_point(10, &mut rng);
            let theta = project_ball(&random_dense(10, 0.6, &mut rng));
            let v = improper_loss_cvx_numeric(&theta, &z, IMPROPER_TOL).unwrap();
            assert!((v - loss_cvx(&theta, &z).unwrap()).abs() <= 1e-9);
        }
    }

    #[test]
    fn rescaling_is_consistent() {
        let kind = ProblemKind::scvx().rescaled(2.0, 3.0).unwrap();
        assert!((kind.strong_convexity - 2.0 / 3.0).abs() < 1e-15);
        let mut rng = SeedSpec::new(27).stream("scale", 0);
        let dist = sample_prior_scvx(8, &mut rng).unwrap();
        let theta = random_dense(8, 2.0, &mut rng);
        let z = dist.sample_point(&mut rng);
        let direct = -2.0 * z.inner_dense(&theta).unwrap() + 0.5 * (2.0 / 3.0) * theta.norm_sq();
        assert!((loss(&kind, &theta, &z).unwrap() - direct).abs() < 1e-12);
        let opt = dist.mean_vector().scaled(3.0);
        let gap = population_risk(&kind, &theta, &dist).unwrap() - population_risk(&kind, &opt, &dist).unwrap();
        assert!((gap - excess_risk(&kind, &theta, &dist).unwrap()).abs() < 1e-12);
        assert!(ProblemKind::cvx().rescaled(0.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn losses_are_one_lipschitz(seed in any::<u64>()) {
            let mut rng = SeedSpec::new(seed).stream("lip", 0);
            let z = random_point(7, &mut rng);
            let t1 = project_ball(&random_dense(7, 1.0, &mut rng));
            let t2 = project_ball(&random_dense(7, 1.0, &mut rng));
            let dist = t1.sub(&t2).unwrap().norm();
            let dc = (loss_cvx(&t1, &z).unwrap() - loss_cvx(&t2, &z).unwrap()).abs();
            // The strongly convex loss has gradient θ − z, so it is
            // 1-Lipschitz on the ball of radius one around z.
            let zd = z.to_dense();
            let h1 = zd.add(&t1).unwrap();
            let h2 = zd.add(&t2).unwrap();
            let ds = (loss_scvx(&h1, &z).unwrap() - loss_scvx(&h2, &z).unwrap()).abs();
            prop_assert!(dc <= dist + 1e-9);
            prop_assert!(ds <= dist + 1e-9);
            let u1 = random_dense(7, 2.0, &mut rng);
            let u2 = random_dense(7, 2.0, &mut rng);
            let di = (improper_loss_cvx(&u1, &z, IMPROPER_TOL).unwrap()
                - improper_loss_cvx(&u2, &z, IMPROPER_TOL).unwrap()).abs();
            prop_assert!(di <= u1.sub(&u2).unwrap().norm() + 1e-8);
        }

        #[test]
        fn scvx_is_strongly_convex(seed in any::<u64>()) {
            let mut rng = SeedSpec::new(seed).stream("sc", 0);
            let kind = ProblemKind::scvx();
            let z = random_point(9, &mut rng);
            let t1 = random_dense(9, 2.0, &mut rng);
            let t2 = random_dense(9, 2.0, &mut rng);
            let g = subgradient(&kind, &t1, &z).unwrap();
            let diff = t2.sub(&t1).unwrap();
            let rhs = loss_scvx(&t1, &z).unwrap() + g.dot(&diff).unwrap() + 0.5 * diff.norm_sq();
            prop_assert!(loss_scvx(&t2, &z).unwrap() >= rhs - 1e-9);
        }

        #[test]
        fn extension_dominates_projected_loss(seed in any::<u64>()) {
            let mut rng = SeedSpec::new(seed).stream("dom", 0);
            let z = random_point(8, &mut rng);
            let theta = random_dense(8, 3.0, &mut rng);
            let lhs = improper_loss_cvx(&theta, &z, IMPROPER_TOL).unwrap();
            prop_assert!(lhs >= loss_cvx(&project_ball(&theta), &z).unwrap() - IMPROPER_TOL);
        }

        #[test]
        fn projection_is_contraction(seed in any::<u64>()) {
            let mut rng = SeedSpec::new(seed).stream("proj", 0);
            let x = random_dense(5, 3.0, &mut rng);
            let y = random_dense(5, 3.0, &mut rng);
            let lhs = project_ball(&x).sub(&project_ball(&y)).unwrap().norm();
            prop_assert!(lhs <= x.sub(&y).unwrap().norm() + 1e-12);
        }

        #[test]
        fn scvx_excess_two_paths(seed in any::<u64>()) {
            let mut rng = SeedSpec::new(seed).stream("ex", 0);
            let dist = sample_prior_scvx(6, &mut rng).unwrap();
            let theta = random_dense(6, 2.0, &mut rng);
            let kind = ProblemKind::scvx();
            let gap = population_risk(&kind, &theta, &dist).unwrap()
                - population_risk(&kind, dist.mean_vector(), &dist).unwrap();
            prop_assert!((gap - excess_risk(&kind, &theta, &dist).unwrap()).abs() < 1e-12);
        }
    }
}
