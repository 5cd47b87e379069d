//! The lemma property suite behind `memlab verify`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hypercube::{sample_prior_scvx, DenseVector, HypercubeVector};
use crate::info::{count_lower_bound, operator_norm_check, tail_checks, OPERATOR_NORM_K};
use crate::rng::{SeedSpec, Stream};
use crate::sco::{
    improper_loss_cvx, improper_loss_cvx_numeric, loss_cvx, loss_scvx, project_ball, subgradient, ProblemKind,
    IMPROPER_TOL,
};

pub const COUNT_INSTANCES: usize = 1000;
pub const SAMPLED_CHECKS: usize = 10_000;
pub const TAIL_TRIALS: usize = 1000;
pub const TAIL_DIM: usize = 200;
pub const TAIL_SIZES: [usize; 2] = [10, 50];
pub const OPNORM_N: usize = 50;
pub const OPNORM_D: usize = 200;
pub const OPNORM_TRIALS: usize = 200;
/// Slack of the sampled Lipschitz and convexity checks.
pub const SAMPLED_SLACK: f64 = 1e-9;

/// Deliberate defects for negative-control runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Counts `a_i ≥ β` instead of `a_i ≥ β/n`.
    CountThreshold,
}

impl FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "count-threshold" => Ok(Fault::CountThreshold),
            _ => Err(Error::UnknownName { kind: "fault", name: s.into() }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyCheck {
    pub name: String,
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub trials: usize,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl fmt::Display for VerifyCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {} (value {:.6e}, bound {:.6e})",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.bound
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<VerifyCheck>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &VerifyCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Runs every check at seeds derived from `seed`.
pub fn verify(seed: u64, fault: Option<Fault>) -> Result<VerifyReport> {
    let seeds = SeedSpec::new(seed);
    let mut checks = vec![count_check(&seeds, fault)?];

    let dist = sample_prior_scvx(TAIL_DIM, &mut seeds.stream("verify-dist", 0))?;
    for n in TAIL_SIZES {
        for t in tail_checks(&dist, n, TAIL_TRIALS, &seeds.derive("verify-tail", n as u64))? {
            let (value, bound) = if t.name.starts_with("prior-mean-norm") {
                (t.empirical, t.bound - t.slack)
            } else {
                (t.empirical, t.bound + t.slack)
            };
            checks.push(VerifyCheck { name: t.name, n: Some(n), d: Some(TAIL_DIM), trials: TAIL_TRIALS, value, bound, pass: t.pass });
        }
    }

    let (violations, max_sq) =
        operator_norm_check(OPNORM_N, OPNORM_D, OPNORM_TRIALS, OPERATOR_NORM_K, &seeds.derive("verify-opnorm", 0))?;
    checks.push(VerifyCheck {
        name: format!("operator-norm sigma^2 <= {OPERATOR_NORM_K} over {OPNORM_TRIALS} trials"),
        n: Some(OPNORM_N),
        d: Some(OPNORM_D),
        trials: OPNORM_TRIALS,
        value: max_sq,
        bound: OPERATOR_NORM_K,
        pass: violations == 0,
    });

    for (name, check) in SAMPLED {
        let worst = (0..SAMPLED_CHECKS as u64)
            .into_par_iter()
            .map(|i| check(&mut seeds.stream(name, i)))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(VerifyCheck {
            name: name.to_string(),
            n: None,
            d: None,
            trials: SAMPLED_CHECKS,
            value: worst,
            bound: SAMPLED_SLACK,
            pass: worst <= SAMPLED_SLACK,
        });
    }
    Ok(VerifyReport { checks })
}

fn count_check(seeds: &SeedSpec, fault: Option<Fault>) -> Result<VerifyCheck> {
    let violations = (0..COUNT_INSTANCES as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds.stream("verify-count", i);
            let n = rng.random_range(1..=12usize);
            let scale = rng.random_range(0.1..3.0);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
            let beta = rng.random_range(0.0..3.0);
            let tau = match fault {
                Some(Fault::CountThreshold) => beta,
                None => beta / n as f64,
            };
            let count = a.iter().filter(|&&x| x >= tau).count() as f64;
            Ok(count_lower_bound(&a, beta)? > count + 1e-9)
        })
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&v| v)
        .count();
    Ok(VerifyCheck {
        name: format!("count-lower-bound vs brute force, {COUNT_INSTANCES} instances"),
        n: None,
        d: None,
        trials: COUNT_INSTANCES,
        value: violations as f64,
        bound: 0.0,
        pass: violations == 0,
    })
}

type Sampled = fn(&mut Stream) -> Result<f64>;

/// Each entry returns `lhs − rhs` of an inequality that must be `≤ 0`.
const SAMPLED: [(&str, Sampled); 6] = [
    ("lipschitz-cvx on unit ball", lipschitz_cvx),
    ("lipschitz-scvx on ball around z", lipschitz_scvx),
    ("lipschitz-improper-extension", lipschitz_improper),
    ("strong-convexity-scvx", strong_convexity),
    ("improper-equals-proper on ball", improper_on_ball),
    ("improper-dominates-projected", improper_dominates),
];

fn point(d: usize, rng: &mut Stream) -> Result<HypercubeVector> {
    let signs: Vec<bool> = (0..d).map(|_| rng.random()).collect();
    HypercubeVector::from_signs(&signs)
}

/// A point of the ball of radius `r`, with random direction and radius.
fn in_ball(d: usize, r: f64, rng: &mut Stream) -> Result<DenseVector> {
    let v = DenseVector::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let norm = v.norm();
    let target = r * rng.random::<f64>();
    Ok(if norm > 0.0 { v.scaled(target / norm) } else { v })
}

fn dim(rng: &mut Stream) -> usize {
    rng.random_range(1..=16)
}

fn lipschitz_cvx(rng: &mut Stream) -> Result<f64> {
    let d = dim(rng);
    let z = point(d, rng)?;
    let (a, b) = (in_ball(d, 1.0, rng)?, in_ball(d, 1.0, rng)?);
    Ok((loss_cvx(&a, &z)? - loss_cvx(&b, &z)?).abs() - a.sub(&b)?.norm())
}

fn lipschitz_scvx(rng: &mut Stream) -> Result<f64> {
    let d = dim(rng);
    let z = point(d, rng)?;
    let a = z.to_dense().add(&in_ball(d, 1.0, rng)?)?;
    let b = z.to_dense().add(&in_ball(d, 1.0, rng)?)?;
    Ok((loss_scvx(&a, &z)? - loss_scvx(&b, &z)?).abs() - a.sub(&b)?.norm())
}

fn lipschitz_improper(rng: &mut Stream) -> Result<f64> {
    let d = dim(rng);
    let z = point(d, rng)?;
    let (a, b) = (in_ball(d, 3.0, rng)?, in_ball(d, 3.0, rng)?);
    let fa = improper_loss_cvx(&a, &z, IMPROPER_TOL)?;
    let fb = improper_loss_cvx(&b, &z, IMPROPER_TOL)?;
    Ok((fa - fb).abs() - a.sub(&b)?.norm())
}

fn strong_convexity(rng: &mut Stream) -> Result<f64> {
    let d = dim(rng);
    let z = point(d, rng)?;
    let (a, b) = (in_ball(d, 3.0, rng)?, in_ball(d, 3.0, rng)?);
    let g = subgradient(&ProblemKind::scvx(), &a, &z)?;
    let diff = b.sub(&a)?;
    let rhs = loss_scvx(&a, &z)? + g.dot(&diff)? + 0.5 * diff.norm_sq();
    Ok(rhs - loss_scvx(&b, &z)?)
}

fn improper_on_ball(rng: &mut Stream) -> Result<f64> {
    let d = dim(rng);
    let z = point(d, rng)?;
    let a = in_ball(d, 1.0, rng)?;
    Ok((improper_loss_cvx_numeric(&a, &z, IMPROPER_TOL)? - loss_cvx(&a, &z)?).abs())
}

fn improper_dominates(rng: &mut Stream) -> Result<f64> {
    let d = dim(rng);
    let z = point(d, rng)?;
    let a = in_ball(d, 3.0, rng)?;
    Ok(loss_cvx(&project_ball(&a), &z)? - improper_loss_cvx(&a, &z, IMPROPER_TOL)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_check_passes_and_fault_is_caught() {
        let seeds = SeedSpec::new(7);
        assert!(count_check(&seeds, None).unwrap().pass);
        let broken = count_check(&seeds, Some(Fault::CountThreshold)).unwrap();
        assert!(!broken.pass);
        assert!(broken.name.starts_with("count-lower-bound"));
        assert!("count-threshold".parse::<Fault>().is_ok());
        assert!("nope".parse::<Fault>().is_err());
    }

    #[test]
    fn sampled_checks_hold() {
        for (name, check) in SAMPLED {
            for i in 0..300 {
                let v = check(&mut SeedSpec::new(3).stream(name, i)).unwrap();
                assert!(v <= SAMPLED_SLACK, "{name} #{i}: {v}");
            }
        }
    }
}
