//! Learners for the two hard instances, behind a common interface.

use std::fmt;

use crate::error::{Error, Result};
use crate::hypercube::{DenseVector, HypercubeVector, SignSums};
use crate::sco::{project_ball, subgradient, ProblemKind};

/// Canonical exact key of a learner output, for grouping equal outputs
/// without floating tolerance.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ExactOutput {
    /// `sums / (count·√d)`, with `gcd(sums, count)` divided out.
    Scaled { sums: Vec<i64>, count: u64 },
    /// The ray through `sums`, with the gcd divided out (all zeros for the
    /// zero vector).
    Direction { sums: Vec<i64> },
    /// Raw IEEE-754 bit patterns.
    Bits(Vec<u64>),
    Const,
}

impl ExactOutput {
    pub fn scaled(sums: &[i64], count: u64) -> Self {
        let g = sums.iter().fold(count, |g, &s| gcd(g, s.unsigned_abs()));
        let g = g.max(1);
        Self::Scaled { sums: sums.iter().map(|s| s / g as i64).collect(), count: count / g }
    }

    pub fn direction(sums: &[i64]) -> Self {
        let g = sums.iter().fold(0, |g, &s| gcd(g, s.unsigned_abs())).max(1);
        Self::Direction { sums: sums.iter().map(|s| s / g as i64).collect() }
    }

    pub fn bits(v: &DenseVector) -> Self {
        Self::Bits(v.as_slice().iter().map(|x| x.to_bits()).collect())
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// A learning rule mapping a training sequence to a parameter.
pub trait Learner: Send + Sync {
    fn name(&self) -> String;

    fn fit(&self, sample: &[HypercubeVector]) -> Result<DenseVector>;

    /// Number of leading samples the output depends on, if bounded.
    fn prefix_budget(&self) -> Option<usize> {
        None
    }

    fn deterministic(&self) -> bool {
        true
    }

    /// Exact key of `fit(sample)`. Two samples get the same key iff the
    /// outputs are equal.
    fn exact_output(&self, sample: &[HypercubeVector]) -> Result<ExactOutput> {
        Ok(ExactOutput::bits(&self.fit(sample)?))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum LearnerKind {
    MeanErm,
    SubsampleMean,
    NormalizedMean,
    SubsampleNormalizedMean,
    OnlineGd,
    Projected(Box<LearnerKind>),
    /// Always outputs the zero vector.
    Constant,
    /// Outputs its first training point.
    FirstSample,
}

impl LearnerKind {
    pub fn name(&self) -> String {
        match self {
            LearnerKind::MeanErm => "mean-erm".into(),
            LearnerKind::SubsampleMean => "subsample-mean".into(),
            LearnerKind::NormalizedMean => "normalized-mean".into(),
            LearnerKind::SubsampleNormalizedMean => "subsample-normalized-mean".into(),
            LearnerKind::OnlineGd => "online-gd".into(),
            LearnerKind::Projected(inner) => format!("projected-{}", inner.name()),
            LearnerKind::Constant => "constant".into(),
            LearnerKind::FirstSample => "first-sample".into(),
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "mean-erm" => LearnerKind::MeanErm,
            "subsample-mean" => LearnerKind::SubsampleMean,
            "normalized-mean" => LearnerKind::NormalizedMean,
            "subsample-normalized-mean" => LearnerKind::SubsampleNormalizedMean,
            "online-gd" => LearnerKind::OnlineGd,
            "constant" => LearnerKind::Constant,
            "first-sample" => LearnerKind::FirstSample,
            other => match other.strip_prefix("projected-") {
                Some(inner) => LearnerKind::Projected(Box::new(Self::from_name(inner)?)),
                None => return Err(Error::UnknownName { kind: "learner", name: name.into() }),
            },
        })
    }
}

/// Every name accepted by [`LearnerKind::from_name`] without the
/// `projected-` prefix.
pub const LEARNER_NAMES: [&str; 7] = [
    "mean-erm",
    "subsample-mean",
    "normalized-mean",
    "subsample-normalized-mean",
    "online-gd",
    "constant",
    "first-sample",
];

/// `ceil(4/ε)`, the subsample size of the strongly convex mean learner.
pub fn subsample_mean_budget(eps: f64) -> Result<usize> {
    check_eps(eps)?;
    Ok((4.0 / eps).ceil() as usize)
}

/// `ceil(128·ln(2/δ)/ε²)`, the convex budget with unit `L` and `R`.
pub fn cvx_budget(eps: f64, delta: f64) -> Result<usize> {
    check_eps(eps)?;
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter(format!("delta {delta} outside (0, 1]")));
    }
    Ok((128.0 * (2.0 / delta).ln() / (eps * eps)).ceil() as usize)
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("epsilon {eps} must be positive")))
    }
}

/// A learner with its accuracy target and optional budget override.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub eps: f64,
    pub delta: f64,
    pub m: Option<usize>,
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind, eps: f64, delta: f64) -> Self {
        Self { kind, eps, delta, m: None }
    }

    pub fn with_budget(mut self, m: usize) -> Self {
        self.m = Some(m);
        self
    }

    pub fn from_name(name: &str, eps: f64, delta: f64, m: Option<usize>) -> Result<Self> {
        Ok(Self { kind: LearnerKind::from_name(name)?, eps, delta, m })
    }

    fn inner(&self, kind: &LearnerKind) -> Self {
        Self { kind: kind.clone(), eps: self.eps, delta: self.delta, m: self.m }
    }

    /// Resolved prefix budget.
    pub fn budget(&self) -> Result<Option<usize>> {
        let b = match &self.kind {
            LearnerKind::MeanErm | LearnerKind::NormalizedMean => None,
            LearnerKind::SubsampleMean => Some(match self.m {
                Some(m) => m,
                None => subsample_mean_budget(self.eps)?,
            }),
            LearnerKind::SubsampleNormalizedMean | LearnerKind::OnlineGd => Some(match self.m {
                Some(m) => m,
                None => cvx_budget(self.eps, self.delta)?,
            }),
            LearnerKind::Projected(inner) => self.inner(inner).budget()?,
            LearnerKind::Constant => Some(0),
            LearnerKind::FirstSample => Some(1),
        };
        if b == Some(0) && self.kind != LearnerKind::Constant {
            return Err(Error::InvalidParameter("budget must be at least 1".into()));
        }
        Ok(b)
    }

    /// Nominal sample size at which the learner is run by default.
    pub fn nominal_n(&self) -> Result<usize> {
        match &self.kind {
            LearnerKind::Projected(inner) => self.inner(inner).nominal_n(),
            LearnerKind::MeanErm | LearnerKind::NormalizedMean => Ok((2.0 / self.eps).ceil() as usize),
            LearnerKind::Constant => Ok(1),
            _ => Ok(self.budget()?.expect("bounded learner")),
        }
    }

    fn prefix<'a>(&self, sample: &'a [HypercubeVector]) -> Result<&'a [HypercubeVector]> {
        if sample.is_empty() {
            return Err(Error::EmptySample);
        }
        match self.budget()? {
            Some(m) if sample.len() < m => Err(Error::SampleTooSmall { need: m, got: sample.len() }),
            Some(m) => Ok(&sample[..m]),
            None => Ok(sample),
        }
    }

    /// Fits from the sign sums of the used prefix, for the learners whose
    /// output is a function of the mean. For prefix learners `sums` must
    /// cover exactly the budget.
    pub fn fit_sums(&self, sums: &SignSums) -> Result<DenseVector> {
        if sums.count() == 0 {
            return Err(Error::EmptySample);
        }
        if let Some(m) = self.budget()? {
            if sums.count() != m {
                return Err(Error::SampleTooSmall { need: m, got: sums.count() });
            }
        }
        match &self.kind {
            LearnerKind::MeanErm | LearnerKind::SubsampleMean => sums.mean(),
            LearnerKind::NormalizedMean | LearnerKind::SubsampleNormalizedMean => Ok(normalize(&sums.mean()?)),
            LearnerKind::Projected(inner) => Ok(project_ball(&self.inner(inner).fit_sums(sums)?)),
            other => Err(Error::InvalidParameter(format!(
                "{} is not a function of the sample mean",
                other.name()
            ))),
        }
    }
}

fn normalize(v: &DenseVector) -> DenseVector {
    let norm = v.norm();
    if norm > 0.0 {
        v.scaled(1.0 / norm)
    } else {
        DenseVector::zeros(v.len())
    }
}

/// Step size `1/√m` and the averaged iterates of projected online gradient
/// descent on the linear loss, starting at zero.
pub fn online_gd_cvx(sample: &[HypercubeVector], m: usize) -> Result<DenseVector> {
    if m == 0 {
        return Err(Error::InvalidParameter("budget must be at least 1".into()));
    }
    if sample.len() < m {
        return Err(Error::SampleTooSmall { need: m, got: sample.len() });
    }
    let d = sample[0].dim();
    let eta = 1.0 / (m as f64).sqrt();
    let kind = ProblemKind::cvx();
    let mut theta = DenseVector::zeros(d);
    let mut sum = DenseVector::zeros(d);
    for (t, z) in sample.iter().take(m).enumerate() {
        sum = sum.add(&theta)?;
        if t + 1 < m {
            let g = subgradient(&kind, &theta, z)?;
            theta = project_ball(&theta.sub(&g.scaled(eta))?);
        }
    }
    Ok(sum.scaled(1.0 / m as f64))
}

impl Learner for LearnerSpec {
    fn name(&self) -> String {
        self.kind.name()
    }

    fn fit(&self, sample: &[HypercubeVector]) -> Result<DenseVector> {
        let used = self.prefix(sample)?;
        match &self.kind {
            LearnerKind::MeanErm | LearnerKind::SubsampleMean => SignSums::from_points(used)?.mean(),
            LearnerKind::NormalizedMean | LearnerKind::SubsampleNormalizedMean => {
                Ok(normalize(&SignSums::from_points(used)?.mean()?))
            }
            LearnerKind::OnlineGd => online_gd_cvx(used, used.len()),
            LearnerKind::Projected(inner) => Ok(project_ball(&self.inner(inner).fit(sample)?)),
            LearnerKind::Constant => Ok(DenseVector::zeros(sample[0].dim())),
            LearnerKind::FirstSample => Ok(used[0].to_dense()),
        }
    }

    fn prefix_budget(&self) -> Option<usize> {
        self.budget().ok().flatten()
    }

    fn exact_output(&self, sample: &[HypercubeVector]) -> Result<ExactOutput> {
        let used = self.prefix(sample)?;
        match &self.kind {
            LearnerKind::MeanErm | LearnerKind::SubsampleMean | LearnerKind::FirstSample => {
                let s = SignSums::from_points(used)?;
                Ok(ExactOutput::scaled(s.sums(), s.count() as u64))
            }
            LearnerKind::NormalizedMean | LearnerKind::SubsampleNormalizedMean => {
                Ok(ExactOutput::direction(SignSums::from_points(used)?.sums()))
            }
            LearnerKind::Constant => Ok(ExactOutput::Const),
            _ => Ok(ExactOutput::bits(&self.fit(sample)?)),
        }
    }
}

impl fmt::Display for LearnerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(eps={}, delta={}", self.kind.name(), self.eps, self.delta)?;
        if let Some(m) = self.m {
            write!(f, ", m={m}")?;
        }
        write!(f, ")")
    }
}

/// The mean of the first `m` points, a convenience for tests and callers
/// that do not need a spec.
pub fn prefix_mean(sample: &[HypercubeVector], m: usize) -> Result<DenseVector> {
    if sample.len() < m {
        return Err(Error::SampleTooSmall { need: m, got: sample.len() });
    }
    SignSums::from_points(&sample[..m])?.mean()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypercube::{sample_prior_cvx, sample_prior_scvx, ProductDistribution};
    use crate::rng::SeedSpec;
    use crate::sco::excess_risk;
    use proptest::prelude::*;

    fn spec(name: &str, eps: f64, delta: f64) -> LearnerSpec {
        LearnerSpec::from_name(name, eps, delta, None).unwrap()
    }

    #[test]
    fn registry_round_trip() {
        for name in LEARNER_NAMES {
            assert_eq!(LearnerKind::from_name(name).unwrap().name(), name);
            let p = format!("projected-{name}");
            assert_eq!(LearnerKind::from_name(&p).unwrap().name(), p);
        }
        assert!(matches!(LearnerKind::from_name("sgd"), Err(Error::UnknownName { .. })));
    }

    #[test]
    fn mean_erm_examples() {
        let z = HypercubeVector::from_signs(&[true, false, true]).unwrap();
        let l = spec("mean-erm", 0.1, 0.1);
        assert_eq!(l.fit(&vec![z.clone(); 5]).unwrap(), z.to_dense());
        assert!(l.fit(&[z.clone(), z.negated()]).unwrap().norm() == 0.0);
        assert_eq!(l.fit(&[]), Err(Error::EmptySample));
    }

    #[test]
    fn mean_erm_is_accurate() {
        // ½‖μ̂−μ‖² has mean 1/(2n) = 0.005 at p = 0, and
        // P(‖μ̂−μ‖² ≥ 0.2) ≤ 2exp(−0.2·100/2) ≈ 9e−5.
        let dist = ProductDistribution::uniform(500).unwrap();
        let seeds = SeedSpec::new(31);
        let l = spec("mean-erm", 0.1, 0.05);
        let kind = ProblemKind::scvx();
        let ok = (0..500)
            .filter(|&t| {
                let s = dist.sample_points(100, &mut seeds.stream("s", t));
                excess_risk(&kind, &l.fit(&s).unwrap(), &dist).unwrap() <= 0.1
            })
            .count();
        assert!(ok >= 475);
    }

    #[test]
    fn subsample_mean_examples() {
        let l = spec("subsample-mean", 1.0, 0.1);
        assert_eq!(l.budget().unwrap(), Some(4));
        let dist = ProductDistribution::uniform(16).unwrap();
        let mut rng = SeedSpec::new(32).stream("s", 0);
        let s = dist.sample_points(8, &mut rng);
        assert_eq!(l.fit(&s).unwrap(), prefix_mean(&s, 4).unwrap());
        let mut t = s.clone();
        t[4..].reverse();
        t[7] = t[7].negated();
        assert_eq!(l.fit(&t).unwrap(), l.fit(&s).unwrap());
        assert_eq!(l.fit(&s[..3]), Err(Error::SampleTooSmall { need: 4, got: 3 }));
    }

    #[test]
    fn subsample_mean_expected_excess() {
        let eps = 0.2;
        let l = spec("subsample-mean", eps, 0.1);
        let m = l.budget().unwrap().unwrap();
        let seeds = SeedSpec::new(33);
        let kind = ProblemKind::scvx();
        let mut acc = 0.0;
        for t in 0..500 {
            let dist = sample_prior_scvx(200, &mut seeds.stream("prior", t)).unwrap();
            let s = dist.sample_points(m + 3, &mut seeds.stream("s", t));
            acc += excess_risk(&kind, &l.fit(&s).unwrap(), &dist).unwrap();
        }
        assert!(acc / 500.0 <= eps);
    }

    #[test]
    fn normalized_mean_examples() {
        let z = HypercubeVector::from_signs(&[true, true, false, true]).unwrap();
        let l = spec("normalized-mean", 0.1, 0.1);
        let out = l.fit(&[z.clone(), z.clone()]).unwrap();
        assert!(out.sub(&z.to_dense()).unwrap().norm() < 1e-15);
        assert_eq!(l.fit(&[z.clone(), z.negated()]).unwrap(), DenseVector::zeros(4));
        let w = HypercubeVector::from_signs(&[true, false, false, true]).unwrap();
        assert!((l.fit(&[z, w]).unwrap().norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cvx_budget_examples() {
        let two_over_e = 2.0 / std::f64::consts::E;
        assert_eq!(cvx_budget(1.0, two_over_e).unwrap(), 128);
        assert_eq!(spec("subsample-normalized-mean", 1.0, two_over_e).budget().unwrap(), Some(128));
        assert_eq!(spec("online-gd", 1.0, two_over_e).budget().unwrap(), Some(128));
    }

    #[test]
    fn subsample_normalized_mean_is_accurate() {
        let (eps, delta) = (0.5, 0.1);
        let l = spec("subsample-normalized-mean", eps, delta);
        let m = l.budget().unwrap().unwrap();
        let seeds = SeedSpec::new(34);
        let kind = ProblemKind::cvx();
        let mut fails = 0;
        for t in 0..500 {
            let dist = sample_prior_cvx(1.0 / 12.0, 2000, &mut seeds.stream("prior", t)).unwrap();
            let sums = dist.sample_sums(m, &mut seeds.stream("s", t));
            if excess_risk(&kind, &l.fit_sums(&sums).unwrap(), &dist).unwrap() > eps {
                fails += 1;
            }
        }
        let bound = delta + 0.05;
        assert!(fails as f64 / 500.0 <= bound);
    }

    #[test]
    fn fit_sums_matches_fit() {
        let dist = ProductDistribution::new(vec![0.3, -0.2, 0.9, 0.0, -1.0]).unwrap();
        let mut rng = SeedSpec::new(35).stream("s", 0);
        let s = dist.sample_points(12, &mut rng);
        for name in ["mean-erm", "normalized-mean", "projected-mean-erm"] {
            let l = spec(name, 0.1, 0.1);
            assert_eq!(l.fit(&s).unwrap(), l.fit_sums(&SignSums::from_points(&s).unwrap()).unwrap());
        }
        let l = spec("subsample-mean", 0.4, 0.1);
        assert_eq!(l.fit(&s).unwrap(), l.fit_sums(&SignSums::from_points(&s[..10]).unwrap()).unwrap());
        assert!(l.fit_sums(&SignSums::from_points(&s).unwrap()).is_err());
        assert!(spec("online-gd", 0.1, 0.1).with_budget(3).fit_sums(&SignSums::from_points(&s[..3]).unwrap()).is_err());
    }

    #[test]
    fn online_gd_examples() {
        let z = HypercubeVector::from_signs(&[true, false, true, true]).unwrap();
        let w = z.negated();
        let l = spec("online-gd", 0.1, 0.1).with_budget(1);
        assert_eq!(l.fit(&[z.clone(), w.clone()]).unwrap(), DenseVector::zeros(4));
        let l = l.with_budget(2);
        let eta = 1.0 / 2f64.sqrt();
        let expect = z.to_dense().scaled(eta / 2.0);
        assert!(l.fit(&[z.clone(), w.clone()]).unwrap().sub(&expect).unwrap().norm() < 1e-15);
        let long: Vec<_> = (0..50).map(|_| z.clone()).collect();
        assert!(l.with_budget(50).fit(&long).unwrap().norm() <= 1.0);
    }

    #[test]
    fn projection_wrapper_examples() {
        let inner = spec("mean-erm", 0.1, 0.1);
        let wrapped = spec("projected-mean-erm", 0.1, 0.1);
        let z = HypercubeVector::from_signs(&[true, false]).unwrap();
        let s = [z.clone(), z.clone(), z.negated()];
        assert_eq!(wrapped.fit(&s).unwrap(), inner.fit(&s).unwrap());
        let w = spec("projected-subsample-mean", 1.0, 0.1);
        assert_eq!(w.budget().unwrap(), Some(4));
        assert_eq!(project_ball(&DenseVector::basis(3, 0, 2.0)), DenseVector::basis(3, 0, 1.0));
    }

    #[test]
    fn exact_output_separates_exactly() {
        let z = HypercubeVector::from_signs(&[true, false, true]).unwrap();
        let w = HypercubeVector::from_signs(&[true, true, true]).unwrap();
        let l = spec("mean-erm", 0.1, 0.1);
        let a = l.exact_output(&[z.clone(), w.clone()]).unwrap();
        let b = l.exact_output(&[w.clone(), z.clone()]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, ExactOutput::Scaled { sums: vec![1, 0, 1], count: 1 });
        assert_ne!(a, l.exact_output(&[z.clone(), z.clone()]).unwrap());
        // Means of (z,z) and (z) coincide.
        assert_eq!(l.exact_output(&[z.clone(), z.clone()]).unwrap(), l.exact_output(&[z.clone()]).unwrap());
        let n = spec("normalized-mean", 0.1, 0.1);
        assert_eq!(n.exact_output(&[z.clone(), w.clone()]).unwrap(), ExactOutput::Direction { sums: vec![1, 0, 1] });
        assert_eq!(spec("constant", 0.1, 0.1).exact_output(&[z]).unwrap(), ExactOutput::Const);
    }

    proptest! {
        #[test]
        fn prefix_learners_ignore_suffix(seed in any::<u64>(), m in 1usize..6, extra in 0usize..6) {
            let dist = ProductDistribution::uniform(9).unwrap();
            let seeds = SeedSpec::new(seed);
            let s = dist.sample_points(m + extra, &mut seeds.stream("s", 0));
            let mut t = s.clone();
            let replace = dist.sample_points(extra, &mut seeds.stream("r", 0));
            t[m..].clone_from_slice(&replace);
            t[m..].reverse();
            for name in ["subsample-mean", "subsample-normalized-mean", "online-gd", "projected-online-gd", "first-sample"] {
                let l = spec(name, 0.1, 0.1).with_budget(if name == "first-sample" { 1 } else { m });
                prop_assert_eq!(l.fit(&s).unwrap(), l.fit(&t).unwrap());
                prop_assert_eq!(l.exact_output(&s).unwrap(), l.exact_output(&t).unwrap());
            }
        }

        #[test]
        fn deterministic_learners_repeat(seed in any::<u64>()) {
            let dist = ProductDistribution::uniform(13).unwrap();
            let s = dist.sample_points(7, &mut SeedSpec::new(seed).stream("s", 0));
            for name in LEARNER_NAMES {
                let l = spec(name, 0.1, 0.1).with_budget(5);
                prop_assert!(l.deterministic());
                let a = l.fit(&s).unwrap();
                let b = l.fit(&s).unwrap();
                prop_assert_eq!(ExactOutput::bits(&a), ExactOutput::bits(&b));
            }
        }

        #[test]
        fn exact_output_agrees_with_fit(seed in any::<u64>()) {
            let dist = ProductDistribution::uniform(3).unwrap();
            let seeds = SeedSpec::new(seed);
            let s = dist.sample_points(4, &mut seeds.stream("a", 0));
            let t = dist.sample_points(4, &mut seeds.stream("b", 0));
            for name in ["mean-erm", "normalized-mean"] {
                let l = spec(name, 0.1, 0.1);
                let same_key = l.exact_output(&s).unwrap() == l.exact_output(&t).unwrap();
                let same_fit = l.fit(&s).unwrap().sub(&l.fit(&t).unwrap()).unwrap().norm() < 1e-12;
                prop_assert_eq!(same_key, same_fit);
            }
        }
    }
}
