//! Fingerprinting statistics, membership adversaries and the recall game.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::hypercube::{DenseVector, HypercubeVector, ProductDistribution, SignSums};
use crate::learners::Learner;
use crate::rng::SeedSpec;

/// `β` used by the strongly convex adversaries unless overridden.
pub const BETA_SCVX: f64 = 1.0 / 12.0;

/// Diagonal reweighting `a_k = (144ε² − dμ_k²)/(1 − dμ_k²)` of the convex
/// fingerprinting statistic.
#[derive(Clone, Debug, PartialEq)]
pub struct FingerprintMatrix {
    diag: DenseVector,
    eps: f64,
}

impl FingerprintMatrix {
    pub fn new(dist: &ProductDistribution, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::EpsilonOutOfRange(eps));
        }
        if eps > 1.0 / 12.0 {
            return Err(Error::EpsilonTooLarge(eps));
        }
        let bound = 12.0 * eps;
        let e2 = 144.0 * eps * eps;
        let mut diag = Vec::with_capacity(dist.dim());
        for (index, &p) in dist.bias().as_slice().iter().enumerate() {
            if p.abs() > bound {
                return Err(Error::BiasOutOfRange { index, value: p, bound });
            }
            // d·μ_k² = p_k².
            let p2 = p * p;
            let den = 1.0 - p2;
            diag.push(if den > 0.0 { ((e2 - p2) / den).max(0.0) } else { 0.0 });
        }
        Ok(Self { diag: DenseVector::new(diag)?, eps })
    }

    pub fn diag(&self) -> &DenseVector {
        &self.diag
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn apply(&self, v: &DenseVector) -> Result<DenseVector> {
        self.diag.hadamard(v)
    }
}

/// A decision rule `⟨w, z⟩ − offset ≥ threshold`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearTest {
    pub weights: DenseVector,
    pub offset: f64,
    pub threshold: f64,
}

impl LinearTest {
    pub fn statistic(&self, z: &HypercubeVector) -> Result<f64> {
        Ok(z.inner_dense(&self.weights)? - self.offset)
    }

    pub fn decide(&self, z: &HypercubeVector) -> Result<bool> {
        Ok(self.statistic(z)? >= self.threshold)
    }

    pub fn with_threshold(&self, threshold: f64) -> Self {
        Self { threshold, ..self.clone() }
    }
}

/// `⟨θ̂, A(z − μ)⟩ ≥ ε/n`.
pub fn q_cvx_test(theta: &DenseVector, dist: &ProductDistribution, eps: f64, n: usize) -> Result<LinearTest> {
    check_n(n)?;
    let a = FingerprintMatrix::new(dist, eps)?;
    let weights = a.apply(theta)?;
    let offset = weights.dot(dist.mean_vector())?;
    Ok(LinearTest { weights, offset, threshold: eps / n as f64 })
}

pub fn q_cvx(theta: &DenseVector, z: &HypercubeVector, dist: &ProductDistribution, eps: f64, n: usize) -> Result<bool> {
    q_cvx_test(theta, dist, eps, n)?.decide(z)
}

fn centered_test(theta: &DenseVector, dist: &ProductDistribution, threshold: f64) -> Result<LinearTest> {
    let mu = dist.mean_vector();
    let weights = theta.sub(mu)?;
    let offset = weights.dot(mu)?;
    Ok(LinearTest { weights, offset, threshold })
}

/// `⟨θ̂ − μ, z − μ⟩ ≥ β/(4n)`.
pub fn q_scvx_test(theta: &DenseVector, dist: &ProductDistribution, n: usize, beta: f64) -> Result<LinearTest> {
    check_n(n)?;
    check_beta(beta)?;
    centered_test(theta, dist, beta / (4.0 * n as f64))
}

pub fn q_scvx(theta: &DenseVector, z: &HypercubeVector, dist: &ProductDistribution, n: usize, beta: f64) -> Result<bool> {
    q_scvx_test(theta, dist, n, beta)?.decide(z)
}

/// Indices `i` with `⟨θ̂ − μ, Z_i − μ⟩ ≥ β/n`.
pub fn fp_detector_scvx(
    theta: &DenseVector,
    points: &[HypercubeVector],
    dist: &ProductDistribution,
    n: usize,
    beta: f64,
) -> Result<Vec<usize>> {
    check_n(n)?;
    check_beta(beta)?;
    let test = centered_test(theta, dist, beta / n as f64)?;
    let mut out = Vec::new();
    for (i, z) in points.iter().enumerate() {
        if test.decide(z)? {
            out.push(i);
        }
    }
    Ok(out)
}

/// Output of the correlation-reduction procedure.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrReduction {
    pub w: DenseVector,
    pub flagged: Vec<usize>,
    /// The random subset whose mean replaced `θ̂`, when the cap was hit.
    pub subset: Option<Vec<usize>>,
}

/// `ceil((2/ε)·ln(1/δ))`.
pub fn corr_reduction_cap(eps: f64, delta: f64) -> Result<usize> {
    if !(eps > 0.0 && eps < 1.0 && delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("need eps, delta in (0,1), got {eps}, {delta}")));
    }
    let cap = ((2.0 / eps) * (1.0 / delta).ln()).ceil() as usize;
    if cap < 1 {
        return Err(Error::InvalidParameter("correlation-reduction cap below 1".into()));
    }
    Ok(cap)
}

/// Scans `⟨θ̂, Z_i − z₀⟩ ≥ β/(2n)` in order; once `cap` indices are
/// flagged, `w` becomes the mean of a uniform random `cap`-subset of the
/// sample and the scan stops. Otherwise `w = θ̂`.
#[allow(clippy::too_many_arguments)]
pub fn corr_reduction_scvx<R: Rng + ?Sized>(
    theta: &DenseVector,
    sample: &[HypercubeVector],
    z0: &HypercubeVector,
    eps: f64,
    delta: f64,
    n: usize,
    beta: f64,
    rng: &mut R,
) -> Result<CorrReduction> {
    check_n(n)?;
    check_beta(beta)?;
    let cap = corr_reduction_cap(eps, delta)?;
    corr_reduction_with_cap(theta, sample, z0, cap, n, beta, rng)
}

pub fn corr_reduction_with_cap<R: Rng + ?Sized>(
    theta: &DenseVector,
    sample: &[HypercubeVector],
    z0: &HypercubeVector,
    cap: usize,
    n: usize,
    beta: f64,
    rng: &mut R,
) -> Result<CorrReduction> {
    if cap < 1 {
        return Err(Error::InvalidParameter("correlation-reduction cap below 1".into()));
    }
    let test = surrogate_test(theta, z0, n, beta)?;
    let mut flagged = Vec::new();
    for (i, z) in sample.iter().enumerate() {
        if test.decide(z)? {
            flagged.push(i);
            if flagged.len() == cap {
                if cap > sample.len() {
                    break;
                }
                let mut subset = sample_indices(rng, sample.len(), cap).into_vec();
                subset.sort_unstable();
                let chosen: Vec<_> = subset.iter().map(|&j| sample[j].clone()).collect();
                let w = SignSums::from_points(&chosen)?.mean()?;
                return Ok(CorrReduction { w, flagged, subset: Some(subset) });
            }
        }
    }
    Ok(CorrReduction { w: theta.clone(), flagged, subset: None })
}

/// `⟨θ̂, z − z₀⟩ ≥ β/(2n)`, the per-point test of correlation reduction.
pub fn surrogate_test(theta: &DenseVector, z0: &HypercubeVector, n: usize, beta: f64) -> Result<LinearTest> {
    check_n(n)?;
    Ok(LinearTest { weights: theta.clone(), offset: z0.inner_dense(theta)?, threshold: beta / (2.0 * n as f64) })
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidParameter("n must be at least 1".into()))
    } else {
        Ok(())
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("beta {beta} must be positive")))
    }
}

/// `Σ_i ⟨θ̂, A(Z_i − μ)⟩`.
pub fn fingerprint_statistic_cvx(
    theta: &DenseVector,
    sample: &[HypercubeVector],
    dist: &ProductDistribution,
    eps: f64,
) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    fingerprint_statistic_cvx_sums(theta, &SignSums::from_points(sample)?, dist, eps)
}

/// The convex statistic from the sample's sign sums.
pub fn fingerprint_statistic_cvx_sums(
    theta: &DenseVector,
    sums: &SignSums,
    dist: &ProductDistribution,
    eps: f64,
) -> Result<f64> {
    let w = FingerprintMatrix::new(dist, eps)?.apply(theta)?;
    Ok(w.dot(&sums.total())? - sums.count() as f64 * w.dot(dist.mean_vector())?)
}

/// `Σ_i ⟨θ̂ − μ, Z_i − μ⟩`.
pub fn fingerprint_statistic_scvx(theta: &DenseVector, sample: &[HypercubeVector], dist: &ProductDistribution) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    fingerprint_statistic_scvx_sums(theta, &SignSums::from_points(sample)?, dist)
}

pub fn fingerprint_statistic_scvx_sums(theta: &DenseVector, sums: &SignSums, dist: &ProductDistribution) -> Result<f64> {
    let mu = dist.mean_vector();
    let w = theta.sub(mu)?;
    Ok(w.dot(&sums.total())? - sums.count() as f64 * w.dot(mu)?)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AdversaryKind {
    QCvx,
    QScvx,
    FpScvx,
    CrScvx,
    /// Never accuses; a diagnostic baseline.
    Never,
    /// Always accuses; a diagnostic baseline.
    Always,
}

pub const ADVERSARY_NAMES: [&str; 6] = ["q-cvx", "q-scvx", "fp-scvx", "cr-scvx", "never", "always"];

impl AdversaryKind {
    pub fn name(&self) -> &'static str {
        match self {
            AdversaryKind::QCvx => "q-cvx",
            AdversaryKind::QScvx => "q-scvx",
            AdversaryKind::FpScvx => "fp-scvx",
            AdversaryKind::CrScvx => "cr-scvx",
            AdversaryKind::Never => "never",
            AdversaryKind::Always => "always",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "q-cvx" => AdversaryKind::QCvx,
            "q-scvx" => AdversaryKind::QScvx,
            "fp-scvx" => AdversaryKind::FpScvx,
            "cr-scvx" => AdversaryKind::CrScvx,
            "never" => AdversaryKind::Never,
            "always" => AdversaryKind::Always,
            _ => return Err(Error::UnknownName { kind: "adversary", name: name.into() }),
        })
    }
}

/// An adversary with its parameters. `eps` is used by `q-cvx`; `beta` by the
/// strongly convex adversaries.
#[derive(Clone, Debug, PartialEq)]
pub struct AdversarySpec {
    pub kind: AdversaryKind,
    pub eps: f64,
    pub beta: f64,
}

impl AdversarySpec {
    pub fn new(kind: AdversaryKind, eps: f64) -> Self {
        Self { kind, eps, beta: BETA_SCVX }
    }

    pub fn from_name(name: &str, eps: f64, beta: Option<f64>) -> Result<Self> {
        Ok(Self { kind: AdversaryKind::from_name(name)?, eps, beta: beta.unwrap_or(BETA_SCVX) })
    }

    /// The per-point rule the adversary applies after seeing `θ̂`. `rng`
    /// supplies the surrogate mean draw of `cr-scvx`.
    pub fn linear_test<R: RngCore + ?Sized>(
        &self,
        theta: &DenseVector,
        dist: &ProductDistribution,
        n: usize,
        rng: &mut R,
    ) -> Result<LinearTest> {
        match self.kind {
            AdversaryKind::QCvx => q_cvx_test(theta, dist, self.eps, n),
            AdversaryKind::QScvx => q_scvx_test(theta, dist, n, self.beta),
            AdversaryKind::FpScvx => {
                check_n(n)?;
                check_beta(self.beta)?;
                centered_test(theta, dist, self.beta / n as f64)
            }
            AdversaryKind::CrScvx => {
                check_beta(self.beta)?;
                let z0 = dist.sample_point(rng);
                surrogate_test(theta, &z0, n, self.beta)
            }
            AdversaryKind::Never | AdversaryKind::Always => {
                check_n(n)?;
                let threshold = if self.kind == AdversaryKind::Never { f64::INFINITY } else { f64::NEG_INFINITY };
                Ok(LinearTest { weights: DenseVector::zeros(theta.len()), offset: 0.0, threshold })
            }
        }
    }
}

/// One round of the membership game, with both decision vectors kept.
#[derive(Clone, Debug, PartialEq)]
pub struct GameOutcome {
    pub member_decisions: Vec<bool>,
    pub fresh_decisions: Vec<bool>,
    /// The fair coins `b_i`; recorded for the transcript, not used in scoring.
    pub coins: Vec<bool>,
    pub member_stats: Vec<f64>,
    pub fresh_stats: Vec<f64>,
    pub threshold: f64,
    pub soundness_violated: bool,
    pub recall: usize,
}

impl GameOutcome {
    /// Scores decisions from per-point statistics at `threshold`.
    pub fn score(member_stats: Vec<f64>, fresh_stats: Vec<f64>, coins: Vec<bool>, threshold: f64) -> Self {
        let member_decisions: Vec<bool> = member_stats.iter().map(|&s| s >= threshold).collect();
        let fresh_decisions: Vec<bool> = fresh_stats.iter().map(|&s| s >= threshold).collect();
        let soundness_violated = fresh_decisions.iter().any(|&b| b);
        let recall = member_decisions.iter().filter(|&&b| b).count();
        Self { member_decisions, fresh_decisions, coins, member_stats, fresh_stats, threshold, soundness_violated, recall }
    }

    /// The same transcript judged at another threshold.
    pub fn rescored(&self, threshold: f64) -> Self {
        Self::score(self.member_stats.clone(), self.fresh_stats.clone(), self.coins.clone(), threshold)
    }

    /// Decisions revealed in the game narrative: `b_i = 1` shows the member.
    pub fn revealed_decisions(&self) -> Vec<bool> {
        self.coins
            .iter()
            .enumerate()
            .map(|(i, &b)| if b { self.member_decisions[i] } else { self.fresh_decisions[i] })
            .collect()
    }
}

/// Trains on `S_n ~ D^n`, draws fresh `Z̃_i ~ D`, and evaluates the adversary
/// on every member and every fresh point. Streams are keyed by `trial`.
pub fn run_recall_game(
    learner: &dyn Learner,
    adversary: &AdversarySpec,
    dist: &ProductDistribution,
    n: usize,
    seeds: &SeedSpec,
    trial: u64,
) -> Result<GameOutcome> {
    check_n(n)?;
    let members = dist.sample_points(n, &mut seeds.stream("game-train", trial));
    let fresh = dist.sample_points(n, &mut seeds.stream("game-fresh", trial));
    let mut coin_rng = seeds.stream("game-coin", trial);
    let coins = (0..n).map(|_| coin_rng.next_u32() & 1 == 1).collect();
    let theta = learner.fit(&members)?;
    let test = adversary.linear_test(&theta, dist, n, &mut seeds.stream("game-adversary", trial))?;
    let member_stats = members.iter().map(|z| test.statistic(z)).collect::<Result<Vec<_>>>()?;
    let fresh_stats = fresh.iter().map(|z| test.statistic(z)).collect::<Result<Vec<_>>>()?;
    Ok(GameOutcome::score(member_stats, fresh_stats, coins, test.threshold))
}
