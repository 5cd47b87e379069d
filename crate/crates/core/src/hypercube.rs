//! Sample space `{±1/√d}^d`, product distributions over it, priors over the
//! bias vector, and the supersample used by conditional mutual information.

use rand::{Rng, RngCore};
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};

const WORD: usize = 64;

fn words_for(dim: usize) -> usize {
    dim.div_ceil(WORD)
}

fn tail_mask(dim: usize) -> u64 {
    match dim % WORD {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

/// A point of `{±1/√d}^d`, stored as a packed sign mask.
///
/// Bit `k` set means coordinate `k` is `+1/√d`. The last word is zero-padded,
/// so equality and hashing are canonical.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HypercubeVector {
    dim: usize,
    words: Vec<u64>,
}

impl HypercubeVector {
    pub fn from_signs(signs: &[bool]) -> Result<Self> {
        if signs.is_empty() {
            return Err(Error::ZeroDimension);
        }
        let mut words = vec![0u64; words_for(signs.len())];
        for (k, &s) in signs.iter().enumerate() {
            if s {
                words[k / WORD] |= 1 << (k % WORD);
            }
        }
        Ok(Self { dim: signs.len(), words })
    }

    /// Builds a vector from packed words; bits past `dim` must be clear.
    pub fn from_words(dim: usize, words: Vec<u64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        if words.len() != words_for(dim) {
            return Err(Error::InvalidParameter(format!(
                "{} words cannot hold dimension {dim}",
                words.len()
            )));
        }
        if words[words.len() - 1] & !tail_mask(dim) != 0 {
            return Err(Error::InvalidParameter("padding bits must be zero".into()));
        }
        Ok(Self { dim, words })
    }

    pub fn all_plus(dim: usize) -> Result<Self> {
        Self::from_signs(&vec![true; dim])
    }

    pub fn all_minus(dim: usize) -> Result<Self> {
        Self::from_signs(&vec![false; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn sign(&self, k: usize) -> bool {
        self.words[k / WORD] >> (k % WORD) & 1 == 1
    }

    pub fn coordinate(&self, k: usize) -> f64 {
        let c = inv_sqrt(self.dim);
        if self.sign(k) {
            c
        } else {
            -c
        }
    }

    /// Coordinate-wise negation.
    pub fn negated(&self) -> Self {
        let mut words: Vec<u64> = self.words.iter().map(|w| !w).collect();
        let last = words.len() - 1;
        words[last] &= tail_mask(self.dim);
        Self { dim: self.dim, words }
    }

    pub fn plus_count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn hamming(&self, other: &Self) -> Result<usize> {
        check_dims(self.dim, other.dim)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }

    /// `(d − 2·hamming)/d`, computed with popcounts.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        let h = self.hamming(other)?;
        Ok((self.dim as f64 - 2.0 * h as f64) / self.dim as f64)
    }

    /// `⟨w, z⟩` for a dense `w`.
    pub fn inner_dense(&self, w: &DenseVector) -> Result<f64> {
        check_dims(self.dim, w.len())?;
        Ok(self.signed_sum(w.as_slice()) * inv_sqrt(self.dim))
    }

    /// `Σ_k s_k w_k` with `s_k = ±1`, branch-free on the sign bit.
    pub(crate) fn signed_sum(&self, w: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (chunk, &word) in w.chunks(WORD).zip(&self.words) {
            for (j, &x) in chunk.iter().enumerate() {
                let flip = (!(word >> j) & 1) << 63;
                acc += f64::from_bits(x.to_bits() ^ flip);
            }
        }
        acc
    }

    pub fn to_dense(&self) -> DenseVector {
        let c = inv_sqrt(self.dim);
        DenseVector {
            coords: (0..self.dim).map(|k| if self.sign(k) { c } else { -c }).collect(),
        }
    }

    /// Canonical encoding: dimension as little-endian u64, then the words.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * (1 + self.words.len()));
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || bytes.len() % 8 != 0 {
            return Err(Error::InvalidParameter("truncated hypercube encoding".into()));
        }
        let mut it = bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("chunk of 8")));
        let dim = it.next().expect("length checked") as usize;
        Self::from_words(dim, it.collect())
    }
}

pub(crate) fn inv_sqrt(dim: usize) -> f64 {
    1.0 / (dim as f64).sqrt()
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        Err(Error::DimensionMismatch { left: a, right: b })
    } else {
        Ok(())
    }
}

/// A finite real vector. Parameters, means and diagonal scalings.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseVector {
    coords: Vec<f64>,
}

impl DenseVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(index) = coords.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { coords })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { coords: vec![0.0; dim] }
    }

    /// Standard basis vector `e_k` scaled by `scale`.
    pub fn basis(dim: usize, k: usize, scale: f64) -> Self {
        let mut v = Self::zeros(dim);
        v.coords[k] = scale;
        v
    }

    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        debug_assert!(coords.iter().all(|x| x.is_finite()));
        Self { coords }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coords
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        check_dims(self.len(), other.len())?;
        Ok(self.coords.iter().zip(&other.coords).map(|(a, b)| a * b).sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.coords.iter().map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::from_vec_unchecked(self.coords.iter().map(|x| x * s).collect())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dims(self.len(), other.len())?;
        Ok(Self::from_vec_unchecked(
            self.coords.iter().zip(&other.coords).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_dims(self.len(), other.len())?;
        Ok(Self::from_vec_unchecked(
            self.coords.iter().zip(&other.coords).map(|(a, b)| a - b).collect(),
        ))
    }

    /// Coordinate-wise product, i.e. applying a diagonal matrix.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        check_dims(self.len(), other.len())?;
        Ok(Self::from_vec_unchecked(
            self.coords.iter().zip(&other.coords).map(|(a, b)| a * b).collect(),
        ))
    }

    /// `self + s·z` for a hypercube point `z`.
    pub fn add_scaled_point(&self, s: f64, z: &HypercubeVector) -> Result<Self> {
        check_dims(self.len(), z.dim())?;
        let c = s * inv_sqrt(z.dim());
        Ok(Self::from_vec_unchecked(
            self.coords
                .iter()
                .enumerate()
                .map(|(k, x)| if z.sign(k) { x + c } else { x - c })
                .collect(),
        ))
    }
}

/// Either kind of vector, for the mixed inner product.
#[derive(Clone, Copy, Debug)]
pub enum VectorRef<'a> {
    Cube(&'a HypercubeVector),
    Dense(&'a DenseVector),
}

impl<'a> From<&'a HypercubeVector> for VectorRef<'a> {
    fn from(v: &'a HypercubeVector) -> Self {
        VectorRef::Cube(v)
    }
}

impl<'a> From<&'a DenseVector> for VectorRef<'a> {
    fn from(v: &'a DenseVector) -> Self {
        VectorRef::Dense(v)
    }
}

/// Standard inner product. Two hypercube points use the popcount path.
pub fn inner<'a, 'b>(a: impl Into<VectorRef<'a>>, b: impl Into<VectorRef<'b>>) -> Result<f64> {
    match (a.into(), b.into()) {
        (VectorRef::Cube(x), VectorRef::Cube(y)) => x.inner(y),
        (VectorRef::Cube(x), VectorRef::Dense(w)) | (VectorRef::Dense(w), VectorRef::Cube(x)) => {
            x.inner_dense(w)
        }
        (VectorRef::Dense(x), VectorRef::Dense(y)) => x.dot(y),
    }
}

/// Product distribution `D_p` on the hypercube with bias `p ∈ [−1,1]^d`:
/// coordinate `k` is `+1/√d` with probability `(1+p_k)/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductDistribution {
    bias: DenseVector,
    mean: DenseVector,
    // P(+) scaled to 2^32; 2^32 itself means "always".
    thresholds: Vec<u64>,
}

impl ProductDistribution {
    pub fn new(bias: Vec<f64>) -> Result<Self> {
        if bias.is_empty() {
            return Err(Error::ZeroDimension);
        }
        for (index, &value) in bias.iter().enumerate() {
            if !(-1.0..=1.0).contains(&value) {
                return Err(Error::BiasOutOfRange { index, value, bound: 1.0 });
            }
        }
        let c = inv_sqrt(bias.len());
        let mean = DenseVector::from_vec_unchecked(bias.iter().map(|p| p * c).collect());
        let thresholds = bias
            .iter()
            .map(|p| (((1.0 + p) / 2.0) * 4_294_967_296.0).round() as u64)
            .collect();
        Ok(Self { bias: DenseVector::from_vec_unchecked(bias), mean, thresholds })
    }

    /// The uniform distribution, `p = 0`.
    pub fn uniform(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    pub fn bias(&self) -> &DenseVector {
        &self.bias
    }

    /// `μ_k = p_k/√d`.
    pub fn mean_vector(&self) -> &DenseVector {
        &self.mean
    }

    /// Probability that coordinate `k` is `+1/√d`.
    pub fn plus_probability(&self, k: usize) -> f64 {
        (1.0 + self.bias.as_slice()[k]) / 2.0
    }

    pub fn sample_point<R: RngCore + ?Sized>(&self, rng: &mut R) -> HypercubeVector {
        let dim = self.dim();
        let mut words = vec![0u64; words_for(dim)];
        let mut pending: Option<u32> = None;
        for (k, &t) in self.thresholds.iter().enumerate() {
            let r = match pending.take() {
                Some(r) => r,
                None => {
                    let x = rng.next_u64();
                    pending = Some((x >> 32) as u32);
                    x as u32
                }
            };
            words[k / WORD] |= (((r as u64) < t) as u64) << (k % WORD);
        }
        HypercubeVector { dim, words }
    }

    pub fn sample_points<R: RngCore + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<HypercubeVector> {
        (0..count).map(|_| self.sample_point(rng)).collect()
    }

    /// Sign sums of `count` i.i.d. points, drawn coordinate-wise from
    /// `Binomial(count, (1+p_k)/2)`. Same law as summing explicit samples.
    pub fn sample_sums<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> SignSums {
        let sums = (0..self.dim())
            .map(|k| {
                let q = self.plus_probability(k);
                let plus = if count == 0 {
                    0
                } else {
                    Binomial::new(count as u64, q).expect("q in [0,1]").sample(rng) as i64
                };
                2 * plus - count as i64
            })
            .collect();
        SignSums { dim: self.dim(), count, sums }
    }
}

/// Bias drawn from `Unif[−12ε, 12ε]^d`, the convex fingerprinting prior.
pub fn sample_prior_cvx<R: Rng + ?Sized>(eps: f64, dim: usize, rng: &mut R) -> Result<ProductDistribution> {
    if !(eps > 0.0 && eps <= 1.0 / 12.0) {
        return Err(Error::EpsilonOutOfRange(eps));
    }
    if dim == 0 {
        return Err(Error::ZeroDimension);
    }
    let half = (12.0 * eps).min(1.0);
    let bias = (0..dim).map(|_| rng.random_range(-half..=half)).collect();
    ProductDistribution::new(bias)
}

/// Bias drawn from `Unif[−1, 1]^d`, the strongly convex fingerprinting prior.
pub fn sample_prior_scvx<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<ProductDistribution> {
    if dim == 0 {
        return Err(Error::ZeroDimension);
    }
    let bias = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
    ProductDistribution::new(bias)
}

/// Per-coordinate sums of signs over a multiset of points.
///
/// Means of hypercube points are `sums/(count·√d)`; keeping the integer
/// sums gives exact equality for output grouping and lets large samples be
/// summarized without materializing every point.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SignSums {
    dim: usize,
    count: usize,
    sums: Vec<i64>,
}

impl SignSums {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, count: 0, sums: vec![0; dim] }
    }

    pub fn from_points(points: &[HypercubeVector]) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptySample)?;
        let mut acc = Self::zeros(first.dim());
        for z in points {
            acc.push(z)?;
        }
        Ok(acc)
    }

    pub fn from_parts(dim: usize, count: usize, sums: Vec<i64>) -> Result<Self> {
        check_dims(dim, sums.len())?;
        if sums.iter().any(|s| s.unsigned_abs() as usize > count || (s + count as i64) % 2 != 0) {
            return Err(Error::InvalidParameter("sign sums inconsistent with count".into()));
        }
        Ok(Self { dim, count, sums })
    }

    pub fn push(&mut self, z: &HypercubeVector) -> Result<()> {
        check_dims(self.dim, z.dim())?;
        for (k, s) in self.sums.iter_mut().enumerate() {
            *s += if z.sign(k) { 1 } else { -1 };
        }
        self.count += 1;
        Ok(())
    }

    pub fn merge(&self, other: &Self) -> Result<Self> {
        check_dims(self.dim, other.dim)?;
        Ok(Self {
            dim: self.dim,
            count: self.count + other.count,
            sums: self.sums.iter().zip(&other.sums).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn sums(&self) -> &[i64] {
        &self.sums
    }

    /// `Σ_i Z_i` as a dense vector.
    pub fn total(&self) -> DenseVector {
        let c = inv_sqrt(self.dim);
        DenseVector::from_vec_unchecked(self.sums.iter().map(|&s| s as f64 * c).collect())
    }

    pub fn mean(&self) -> Result<DenseVector> {
        if self.count == 0 {
            return Err(Error::EmptySample);
        }
        let c = inv_sqrt(self.dim);
        let n = self.count as f64;
        Ok(DenseVector::from_vec_unchecked(
            self.sums.iter().map(|&s| s as f64 / n * c).collect(),
        ))
    }
}

/// Coordinate-wise average of a nonempty sequence of points.
pub fn empirical_mean(points: &[HypercubeVector]) -> Result<DenseVector> {
    SignSums::from_points(points)?.mean()
}

/// `2×n` grid of i.i.d. points plus the selector mask `U`.
#[derive(Clone, Debug, PartialEq)]
pub struct Supersample {
    rows: [Vec<HypercubeVector>; 2],
    mask: Vec<bool>,
    dist: ProductDistribution,
}

impl Supersample {
    /// Assembles a supersample from explicit parts.
    pub fn from_parts(
        row0: Vec<HypercubeVector>,
        row1: Vec<HypercubeVector>,
        mask: Vec<bool>,
        dist: ProductDistribution,
    ) -> Result<Self> {
        let n = mask.len();
        if n == 0 {
            return Err(Error::EmptySample);
        }
        if row0.len() != n || row1.len() != n {
            return Err(Error::InvalidParameter("grid rows must have length n".into()));
        }
        for z in row0.iter().chain(&row1) {
            check_dims(dist.dim(), z.dim())?;
        }
        Ok(Self { rows: [row0, row1], mask, dist })
    }

    pub fn n(&self) -> usize {
        self.mask.len()
    }

    pub fn dim(&self) -> usize {
        self.dist.dim()
    }

    pub fn distribution(&self) -> &ProductDistribution {
        &self.dist
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// `Z_{j,i}`.
    pub fn point(&self, row: usize, i: usize) -> &HypercubeVector {
        &self.rows[row][i]
    }

    pub fn row(&self, row: usize) -> &[HypercubeVector] {
        &self.rows[row]
    }

    /// `Z_{U_i,i}`.
    pub fn training(&self, i: usize) -> &HypercubeVector {
        self.point(self.mask[i] as usize, i)
    }

    /// `Z_{1−U_i,i}`.
    pub fn ghost(&self, i: usize) -> &HypercubeVector {
        self.point(1 - self.mask[i] as usize, i)
    }

    pub fn training_set(&self) -> Vec<HypercubeVector> {
        (0..self.n()).map(|i| self.training(i).clone()).collect()
    }

    pub fn ghost_set(&self) -> Vec<HypercubeVector> {
        (0..self.n()).map(|i| self.ghost(i).clone()).collect()
    }

    /// Training set selected by an arbitrary mask, used for enumeration.
    pub fn select(&self, mask: &[bool]) -> Vec<HypercubeVector> {
        mask.iter()
            .enumerate()
            .map(|(i, &u)| self.rows[u as usize][i].clone())
            .collect()
    }

    pub fn with_mask(&self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.n() {
            return Err(Error::InvalidParameter("mask length must equal n".into()));
        }
        Ok(Self { rows: self.rows.clone(), mask, dist: self.dist.clone() })
    }
}

/// Draws `2n` i.i.d. grid points from `grid_rng` and `U ~ Ber(1/2)^n` from
/// the separate `mask_rng`.
pub fn build_supersample<R1, R2>(
    dist: &ProductDistribution,
    n: usize,
    grid_rng: &mut R1,
    mask_rng: &mut R2,
) -> Result<Supersample>
where
    R1: RngCore + ?Sized,
    R2: RngCore + ?Sized,
{
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let row0 = dist.sample_points(n, grid_rng);
    let row1 = dist.sample_points(n, grid_rng);
    let mask = (0..n).map(|_| mask_rng.next_u32() & 1 == 1).collect();
    Supersample::from_parts(row0, row1, mask, dist.clone())
}
