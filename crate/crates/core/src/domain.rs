//! Domain model: the box `K`, the ground metric, priors, the empirical
//! measure and the reusable Monte-Carlo batch.
//!
//! Every integral in the crate is an expectation under the prior `p`,
//! estimated by a sample average over one [`SampleBatch`]. Densities other
//! than `p` enter only through their ratio `q/p` (importance weights), so the
//! prior must provide both a pointwise evaluator and an exact sampler.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Axis-aligned box `[lo_1, hi_1] x ... x [lo_n, hi_n]` with `lo_j < hi_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() {
            return Err(Error::InvalidDomain { axis: 0 });
        }
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        for (axis, (l, h)) in lo.iter().zip(&hi).enumerate() {
            // `!(l < h)` also rejects NaN bounds.
            if !(l < h) || !l.is_finite() || !h.is_finite() {
                return Err(Error::InvalidDomain { axis });
            }
        }
        Ok(Self { lo, hi })
    }

    /// The unit cube `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        Self::new(alloc::vec![0.0; dim], alloc::vec![1.0; dim])
            .expect("unit cube needs dim >= 1")
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    /// Largest distance between two points of the box under `metric`
    /// (attained at opposite corners).
    pub fn diameter(&self, metric: Metric) -> f64 {
        metric.distance(&self.lo, &self.hi)
    }
}

/// Ground metric `d` used for transport costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Euclidean,
    /// L1 distance. Bisector sets of axis-aligned atom pairs can have positive
    /// measure under this metric; ties are then broken by lowest index and no
    /// attempt is made to detect the situation.
    Manhattan,
}

impl Metric {
    #[inline]
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Metric::Euclidean => {
                let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                libm::sqrt(s)
            }
            Metric::Manhattan => a.iter().zip(b).map(|(x, y)| libm::fabs(x - y)).sum(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Manhattan => "manhattan",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" | "l2" => Ok(Metric::Euclidean),
            "manhattan" | "l1" | "taxicab" => Ok(Metric::Manhattan),
            _ => Err(Error::InvalidParameter("unknown metric name")),
        }
    }
}

/// Uniform empirical measure `(1/N) sum_i delta(x_i)` on a box.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    domain: BoxDomain,
    points: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Validates that there is at least one atom, that every atom has the
    /// domain's dimension and that it lies in the box.
    pub fn new(domain: &BoxDomain, points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        let dim = domain.dim();
        let mut flat = Vec::with_capacity(points.len() * dim);
        for (index, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            if !domain.contains(p) {
                return Err(Error::PointOutsideDomain { index });
            }
            flat.extend_from_slice(p);
        }
        Ok(Self {
            domain: domain.clone(),
            points: flat,
        })
    }

    /// Number of atoms `N`.
    pub fn len(&self) -> usize {
        self.points.len() / self.domain.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.points[i * d..(i + 1) * d]
    }

    pub fn iter(&self) -> core::slice::ChunksExact<'_, f64> {
        self.points.chunks_exact(self.dim())
    }

    /// Mass carried by each atom, `1/N`.
    pub fn atom_mass(&self) -> f64 {
        1.0 / self.len() as f64
    }
}

/// A strictly positive probability density on a box, with an exact sampler.
pub trait Prior: Send + Sync {
    fn name(&self) -> &str;

    fn domain(&self) -> &BoxDomain;

    /// Value of the density at `x`; zero outside the box.
    fn density(&self, x: &[f64]) -> f64;

    /// Writes one draw into `out` (length = domain dimension).
    fn sample_into(&self, rng: &mut dyn RngCore, out: &mut [f64]);

    /// `count` i.i.d. draws from a generator seeded with `seed`.
    fn sample(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let dim = self.domain().dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let mut x = alloc::vec![0.0; dim];
                self.sample_into(&mut rng, &mut x);
                x
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformPrior {
    domain: BoxDomain,
    density: f64,
}

impl UniformPrior {
    pub fn new(domain: BoxDomain) -> Self {
        let density = 1.0 / domain.volume();
        Self { domain, density }
    }
}

pub fn make_uniform_prior(domain: &BoxDomain) -> UniformPrior {
    UniformPrior::new(domain.clone())
}

impl Prior for UniformPrior {
    fn name(&self) -> &str {
        "uniform"
    }

    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn density(&self, x: &[f64]) -> f64 {
        if self.domain.contains(x) {
            self.density
        } else {
            0.0
        }
    }

    fn sample_into(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        for ((o, l), h) in out.iter_mut().zip(&self.domain.lo).zip(&self.domain.hi) {
            let u: f64 = rng.random();
            *o = l + (h - l) * u;
        }
    }
}

/// Isotropic Gaussian restricted to the box and renormalized.
///
/// The box integral of an isotropic Gaussian factorizes over axes, so the
/// normalizing constant is computed in closed form from `erf`/`erfc`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedGaussianPrior {
    domain: BoxDomain,
    mean: Vec<f64>,
    sigma: f64,
    log_norm: f64,
    acceptance: f64,
    name: String,
}

/// Minimum fraction of Gaussian mass inside the box for rejection sampling.
const MIN_ACCEPTANCE: f64 = 1e-3;

/// `P(a <= Z <= b)` for a standard normal `Z`, accurate in both tails.
fn normal_interval_mass(a: f64, b: f64) -> f64 {
    let s = core::f64::consts::FRAC_1_SQRT_2;
    if a >= 0.0 {
        0.5 * (libm::erfc(a * s) - libm::erfc(b * s))
    } else if b <= 0.0 {
        0.5 * (libm::erfc(-b * s) - libm::erfc(-a * s))
    } else {
        0.5 * (libm::erf(b * s) - libm::erf(a * s))
    }
}

impl TruncatedGaussianPrior {
    pub fn new(domain: BoxDomain, mean: Vec<f64>, sigma: f64) -> Result<Self> {
        if mean.len() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                found: mean.len(),
            });
        }
        if !domain.contains(&mean) {
            return Err(Error::InvalidParameter("Gaussian mean must lie in the domain"));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter("sigma must be positive and finite"));
        }
        let mut acceptance = 1.0;
        let mut log_norm = 0.0;
        let root_two_pi = libm::sqrt(2.0 * core::f64::consts::PI);
        for j in 0..domain.dim() {
            let a = (domain.lo[j] - mean[j]) / sigma;
            let b = (domain.hi[j] - mean[j]) / sigma;
            let mass = normal_interval_mass(a, b);
            acceptance *= mass;
            log_norm += libm::log(sigma * root_two_pi * mass);
        }
        if !(acceptance >= MIN_ACCEPTANCE) {
            return Err(Error::DegenerateTruncation { acceptance });
        }
        Ok(Self {
            domain,
            mean,
            sigma,
            log_norm,
            acceptance,
            name: String::from("truncated_gaussian"),
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Probability that an untruncated draw lands in the box.
    pub fn acceptance(&self) -> f64 {
        self.acceptance
    }
}

pub fn make_truncated_gaussian_prior(
    domain: &BoxDomain,
    mean: Vec<f64>,
    sigma: f64,
) -> Result<TruncatedGaussianPrior> {
    TruncatedGaussianPrior::new(domain.clone(), mean, sigma)
}

impl Prior for TruncatedGaussianPrior {
    fn name(&self) -> &str {
        &self.name
    }

    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn density(&self, x: &[f64]) -> f64 {
        if !self.domain.contains(x) {
            return 0.0;
        }
        let sq: f64 = x
            .iter()
            .zip(&self.mean)
            .map(|(a, m)| (a - m) * (a - m))
            .sum();
        libm::exp(-sq / (2.0 * self.sigma * self.sigma) - self.log_norm)
    }

    fn sample_into(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        // The box is a product set and the Gaussian is isotropic, so rejecting
        // each coordinate independently is the same as rejecting whole vectors.
        for (j, o) in out.iter_mut().enumerate() {
            let (l, h) = (self.domain.lo[j], self.domain.hi[j]);
            loop {
                let z: f64 = StandardNormal.sample(rng);
                let v = self.mean[j] + self.sigma * z;
                if l <= v && v <= h {
                    *o = v;
                    break;
                }
            }
        }
    }
}

/// `M` i.i.d. draws from the prior, each with weight `1/M`.
///
/// The batch is the common-random-numbers carrier: a solver run evaluates
/// every integral on the same batch, which makes its objective deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    dim: usize,
    points: Vec<f64>,
    seed: u64,
}

impl SampleBatch {
    /// Wraps explicit points (e.g. a quadrature grid) as a uniformly weighted batch.
    pub fn from_points(dim: usize, points: Vec<f64>, seed: u64) -> Result<Self> {
        if dim == 0 || points.len() % dim != 0 {
            return Err(Error::InvalidParameter("point buffer is not a multiple of dim"));
        }
        if points.is_empty() {
            return Err(Error::EmptyBatch);
        }
        Ok(Self { dim, points, seed })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn point(&self, m: usize) -> &[f64] {
        &self.points[m * self.dim..(m + 1) * self.dim]
    }

    pub fn iter(&self) -> core::slice::ChunksExact<'_, f64> {
        self.points.chunks_exact(self.dim)
    }

    /// Weight of every sample, `1/M`.
    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        let w = self.weight();
        (0..self.len()).map(move |_| w)
    }

    /// Sample average `(1/M) sum_m f(x_m)`.
    pub fn mean_of<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        let s: f64 = self.iter().map(&mut f).sum();
        s / self.len() as f64
    }

    /// Standard Monte-Carlo noise scale `1/sqrt(M)`.
    pub fn noise_scale(&self) -> f64 {
        1.0 / libm::sqrt(self.len() as f64)
    }
}

/// Draws `m` points from `prior` with a ChaCha8 stream seeded by `seed`.
pub fn draw_batch<P: Prior + ?Sized>(prior: &P, m: usize, seed: u64) -> Result<SampleBatch> {
    if m == 0 {
        return Err(Error::EmptyBatch);
    }
    let dim = prior.domain().dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = alloc::vec![0.0; m * dim];
    for chunk in points.chunks_exact_mut(dim) {
        prior.sample_into(&mut rng, chunk);
    }
    Ok(SampleBatch { dim, points, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn unit_square() -> BoxDomain {
        BoxDomain::unit(2)
    }

    #[test]
    fn rejects_bad_boxes() {
        assert_eq!(
            BoxDomain::new(vec![0.0, 1.0], vec![1.0, 1.0]),
            Err(Error::InvalidDomain { axis: 1 })
        );
        assert!(BoxDomain::new(vec![0.0], vec![f64::NAN]).is_err());
        assert!(BoxDomain::new(vec![], vec![]).is_err());
        assert!(matches!(
            BoxDomain::new(vec![0.0], vec![1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn uniform_density_is_inverse_volume() {
        let p = make_uniform_prior(&unit_square());
        assert_eq!(p.density(&[0.3, 0.7]), 1.0);
        let big = BoxDomain::new(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap();
        let p = make_uniform_prior(&big);
        assert_eq!(p.density(&[1.3, 0.2]), 0.25);
        assert_eq!(p.density(&[2.5, 0.2]), 0.0);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let p = make_uniform_prior(&unit_square());
        assert_eq!(p.sample(1000, 7), p.sample(1000, 7));
        assert_ne!(p.sample(10, 7), p.sample(10, 8));
        let a = draw_batch(&p, 500, 3).unwrap();
        let b = draw_batch(&p, 500, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn small_batch_has_uniform_weights() {
        let p = make_uniform_prior(&unit_square());
        let batch = draw_batch(&p, 4, 1).unwrap();
        assert_eq!(batch.len(), 4);
        assert!(batch.iter().all(|x| unit_square().contains(x)));
        assert_eq!(batch.weights().collect::<Vec<_>>(), vec![0.25; 4]);
        assert_eq!(draw_batch(&p, 0, 1), Err(Error::EmptyBatch));
        assert_eq!(batch.mean_of(|_| 1.0), 1.0);
    }

    #[test]
    fn uniform_batch_mean_within_clt_bound() {
        let p = make_uniform_prior(&unit_square());
        let batch = draw_batch(&p, 100_000, 11).unwrap();
        for j in 0..2 {
            let m = batch.mean_of(|x| x[j]);
            assert!((m - 0.5).abs() < 0.01, "axis {j}: {m}");
        }
    }

    #[test]
    fn gaussian_density_ratio_matches_closed_form() {
        let p = make_truncated_gaussian_prior(&unit_square(), vec![0.5, 0.5], 0.2).unwrap();
        let ratio = p.density(&[0.5, 0.5]) / p.density(&[0.9, 0.9]);
        let expected = libm::exp((0.16 + 0.16) / (2.0 * 0.04));
        assert!((ratio - expected).abs() < 1e-9 * expected);
        assert!((ratio - 54.598).abs() < 1e-3);
    }

    #[test]
    fn wide_gaussian_tends_to_uniform() {
        let mut last = f64::INFINITY;
        for sigma in [0.5, 2.0, 10.0] {
            let p = make_truncated_gaussian_prior(&unit_square(), vec![0.5, 0.5], sigma).unwrap();
            let ratio = p.density(&[0.5, 0.5]) / p.density(&[0.0, 0.0]);
            assert!(ratio >= 1.0 && ratio < last);
            last = ratio;
        }
        // exp(0.5 / (2 * 10^2))
        assert!((last - libm::exp(0.0025)).abs() < 1e-12);
        // a very wide Gaussian rarely lands in the box
        assert!(make_truncated_gaussian_prior(&unit_square(), vec![0.5, 0.5], 100.0).is_err());
    }

    #[test]
    fn gaussian_sampler_mean_within_three_standard_errors() {
        let p = make_truncated_gaussian_prior(&unit_square(), vec![0.5, 0.5], 0.2).unwrap();
        let batch = draw_batch(&p, 100_000, 5).unwrap();
        for j in 0..2 {
            let m = batch.mean_of(|x| x[j]);
            let var = batch.mean_of(|x| (x[j] - m) * (x[j] - m));
            let se = libm::sqrt(var / batch.len() as f64);
            assert!((m - 0.5).abs() < 3.0 * se, "axis {j}: mean {m}, se {se}");
        }
    }

    #[test]
    fn degenerate_truncation_is_rejected() {
        // Mean at a corner of a 10-cube keeps 2^-10 < 1e-3 of the mass.
        let d = BoxDomain::unit(10);
        let err = make_truncated_gaussian_prior(&d, vec![0.0; 10], 1e-3).unwrap_err();
        assert!(matches!(err, Error::DegenerateTruncation { acceptance } if acceptance < 1e-3));
        assert!(make_truncated_gaussian_prior(&d, vec![0.0; 10], 0.0).is_err());
        assert!(make_truncated_gaussian_prior(&d, vec![2.0; 10], 1.0).is_err());
    }

    #[test]
    fn measure_validates_atoms() {
        let d = unit_square();
        assert_eq!(EmpiricalMeasure::new(&d, vec![]), Err(Error::EmptyMeasure));
        assert_eq!(
            EmpiricalMeasure::new(&d, vec![vec![0.5, 0.5], vec![1.5, 0.5]]),
            Err(Error::PointOutsideDomain { index: 1 })
        );
        let mu = EmpiricalMeasure::new(&d, vec![vec![0.1, 0.2], vec![0.3, 0.4]]).unwrap();
        assert_eq!(mu.len(), 2);
        assert_eq!(mu.point(1), &[0.3, 0.4]);
        assert_eq!(mu.atom_mass(), 0.5);
    }

    #[test]
    fn diameters() {
        let d = unit_square();
        assert!((d.diameter(Metric::Euclidean) - core::f64::consts::SQRT_2).abs() < 1e-15);
        assert_eq!(d.diameter(Metric::Manhattan), 2.0);
        assert_eq!("L1".parse::<Metric>(), Ok(Metric::Manhattan));
        assert!("cosine".parse::<Metric>().is_err());
    }
}
