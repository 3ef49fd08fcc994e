//! Additively weighted Voronoi regions.
//!
//! For weights `lambda` the region of atom `i` is
//! `R_i(lambda) = { x : d(x, x_i) - lambda_i <= d(x, x_j) - lambda_j for all j }`
//! and `phi_lambda(x)` is the minimum of `d(x, x_i) - lambda_i` over `i`.
//! Membership is a brute-force argmin over the atoms; ties go to the lowest
//! index. Atom indices are 0-based throughout the crate.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Index;

use crate::domain::{BoxDomain, EmpiricalMeasure, Metric, SampleBatch};
use crate::error::{Error, Result};

/// A point of `Lambda = { lambda in R^N : sum_i lambda_i = 0 }`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Projects `values` onto `Lambda` by subtracting their mean.
    pub fn new(mut values: Vec<f64>) -> Self {
        if !values.is_empty() {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            values.iter_mut().for_each(|v| *v -= mean);
        }
        Self(values)
    }

    /// Keeps `values` bit for bit. For weights read back from saved output,
    /// which already sum to zero up to rounding; re-projecting them would
    /// perturb the last bits.
    pub fn from_saved(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    /// Builds `lambda` from its first `N - 1` coordinates, with
    /// `lambda_N = -sum_{i<N} lambda_i`.
    pub fn from_reduced(reduced: &[f64]) -> Self {
        let mut v = Vec::with_capacity(reduced.len() + 1);
        v.extend_from_slice(reduced);
        v.push(-reduced.iter().sum::<f64>());
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `||self - other||_inf`.
    pub fn max_abs_diff(&self, other: &WeightVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| libm::fabs(a - b))
            .fold(0.0, f64::max)
    }

    /// `self + t * direction`, re-projected onto `Lambda`.
    pub fn step(&self, t: f64, direction: &[f64]) -> WeightVector {
        WeightVector::new(self.0.iter().zip(direction).map(|(l, g)| l + t * g).collect())
    }
}

impl Index<usize> for WeightVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn check_shapes(x: &[f64], lam: &WeightVector, mu: &EmpiricalMeasure) -> Result<()> {
    if lam.len() != mu.len() {
        return Err(Error::LengthMismatch {
            expected: mu.len(),
            found: lam.len(),
        });
    }
    if x.len() != mu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: x.len(),
        });
    }
    Ok(())
}

/// Index and value of `min_i { d(x, x_i) - lambda_i }`, lowest index on ties.
#[inline]
pub(crate) fn weighted_argmin(
    x: &[f64],
    lam: &[f64],
    mu: &EmpiricalMeasure,
    metric: Metric,
) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, site) in mu.iter().enumerate() {
        let v = metric.distance(x, site) - lam[i];
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

/// `phi_lambda(x) = min_i { d(x, x_i) - lambda_i }`.
pub fn phi_lambda(
    x: &[f64],
    lam: &WeightVector,
    mu: &EmpiricalMeasure,
    metric: Metric,
) -> Result<f64> {
    check_shapes(x, lam, mu)?;
    Ok(weighted_argmin(x, lam.as_slice(), mu, metric).1)
}

/// Region index of `x` (0-based); the lowest index wins exact ties.
pub fn assign_region(
    x: &[f64],
    lam: &WeightVector,
    mu: &EmpiricalMeasure,
    metric: Metric,
) -> Result<usize> {
    check_shapes(x, lam, mu)?;
    Ok(weighted_argmin(x, lam.as_slice(), mu, metric).0)
}

/// Importance-sampling estimates of `integral over R_i(lambda) of q`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMassReport {
    pub masses: Vec<f64>,
    pub total: f64,
    pub batch_size: usize,
}

impl RegionMassReport {
    fn from_masses(masses: Vec<f64>, batch_size: usize) -> Self {
        let total = masses.iter().sum();
        Self {
            masses,
            total,
            batch_size,
        }
    }

    /// `max_i |mass_i - target|`.
    pub fn max_deviation(&self, target: f64) -> f64 {
        self.masses
            .iter()
            .map(|m| libm::fabs(m - target))
            .fold(0.0, f64::max)
    }
}

/// `masses[i] = (1/M) sum over batch points assigned to i of ratio(x)`, where
/// `ratio = q/p` and the batch was drawn from `p`.
pub fn region_masses(
    batch: &SampleBatch,
    ratio: &dyn Fn(&[f64]) -> f64,
    lam: &WeightVector,
    mu: &EmpiricalMeasure,
    metric: Metric,
) -> Result<RegionMassReport> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    check_shapes(batch.point(0), lam, mu)?;
    let mut sums = vec![0.0; mu.len()];
    for x in batch.iter() {
        let (i, _) = weighted_argmin(x, lam.as_slice(), mu, metric);
        sums[i] += ratio(x);
    }
    let m = batch.len() as f64;
    sums.iter_mut().for_each(|s| *s /= m);
    Ok(RegionMassReport::from_masses(sums, batch.len()))
}

/// Distances from every batch point to every atom, computed once per batch.
///
/// `d(x_m, x_i)` does not depend on `lambda`, so solvers that revisit the same
/// batch many times (ascent, cutting planes) only pay `O(M N)` additions per
/// weight vector afterwards.
#[derive(Debug, Clone)]
pub struct SiteDistances {
    n_atoms: usize,
    n_samples: usize,
    dist: Vec<f64>,
}

/// `phi_lambda` and region index for every point of a batch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    pub phi: Vec<f64>,
    pub region: Vec<u32>,
}

impl SiteDistances {
    pub fn new(batch: &SampleBatch, mu: &EmpiricalMeasure, metric: Metric) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if batch.dim() != mu.dim() {
            return Err(Error::DimensionMismatch {
                expected: mu.dim(),
                found: batch.dim(),
            });
        }
        let n_atoms = mu.len();
        let mut dist = Vec::with_capacity(batch.len() * n_atoms);
        for x in batch.iter() {
            dist.extend(mu.iter().map(|site| metric.distance(x, site)));
        }
        Ok(Self {
            n_atoms,
            n_samples: batch.len(),
            dist,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Distances from sample `m` to all atoms.
    pub fn row(&self, m: usize) -> &[f64] {
        &self.dist[m * self.n_atoms..(m + 1) * self.n_atoms]
    }

    pub fn assign(&self, lam: &WeightVector) -> Assignment {
        let mut out = Assignment::default();
        self.assign_into(lam, &mut out);
        out
    }

    pub fn assign_into(&self, lam: &WeightVector, out: &mut Assignment) {
        assert_eq!(lam.len(), self.n_atoms, "weight vector length");
        let lam = lam.as_slice();
        out.phi.clear();
        out.region.clear();
        for row in self.dist.chunks_exact(self.n_atoms) {
            let mut best = (0u32, f64::INFINITY);
            for (i, (d, l)) in row.iter().zip(lam).enumerate() {
                let v = d - l;
                if v < best.1 {
                    best = (i as u32, v);
                }
            }
            out.region.push(best.0);
            out.phi.push(best.1);
        }
    }
}

impl Assignment {
    /// Region masses `(1/M) sum_{m in R_i} ratios[m]`; unit ratios when `None`.
    pub fn masses(&self, n_atoms: usize, ratios: Option<&[f64]>) -> RegionMassReport {
        let mut sums = vec![0.0; n_atoms];
        match ratios {
            Some(r) => {
                for (&i, w) in self.region.iter().zip(r) {
                    sums[i as usize] += w;
                }
            }
            None => {
                for &i in &self.region {
                    sums[i as usize] += 1.0;
                }
            }
        }
        let m = self.region.len() as f64;
        sums.iter_mut().for_each(|s| *s /= m);
        RegionMassReport::from_masses(sums, self.region.len())
    }

    /// `(1/M) sum_m phi[m] * ratios[m]`; unit ratios when `None`.
    pub fn mean_phi(&self, ratios: Option<&[f64]>) -> f64 {
        let s: f64 = match ratios {
            Some(r) => self.phi.iter().zip(r).map(|(p, w)| p * w).sum(),
            None => self.phi.iter().sum(),
        };
        s / self.phi.len() as f64
    }
}

/// Row-major raster over a 2-D box. Row 0 is the top edge (largest second
/// coordinate), column 0 the left edge, so the layout matches image files.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<T>,
}

impl<T> Grid<T> {
    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.cells[row * self.width + col]
    }

    pub fn map<U, F: FnMut(&T) -> U>(&self, f: F) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            cells: self.cells.iter().map(f).collect(),
        }
    }

    /// Evaluates `f` at the cell centers of a `resolution x resolution` raster of `domain`.
    pub fn sample<F: FnMut(&[f64]) -> T>(
        domain: &BoxDomain,
        resolution: usize,
        mut f: F,
    ) -> Result<Self> {
        if domain.dim() != 2 {
            return Err(Error::NotTwoDimensional { dim: domain.dim() });
        }
        if resolution < 2 {
            return Err(Error::InvalidParameter("raster resolution must be at least 2"));
        }
        let mut cells = Vec::with_capacity(resolution * resolution);
        for row in 0..resolution {
            for col in 0..resolution {
                cells.push(f(&cell_center(domain, resolution, row, col)));
            }
        }
        Ok(Grid {
            width: resolution,
            height: resolution,
            cells,
        })
    }
}

/// Center of raster cell `(row, col)`; see [`Grid`] for the orientation.
pub fn cell_center(domain: &BoxDomain, resolution: usize, row: usize, col: usize) -> [f64; 2] {
    let (lo, hi) = (domain.lo(), domain.hi());
    let r = resolution as f64;
    let x = lo[0] + (hi[0] - lo[0]) * (col as f64 + 0.5) / r;
    let y = hi[1] - (hi[1] - lo[1]) * (row as f64 + 0.5) / r;
    [x, y]
}

/// Region index at every cell center of a `resolution x resolution` raster.
pub fn rasterize_regions(
    lam: &WeightVector,
    mu: &EmpiricalMeasure,
    metric: Metric,
    resolution: usize,
) -> Result<Grid<usize>> {
    if lam.len() != mu.len() {
        return Err(Error::LengthMismatch {
            expected: mu.len(),
            found: lam.len(),
        });
    }
    Grid::sample(mu.domain(), resolution, |x| {
        weighted_argmin(x, lam.as_slice(), mu, metric).0
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{draw_batch, make_uniform_prior, BoxDomain};

    fn line(points: &[f64]) -> EmpiricalMeasure {
        let d = BoxDomain::unit(1);
        EmpiricalMeasure::new(&d, points.iter().map(|&p| vec![p]).collect()).unwrap()
    }

    #[test]
    fn phi_examples() {
        let mu = line(&[0.0, 1.0]);
        let e = Metric::Euclidean;
        let phi = |lam: Vec<f64>, x: f64| phi_lambda(&[x], &WeightVector::new(lam), &mu, e).unwrap();
        assert!((phi(vec![0.0, 0.0], 0.5) - 0.5).abs() < 1e-15);
        assert!((phi(vec![0.2, -0.2], 0.5) - 0.3).abs() < 1e-15);
        let single = line(&[0.4]);
        let v = phi_lambda(&[0.9], &WeightVector::zeros(1), &single, e).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn assignment_examples() {
        let mu = line(&[0.0, 1.0]);
        let e = Metric::Euclidean;
        let zero = WeightVector::zeros(2);
        assert_eq!(assign_region(&[0.25], &zero, &mu, e).unwrap(), 0);
        let shifted = WeightVector::new(vec![0.5, -0.5]);
        assert_eq!(assign_region(&[0.6], &shifted, &mu, e).unwrap(), 0);
        // exact tie
        assert_eq!(assign_region(&[0.5], &zero, &mu, e).unwrap(), 0);
    }

    #[test]
    fn shape_errors() {
        let mu = line(&[0.0, 1.0]);
        let e = Metric::Euclidean;
        assert_eq!(
            phi_lambda(&[0.5], &WeightVector::zeros(3), &mu, e),
            Err(Error::LengthMismatch {
                expected: 2,
                found: 3
            })
        );
        assert!(matches!(
            assign_region(&[0.5, 0.5], &WeightVector::zeros(2), &mu, e),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn weight_vector_projects_onto_lambda() {
        let w = WeightVector::new(vec![1.0, 2.0, 6.0]);
        assert!(w.sum().abs() < 1e-12);
        assert_eq!(w.as_slice(), &[-2.0, -1.0, 3.0]);
        let r = WeightVector::from_reduced(&[0.25]);
        assert_eq!(r.as_slice(), &[0.25, -0.25]);
    }

    #[test]
    fn single_atom_owns_everything() {
        let d = BoxDomain::unit(2);
        let mu = EmpiricalMeasure::new(&d, vec![vec![0.3, 0.3]]).unwrap();
        let batch = draw_batch(&make_uniform_prior(&d), 1000, 1).unwrap();
        let rep =
            region_masses(&batch, &|_| 1.0, &WeightVector::zeros(1), &mu, Metric::Euclidean)
                .unwrap();
        assert_eq!(rep.masses, vec![1.0]);
        let grid = rasterize_regions(&WeightVector::zeros(1), &mu, Metric::Manhattan, 8).unwrap();
        assert!(grid.cells.iter().all(|&i| i == 0));
    }

    #[test]
    fn shifted_bisector_in_one_dimension() {
        // x - 0.25 - 0.1 = 0.75 - x + 0.1  =>  boundary at 0.6
        let mu = line(&[0.25, 0.75]);
        let d = BoxDomain::unit(1);
        let batch = draw_batch(&make_uniform_prior(&d), 50_000, 2).unwrap();
        let lam = WeightVector::new(vec![0.1, -0.1]);
        let rep = region_masses(&batch, &|_| 1.0, &lam, &mu, Metric::Euclidean).unwrap();
        let tol = 3.0 * batch.noise_scale();
        assert!((rep.masses[0] - 0.6).abs() < tol, "{:?}", rep.masses);
        assert!((rep.masses[1] - 0.4).abs() < tol);
        assert_eq!(rep.total, 1.0);
    }

    #[test]
    fn table_agrees_with_direct_assignment() {
        let d = BoxDomain::unit(2);
        let mu = EmpiricalMeasure::new(
            &d,
            vec![vec![0.1, 0.9], vec![0.5, 0.5], vec![0.8, 0.2], vec![0.2, 0.2]],
        )
        .unwrap();
        let batch = draw_batch(&make_uniform_prior(&d), 2000, 9).unwrap();
        let lam = WeightVector::new(vec![0.05, -0.1, 0.02, 0.03]);
        for metric in [Metric::Euclidean, Metric::Manhattan] {
            let table = SiteDistances::new(&batch, &mu, metric).unwrap();
            let a = table.assign(&lam);
            for (m, x) in batch.iter().enumerate() {
                let (i, v) = weighted_argmin(x, lam.as_slice(), &mu, metric);
                assert_eq!(a.region[m] as usize, i);
                assert_eq!(a.phi[m], v);
            }
            let direct = region_masses(&batch, &|_| 1.0, &lam, &mu, metric).unwrap();
            assert_eq!(a.masses(4, None), direct);
        }
    }

    #[test]
    fn raster_requires_two_dimensions() {
        let mu = line(&[0.5]);
        assert_eq!(
            rasterize_regions(&WeightVector::zeros(1), &mu, Metric::Euclidean, 4),
            Err(Error::NotTwoDimensional { dim: 1 })
        );
        let d = BoxDomain::unit(2);
        let mu = EmpiricalMeasure::new(&d, vec![vec![0.5, 0.5]]).unwrap();
        assert!(rasterize_regions(&WeightVector::zeros(1), &mu, Metric::Euclidean, 1).is_err());
    }

    #[test]
    fn cell_centers_orientation() {
        let d = BoxDomain::unit(2);
        assert_eq!(cell_center(&d, 2, 0, 0), [0.25, 0.75]);
        assert_eq!(cell_center(&d, 2, 1, 1), [0.75, 0.25]);
    }
}
