//! Chebyshev-center cutting planes for `lambda* = argmax Gamma(lambda)`.
//!
//! The search starts from the box `|lambda_i| <= diam(K)` intersected with
//! `Lambda`. Each iteration queries the center of the largest inscribed ball
//! of the current polytope, solves the entropy dual there, and keeps only the
//! half-space `{ lambda : <g, lambda - center> >= 0 }` where `g` is the
//! transport supergradient of the tilted density at the center. Since
//! `lambda*` is the weight vector for which `q*` is transport-balanced, the
//! cut never removes it.
//!
//! By default each cut is pushed deeper, past every weight vector that
//! provably cannot beat the best `Gamma` seen so far (see [`CutRecord`] and
//! [`CuttingPlaneOptions::deep_cuts`]). Query points then stop wandering
//! through regions where the transport constraint is slack and the radius
//! shrinks several times faster.
//!
//! Geometry is done in the reduced coordinates `y = (lambda_1, ..,
//! lambda_{N-1})` with `lambda_N = -sum y`, so the polytope is full
//! dimensional and inscribed balls are Euclidean balls in `R^{N-1}`.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::domain::{EmpiricalMeasure, Metric, Prior, SampleBatch};
use crate::dual::{
    gamma_value_with, tilt_ratios, tilt_to_entropy, Diagnostics, DualOptions, DualPair, EntropySolution,
    GammaValue,
};
use crate::error::{Error, Result};
use crate::lp::{lp_solve, LpError};
use crate::transport::{maximize_psi_on, projected_gradient, AscentOptions};
use crate::voronoi::{Assignment, SiteDistances, WeightVector};

/// Intersection of the starting box with the cuts so far, stored as
/// unit-normal rows `a.y <= b` in reduced coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CutPolytope {
    n_atoms: usize,
    half_width: f64,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    n_box_rows: usize,
}

impl CutPolytope {
    /// `{ lambda in Lambda : |lambda_i| <= half_width for all i }`.
    pub fn new(n_atoms: usize, half_width: f64) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::EmptyMeasure);
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidParameter("box half-width must be positive"));
        }
        let mut p = Self {
            n_atoms,
            half_width,
            rows: Vec::new(),
            rhs: Vec::new(),
            n_box_rows: 0,
        };
        if n_atoms > 1 {
            for i in 0..n_atoms {
                for sign in [1.0, -1.0] {
                    let mut a = vec![0.0; n_atoms];
                    a[i] = sign;
                    p.push(&a, half_width);
                }
            }
        }
        p.n_box_rows = p.rows.len();
        Ok(p)
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Number of cuts added after the box.
    pub fn n_cuts(&self) -> usize {
        self.rows.len() - self.n_box_rows
    }

    /// Reduced-coordinate rows `(a, b)` with `|a| = 1`.
    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.rows.iter().map(|r| r.as_slice()).zip(self.rhs.iter().copied())
    }

    /// Adds `normal . lambda <= offset` given in full coordinates. Rows that
    /// are constant on `Lambda` are ignored.
    fn push(&mut self, normal: &[f64], offset: f64) -> bool {
        let n = self.n_atoms;
        let last = normal[n - 1];
        let mut a: Vec<f64> = normal[..n - 1].iter().map(|v| v - last).collect();
        let norm = libm::sqrt(a.iter().map(|v| v * v).sum::<f64>());
        if !(norm > 1e-14) {
            return false;
        }
        a.iter_mut().for_each(|v| *v /= norm);
        // on Lambda, normal . lambda = sum_{j<N} (normal_j - normal_N) y_j
        self.rows.push(a);
        self.rhs.push(offset / norm);
        true
    }

    /// Keeps `{ lambda : <g, lambda - center> >= depth }`.
    pub fn add_cut(&mut self, gradient: &[f64], center: &WeightVector, depth: f64) -> bool {
        assert_eq!(gradient.len(), self.n_atoms, "gradient length");
        let neg: Vec<f64> = gradient.iter().map(|g| -g).collect();
        let offset: f64 = neg.iter().zip(center.as_slice()).map(|(a, l)| a * l).sum();
        self.push(&neg, offset - depth)
    }

    /// Moves every cut outward by `amount` (in reduced-coordinate distance).
    pub fn relax_cuts(&mut self, amount: f64) {
        self.rhs[self.n_box_rows..].iter_mut().for_each(|b| *b += amount);
    }

    /// Whether `lambda` satisfies every row up to `tol`.
    pub fn contains(&self, lam: &WeightVector, tol: f64) -> bool {
        let y = &lam.as_slice()[..self.n_atoms - 1];
        self.rows().all(|(a, b)| {
            a.iter().zip(y).map(|(ai, yi)| ai * yi).sum::<f64>() <= b + tol
        })
    }
}

/// Center and radius of the largest Euclidean ball (in reduced coordinates)
/// inside the polytope.
pub fn chebyshev_center(poly: &CutPolytope) -> Result<(WeightVector, f64)> {
    let n = poly.n_atoms;
    if n == 1 {
        return Ok((WeightVector::zeros(1), 0.0));
    }
    let dim = n - 1;
    let mut c = vec![0.0; n];
    c[dim] = 1.0;
    let a: Vec<Vec<f64>> = poly
        .rows
        .iter()
        .map(|row| {
            let mut r = row.clone();
            r.push(1.0);
            r
        })
        .collect();
    let infeasible = Error::InfeasiblePolytope { cuts: poly.n_cuts() };
    let sol = match lp_solve(&c, &a, &poly.rhs) {
        Ok(s) => s,
        Err(LpError::Infeasible) => return Err(infeasible),
        Err(e) => return Err(e.into()),
    };
    // the LP is always feasible with a negative radius when the rows conflict
    let radius = sol.x[dim];
    if radius < 0.0 {
        return Err(infeasible);
    }
    let y = central_center(poly, radius).unwrap_or_else(|| sol.x[..dim].to_vec());
    Ok((WeightVector::from_reduced(&y), radius))
}

/// The set of Chebyshev centers is `{ y : a.y <= b - radius }`, which is often
/// a segment or a face rather than a point. A simplex vertex sits at one end
/// of it; the average of its extreme points along every coordinate is still a
/// center but lies in the middle, away from the boundary that later cuts will
/// have to remove.
fn central_center(poly: &CutPolytope, radius: f64) -> Option<Vec<f64>> {
    let dim = poly.n_atoms - 1;
    let slack = 1e-12 * (1.0 + poly.half_width);
    let rhs: Vec<f64> = poly.rhs.iter().map(|b| b - radius + slack).collect();
    let mut sum = vec![0.0; dim];
    for j in 0..dim {
        for sign in [1.0, -1.0] {
            let mut c = vec![0.0; dim];
            c[j] = sign;
            let sol = lp_solve(&c, &poly.rows, &rhs).ok()?;
            sum.iter_mut().zip(&sol.x).for_each(|(s, x)| *s += x);
        }
    }
    sum.iter_mut().for_each(|s| *s /= (2 * dim) as f64);
    Some(sum)
}

/// One evaluated query point and the cut it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct CutRecord {
    pub iteration: usize,
    pub center: WeightVector,
    pub radius: f64,
    /// `Gamma(center)`.
    pub gamma: f64,
    pub dual: DualPair,
    /// `g_i = 1/N - q(R_i(center))` for the optimal tilted density `q` at
    /// the center.
    pub gradient: Vec<f64>,
    pub grad_norm: f64,
    /// The cut keeps `<normal, lambda - center> >= depth`. For a central cut
    /// `normal` is `gradient` and `depth` is 0.
    pub normal: Vec<f64>,
    pub depth: f64,
}

impl CutRecord {
    /// Whether `lam` lies in the kept half-space.
    pub fn keeps(&self, lam: &WeightVector) -> bool {
        let s: f64 = self
            .normal
            .iter()
            .zip(lam.as_slice().iter().zip(self.center.as_slice()))
            .map(|(g, (l, c))| g * (l - c))
            .sum();
        s >= self.depth
    }
}

fn central_record(iteration: usize, center: WeightVector, radius: f64, gv: &GammaValue) -> CutRecord {
    let gradient = projected_gradient(&gv.masses.masses);
    let grad_norm = gradient.iter().map(|g| libm::fabs(*g)).fold(0.0, f64::max);
    CutRecord {
        iteration,
        center,
        radius,
        gamma: gv.gamma,
        dual: gv.dual.pair,
        normal: gradient.clone(),
        gradient,
        grad_norm,
        depth: 0.0,
    }
}

/// Replaces the central cut of `rec` by a deeper one.
///
/// Any density `q` with `H(q, p) <= level` gives a valid cut: every
/// `lambda'` with `E_q[phi_lambda'] <= delta` admits `q`, so
/// `Gamma(lambda') <= level`, and by concavity of `lambda -> E_q[phi_lambda]`
/// that covers `{ <g_q, lambda' - center> < delta - E_q[phi_center] }`. With
/// `level` the best `Gamma` seen so far, the removed points cannot beat the
/// best iterate. `q` is taken from the center's own tilt, pushed further
/// until its entropy reaches `level`; at a center with a slack constraint
/// and `level = 0` this is `q = p`.
fn deepen(rec: &mut CutRecord, phi: &[f64], region: &Assignment, level: f64, delta: f64, n: usize) {
    let pair = if level > rec.gamma {
        match tilt_to_entropy(phi, rec.dual.v, level) {
            Some(pair) => pair,
            None => return,
        }
    } else {
        rec.dual
    };
    let mut ratios = Vec::new();
    tilt_ratios(pair, phi, &mut ratios);
    let cost = phi.iter().zip(&ratios).map(|(p, r)| p * r).sum::<f64>() / phi.len() as f64;
    let depth = delta - cost;
    if depth > 0.0 {
        rec.normal = projected_gradient(&region.masses(n, Some(&ratios)).masses);
        rec.depth = depth;
    }
}

/// Evaluates `Gamma` at `center` and returns the cut through it.
pub fn generate_cut(
    center: &WeightVector,
    batch: &SampleBatch,
    mu: &EmpiricalMeasure,
    metric: Metric,
    delta: f64,
    opts: &DualOptions,
) -> Result<CutRecord> {
    let table = SiteDistances::new(batch, mu, metric)?;
    let mut a = Assignment::default();
    let mut r = Vec::new();
    let gv = gamma_value_with(&table, center, delta, opts, &mut a, &mut r)?;
    Ok(central_record(0, center.clone(), f64::NAN, &gv))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CuttingPlaneOptions {
    /// Stop when the inscribed radius falls below this. `None` means
    /// `1e-5 * diam(K)`: with a large transport multiplier `v` the density
    /// `q*` moves by a factor `exp(v * dlambda)`, so weights must be pinned
    /// well below `1e-3` for `W(q*, mu) = delta` to hold at small `delta`.
    pub radius_tol: Option<f64>,
    /// Stop when the cut gradient's sup norm falls below this.
    pub cut_tol: f64,
    pub max_iter: usize,
    /// Inner dual solves.
    pub dual: DualOptions,
    /// Transport solves (the `W(p, mu)` precheck and diagnostics).
    pub ascent: AscentOptions,
    /// Deepen each cut to the level of the best `Gamma` found so far (see
    /// [`CutRecord`]); plain central cuts when false.
    pub deep_cuts: bool,
}

impl Default for CuttingPlaneOptions {
    fn default() -> Self {
        Self {
            radius_tol: None,
            cut_tol: 1e-6,
            max_iter: 200,
            dual: DualOptions::with_tol(1e-9),
            ascent: AscentOptions::default(),
            deep_cuts: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// `delta >= W(p, mu)`: the prior is already in the ball.
    PriorInsideBall,
    /// A single atom leaves no freedom in `lambda`.
    SingleAtom,
    RadiusTolerance,
    GradientTolerance,
    /// Deep cuts left no point that could beat the best iterate.
    Localized,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossEntropyRun {
    pub solution: EntropySolution,
    pub cuts: Vec<CutRecord>,
    pub stop_reason: StopReason,
    pub converged: bool,
    /// `W(p, mu)` estimated on the same batch.
    pub prior_wasserstein: f64,
}

/// Computes the minimum cross-entropy density in the ball `W(q, mu) <= delta`.
///
/// Every integral uses `batch`, which must be drawn from `prior`.
pub fn solve_min_cross_entropy<P: Prior + ?Sized>(
    prior: &P,
    mu: &EmpiricalMeasure,
    delta: f64,
    batch: &SampleBatch,
    metric: Metric,
    opts: &CuttingPlaneOptions,
) -> Result<CrossEntropyRun> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter("delta must be positive and finite"));
    }
    if prior.domain() != mu.domain() {
        return Err(Error::InvalidParameter("prior and measure live on different boxes"));
    }
    let table = SiteDistances::new(batch, mu, metric)?;
    let n = mu.len();
    let diameter = mu.domain().diameter(metric);
    let prior_transport = maximize_psi_on(&table, None, diameter, &opts.ascent);
    let prior_wasserstein = prior_transport.wasserstein;

    let mut assignment = Assignment::default();
    let mut ratios = Vec::new();
    let mut cuts = Vec::new();

    let (lam, stop_reason, mut converged) = if delta >= prior_wasserstein {
        (prior_transport.lambda_star, StopReason::PriorInsideBall, true)
    } else if n == 1 {
        (WeightVector::zeros(1), StopReason::SingleAtom, true)
    } else {
        let radius_tol = opts.radius_tol.unwrap_or(1e-5 * diameter);
        let mut poly = CutPolytope::new(n, diameter)?;
        let mut relaxed = false;
        let mut deepened = false;
        let mut best: Option<(f64, WeightVector)> = None;
        let mut stop = StopReason::IterationLimit;
        let mut k = 0;
        while k < opts.max_iter {
            let (center, radius) = match chebyshev_center(&poly) {
                Ok(c) => c,
                Err(Error::InfeasiblePolytope { .. }) if deepened => {
                    stop = StopReason::Localized;
                    break;
                }
                Err(Error::InfeasiblePolytope { .. }) if !relaxed => {
                    relaxed = true;
                    poly.relax_cuts(2.0 * batch.noise_scale() * diameter);
                    continue;
                }
                Err(e) => return Err(e),
            };
            k += 1;
            let gv = gamma_value_with(
                &table,
                &center,
                delta,
                &opts.dual,
                &mut assignment,
                &mut ratios,
            )?;
            let mut rec = central_record(k, center, radius, &gv);
            if best.as_ref().is_none_or(|(g, _)| rec.gamma > *g) {
                best = Some((rec.gamma, rec.center.clone()));
            }
            let gradient_done = rec.grad_norm <= opts.cut_tol;
            if !gradient_done && radius > radius_tol {
                if opts.deep_cuts {
                    let level = best.as_ref().map_or(rec.gamma, |(g, _)| *g);
                    deepen(&mut rec, &assignment.phi, &assignment, level, delta, n);
                    deepened |= rec.depth > 0.0;
                }
                poly.add_cut(&rec.normal, &rec.center, rec.depth);
            }
            cuts.push(rec);
            if gradient_done {
                stop = StopReason::GradientTolerance;
                break;
            }
            if radius <= radius_tol {
                stop = StopReason::RadiusTolerance;
                break;
            }
        }
        let lam = match stop {
            // the center that met the gradient test is the answer itself
            StopReason::GradientTolerance => cuts.last().map(|c| c.center.clone()),
            _ => best.map(|(_, l)| l),
        }
        .unwrap_or_else(|| WeightVector::zeros(n));
        (lam, stop, stop != StopReason::IterationLimit)
    };

    let gv = gamma_value_with(&table, &lam, delta, &opts.dual, &mut assignment, &mut ratios)?;
    let pair = if stop_reason == StopReason::PriorInsideBall {
        DualPair::INACTIVE
    } else {
        gv.dual.pair
    };
    converged &= stop_reason == StopReason::PriorInsideBall || gv.dual.converged;
    tilt_ratios(pair, &assignment.phi, &mut ratios);
    let mass = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let cross_entropy = ratios
        .iter()
        .map(|&r| if r > 0.0 { r * libm::log(r) } else { 0.0 })
        .sum::<f64>()
        / ratios.len() as f64;
    let transport = maximize_psi_on(&table, Some(&ratios), diameter, &opts.ascent);

    Ok(CrossEntropyRun {
        solution: EntropySolution {
            lambda_star: lam,
            dual: pair,
            delta,
            prior_name: prior.name().to_string(),
            diagnostics: Diagnostics {
                mass,
                transport_cost: transport.wasserstein,
                cross_entropy,
            },
            converged,
        },
        cuts,
        stop_reason,
        converged,
        prior_wasserstein,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_atom_box_center_and_cut() {
        let mut poly = CutPolytope::new(2, 1.0).unwrap();
        let (c, r) = chebyshev_center(&poly).unwrap();
        assert!(c.max_abs_diff(&WeightVector::zeros(2)) < 1e-12);
        assert!((r - 1.0).abs() < 1e-12);
        // keep lambda_1 >= 0
        poly.add_cut(&[1.0, -1.0], &WeightVector::zeros(2), 0.0);
        let (c, r) = chebyshev_center(&poly).unwrap();
        assert!((c[0] - 0.5).abs() < 1e-12 && (c[1] + 0.5).abs() < 1e-12);
        assert!((r - 0.5).abs() < 1e-12);
        assert_eq!(poly.n_cuts(), 1);
    }

    #[test]
    fn three_atom_box_is_hexagon() {
        let poly = CutPolytope::new(3, 1.0).unwrap();
        let (c, r) = chebyshev_center(&poly).unwrap();
        assert!(c.max_abs_diff(&WeightVector::zeros(3)) < 1e-12);
        // nearest face lambda_3 = -(y1 + y2) = 1 sits at distance 1/sqrt(2)
        assert!((r - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(poly.contains(&c, 0.0));
    }

    #[test]
    fn contradictory_cuts_are_infeasible_until_relaxed() {
        let mut poly = CutPolytope::new(2, 1.0).unwrap();
        poly.add_cut(&[1.0, -1.0], &WeightVector::new(vec![0.1, -0.1]), 0.0);
        poly.add_cut(&[-1.0, 1.0], &WeightVector::new(vec![-0.1, 0.1]), 0.0);
        assert_eq!(chebyshev_center(&poly), Err(Error::InfeasiblePolytope { cuts: 2 }));
        poly.relax_cuts(0.5);
        assert!(chebyshev_center(&poly).is_ok());
    }

    #[test]
    fn single_atom() {
        let poly = CutPolytope::new(1, 1.0).unwrap();
        assert_eq!(chebyshev_center(&poly).unwrap(), (WeightVector::zeros(1), 0.0));
        assert!(CutPolytope::new(0, 1.0).is_err());
    }
}
