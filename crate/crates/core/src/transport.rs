//! Semi-discrete optimal transport from a density `q` to the empirical measure.
//!
//! `W(q, mu) = max over lambda in Lambda of Psi(lambda)` with
//! `Psi(lambda) = E_q[phi_lambda]`. `Psi` is concave, its (projected)
//! gradient is `g_i = 1/N - q(R_i(lambda))`, and at the maximizer every
//! weighted region carries mass exactly `1/N`; sending `R_i(lambda*)` to
//! `x_i` is then an optimal transport map.
//!
//! `q` is always supplied as the ratio `q/p` evaluated on a batch drawn from
//! `p`, so `Psi` is the sample average `(1/M) sum_m phi_lambda(x_m) r(x_m)`.

use alloc::vec;
use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{draw_batch, EmpiricalMeasure, Metric, Prior, SampleBatch};
use crate::error::{Error, Result};
use crate::voronoi::{
    weighted_argmin, Assignment, RegionMassReport, SiteDistances, WeightVector,
};

/// Step sizes for supergradient ascent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    /// `t_k = scale / k` (square summable, not summable). `None` means
    /// `N * diam(K)`.
    Harmonic { scale: Option<f64> },
    /// Armijo backtracking on the fixed-batch objective: halve until the step
    /// gives sufficient increase, double after each accepted step. `None`
    /// starts from `diam(K)`.
    Adaptive { initial: Option<f64> },
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Harmonic { scale: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AscentOptions {
    pub schedule: StepSchedule,
    /// Stop once `||g||_inf` falls to this value. `None` means `2/sqrt(M)`.
    pub grad_tol: Option<f64>,
    pub max_iter: usize,
    /// Starting weights; zero (the unweighted Voronoi diagram) when `None`.
    pub init: Option<WeightVector>,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            schedule: StepSchedule::default(),
            grad_tol: None,
            max_iter: 10_000,
            init: None,
        }
    }
}

impl AscentOptions {
    pub fn with_grad_tol(mut self, tol: f64) -> Self {
        self.grad_tol = Some(tol);
        self
    }

    pub fn with_schedule(mut self, schedule: StepSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_init(mut self, init: WeightVector) -> Self {
        self.init = Some(init);
        self
    }
}

/// Result of maximizing `Psi`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution {
    pub lambda_star: WeightVector,
    /// `Psi(lambda_star)`, the transport cost estimate.
    pub wasserstein: f64,
    pub masses: RegionMassReport,
    /// Number of gradient evaluations at accepted iterates.
    pub iterations: usize,
    /// `||g||_inf` at `lambda_star`.
    pub grad_norm: f64,
    pub converged: bool,
}

/// `Psi(lambda) = (1/M) sum_m phi_lambda(x_m) ratio(x_m)`.
pub fn psi(
    lam: &WeightVector,
    batch: &SampleBatch,
    ratio: &dyn Fn(&[f64]) -> f64,
    mu: &EmpiricalMeasure,
    metric: Metric,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    check_lengths(lam, mu)?;
    if batch.dim() != mu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: batch.dim(),
        });
    }
    Ok(batch.mean_of(|x| weighted_argmin(x, lam.as_slice(), mu, metric).1 * ratio(x)))
}

fn check_lengths(lam: &WeightVector, mu: &EmpiricalMeasure) -> Result<()> {
    if lam.len() != mu.len() {
        return Err(Error::LengthMismatch {
            expected: mu.len(),
            found: lam.len(),
        });
    }
    Ok(())
}

/// Projected supergradient `g_i = 1/N - masses_i`, shifted to sum to zero.
pub(crate) fn projected_gradient(masses: &[f64]) -> Vec<f64> {
    let n = masses.len() as f64;
    let mut g: Vec<f64> = masses.iter().map(|m| 1.0 / n - m).collect();
    let mean = g.iter().sum::<f64>() / n;
    g.iter_mut().for_each(|v| *v -= mean);
    g
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| libm::fabs(*x)).fold(0.0, f64::max)
}

struct Evaluation {
    lam: WeightVector,
    psi: f64,
    masses: RegionMassReport,
    grad: Vec<f64>,
    grad_norm: f64,
}

struct Evaluator<'a> {
    table: &'a SiteDistances,
    ratios: Option<&'a [f64]>,
    scratch: Assignment,
}

impl Evaluator<'_> {
    fn eval(&mut self, lam: WeightVector) -> Evaluation {
        self.table.assign_into(&lam, &mut self.scratch);
        let psi = self.scratch.mean_phi(self.ratios);
        let masses = self.scratch.masses(self.table.n_atoms(), self.ratios);
        let grad = projected_gradient(&masses.masses);
        let grad_norm = inf_norm(&grad);
        Evaluation {
            lam,
            psi,
            masses,
            grad,
            grad_norm,
        }
    }
}

fn finish(e: Evaluation, iterations: usize, converged: bool) -> TransportSolution {
    TransportSolution {
        lambda_star: e.lam,
        wasserstein: e.psi,
        masses: e.masses,
        iterations,
        grad_norm: e.grad_norm,
        converged,
    }
}

/// Maximizes `Psi` on a precomputed distance table.
///
/// `ratios` holds `q/p` at every batch point (`None` for `q = p`) and
/// `diameter` is `diam(K)` under the table's metric. On convergence the
/// iterate that met the gradient tolerance is returned; otherwise the iterate
/// with the largest `Psi` seen.
pub fn maximize_psi_on(
    table: &SiteDistances,
    ratios: Option<&[f64]>,
    diameter: f64,
    opts: &AscentOptions,
) -> TransportSolution {
    let n = table.n_atoms();
    let tol = opts
        .grad_tol
        .unwrap_or_else(|| 2.0 / libm::sqrt(table.n_samples() as f64));
    let init = match &opts.init {
        Some(l) if l.len() == n => WeightVector::new(l.as_slice().to_vec()),
        _ => WeightVector::zeros(n),
    };
    let mut ev = Evaluator {
        table,
        ratios,
        scratch: Assignment::default(),
    };
    let max_iter = opts.max_iter.max(1);
    match opts.schedule {
        StepSchedule::Harmonic { scale } => {
            let c = scale.unwrap_or(n as f64 * diameter);
            let mut cur = ev.eval(init);
            let mut best: Option<Evaluation> = None;
            for k in 1..=max_iter {
                if cur.grad_norm <= tol {
                    return finish(cur, k, true);
                }
                let next = cur.lam.step(c / k as f64, &cur.grad);
                let prev = core::mem::replace(&mut cur, ev.eval(next));
                if best.as_ref().is_none_or(|b| prev.psi > b.psi) {
                    best = Some(prev);
                }
            }
            let best = match best {
                Some(b) if b.psi >= cur.psi => b,
                _ => cur,
            };
            finish(best, max_iter, false)
        }
        StepSchedule::Adaptive { initial } => {
            let mut t = initial.unwrap_or(diameter);
            let mut cur = ev.eval(init);
            for k in 1..=max_iter {
                if cur.grad_norm <= tol {
                    return finish(cur, k, true);
                }
                let g2: f64 = cur.grad.iter().map(|g| g * g).sum();
                loop {
                    let cand = ev.eval(cur.lam.step(t, &cur.grad));
                    if cand.psi >= cur.psi + 0.5 * t * g2 {
                        cur = cand;
                        t *= 2.0;
                        break;
                    }
                    t *= 0.5;
                    if t < 1e-14 * diameter.max(1.0) {
                        // no step gives sufficient increase: a kink of the
                        // sample-average objective at its maximum
                        return finish(cur, k, false);
                    }
                }
            }
            let converged = cur.grad_norm <= tol;
            finish(cur, max_iter, converged)
        }
    }
}

fn evaluate_ratios(batch: &SampleBatch, ratio: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
    batch.iter().map(ratio).collect()
}

/// Computes `W(q, mu)` and the maximizing weights by supergradient ascent on
/// one fixed batch.
///
/// Non-convergence within `opts.max_iter` is reported through
/// [`TransportSolution::converged`], not as an error.
pub fn maximize_psi(
    batch: &SampleBatch,
    ratio: &dyn Fn(&[f64]) -> f64,
    mu: &EmpiricalMeasure,
    metric: Metric,
    opts: &AscentOptions,
) -> Result<TransportSolution> {
    if let Some(init) = &opts.init {
        check_lengths(init, mu)?;
    }
    let table = SiteDistances::new(batch, mu, metric)?;
    let ratios = evaluate_ratios(batch, ratio);
    Ok(maximize_psi_on(
        &table,
        Some(&ratios),
        mu.domain().diameter(metric),
        opts,
    ))
}

/// Stochastic variant: a fresh batch of `batch_size` draws for every step,
/// harmonic steps, Polyak-Ruppert averaging over the second half of the run.
///
/// The returned objective and masses are evaluated on one more independent
/// batch. Meant for variance studies; [`maximize_psi`] is the default solver.
pub fn maximize_psi_stochastic<P: Prior + ?Sized>(
    prior: &P,
    ratio: &dyn Fn(&[f64]) -> f64,
    mu: &EmpiricalMeasure,
    metric: Metric,
    batch_size: usize,
    seed: u64,
    opts: &AscentOptions,
) -> Result<TransportSolution> {
    let n = mu.len();
    let c = match opts.schedule {
        StepSchedule::Harmonic { scale } => {
            scale.unwrap_or(n as f64 * mu.domain().diameter(metric))
        }
        StepSchedule::Adaptive { .. } => {
            return Err(Error::InvalidParameter(
                "adaptive steps need a fixed batch; use maximize_psi",
            ))
        }
    };
    let max_iter = opts.max_iter.max(1);
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut lam = match &opts.init {
        Some(l) => {
            check_lengths(l, mu)?;
            l.clone()
        }
        None => WeightVector::zeros(n),
    };
    let mut avg = vec![0.0; n];
    let mut avg_count = 0usize;
    for k in 1..=max_iter {
        let batch = draw_batch(prior, batch_size, seeds.next_u64())?;
        let rep = crate::voronoi::region_masses(&batch, ratio, &lam, mu, metric)?;
        let g = projected_gradient(&rep.masses);
        lam = lam.step(c / k as f64, &g);
        if 2 * k > max_iter {
            avg.iter_mut().zip(lam.as_slice()).for_each(|(a, l)| *a += l);
            avg_count += 1;
        }
    }
    avg.iter_mut().for_each(|a| *a /= avg_count.max(1) as f64);
    let lam = WeightVector::new(avg);
    let batch = draw_batch(prior, batch_size, seeds.next_u64())?;
    let table = SiteDistances::new(&batch, mu, metric)?;
    let ratios = evaluate_ratios(&batch, ratio);
    let mut ev = Evaluator {
        table: &table,
        ratios: Some(&ratios),
        scratch: Assignment::default(),
    };
    let e = ev.eval(lam);
    let tol = opts
        .grad_tol
        .unwrap_or_else(|| 2.0 / libm::sqrt(batch_size as f64));
    let converged = e.grad_norm <= tol;
    Ok(finish(e, max_iter, converged))
}

/// Optimal transport map: the index of the atom that `x` is sent to.
pub fn transport_map(
    sol: &TransportSolution,
    x: &[f64],
    mu: &EmpiricalMeasure,
    metric: Metric,
) -> Result<usize> {
    crate::voronoi::assign_region(x, &sol.lambda_star, mu, metric)
}

/// Position of a density relative to the ball `W(q, mu) <= delta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    Inside,
    Boundary,
    Outside,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembershipReport {
    pub status: Membership,
    /// `delta - W`.
    pub margin: f64,
    pub wasserstein: f64,
    /// Whether the underlying ascent met its gradient tolerance.
    pub converged: bool,
}

/// Decides `q in B_delta(mu)`.
///
/// Checking every moment constraint `E_q[phi_lambda] <= delta` at once is the
/// same as comparing `delta` with `max_lambda Psi = W(q, mu)`. `band` is the
/// width of the Boundary zone (`3/sqrt(M)` when `None`).
pub fn ball_membership(
    ratio: &dyn Fn(&[f64]) -> f64,
    mu: &EmpiricalMeasure,
    delta: f64,
    batch: &SampleBatch,
    metric: Metric,
    opts: &AscentOptions,
    band: Option<f64>,
) -> Result<MembershipReport> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter("delta must be positive"));
    }
    let sol = maximize_psi(batch, ratio, mu, metric, opts)?;
    let tol = band.unwrap_or(3.0 * batch.noise_scale());
    let w = sol.wasserstein;
    let status = if w + tol < delta {
        Membership::Inside
    } else if w - tol > delta {
        Membership::Outside
    } else {
        Membership::Boundary
    };
    Ok(MembershipReport {
        status,
        margin: delta - w,
        wasserstein: w,
        converged: sol.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_uniform_prior, BoxDomain};

    fn line(points: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::new(&BoxDomain::unit(1), points.iter().map(|&p| vec![p]).collect())
            .unwrap()
    }

    fn uniform_batch(dim: usize, m: usize, seed: u64) -> SampleBatch {
        draw_batch(&make_uniform_prior(&BoxDomain::unit(dim)), m, seed).unwrap()
    }

    #[test]
    fn psi_single_atom_is_mean_distance() {
        let batch = uniform_batch(1, 50_000, 1);
        let v = psi(&WeightVector::zeros(1), &batch, &|_| 1.0, &line(&[0.5]), Metric::Euclidean)
            .unwrap();
        assert!((v - 0.25).abs() < 3e-3, "{v}");
    }

    #[test]
    fn psi_two_symmetric_atoms() {
        let batch = uniform_batch(1, 50_000, 2);
        let mu = line(&[0.25, 0.75]);
        let v = psi(&WeightVector::zeros(2), &batch, &|_| 1.0, &mu, Metric::Euclidean).unwrap();
        assert!((v - 0.125).abs() < 2e-3, "{v}");
        assert!(v >= 0.0);
    }

    #[test]
    fn psi_rejects_bad_shapes() {
        let batch = uniform_batch(1, 10, 2);
        let mu = line(&[0.25, 0.75]);
        assert!(psi(&WeightVector::zeros(3), &batch, &|_| 1.0, &mu, Metric::Euclidean).is_err());
    }

    #[test]
    fn single_atom_converges_immediately() {
        let batch = uniform_batch(1, 1000, 3);
        let mu = line(&[0.3]);
        let sol =
            maximize_psi(&batch, &|_| 1.0, &mu, Metric::Euclidean, &AscentOptions::default())
                .unwrap();
        assert!(sol.converged);
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.lambda_star.as_slice(), &[0.0]);
        for x in batch.iter().take(20) {
            assert_eq!(transport_map(&sol, x, &mu, Metric::Euclidean).unwrap(), 0);
        }
    }

    #[test]
    fn symmetric_pair_map_is_nearest_atom() {
        let batch = uniform_batch(1, 20_000, 4);
        let mu = line(&[0.25, 0.75]);
        let sol =
            maximize_psi(&batch, &|_| 1.0, &mu, Metric::Euclidean, &AscentOptions::default())
                .unwrap();
        assert!(sol.converged);
        assert!(sol.lambda_star.max_abs_diff(&WeightVector::zeros(2)) < 0.03);
        assert_eq!(transport_map(&sol, &[0.1], &mu, Metric::Euclidean).unwrap(), 0);
        assert_eq!(transport_map(&sol, &[0.9], &mu, Metric::Euclidean).unwrap(), 1);
    }

    #[test]
    fn adaptive_schedule_reaches_tight_tolerance() {
        let batch = uniform_batch(1, 20_000, 5);
        // balanced boundary at 0.5: x - 0.2 - l = 0.9 - x + l  =>  l = -0.05
        let mu = line(&[0.2, 0.9]);
        let opts = AscentOptions::default()
            .with_schedule(StepSchedule::Adaptive { initial: None })
            .with_grad_tol(1e-4);
        let sol = maximize_psi(&batch, &|_| 1.0, &mu, Metric::Euclidean, &opts).unwrap();
        assert!(sol.converged, "grad {}", sol.grad_norm);
        assert!((sol.lambda_star[0] + 0.05).abs() < 0.01);
    }

    #[test]
    fn stochastic_variant_lands_near_the_fixed_batch_answer() {
        let prior = make_uniform_prior(&BoxDomain::unit(1));
        let mu = line(&[0.2, 0.9]);
        let opts = AscentOptions {
            max_iter: 400,
            ..AscentOptions::default()
        };
        let sol =
            maximize_psi_stochastic(&prior, &|_| 1.0, &mu, Metric::Euclidean, 5000, 3, &opts)
                .unwrap();
        assert!((sol.lambda_star[0] + 0.05).abs() < 0.03, "{:?}", sol.lambda_star);
        // half the mass travels to each atom: int_0^0.5 |x - 0.2| + int_0.5^1 |x - 0.9|
        assert!((sol.wasserstein - 0.15).abs() < 0.01, "{}", sol.wasserstein);
        let adaptive = opts.with_schedule(StepSchedule::Adaptive { initial: None });
        assert!(
            maximize_psi_stochastic(&prior, &|_| 1.0, &mu, Metric::Euclidean, 10, 3, &adaptive)
                .is_err()
        );
    }

    #[test]
    fn membership_bands() {
        let batch = uniform_batch(2, 20_000, 6);
        let mu = EmpiricalMeasure::new(&BoxDomain::unit(2), vec![vec![0.5, 0.5]]).unwrap();
        let e = Metric::Euclidean;
        let o = AscentOptions::default();
        let inside = ball_membership(&|_| 1.0, &mu, 0.5, &batch, e, &o, None).unwrap();
        assert_eq!(inside.status, Membership::Inside);
        let outside = ball_membership(&|_| 1.0, &mu, 0.1, &batch, e, &o, None).unwrap();
        assert_eq!(outside.status, Membership::Outside);
        assert!(outside.margin < 0.0);
        let at = ball_membership(&|_| 1.0, &mu, inside.wasserstein, &batch, e, &o, None).unwrap();
        assert_eq!(at.status, Membership::Boundary);
        assert!(ball_membership(&|_| 1.0, &mu, 0.0, &batch, e, &o, None).is_err());
    }
}
