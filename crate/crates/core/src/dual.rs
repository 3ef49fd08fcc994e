//! The two-dimensional entropy dual for fixed weights.
//!
//! For fixed `lambda`, minimizing `H(q, p)` over densities with
//! `E_q[1] = 1` and `E_q[phi_lambda] <= delta` has the concave dual
//!
//! ```text
//! maximize  -u - v delta - E_p[exp(-1 - v phi_lambda - u)]   over u in R, v >= 0
//! ```
//!
//! whose maximizer gives `q(x) = p(x) exp(-1 - v phi_lambda(x) - u)`.
//! Its optimal value is `Gamma(lambda)`, and `lambda*` maximizes `Gamma`.
//!
//! All expectations are sample averages over a batch drawn from `p`, so the
//! functions here take the values `phi_lambda(x_m)` directly.

use alloc::string::String;
use alloc::vec::Vec;

use crate::domain::{EmpiricalMeasure, Metric, Prior, SampleBatch};
use crate::error::{Error, Result};
use crate::voronoi::{weighted_argmin, Assignment, RegionMassReport, SiteDistances, WeightVector};

/// Multipliers of the normalization (`u`) and transport (`v`) constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualPair {
    pub u: f64,
    pub v: f64,
}

impl DualPair {
    /// The pair for an inactive transport constraint: `q = p`.
    pub const INACTIVE: DualPair = DualPair { u: -1.0, v: 0.0 };
}

/// Weighted moments `m_k = E_p[w phi^k]`, `w = exp(-1 - v phi - u)`,
/// accumulated with a shift so large `v` cannot overflow.
#[derive(Debug, Clone, Copy)]
struct Moments {
    m0: f64,
    m1: f64,
    m2: f64,
}

fn moments(pair: DualPair, phi: &[f64]) -> Moments {
    // exp(-1 - v phi - u) = exp(shift) * exp(-v (phi - phi_min))
    let phi_min = phi.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = -1.0 - pair.v * phi_min - pair.u;
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for &p in phi {
        let w = libm::exp(-pair.v * (p - phi_min));
        s0 += w;
        s1 += w * p;
        s2 += w * p * p;
    }
    let scale = libm::exp(shift) / phi.len() as f64;
    Moments {
        m0: s0 * scale,
        m1: s1 * scale,
        m2: s2 * scale,
    }
}

/// Dual objective `-u - v delta - E_p[exp(-1 - v phi - u)]`.
pub fn dual_objective(pair: DualPair, phi: &[f64], delta: f64) -> f64 {
    -pair.u - pair.v * delta - moments(pair, phi).m0
}

/// Gradient `(-1 + m0, -delta + m1)` and Hessian `-[[m0, m1], [m1, m2]]` of
/// the dual objective, `m_k = E_p[exp(-1 - v phi - u) phi^k]`.
pub fn dual_gradient_hessian(
    pair: DualPair,
    phi: &[f64],
    delta: f64,
) -> ([f64; 2], [[f64; 2]; 2]) {
    let m = moments(pair, phi);
    (
        [-1.0 + m.m0, -delta + m.m1],
        [[-m.m0, -m.m1], [-m.m1, -m.m2]],
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualOptions {
    /// Stationarity tolerance on `|E_q[phi] - delta|`. `None` means
    /// `max(1e-8, 0.1/sqrt(M))`.
    pub tol: Option<f64>,
    pub max_iter: usize,
}

impl Default for DualOptions {
    fn default() -> Self {
        Self {
            tol: None,
            max_iter: 200,
        }
    }
}

impl DualOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol: Some(tol),
            ..Self::default()
        }
    }

    fn resolve_tol(&self, m: usize) -> f64 {
        self.tol
            .unwrap_or_else(|| f64::max(1e-8, 0.1 / libm::sqrt(m as f64)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualSolution {
    pub pair: DualPair,
    /// Dual objective at `pair`; equals `Gamma(lambda)` at the optimum.
    pub objective: f64,
    pub iterations: usize,
    /// Norm of the projected gradient at `pair`.
    pub grad_norm: f64,
    pub converged: bool,
    /// `E_p[phi] <= delta`: the transport constraint is slack and `q = p`.
    pub inactive: bool,
}

/// `u(v)` making the normalization exact: `u = log E_p[exp(-1 - v phi)]`.
fn normalizing_u(v: f64, phi: &[f64], phi_min: f64) -> f64 {
    let s: f64 = phi.iter().map(|&p| libm::exp(-v * (p - phi_min))).sum();
    -1.0 - v * phi_min + libm::log(s / phi.len() as f64)
}

/// Normalized tilted mean and variance of `phi` under weights `exp(-v phi)`.
fn tilted_mean_var(v: f64, phi: &[f64], phi_min: f64) -> (f64, f64) {
    let (mut s0, mut s1) = (0.0, 0.0);
    for &p in phi {
        let w = libm::exp(-v * (p - phi_min));
        s0 += w;
        s1 += w * p;
    }
    let mean = s1 / s0;
    let var = phi
        .iter()
        .map(|&p| libm::exp(-v * (p - phi_min)) * (p - mean) * (p - mean))
        .sum::<f64>()
        / s0;
    (mean, var)
}

/// Along the tilt `q_v = p exp(-1 - v phi - u(v))`, `v >= v_lo`, finds a
/// multiplier whose cross-entropy `H(q_v, p)` is as close to `level` as
/// possible without exceeding it. `H(q_v, p)` increases with `v` (its
/// derivative is `v Var_v(phi)`), so this is a safeguarded Newton search on a
/// monotone function. `None` when `level` lies above every reachable value.
pub(crate) fn tilt_to_entropy(phi: &[f64], v_lo: f64, level: f64) -> Option<DualPair> {
    let phi_min = phi.iter().copied().fold(f64::INFINITY, f64::min);
    // (H, dH/dv) at v
    let eval = |v: f64| {
        let u = normalizing_u(v, phi, phi_min);
        let (m1, var) = tilted_mean_var(v, phi, phi_min);
        (-1.0 - v * m1 - u, v * var)
    };
    let tol = 1e-10 * (1.0 + libm::fabs(level));
    let mut lo = v_lo.max(0.0);
    let (mut h_lo, mut d_lo) = eval(lo);
    if h_lo >= level {
        return Some(DualPair {
            u: normalizing_u(lo, phi, phi_min),
            v: lo,
        });
    }
    let mut hi = f64::max(2.0 * lo, 1.0);
    let mut expansions = 0;
    while eval(hi).0 < level {
        lo = hi;
        (h_lo, d_lo) = eval(lo);
        hi *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return None;
        }
    }
    for _ in 0..100 {
        if level - h_lo <= tol || hi - lo <= 1e-13 * hi {
            break;
        }
        let newton = if d_lo > 0.0 { lo + (level - h_lo) / d_lo } else { f64::INFINITY };
        let mid = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        let (h, d) = eval(mid);
        if h <= level {
            lo = mid;
            h_lo = h;
            d_lo = d;
        } else {
            hi = mid;
        }
    }
    Some(DualPair {
        u: normalizing_u(lo, phi, phi_min),
        v: lo,
    })
}

/// Maximizes the dual objective over `u in R, v >= 0`.
///
/// If the sample mean of `phi` is already at most `delta` the constraint is
/// inactive and the answer is exactly `(-1, 0)`. Otherwise Newton steps are
/// taken in `(u, v)` with `u` re-solved in closed form after each step (which
/// makes `m0 = 1` and reduces the Newton system to
/// `dv = (m1 - delta) / (m2 - m1^2)`), with projection onto `v >= 0` and
/// Armijo backtracking from the full step.
pub fn solve_dual(phi: &[f64], delta: f64, opts: &DualOptions) -> Result<DualSolution> {
    if phi.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter("delta must be positive and finite"));
    }
    let mean = phi.iter().sum::<f64>() / phi.len() as f64;
    if mean <= delta {
        let pair = DualPair::INACTIVE;
        let ([gu, _], _) = dual_gradient_hessian(pair, phi, delta);
        return Ok(DualSolution {
            pair,
            objective: dual_objective(pair, phi, delta),
            iterations: 0,
            grad_norm: libm::fabs(gu),
            converged: true,
            inactive: true,
        });
    }
    let tol = opts.resolve_tol(phi.len());
    let phi_min = phi.iter().copied().fold(f64::INFINITY, f64::min);
    let reduced = |v: f64| -normalizing_u(v, phi, phi_min) - v * delta;

    let mut v = 0.0;
    let mut f = reduced(v);
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=opts.max_iter.max(1) {
        iterations = k;
        let (m1, var) = tilted_mean_var(v, phi, phi_min);
        let slope = m1 - delta;
        if libm::fabs(slope) <= tol || (v == 0.0 && slope <= 0.0) {
            converged = true;
            break;
        }
        if !(var > 0.0) {
            // phi is constant on the batch above delta: no v reaches it
            break;
        }
        let dir = slope / var;
        if 0.5 * slope * dir < 1e-12 * (1.0 + libm::fabs(f)) {
            // the predicted gain is below the rounding level of the
            // objective, so a line search can only see noise: full step
            let cand = f64::max(0.0, v + dir);
            if libm::fabs(cand - v) <= 1e-15 * (1.0 + v) {
                converged = libm::fabs(slope) <= 1e3 * tol;
                break;
            }
            v = cand;
            f = reduced(v);
            continue;
        }
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let cand = f64::max(0.0, v + t * dir);
            let fc = reduced(cand);
            if fc >= f + 1e-4 * slope * (cand - v) {
                v = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // at the rounding floor of the objective
            converged = libm::fabs(slope) <= 1e3 * tol;
            break;
        }
    }
    let pair = DualPair {
        u: normalizing_u(v, phi, phi_min),
        v,
    };
    let ([gu, gv], _) = dual_gradient_hessian(pair, phi, delta);
    let gv_proj = if pair.v == 0.0 { f64::max(gv, 0.0) } else { gv };
    Ok(DualSolution {
        pair,
        objective: dual_objective(pair, phi, delta),
        iterations,
        grad_norm: libm::sqrt(gu * gu + gv_proj * gv_proj),
        converged,
        inactive: false,
    })
}

/// `Gamma(lambda)` together with everything a cut needs.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaValue {
    /// Optimal dual value `-u - v delta - 1`.
    pub gamma: f64,
    pub dual: DualSolution,
    /// Region masses under `q_lambda(x) = p(x) exp(-1 - v phi_lambda(x) - u)`.
    pub masses: RegionMassReport,
    /// `E_p[phi_lambda]`.
    pub prior_cost: f64,
}

fn gamma_from(dual: DualSolution, delta: f64) -> f64 {
    -dual.pair.u - dual.pair.v * delta - 1.0
}

/// The ratio `exp(-1 - v phi - u)` for every entry of `phi`.
pub(crate) fn tilt_ratios(pair: DualPair, phi: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend(phi.iter().map(|&p| libm::exp(-1.0 - pair.v * p - pair.u)));
}

/// [`gamma_value`] on a precomputed distance table.
pub fn gamma_value_on(
    table: &SiteDistances,
    lam: &WeightVector,
    delta: f64,
    opts: &DualOptions,
) -> Result<GammaValue> {
    let mut a = Assignment::default();
    let mut r = Vec::new();
    gamma_value_with(table, lam, delta, opts, &mut a, &mut r)
}

pub(crate) fn gamma_value_with(
    table: &SiteDistances,
    lam: &WeightVector,
    delta: f64,
    opts: &DualOptions,
    assignment: &mut Assignment,
    ratios: &mut Vec<f64>,
) -> Result<GammaValue> {
    if lam.len() != table.n_atoms() {
        return Err(Error::LengthMismatch {
            expected: table.n_atoms(),
            found: lam.len(),
        });
    }
    table.assign_into(lam, assignment);
    let dual = solve_dual(&assignment.phi, delta, opts)?;
    tilt_ratios(dual.pair, &assignment.phi, ratios);
    Ok(GammaValue {
        gamma: gamma_from(dual, delta),
        dual,
        masses: assignment.masses(table.n_atoms(), Some(ratios)),
        prior_cost: assignment.mean_phi(None),
    })
}

/// Solves the entropy dual for fixed weights and returns `Gamma(lambda)`.
pub fn gamma_value(
    lam: &WeightVector,
    batch: &SampleBatch,
    mu: &EmpiricalMeasure,
    metric: Metric,
    delta: f64,
    opts: &DualOptions,
) -> Result<GammaValue> {
    let table = SiteDistances::new(batch, mu, metric)?;
    gamma_value_on(&table, lam, delta, opts)
}

/// `H(q, p) = E_p[r log r]` for the ratio `r = q/p`, with `0 log 0 = 0`.
pub fn cross_entropy(ratio: &dyn Fn(&[f64]) -> f64, batch: &SampleBatch) -> f64 {
    batch.mean_of(|x| {
        let r = ratio(x);
        if r > 0.0 {
            r * libm::log(r)
        } else {
            0.0
        }
    })
}

/// The optimal ratio `q*/p = exp(-1 - v phi_lambda - u)` as a standalone
/// function of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioFn {
    pub lambda: WeightVector,
    pub pair: DualPair,
    pub mu: EmpiricalMeasure,
    pub metric: Metric,
}

impl RatioFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        if self.pair.v == 0.0 {
            return libm::exp(-1.0 - self.pair.u);
        }
        let (_, phi) = weighted_argmin(x, self.lambda.as_slice(), &self.mu, self.metric);
        libm::exp(-1.0 - self.pair.v * phi - self.pair.u)
    }
}

/// Checks on a computed solution, all evaluated on the solver's batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    /// `E_p[q*/p]`; 1 up to the dual tolerance.
    pub mass: f64,
    /// `W(q*, mu)` from a fresh transport solve.
    pub transport_cost: f64,
    /// `H(q*, p)`.
    pub cross_entropy: f64,
}

/// The minimum cross-entropy density
/// `q*(x) = p(x) exp(-1 - v phi_{lambda*}(x) - u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropySolution {
    pub lambda_star: WeightVector,
    pub dual: DualPair,
    pub delta: f64,
    pub prior_name: String,
    pub diagnostics: Diagnostics,
    pub converged: bool,
}

impl EntropySolution {
    /// The ratio `q*/p`; `mu` and `metric` must be the ones the solver used.
    pub fn ratio(&self, mu: &EmpiricalMeasure, metric: Metric) -> RatioFn {
        RatioFn {
            lambda: self.lambda_star.clone(),
            pair: self.dual,
            mu: mu.clone(),
            metric,
        }
    }

    /// `q*(x)`.
    pub fn density_at<P: Prior + ?Sized>(
        &self,
        x: &[f64],
        prior: &P,
        mu: &EmpiricalMeasure,
        metric: Metric,
    ) -> f64 {
        prior.density(x) * self.ratio(mu, metric).eval(x)
    }
}
