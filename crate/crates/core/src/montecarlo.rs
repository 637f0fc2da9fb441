//! Desk-scale simulation of the linear measurement model with exact
//! posteriors by enumeration.
//!
//! Point-mass priors enumerate signal vectors directly. Mixture priors
//! enumerate component assignments; conditioned on an assignment the signal
//! is jointly Gaussian and everything reduces to an n-by-n solve, so the
//! pure Gaussian prior is the one-assignment special case and needs no
//! separate code path. Trials draw from per-trial RNG substreams and are
//! reduced in trial order, so results are reproducible at any worker count.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::par;
use crate::prior::Prior;

/// Hard ceiling on enumerated states: alphabet^n for point-mass priors,
/// components^n otherwise.
pub const ENUMERATION_CAP: u128 = 1 << 24;

/// One draw of the measurement model: y = a x + w, matrix entries
/// i.i.d. mean zero with variance 1/n.
#[derive(Debug, Clone)]
pub struct Instance {
    pub x: DVector<f64>,
    pub a: DMatrix<f64>,
    pub w: DVector<f64>,
    pub y: DVector<f64>,
}

impl Instance {
    /// Assemble an instance from its parts, deriving y so the model
    /// identity holds exactly.
    pub fn from_parts(x: DVector<f64>, a: DMatrix<f64>, w: DVector<f64>) -> Self {
        let y = &a * &x + &w;
        Instance { x, a, w, y }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn m(&self) -> usize {
        self.y.len()
    }

    /// The same trial truncated to its first m measurements. Shares the
    /// signal, so sweeps over m see common random numbers.
    fn prefix(&self, m: usize) -> Instance {
        Instance {
            x: self.x.clone(),
            a: self.a.rows(0, m).into_owned(),
            w: self.w.rows(0, m).into_owned(),
            y: self.y.rows(0, m).into_owned(),
        }
    }
}

/// Number of states exact enumeration would visit for this prior at
/// dimension n.
pub fn enumeration_size(p: &Prior, n: u32) -> u128 {
    (p.components().len() as u128)
        .checked_pow(n)
        .unwrap_or(u128::MAX)
}

fn check_cap(p: &Prior, n: u32) -> Result<()> {
    let states = enumeration_size(p, n);
    if states > ENUMERATION_CAP {
        return Err(CoreError::EnumerationTooLarge { states, cap: ENUMERATION_CAP });
    }
    Ok(())
}

pub fn sample_instance(p: &Prior, n: u32, m: u32, seed: u64) -> Instance {
    sample_instance_stream(p, n, m, seed, 0)
}

fn sample_instance_stream(p: &Prior, n: u32, m: u32, seed: u64, stream: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let (n, m) = (n as usize, m as usize);
    let x = DVector::from_fn(n, |_, _| p.sample(&mut rng));
    let scale = 1.0 / (n as f64).sqrt();
    let a = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal) * scale);
    let w = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = &a * &x + &w;
    Instance { x, a, w, y }
}

/// Exact posterior mean vector and per-coordinate posterior variance.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub mean: DVector<f64>,
    pub variance: f64,
}

/// Odometer over mixed-radix digits; one step per enumerated state.
struct Odometer {
    digits: Vec<usize>,
    radix: usize,
}

impl Odometer {
    fn new(n: usize, radix: usize) -> Self {
        Odometer { digits: vec![0; n], radix }
    }

    fn advance(&mut self) {
        for d in self.digits.iter_mut() {
            *d += 1;
            if *d < self.radix {
                return;
            }
            *d = 0;
        }
    }
}

/// Posterior summary plus mutual-information density for one instance.
fn eval_instance(p: &Prior, inst: &Instance) -> (PosteriorSummary, f64) {
    match p.atoms() {
        Some(atoms) => alphabet_eval(&atoms, inst),
        None => mixture_eval(p, inst),
    }
}

/// Reflected mixed-radix Gray enumeration: every step moves one digit by
/// one, covering all radix^n states. Radix must be at least 2, which any
/// non-degenerate alphabet satisfies.
struct GrayWalk {
    digits: Vec<usize>,
    dirs: Vec<i8>,
    focus: Vec<usize>,
    radix: usize,
}

impl GrayWalk {
    fn new(n: usize, radix: usize) -> Self {
        GrayWalk {
            digits: vec![0; n],
            dirs: vec![1; n],
            focus: (0..=n).collect(),
            radix,
        }
    }

    /// Advance one state; `(coordinate, old_digit, new_digit)`. Must not be
    /// called more than radix^n - 1 times.
    fn step(&mut self) -> (usize, usize, usize) {
        let j = self.focus[0];
        self.focus[0] = 0;
        debug_assert!(j < self.digits.len(), "walk stepped past the last state");
        let old = self.digits[j];
        let new = (old as isize + self.dirs[j] as isize) as usize;
        self.digits[j] = new;
        if new == 0 || new == self.radix - 1 {
            self.dirs[j] = -self.dirs[j];
            self.focus[j] = self.focus[j + 1];
            self.focus[j + 1] = j + 1;
        }
        (j, old, new)
    }
}

/// Enumeration over signal vectors for pure point-mass priors. States are
/// visited in Gray order so the Gram form updates in O(n) per state, and
/// residual norms go through the Gram matrix, keeping the cost free of m.
fn alphabet_eval(atoms: &[(f64, f64)], inst: &Instance) -> (PosteriorSummary, f64) {
    let n = inst.n();
    let k = atoms.len();
    let states = k.pow(n as u32);
    let g = inst.a.tr_mul(&inst.a);
    let b = inst.a.tr_mul(&inst.y);
    let y2 = inst.y.norm_squared();
    let logw: Vec<f64> = atoms.iter().map(|&(_, w)| w.ln()).collect();
    let vals: Vec<f64> = atoms.iter().map(|&(v, _)| v).collect();

    // First walk: log-weights. Running state is the linear term, the Gram
    // image t = G x, the quadratic form, and the log-prior.
    let mut lw = vec![0.0; states];
    let mut max_lw = f64::NEG_INFINITY;
    {
        let x0 = DVector::from_element(n, vals[0]);
        let mut t = &g * &x0;
        let mut lin = x0.dot(&b);
        let mut quad = x0.dot(&t);
        let mut lp = n as f64 * logw[0];
        let mut walk = GrayWalk::new(n, k);
        for (s, slot) in lw.iter_mut().enumerate() {
            if s > 0 {
                let (j, old, new) = walk.step();
                let dx = vals[new] - vals[old];
                lin += dx * b[j];
                quad += dx * (2.0 * t[j] + dx * g[(j, j)]);
                for i in 0..n {
                    t[i] += dx * g[(i, j)];
                }
                lp += logw[new] - logw[old];
            }
            *slot = lp + lin - 0.5 * quad - 0.5 * y2;
            max_lw = max_lw.max(*slot);
        }
    }

    // Second walk: moments. Coordinates are piecewise constant along the
    // walk, so each mean entry collects value * (weight mass of its run),
    // closed out whenever that coordinate moves.
    let mut z = 0.0;
    let mut mean = DVector::zeros(n);
    let mut run_start = vec![0.0; n];
    let mut x = vec![vals[0]; n];
    let mut sq = n as f64 * vals[0] * vals[0];
    let mut ex2 = 0.0;
    let mut walk = GrayWalk::new(n, k);
    for (s, &l) in lw.iter().enumerate() {
        if s > 0 {
            let (j, old, new) = walk.step();
            let (vo, vn) = (vals[old], vals[new]);
            mean[j] += vo * (z - run_start[j]);
            run_start[j] = z;
            sq += vn * vn - vo * vo;
            x[j] = vn;
        }
        let r = (l - max_lw).exp();
        z += r;
        ex2 += r * sq;
    }
    for j in 0..n {
        mean[j] += x[j] * (z - run_start[j]);
    }
    mean /= z;
    ex2 /= z;
    let variance = ((ex2 - mean.norm_squared()) / n as f64).max(0.0);
    let mi = -0.5 * inst.w.norm_squared() - (max_lw + z.ln());
    (PosteriorSummary { mean, variance }, mi)
}

/// Enumeration over component assignments for mixture priors. Conditioned
/// on an assignment c the signal is Gaussian with diagonal covariance, so
/// the marginal likelihood and posterior moments come from the n-by-n
/// matrix I + S A'A S with S = diag(sqrt variance).
fn mixture_eval(p: &Prior, inst: &Instance) -> (PosteriorSummary, f64) {
    let n = inst.n();
    let comps = p.components();
    let k = comps.len();
    let states = k.pow(n as u32);
    let g = inst.a.tr_mul(&inst.a);
    let b = inst.a.tr_mul(&inst.y);
    let y2 = inst.y.norm_squared();
    let logw: Vec<f64> = comps.iter().map(|c| c.weight.ln()).collect();

    let assignment_lw = |digits: &[usize]| -> (f64, DVector<f64>, f64) {
        let mu = DVector::from_fn(n, |i, _| comps[digits[i]].mean);
        let sv = DVector::from_fn(n, |i, _| comps[digits[i]].variance.sqrt());
        let mut mat: DMatrix<f64> = DMatrix::identity(n, n);
        for i in 0..n {
            for j in 0..n {
                mat[(i, j)] += sv[i] * g[(i, j)] * sv[j];
            }
        }
        let chol = nalgebra::Cholesky::new(mat).expect("I + SGS is positive definite");
        let l = chol.l();
        let mut logdet = 0.0;
        for i in 0..n {
            logdet += 2.0 * l[(i, i)].ln();
        }
        let gmu = &g * &mu;
        let t = DVector::from_fn(n, |i, _| sv[i] * (b[i] - gmu[i]));
        let u = chol.solve(&t);
        let quad = y2 - 2.0 * mu.dot(&b) + mu.dot(&gmu) - t.dot(&u);
        let mut lp: f64 = digits.iter().map(|&d| logw[d]).sum();
        lp += -0.5 * logdet - 0.5 * quad;

        let mean_c = DVector::from_fn(n, |i, _| mu[i] + sv[i] * u[i]);
        let minv = chol.inverse();
        let mut trace = 0.0;
        for i in 0..n {
            trace += sv[i] * sv[i] * minv[(i, i)];
        }
        let ex2_c = mean_c.norm_squared() + trace;
        (lp, mean_c, ex2_c)
    };

    let mut lw = vec![0.0; states];
    let mut max_lw = f64::NEG_INFINITY;
    let mut odo = Odometer::new(n, k);
    for slot in lw.iter_mut() {
        *slot = assignment_lw(&odo.digits).0;
        max_lw = max_lw.max(*slot);
        odo.advance();
    }

    let mut z = 0.0;
    let mut mean = DVector::zeros(n);
    let mut ex2 = 0.0;
    let mut odo = Odometer::new(n, k);
    for &l in &lw {
        let r = (l - max_lw).exp();
        let (_, mean_c, ex2_c) = assignment_lw(&odo.digits);
        z += r;
        mean += r * mean_c;
        ex2 += r * ex2_c;
        odo.advance();
    }
    mean /= z;
    ex2 /= z;
    let variance = ((ex2 - mean.norm_squared()) / n as f64).max(0.0);
    let mi = -0.5 * inst.w.norm_squared() - (max_lw + z.ln());
    (PosteriorSummary { mean, variance }, mi)
}

/// Exact posterior mean and variance for one instance.
pub fn exact_posterior_mean(p: &Prior, inst: &Instance) -> Result<PosteriorSummary> {
    check_cap(p, inst.n() as u32)?;
    Ok(eval_instance(p, inst).0)
}

/// Per-instance mutual-information density, log f(y|x,a) - log f(y|a), in
/// nats. Averaging over trials estimates the total mutual information.
pub fn mi_density(p: &Prior, inst: &Instance) -> Result<f64> {
    check_cap(p, inst.n() as u32)?;
    Ok(eval_instance(p, inst).1)
}

/// How the squared-error average is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Average of realized squared errors per coordinate.
    ErrorAvg,
    /// Average of exact posterior variances; same mean, smaller spread.
    PosteriorVarAvg,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::ErrorAvg => "error_avg",
            Estimator::PosteriorVarAvg => "posterior_var_avg",
        })
    }
}

impl FromStr for Estimator {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "error_avg" => Ok(Estimator::ErrorAvg),
            "posterior_var_avg" => Ok(Estimator::PosteriorVarAvg),
            other => Err(CoreError::DomainError(format!(
                "unknown estimator '{other}' (expected error_avg or posterior_var_avg)"
            ))),
        }
    }
}

/// Trial-averaged estimates with standard errors. mi_hat is total nats for
/// the whole vector; mmse_hat is per coordinate.
#[derive(Debug, Clone, Serialize)]
pub struct McEstimate {
    pub n: u32,
    pub m: u32,
    pub trials: u64,
    pub mmse_hat: f64,
    pub mmse_se: f64,
    pub mi_hat: f64,
    pub mi_se: f64,
    pub seed: u64,
    pub estimator: Estimator,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let t = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / t;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (t - 1.0);
    (mean, (var / t).sqrt())
}

/// One trial's exact quantities: realized squared error per coordinate,
/// posterior variance, and information density.
#[derive(Debug, Clone, Serialize)]
pub struct TrialRow {
    pub trial: u64,
    pub sq_err: f64,
    pub posterior_var: f64,
    pub mi: f64,
}

/// Run the trials behind [`estimate`] and keep every row. Trial t draws
/// from RNG substream t of the given seed, so output is independent of the
/// worker count.
pub fn estimate_trials(
    p: &Prior,
    n: u32,
    m: u32,
    trials: u64,
    seed: u64,
) -> Result<Vec<TrialRow>> {
    if n < 1 {
        return Err(CoreError::OutOfRange {
            name: "n",
            value: n as f64,
            reason: "need at least one coordinate".into(),
        });
    }
    if trials < 1 {
        return Err(CoreError::OutOfRange {
            name: "trials",
            value: trials as f64,
            reason: "need at least one trial".into(),
        });
    }
    check_cap(p, n)?;
    Ok(par::map_indexed(trials as usize, |t| {
        let inst = sample_instance_stream(p, n, m, seed, t as u64);
        let (ps, mi) = eval_instance(p, &inst);
        let sq_err = (&inst.x - &ps.mean).norm_squared() / n as f64;
        TrialRow { trial: t as u64, sq_err, posterior_var: ps.variance, mi }
    }))
}

/// Aggregate trial rows into an estimate under the chosen error estimator.
pub fn summarize_trials(
    rows: &[TrialRow],
    n: u32,
    m: u32,
    seed: u64,
    estimator: Estimator,
) -> McEstimate {
    let picked: Vec<f64> = match estimator {
        Estimator::ErrorAvg => rows.iter().map(|r| r.sq_err).collect(),
        Estimator::PosteriorVarAvg => rows.iter().map(|r| r.posterior_var).collect(),
    };
    let (mmse_hat, mmse_se) = mean_se(&picked);
    let mis: Vec<f64> = rows.iter().map(|r| r.mi).collect();
    let (mi_hat, mi_se) = mean_se(&mis);
    McEstimate {
        n,
        m,
        trials: rows.len() as u64,
        mmse_hat,
        mmse_se,
        mi_hat,
        mi_se,
        seed,
        estimator,
    }
}

/// Estimate the per-coordinate error and total mutual information at one
/// (n, m) by independent trials.
pub fn estimate(
    p: &Prior,
    n: u32,
    m: u32,
    trials: u64,
    seed: u64,
    estimator: Estimator,
) -> Result<McEstimate> {
    let rows = estimate_trials(p, n, m, trials, seed)?;
    Ok(summarize_trials(&rows, n, m, seed, estimator))
}

/// One row of a measurement-sweep profile: the first difference of the
/// information estimate from m to m+1, and the error level at m.
#[derive(Debug, Clone, Serialize)]
pub struct DiffRow {
    pub m: u32,
    pub i_prime_hat: f64,
    pub i_prime_se: f64,
    pub mmse_hat: f64,
    pub mmse_se: f64,
}

/// Sweep m from 0 to m_max on shared trials and return the paired first
/// differences of the information density next to the posterior-variance
/// error average at each m. Rows cover m = 0 .. m_max-1.
pub fn mi_difference_profile(
    p: &Prior,
    n: u32,
    m_max: u32,
    trials: u64,
    seed: u64,
) -> Result<Vec<DiffRow>> {
    if n < 1 || m_max < 1 {
        return Err(CoreError::OutOfRange {
            name: "m_max",
            value: m_max as f64,
            reason: "need at least one coordinate and one measurement".into(),
        });
    }
    if trials < 1 {
        return Err(CoreError::OutOfRange {
            name: "trials",
            value: trials as f64,
            reason: "need at least one trial".into(),
        });
    }
    check_cap(p, n)?;
    let per_trial = par::map_indexed(trials as usize, |t| {
        let full = sample_instance_stream(p, n, m_max, seed, t as u64);
        let mut mis = Vec::with_capacity(m_max as usize + 1);
        let mut vars = Vec::with_capacity(m_max as usize + 1);
        for m in 0..=m_max as usize {
            let (ps, mi) = eval_instance(p, &full.prefix(m));
            mis.push(mi);
            vars.push(ps.variance);
        }
        (mis, vars)
    });
    let mut rows = Vec::with_capacity(m_max as usize);
    for m in 0..m_max as usize {
        let diffs: Vec<f64> = per_trial.iter().map(|(mis, _)| mis[m + 1] - mis[m]).collect();
        let vars: Vec<f64> = per_trial.iter().map(|(_, vars)| vars[m]).collect();
        let (i_prime_hat, i_prime_se) = mean_se(&diffs);
        let (mmse_hat, mmse_se) = mean_se(&vars);
        rows.push(DiffRow { m: m as u32, i_prime_hat, i_prime_se, mmse_hat, mmse_se });
    }
    Ok(rows)
}
