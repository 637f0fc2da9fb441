//! The variational potential over trial MMSE values, its stationary points,
//! and everything built on them: the minimum-information curve, jump
//! detection, state evolution, the crossing verdict, and the transition
//! locator.
//!
//! For measurement ratio `delta` and trial value z, the potential is
//!
//!   R(delta, z) = I_X(delta / (1+z)) + (delta/2) [log(1+z) - z/(1+z)]
//!
//! and stationarity in z is exactly the fixed-point condition
//! z = mmse_X(delta / (1+z)). The predicted asymptotic mutual information is
//! the global minimum of R over z >= 0 and the predicted MMSE is the
//! minimizer; a first-order transition is a swap of the global minimizer
//! between branches.

use crate::channel;
use crate::error::{CoreError, Result};
use crate::par;
use crate::prior::Prior;
use serde::Serialize;

const Z_FLOOR: f64 = 1e-8;
// Detection densities only: every hit is refined by bisection, and a cell
// holding two crossings is rejected as GridTooCoarse rather than miscounted.
const SCAN_POINTS: usize = 256;
const TIE_TOL_NATS: f64 = 1e-10;

/// Potential value and partial derivatives at one (delta, z).
#[derive(Debug, Clone, Copy)]
pub struct PotentialPoint {
    pub delta: f64,
    pub z: f64,
    /// R(delta, z) in nats.
    pub value: f64,
    /// dR/dz = (delta / (2(1+z)^2)) (z - mmse_X(delta/(1+z))).
    pub z_derivative: f64,
    /// dR/ddelta = log(1+z)/2 + (mmse_X(s) - z)/(2(1+z)); the envelope check
    /// reads this on the minimizing branch.
    pub delta_derivative: f64,
}

/// One solution of z = mmse_X(delta/(1+z)).
#[derive(Debug, Clone, Copy)]
pub struct FixedPoint {
    pub z: f64,
    /// R(delta, z) at the root.
    pub potential: f64,
    /// True when z - mmse_X(delta/(1+z)) crosses upward, i.e. the root is a
    /// local minimum of the potential.
    pub stable: bool,
}

/// All fixed points at one measurement ratio, ascending in z.
#[derive(Debug, Clone)]
pub struct FixedPointSet {
    pub delta: f64,
    pub roots: Vec<FixedPoint>,
}

impl FixedPointSet {
    pub fn stable_count(&self) -> usize {
        self.roots.iter().filter(|r| r.stable).count()
    }
}

/// A first-order discontinuity of the minimizer.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct JumpRecord {
    pub delta_star: f64,
    /// Minimizer approaching from below delta_star (upper branch).
    pub z_minus: f64,
    /// Minimizer approaching from above (lower branch).
    pub z_plus: f64,
}

/// Minimum-information curve over a delta grid.
#[derive(Debug, Clone)]
pub struct ReplicaCurve {
    pub deltas: Vec<f64>,
    pub i_rs: Vec<f64>,
    pub m_rs: Vec<f64>,
    /// Stable-branch count at each grid point.
    pub branch_counts: Vec<usize>,
    /// Discontinuities localized between grid points; at most one for priors
    /// passing the crossing check, but a grid sweep may cross several.
    pub jumps: Vec<JumpRecord>,
}

/// A plateau of the inverse-MMSE curve: the z interval skipped by the jump.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Plateau {
    pub delta_star: f64,
    pub z_low: f64,
    pub z_high: f64,
}

/// Verdict on the crossing count between the inverse minimizer curve and the
/// fixed-point curve.
#[derive(Debug, Clone, Serialize)]
pub struct CrossingReport {
    /// z locations of strict sign changes, all plateaus combined.
    pub crossings: Vec<f64>,
    pub is_single_crossing: bool,
    pub plateaus: Vec<Plateau>,
    /// Interior zeros without a sign change; reported, not counted.
    pub tangential_touches: Vec<f64>,
    pub delta_max: f64,
    /// Exactly one stable branch at delta_max, so no plateau opens beyond
    /// the scanned range.
    pub tail_closed: bool,
}

fn require_nonneg(name: &'static str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(CoreError::OutOfRange {
            name,
            value: v,
            reason: "must be finite and nonnegative".into(),
        });
    }
    Ok(())
}

/// Evaluate the potential and both partial derivatives.
pub fn potential(p: &Prior, delta: f64, z: f64) -> Result<PotentialPoint> {
    require_nonneg("delta", delta)?;
    require_nonneg("z", z)?;
    let opz = 1.0 + z;
    let s = delta / opz;
    let i = channel::i_x(p, s)?;
    let m = channel::mmse_x(p, s)?;
    let penalty = 0.5 * delta * (opz.ln() - z / opz);
    Ok(PotentialPoint {
        delta,
        z,
        value: i + penalty,
        z_derivative: delta / (2.0 * opz * opz) * (z - m),
        delta_derivative: 0.5 * opz.ln() + (m - z) / (2.0 * opz),
    })
}

/// z grid used by the scans: `n` points uniform in log(1+z).
fn z_grid(var: f64, n: usize) -> Vec<f64> {
    let lo = Z_FLOOR.ln_1p();
    let hi = var.ln_1p();
    (0..n)
        .map(|i| {
            let t = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            t.exp_m1()
        })
        .collect()
}

/// Fixed-point residual z - mmse_X(delta/(1+z)); negative at z = 0.
fn gap(p: &Prior, delta: f64, z: f64) -> Result<f64> {
    Ok(z - channel::mmse_x(p, delta / (1.0 + z))?)
}

/// Bisect a bracketed sign change of the gap to width `tol`.
fn bisect_root(p: &Prior, delta: f64, mut lo: f64, mut hi: f64, neg_at_lo: bool, tol: f64) -> Result<f64> {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let g = gap(p, delta, mid)?;
        if (g < 0.0) == neg_at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Roots of the fixed-point condition with stability flags, no potentials.
fn fixed_point_roots(p: &Prior, delta: f64) -> Result<Vec<(f64, bool)>> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(CoreError::OutOfRange {
            name: "delta",
            value: delta,
            reason: "must be positive".into(),
        });
    }
    let var = p.variance();
    let grid = z_grid(var, SCAN_POINTS);
    let gaps: Vec<Result<f64>> = par::map(grid.clone(), |z| gap(p, delta, z));
    let gaps: Vec<f64> = gaps.into_iter().collect::<Result<_>>()?;
    let tol = 1e-12 * (1.0 + var);

    let mut roots: Vec<(f64, bool)> = Vec::new();
    // The gap is -mmse_X(delta) < 0 at z = 0, so a positive value at the grid
    // floor means the smallest root sits below it.
    if gaps[0] > 0.0 {
        let z = bisect_root(p, delta, 0.0, grid[0], true, tol)?;
        roots.push((z, true));
    }
    for i in 0..grid.len() - 1 {
        let (ga, gb) = (gaps[i], gaps[i + 1]);
        if ga == 0.0 {
            roots.push((grid[i], gb > 0.0));
            continue;
        }
        if ga.signum() * gb.signum() < 0.0 {
            // One refinement round: split the cell and make sure it holds a
            // single crossing before trusting the bracket.
            let (a, b) = (grid[i], grid[i + 1]);
            let mut sub = Vec::with_capacity(9);
            sub.push(ga);
            for k in 1..8 {
                sub.push(gap(p, delta, a + (b - a) * k as f64 / 8.0)?);
            }
            sub.push(gb);
            let changes = sub
                .windows(2)
                .filter(|w| w[0].signum() * w[1].signum() < 0.0)
                .count();
            if changes > 1 {
                return Err(CoreError::GridTooCoarse {
                    z: 0.5 * (a + b),
                });
            }
            let k = sub
                .windows(2)
                .position(|w| w[0].signum() * w[1].signum() < 0.0)
                .unwrap();
            let lo = a + (b - a) * k as f64 / 8.0;
            let hi = a + (b - a) * (k + 1) as f64 / 8.0;
            let z = bisect_root(p, delta, lo, hi, ga < 0.0, tol)?;
            roots.push((z, ga < 0.0));
        }
    }
    Ok(roots)
}

/// All fixed points at `delta`, with the potential evaluated at each root.
pub fn fixed_points(p: &Prior, delta: f64) -> Result<FixedPointSet> {
    let roots = fixed_point_roots(p, delta)?;
    let pts: Vec<Result<FixedPoint>> = par::map(roots, |(z, stable)| {
        Ok(FixedPoint {
            z,
            potential: potential(p, delta, z)?.value,
            stable,
        })
    });
    let roots = pts.into_iter().collect::<Result<_>>()?;
    Ok(FixedPointSet { delta, roots })
}

/// One curve point with branch bookkeeping; ties resolve to the lower branch.
#[derive(Debug, Clone, Copy)]
pub struct ReplicaPoint {
    pub i_rs: f64,
    pub m_rs: f64,
    pub branch_count: usize,
    /// Present when two branches agree within the tie tolerance.
    pub tie: Option<JumpRecord>,
}

/// Global minimum of the potential over z >= 0 at one delta.
pub fn replica_point(p: &Prior, delta: f64) -> Result<ReplicaPoint> {
    require_nonneg("delta", delta)?;
    if delta == 0.0 {
        return Ok(ReplicaPoint {
            i_rs: 0.0,
            m_rs: p.variance(),
            branch_count: 1,
            tie: None,
        });
    }
    let set = fixed_points(p, delta)?;
    let stable: Vec<&FixedPoint> = set.roots.iter().filter(|r| r.stable).collect();
    debug_assert!(!stable.is_empty());
    let best = stable
        .iter()
        .min_by(|a, b| a.potential.total_cmp(&b.potential))
        .unwrap();
    // A near-tie between distinct branches marks the transition point.
    let mut tie = None;
    for r in &stable {
        if r.z != best.z
            && (r.potential - best.potential).abs() < TIE_TOL_NATS
            && (r.z - best.z).abs() > 1e-6 * (1.0 + best.z)
        {
            tie = Some(JumpRecord {
                delta_star: delta,
                z_minus: best.z.max(r.z),
                z_plus: best.z.min(r.z),
            });
        }
    }
    // Lower branch carries the value on a tie.
    let (i_rs, m_rs) = match tie {
        Some(j) => (best.potential, j.z_plus),
        None => (best.potential, best.z),
    };
    Ok(ReplicaPoint {
        i_rs,
        m_rs,
        branch_count: stable.len(),
        tie,
    })
}

/// Minimum information and minimizing z; a tie at the transition is an error
/// carrying both minimizers.
pub fn replica_pair(p: &Prior, delta: f64) -> Result<(f64, f64)> {
    let pt = replica_point(p, delta)?;
    if let Some(j) = pt.tie {
        return Err(CoreError::TieAtMinimum {
            z_low: j.z_plus,
            z_high: j.z_minus,
            value: pt.i_rs,
        });
    }
    Ok((pt.i_rs, pt.m_rs))
}

/// Localize a minimizer discontinuity inside (lo, hi) by bisecting the
/// predicate "minimizer below z_ref", which flips exactly once.
fn bisect_jump(p: &Prior, mut lo: f64, mut hi: f64, z_ref: f64, tol: f64) -> Result<f64> {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if replica_point(p, mid)?.m_rs <= z_ref {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The two tied stable minimizers at a transition point.
fn tied_pair(p: &Prior, delta_star: f64) -> Result<Option<(f64, f64, f64)>> {
    let set = fixed_points(p, delta_star)?;
    let stable: Vec<&FixedPoint> = set.roots.iter().filter(|r| r.stable).collect();
    if stable.len() < 2 {
        return Ok(None);
    }
    let best = stable
        .iter()
        .min_by(|a, b| a.potential.total_cmp(&b.potential))
        .unwrap();
    let partner = stable
        .iter()
        .filter(|r| r.z != best.z)
        .min_by(|a, b| a.potential.total_cmp(&b.potential))
        .unwrap();
    // Bracket width 1e-6 in delta keeps the branch values within ~1e-4 nats
    // of each other at a genuine transition; anything larger is a steep but
    // continuous stretch.
    if (partner.potential - best.potential).abs() > 1e-4 {
        return Ok(None);
    }
    let (z_lo, z_hi) = if best.z < partner.z {
        (best.z, partner.z)
    } else {
        (partner.z, best.z)
    };
    Ok(Some((z_lo, z_hi, best.potential)))
}

/// Evaluate the curve over an increasing delta grid, recording jumps.
pub fn replica_curve(p: &Prior, deltas: &[f64]) -> Result<ReplicaCurve> {
    if deltas.is_empty() {
        return Err(CoreError::DomainError("empty delta grid".into()));
    }
    if deltas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CoreError::DomainError(
            "delta grid must be strictly increasing".into(),
        ));
    }
    require_nonneg("delta", deltas[0])?;

    let pts: Vec<Result<ReplicaPoint>> =
        par::map(deltas.to_vec(), |d| replica_point(p, d));
    let pts: Vec<ReplicaPoint> = pts.into_iter().collect::<Result<_>>()?;

    let mut jumps: Vec<JumpRecord> = Vec::new();
    for pt in &pts {
        if let Some(j) = pt.tie {
            jumps.push(j);
        }
    }
    for i in 0..pts.len() - 1 {
        let (za, zb) = (pts[i].m_rs, pts[i + 1].m_rs);
        // Candidate: a drop too steep to be branch drift at this grid scale.
        if za - zb > 0.2 * za {
            let z_ref = ((1.0 + za).ln() + (1.0 + zb).ln()) / 2.0;
            let z_ref = z_ref.exp() - 1.0;
            let d = bisect_jump(p, deltas[i], deltas[i + 1], z_ref, 1e-6)?;
            if let Some((z_lo, z_hi, _)) = tied_pair(p, d)? {
                if jumps
                    .iter()
                    .all(|j| (j.delta_star - d).abs() > 1e-5 * (1.0 + d))
                {
                    jumps.push(JumpRecord {
                        delta_star: d,
                        z_minus: z_hi,
                        z_plus: z_lo,
                    });
                }
            }
        }
    }
    jumps.sort_by(|a, b| a.delta_star.total_cmp(&b.delta_star));

    Ok(ReplicaCurve {
        deltas: deltas.to_vec(),
        i_rs: pts.iter().map(|q| q.i_rs).collect(),
        m_rs: pts.iter().map(|q| q.m_rs).collect(),
        branch_counts: pts.iter().map(|q| q.branch_count).collect(),
        jumps,
    })
}

/// The measurement ratio at which z is a fixed point: (1+z) mmse_X^{-1}(z).
pub fn delta_fp(p: &Prior, z: f64) -> Result<f64> {
    Ok((1.0 + z) * channel::mmse_x_inv(p, z)?)
}

/// Iterate z <- mmse_X(delta/(1+z)) from z0 until |step| < tol.
pub fn se_iterate(
    p: &Prior,
    delta: f64,
    z0: f64,
    tol: f64,
    max_iters: usize,
) -> Result<(f64, usize)> {
    let (trace, converged) = se_trace(p, delta, z0, tol, max_iters)?;
    let last = *trace.last().unwrap();
    if !converged {
        return Err(CoreError::NoConvergence {
            last,
            iterations: trace.len() - 1,
        });
    }
    Ok((last, trace.len() - 1))
}

/// Full iterate sequence starting at z0; the flag reports convergence.
pub fn se_trace(
    p: &Prior,
    delta: f64,
    z0: f64,
    tol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, bool)> {
    require_nonneg("delta", delta)?;
    let var = p.variance();
    if !(0.0..=var).contains(&z0) {
        return Err(CoreError::OutOfRange {
            name: "z0",
            value: z0,
            reason: format!("must lie in [0, {var}]"),
        });
    }
    if !(tol > 0.0) {
        return Err(CoreError::OutOfRange {
            name: "tol",
            value: tol,
            reason: "must be positive".into(),
        });
    }
    let mut trace = vec![z0];
    let mut z = z0;
    for _ in 0..max_iters {
        let next = channel::mmse_x(p, delta / (1.0 + z))?;
        trace.push(next);
        let step = (next - z).abs();
        z = next;
        if step < tol {
            return Ok((trace, true));
        }
    }
    Ok((trace, false))
}

/// Windows of the scan grid where more than one stable branch coexists.
/// Returned as (lo, hi) delta pairs extended one grid step on each side.
fn stable_windows(p: &Prior, lo: f64, hi: f64, n: usize) -> Result<Vec<(f64, f64)>> {
    let lo = lo.max(1e-9);
    if !(hi > lo) {
        return Err(CoreError::DomainError(format!(
            "bad delta range [{lo}, {hi}]"
        )));
    }
    let grid: Vec<f64> = (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect();
    let counts: Vec<Result<usize>> = par::map(grid.clone(), |d| {
        Ok(fixed_point_roots(p, d)?.iter().filter(|r| r.1).count())
    });
    let counts: Vec<usize> = counts.into_iter().collect::<Result<_>>()?;

    let mut windows = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..n {
        if counts[i] > 1 && start.is_none() {
            start = Some(i);
        }
        if (counts[i] <= 1 || i == n - 1) && start.is_some() {
            let s = start.take().unwrap();
            let end = if counts[i] > 1 { i } else { i - 1 };
            let a = if s == 0 { grid[0] } else { grid[s - 1] };
            let b = if end + 1 < n { grid[end + 1] } else { grid[end] };
            windows.push((a, b));
        }
    }
    Ok(windows)
}

/// Equal-minima point inside a window known to contain a branch swap.
fn transition_in_window(p: &Prior, lo: f64, hi: f64) -> Result<Option<JumpRecord>> {
    // Reference z separating the branch clusters, taken at the window middle.
    let mid = (lo * hi).sqrt();
    let roots = fixed_point_roots(p, mid)?;
    let stable: Vec<f64> = roots.iter().filter(|r| r.1).map(|r| r.0).collect();
    let z_ref = if stable.len() >= 2 {
        let a = (1.0 + stable[0]).ln();
        let b = (1.0 + stable[stable.len() - 1]).ln();
        ((a + b) / 2.0).exp() - 1.0
    } else {
        // Window edges straddle the fold; fall back to the minimizers at the
        // edges themselves.
        let za = replica_point(p, lo)?.m_rs;
        let zb = replica_point(p, hi)?.m_rs;
        if za <= zb {
            return Ok(None);
        }
        (((1.0 + za).ln() + (1.0 + zb).ln()) / 2.0).exp() - 1.0
    };
    let below_lo = replica_point(p, lo)?.m_rs <= z_ref;
    let below_hi = replica_point(p, hi)?.m_rs <= z_ref;
    if below_lo == below_hi {
        // The global minimizer never swaps across this fold.
        return Ok(None);
    }
    let d = bisect_jump(p, lo, hi, z_ref, 1e-12 * (1.0 + hi))?;
    match tied_pair(p, d)? {
        Some((z_lo, z_hi, _)) => Ok(Some(JumpRecord {
            delta_star: d,
            z_minus: z_hi,
            z_plus: z_lo,
        })),
        None => Ok(None),
    }
}

/// Smallest equal-minima transition on the range, if any branch swap exists.
pub fn phase_transition(
    p: &Prior,
    lo: f64,
    hi: f64,
    scan_points: usize,
) -> Result<Option<f64>> {
    let n = scan_points.max(16);
    for (a, b) in stable_windows(p, lo, hi, n)? {
        if let Some(j) = transition_in_window(p, a, b)? {
            return Ok(Some(j.delta_star));
        }
    }
    Ok(None)
}

/// Count strict sign changes of delta_star - delta_FP(z) inside each jump
/// plateau; off-plateau the two curves coincide identically.
pub fn single_crossing_check(
    p: &Prior,
    z_grid_size: usize,
    delta_max: f64,
) -> Result<CrossingReport> {
    let var = p.variance();
    let tail = replica_point(p, delta_max)?;
    let tail_closed = tail.branch_count == 1;
    let z_min = tail.m_rs;

    // Locate every plateau on (0, delta_max].
    let mut plateaus: Vec<Plateau> = Vec::new();
    for (a, b) in stable_windows(p, 1e-3, delta_max, SCAN_POINTS)? {
        if let Some(j) = transition_in_window(p, a, b)? {
            plateaus.push(Plateau {
                delta_star: j.delta_star,
                z_low: j.z_plus,
                z_high: j.z_minus,
            });
        }
    }

    let mut crossings: Vec<f64> = Vec::new();
    let mut touches: Vec<f64> = Vec::new();
    let base_grid = z_grid_size.max(64);

    for pl in &plateaus {
        // Grid over the plateau interior, log(1+z)-uniform, at least 64
        // points and at least the share a global grid of the requested size
        // would put here.
        let lo = pl.z_low.max(z_min).max(Z_FLOOR);
        let hi = pl.z_high.min(var);
        if !(hi > lo) {
            continue;
        }
        let span = ((1.0 + hi).ln() - (1.0 + lo).ln()) / ((1.0 + var).ln() - (1.0 + z_min.max(Z_FLOOR)).ln());
        let n = ((base_grid as f64 * span) as usize).max(64);
        let zs: Vec<f64> = (1..n)
            .map(|i| {
                let t = (1.0 + lo).ln() + ((1.0 + hi).ln() - (1.0 + lo).ln()) * i as f64 / n as f64;
                t.exp_m1()
            })
            .collect();
        let ds: Vec<Result<f64>> = par::map(zs.clone(), |z| Ok(pl.delta_star - delta_fp(p, z)?));
        let ds: Vec<f64> = ds.into_iter().collect::<Result<_>>()?;

        // Signs with a dead zone: |D| below tolerance is a touch candidate.
        let touch_tol = 1e-9 * (1.0 + pl.delta_star);
        let signs: Vec<i8> = ds
            .iter()
            .map(|&d| {
                if d > touch_tol {
                    1
                } else if d < -touch_tol {
                    -1
                } else {
                    0
                }
            })
            .collect();

        let mut last_sign: i8 = 0;
        let mut last_idx: Option<usize> = None;
        let mut zero_run_start: Option<usize> = None;
        let mut changes_here: Vec<usize> = Vec::new();
        for (i, &s) in signs.iter().enumerate() {
            if s == 0 {
                if zero_run_start.is_none() {
                    zero_run_start = Some(i);
                }
                continue;
            }
            if last_sign != 0 && s != last_sign {
                changes_here.push(i);
                crossings.push(0.5 * (zs[last_idx.unwrap()] + zs[i]));
            } else if last_sign != 0 && s == last_sign {
                if let Some(zr) = zero_run_start {
                    // Zeros flanked by equal signs: tangential contact.
                    touches.push(zs[(zr + i - 1) / 2]);
                }
            }
            zero_run_start = None;
            last_sign = s;
            last_idx = Some(i);
        }

        // Two sign changes closer than 3 cells cannot be resolved reliably.
        for w in changes_here.windows(2) {
            if w[1] - w[0] < 3 {
                return Err(CoreError::GridTooCoarse {
                    z: zs[w[0]],
                });
            }
        }
    }

    crossings.sort_by(f64::total_cmp);
    let is_single = crossings.len() <= 1;
    Ok(CrossingReport {
        crossings,
        is_single_crossing: is_single,
        plateaus,
        tangential_touches: touches,
        delta_max,
        tail_closed,
    })
}
