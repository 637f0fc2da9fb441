//! Finite-size sandwiches and gap bounds built from chi-square expectations,
//! plus the explicit large-ratio boundary bound.

use std::cell::RefCell;
use std::f64::consts::LN_2;

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{CoreError, Result};
use crate::prior::Prior;
use crate::quad;

/// What a [`SandwichBound`] brackets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    MiNatsTotal,
    MmsePerCoordinate,
}

/// Two-sided bracket on a finite-size quantity. `lower <= upper` always.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SandwichBound {
    pub n: u32,
    pub m: u32,
    pub lower: f64,
    pub upper: f64,
    pub kind: BoundKind,
}

impl SandwichBound {
    fn new(n: u32, m: u32, lower: f64, upper: f64, kind: BoundKind) -> Self {
        debug_assert!(lower <= upper + 1e-9, "inverted sandwich: {lower} > {upper}");
        SandwichBound { n, m, lower, upper, kind }
    }
}

/// E[f(chi2_k / n)] by quadrature against the chi-square density.
///
/// Substituting x = u^2 removes the density's edge singularity, so the
/// integrand is smooth on [0, sqrt(k + 12 sqrt(2k))]. The tolerance is
/// relative: a rough pass fixes the scale, a second adaptive pass refines.
pub fn chi2_expect(
    p: &Prior,
    k: u32,
    n: u32,
    f: fn(&Prior, f64) -> Result<f64>,
) -> Result<f64> {
    if k < 1 {
        return Err(CoreError::OutOfRange {
            name: "k",
            value: k as f64,
            reason: "need at least one degree of freedom".into(),
        });
    }
    if n < 1 {
        return Err(CoreError::OutOfRange {
            name: "n",
            value: n as f64,
            reason: "scale must be positive".into(),
        });
    }
    let kf = k as f64;
    let nf = n as f64;
    let u_max = (kf + 12.0 * (2.0 * kf).sqrt()).sqrt();
    let ln_norm = 0.5 * kf * LN_2 + ln_gamma(0.5 * kf);

    let inner_err: RefCell<Option<CoreError>> = RefCell::new(None);
    let g = |u: f64| -> f64 {
        let ln_weight = if k == 1 { 0.0 } else { (kf - 1.0) * u.ln() };
        let w = (ln_weight - 0.5 * u * u - ln_norm).exp() * 2.0;
        if w == 0.0 {
            return 0.0;
        }
        match f(p, u * u / nf) {
            Ok(v) => w * v,
            Err(e) => {
                inner_err.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    };

    let rule = quad::cached_rule(32);
    let rough = quad::fixed_panels(&rule, &g, 0.0, u_max, 64);
    if let Some(e) = inner_err.borrow_mut().take() {
        return Err(e);
    }
    let abs_tol = (1e-8 * rough.abs()).max(1e-16);
    let value = quad::integrate_with_rule(&rule, &g, 0.0, u_max, abs_tol)?;
    if let Some(e) = inner_err.borrow_mut().take() {
        return Err(e);
    }
    Ok(value)
}

/// Bracket on the total mutual information of an n-signal, m-measurement
/// instance, in nats. The lower end telescopes chi-square expectations of
/// the scalar information curve; the upper end is n copies of the largest.
pub fn mi_sandwich(p: &Prior, n: u32, m: u32) -> Result<SandwichBound> {
    if n < 1 {
        return Err(CoreError::OutOfRange {
            name: "n",
            value: n as f64,
            reason: "need at least one coordinate".into(),
        });
    }
    if m == 0 {
        return Ok(SandwichBound::new(n, 0, 0.0, 0.0, BoundKind::MiNatsTotal));
    }
    let mut lower = 0.0;
    for k in 1..=n.min(m) {
        lower += chi2_expect(p, m - k + 1, n, crate::channel::i_x)?;
    }
    let upper = n as f64 * chi2_expect(p, m, n, crate::channel::i_x)?;
    Ok(SandwichBound::new(n, m, lower, upper, BoundKind::MiNatsTotal))
}

/// Bracket on the per-coordinate minimum mean squared error. The upper end
/// needs m >= n; below that the prior variance is the only valid cap.
pub fn mmse_sandwich(p: &Prior, n: u32, m: u32) -> Result<SandwichBound> {
    if n < 1 {
        return Err(CoreError::OutOfRange {
            name: "n",
            value: n as f64,
            reason: "need at least one coordinate".into(),
        });
    }
    let var = p.variance();
    let lower = if m == 0 {
        var
    } else {
        chi2_expect(p, m, n, crate::channel::mmse_x)?
    };
    let upper = if m >= n {
        chi2_expect(p, m - n + 1, n, crate::channel::mmse_x)?
    } else {
        var
    };
    Ok(SandwichBound::new(n, m, lower, upper, BoundKind::MmsePerCoordinate))
}

/// Worst-case distance of the finite-size quantities from their asymptotes:
/// (per-coordinate MI gap in nats, MMSE gap in squared units). Valid for
/// m >= n + 2.
pub fn gap_bounds(_p: &Prior, n: u32, m: u32) -> Result<(f64, f64)> {
    if n < 1 {
        return Err(CoreError::OutOfRange {
            name: "n",
            value: n as f64,
            reason: "need at least one coordinate".into(),
        });
    }
    if m < n + 2 {
        return Err(CoreError::DomainError(format!(
            "gap bounds need m >= n + 2, got n = {n}, m = {m}"
        )));
    }
    let nf = n as f64;
    let mf = m as f64;
    let core = (nf + 1.0) / (mf - nf - 1.0) + (2.0 / (mf - 2.0)).sqrt();
    Ok((0.5 * core, 12.0 * nf / mf * core))
}

/// Explicit bound on the distance between the finite-size information rate
/// and its asymptote on the high-ratio side, in nats per coordinate.
pub fn boundary_bound(delta: f64) -> Result<f64> {
    if !(delta >= 4.0) {
        return Err(CoreError::DomainError(format!(
            "boundary bound holds for ratios >= 4, got {delta}"
        )));
    }
    Ok((4.0 + std::f64::consts::SQRT_2) / delta.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel;
    use rand::SeedableRng;
    use rand_distr::{ChiSquared, Distribution};

    fn mc_chi2_mean(k: f64, draws: usize, seed: u64, f: impl Fn(f64) -> f64) -> (f64, f64) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dist = ChiSquared::new(k).unwrap();
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..draws {
            let v = f(dist.sample(&mut rng));
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / draws as f64;
        let var = (sumsq / draws as f64 - mean * mean).max(0.0);
        (mean, (var / draws as f64).sqrt())
    }

    #[test]
    fn chi2_against_monte_carlo() {
        let p = Prior::gaussian_unit();
        let q = chi2_expect(&p, 8, 4, channel::i_x).unwrap();
        let (mc, se) = mc_chi2_mean(8.0, 10_000_000, 911, |x| 0.5 * (1.0 + x / 4.0).ln());
        assert!((q - mc).abs() < 5.0 * se, "quad {q} vs mc {mc} +- {se}");
    }

    #[test]
    fn chi2_concentrates_at_large_dof() {
        let p = Prior::gaussian_unit();
        let q = chi2_expect(&p, 400, 100, channel::mmse_x).unwrap();
        let asym = channel::mmse_x(&p, 4.0).unwrap();
        assert!((q - asym).abs() < 1e-2, "{q} vs {asym}");
        let (mc, se) = mc_chi2_mean(400.0, 1_000_000, 912, |x| 1.0 / (1.0 + x / 100.0));
        assert!((q - mc).abs() < 5.0 * se, "quad {q} vs mc {mc} +- {se}");
    }

    #[test]
    fn chi2_respects_concavity() {
        for (p, k, n) in [
            (Prior::bpsk(), 4u32, 2u32),
            (Prior::gaussian_unit(), 3, 5),
            (Prior::new(&[(0.3, -2.0, 0.5), (0.7, 1.0, 1.5)]).unwrap(), 8, 4),
        ] {
            let e = chi2_expect(&p, k, n, channel::i_x).unwrap();
            let at_mean = channel::i_x(&p, k as f64 / n as f64).unwrap();
            assert!(e <= at_mean + 1e-9, "{e} > {at_mean} for k={k} n={n}");
        }
    }

    #[test]
    fn chi2_rejects_zero_dof() {
        let p = Prior::gaussian_unit();
        assert!(chi2_expect(&p, 0, 4, channel::i_x).is_err());
        assert!(chi2_expect(&p, 4, 0, channel::i_x).is_err());
    }

    #[test]
    fn mi_sandwich_shape() {
        let p = Prior::gaussian_unit();
        let b = mi_sandwich(&p, 4, 0).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 0.0));

        let b = mi_sandwich(&p, 4, 4).unwrap();
        assert!(b.lower <= b.upper);
        assert!(b.lower > 0.0);
        assert_eq!(b.kind, BoundKind::MiNatsTotal);

        let b = mi_sandwich(&Prior::bpsk(), 8, 16).unwrap();
        assert!(b.lower <= b.upper);
        // Upper end is n times one scalar curve value at the full dof count.
        let one = chi2_expect(&Prior::bpsk(), 16, 8, channel::i_x).unwrap();
        assert!((b.upper - 8.0 * one).abs() < 1e-12);
    }

    #[test]
    fn mmse_sandwich_shape() {
        let p = Prior::gaussian_unit();
        let b = mmse_sandwich(&p, 4, 0).unwrap();
        assert_eq!((b.lower, b.upper), (1.0, 1.0));

        // Below m = n the only upper bound is the prior variance.
        let b = mmse_sandwich(&p, 4, 2).unwrap();
        assert_eq!(b.upper, 1.0);
        assert!(b.lower < 1.0);

        // At m = 3n the pair sits a little above the limiting curve and
        // tightens toward it, never below.
        let b = mmse_sandwich(&p, 4, 12).unwrap();
        let asym = channel::mmse_x(&p, 3.0).unwrap();
        assert!(b.lower >= asym - 1e-9);
        assert!(b.lower <= asym + 0.05, "lower {} vs asym {asym}", b.lower);
        assert!(b.upper <= asym + 0.15, "upper {} vs asym {asym}", b.upper);
    }

    #[test]
    fn gap_bounds_frozen_values() {
        let p = Prior::gaussian_unit();
        let (mi, mmse) = gap_bounds(&p, 1, 100).unwrap();
        assert!((mi - 4.0 / 49.0).abs() < 1e-15);
        assert!((mmse - 0.12 * 8.0 / 49.0).abs() < 1e-15);

        // Validity boundary and the domain error just below it.
        let (mi, mmse) = gap_bounds(&p, 8, 10).unwrap();
        assert!(mi.is_finite() && mmse.is_finite());
        assert!((mi - 0.5 * (9.0 + 0.5)).abs() < 1e-12);
        assert!(matches!(
            gap_bounds(&p, 8, 9),
            Err(CoreError::DomainError(_))
        ));

        // Both gaps vanish as m grows.
        let (mi_far, mmse_far) = gap_bounds(&p, 1, 100_000).unwrap();
        assert!(mi_far < 1e-2 && mmse_far < 1e-2);
    }

    #[test]
    fn boundary_bound_frozen_values() {
        assert!((boundary_bound(4.0).unwrap() - 2.707_106_781_186_547_5).abs() < 1e-15);
        assert!((boundary_bound(16.0).unwrap() - 1.353_553_390_593_273_8).abs() < 1e-15);
        assert!(matches!(boundary_bound(3.9), Err(CoreError::DomainError(_))));
        let grid: Vec<f64> = (0..20).map(|i| 4.0 + i as f64).collect();
        for w in grid.windows(2) {
            assert!(boundary_bound(w[0]).unwrap() > boundary_bound(w[1]).unwrap());
        }
    }
}
