//! Single-letter AWGN channel functions.
//!
//! For Y = sqrt(s) X + N with N standard normal and X a finite mixture, the
//! output density f_Y is itself a finite Gaussian mixture, and the posterior
//! mean and variance given Y = y are closed-form mixture expressions. Every
//! quantity here is a 1-D integral against f_Y, taken over segments of
//! +/- `half_width` output standard deviations around each component mean.
//!
//! Pure Gaussian priors skip quadrature entirely: mmse = v/(1+sv),
//! I = log(1+sv)/2, and the conditional variance is deterministic.

use crate::error::{CoreError, Result};
use crate::prior::Prior;
use crate::quad;

const LN_2PI: f64 = 1.8378770664093453;

/// Knobs for the y-integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureConfig {
    /// Gauss-Legendre nodes per panel.
    pub nodes: usize,
    /// Segment half-width in output standard deviations.
    pub half_width: f64,
    /// Absolute tolerance for the panel-doubling test.
    pub abs_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            nodes: 32,
            half_width: 8.0,
            abs_tol: 1e-10,
        }
    }
}

impl QuadratureConfig {
    pub fn new(nodes: usize, half_width: f64, abs_tol: f64) -> Result<Self> {
        if nodes < 8 {
            return Err(CoreError::OutOfRange {
                name: "nodes",
                value: nodes as f64,
                reason: "need at least 8 nodes per panel".into(),
            });
        }
        if !(half_width > 0.0) {
            return Err(CoreError::OutOfRange {
                name: "half_width",
                value: half_width,
                reason: "must be positive".into(),
            });
        }
        if !(abs_tol > 0.0) {
            return Err(CoreError::OutOfRange {
                name: "abs_tol",
                value: abs_tol,
                reason: "must be positive".into(),
            });
        }
        Ok(QuadratureConfig {
            nodes,
            half_width,
            abs_tol,
        })
    }
}

/// One evaluation of both channel functions at a common SNR.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ChannelEval {
    pub s: f64,
    pub i_x: f64,
    pub mmse_x: f64,
}

/// Output-density pieces for one mixture component at SNR `s`.
struct OutComp {
    ln_w: f64,
    /// Component mean in output space, sqrt(s) * mu.
    center: f64,
    /// Output variance 1 + s * v.
    ovar: f64,
    /// Prior component mean and variance in signal space.
    mu: f64,
    v: f64,
}

struct Kernel {
    comps: Vec<OutComp>,
    sqrt_s: f64,
}

impl Kernel {
    fn new(p: &Prior, s: f64) -> Self {
        let sqrt_s = s.sqrt();
        let comps = p
            .components()
            .iter()
            .map(|c| OutComp {
                ln_w: c.weight.ln(),
                center: sqrt_s * c.mean,
                ovar: 1.0 + s * c.variance,
                mu: c.mean,
                v: c.variance,
            })
            .collect();
        Kernel { comps, sqrt_s }
    }

    /// log f_Y(y) and the posterior variance Var(X | Y = y).
    ///
    /// The posterior given the component is Gaussian; the total variance is
    /// the within-component part plus the between-component spread, which
    /// stays nonnegative term by term.
    fn log_density_and_var(&self, y: f64) -> (f64, f64) {
        let n = self.comps.len();
        let mut lw = [0.0f64; 8];
        let mut lw_heap;
        let lws: &mut [f64] = if n <= 8 {
            &mut lw[..n]
        } else {
            lw_heap = vec![0.0; n];
            &mut lw_heap
        };
        let mut max_lw = f64::NEG_INFINITY;
        for (i, c) in self.comps.iter().enumerate() {
            let d = y - c.center;
            let l = c.ln_w - 0.5 * d * d / c.ovar - 0.5 * (LN_2PI + c.ovar.ln());
            lws[i] = l;
            if l > max_lw {
                max_lw = l;
            }
        }
        if max_lw == f64::NEG_INFINITY {
            return (f64::NEG_INFINITY, 0.0);
        }
        let mut sum = 0.0;
        for l in lws.iter() {
            sum += (l - max_lw).exp();
        }
        let log_f = max_lw + sum.ln();
        // Posterior component responsibilities and moments.
        let mut mbar = 0.0;
        for (i, c) in self.comps.iter().enumerate() {
            let r = (lws[i] - log_f).exp();
            let pm = c.mu + self.sqrt_s * c.v * (y - c.center) / c.ovar;
            lws[i] = r; // reuse slot: responsibility
            mbar += r * pm;
        }
        let mut var = 0.0;
        for (i, c) in self.comps.iter().enumerate() {
            let r = lws[i];
            let pm = c.mu + self.sqrt_s * c.v * (y - c.center) / c.ovar;
            let pv = c.v / c.ovar;
            let dm = pm - mbar;
            var += r * (pv + dm * dm);
        }
        (log_f, var)
    }

    fn segments(&self, half_width: f64) -> Vec<(f64, f64)> {
        let ivs = self
            .comps
            .iter()
            .map(|c| {
                let sd = c.ovar.sqrt();
                (c.center - half_width * sd, c.center + half_width * sd)
            })
            .collect();
        quad::merge_intervals(ivs)
    }
}

fn require_snr(s: f64, strict: bool) -> Result<()> {
    let bad = if strict { !(s > 0.0) } else { !(s >= 0.0) };
    if bad || !s.is_finite() {
        return Err(CoreError::OutOfRange {
            name: "s",
            value: s,
            reason: if strict {
                "snr must be positive".into()
            } else {
                "snr must be nonnegative".into()
            },
        });
    }
    Ok(())
}

/// MMSE of X from Y = sqrt(s) X + N.
pub fn mmse_x(p: &Prior, s: f64) -> Result<f64> {
    mmse_x_with(p, s, &QuadratureConfig::default())
}

pub fn mmse_x_with(p: &Prior, s: f64, cfg: &QuadratureConfig) -> Result<f64> {
    require_snr(s, false)?;
    if s == 0.0 {
        return Ok(p.variance());
    }
    if p.is_pure_gaussian() {
        let v = p.components()[0].variance;
        return Ok(v / (1.0 + s * v));
    }
    let k = Kernel::new(p, s);
    let rule = quad::cached_rule(cfg.nodes);
    let f = |y: f64| {
        let (log_f, var) = k.log_density_and_var(y);
        if log_f == f64::NEG_INFINITY {
            0.0
        } else {
            log_f.exp() * var
        }
    };
    quad::integrate_segments_with_rule(&rule, &f, &k.segments(cfg.half_width), cfg.abs_tol)
}

/// Mutual information I(X; sqrt(s) X + N) in nats.
pub fn i_x(p: &Prior, s: f64) -> Result<f64> {
    i_x_with(p, s, &QuadratureConfig::default())
}

pub fn i_x_with(p: &Prior, s: f64, cfg: &QuadratureConfig) -> Result<f64> {
    require_snr(s, false)?;
    if s == 0.0 {
        return Ok(0.0);
    }
    if p.is_pure_gaussian() {
        let v = p.components()[0].variance;
        return Ok(0.5 * (1.0 + s * v).ln());
    }
    let k = Kernel::new(p, s);
    let rule = quad::cached_rule(cfg.nodes);
    let f = |y: f64| {
        let (log_f, _) = k.log_density_and_var(y);
        if log_f == f64::NEG_INFINITY {
            0.0
        } else {
            -log_f.exp() * log_f
        }
    };
    let h_y = quad::integrate_segments_with_rule(&rule, &f, &k.segments(cfg.half_width), cfg.abs_tol)?;
    // I = h(Y) - h(Y|X) = E[-log f_Y] - log(2*pi*e)/2.
    Ok(h_y - 0.5 * (LN_2PI + 1.0))
}

/// Both channel functions at once.
pub fn channel_eval(p: &Prior, s: f64) -> Result<ChannelEval> {
    Ok(ChannelEval {
        s,
        i_x: i_x(p, s)?,
        mmse_x: mmse_x(p, s)?,
    })
}

/// d/ds mmse_X(s) = -E[(Var(X|Y))^2]; always nonpositive.
pub fn mmse_x_prime(p: &Prior, s: f64) -> Result<f64> {
    mmse_x_prime_with(p, s, &QuadratureConfig::default())
}

pub fn mmse_x_prime_with(p: &Prior, s: f64, cfg: &QuadratureConfig) -> Result<f64> {
    require_snr(s, true)?;
    if p.is_pure_gaussian() {
        let v = p.components()[0].variance;
        let m = v / (1.0 + s * v);
        return Ok(-m * m);
    }
    let k = Kernel::new(p, s);
    let rule = quad::cached_rule(cfg.nodes);
    let f = |y: f64| {
        let (log_f, var) = k.log_density_and_var(y);
        if log_f == f64::NEG_INFINITY {
            0.0
        } else {
            log_f.exp() * var * var
        }
    };
    let second = quad::integrate_segments_with_rule(&rule, &f, &k.segments(cfg.half_width), cfg.abs_tol)?;
    Ok(-second)
}

/// Solve mmse_X(s) = z for s on (0, Var(X)]; monotone bisection.
pub fn mmse_x_inv(p: &Prior, z: f64) -> Result<f64> {
    let var = p.variance();
    if !(z > 0.0) || z > var {
        return Err(CoreError::OutOfRange {
            name: "z",
            value: z,
            reason: format!("target mmse must lie in (0, {var}]"),
        });
    }
    if z == var {
        return Ok(0.0);
    }
    if p.is_pure_gaussian() {
        let v = p.components()[0].variance;
        return Ok(1.0 / z - 1.0 / v);
    }
    // Tighter integration than the residual target, so bisection noise
    // stays below it.
    let cfg = QuadratureConfig {
        abs_tol: (1e-11 * var).min(1e-10).max(1e-14),
        ..QuadratureConfig::default()
    };
    let residual_tol = 1e-10 * var;
    // mmse_X(s) <= 1/s, so s = 2/z already overshoots the target.
    let mut lo = 0.0;
    let mut hi = (2.0 / z).max(1.0);
    while mmse_x_with(p, hi, &cfg)? >= z {
        hi *= 2.0;
    }
    let mut best = hi;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let m = mmse_x_with(p, mid, &cfg)?;
        if (m - z).abs() < residual_tol {
            return Ok(mid);
        }
        if m > z {
            lo = mid;
        } else {
            hi = mid;
        }
        best = mid;
    }
    Err(CoreError::NoConvergence {
        last: best,
        iterations: 200,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT_2PI: f64 = 2.5066282746310002;

    fn phi(y: f64) -> f64 {
        (-0.5 * y * y).exp() / SQRT_2PI
    }

    /// Composite Simpson; deliberately a different integration scheme from
    /// the library's Gauss-Legendre panels.
    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        assert!(n % 2 == 0);
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let c = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += c * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    /// BPSK mmse via the tanh identity: 1 - E[tanh(s + sqrt(s) Z)].
    fn bpsk_mmse_oracle(s: f64) -> f64 {
        1.0 - simpson(|y| (s + s.sqrt() * y).tanh() * phi(y), -14.0, 14.0, 8000)
    }

    /// log cosh(u) without overflow.
    fn lcosh(u: f64) -> f64 {
        u.abs() + (-2.0 * u.abs()).exp().ln_1p() - std::f64::consts::LN_2
    }

    /// BPSK MI via s - E[log cosh(s + sqrt(s) Z)].
    fn bpsk_mi_oracle(s: f64) -> f64 {
        s - simpson(|y| lcosh(s + s.sqrt() * y) * phi(y), -14.0, 14.0, 8000)
    }

    #[test]
    fn gaussian_closed_forms() {
        let p = Prior::gaussian_unit();
        assert!((mmse_x(&p, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((i_x(&p, 1.0).unwrap() - 0.5 * 2.0_f64.ln()).abs() < 1e-15);
        assert!((mmse_x_prime(&p, 1.0).unwrap() + 0.25).abs() < 1e-15);
        assert!((mmse_x_inv(&p, 0.5).unwrap() - 1.0).abs() < 1e-15);

        // Mean offset changes nothing; variance 2 scales the forms.
        let q = Prior::new(&[(1.0, 3.0, 2.0)]).unwrap();
        assert!((mmse_x(&q, 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((i_x(&q, 0.5).unwrap() - 0.5 * 2.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_snr_limits() {
        for p in [
            Prior::bpsk(),
            Prior::bernoulli_gaussian(0.1, 10.0).unwrap(),
            Prior::figure1(0.1).unwrap(),
        ] {
            assert_eq!(i_x(&p, 0.0).unwrap(), 0.0);
            assert!((mmse_x(&p, 0.0).unwrap() - p.variance()).abs() < 1e-12 * p.variance());
        }
    }

    #[test]
    fn rejects_negative_snr() {
        let p = Prior::bpsk();
        assert!(matches!(
            mmse_x(&p, -0.5),
            Err(CoreError::OutOfRange { .. })
        ));
        assert!(matches!(
            mmse_x_prime(&p, 0.0),
            Err(CoreError::OutOfRange { .. })
        ));
    }

    #[test]
    fn bpsk_mmse_matches_tanh_identity() {
        // Frozen reference values from a 40-digit quadrature of the tanh
        // identity; the Simpson oracle below recomputes them independently.
        let cases = [
            (0.25, 0.79594573436649968744),
            (1.0, 0.44959950920667282971),
            (4.0, 0.068597408790738814024),
        ];
        let p = Prior::bpsk();
        for (s, frozen) in cases {
            let got = mmse_x(&p, s).unwrap();
            assert!((got - frozen).abs() < 1e-10, "s={s}: {got} vs {frozen}");
            let oracle = bpsk_mmse_oracle(s);
            assert!((got - oracle).abs() < 1e-9, "s={s}: {got} vs oracle {oracle}");
        }
    }

    #[test]
    fn bpsk_mi_matches_logcosh_identity() {
        let cases = [(1.0, 0.336830820346831612), (4.0, 0.63272019373686698166)];
        let p = Prior::bpsk();
        for (s, frozen) in cases {
            let got = i_x(&p, s).unwrap();
            assert!((got - frozen).abs() < 1e-10, "s={s}: {got} vs {frozen}");
            let oracle = bpsk_mi_oracle(s);
            assert!((got - oracle).abs() < 1e-9, "s={s}: {got} vs oracle {oracle}");
        }
        // Alphabet entropy cap.
        assert!(i_x(&p, 4.0).unwrap() < std::f64::consts::LN_2);
        assert!(i_x(&p, 100.0).unwrap() < std::f64::consts::LN_2);
    }

    #[test]
    fn mixture_reference_values() {
        // Two-Gaussian mixture 0.3 N(-2, 0.5) + 0.7 N(1, 1.5) at s = 0.7.
        let p = Prior::new(&[(0.3, -2.0, 0.5), (0.7, 1.0, 1.5)]).unwrap();
        let m = mmse_x(&p, 0.7).unwrap();
        let i = i_x(&p, 0.7).unwrap();
        let mp = mmse_x_prime(&p, 0.7).unwrap();
        assert!((m - 0.94621823449364114197).abs() < 1e-10, "{m}");
        assert!((i - 0.56910973065239373122).abs() < 1e-10, "{i}");
        assert!((mp + 0.95834700800278621475).abs() < 1e-9, "{mp}");
    }

    #[test]
    fn sparse_mixture_reference_values() {
        let p = Prior::bernoulli_gaussian(0.1, 10.0).unwrap();
        let m = mmse_x(&p, 1.0).unwrap();
        let i = i_x(&p, 1.0).unwrap();
        assert!((m - 0.20672436421374222269).abs() < 1e-10, "{m}");
        assert!((i - 0.23059052600915061588).abs() < 1e-10, "{i}");
    }

    #[test]
    fn wide_three_component_mixture() {
        // Widely separated means at small snr: segments overlap and merge.
        let p = Prior::figure1(0.1).unwrap();
        let s = 2e-4;
        let m = mmse_x(&p, s).unwrap();
        let i = i_x(&p, s).unwrap();
        assert!((m - 2299.6436048248770481).abs() < 1e-6, "{m}");
        assert!((i - 0.53295999599840072943).abs() < 1e-9, "{i}");
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let h = 1e-4;
        for (p, s) in [
            (Prior::bpsk(), 1.0),
            (Prior::new(&[(0.3, -2.0, 0.5), (0.7, 1.0, 1.5)]).unwrap(), 0.7),
        ] {
            let fd = (mmse_x(&p, s + h).unwrap() - mmse_x(&p, s - h).unwrap()) / (2.0 * h);
            let an = mmse_x_prime(&p, s).unwrap();
            assert!((fd - an).abs() < 1e-6, "{fd} vs {an}");
            assert!(an <= 0.0);
        }
    }

    #[test]
    fn bpsk_prime_frozen() {
        let got = mmse_x_prime(&Prior::bpsk(), 1.0).unwrap();
        assert!((got + 0.31655534540439446838).abs() < 1e-10, "{got}");
    }

    #[test]
    fn inverse_round_trips() {
        let p = Prior::bpsk();
        let s = mmse_x_inv(&p, 0.25).unwrap();
        assert!((s - 1.8766392708900698625).abs() < 1e-7, "{s}");
        let back = mmse_x(&p, s).unwrap();
        assert!((back - 0.25).abs() < 1e-10, "{back}");

        // Boundary and domain errors.
        assert_eq!(mmse_x_inv(&p, 1.0).unwrap(), 0.0);
        assert!(matches!(mmse_x_inv(&p, 0.0), Err(CoreError::OutOfRange { .. })));
        assert!(matches!(mmse_x_inv(&p, 1.5), Err(CoreError::OutOfRange { .. })));

        let bg = Prior::bernoulli_gaussian(0.1, 10.0).unwrap();
        for z in [0.9, 0.5, 0.1, 0.01] {
            let s = mmse_x_inv(&bg, z).unwrap();
            assert!((mmse_x(&bg, s).unwrap() - z).abs() < 1e-10, "z={z}");
        }
    }

    #[test]
    fn i_mmse_relation_spot_checks() {
        // d i_x / ds = mmse_x / 2 via centered differences.
        for p in [
            Prior::bpsk(),
            Prior::bernoulli_gaussian(0.1, 10.0).unwrap(),
            Prior::new(&[(0.3, -2.0, 0.5), (0.7, 1.0, 1.5)]).unwrap(),
        ] {
            for s in [0.1_f64, 1.0, 5.0] {
                let h = 1e-4 * s.max(1.0);
                let fd = (i_x(&p, s + h).unwrap() - i_x(&p, s - h).unwrap()) / (2.0 * h);
                let half_m = 0.5 * mmse_x(&p, s).unwrap();
                let tol = (1e-4 * half_m).max(1e-7);
                assert!((fd - half_m).abs() < tol, "s={s}: {fd} vs {half_m}");
            }
        }
    }

    #[test]
    fn gaussian_input_is_extremal() {
        for p in [
            Prior::bpsk(),
            Prior::bernoulli_gaussian(0.1, 10.0).unwrap(),
            Prior::figure1(0.3).unwrap(),
        ] {
            let var = p.variance();
            for s in [0.01, 0.5, 2.0] {
                let i = i_x(&p, s).unwrap();
                let m = mmse_x(&p, s).unwrap();
                assert!(i <= 0.5 * (1.0 + s * var).ln() + 1e-9, "s={s}");
                assert!(m <= var / (1.0 + s * var) + 1e-9, "s={s}");
                assert!(m <= 1.0 / s + 1e-9, "s={s}");
            }
        }
    }

    #[test]
    fn log_smoothness_and_lipschitz() {
        let p = Prior::bpsk();
        let x4 = p.fourth_moment();
        let pairs = [(0.5, 1.0), (1.0, 3.0), (2.0, 2.5)];
        for (s, t) in pairs {
            let gap = i_x(&p, t).unwrap() - i_x(&p, s).unwrap();
            assert!(gap <= 0.5 * (t / s).ln() + 1e-9);
            assert!(gap >= -1e-9);
            let dm = (mmse_x(&p, s).unwrap() - mmse_x(&p, t).unwrap()).abs();
            assert!(dm <= 4.0 * x4 * (t - s).abs() + 1e-9);
            assert!(dm <= 12.0 * (1.0 / s - 1.0 / t).abs() + 1e-9);
        }
    }

    #[test]
    fn shape_on_grid() {
        let p = Prior::new(&[(0.3, -2.0, 0.5), (0.7, 1.0, 1.5)]).unwrap();
        let ss: Vec<f64> = (0..30).map(|k| 0.05 * (k + 1) as f64).collect();
        let ms: Vec<f64> = ss.iter().map(|&s| mmse_x(&p, s).unwrap()).collect();
        let is: Vec<f64> = ss.iter().map(|&s| i_x(&p, s).unwrap()).collect();
        for w in ms.windows(2) {
            assert!(w[1] < w[0], "mmse not strictly decreasing: {w:?}");
        }
        for w in is.windows(3) {
            // Concavity: second difference nonpositive up to noise.
            assert!(w[2] - 2.0 * w[1] + w[0] <= 1e-8, "{w:?}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(QuadratureConfig::new(4, 8.0, 1e-10).is_err());
        assert!(QuadratureConfig::new(16, 0.0, 1e-10).is_err());
        assert!(QuadratureConfig::new(16, 8.0, 0.0).is_err());
        assert!(QuadratureConfig::new(16, 8.0, 1e-10).is_ok());
    }

    #[test]
    fn channel_eval_bundles_both() {
        let p = Prior::bpsk();
        let e = channel_eval(&p, 1.0).unwrap();
        assert_eq!(e.s, 1.0);
        assert!((e.i_x - i_x(&p, 1.0).unwrap()).abs() < 1e-15);
        assert!((e.mmse_x - mmse_x(&p, 1.0).unwrap()).abs() < 1e-15);
    }
}
