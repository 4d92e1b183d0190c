//! Rician fading link statistics.

use core::f64::consts::PI;

use num_complex::Complex;
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear-scale link parameters. Construct from dB quantities with
/// [`ChannelParams::from_db`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub kappa: f64,
    /// Noise power spectral density, W/Hz.
    pub n0: f64,
    /// Bandwidth, Hz.
    pub bandwidth: f64,
    /// SNR decoding threshold, linear.
    pub gamma0: f64,
    pub outage_target: f64,
}

pub fn db_to_linear(db: f64) -> f64 {
    10.0.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm) * 1e-3
}

impl ChannelParams {
    pub fn from_db(
        kappa: f64,
        n0_dbm_per_hz: f64,
        bandwidth_hz: f64,
        gamma0_db: f64,
        outage_target: f64,
    ) -> Result<Self> {
        let params = Self {
            kappa,
            n0: dbm_to_watts(n0_dbm_per_hz),
            bandwidth: bandwidth_hz,
            gamma0: db_to_linear(gamma0_db),
            outage_target,
        };
        params.validate()?;
        Ok(params)
    }

    /// κ = 10, N0 = −168 dBm/Hz, ω = 2.4 GHz, γ0 = 20 dB, Õ = 1e-3.
    pub fn table_one() -> Self {
        Self::from_db(10.0, -168.0, 2.4e9, 20.0, 1e-3).expect("table values are valid")
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.kappa >= 0.0
            && self.kappa.is_finite()
            && self.n0 > 0.0
            && self.bandwidth > 0.0
            && self.gamma0 > 0.0
            && self.outage_target > 0.0
            && self.outage_target < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "channel requires kappa >= 0, positive N0, bandwidth and threshold, and 0 < outage target < 1"
                    .into(),
            ))
        }
    }

    pub fn noise_power(&self) -> f64 {
        self.n0 * self.bandwidth
    }
}

/// `h = √(κ/(1+κ))·e^{jφ} + √(1/(1+κ))·h̃` with unit average power.
pub fn sample_gain<R: Rng + ?Sized>(kappa: f64, rng: &mut R) -> Complex<f64> {
    let phi = rng.random::<f64>() * 2.0 * PI;
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    let scatter = Complex::new(re, im) * (0.5.sqrt());
    if kappa.is_infinite() {
        return Complex::from_polar(1.0, phi);
    }
    Complex::from_polar((kappa / (1.0 + kappa)).sqrt(), phi)
        + scatter * (1.0 / (1.0 + kappa)).sqrt()
}

pub fn snr(p: f64, h: Complex<f64>, n0: f64, bandwidth: f64) -> f64 {
    p * h.norm_sqr() / (n0 * bandwidth)
}

// Terms are dropped once the remaining Poisson mass is below this bound.
const SERIES_TOL: f64 = 1e-17;
const MAX_TERMS: usize = 100_000;

/// Regularized incomplete gamma functions `(P(n, y), Q(n, y))` for integer
/// `n ≥ 1`, each evaluated on the side that avoids cancellation.
fn regularized_gamma_int(n: usize, y: f64, ln_fact: impl Fn(usize) -> f64) -> (f64, f64) {
    if y <= 0.0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    if y < nf {
        // P(n, y) = e^{-y} y^n / n! · Σ_m y^m / ((n+1)…(n+m))
        let lead = (-y + nf * y.ln() - ln_fact(n)).exp();
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut m = 1.0;
        while term > 1e-17 * sum {
            term *= y / (nf + m);
            sum += term;
            m += 1.0;
        }
        let p = (lead * sum).min(1.0);
        (p, 1.0 - p)
    } else {
        // Q(n, y) = e^{-y} Σ_{j<n} y^j / j!
        let ln_y = y.ln();
        let mut q = 0.0;
        for j in 0..n {
            q += (-y + j as f64 * ln_y - ln_fact(j)).exp();
        }
        let q = q.min(1.0);
        (1.0 - q, q)
    }
}

/// Returns `(Q1(a, b), 1 − Q1(a, b))` from the Poisson-mixture form of the
/// Bessel series, `Q1 = Σ_k e^{-a²/2} (a²/2)^k / k! · Q(k+1, b²/2)`.
/// Each output is summed directly so small values keep relative precision.
/// Truncation error is below 1e-16.
pub fn marcum_q1_pair(a: f64, b: f64) -> (f64, f64) {
    let a = a.abs();
    let b = b.abs();
    if b == 0.0 {
        return (1.0, 0.0);
    }
    if a.is_infinite() {
        return (1.0, 0.0);
    }
    if b.is_infinite() {
        return (0.0, 1.0);
    }
    let x = a * a / 2.0;
    let y = b * b / 2.0;
    let ln_x = if x > 0.0 { x.ln() } else { f64::NEG_INFINITY };

    let mut ln_fact_table = alloc::vec::Vec::with_capacity(64);
    ln_fact_table.push(0.0);
    let mut q_sum = 0.0;
    let mut p_sum = 0.0;
    let mut ln_pois = -x;
    let mut k = 0usize;
    loop {
        while ln_fact_table.len() <= k + 1 {
            let n = ln_fact_table.len();
            let prev = ln_fact_table[n - 1];
            ln_fact_table.push(prev + (n as f64).ln());
        }
        let weight = ln_pois.exp();
        let (p, q) = regularized_gamma_int(k + 1, y, |j| ln_fact_table[j]);
        q_sum += weight * q;
        p_sum += weight * p;

        k += 1;
        if x == 0.0 || k >= MAX_TERMS {
            break;
        }
        ln_pois += ln_x - (k as f64).ln();
        // Poisson tail beyond k is bounded by a geometric series once k > x.
        let kf = k as f64;
        if kf > x + 1.0 {
            let ratio = x / (kf + 1.0);
            if ln_pois.exp() / (1.0 - ratio) < SERIES_TOL {
                break;
            }
        }
    }
    (q_sum.clamp(0.0, 1.0), p_sum.clamp(0.0, 1.0))
}

/// First-order Marcum Q function.
pub fn marcum_q1(a: f64, b: f64) -> f64 {
    marcum_q1_pair(a, b).0
}

/// `O = 1 − Q1(√(2κ), √(2(1+κ)γ0 N0 ω / p))`.
pub fn outage_prob(p: f64, params: &ChannelParams) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::InvalidPower(p));
    }
    let a = (2.0 * params.kappa).sqrt();
    let b = (2.0 * (1.0 + params.kappa) * params.gamma0 * params.noise_power() / p).sqrt();
    Ok(marcum_q1_pair(a, b).1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    /// Transmission power, W.
    pub power: f64,
    pub outage: f64,
}

/// Smallest power whose outage does not exceed the target, by log-scale
/// bisection to relative tolerance 1e-6.
pub fn required_power(params: &ChannelParams) -> Result<LinkBudget> {
    params.validate()?;
    let target = params.outage_target;
    let scale = params.gamma0 * params.noise_power();
    let (mut lo, mut hi) = (scale, scale);
    let mut expansions = 0;
    while outage_prob(hi, params)? > target {
        hi *= 10.0;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::Bracketing { target, lo, hi });
        }
    }
    expansions = 0;
    while outage_prob(lo, params)? <= target {
        lo /= 10.0;
        expansions += 1;
        if expansions > 60 || lo == 0.0 {
            return Err(Error::Bracketing { target, lo, hi });
        }
    }
    while hi / lo - 1.0 > 1e-6 {
        let mid = (lo * hi).sqrt();
        if outage_prob(mid, params)? <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(LinkBudget {
        power: hi,
        outage: outage_prob(hi, params)?,
    })
}

/// One packet attempt: draws a fresh gain and checks the SNR threshold.
pub fn transmit<R: Rng + ?Sized>(p: f64, params: &ChannelParams, rng: &mut R) -> bool {
    let h = sample_gain(params.kappa, rng);
    p > 0.0 && snr(p, h, params.n0, params.bandwidth) >= params.gamma0
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // e^{-z} I0(z) by its power series, scaled to avoid overflow.
    fn scaled_i0(z: f64) -> f64 {
        let q = z * z / 4.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while term > 1e-18 * sum || k < q.sqrt() {
            term *= q / (k * k);
            sum += term;
            k += 1.0;
        }
        sum * (-z).exp()
    }

    fn integrand(x: f64, a: f64) -> f64 {
        x * (-(x - a) * (x - a) / 2.0).exp() * scaled_i0(a * x)
    }

    fn simpson(
        f: &dyn Fn(f64) -> f64,
        lo: f64,
        hi: f64,
        flo: f64,
        fmid: f64,
        fhi: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let mid = 0.5 * (lo + hi);
        let lm = 0.5 * (lo + mid);
        let rm = 0.5 * (mid + hi);
        let flm = f(lm);
        let frm = f(rm);
        let left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
        let right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            simpson(f, lo, mid, flo, flm, fmid, left, tol / 2.0, depth - 1)
                + simpson(f, mid, hi, fmid, frm, fhi, right, tol / 2.0, depth - 1)
        }
    }

    fn quadrature_q1(a: f64, b: f64) -> f64 {
        let f = |x: f64| integrand(x, a);
        let hi = b.max(a) + 14.0;
        let mid = 0.5 * (b + hi);
        let (fl, fm, fh) = (f(b), f(mid), f(hi));
        let whole = (hi - b) / 6.0 * (fl + 4.0 * fm + fh);
        simpson(&f, b, hi, fl, fm, fh, whole, 1e-13, 40)
    }

    #[test]
    fn marcum_examples() {
        assert_eq!(marcum_q1(1.3, 0.0), 1.0);
        assert_abs_diff_eq!(marcum_q1(0.0, 2.0), (-2.0f64).exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(marcum_q1(1.0, 1.0), quadrature_q1(1.0, 1.0), epsilon = 1e-8);
    }

    #[test]
    fn marcum_pair_sums_to_one() {
        for &(a, b) in &[(0.5, 0.2), (3.0, 4.0), (4.47, 0.3), (0.0, 7.0), (10.0, 9.0)] {
            let (q, c) = marcum_q1_pair(a, b);
            assert_abs_diff_eq!(q + c, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn marcum_monotonicity() {
        let grid: Vec<f64> = (0..30).map(|i| i as f64 * 0.2).collect();
        for &a in &grid {
            for w in grid.windows(2) {
                assert!(marcum_q1(a, w[1]) <= marcum_q1(a, w[0]) + 1e-15);
            }
        }
        for &b in &grid {
            for w in grid.windows(2) {
                assert!(marcum_q1(w[1], b) + 1e-15 >= marcum_q1(w[0], b));
            }
        }
    }

    fn params(kappa: f64) -> ChannelParams {
        ChannelParams {
            kappa,
            ..ChannelParams::table_one()
        }
    }

    #[test]
    fn db_conversions() {
        assert_abs_diff_eq!(db_to_linear(20.0), 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dbm_to_watts(30.0), 1.0, epsilon = 1e-12);
        let p = ChannelParams::table_one();
        assert_abs_diff_eq!(p.n0, 10.0f64.powf(-19.8), epsilon = 1e-30);
    }

    #[test]
    fn snr_examples() {
        let h = Complex::new(1.0, 0.0);
        assert_eq!(snr(0.0, h, 0.01, 1.0), 0.0);
        assert_abs_diff_eq!(snr(1.0, h, 0.01, 1.0), 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(snr(2.0, h, 0.01, 1.0), 200.0, epsilon = 1e-12);
    }

    #[test]
    fn gain_power_is_unit_on_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &kappa in &[0.0, 10.0] {
            let n = 1_000_000;
            let mean: f64 = (0..n)
                .map(|_| sample_gain(kappa, &mut rng).norm_sqr())
                .sum::<f64>()
                / n as f64;
            assert!((mean - 1.0).abs() < 0.01, "kappa {kappa}: mean {mean}");
        }
        let h = sample_gain(f64::INFINITY, &mut rng);
        assert_abs_diff_eq!(h.norm_sqr(), 1.0, epsilon = 1e-12);
        let h = sample_gain(1e12, &mut rng);
        assert_abs_diff_eq!(h.norm_sqr(), 1.0, epsilon = 1e-4);
    }

    #[test]
    fn rayleigh_closed_form() {
        let p0 = params(0.0);
        for &p in &[1e-9, 1e-8, 1e-7, 1e-6] {
            let closed = 1.0 - (-p0.gamma0 * p0.noise_power() / p).exp();
            assert_abs_diff_eq!(outage_prob(p, &p0).unwrap(), closed, epsilon = 1e-9);
        }
    }

    #[test]
    fn outage_limits_and_errors() {
        let p = params(10.0);
        assert!(outage_prob(1e6, &p).unwrap() < 1e-12);
        assert_eq!(outage_prob(0.0, &p), Err(Error::InvalidPower(0.0)));
        assert!(outage_prob(-1.0, &p).is_err());
    }

    #[test]
    fn outage_monotone_in_power_threshold_and_kappa() {
        let base = params(10.0);
        let powers: Vec<f64> = (0..30).map(|i| 1e-9 * 1.3f64.powi(i)).collect();
        for w in powers.windows(2) {
            assert!(outage_prob(w[1], &base).unwrap() < outage_prob(w[0], &base).unwrap());
        }
        let p = 5e-9;
        let mut prev = 0.0;
        for g in [1.0, 3.0, 10.0, 30.0, 100.0, 300.0] {
            let o = outage_prob(p, &ChannelParams { gamma0: g, ..base }).unwrap();
            assert!(o > prev);
            prev = o;
        }
        let weak = outage_prob(p, &params(3.0)).unwrap();
        let strong = outage_prob(p, &params(10.0)).unwrap();
        assert!(strong <= weak);
    }

    #[test]
    fn monte_carlo_outage_matches_analytic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base = params(10.0);
        for &p in &[8e-9, 1.5e-8] {
            let analytic = outage_prob(p, &base).unwrap();
            let n = 1_000_000;
            let fails = (0..n).filter(|_| !transmit(p, &base, &mut rng)).count() as f64 / n as f64;
            let se = (analytic * (1.0 - analytic) / n as f64).sqrt();
            assert!(
                (fails - analytic).abs() <= 3.0 * se,
                "p {p}: {fails} vs {analytic}"
            );
        }
        assert!(!transmit(0.0, &base, &mut rng));
    }

    #[test]
    fn required_power_hits_target() {
        let base = params(10.0);
        let budget = required_power(&base).unwrap();
        assert!(budget.outage <= base.outage_target);
        assert!(budget.outage >= base.outage_target * (1.0 - 1e-4));
        let loose = required_power(&ChannelParams {
            outage_target: 0.1,
            ..base
        })
        .unwrap();
        assert!(budget.power > loose.power);
        let mid = required_power(&ChannelParams {
            outage_target: 0.9,
            ..base
        })
        .unwrap();
        let nearly_one = required_power(&ChannelParams {
            outage_target: 0.999_999,
            ..base
        })
        .unwrap();
        assert!(mid.power < loose.power && nearly_one.power < mid.power);
    }

    #[test]
    fn failure_rate_at_ten_percent_target() {
        let base = ChannelParams {
            outage_target: 0.1,
            ..params(10.0)
        };
        let budget = required_power(&base).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let fails = (0..n)
            .filter(|_| !transmit(budget.power, &base, &mut rng))
            .count() as f64
            / n as f64;
        assert!((fails - 0.1).abs() <= 0.01);
    }

    #[test]
    fn required_power_falls_with_kappa() {
        for g_db in [10.0, 20.0, 30.0, 40.0] {
            let mut prev = f64::INFINITY;
            for kappa in [3.0, 5.0, 10.0] {
                let p = ChannelParams::from_db(kappa, -168.0, 2.4e9, g_db, 1e-3).unwrap();
                let power = required_power(&p).unwrap().power;
                assert!(power < prev);
                prev = power;
            }
        }
    }
}
