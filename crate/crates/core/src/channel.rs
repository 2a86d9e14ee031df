//! Wideband geometric channel between one base-station array and a
//! single-antenna user.
//!
//! A link is described by a [`PathSet`]: a handful of rays, each with a
//! complex gain, a delay and an angle of arrival, plus one path loss shared by
//! the set. The delay-domain taps are obtained by sampling a raised-cosine
//! pulse at `d * T_S - tau`, and the per-subcarrier channel is the K-point DFT
//! of those taps.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex column vector, one entry per antenna.
pub type CVec = Vec<Complex64>;

/// Pulse support is truncated to this many symbol periods on each side.
pub const PULSE_HALF_SPAN: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub gain: Complex64,
    /// Seconds.
    pub delay: f64,
    /// Radians from array broadside.
    pub azimuth: f64,
    /// Radians above the horizontal. Not used by the linear array response.
    pub elevation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    /// Empty for a fully blocked link.
    pub paths: Vec<Path>,
    /// Linear power ratio, strictly positive.
    pub path_loss: f64,
    pub bs_index: usize,
}

impl PathSet {
    pub fn blocked(bs_index: usize) -> Self {
        PathSet {
            paths: Vec::new(),
            path_loss: 1.0,
            bs_index,
        }
    }

    pub fn is_blocked(&self) -> bool {
        self.paths.is_empty()
    }

    /// Re-references every delay to the earliest arrival and drops paths whose
    /// excess delay falls outside the tap window.
    pub fn synchronized(&self, cfg: &ChannelConfig) -> PathSet {
        let first = self
            .paths
            .iter()
            .map(|p| p.delay)
            .fold(f64::INFINITY, f64::min);
        let window = cfg.num_taps as f64 * cfg.sample_period;
        let paths = self
            .paths
            .iter()
            .map(|p| Path {
                delay: p.delay - first,
                ..*p
            })
            .filter(|p| p.delay < window)
            .collect();
        PathSet {
            paths,
            path_loss: self.path_loss,
            bs_index: self.bs_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub num_antennas: usize,
    pub num_subcarriers: usize,
    pub num_taps: usize,
    /// Seconds.
    pub sample_period: f64,
    /// Element spacing in wavelengths.
    pub antenna_spacing: f64,
    /// Hz.
    pub carrier_freq: f64,
    /// Raised-cosine roll-off in [0, 1].
    pub rolloff: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            num_antennas: 32,
            num_subcarriers: 32,
            num_taps: 16,
            sample_period: 1e-9,
            antenna_spacing: 0.5,
            carrier_freq: 60e9,
            rolloff: 0.1,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_antennas == 0 || self.num_subcarriers == 0 || self.num_taps == 0 {
            return Err(Error::config(
                "num_antennas, num_subcarriers and num_taps must be at least 1",
            ));
        }
        if !(self.sample_period > 0.0) || !(self.antenna_spacing > 0.0) {
            return Err(Error::config(
                "sample_period and antenna_spacing must be positive",
            ));
        }
        if !(self.carrier_freq > 0.0) {
            return Err(Error::config("carrier_freq must be positive"));
        }
        if !(0.0..=1.0).contains(&self.rolloff) {
            return Err(Error::config("rolloff must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// `sin(pi * x)` that is exactly zero at integers.
fn sin_pi(x: f64) -> f64 {
    let r = x - 2.0 * (x / 2.0).round();
    if r == 0.0 || r.abs() == 1.0 {
        0.0
    } else {
        (PI * r).sin()
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        sin_pi(x) / (PI * x)
    }
}

/// Uniform linear array response. Entry `m` is `exp(j 2 pi s m sin(theta))`.
pub fn array_response(theta: f64, _phi: f64, cfg: &ChannelConfig) -> CVec {
    let step = 2.0 * PI * cfg.antenna_spacing * theta.sin();
    (0..cfg.num_antennas)
        .map(|m| Complex64::from_polar(1.0, step * m as f64))
        .collect()
}

/// Raised-cosine pulse for `sample_period`-spaced signalling, truncated to
/// `PULSE_HALF_SPAN` periods.
pub fn pulse_shape(tau: f64, sample_period: f64, rolloff: f64) -> f64 {
    let t = tau / sample_period;
    if t.abs() > PULSE_HALF_SPAN {
        return 0.0;
    }
    if rolloff == 0.0 {
        return sinc(t);
    }
    let edge = 1.0 / (2.0 * rolloff);
    if (t.abs() - edge).abs() < 1e-12 {
        return PI / 4.0 * sinc(edge);
    }
    let denom = 1.0 - (2.0 * rolloff * t).powi(2);
    sinc(t) * (PI * rolloff * t).cos() / denom
}

fn check_dims(ps: &PathSet, cfg: &ChannelConfig) -> Result<()> {
    if !(ps.path_loss > 0.0) {
        return Err(Error::contract("path loss must be positive"));
    }
    cfg.validate()
}

/// Delay-`d` channel: `sqrt(M / rho) * sum_l gain_l * p(d T_S - tau_l) * a(theta_l)`.
pub fn delay_tap_channel(ps: &PathSet, d: usize, cfg: &ChannelConfig) -> Result<CVec> {
    check_dims(ps, cfg)?;
    if d >= cfg.num_taps {
        return Err(Error::contract(format!(
            "tap index {d} outside 0..{}",
            cfg.num_taps
        )));
    }
    let m = cfg.num_antennas;
    let scale = (m as f64 / ps.path_loss).sqrt();
    let mut tap = vec![Complex64::new(0.0, 0.0); m];
    for path in &ps.paths {
        let p = pulse_shape(
            d as f64 * cfg.sample_period - path.delay,
            cfg.sample_period,
            cfg.rolloff,
        );
        if p == 0.0 {
            continue;
        }
        let coef = path.gain * (scale * p);
        for (h, a) in tap
            .iter_mut()
            .zip(array_response(path.azimuth, path.elevation, cfg))
        {
            *h += coef * a;
        }
    }
    Ok(tap)
}

/// Frequency-domain channel on every subcarrier.
///
/// Evaluated path by path: each ray contributes its array response weighted by
/// the DFT of its own sampled pulse, which is the same linear map as a DFT of
/// the summed taps.
pub fn freq_channel(ps: &PathSet, cfg: &ChannelConfig) -> Result<Vec<CVec>> {
    check_dims(ps, cfg)?;
    let (m, k_count, taps) = (cfg.num_antennas, cfg.num_subcarriers, cfg.num_taps);
    let scale = (m as f64 / ps.path_loss).sqrt();

    // twiddle[(k * d) mod K] = exp(-j 2 pi k d / K)
    let twiddle: Vec<Complex64> = (0..k_count)
        .map(|i| Complex64::from_polar(1.0, -2.0 * PI * i as f64 / k_count as f64))
        .collect();

    let mut out = vec![vec![Complex64::new(0.0, 0.0); m]; k_count];
    for path in &ps.paths {
        let pulses: Vec<(usize, f64)> = (0..taps)
            .map(|d| {
                let p = pulse_shape(
                    d as f64 * cfg.sample_period - path.delay,
                    cfg.sample_period,
                    cfg.rolloff,
                );
                (d, p)
            })
            .filter(|&(_, p)| p != 0.0)
            .collect();
        if pulses.is_empty() {
            continue;
        }
        let response = array_response(path.azimuth, path.elevation, cfg);
        for (k, h) in out.iter_mut().enumerate() {
            let spectrum: Complex64 = pulses
                .iter()
                .map(|&(d, p)| twiddle[(k * d) % k_count] * p)
                .sum();
            let coef = path.gain * spectrum * scale;
            for (hm, a) in h.iter_mut().zip(&response) {
                *hm += coef * a;
            }
        }
    }
    Ok(out)
}

/// `h^* f` for one subcarrier.
pub fn inner(h: &[Complex64], f: &[Complex64]) -> Complex64 {
    h.iter().zip(f).map(|(a, b)| a.conj() * b).sum()
}

/// Received power `P * sum_k |h_k^* f|^2`.
pub fn receive_power(h_all_k: &[CVec], f: &[Complex64], tx_power: f64) -> Result<f64> {
    let mut total = 0.0;
    for (k, h) in h_all_k.iter().enumerate() {
        if h.len() != f.len() {
            return Err(Error::contract(format!(
                "subcarrier {k}: channel has {} antennas, beam has {}",
                h.len(),
                f.len()
            )));
        }
        total += inner(h, f).norm_sqr();
    }
    Ok(tx_power * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(m: usize) -> ChannelConfig {
        ChannelConfig {
            num_antennas: m,
            ..ChannelConfig::default()
        }
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn assert_cvec_eq(a: &[Complex64], b: &[Complex64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).norm() <= tol, "{x} != {y}");
        }
    }

    fn random_pathset(rng: &mut impl Rng, n: usize, cfg: &ChannelConfig) -> PathSet {
        let window = cfg.num_taps as f64 * cfg.sample_period;
        let paths = (0..n)
            .map(|_| Path {
                gain: Complex64::from_polar(rng.random_range(0.1..1.0), rng.random_range(-PI..PI)),
                delay: rng.random_range(0.0..window),
                azimuth: rng.random_range(-PI / 2.0..PI / 2.0),
                elevation: rng.random_range(-0.3..0.3),
            })
            .collect();
        PathSet {
            paths,
            path_loss: rng.random_range(1.0..1e6),
            bs_index: 0,
        }
    }

    #[test]
    fn broadside_response_is_all_ones() {
        assert_cvec_eq(&array_response(0.0, 0.0, &cfg(4)), &[c(1.0, 0.0); 4], 1e-15);
    }

    #[test]
    fn endfire_half_wavelength() {
        assert_cvec_eq(
            &array_response(PI / 2.0, 0.0, &cfg(2)),
            &[c(1.0, 0.0), c(-1.0, 0.0)],
            1e-15,
        );
    }

    #[test]
    fn thirty_degrees_gives_quarter_turns() {
        let a = array_response(PI / 6.0, 0.3, &cfg(4));
        assert_cvec_eq(
            &a,
            &[c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)],
            1e-12,
        );
    }

    #[test]
    fn pulse_values() {
        let ts = 1e-9;
        assert_eq!(pulse_shape(0.0, ts, 0.1), 1.0);
        assert_eq!(pulse_shape(3.0 * ts, ts, 0.1), 0.0);
        assert_eq!(pulse_shape(-2.0 * ts, ts, 0.0), 0.0);
        assert_abs_diff_eq!(pulse_shape(0.5 * ts, ts, 0.0), 2.0 / PI, epsilon = 1e-15);
        assert_eq!(pulse_shape(8.5 * ts, ts, 0.1), 0.0);
    }

    #[test]
    fn pulse_is_continuous_at_rolloff_singularity() {
        let ts = 1.0;
        let beta = 0.25;
        let edge = 1.0 / (2.0 * beta);
        let at = pulse_shape(edge, ts, beta);
        let near = pulse_shape(edge + 1e-7, ts, beta);
        assert_abs_diff_eq!(at, near, epsilon = 1e-6);
    }

    #[test]
    fn blocked_link_is_zero() {
        let cfg = cfg(8);
        let ps = PathSet::blocked(0);
        for d in 0..cfg.num_taps {
            assert!(delay_tap_channel(&ps, d, &cfg)
                .unwrap()
                .iter()
                .all(|h| h.norm() == 0.0));
        }
        let h = freq_channel(&ps, &cfg).unwrap();
        assert_eq!(h.len(), cfg.num_subcarriers);
        assert!(h.iter().flatten().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn unit_ray_lands_on_tap_zero() {
        let cfg = cfg(4);
        let ps = PathSet {
            paths: vec![Path {
                gain: c(1.0, 0.0),
                delay: 0.0,
                azimuth: 0.0,
                elevation: 0.0,
            }],
            path_loss: 4.0,
            bs_index: 0,
        };
        assert_cvec_eq(
            &delay_tap_channel(&ps, 0, &cfg).unwrap(),
            &[c(1.0, 0.0); 4],
            1e-15,
        );
        for d in 1..cfg.num_taps {
            assert!(delay_tap_channel(&ps, d, &cfg)
                .unwrap()
                .iter()
                .all(|h| h.norm() == 0.0));
        }
        // flat across subcarriers
        let h = freq_channel(&ps, &cfg).unwrap();
        for hk in &h {
            assert_cvec_eq(hk, &h[0], 1e-12);
        }
        assert!(delay_tap_channel(&ps, cfg.num_taps, &cfg).is_err());
    }

    #[test]
    fn taps_match_naive_summation() {
        let cfg = cfg(6);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ps = random_pathset(&mut rng, 3, &cfg);
        let scale = (cfg.num_antennas as f64 / ps.path_loss).sqrt();
        for d in 0..cfg.num_taps {
            let got = delay_tap_channel(&ps, d, &cfg).unwrap();
            for (m, got_m) in got.iter().enumerate() {
                let mut want = c(0.0, 0.0);
                for p in &ps.paths {
                    let t = d as f64 * cfg.sample_period - p.delay;
                    let phase = 2.0 * PI * 0.5 * m as f64 * p.azimuth.sin();
                    want += p.gain
                        * pulse_shape(t, cfg.sample_period, cfg.rolloff)
                        * c(phase.cos(), phase.sin())
                        * scale;
                }
                assert!((got_m - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn two_tap_channel_matches_dft() {
        let cfg = ChannelConfig {
            num_antennas: 3,
            num_subcarriers: 8,
            num_taps: 4,
            rolloff: 0.0,
            ..ChannelConfig::default()
        };
        let ps = PathSet {
            paths: vec![
                Path {
                    gain: c(1.0, 0.5),
                    delay: 0.0,
                    azimuth: 0.2,
                    elevation: 0.0,
                },
                Path {
                    gain: c(-0.3, 0.2),
                    delay: 1e-9,
                    azimuth: -0.7,
                    elevation: 0.0,
                },
            ],
            path_loss: 2.0,
            bs_index: 1,
        };
        let h = freq_channel(&ps, &cfg).unwrap();
        let taps: Vec<CVec> = (0..cfg.num_taps)
            .map(|d| delay_tap_channel(&ps, d, &cfg).unwrap())
            .collect();
        for (k, hk) in h.iter().enumerate() {
            for m in 0..3 {
                let mut want = c(0.0, 0.0);
                for (d, tap) in taps.iter().enumerate() {
                    let ang = -2.0 * PI * (k * d) as f64 / 8.0;
                    want += tap[m] * c(ang.cos(), ang.sin());
                }
                assert!((hk[m] - want).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn receive_power_cases() {
        let m = 4;
        let f: CVec = vec![c(0.5, 0.0); m];
        let same = vec![f.clone(); 5];
        assert_abs_diff_eq!(receive_power(&same, &f, 1.0).unwrap(), 5.0, epsilon = 1e-12);

        let orth: CVec = vec![c(0.5, 0.0), c(-0.5, 0.0), c(0.5, 0.0), c(-0.5, 0.0)];
        let ortho = vec![orth; 3];
        assert_abs_diff_eq!(
            receive_power(&ortho, &f, 2.0).unwrap(),
            0.0,
            epsilon = 1e-15
        );

        let short = vec![vec![c(1.0, 0.0); 3]];
        assert!(matches!(
            receive_power(&short, &f, 1.0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn receive_power_matches_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h: Vec<CVec> = (0..7)
            .map(|_| (0..5).map(|_| c(rng.random(), rng.random())).collect())
            .collect();
        let f: CVec = (0..5).map(|_| c(rng.random(), rng.random())).collect();
        let mut want = 0.0;
        for hk in &h {
            let mut re = 0.0;
            let mut im = 0.0;
            for (a, b) in hk.iter().zip(&f) {
                // conj(a) * b
                re += a.re * b.re + a.im * b.im;
                im += a.re * b.im - a.im * b.re;
            }
            want += re * re + im * im;
        }
        let got = receive_power(&h, &f, 3.0).unwrap();
        assert!((got - 3.0 * want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn synchronize_drops_late_paths() {
        let cfg = cfg(2);
        let ps = PathSet {
            paths: vec![
                Path {
                    gain: c(1.0, 0.0),
                    delay: 100e-9,
                    azimuth: 0.0,
                    elevation: 0.0,
                },
                Path {
                    gain: c(1.0, 0.0),
                    delay: 105e-9,
                    azimuth: 0.1,
                    elevation: 0.0,
                },
                Path {
                    gain: c(1.0, 0.0),
                    delay: 130e-9,
                    azimuth: 0.2,
                    elevation: 0.0,
                },
            ],
            path_loss: 1.0,
            bs_index: 0,
        };
        let s = ps.synchronized(&cfg);
        assert_eq!(s.paths.len(), 2);
        assert_eq!(s.paths[0].delay, 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_pathset(cfg: ChannelConfig) -> impl Strategy<Value = PathSet> {
            let window = cfg.num_taps as f64 * cfg.sample_period;
            let path = (0.05f64..2.0, -PI..PI, 0.0..window, -1.5f64..1.5).prop_map(
                |(mag, ph, delay, az)| Path {
                    gain: Complex64::from_polar(mag, ph),
                    delay,
                    azimuth: az,
                    elevation: 0.0,
                },
            );
            (proptest::collection::vec(path, 0..5), 0.5f64..50.0).prop_map(|(paths, rho)| PathSet {
                paths,
                path_loss: rho,
                bs_index: 0,
            })
        }

        fn small() -> ChannelConfig {
            ChannelConfig {
                num_antennas: 5,
                num_subcarriers: 16,
                num_taps: 8,
                ..ChannelConfig::default()
            }
        }

        proptest! {
            #[test]
            fn linear_in_paths(a in arb_pathset(small()), b in arb_pathset(small())) {
                let cfg = small();
                let b = PathSet { path_loss: a.path_loss, ..b };
                let mut both = a.clone();
                both.paths.extend(b.paths.iter().copied());
                let ha = freq_channel(&a, &cfg).unwrap();
                let hb = freq_channel(&b, &cfg).unwrap();
                let hab = freq_channel(&both, &cfg).unwrap();
                for k in 0..cfg.num_subcarriers {
                    for m in 0..cfg.num_antennas {
                        prop_assert!((hab[k][m] - ha[k][m] - hb[k][m]).norm() < 1e-10);
                    }
                }
            }

            #[test]
            fn parseval(ps in arb_pathset(small())) {
                let cfg = small();
                let freq: f64 = freq_channel(&ps, &cfg).unwrap()
                    .iter().flatten().map(|h| h.norm_sqr()).sum();
                let taps: f64 = (0..cfg.num_taps)
                    .flat_map(|d| delay_tap_channel(&ps, d, &cfg).unwrap())
                    .map(|h| h.norm_sqr())
                    .sum();
                // Parseval holds for K >= D_taps (no aliasing of taps)
                let want = cfg.num_subcarriers as f64 * taps;
                prop_assert!((freq - want).abs() <= 1e-8 * want.max(1e-300));
            }

            #[test]
            fn unit_magnitude_response(theta in -PI..PI, m in 1usize..64) {
                for a in array_response(theta, 0.0, &cfg(m)) {
                    prop_assert!((a.norm() - 1.0).abs() < 1e-12);
                }
            }

            #[test]
            fn path_loss_scales_power(ps in arb_pathset(small()), factor in 0.1f64..100.0) {
                let cfg = small();
                let f: CVec = array_response(0.3, 0.0, &cfg)
                    .into_iter().map(|a| a / (cfg.num_antennas as f64).sqrt()).collect();
                let base = receive_power(&freq_channel(&ps, &cfg).unwrap(), &f, 1.0).unwrap();
                let scaled = PathSet { path_loss: ps.path_loss * factor, ..ps.clone() };
                let got = receive_power(&freq_channel(&scaled, &cfg).unwrap(), &f, 1.0).unwrap();
                prop_assert!((got - base / factor).abs() <= 1e-10 * base.max(1e-300));
            }
        }
    }
}
