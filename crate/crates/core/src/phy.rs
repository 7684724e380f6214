//! Channels, SINRs, MAC-region stream rates and delivery-time aggregation.
//!
//! Noise power is `N0`, rates are in bits/s/Hz (log base 2). Channel
//! matrices are always indexed by global user id; an [`OmegaSets`] picks out
//! the users served by one transmission.

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::combinatorics::{OmegaSets, SchedulingParams};
use crate::error::{Error, Result};
use crate::linalg::{herm_dot, CVector};
use crate::num::Real;

/// Channel realization `H = [h_1 … h_K]`, each `h_k ∈ C^L`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelMatrix<R> {
    rows: Vec<CVector<R>>,
    seed: Option<u64>,
}

impl<R: Real> ChannelMatrix<R> {
    pub fn new(rows: Vec<CVector<R>>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::Parameter("channel matrix needs at least one user".into()));
        };
        let l = first.len();
        if let Some(bad) = rows.iter().find(|h| h.len() != l) {
            return Err(Error::DimensionMismatch {
                expected: l,
                found: bad.len(),
            });
        }
        Ok(Self { rows, seed: None })
    }

    pub fn users(&self) -> usize {
        self.rows.len()
    }

    pub fn antennas(&self) -> usize {
        self.rows[0].len()
    }

    pub fn h(&self, k: usize) -> &CVector<R> {
        &self.rows[k]
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn rows(&self) -> &[CVector<R>] {
        &self.rows
    }
}

/// I.i.d. circularly-symmetric complex Gaussian channel with real and
/// imaginary parts `N(0, 1/2)`, deterministic in `seed`.
pub fn sample_channel<R: Real>(k: usize, l: usize, seed: u64) -> Result<ChannelMatrix<R>> {
    if k == 0 || l == 0 {
        return Err(Error::Parameter(format!(
            "channel dimensions must be positive (K={k}, L={l})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("valid std");
    let rows = (0..k)
        .map(|_| {
            let entries = (0..l)
                .map(|_| {
                    let re = normal.sample(&mut rng);
                    let im = normal.sample(&mut rng);
                    Complex::new(R::of(re), R::of(im))
                })
                .collect();
            CVector::new(entries)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ChannelMatrix {
        rows,
        seed: Some(seed),
    })
}

/// Beamformers of one transmission; `beam(j)` is `w_T` for `T = omega[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamformerSet<R> {
    beams: Vec<CVector<R>>,
}

impl<R: Real> BeamformerSet<R> {
    pub fn new(beams: Vec<CVector<R>>) -> Result<Self> {
        if let Some(first) = beams.first() {
            let l = first.len();
            if let Some(bad) = beams.iter().find(|w| w.len() != l) {
                return Err(Error::DimensionMismatch {
                    expected: l,
                    found: bad.len(),
                });
            }
        }
        Ok(Self { beams })
    }

    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    pub fn beam(&self, j: usize) -> &CVector<R> {
        &self.beams[j]
    }

    pub fn beams(&self) -> &[CVector<R>] {
        &self.beams
    }

    /// Total transmit power `Σ_T ‖w_T‖²`.
    pub fn power(&self) -> R {
        self.beams.iter().map(|w| w.norm_sqr()).sum()
    }

    pub fn scaled(&self, g: R) -> Self {
        Self {
            beams: self.beams.iter().map(|w| w.scaled(g)).collect(),
        }
    }

    pub fn into_inner(self) -> Vec<CVector<R>> {
        self.beams
    }
}

fn check_beams<R: Real>(h: &ChannelMatrix<R>, beams: &BeamformerSet<R>, omega: &OmegaSets) -> Result<()> {
    if beams.len() != omega.streams() {
        return Err(Error::DimensionMismatch {
            expected: omega.streams(),
            found: beams.len(),
        });
    }
    if let Some(w) = beams.beams().first() {
        if w.len() != h.antennas() {
            return Err(Error::DimensionMismatch {
                expected: h.antennas(),
                found: w.len(),
            });
        }
    }
    if let Some(&u) = omega.users.iter().find(|&&u| u >= h.users()) {
        return Err(Error::Parameter(format!("user {u} has no channel")));
    }
    Ok(())
}

/// SINRs `γ_T^k` of user `k` for its desired streams, in the order of
/// `omega.omega_k`. Only streams the user does not want count as
/// interference.
pub fn sinr<R: Real>(
    h: &ChannelMatrix<R>,
    k: usize,
    beams: &BeamformerSet<R>,
    omega: &OmegaSets,
    n0: R,
) -> Result<Vec<R>> {
    check_beams(h, beams, omega)?;
    let pos = omega
        .position(k)
        .ok_or_else(|| Error::Parameter(format!("user {k} not served by this transmission")))?;
    Ok(sinr_at(h.h(k), pos, beams, omega, n0))
}

pub(crate) fn sinr_at<R: Real>(
    hk: &CVector<R>,
    pos: usize,
    beams: &BeamformerSet<R>,
    omega: &OmegaSets,
    n0: R,
) -> Vec<R> {
    let gain = |j: usize| herm_dot(hk.as_slice(), beams.beam(j).as_slice()).norm_sqr();
    let interference: R = omega.omega_bar_k[pos].iter().map(|&j| gain(j)).sum();
    let denom = n0 + interference;
    omega.omega_k[pos].iter().map(|&j| gain(j) / denom).collect()
}

/// Largest symmetric stream rate in the user's MAC region:
/// `min_{∅≠B⊆Ω_k} (1/|B|)·log2(1 + Σ_{T∈B} γ_T)`.
pub fn mac_rate<R: Real>(gammas: &[R]) -> Result<R> {
    let n = gammas.len();
    if n == 0 {
        return Err(Error::Parameter("MAC rate needs at least one stream".into()));
    }
    if n >= usize::BITS as usize {
        return Err(Error::Parameter(format!("{n} streams is too many to enumerate")));
    }
    let mut best = R::infinity();
    for mask in 1usize..(1 << n) {
        let sum: R = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| gammas[i])
            .sum();
        let size = R::of(mask.count_ones() as f64);
        best = best.min((R::one() + sum).log2() / size);
    }
    Ok(best)
}

/// Per-user SINRs and MAC rates of one transmission.
#[derive(Clone, Debug, PartialEq)]
pub struct MacEvaluation<R> {
    pub users: Vec<usize>,
    /// `sinrs[i]` aligns with `omega.omega_k[i]`.
    pub sinrs: Vec<Vec<R>>,
    pub rates: Vec<R>,
    /// `min_k R^k_MAC`.
    pub bottleneck: R,
}

pub fn evaluate_mac<R: Real>(
    h: &ChannelMatrix<R>,
    beams: &BeamformerSet<R>,
    omega: &OmegaSets,
    n0: R,
) -> Result<MacEvaluation<R>> {
    check_beams(h, beams, omega)?;
    let sinrs: Vec<Vec<R>> = omega
        .users
        .iter()
        .enumerate()
        .map(|(pos, &k)| sinr_at(h.h(k), pos, beams, omega, n0))
        .collect();
    let rates = sinrs.iter().map(|g| mac_rate(g)).collect::<Result<Vec<_>>>()?;
    let bottleneck = rates.iter().copied().fold(R::infinity(), R::min);
    Ok(MacEvaluation {
        users: omega.users.clone(),
        sinrs,
        rates,
        bottleneck,
    })
}

/// Time to deliver one mini-file of `F/(C(K,t)·Γ)` bits at `rate`;
/// infinite when the rate is not positive.
pub fn transmission_time(params: &SchedulingParams, file_bits: f64, rate: f64) -> f64 {
    if !(rate > 0.0) {
        return f64::INFINITY;
    }
    file_bits / params.minifiles() as f64 / rate
}

/// `F / Σ T`, zero if any transmission takes forever.
pub fn symmetric_rate(file_bits: f64, times: &[f64]) -> f64 {
    let total: f64 = times.iter().sum();
    if !total.is_finite() {
        return 0.0;
    }
    file_bits / total
}

/// Per-SNR Monte Carlo samples of one scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct RateCurve {
    pub scheme: String,
    pub snr_db: Vec<f64>,
    /// `samples[i]` holds the per-trial rates at `snr_db[i]`.
    pub samples: Vec<Vec<f64>>,
}

impl RateCurve {
    pub fn new(scheme: impl Into<String>, snr_db: Vec<f64>, samples: Vec<Vec<f64>>) -> Result<Self> {
        if snr_db.len() != samples.len() {
            return Err(Error::DimensionMismatch {
                expected: snr_db.len(),
                found: samples.len(),
            });
        }
        if snr_db.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Parameter("SNR points must be strictly increasing".into()));
        }
        Ok(Self {
            scheme: scheme.into(),
            snr_db,
            samples,
        })
    }

    pub fn mean(&self, i: usize) -> f64 {
        let s = &self.samples[i];
        s.iter().sum::<f64>() / s.len() as f64
    }

    /// Standard error of the mean, zero for a single sample.
    pub fn stderr(&self, i: usize) -> f64 {
        let s = &self.samples[i];
        let n = s.len() as f64;
        if s.len() < 2 {
            return 0.0;
        }
        let m = self.mean(i);
        let var = s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.snr_db.len()).map(|i| self.mean(i)).collect()
    }
}

/// `log2(SNR)` for an SNR given in dB.
pub fn db_to_log2(db: f64) -> f64 {
    db / 10.0 * std::f64::consts::LOG2_10
}

/// Least-squares line `y ≈ a + b·x`, returned as `(a, b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Parameter("a line fit needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Parameter("line fit needs distinct abscissae".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((my - slope * mx, slope))
}

/// Slope of mean rate versus `log2(SNR)` over the top `window` SNR points.
pub fn dof_estimate(curve: &RateCurve, window: usize) -> Result<f64> {
    let n = curve.snr_db.len();
    if window < 2 || window > n {
        return Err(Error::Parameter(format!(
            "DoF window of {window} points needs 2..={n}"
        )));
    }
    let x: Vec<f64> = curve.snr_db[n - window..].iter().map(|&d| db_to_log2(d)).collect();
    let y: Vec<f64> = (n - window..n).map(|i| curve.mean(i)).collect();
    linear_fit(&x, &y).map(|(_, slope)| slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::{combinations, Partition};
    use proptest::prelude::*;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn single(users: &[usize]) -> OmegaSets {
        OmegaSets::from_streams(users, vec![users.to_vec()]).unwrap()
    }

    fn three_user_omega() -> OmegaSets {
        crate::combinatorics::build_omega(
            &Partition {
                parent: vec![0, 1, 2],
                groups: vec![vec![0, 1, 2]],
            },
            1,
        )
        .unwrap()
    }

    #[test]
    fn sample_is_deterministic() {
        let a = sample_channel::<f64>(3, 2, 9).unwrap();
        assert_eq!(a, sample_channel::<f64>(3, 2, 9).unwrap());
        assert_ne!(a, sample_channel::<f64>(3, 2, 10).unwrap());
        assert_eq!(a.seed(), Some(9));
    }

    #[test]
    fn unit_average_gain() {
        let total: f64 = (0..10_000u64)
            .map(|s| sample_channel::<f64>(1, 1, s).unwrap().h(0).norm_sqr())
            .sum();
        assert!((total / 1e4 - 1.0).abs() < 0.05);
    }

    #[test]
    fn aligned_and_nulled_beams() {
        let h = ChannelMatrix::new(vec![CVector::new(vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap()]).unwrap();
        let om = single(&[0]);
        let p = 7.0f64;
        let w = BeamformerSet::new(vec![CVector::new(vec![c(p.sqrt(), 0.0), c(0.0, 0.0)]).unwrap()]).unwrap();
        assert!((sinr(&h, 0, &w, &om, 1.0).unwrap()[0] - p).abs() < 1e-12);
        let w = BeamformerSet::new(vec![CVector::new(vec![c(0.0, 0.0), c(1.0, 0.0)]).unwrap()]).unwrap();
        assert_eq!(sinr(&h, 0, &w, &om, 1.0).unwrap()[0], 0.0);
    }

    fn random_beams(rng: &mut impl Rng, n: usize, l: usize) -> BeamformerSet<f64> {
        BeamformerSet::new(
            (0..n)
                .map(|_| {
                    CVector::new(
                        (0..l)
                            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                            .collect(),
                    )
                    .unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn sinr_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = sample_channel::<f64>(3, 2, 4).unwrap();
        let om = three_user_omega();
        let w = random_beams(&mut rng, 3, 2);
        let n0 = 0.7;
        // streams: {0,1}, {0,2}, {1,2}
        let g = |k: usize, j: usize| {
            let hk = h.h(k);
            let wj = w.beam(j);
            let mut s = c(0.0, 0.0);
            for i in 0..2 {
                s += hk[i].conj() * wj[i];
            }
            s.norm_sqr()
        };
        let oracle = [
            vec![g(0, 0) / (n0 + g(0, 2)), g(0, 1) / (n0 + g(0, 2))],
            vec![g(1, 0) / (n0 + g(1, 1)), g(1, 2) / (n0 + g(1, 1))],
            vec![g(2, 1) / (n0 + g(2, 0)), g(2, 2) / (n0 + g(2, 0))],
        ];
        for k in 0..3 {
            let got = sinr(&h, k, &w, &om, n0).unwrap();
            for (a, b) in got.iter().zip(&oracle[k]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sinr_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = sample_channel::<f64>(3, 2, 6).unwrap();
        let om = three_user_omega();
        let w = random_beams(&mut rng, 3, 2);
        let g = 3.7;
        let a = evaluate_mac(&h, &w, &om, 1.0).unwrap();
        let b = evaluate_mac(&h, &w.scaled(g), &om, g * g).unwrap();
        for (x, y) in a.sinrs.concat().iter().zip(b.sinrs.concat()) {
            assert!((x - y).abs() < 1e-10 * x.max(1.0));
        }
    }

    #[test]
    fn mac_rate_cases() {
        assert_eq!(mac_rate(&[1.0f64]).unwrap(), 1.0);
        let r = mac_rate(&[1.0f64, 1.0]).unwrap();
        assert!((r - 0.5 * 3f64.log2()).abs() < 1e-15);
        assert!((r - 0.79248).abs() < 1e-5);
        assert!(mac_rate::<f64>(&[]).is_err());
    }

    fn subset_oracle(g: &[f64]) -> f64 {
        let idx: Vec<usize> = (0..g.len()).collect();
        let mut best = f64::INFINITY;
        for size in 1..=g.len() {
            for b in combinations(&idx, size) {
                let s: f64 = b.iter().map(|&i| g[i]).sum();
                best = best.min((1.0 + s).log2() / size as f64);
            }
        }
        best
    }

    proptest! {
        #[test]
        fn mac_rate_equals_subset_minimum(g in prop::collection::vec(0.0f64..100.0, 1..=6)) {
            prop_assert!((mac_rate(&g).unwrap() - subset_oracle(&g)).abs() <= 1e-12);
        }

        #[test]
        fn mac_rate_is_monotone(g in prop::collection::vec(0.0f64..50.0, 1..=5), i in 0usize..5, d in 0.0f64..10.0) {
            let i = i % g.len();
            let mut h = g.clone();
            h[i] += d;
            prop_assert!(mac_rate(&h).unwrap() >= mac_rate(&g).unwrap() - 1e-15);
        }

        #[test]
        fn mac_rate_below_singles_and_above_full_bound(g in prop::collection::vec(0.0f64..50.0, 1..=5)) {
            let r = mac_rate(&g).unwrap();
            for &x in &g {
                prop_assert!(r <= (1.0 + x).log2() + 1e-15);
            }
            let full = (1.0 + g.iter().sum::<f64>()).log2() / g.len() as f64;
            prop_assert!(r <= full + 1e-15);
        }

        #[test]
        fn symmetric_rate_ignores_order(mut times in prop::collection::vec(0.01f64..10.0, 1..8)) {
            let a = symmetric_rate(1.0, &times);
            times.reverse();
            prop_assert!((a - symmetric_rate(1.0, &times)).abs() < 1e-12);
        }
    }

    #[test]
    fn times_and_symmetric_rates() {
        let p = SchedulingParams::new(3, 2, 3, 1, 2, 2).unwrap();
        assert_eq!(transmission_time(&p, 3.0, 1.0), 1.0);
        assert_eq!(transmission_time(&p, 3.0, 0.0), f64::INFINITY);
        // one transmission: R_sym = 3·r
        let r = 0.9;
        assert!((symmetric_rate(1.0, &[transmission_time(&p, 1.0, r)]) - 3.0 * r).abs() < 1e-12);

        // K=4, α=β=2: mini-files of F/8 over four subsets
        let p = SchedulingParams::new(4, 2, 4, 1, 2, 2).unwrap();
        assert_eq!(p.minifiles(), 8);
        let rates = [1.0, 2.0, 0.5, 4.0];
        let times: Vec<f64> = rates.iter().map(|&r| transmission_time(&p, 1.0, r)).collect();
        let expect = 8.0 / rates.iter().map(|r| 1.0 / r).sum::<f64>();
        assert!((symmetric_rate(1.0, &times) - expect).abs() < 1e-12);

        assert_eq!(symmetric_rate(1.0, &[1.0, f64::INFINITY]), 0.0);
        let n = 5;
        assert!((symmetric_rate(1.0, &vec![1.0 / (n as f64 * 2.0); n]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dof_of_linear_curve() {
        let snr = vec![20.0, 25.0, 30.0, 35.0, 40.0];
        let samples = snr.iter().map(|&d| vec![0.3 + 1.2 * db_to_log2(d)]).collect();
        let curve = RateCurve::new("x", snr, samples).unwrap();
        assert!((dof_estimate(&curve, 3).unwrap() - 1.2).abs() < 1e-12);
        assert!(dof_estimate(&curve, 1).is_err());
        assert!(RateCurve::new("x", vec![1.0, 1.0], vec![vec![], vec![]]).is_err());
    }

    #[test]
    fn curve_statistics() {
        let curve = RateCurve::new("x", vec![0.0], vec![vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(curve.mean(0), 2.0);
        assert!((curve.stderr(0) - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
