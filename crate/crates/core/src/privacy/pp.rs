//! Passive-party DP: circulant spectral sums, the 3×3 eigenproblem and the
//! Monte Carlo tail estimate of the privacy-loss quadratic form.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;
const CHUNK: usize = 1 << 14;

/// Scale-free circulant sums `(a, b, c)` for the noise ratio `r = s2^2 / (2 s1^2)`:
/// `a = mean_j 1 / (2(1 - cos θ_j) + 2r)`, with extra factors `cos θ_j` and `cos 2θ_j` for `b`, `c`.
pub fn pp_abc(r: f64, n: usize) -> Result<(f64, f64, f64)> {
    if !(r > 0.0) {
        return Err(Error::arg(format!("noise ratio must be positive, got {r}")));
    }
    if n < 3 {
        return Err(Error::arg("cycle length must be at least 3"));
    }
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for j in 0..n {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
        let half = (theta / 2.0).sin();
        // 2(1 - cos θ) = 4 sin²(θ/2)
        let inv = 1.0 / (4.0 * half * half + 2.0 * r);
        a += inv;
        b += theta.cos() * inv;
        c += (2.0 * theta).cos() * inv;
    }
    let nf = n as f64;
    Ok((a / nf, b / nf, c / nf))
}

/// Eigenvalues `(k1, k2, k3)` of `[[b-c, a+c, b-a], [a-b, 2b, a-b], [b-a, a+c, b-c]]`:
/// `k2 = a - c` and `k1 >= k3` are the roots of `x² - (4b-a-c) x + 2(2b² - a² - ac)`.
pub fn pp_k_eigs(a: f64, b: f64, c: f64) -> Result<[f64; 3]> {
    let s = 4.0 * b - a - c;
    let p = 2.0 * (2.0 * b * b - a * a - a * c);
    let mut disc = s * s - 4.0 * p;
    if disc < 0.0 {
        if disc < -1e-12 * (1.0 + s * s) {
            return Err(Error::numeric(format!("negative discriminant {disc}")));
        }
        disc = 0.0;
    }
    let root = disc.sqrt();
    Ok([(s + root) / 2.0, a - c, (s - root) / 2.0])
}

/// Monte Carlo estimate of `W · Pr(k1 y1² + k2 y2² + k3 y3² >= threshold)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl DeltaEstimate {
    /// Estimate plus three standard errors, the value used for feasibility checks.
    pub fn conservative(&self) -> f64 {
        self.estimate + 3.0 * self.std_error
    }
}

/// Pre-drawn squared standard normals, reused across evaluations so that
/// calibration sweeps see common random numbers.
pub struct QuadFormSampler {
    squares: Vec<[f64; 3]>,
}

impl QuadFormSampler {
    pub fn new(samples: usize, seed: u64) -> Self {
        let chunks = samples.div_ceil(CHUNK);
        let squares = (0..chunks)
            .into_par_iter()
            .flat_map_iter(|ci| {
                let len = CHUNK.min(samples - ci * CHUNK);
                let mut rng = rng::stream(seed, "pp-delta", &[ci as u64]);
                (0..len)
                    .map(move |_| {
                        let mut y = [0.0; 3];
                        for v in &mut y {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            *v = z * z;
                        }
                        y
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        Self { squares }
    }

    pub fn len(&self) -> usize {
        self.squares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.squares.is_empty()
    }

    pub fn tail_count(&self, k: [f64; 3], threshold: f64) -> usize {
        self.squares
            .par_chunks(CHUNK)
            .map(|chunk| {
                chunk
                    .iter()
                    .filter(|y| k[0] * y[0] + k[1] * y[1] + k[2] * y[2] >= threshold)
                    .count()
            })
            .sum()
    }

    /// `δ` for `W` noise columns at total `eps`; requires `eps > W ln 2`.
    pub fn delta(&self, eps: f64, w: usize, k: [f64; 3]) -> Result<DeltaEstimate> {
        check_pp_preconditions(eps, w)?;
        let threshold = 2.0 * eps / w as f64 - 2.0 * std::f64::consts::LN_2;
        let n = self.len();
        let p = self.tail_count(k, threshold) as f64 / n as f64;
        let wf = w as f64;
        Ok(DeltaEstimate {
            estimate: wf * p,
            std_error: wf * (p * (1.0 - p) / n as f64).sqrt(),
            samples: n,
        })
    }
}

fn check_pp_preconditions(eps: f64, w: usize) -> Result<()> {
    if w == 0 {
        return Err(Error::arg("W must be at least 1"));
    }
    if !(eps > w as f64 * std::f64::consts::LN_2) {
        return Err(Error::arg(format!(
            "eps_PP = {eps} must exceed W ln 2 = {}",
            w as f64 * std::f64::consts::LN_2
        )));
    }
    Ok(())
}

pub fn pp_delta(
    eps: f64,
    w: usize,
    k: [f64; 3],
    samples: usize,
    seed: u64,
) -> Result<DeltaEstimate> {
    check_pp_preconditions(eps, w)?;
    if samples < 100_000 {
        return Err(Error::arg("Monte Carlo delta needs at least 1e5 samples"));
    }
    QuadFormSampler::new(samples, seed).delta(eps, w, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sigma2Calibration {
    pub sigma2: f64,
    /// `s2² / (2 s1²)`
    pub noise_ratio: f64,
    pub delta: DeltaEstimate,
}

const R_MIN: f64 = 1e-6;
const R_MAX: f64 = 1e6;

/// Smallest disturbing-noise scale whose conservative δ meets `delta_pp`, found
/// by bisection on `log r` over `[1e-6, 1e6]`.
pub fn calibrate_sigma2(
    eps: f64,
    delta_pp: f64,
    w: usize,
    n: usize,
    sigma1: f64,
    sampler: &QuadFormSampler,
) -> Result<Sigma2Calibration> {
    check_pp_preconditions(eps, w)?;
    if !(delta_pp > 0.0 && delta_pp < 1.0) {
        return Err(Error::arg("delta_PP must lie in (0, 1)"));
    }
    if !(sigma1 > 0.0) {
        return Err(Error::arg("sigma1 must be positive"));
    }
    let eval = |r: f64| -> Result<DeltaEstimate> {
        let (a, b, c) = pp_abc(r, n)?;
        sampler.delta(eps, w, pp_k_eigs(a, b, c)?)
    };
    let done = |r: f64, d: DeltaEstimate| Sigma2Calibration {
        sigma2: sigma1 * (2.0 * r).sqrt(),
        noise_ratio: r,
        delta: d,
    };

    let at_min = eval(R_MIN)?;
    if at_min.conservative() <= delta_pp {
        return Ok(done(R_MIN, at_min));
    }
    let mut hi_est = eval(R_MAX)?;
    if hi_est.conservative() > delta_pp {
        return Err(Error::calibration(format!(
            "no noise ratio in [{R_MIN:e}, {R_MAX:e}] reaches delta_PP = {delta_pp}"
        )));
    }
    let (mut lo, mut hi) = (R_MIN.ln(), R_MAX.ln());
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        let est = eval(mid.exp())?;
        if est.conservative() <= delta_pp {
            hi = mid;
            hi_est = est;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    Ok(done(hi.exp(), hi_est))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn abc_four_point_hand_sum() {
        // σ1 = σ2 = 1  ->  r = 1/2
        let (a, _, _) = pp_abc(0.5, 4).unwrap();
        assert_relative_eq!(a, 7.0 / 15.0, max_relative = 1e-14);
    }

    #[test]
    fn abc_vanish_when_s1_vanishes() {
        let (a, b, c) = pp_abc(1e12, 16).unwrap();
        assert!(a.abs() < 1e-11 && b.abs() < 1e-11 && c.abs() < 1e-11);
    }

    #[test]
    fn abc_bounds() {
        for &r in &[1e-3, 0.1, 1.0, 10.0] {
            for &n in &[3, 5, 16, 101] {
                let (a, b, c) = pp_abc(r, n).unwrap();
                assert!(a >= b && b >= -a && c.abs() <= a, "r={r} n={n}");
            }
        }
        assert!(pp_abc(0.0, 5).is_err());
        assert!(pp_abc(1.0, 2).is_err());
    }

    #[test]
    fn abc_riemann_limit() {
        // (1/2π)∫ dθ / (2(1-cosθ) + 2r) = 1 / (2 sqrt(r² + 2r))
        let r = 0.3;
        let (a3, _, _) = pp_abc(r, 1000).unwrap();
        let (a4, _, _) = pp_abc(r, 10_000).unwrap();
        assert!((a3 - a4).abs() < 1e-4);
        assert_relative_eq!(
            a4,
            1.0 / (2.0 * (r * r + 2.0 * r).sqrt()),
            max_relative = 1e-6
        );
    }

    #[test]
    fn k_eigs_trivial_cases() {
        assert_eq!(pp_k_eigs(0.0, 0.0, 0.0).unwrap(), [0.0, 0.0, 0.0]);
        let k = pp_k_eigs(0.4, 0.1, 0.4).unwrap();
        assert_eq!(k[1], 0.0);
        assert_relative_eq!(k[0] + k[2], 4.0 * 0.1 - 0.8, max_relative = 1e-14);
    }

    #[test]
    fn k_eigs_match_dense_solver() {
        for &r in &[1e-3, 0.05, 0.5, 3.0, 50.0] {
            for &n in &[3, 4, 7, 64] {
                let (a, b, c) = pp_abc(r, n).unwrap();
                let k = pp_k_eigs(a, b, c).unwrap();
                let m = Matrix3::new(
                    b - c,
                    a + c,
                    b - a,
                    a - b,
                    2.0 * b,
                    a - b,
                    b - a,
                    a + c,
                    b - c,
                );
                let mut dense: Vec<f64> = m
                    .complex_eigenvalues()
                    .iter()
                    .map(|z| {
                        assert!(z.im.abs() < 1e-9);
                        z.re
                    })
                    .collect();
                dense.sort_by(f64::total_cmp);
                let mut ours = k.to_vec();
                ours.sort_by(f64::total_cmp);
                for (x, y) in ours.iter().zip(&dense) {
                    assert!(
                        (x - y).abs() <= 1e-9 * (1.0 + y.abs()),
                        "r={r} n={n}: {ours:?} vs {dense:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn delta_zero_spectrum() {
        let d = pp_delta(1.0, 1, [0.0; 3], 100_000, 1).unwrap();
        assert_eq!(d.estimate, 0.0);
    }

    #[test]
    fn delta_matches_chi_square() {
        let d = pp_delta(2.0, 1, [1.0; 3], 1_000_000, 11).unwrap();
        let oracle = ChiSquared::new(3.0)
            .unwrap()
            .sf(4.0 - 2.0 * std::f64::consts::LN_2);
        assert!(
            (d.estimate - oracle).abs() <= 3.0 * d.std_error,
            "{} vs {oracle}",
            d.estimate
        );
    }

    #[test]
    fn delta_preconditions() {
        assert!(pp_delta(0.5, 1, [1.0; 3], 100_000, 0).is_err());
        assert!(pp_delta(2.0, 3, [1.0; 3], 100_000, 0).is_err());
        assert!(pp_delta(2.0, 1, [1.0; 3], 10, 0).is_err());
    }

    #[test]
    fn delta_monotone_in_eps() {
        let sampler = QuadFormSampler::new(200_000, 3);
        let k = [2.0, 0.5, -0.3];
        let mut prev = f64::INFINITY;
        for i in 0..20 {
            let eps = 0.7 + 0.2 * i as f64;
            let d = sampler.delta(eps, 1, k).unwrap().estimate;
            assert!(d <= prev);
            prev = d;
        }
    }

    #[test]
    fn sigma2_calibration_round_trip() {
        let sampler = QuadFormSampler::new(200_000, 5);
        let cal = calibrate_sigma2(1.0, 1e-3, 1, 1000, 1.0, &sampler).unwrap();
        assert!(cal.delta.conservative() <= 1e-3);
        let (a, b, c) = pp_abc(cal.noise_ratio, 1000).unwrap();
        let again = sampler.delta(1.0, 1, pp_k_eigs(a, b, c).unwrap()).unwrap();
        assert!(again.conservative() <= 1e-3);
        assert_relative_eq!(
            cal.sigma2,
            (2.0 * cal.noise_ratio).sqrt(),
            max_relative = 1e-12
        );

        // W = 3 violates eps_PP > W ln 2 at eps_PP = 1
        assert!(calibrate_sigma2(1.0, 1e-3, 3, 1000, 1.0, &sampler).is_err());
    }

    #[test]
    fn loose_budget_accepts_tiny_sigma2() {
        let sampler = QuadFormSampler::new(100_000, 5);
        let cal = calibrate_sigma2(400.0, 0.5, 1, 100, 1.0, &sampler).unwrap();
        assert!(cal.noise_ratio < 1e-3, "{}", cal.noise_ratio);
    }

    #[test]
    fn tighter_delta_never_shrinks_sigma2() {
        let sampler = QuadFormSampler::new(200_000, 9);
        let mut prev = 0.0;
        for &d in &[0.2, 0.1, 0.05, 0.025, 0.0125] {
            let s = calibrate_sigma2(1.5, d, 1, 200, 1.0, &sampler)
                .unwrap()
                .sigma2;
            assert!(s >= prev);
            prev = s;
        }
    }
}
