use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::noise::NoiseMatrix;
use crate::boost::GradPair;
use crate::error::{Error, Result};
use crate::rng;

/// Per-candidate noised statistics plus the plaintext node totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisedResponse {
    pub g: Vec<Vec<f64>>,
    /// Absent in gradient-only mode, where the passive party counts instances instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<Vec<f64>>>,
    pub total_g: f64,
    pub total_h: f64,
}

impl NoisedResponse {
    pub fn l(&self) -> usize {
        self.g.len()
    }
}

/// Uniform draw on the sphere of radius `sqrt(c)` in `w` dimensions.
pub fn sphere_coefficients<R: Rng + ?Sized>(w: usize, c: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let z: Vec<f64> = (0..w).map(|_| rng.sample(StandardNormal)).collect();
        let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            let scale = c.sqrt() / norm;
            return z.into_iter().map(|x| x * scale).collect();
        }
    }
}

fn mix(base: &[f64], coef: &[f64], columns: &[Vec<f64>]) -> Vec<f64> {
    let mut out = base.to_vec();
    for (c, b) in coef.iter().zip(columns) {
        for (o, x) in out.iter_mut().zip(b) {
            *o += c * x;
        }
    }
    out
}

/// `<g>_i = g + Σ_k c_ik b_ik` and `<h>_i = h + Σ_k d_ik b_ik` with a shared radius² `c`.
pub fn information_noising(
    noise: &[NoiseMatrix],
    gp: &GradPair,
    c: f64,
    seed: u64,
) -> Result<NoisedResponse> {
    information_noising_with(noise, gp, &vec![c; noise.len()], seed, false)
}

/// As [`information_noising`] with one radius² per candidate; `gradient_only`
/// omits the Hessian release.
pub fn information_noising_with(
    noise: &[NoiseMatrix],
    gp: &GradPair,
    radii: &[f64],
    seed: u64,
    gradient_only: bool,
) -> Result<NoisedResponse> {
    if radii.len() != noise.len() {
        return Err(Error::arg("one radius per noise matrix is required"));
    }
    if let Some(c) = radii.iter().find(|c| !(**c >= 0.0 && c.is_finite())) {
        return Err(Error::arg(format!(
            "C must be finite and non-negative, got {c}"
        )));
    }
    if noise.iter().any(|b| b.n() != gp.len() || b.w() == 0) {
        return Err(Error::arg(
            "noise matrices and gradients cover different instance counts",
        ));
    }
    let pairs: Vec<(Vec<f64>, Option<Vec<f64>>)> = noise
        .par_iter()
        .zip(radii)
        .map(|(b, &c)| {
            let mut rng = rng::stream(seed, "coef", &[b.candidate as u64]);
            let cs = sphere_coefficients(b.w(), c, &mut rng);
            let ds = sphere_coefficients(b.w(), c, &mut rng);
            let g = mix(&gp.g, &cs, &b.columns);
            let h = (!gradient_only).then(|| mix(&gp.h, &ds, &b.columns));
            (g, h)
        })
        .collect();
    let (g, h): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let h = if gradient_only {
        None
    } else {
        Some(h.into_iter().map(Option::unwrap).collect())
    };
    Ok(NoisedResponse {
        g,
        h,
        total_g: gp.g.iter().sum(),
        total_h: gp.h.iter().sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::noise::noise_calibration;
    use crate::protocol::splitting::{build_splitting_vector, CategoricalMatrix};

    fn setup() -> (CategoricalMatrix, Vec<NoiseMatrix>, GradPair) {
        let x = [0.3, 1.2, -0.4, 2.2, 0.9, -1.0];
        let m = CategoricalMatrix::new(vec![
            build_splitting_vector(&x, 0.5, 0),
            build_splitting_vector(&x, 1.0, 0),
        ])
        .unwrap();
        let b = noise_calibration(&m, 1.0, 0.3, 3, 5).unwrap();
        let gp = GradPair::new(
            vec![0.5, -0.5, 0.2, -0.1, 0.3, -0.7],
            vec![0.25, 0.25, 0.16, 0.09, 0.21, 0.21],
        )
        .unwrap();
        (m, b, gp)
    }

    #[test]
    fn zero_radius_is_identity() {
        let (_, b, gp) = setup();
        let r = information_noising(&b, &gp, 0.0, 1).unwrap();
        for i in 0..2 {
            assert_eq!(r.g[i], gp.g);
            assert_eq!(r.h.as_ref().unwrap()[i], gp.h);
        }
        assert_eq!(r.total_g, gp.g.iter().sum::<f64>());
        assert_eq!(r.total_h, gp.h.iter().sum::<f64>());
    }

    #[test]
    fn sphere_radius_and_single_column_sign() {
        let mut rng = rng::stream(3, "t", &[]);
        for w in 1..6 {
            let c = sphere_coefficients(w, 2.5, &mut rng);
            assert!((c.iter().map(|x| x * x).sum::<f64>() - 2.5).abs() < 1e-12);
        }
        let c = sphere_coefficients(1, 4.0, &mut rng);
        assert_eq!(c[0].abs(), 2.0);
    }

    #[test]
    fn noise_lies_in_span() {
        let (m, b, gp) = setup();
        let r = information_noising(&b, &gp, 2.0, 9).unwrap();
        for i in 0..2 {
            // lossless parts cancel on the active set: only m·r remains
            let diff: Vec<f64> = r.g[i].iter().zip(&gp.g).map(|(a, b)| a - b).collect();
            let lhs = m.column(i).dot(&r.g[i]) - m.column(i).dot(&gp.g);
            assert!((lhs - m.column(i).dot(&diff)).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_only_omits_hessians() {
        let (_, b, gp) = setup();
        let r = information_noising_with(&b, &gp, &[1.0, 1.0], 1, true).unwrap();
        assert!(r.h.is_none());
        assert!(information_noising(&b, &gp, -1.0, 1).is_err());
    }
}
