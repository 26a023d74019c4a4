//! Shared fixtures for the benchmarks.

use maskboost::{gen_synthetic, Dataset, FeatureMatrix, GradPair, SyntheticSpec, VerticalSplit};

/// Synthetic data split into the active party's dataset and the passive party's features.
pub fn two_party(n: usize, d_ap: usize, d_pp: usize, seed: u64) -> (Dataset, FeatureMatrix) {
    let spec = SyntheticSpec {
        n,
        d_ap,
        d_pp,
        balance: 0.5,
        label_noise: 0.05,
        seed,
    };
    let data = gen_synthetic(&spec).expect("valid synthetic spec");
    VerticalSplit::leading(d_ap, d_ap + d_pp)
        .apply(&data)
        .expect("leading split covers all columns")
}

/// Gradients at the zero margin.
pub fn root_gradients(labels: &[u8]) -> GradPair {
    maskboost::grad_hess(labels, &vec![0.0; labels.len()]).expect("labels and margins align")
}
