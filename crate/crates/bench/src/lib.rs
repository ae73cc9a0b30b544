//! Fixtures shared by the benchmarks.

use rtw_core::classifier::{build_reference_bank, BuildConfig};
use rtw_core::synth::{generate_dataset, SynthDataset, SynthSpec};
use rtw_core::{ReferenceBank, RunConfig};

/// The five-class, 16-dimensional warped dataset used for accuracy checks.
pub fn dataset(train_per_class: usize) -> SynthDataset {
    generate_dataset(&SynthSpec {
        n_classes: 5,
        prototype_length: 40,
        d_model: 16,
        warp_strength: 0.5,
        noise_sigma: 0.05,
        train_per_class,
        test_per_class: 4,
        seed: 0,
    })
    .expect("fixed spec generates")
}

pub fn bank(ds: &SynthDataset, cfg: &BuildConfig) -> ReferenceBank {
    build_reference_bank(&ds.train, cfg).expect("fixture bank builds").bank
}

pub fn classification_config() -> RunConfig {
    RunConfig::preset("paper-4.4").expect("built-in preset")
}

pub fn attention_config() -> RunConfig {
    RunConfig::preset("paper-4.3").expect("built-in preset")
}
