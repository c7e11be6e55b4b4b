//! Synthetic labeled feature tables with a planted class signal.
//!
//! Informative features are relationship and risk measures. Each is a
//! monotone transform of a latent score that is standard normal for NC
//! rows. C rows get a mild lift on every informative latent and a strong
//! lift on one of them, picked at random per row, so each informative
//! feature identifies its own share of C rows. Noise features ignore the label.

use hyperforest::contracts::{
    ContractType, FeatureGroup, FeatureSchema, FeatureSpec, GovernmentOrder, Label, ProcedureType, SupplierSize,
};
use hyperforest::dataset::Dataset;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    pub n_rows: usize,
    /// NC rows per C row.
    pub ratio: f64,
    pub n_informative: usize,
    pub n_noise: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams { n_rows: 9200, ratio: 45.0, n_informative: 4, n_noise: 6 }
    }
}

const MILD_LIFT: f64 = 0.5;
const STRONG_LIFT: f64 = 3.5;

/// Informative features in order of use.
const INFORMATIVE: [(&str, FeatureGroup); 8] = [
    ("SPW", FeatureGroup::Risk),
    ("T.Spending", FeatureGroup::Relationship),
    ("RAD", FeatureGroup::Risk),
    ("Fav", FeatureGroup::Risk),
    ("CPW", FeatureGroup::Risk),
    ("T.Cont", FeatureGroup::Relationship),
    ("T.AD", FeatureGroup::Relationship),
    ("ActiveWeeks", FeatureGroup::Relationship),
];

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn transform(name: &str, z: f64) -> f64 {
    match name {
        "SPW" => (8.0 + 0.8 * z).exp(),
        "T.Spending" => (11.0 + z).exp(),
        "RAD" => logistic(z - 1.0),
        "Fav" => logistic(z - 1.5),
        "CPW" => (0.5 * z - 1.0).exp(),
        "T.Cont" => (1.0 + 0.7 * z).exp().floor() + 1.0,
        "T.AD" => (0.5 + 0.8 * z).exp().floor(),
        _ => (1.5 + 0.6 * z).exp().floor().clamp(1.0, 53.0),
    }
}

enum Noise {
    Week,
    Spending,
    Levels(Vec<String>),
    Gaussian,
}

fn noise_features(n: usize) -> Vec<(FeatureSpec, Noise)> {
    let fixed = [
        (FeatureSpec::numeric("BeginningWeek", FeatureGroup::Contract), Noise::Week),
        (
            FeatureSpec::categorical("GO", FeatureGroup::Contract, GovernmentOrder::codes()),
            Noise::Levels(GovernmentOrder::codes()),
        ),
        (FeatureSpec::numeric("EndingWeek", FeatureGroup::Contract), Noise::Week),
        (
            FeatureSpec::categorical("PT", FeatureGroup::Contract, ProcedureType::codes()),
            Noise::Levels(ProcedureType::codes()),
        ),
        (FeatureSpec::numeric("Spending", FeatureGroup::Contract), Noise::Spending),
        (
            FeatureSpec::categorical("S", FeatureGroup::Contract, SupplierSize::codes()),
            Noise::Levels(SupplierSize::codes()),
        ),
        (
            FeatureSpec::categorical("CT", FeatureGroup::Contract, ContractType::codes()),
            Noise::Levels(ContractType::codes()),
        ),
    ];
    let mut out: Vec<(FeatureSpec, Noise)> = fixed.into_iter().take(n).collect();
    for k in out.len()..n {
        out.push((FeatureSpec::numeric(&format!("noise_{}", k + 1), FeatureGroup::Other), Noise::Gaussian));
    }
    out
}

/// `(C, NC)` row counts: `round(n / (ratio + 1))` C rows, the rest NC.
pub fn class_sizes(n_rows: usize, ratio: f64) -> (usize, usize) {
    let c = (n_rows as f64 / (ratio + 1.0)).round() as usize;
    (c, n_rows - c)
}

pub fn informative_names(n: usize) -> Vec<&'static str> {
    INFORMATIVE.iter().take(n).map(|(name, _)| *name).collect()
}

/// Generate the table: informative features first, then noise.
pub fn generate(params: &SynthParams, seed: u64) -> Result<Dataset, CliError> {
    if !params.ratio.is_finite() || params.ratio < 1.0 {
        return Err(CliError::Config(format!("ratio must be at least 1, got {}", params.ratio)));
    }
    if params.n_informative == 0 || params.n_informative > INFORMATIVE.len() {
        return Err(CliError::Config(format!("n_informative must be in 1..={}", INFORMATIVE.len())));
    }
    let (c, nc) = class_sizes(params.n_rows, params.ratio);
    if c == 0 || nc == 0 {
        return Err(CliError::Config(format!("{} rows at ratio {} leave a class empty", params.n_rows, params.ratio)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<Label> = std::iter::repeat_n(Label::C, c).chain(std::iter::repeat_n(Label::NC, nc)).collect();
    labels.shuffle(&mut rng);

    let informative = &INFORMATIVE[..params.n_informative];
    let noise = noise_features(params.n_noise);
    let mut specs: Vec<FeatureSpec> =
        informative.iter().map(|(name, group)| FeatureSpec::numeric(name, *group)).collect();
    specs.extend(noise.iter().map(|(s, _)| s.clone()));
    let schema = FeatureSchema::new(specs).map_err(|e| CliError::Internal(e.to_string()))?;

    let mut rows = Vec::with_capacity(params.n_rows);
    for label in &labels {
        let strong = rng.gen_range(0..informative.len());
        let mut row = Vec::with_capacity(schema.len());
        for (j, (name, _)) in informative.iter().enumerate() {
            let mut z: f64 = rng.sample(StandardNormal);
            if *label == Label::C {
                z += MILD_LIFT + if j == strong { STRONG_LIFT } else { 0.0 };
            }
            row.push(transform(name, z));
        }
        for (_, kind) in &noise {
            row.push(match kind {
                Noise::Week => f64::from(rng.gen_range(1u32..=53)),
                Noise::Spending => (9.0 + 1.5 * rng.sample::<f64, _>(StandardNormal)).exp(),
                Noise::Levels(levels) => rng.gen_range(0..levels.len()) as f64,
                Noise::Gaussian => rng.sample(StandardNormal),
            });
        }
        rows.push(row);
    }
    Ok(Dataset::from_rows(schema, &rows, &labels))
}
