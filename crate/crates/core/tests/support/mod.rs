#![allow(dead_code)]

pub mod oracle;
pub mod properties;

use std::path::{Path, PathBuf};

use kmfm::dataset::{
    fetch_uci, Column, DatasetError, MissingPolicy, MixedDataset, MixedSchema, UciDataset,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Raw UCI files shipped with the repository.
pub fn local_uci_dir(dataset: UciDataset) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/uci")
        .join(dataset.name())
}

/// Populate `cache` from the repository copy; errors when it is absent.
pub fn fetch_local(dataset: UciDataset, cache: &Path) -> Result<PathBuf, DatasetError> {
    fetch_uci(dataset, cache, Some(&local_uci_dir(dataset)))
}

/// Two planted clusters: 4 numerical columns with cluster means at ±1.2 and
/// unit noise, 3 categorical columns whose dominant level depends on the
/// cluster. Labels are "c0"/"c1", balanced.
pub fn planted_mixed(n: usize, seed: u64) -> MixedDataset {
    let levels = [
        vec!["a", "b", "c"],
        vec!["x", "y"],
        vec!["p", "q", "r", "s"],
    ];
    let mut columns: Vec<Column> = (0..4)
        .map(|j| Column::Numerical {
            name: format!("x{j}"),
        })
        .collect();
    for (j, lv) in levels.iter().enumerate() {
        columns.push(Column::Categorical {
            name: format!("c{j}"),
            levels: lv.iter().map(|s| s.to_string()).collect(),
        });
    }
    let schema = MixedSchema::new(columns).expect("valid schema");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let cluster = i % 2;
        let sign = if cluster == 0 { -1.0 } else { 1.0 };
        let mut rec: Vec<String> = (0..4)
            .map(|_| {
                let noise = standard_normal(&mut rng);
                format!("{:?}", sign * 1.2 + noise)
            })
            .collect();
        for lv in &levels {
            let dominant = if cluster == 0 { 0 } else { lv.len() - 1 };
            let level = if rng.random::<f64>() < 0.8 {
                dominant
            } else {
                rng.random_range(0..lv.len())
            };
            rec.push(lv[level].to_string());
        }
        records.push(rec);
        labels.push(format!("c{cluster}"));
    }
    MixedDataset::from_records(schema, &records, Some(&labels), None, MissingPolicy::Error)
        .expect("planted data encodes")
}

/// Box-Muller; `1 - u` keeps the logarithm finite.
pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u = 1.0 - rng.random::<f64>();
    let v: f64 = rng.random();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

/// Pipeline settings for [`planted_mixed`]: shallow nets, four projection
/// directions and a 1e-3 ridge scale.
pub fn planted_config(master_seed: u64) -> kmfm::pipeline::PipelineConfig {
    let mut cfg = kmfm::pipeline::PipelineConfig::default();
    cfg.network.kappa_num = 2;
    cfg.network.kappa_cat = 2;
    cfg.dims = 4;
    cfg.ridge_scale = 1e-3;
    cfg.master_seed = master_seed;
    cfg
}
