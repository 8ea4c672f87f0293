//! Seeded synthetic traffic-like data for tests, benches and smoke runs.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::dataset::Dataset;
use crate::data::schema::{Label, Schema};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub normal: usize,
    pub abnormal: usize,
    /// Distance between class means in units of the noise scale.
    pub separation: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            normal: 200,
            abnormal: 200,
            separation: 2.0,
            seed: 0,
        }
    }
}

fn labels(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Vec<Label> {
    let mut l: Vec<Label> = std::iter::repeat_n(Label::Normal, cfg.normal)
        .chain(std::iter::repeat_n(Label::Abnormal, cfg.abnormal))
        .collect();
    // interleave so files do not come sorted by class
    for i in (1..l.len()).rev() {
        let j = rng.random_range(0..=i);
        l.swap(i, j);
    }
    l
}

/// Gaussian clusters in `width` dimensions, L2-normalized per row.
pub fn synthetic_dataset(cfg: &SyntheticConfig, width: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let direction: Vec<f64> = (0..width)
        .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    let scale = cfg.separation / (width as f64).sqrt();
    let labels = labels(cfg, &mut rng);
    let mut features = Vec::with_capacity(labels.len() * width);
    for l in &labels {
        let shift = if *l == Label::Abnormal { scale } else { 0.0 };
        for d in &direction {
            features.push(3.0 + shift * d + 0.5 * noise.sample(&mut rng));
        }
    }
    let names = (0..width).map(|i| format!("f{i}")).collect();
    let ds = Dataset::new(names, features, labels, Vec::new()).expect("consistent shape");
    ds.l2_normalized().0
}

/// CSV text in the layout of `schema`. A handful of numeric columns carry
/// class signal, two of them near-duplicates; categorical columns lean
/// towards one value per class; the rest is noise or constant.
pub fn synthetic_csv(schema: Schema, cfg: &SyntheticConfig) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let labels = labels(cfg, &mut rng);
    let names = schema.feature_names();
    let mut out = String::new();
    if schema == Schema::UnswNb15 {
        out.push_str(&schema.header().join(","));
        out.push('\n');
    }
    let cat_values: [&[&str]; 3] = match schema {
        Schema::UnswNb15 => [&["tcp", "udp", "arp"], &["-", "http", "dns"], &["FIN", "INT", "CON"]],
        Schema::NslKdd => [&["tcp", "udp", "icmp"], &["http", "private", "ftp_data"], &["SF", "S0", "REJ"]],
    };
    for (row, l) in labels.iter().enumerate() {
        let y = if *l == Label::Abnormal { 1.0 } else { 0.0 };
        let mut fields: Vec<String> = Vec::with_capacity(names.len() + 3);
        if schema == Schema::UnswNb15 {
            fields.push((row + 1).to_string());
        }
        let mut cat = 0;
        let mut signal = 0.0;
        for (j, name) in names.iter().enumerate() {
            if schema.is_categorical(name) {
                let vals = cat_values[cat];
                cat += 1;
                let pick = if rng.random_bool(0.7) { y as usize } else { rng.random_range(0..vals.len()) };
                fields.push(vals[pick].to_string());
                continue;
            }
            let v = match j % 7 {
                0 => 5.0 + cfg.separation * y + noise.sample(&mut rng),
                1 => {
                    signal = 10.0 + 2.0 * cfg.separation * y + noise.sample(&mut rng);
                    signal
                }
                2 => 2.0 * signal + 0.01 * noise.sample(&mut rng),
                3 => 0.0,
                4 => 1.0 + 0.5 * cfg.separation * y + noise.sample(&mut rng),
                _ => 4.0 + noise.sample(&mut rng),
            };
            let mut s = String::new();
            let _ = write!(s, "{:.6}", v.abs());
            fields.push(s);
        }
        match schema {
            Schema::UnswNb15 => {
                fields.push(if y > 0.0 { "Exploits" } else { "Normal" }.to_string());
                fields.push((y as u8).to_string());
            }
            Schema::NslKdd => {
                fields.push(if y > 0.0 { "neptune" } else { "normal" }.to_string());
                fields.push("20".to_string());
            }
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load::{parse_records, Labels};

    #[test]
    fn csv_parses_for_both_schemas() {
        let cfg = SyntheticConfig {
            normal: 20,
            abnormal: 30,
            ..Default::default()
        };
        for schema in [Schema::UnswNb15, Schema::NslKdd] {
            let text = synthetic_csv(schema, &cfg);
            let raw = parse_records(text.as_bytes(), "syn", schema, Labels::Required).unwrap();
            assert_eq!(raw.len(), 50);
            let abnormal = raw.records.iter().filter(|r| r.label == Some(Label::Abnormal)).count();
            assert_eq!(abnormal, 30);
        }
    }

    #[test]
    fn dataset_is_normalized_and_seeded() {
        let cfg = SyntheticConfig::default();
        let a = synthetic_dataset(&cfg, 13);
        assert_eq!(a, synthetic_dataset(&cfg, 13));
        for s in a.samples() {
            let n: f64 = s.features.iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }
}
