//! WDBC loading, normalisation, feature assignment and resampling.
//!
//! Input layout (one row per patient, no header):
//! `id,diagnosis,f1,...,f30` with diagnosis `M` or `B`.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::{Error, Label, Result, Rng};

pub const WDBC_FEATURES: usize = 30;
const WDBC_FIELDS: usize = WDBC_FEATURES + 2;

/// The WDBC table shipped with the crate.
const BUNDLED_WDBC: &str = include_str!("../data/wdbc.data");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `(x - min) / (max - min)` per feature.
    #[default]
    MinMax,
    /// z-score per feature, then `clamp(0.5 + z / 4, 0, 1)`: the mean maps
    /// to the cube's midpoint and +-2 standard deviations span `[0,1]`.
    Standardized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub label: Label,
    pub raw: Vec<f64>,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub rows: Vec<Record>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub normalization: Normalization,
}

impl Dataset {
    pub fn feature_count(&self) -> usize {
        self.min.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn malignant_count(&self) -> usize {
        self.rows.iter().filter(|r| r.label == Label::Malignant).count()
    }

    /// Builds a dataset from raw rows. Statistics are taken over every row;
    /// zero-range features normalise to 0.
    pub fn from_raw(rows: Vec<(String, Label, Vec<f64>)>, normalization: Normalization) -> Result<Self> {
        let width = rows.first().map_or(0, |r| r.2.len());
        if rows.iter().any(|r| r.2.len() != width) {
            return Err(Error::Input("rows have differing feature counts".into()));
        }
        let columns: Vec<Vec<f64>> = (0..width).map(|k| rows.iter().map(|r| r.2[k]).collect()).collect();
        let min: Vec<f64> = columns.iter().map(|c| c.iter().copied().fold(f64::INFINITY, f64::min)).collect();
        let max: Vec<f64> = columns.iter().map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
        let normalized: Vec<Vec<f64>> = columns.iter().map(|c| normalize_column(c, normalization)).collect();
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(j, (id, label, raw))| Record {
                id,
                label,
                features: normalized.iter().map(|col| col[j]).collect(),
                raw,
            })
            .collect();
        Ok(Self { rows, min, max, normalization })
    }

    /// Same rows, normalised again from the raw values.
    pub fn with_normalization(&self, normalization: Normalization) -> Result<Self> {
        Self::from_raw(
            self.rows.iter().map(|r| (r.id.clone(), r.label, r.raw.clone())).collect(),
            normalization,
        )
    }

    /// Writes `id,diagnosis,f1..fK` with normalised features.
    pub fn write_normalized_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (1..=self.feature_count()).map(|k| format!("f{k}")).collect();
        writeln!(out, "id,diagnosis,{}", header.join(","))?;
        for r in &self.rows {
            let vals: Vec<String> = r.features.iter().map(|v| format!("{v:.6}")).collect();
            writeln!(out, "{},{},{}", r.id, r.label.as_char(), vals.join(","))?;
        }
        Ok(())
    }
}

pub fn normalize_column(col: &[f64], normalization: Normalization) -> Vec<f64> {
    match normalization {
        Normalization::MinMax => {
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let range = hi - lo;
            col.iter()
                .map(|&v| if range > 0.0 { ((v - lo) / range).clamp(0.0, 1.0) } else { 0.0 })
                .collect()
        }
        Normalization::Standardized => {
            let n = col.len().max(1) as f64;
            let mean = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
            col.iter()
                .map(|&v| if sd > 0.0 { (0.5 + (v - mean) / sd / 4.0).clamp(0.0, 1.0) } else { 0.0 })
                .collect()
        }
    }
}

/// Parses the UCI layout. Errors name the 1-based line.
pub fn parse_wdbc(text: &str) -> Result<Vec<(String, Label, Vec<f64>)>> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != WDBC_FIELDS {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {WDBC_FIELDS} fields, found {}", fields.len()),
            });
        }
        let label = match fields[1] {
            "M" => Label::Malignant,
            "B" => Label::Benign,
            other => {
                return Err(Error::Parse { line: line_no, message: format!("unknown diagnosis {other:?}") })
            }
        };
        let raw = fields[2..]
            .iter()
            .enumerate()
            .map(|(k, s)| {
                s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("feature {} is not a number: {s:?}", k + 1),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((fields[0].to_string(), label, raw));
    }
    Ok(rows)
}

/// Loads a WDBC file with min-max normalisation.
pub fn load_wdbc(path: impl AsRef<Path>) -> Result<Dataset> {
    load_wdbc_with(path, Normalization::MinMax)
}

pub fn load_wdbc_with(path: impl AsRef<Path>, normalization: Normalization) -> Result<Dataset> {
    let text = std::fs::read_to_string(path.as_ref())?;
    Dataset::from_raw(parse_wdbc(&text)?, normalization)
}

/// The bundled 569-row table.
pub fn bundled_wdbc(normalization: Normalization) -> Dataset {
    let rows = parse_wdbc(BUNDLED_WDBC).expect("bundled WDBC table parses");
    Dataset::from_raw(rows, normalization).expect("bundled WDBC table is rectangular")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ContextSource {
    /// Context features drawn from all features, possibly shared with learners.
    #[default]
    Overlap,
    /// Context features drawn only from features no learner sees.
    Holdout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    /// Feature indices per local learner; pairwise disjoint.
    pub learners: Vec<Vec<usize>>,
    pub context: Vec<usize>,
}

/// Uniformly random disjoint feature sets of size `per_learner`, plus
/// `context_dim` context features for the ensemble.
pub fn assign_features(
    dataset: &Dataset,
    learners: usize,
    per_learner: usize,
    context_dim: usize,
    source: ContextSource,
    rng: &mut Rng,
) -> Result<Assignment> {
    let total = dataset.feature_count();
    if learners == 0 || per_learner == 0 {
        return Err(Error::Config("need at least one learner with one feature".into()));
    }
    if learners * per_learner > total {
        return Err(Error::Config(format!(
            "{learners} learners x {per_learner} features exceeds the {total} available"
        )));
    }
    let mut perm: Vec<usize> = (0..total).collect();
    perm.shuffle(rng);
    let sets: Vec<Vec<usize>> = perm.chunks(per_learner).take(learners).map(<[usize]>::to_vec).collect();
    let context = match source {
        ContextSource::Overlap => {
            if context_dim > total {
                return Err(Error::Config(format!("context of {context_dim} features exceeds {total}")));
            }
            let mut all: Vec<usize> = (0..total).collect();
            all.shuffle(rng);
            all.truncate(context_dim);
            all
        }
        ContextSource::Holdout => {
            let spare = &perm[learners * per_learner..];
            if context_dim > spare.len() {
                return Err(Error::Config(format!(
                    "context of {context_dim} features exceeds the {} unassigned",
                    spare.len()
                )));
            }
            spare[..context_dim].to_vec()
        }
    };
    Ok(Assignment { learners: sets, context })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stream {
    /// Rows eligible for sampling.
    pub pool: Vec<usize>,
    /// Sampled row per round.
    pub rows: Vec<usize>,
}

/// `horizon` i.i.d. uniform draws with replacement. With `holdout = Some(f)`,
/// `ceil(f n)` random rows are reserved for training and excluded from the
/// pool.
pub fn resample_stream(dataset: &Dataset, horizon: usize, rng: &mut Rng, holdout: Option<f64>) -> Result<Stream> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    let n = dataset.len();
    let pool: Vec<usize> = match holdout {
        None => (0..n).collect(),
        Some(f) => {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("train fraction {f} outside [0,1]")));
            }
            let reserved = (f * n as f64).ceil() as usize;
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(rng);
            let mut rest = perm.split_off(reserved.min(n));
            rest.sort_unstable();
            rest
        }
    };
    if pool.is_empty() {
        return Err(Error::Config("no rows left to sample from".into()));
    }
    let rows = (0..horizon).map(|_| pool[rng.gen_range(0..pool.len())]).collect();
    Ok(Stream { pool, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;
    use proptest::prelude::*;

    fn row(id: &str, label: &str, v: f64) -> String {
        let feats: Vec<String> = (0..WDBC_FEATURES).map(|k| format!("{}", v + k as f64)).collect();
        format!("{id},{label},{}", feats.join(","))
    }

    #[test]
    fn bundled_table_shape() {
        let ds = bundled_wdbc(Normalization::MinMax);
        assert_eq!(ds.len(), 569);
        assert_eq!(ds.feature_count(), 30);
        assert_eq!(ds.malignant_count(), 212);
        for r in &ds.rows {
            assert!(r.features.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let st = bundled_wdbc(Normalization::Standardized);
        for r in &st.rows {
            assert!(r.features.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn parse_errors_name_the_line() {
        let good = row("1", "M", 1.0);
        let short = good.rsplit_once(',').unwrap().0.to_string();
        let text = format!("{good}\n{short}\n");
        assert_eq!(
            parse_wdbc(&text).unwrap_err(),
            Error::Parse { line: 2, message: "expected 32 fields, found 31".into() }
        );
        let bad_label = row("1", "X", 1.0);
        assert!(matches!(parse_wdbc(&bad_label), Err(Error::Parse { line: 1, .. })));
        let bad_num = row("1", "B", 1.0).replacen(",1,", ",abc,", 1);
        assert!(matches!(parse_wdbc(&format!("\n{bad_num}")), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn constant_feature_normalises_to_zero() {
        let text = [row("1", "M", 1.0), row("2", "B", 1.0)].join("\n");
        let ds = Dataset::from_raw(parse_wdbc(&text).unwrap(), Normalization::MinMax).unwrap();
        assert!(ds.rows.iter().all(|r| r.features.iter().all(|&v| v == 0.0)));
        let ds = Dataset::from_raw(parse_wdbc(&text).unwrap(), Normalization::Standardized).unwrap();
        assert!(ds.rows.iter().all(|r| r.features.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn load_from_file() {
        let dir = std::env::temp_dir().join(format!("wdbc-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("wdbc.data");
        std::fs::write(&path, BUNDLED_WDBC).unwrap();
        let ds = load_wdbc(&path).unwrap();
        assert_eq!(ds, bundled_wdbc(Normalization::MinMax));
        let mut out = Vec::new();
        ds.write_normalized_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 570);
        assert!(text.starts_with("id,diagnosis,f1,"));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn assignment_examples() {
        let ds = bundled_wdbc(Normalization::MinMax);
        let mut rng = seeded_rng(0);
        let a = assign_features(&ds, 3, 10, 0, ContextSource::Overlap, &mut rng).unwrap();
        let mut all: Vec<usize> = a.learners.concat();
        all.sort_unstable();
        assert_eq!(all, (0..30).collect::<Vec<_>>());
        let a = assign_features(&ds, 30, 1, 3, ContextSource::Overlap, &mut rng).unwrap();
        assert!(a.learners.iter().all(|s| s.len() == 1));
        assert_eq!(a.context.len(), 3);
        assert!(matches!(
            assign_features(&ds, 4, 10, 0, ContextSource::Overlap, &mut rng),
            Err(Error::Config(_))
        ));
        let a = assign_features(&ds, 2, 10, 6, ContextSource::Holdout, &mut rng).unwrap();
        assert!(a.context.iter().all(|k| !a.learners.concat().contains(k)));
        assert!(assign_features(&ds, 3, 10, 1, ContextSource::Holdout, &mut rng).is_err());
    }

    #[test]
    fn resample_examples() {
        let ds = bundled_wdbc(Normalization::MinMax);
        let s = resample_stream(&ds, 10_000, &mut seeded_rng(1), None).unwrap();
        assert_eq!(s.rows.len(), 10_000);
        assert_eq!(s.pool.len(), 569);
        let h = resample_stream(&ds, 100, &mut seeded_rng(1), Some(0.5)).unwrap();
        assert_eq!(h.pool.len(), 284);
        assert!(h.rows.iter().all(|r| h.pool.binary_search(r).is_ok()));
        assert_eq!(resample_stream(&ds, 500, &mut seeded_rng(9), None).unwrap(),
                   resample_stream(&ds, 500, &mut seeded_rng(9), None).unwrap());
        assert!(resample_stream(&ds, 10, &mut seeded_rng(1), Some(1.0)).is_err());
        assert!(resample_stream(&ds, 0, &mut seeded_rng(1), None).is_err());
    }

    #[test]
    fn resampled_labels_track_pool() {
        let ds = bundled_wdbc(Normalization::MinMax);
        for seed in 0..5 {
            let s = resample_stream(&ds, 10_000, &mut seeded_rng(seed), Some(0.5)).unwrap();
            let pool_rate = s.pool.iter().filter(|&&j| ds.rows[j].label == Label::Malignant).count() as f64
                / s.pool.len() as f64;
            let rate = s.rows.iter().filter(|&&j| ds.rows[j].label == Label::Malignant).count() as f64
                / s.rows.len() as f64;
            assert!((rate - pool_rate).abs() < 0.02);
        }
    }

    proptest! {
        #[test]
        fn min_max_idempotent(col in proptest::collection::vec(-1e3f64..1e3, 1..50)) {
            let once = normalize_column(&col, Normalization::MinMax);
            let twice = normalize_column(&once, Normalization::MinMax);
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn assignment_disjoint(m in 1usize..8, d in 1usize..5, ctx in 0usize..7, seed in 0u64..1000) {
            prop_assume!(m * d <= 30);
            let ds = bundled_wdbc(Normalization::MinMax);
            let a = assign_features(&ds, m, d, ctx, ContextSource::Overlap, &mut seeded_rng(seed)).unwrap();
            let mut all = a.learners.concat();
            prop_assert_eq!(all.len(), m * d);
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all.len(), m * d);
            prop_assert_eq!(a.context.len(), ctx);
        }
    }
}
