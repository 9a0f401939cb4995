//! Dataset loading, synthetic problems, and train/test splitting.
//!
//! Labels in files are arbitrary tokens; they are mapped to classes by
//! sorting the distinct values (numerically when every label parses as a
//! number, lexicographically otherwise). The first value becomes class 1 in
//! files and class 0 in memory.
//!
//! All randomness is drawn from `ChaCha8Rng::seed_from_u64(seed)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use pfbound::LabeledDataset;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Core(#[from] pfbound::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Maps label tokens to 0-based classes in sorted order.
fn remap_labels(raw: &[String]) -> (Vec<usize>, Vec<String>) {
    let numeric: Option<Vec<f64>> = raw.iter().map(|s| s.parse::<f64>().ok()).collect();
    let mut distinct: Vec<String> = raw.to_vec();
    match &numeric {
        Some(_) => {
            distinct.sort_by(|a, b| {
                a.parse::<f64>()
                    .unwrap()
                    .total_cmp(&b.parse::<f64>().unwrap())
            });
            distinct.dedup_by(|a, b| a.parse::<f64>().unwrap() == b.parse::<f64>().unwrap());
        }
        None => {
            distinct.sort();
            distinct.dedup();
        }
    }
    let labels = raw
        .iter()
        .map(|s| match &numeric {
            Some(_) => {
                let v: f64 = s.parse().unwrap();
                distinct
                    .iter()
                    .position(|d| d.parse::<f64>().unwrap() == v)
                    .unwrap()
            }
            None => distinct.iter().position(|d| d == s).unwrap(),
        })
        .collect();
    (labels, distinct)
}

/// Parses sparse `label idx:val ...` text with 1-based feature indices.
/// Blank lines and `#` comments are skipped.
pub fn parse_svmlight(text: &str) -> Result<LabeledDataset> {
    let mut raw_labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut p = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| DataError::Parse {
            line: lineno + 1,
            msg,
        };
        let mut tokens = line.split_whitespace();
        let label = tokens.next().unwrap();
        raw_labels.push(label.to_string());
        let mut row = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("expected idx:val, got {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(format!("bad feature index {idx:?}")))?;
            if idx == 0 {
                return Err(err("feature indices are 1-based".into()));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| err(format!("bad feature value {val:?}")))?;
            if !val.is_finite() {
                return Err(err(format!("non-finite feature value {val}")));
            }
            p = p.max(idx);
            row.push((idx - 1, val));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DataError::Domain("svmlight input has no samples".into()));
    }
    let p = p.max(1);
    let mut features = vec![0.0; rows.len() * p];
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            features[i * p + j] = v;
        }
    }
    let (labels, classes) = remap_labels(&raw_labels);
    Ok(LabeledDataset::new(features, labels, classes.len(), p)?)
}

pub fn load_svmlight(path: &Path) -> Result<LabeledDataset> {
    parse_svmlight(&read(path)?)
}

/// Writes 1-based labels and the nonzero features at full precision.
pub fn to_svmlight(data: &LabeledDataset) -> String {
    let mut out = String::new();
    for (x, y) in data.iter() {
        write!(out, "{}", y + 1).unwrap();
        for (j, v) in x.iter().enumerate() {
            if *v != 0.0 {
                write!(out, " {}:{}", j + 1, v).unwrap();
            }
        }
        out.push('\n');
    }
    out
}

/// How non-numeric CSV columns are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Categorical {
    /// Any non-numeric cell is a parse error.
    Reject,
    /// Levels are sorted and coded 0, 1, 2, ... in a single column.
    Integer,
    /// One binary column per level.
    OneHot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvReport {
    pub dropped_rows: usize,
    /// Output column names after encoding.
    pub columns: Vec<String>,
    pub classes: Vec<String>,
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c == "?"
}

/// Loads a CSV with a header row. Rows with a missing cell (empty or `?`)
/// are dropped and counted.
pub fn parse_csv(
    text: &str,
    label_col: usize,
    categorical: Categorical,
) -> Result<(LabeledDataset, CsvReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| DataError::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let width = header.len();
    if label_col >= width {
        return Err(DataError::Domain(format!(
            "label column {label_col} out of range for {width} columns"
        )));
    }
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    let mut dropped = 0;
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| DataError::Parse {
            line,
            msg: e.to_string(),
        })?;
        if rec.len() != width {
            return Err(DataError::Parse {
                line,
                msg: format!("expected {width} cells, found {}", rec.len()),
            });
        }
        if rec.iter().any(is_missing) {
            dropped += 1;
            continue;
        }
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    if rows.is_empty() {
        return Err(DataError::Domain("CSV has no complete rows".into()));
    }

    enum Col {
        Numeric,
        Levels(Vec<String>),
    }
    let mut encoders = Vec::new();
    let mut columns = Vec::new();
    for c in (0..width).filter(|&c| c != label_col) {
        let numeric = rows.iter().all(|(_, r)| r[c].parse::<f64>().is_ok());
        if numeric {
            encoders.push((c, Col::Numeric));
            columns.push(header[c].clone());
            continue;
        }
        if categorical == Categorical::Reject {
            let (line, r) = rows
                .iter()
                .find(|(_, r)| r[c].parse::<f64>().is_err())
                .unwrap();
            return Err(DataError::Parse {
                line: *line,
                msg: format!("non-numeric cell {:?} in column {:?}", r[c], header[c]),
            });
        }
        let mut levels: Vec<String> = rows.iter().map(|(_, r)| r[c].clone()).collect();
        levels.sort();
        levels.dedup();
        match categorical {
            Categorical::OneHot => {
                for l in &levels {
                    columns.push(format!("{}={}", header[c], l));
                }
            }
            _ => columns.push(header[c].clone()),
        }
        encoders.push((c, Col::Levels(levels)));
    }

    let p = columns.len();
    if p == 0 {
        return Err(DataError::Domain("CSV has no feature columns".into()));
    }
    let mut features = Vec::with_capacity(rows.len() * p);
    for (_, r) in &rows {
        for (c, enc) in &encoders {
            match enc {
                Col::Numeric => features.push(r[*c].parse::<f64>().unwrap()),
                Col::Levels(levels) => {
                    let pos = levels.iter().position(|l| *l == r[*c]).unwrap();
                    if categorical == Categorical::OneHot {
                        features
                            .extend((0..levels.len()).map(|k| if k == pos { 1.0 } else { 0.0 }));
                    } else {
                        features.push(pos as f64);
                    }
                }
            }
        }
    }
    let raw_labels: Vec<String> = rows.iter().map(|(_, r)| r[label_col].clone()).collect();
    let (labels, classes) = remap_labels(&raw_labels);
    let data = LabeledDataset::new(features, labels, classes.len(), p)?;
    Ok((
        data,
        CsvReport {
            dropped_rows: dropped,
            columns,
            classes,
        },
    ))
}

pub fn load_csv(
    path: &Path,
    label_col: usize,
    categorical: Categorical,
) -> Result<(LabeledDataset, CsvReport)> {
    parse_csv(&read(path)?, label_col, categorical)
}

/// Parameters of a synthetic multiclass logistic-regression problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    /// Raw input dimension `p`.
    pub d: usize,
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    /// Scale of the true parameter vector; larger means more separable.
    #[serde(default = "default_separation")]
    pub separation: f64,
    /// Probability that a label is replaced by a uniformly random class.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_separation() -> f64 {
    3.0
}

impl SynthSpec {
    /// Accepts strict JSON or the relaxed `{d:5,n:3,T:1000}` form.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if let Ok(spec) = serde_json::from_str::<SynthSpec>(text) {
            return Ok(spec);
        }
        let body = text.trim_start_matches('{').trim_end_matches('}');
        let mut map = serde_json::Map::new();
        for pair in body.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = pair
                .split_once(':')
                .ok_or_else(|| DataError::Domain(format!("bad synthetic spec entry {pair:?}")))?;
            let k = k.trim().trim_matches('"');
            let v: serde_json::Value = serde_json::from_str(v.trim())
                .map_err(|_| DataError::Domain(format!("bad value for {k:?} in synthetic spec")))?;
            map.insert(k.to_string(), v);
        }
        serde_json::from_value(serde_json::Value::Object(map))
            .map_err(|e| DataError::Domain(format!("synthetic spec: {e}")))
    }
}

/// Draws a dataset from a random ground-truth model.
///
/// `theta_true` has i.i.d. `N(0, separation^2 / p)` entries (block-one-hot
/// layout, `n * p`), inputs are `N(0, I_p)`, labels are sampled from the
/// model's softmax and then replaced by a uniform class with probability
/// `noise`.
pub fn synth_logreg(spec: &SynthSpec) -> Result<(LabeledDataset, Vec<f64>)> {
    if spec.d == 0 || spec.n == 0 || spec.t == 0 {
        return Err(DataError::Domain("synthetic sizes must be positive".into()));
    }
    if !(0.0..=1.0).contains(&spec.noise) || !(spec.separation >= 0.0) {
        return Err(DataError::Domain(
            "noise must be in [0, 1] and separation >= 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p = spec.d;
    let scale = spec.separation / (p as f64).sqrt();
    let theta: Vec<f64> = (0..spec.n * p)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let map = pfbound::FeatureMap::block_one_hot(spec.n, p);
    let mut features = Vec::with_capacity(spec.t * p);
    let mut labels = Vec::with_capacity(spec.t);
    for _ in 0..spec.t {
        let x: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let probs = pfbound::linear_model::predict_proba(&theta, &x, &map);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut y = spec.n - 1;
        for (c, pr) in probs.iter().enumerate() {
            acc += pr;
            if u < acc {
                y = c;
                break;
            }
        }
        let flip: f64 = rng.gen();
        if flip < spec.noise {
            y = rng.gen_range(0..spec.n);
        }
        features.extend_from_slice(&x);
        labels.push(y);
    }
    Ok((LabeledDataset::new(features, labels, spec.n, p)?, theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum Scale {
    None,
    /// Each row divided by its Euclidean norm.
    UnitNorm,
    /// Columns centered and divided by their standard deviation.
    Standardize,
}

/// Fitted preprocessing, derived from training rows only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Scaler {
    None,
    UnitNorm,
    Standardize { means: Vec<f64>, stds: Vec<f64> },
}

impl Scaler {
    pub fn fit(kind: Scale, train: &LabeledDataset) -> Self {
        match kind {
            Scale::None => Scaler::None,
            Scale::UnitNorm => Scaler::UnitNorm,
            Scale::Standardize => {
                let p = train.input_dim();
                let t = train.len() as f64;
                let mut means = vec![0.0; p];
                for (x, _) in train.iter() {
                    for (m, v) in means.iter_mut().zip(x) {
                        *m += v / t;
                    }
                }
                let mut vars = vec![0.0; p];
                for (x, _) in train.iter() {
                    for ((s, v), m) in vars.iter_mut().zip(x).zip(&means) {
                        *s += (v - m) * (v - m) / t;
                    }
                }
                let stds = vars
                    .into_iter()
                    .map(|v| if v > 0.0 { v.sqrt() } else { 1.0 })
                    .collect();
                Scaler::Standardize { means, stds }
            }
        }
    }

    pub fn apply(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        let p = data.input_dim();
        let mut features = data.features().to_vec();
        match self {
            Scaler::None => {}
            Scaler::UnitNorm => {
                for row in features.chunks_exact_mut(p) {
                    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        row.iter_mut().for_each(|v| *v /= norm);
                    }
                }
            }
            Scaler::Standardize { means, stds } => {
                for row in features.chunks_exact_mut(p) {
                    for ((v, m), s) in row.iter_mut().zip(means).zip(stds) {
                        *v = (*v - m) / s;
                    }
                }
            }
        }
        Ok(LabeledDataset::new(
            features,
            data.labels().to_vec(),
            data.n_classes(),
            p,
        )?)
    }
}

/// Seeded shuffle split; the scaler is fit on the training part only.
pub fn split_and_scale(
    data: &LabeledDataset,
    test_frac: f64,
    seed: u64,
    scale: Scale,
) -> Result<(LabeledDataset, LabeledDataset, Scaler)> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(DataError::Domain("test fraction must lie in (0, 1)".into()));
    }
    let t = data.len();
    let n_test = (t as f64 * test_frac).round() as usize;
    if n_test == 0 || n_test == t {
        return Err(DataError::Domain(format!(
            "split of {t} rows at {test_frac} leaves one side empty"
        )));
    }
    let mut order: Vec<usize> = (0..t).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (test_idx, train_idx) = order.split_at(n_test);
    let train = data.subset(train_idx)?;
    let test = data.subset(test_idx)?;
    let scaler = Scaler::fit(scale, &train);
    Ok((scaler.apply(&train)?, scaler.apply(&test)?, scaler))
}

/// SHA-256 over dimensions, labels and little-endian feature bytes.
pub fn fingerprint(data: &LabeledDataset) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for v in [data.len(), data.input_dim(), data.n_classes()] {
        h.update((v as u64).to_le_bytes());
    }
    for y in data.labels() {
        h.update((*y as u64).to_le_bytes());
    }
    for x in data.features() {
        h.update(x.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Class counts, handy for reports.
pub fn class_counts(data: &LabeledDataset) -> BTreeMap<usize, usize> {
    let mut counts = BTreeMap::new();
    for y in data.labels() {
        *counts.entry(*y).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svmlight_basic() {
        let d = parse_svmlight("1 1:0.5 3:-2\n2 2:1").unwrap();
        assert_eq!(d.features(), &[0.5, 0.0, -2.0, 0.0, 1.0, 0.0]);
        assert_eq!(d.labels(), &[0, 1]);
        assert_eq!(d.n_classes(), 2);
    }

    #[test]
    fn svmlight_empty_and_malformed() {
        assert!(matches!(parse_svmlight(""), Err(DataError::Domain(_))));
        match parse_svmlight("1 1:0.5\n2 2-1\n") {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_svmlight("1 0:1\n").is_err());
    }

    #[test]
    fn svmlight_signed_labels_remap() {
        let d = parse_svmlight("+1 1:1\n-1 1:2\n+1 1:3\n").unwrap();
        assert_eq!(d.labels(), &[1, 0, 1]);
    }

    #[test]
    fn csv_numeric_label_last() {
        let (d, rep) = parse_csv("a,y\n0.5,1\n1.5,2\n", 1, Categorical::Reject).unwrap();
        assert_eq!(d.input_dim(), 1);
        assert_eq!(d.labels(), &[0, 1]);
        assert_eq!(rep.dropped_rows, 0);
    }

    #[test]
    fn csv_one_hot_and_integer_codes() {
        let text = "c,x,y\nred,1,a\ngreen,2,b\nblue,3,a\n";
        let (d, rep) = parse_csv(text, 2, Categorical::OneHot).unwrap();
        assert_eq!(d.input_dim(), 4);
        assert_eq!(rep.columns, vec!["c=blue", "c=green", "c=red", "x"]);
        assert_eq!(d.x(0), &[0.0, 0.0, 1.0, 1.0]);
        let (d, _) = parse_csv(text, 2, Categorical::Integer).unwrap();
        assert_eq!(d.input_dim(), 2);
        assert_eq!(d.x(1), &[1.0, 2.0]);
        assert!(matches!(
            parse_csv(text, 2, Categorical::Reject),
            Err(DataError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn csv_drops_incomplete_rows() {
        let (d, rep) =
            parse_csv("a,b,y\n1,2,0\n3,,1\n4,?,1\n5,6,1\n", 2, Categorical::Reject).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(rep.dropped_rows, 2);
    }

    #[test]
    fn synth_spec_relaxed_syntax() {
        let s = SynthSpec::parse("{d:5,n:3,T:1000,separation:2.5,seed:9}").unwrap();
        assert_eq!((s.d, s.n, s.t, s.seed), (5, 3, 1000, 9));
        assert_eq!(s.separation, 2.5);
        let j = SynthSpec::parse(r#"{"d":5,"n":3,"T":10,"noise":0.1}"#).unwrap();
        assert_eq!(j.noise, 0.1);
    }

    #[test]
    fn synth_is_deterministic() {
        let spec = SynthSpec {
            d: 4,
            n: 3,
            t: 50,
            separation: 2.0,
            noise: 0.1,
            seed: 5,
        };
        assert_eq!(synth_logreg(&spec).unwrap(), synth_logreg(&spec).unwrap());
    }

    #[test]
    fn separable_limit_gives_bayes_accuracy_one() {
        let spec = SynthSpec {
            d: 5,
            n: 3,
            t: 500,
            separation: 1e6,
            noise: 0.0,
            seed: 1,
        };
        let (data, theta) = synth_logreg(&spec).unwrap();
        let map = pfbound::FeatureMap::block_one_hot(3, 5);
        assert_eq!(pfbound::linear_model::accuracy(&theta, &data, &map), 1.0);
    }

    #[test]
    fn split_sizes_and_scaling() {
        let spec = SynthSpec {
            d: 3,
            n: 2,
            t: 10,
            separation: 1.0,
            noise: 0.0,
            seed: 2,
        };
        let (data, _) = synth_logreg(&spec).unwrap();
        let (tr, te, _) = split_and_scale(&data, 0.5, 0, Scale::None).unwrap();
        assert_eq!((tr.len(), te.len()), (5, 5));
        assert!(split_and_scale(&data, 0.01, 0, Scale::None).is_err());
        assert!(split_and_scale(&data, 1.0, 0, Scale::None).is_err());

        let (tr, _, _) = split_and_scale(&data, 0.3, 0, Scale::UnitNorm).unwrap();
        for (x, _) in tr.iter() {
            let n: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
        let spec = SynthSpec {
            d: 3,
            n: 2,
            t: 200,
            separation: 1.0,
            noise: 0.0,
            seed: 2,
        };
        let (data, _) = synth_logreg(&spec).unwrap();
        let (tr, _, _) = split_and_scale(&data, 0.25, 0, Scale::Standardize).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = tr.iter().map(|(x, _)| x[j]).collect();
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let v = col.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / col.len() as f64;
            assert!(m.abs() < 1e-10 && (v - 1.0).abs() < 1e-8);
        }
    }
}
