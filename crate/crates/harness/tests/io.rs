use pfbound::LabeledDataset;
use pfbound_harness::data_io::{
    fingerprint, load_csv, parse_csv, parse_svmlight, split_and_scale, synth_logreg, to_svmlight,
    Categorical, DataError, Scale, SynthSpec,
};
use proptest::collection::vec;
use proptest::prelude::*;

proptest! {
    #[test]
    fn svmlight_round_trip(
        n in 2usize..5,
        p in 1usize..6,
        rows in vec((vec(-5.0..5.0f64, 6), 0usize..5), 1..20),
    ) {
        // Every class occurs and the last column has a nonzero, so the
        // reader recovers the same shape.
        let t = rows.len() + n;
        let mut feats = Vec::with_capacity(t * p);
        let mut labels = Vec::with_capacity(t);
        for (i, (x, y)) in rows.iter().enumerate() {
            feats.extend_from_slice(&x[..p]);
            labels.push(if i < n { i } else { y % n });
        }
        for c in rows.len()..t {
            feats.extend(std::iter::repeat_n(1.5, p));
            labels.push((c - rows.len()) % n);
        }
        let data = LabeledDataset::new(feats, labels, n, p).unwrap();
        let back = parse_svmlight(&to_svmlight(&data)).unwrap();
        prop_assert_eq!(back.features(), data.features());
        prop_assert_eq!(back.labels(), data.labels());
        prop_assert_eq!(fingerprint(&back), fingerprint(&data));
    }
}

#[test]
fn svmlight_rejects_malformed_lines() {
    assert!(matches!(
        parse_svmlight("1 1:0.5\n2 0:1.0\n"),
        Err(DataError::Parse { line: 2, .. })
    ));
    assert!(matches!(
        parse_svmlight("1 3\n"),
        Err(DataError::Parse { line: 1, .. })
    ));
    assert!(parse_svmlight("# only a comment\n").is_err());
}

#[test]
fn svmlight_labels_are_sorted_numerically() {
    let data = parse_svmlight("10 1:1\n-1 1:2\n2 2:3\n").unwrap();
    assert_eq!(data.labels(), &[2, 0, 1]);
    assert_eq!(data.input_dim(), 2);
}

#[test]
fn csv_drops_missing_rows_and_encodes_levels() {
    let text =
        "age,work,label\n39,private,<=50K\n?,gov,>50K\n50,gov,>50K\n28,,<=50K\n41,self,<=50K\n";
    let (data, report) = parse_csv(text, 2, Categorical::Integer).unwrap();
    assert_eq!(report.dropped_rows, 2);
    assert_eq!(data.len(), 3);
    assert_eq!(data.features(), &[39.0, 1.0, 50.0, 0.0, 41.0, 2.0]);
    assert_eq!(data.labels(), &[0, 1, 0]);

    let (hot, report) = parse_csv(text, 2, Categorical::OneHot).unwrap();
    assert_eq!(hot.input_dim(), 4);
    assert_eq!(report.columns.len(), 4);
    assert_eq!(hot.x(1), &[50.0, 1.0, 0.0, 0.0]);

    assert!(parse_csv(text, 2, Categorical::Reject).is_err());
    assert!(parse_csv(text, 3, Categorical::Integer).is_err());
}

#[test]
fn csv_from_disk_matches_parse() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let text = "a,b,y\n1,2,x\n3,4,y\n";
    std::fs::write(&path, text).unwrap();
    let (from_file, _) = load_csv(&path, 2, Categorical::Reject).unwrap();
    let (from_text, _) = parse_csv(text, 2, Categorical::Reject).unwrap();
    assert_eq!(from_file, from_text);
    assert!(matches!(
        load_csv(&dir.path().join("missing.csv"), 0, Categorical::Reject),
        Err(DataError::Io { .. })
    ));
}

#[test]
fn synthetic_data_is_seeded() {
    let spec = SynthSpec::parse("{d:4,n:3,T:200,seed:9}").unwrap();
    let (a, ta) = synth_logreg(&spec).unwrap();
    let (b, tb) = synth_logreg(&spec).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta, tb);
    assert_eq!((a.len(), a.input_dim(), a.n_classes()), (200, 4, 3));
    let other = synth_logreg(&SynthSpec { seed: 10, ..spec }).unwrap().0;
    assert_ne!(fingerprint(&a), fingerprint(&other));
    assert!(SynthSpec::parse("{d:4,n:3,T:200,bogus:1}").is_err());
}

/// Standardization statistics must come from the training rows only. A
/// scaler fit on all rows would leave the training columns off zero mean.
#[test]
fn scaler_is_fit_on_training_rows_only() {
    let t = 40;
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    for i in 0..t {
        feats.push(i as f64 * i as f64);
        feats.push(if i % 3 == 0 {
            100.0
        } else {
            -2.0 + i as f64 * 0.1
        });
        labels.push(i % 2);
    }
    let data = LabeledDataset::new(feats, labels, 2, 2).unwrap();
    let (train, test, _) = split_and_scale(&data, 0.25, 5, Scale::Standardize).unwrap();
    assert_eq!((train.len(), test.len()), (30, 10));
    for j in 0..2 {
        let col: Vec<f64> = (0..train.len()).map(|i| train.x(i)[j]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64;
        assert!(mean.abs() < 1e-12, "column {j} mean {mean}");
        assert!((var - 1.0).abs() < 1e-12, "column {j} variance {var}");
    }
    let test_mean: f64 = (0..test.len()).map(|i| test.x(i)[0]).sum::<f64>() / test.len() as f64;
    assert!(test_mean.abs() > 1e-6);
}

#[test]
fn unit_norm_rows() {
    let spec = SynthSpec::parse("{d:6,n:2,T:100,seed:1}").unwrap();
    let (data, _) = synth_logreg(&spec).unwrap();
    let (train, test, _) = split_and_scale(&data, 0.2, 0, Scale::UnitNorm).unwrap();
    for set in [&train, &test] {
        for (x, _) in set.iter() {
            let n2: f64 = x.iter().map(|v| v * v).sum();
            assert!((n2 - 1.0).abs() < 1e-12);
        }
    }
    assert!(split_and_scale(&data, 0.0, 0, Scale::None).is_err());
}
