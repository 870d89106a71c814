use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nmt_core::data::cache::{read_bank, write_bank};
use nmt_core::data::{ingest_csv, ingest_reader, CsvSchema, IngestOptions};
use nmt_core::{Error, Exec};
use rand::seq::SliceRandom;
use rand::SeedableRng;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/sidf_3x4x120.csv")
}

/// Series per (store, item), read with plain string splitting. Rows are
/// already in date order in the fixture.
fn series_oracle() -> BTreeMap<(String, String), Vec<f64>> {
    let text = std::fs::read_to_string(fixture()).unwrap();
    let mut out: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        out.entry((f[1].to_string(), f[2].to_string()))
            .or_default()
            .push(f[3].parse().unwrap());
    }
    out
}

#[test]
fn fixture_yields_twelve_tasks_of_105_windows() {
    let (bank, report) = ingest_csv(&fixture(), &CsvSchema::store_item(), &IngestOptions::default(), Exec::Sequential)
        .unwrap();
    assert_eq!(report.rows, 1440);
    assert_eq!(report.tasks, 12);
    assert!(report.dropped.is_empty());
    assert_eq!(report.windows, 12 * 105);
    assert_eq!(bank.len(), 12);
    assert_eq!(bank.vocab.vendor.size(), 4);
    assert_eq!(bank.vocab.product.size(), 5);
    for t in &bank.tasks {
        assert_eq!((t.windows_pre.len(), t.windows_post.len(), t.windows_eval.len()), (42, 42, 21));
    }
    bank.validate().unwrap();
}

#[test]
fn windows_follow_the_raw_series() {
    let (bank, _) = ingest_csv(&fixture(), &CsvSchema::store_item(), &IngestOptions::default(), Exec::Sequential)
        .unwrap();
    let oracle = series_oracle();
    assert_eq!(bank.tasks.len(), oracle.len());
    for t in &bank.tasks {
        let s = &oracle[&(t.key.vendor.clone(), t.key.product.clone())];
        for (i, w) in t.all_windows().enumerate() {
            assert_eq!(w.lags, s[i..i + 15]);
            assert_eq!(w.target, s[i + 15]);
            assert_eq!(bank.vocab.vendor.token(w.vendor_idx), Some(t.key.vendor.as_str()));
            assert_eq!(bank.vocab.product.token(w.product_idx), Some(t.key.product.as_str()));
        }
    }
}

#[test]
fn row_order_does_not_matter() {
    let text = std::fs::read_to_string(fixture()).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let header = lines.remove(0);
    lines.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(1));
    let shuffled = format!("{header}\n{}\n", lines.join("\n"));
    let opts = IngestOptions::default();
    let schema = CsvSchema::store_item();
    let (a, _) = ingest_csv(&fixture(), &schema, &opts, Exec::Sequential).unwrap();
    let (b, _) = ingest_reader(shuffled.as_bytes(), Path::new("shuffled"), &schema, &opts, Exec::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn all_tasks_too_short_is_an_empty_bank() {
    let opts = IngestOptions {
        lag: 15,
        min_length: Some(121),
    };
    let err = ingest_csv(&fixture(), &CsvSchema::store_item(), &opts, Exec::Sequential).unwrap_err();
    assert!(matches!(err, Error::EmptyBank { dropped: 12 }));
}

#[test]
fn bank_cache_round_trips() {
    let (bank, _) = ingest_csv(&fixture(), &CsvSchema::store_item(), &IngestOptions::default(), Exec::Sequential)
        .unwrap();
    let mut bytes = Vec::new();
    write_bank(&bank, &mut bytes).unwrap();
    let back = read_bank(&bytes[..]).unwrap();
    assert_eq!(back, bank);
    let normalized = bank.normalized();
    let mut bytes = Vec::new();
    write_bank(&normalized, &mut bytes).unwrap();
    assert_eq!(read_bank(&bytes[..]).unwrap(), normalized);
}
