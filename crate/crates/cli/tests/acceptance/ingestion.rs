//! Worksheet export/parse/validate round trips and row-level rejection.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sampling_core::domain::{Registry, SamplingTask};
use sampling_core::ingestion::{export_worksheet, parse_worksheet, validate_records, ValidationContext, WorksheetFormat};

use crate::{ensure, Verdict};

const SHEETS: u64 = 50;
const HEADER: &str = "Sampling Zone;Sampling Method;Sampling Point;Sampling Execution Date";
const POINTS: [(&str, &str); 5] = [("Z-A", "P-101"), ("Z-A", "P-102"), ("Z-A", "P-103"), ("Z-B", "P-201"), ("Z-B", "P-202")];
const METHODS: [&str; 3] = ["M-TOC", "M-CFU", "M-COND"];

type Damage = fn(&mut Vec<String>);

/// Damage applied to one line, with the rejection code it must produce.
const DAMAGE: [(Damage, &str); 6] = [
    (|f| f[0] = "Z-NOPE".into(), "UnknownZone"),
    (|f| f[1] = "M-NOPE".into(), "UnknownMethod"),
    (|f| f[2] = "P-NOPE".into(), "UnknownPoint"),
    (|f| f[3] = "2024-02-30".into(), "BadDate"),
    (|f| drop(f.pop()), "Malformed"),
    (|f| f.push("surplus".into()), "Malformed"),
];

fn registry() -> Registry {
    serde_json::from_str(
        r#"{"zones":[{"zone_id":"Z-A","name":"A"},{"zone_id":"Z-B","name":"B"}],
            "points":[
              {"point_id":"P-101","zone_id":"Z-A","coords":{"x":0.1,"y":0.2},"water_type":"PurifiedWater"},
              {"point_id":"P-102","zone_id":"Z-A","coords":{"x":0.4,"y":0.2},"water_type":"PurifiedWater"},
              {"point_id":"P-103","zone_id":"Z-A","coords":{"x":0.7,"y":0.9},"water_type":"CondensedPurifiedSteam"},
              {"point_id":"P-201","zone_id":"Z-B","coords":{"x":0.5,"y":0.5},"water_type":"PurifiedWater"},
              {"point_id":"P-202","zone_id":"Z-B","coords":{"x":0.9,"y":0.1},"water_type":"PurifiedWater"}],
            "methods":[{"method_id":"M-TOC","key_steps":["flush","fill"]},
                       {"method_id":"M-CFU","key_steps":["flush","fill","seal"]},
                       {"method_id":"M-COND","key_steps":["fill"]}]}"#,
    )
    .unwrap()
}

type Identity = (String, String, String, String, String);

fn identities(tasks: &[SamplingTask]) -> BTreeMap<Identity, usize> {
    let mut out = BTreeMap::new();
    for t in tasks {
        let key = (
            t.task_id.to_string(),
            t.zone_id.to_string(),
            t.point_id.to_string(),
            t.method_id.to_string(),
            t.execution_date.to_string(),
        );
        *out.entry(key).or_default() += 1;
    }
    out
}

fn ingest(bytes: &[u8], registry: &Registry) -> Result<(Vec<SamplingTask>, sampling_core::ingestion::IngestReport), String> {
    let records = parse_worksheet(bytes, WorksheetFormat::DelimitedText).map_err(|e| e.to_string())?;
    Ok(validate_records(&records, &ValidationContext::new(registry)))
}

/// Distinct rows in random order.
fn random_rows(rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut rows: Vec<String> = (0..rng.gen_range(0..60))
        .map(|_| {
            let (zone, point) = POINTS[rng.gen_range(0..POINTS.len())];
            let method = METHODS[rng.gen_range(0..METHODS.len())];
            format!("{zone};{method};{point};2024-03-{:02}", rng.gen_range(1..=4))
        })
        .collect();
    rows.sort();
    rows.dedup();
    for i in (1..rows.len()).rev() {
        rows.swap(i, rng.gen_range(0..=i));
    }
    rows
}

pub fn check() -> Verdict {
    let registry = registry();
    let (mut rows_seen, mut damaged_seen) = (0, 0);
    for seed in 0..SHEETS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = random_rows(&mut rng);
        let sheet = format!("{HEADER}\n{}\n", rows.join("\n"));
        let (first, report) = ingest(sheet.as_bytes(), &registry)?;
        ensure(report.accepted_count == rows.len(), || format!("seed {seed}: clean rows rejected"))?;
        let exported = export_worksheet(&first);
        let (second, _) = ingest(&exported, &registry)?;
        ensure(identities(&first) == identities(&second), || format!("seed {seed}: identities changed on re-import"))?;

        let mut lines = rows.clone();
        let mut expected: BTreeMap<usize, &str> = BTreeMap::new();
        for (i, line) in lines.iter_mut().enumerate() {
            if rng.gen_bool(0.25) {
                let (damage, code) = DAMAGE[rng.gen_range(0..DAMAGE.len())];
                let mut fields: Vec<String> = line.split(';').map(str::to_owned).collect();
                damage(&mut fields);
                *line = fields.join(";");
                expected.insert(i + 1, code);
            }
        }
        let sheet = format!("{HEADER}\n{}\n", lines.join("\n"));
        let (accepted, report) = ingest(sheet.as_bytes(), &registry)?;
        ensure(report.total() == rows.len(), || format!("seed {seed}: {} of {} rows counted", report.total(), rows.len()))?;
        ensure(report.accepted_count == accepted.len() && accepted.len() == rows.len() - expected.len(), || {
            format!("seed {seed}: {} accepted, expected {}", accepted.len(), rows.len() - expected.len())
        })?;
        let got: BTreeMap<usize, &str> = report.rejected.iter().map(|r| (r.row, r.reason.code())).collect();
        ensure(got == expected, || format!("seed {seed}: rejections {got:?}, expected {expected:?}"))?;
        rows_seen += rows.len();
        damaged_seen += expected.len();
    }
    Ok(format!("{SHEETS} worksheets, {rows_seen} rows, {damaged_seen} damaged rows rejected at the right line"))
}
