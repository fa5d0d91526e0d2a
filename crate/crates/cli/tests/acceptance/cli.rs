//! Porcelain output of validate, route and report against the golden files.

use crate::support::{fixture, golden, sampling, seed, Outcome};
use crate::{ensure, Verdict};

fn compare(name: &str, code: i32, got: Outcome) -> Result<(), String> {
    ensure(got.code == code, || format!("{name}: exit {} (expected {code}): {}", got.code, got.stderr.trim()))?;
    let want = std::fs::read_to_string(golden(name)).map_err(|e| format!("{name}: {e}"))?;
    ensure(want == got.stdout, || format!("{name}: output differs from golden file"))
}

pub fn check() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("data");
    let registry = fixture("registry.json");
    let date = "2024-03-05";
    compare(
        "validate_bad_porcelain",
        2,
        sampling(&data, &["--porcelain", "validate", &fixture("worksheet_bad.txt"), "--registry", &registry]),
    )?;
    compare(
        "ingest_porcelain",
        0,
        sampling(&data, &["--porcelain", "ingest", &fixture("worksheet.txt"), "--registry", &registry]),
    )?;
    seed(&data);
    let cases: [(&str, Vec<&str>); 5] = [
        ("route_porcelain", vec!["--porcelain", "route", "--date", date, "--start", "P-000"]),
        ("route_k3_porcelain", vec!["--porcelain", "route", "--date", date, "--k", "3"]),
        ("progress_porcelain", vec!["--porcelain", "report", "progress", "--date", date]),
        ("performance_porcelain", vec!["--porcelain", "report", "performance", "--from", "2024-03-01", "--to", "2024-03-31"]),
        ("feedback_porcelain", vec!["--porcelain", "report", "feedback", "--from", date]),
    ];
    for (name, args) in &cases {
        compare(name, 0, sampling(&data, args))?;
    }
    Ok(format!("{} porcelain outputs match their golden files", cases.len() + 2))
}
