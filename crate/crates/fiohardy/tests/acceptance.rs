//! Runs every acceptance criterion with the default configuration (primary
//! grid N = 256, comparison grid N = 128) and prints one line per criterion.

use fiohardy::config::RunConfig;
use fiohardy::verify::{run_verify, write_tables};

#[test]
fn acceptance_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.report = dir.path().join("report.json");
    cfg.csv_dir = dir.path().join("tables");
    let (report_path, csv_dir) = (cfg.report.clone(), cfg.csv_dir.clone());
    let ids: Vec<u32> = (1..=10).collect();
    let (report, tables) = run_verify(cfg, &ids, |c| {
        println!("{}", c.summary_line());
        for f in c.failures() {
            println!("    {} = {:e} ({})", f.name, f.value, f.tolerance);
        }
    })
    .expect("verification runs");
    report.write_json(&report_path).unwrap();
    write_tables(&csv_dir, &tables).unwrap();
    println!("total {:.1} s on {} threads", report.total_seconds, report.threads);
    let failed: Vec<u32> = report.criteria.iter().filter(|c| !c.passed()).map(|c| c.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
