//! Simulate a cohort against the scripted model, export it and print the
//! analysis summary.
//!
//! cargo run --release --example simulate_cohort -- 60 42

use std::sync::Arc;

use selfclone::dataset::{build_dataset, to_csv_string};
use selfclone::report::{build_report, ReportOptions};
use selfclone::simulate::{simulate, SimConfig};
use selfclone::store::Store;

fn main() {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u64>().expect("integer"));
    let n = args.next().unwrap_or(60) as usize;
    let seed = args.next().unwrap_or(42);

    let store = Arc::new(Store::in_memory());
    simulate(store.clone(), &SimConfig::new(n, seed)).expect("simulate");
    let rows = store.read(|s| build_dataset(s, None)).expect("dataset");
    let csv = to_csv_string(&rows).unwrap();
    println!("{} rows, {} CSV bytes\n", rows.len(), csv.len());

    let report = build_report(&rows, &ReportOptions { seed, ..ReportOptions::default() }).expect("report");
    print!("{}", report.summary());
}
