//! Parse a support-strategy rating, print it, and re-serialize it canonically.
//!
//! cargo run --example ssp_roundtrip [rating.txt]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use selfclone::ssp::{canonical_ssp_text, parse_ssp_output, random_rating};

fn main() {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path).expect("read rating"),
        None => canonical_ssp_text(&random_rating(&mut ChaCha8Rng::seed_from_u64(3))),
    };
    let rating = match parse_ssp_output(&text) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("unparseable rating: {e}");
            std::process::exit(1);
        }
    };
    for stage in [&rating.early, &rating.late] {
        for e in &stage.entries {
            println!("{:5} {:13} {:?} {:?}", stage.segment.to_string(), e.support.label(), e.intensity, e.subcategories);
        }
    }
    let canonical = canonical_ssp_text(&rating);
    assert_eq!(parse_ssp_output(&canonical).unwrap(), rating);
    println!("\n{canonical}");
}
