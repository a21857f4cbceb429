use std::fs;
use std::path::PathBuf;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use selfclone::ssp::{canonical_ssp_text, parse_ssp_output, random_rating, Intensity, SupportType};

fn sample() -> String {
    fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ssp_sample_result.txt")).unwrap()
}

#[test]
fn stored_sample_parses_to_documented_structure() {
    let r = parse_ssp_output(&sample()).unwrap();
    let expect = [
        (SupportType::Informational, Intensity::Low, vec!["situational appraisals"]),
        (SupportType::Esteem, Intensity::High, vec!["compliments", "validations"]),
        (SupportType::Emotional, Intensity::High, vec!["understanding or empathy", "encouragement"]),
    ];
    for (t, i, subs) in &expect {
        let e = r.early.entry(*t).unwrap();
        assert_eq!((e.intensity, &e.subcategories, e.none_identified), (*i, &subs.iter().map(|s| s.to_string()).collect(), false));
    }
    assert!(r.late.entry(SupportType::Informational).unwrap().none_identified);
    assert_eq!(r.late.entry(SupportType::Esteem).unwrap().subcategories, ["compliments"]);
    assert_eq!(r.late.entry(SupportType::Emotional).unwrap().subcategories, ["encouragement"]);
    assert_eq!(parse_ssp_output(&canonical_ssp_text(&r)).unwrap(), r);
}

#[test]
fn thousand_random_ratings_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let r = random_rating(&mut rng);
        let text = canonical_ssp_text(&r);
        let back = parse_ssp_output(&text).unwrap();
        assert_eq!(back, r, "{text}");
        assert_eq!(back.early.entries, r.early.entries);
    }
}

proptest! {
    #[test]
    fn parser_is_total(s in ".{0,300}") {
        let _ = parse_ssp_output(&s);
    }

    #[test]
    fn parser_is_total_near_the_grammar(
        parts in proptest::collection::vec(
            prop_oneof![
                Just("**Early Segment**".to_string()),
                Just("**Late Segment**".to_string()),
                Just("Esteem Support (High):".to_string()),
                Just("Emotional Support (low)".to_string()),
                Just("Informational Support ():".to_string()),
                Just(" compliments, ".to_string()),
                Just("None identified.".to_string()),
                Just(" and ".to_string()),
                "[a-z ,.()*:]{0,12}",
            ],
            0..12,
        )
    ) {
        let text = parts.concat();
        if let Ok(r) = parse_ssp_output(&text) {
            for seg in [&r.early, &r.late] {
                for e in &seg.entries {
                    for sub in &e.subcategories {
                        prop_assert!(e.support.subcategories().contains(&sub.as_str()));
                    }
                    prop_assert!(!e.none_identified || e.subcategories.is_empty());
                }
            }
        }
    }
}
