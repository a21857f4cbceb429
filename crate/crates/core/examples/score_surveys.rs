//! Score a questionnaire from item values and build a z-score composite.
//!
//! cargo run --example score_surveys

use selfclone::instruments::{
    believability_group, instrument_schema, score_tweets, score_ues, score_values, zscore_composite, InstrumentId,
};

fn main() {
    for spec in instrument_schema().instruments {
        println!("{:14} {} items, {}-{}", spec.id.as_str(), spec.items.len(), spec.scale_min, spec.scale_max);
    }

    let tweets = score_tweets(&[4, 5, 3, 4, 4, 2]).unwrap();
    println!("\nTWEETS total {} = cognitive {} + emotional {}", tweets.total, tweets.cognitive, tweets.emotional);

    let ues = score_ues(&[4, 4, 5, 2, 1, 2, 4, 3, 4, 5, 4, 4]).unwrap();
    println!("UES FA {:.2} PU {:.2} AE {:.2} RW {:.2} total {:.2}", ues.fa, ues.pu, ues.ae, ues.rw, ues.total);

    let cmots = score_values(InstrumentId::Cmots, &[4, 5, 3, 4, 5, 4]);
    match cmots {
        Ok(s) => println!("CMOTS subscales {:?}", s.subscale_scores),
        Err(e) => println!("CMOTS: {e}"),
    }

    for b in 1..=5 {
        println!("believability {b} -> {}", believability_group(b).unwrap().as_str());
    }

    let rows = vec![vec![5.0, 3.2], vec![6.0, 4.1], vec![3.5, 2.0], vec![4.0, 3.9]];
    let z = zscore_composite(&rows).unwrap();
    println!("composite {z:.3?}");
}
