//! Walk one participant through a full primary session against a scripted
//! model: screening, surveys, friend chat, self-clone chat, post-study
//! surveys. The same calls back the HTTP API.
//!
//! cargo run --example scripted_session

use std::collections::BTreeMap;
use std::sync::Arc;

use selfclone::clock::ManualClock;
use selfclone::gateway::{FnStub, Gateway, ModelConfig, StubStep};
use selfclone::instruments::InstrumentId;
use selfclone::orchestrator::{Registration, Study};
use selfclone::prompt::{detect_kind, PromptKind};
use selfclone::session::{Gender, Phase, ScreeningAnswers};
use selfclone::ssp::{canonical_ssp_text, fallback_rating};
use selfclone::store::Store;

fn answers(id: InstrumentId) -> BTreeMap<String, i64> {
    let spec = id.spec();
    let mid = (spec.scale_min + spec.scale_max + 1) / 2;
    spec.items.iter().map(|i| (i.key.clone(), mid)).collect()
}

fn main() {
    let clock = Arc::new(ManualClock::new(1_700_000_000_000));
    let c = clock.clone();
    let backend = Arc::new(FnStub::new(move |req| {
        c.advance(1200);
        match detect_kind(&req.system) {
            Some(PromptKind::SspAnalysis) => StubStep::reply(canonical_ssp_text(&fallback_rating())),
            Some(kind) => StubStep::reply(format!("[{kind:?}] reply to turn {}", req.history.len())),
            None => StubStep::reply("..."),
        }
    }));
    let gateway = Gateway::new(backend, ModelConfig::default(), clock.clone()).unwrap();
    let study = Study::new(Arc::new(Store::in_memory()), gateway, clock.clone(), 42);

    let reg = Registration { display_name: "Jordan".into(), gender: Gender::NonBinary, screening: ScreeningAnswers::clean(27) };
    let p = study.register(&reg).unwrap();
    println!("registered {} in condition {:?}", p.id, p.condition);

    let sid = study.create_session(&p.id).unwrap().id;
    loop {
        let s = study.session(&sid).unwrap();
        for id in s.missing_instruments(s.phase) {
            study.submit_survey(&sid, id, &answers(id), None).unwrap();
        }
        if s.phase == Phase::FriendChat || s.phase == Phase::MainChat {
            let ui = study.ui_state(&sid).unwrap();
            let need = ui.minimum_required.unwrap_or(0);
            for i in ui.user_message_count..need {
                clock.advance(9_000);
                let reply = study.post_user_message(&sid, &format!("message {}", i + 1)).unwrap();
                if i + 1 == need {
                    println!("  last reply in {:?}: {}", s.phase, reply.text);
                }
            }
        }
        if s.phase == Phase::Complete {
            break;
        }
        let next = study.advance(&sid).unwrap();
        println!("{:?} -> {:?}", s.phase, next.phase);
    }
    let s = study.session(&sid).unwrap();
    println!(
        "done: {} friend and {} main messages, prompt sha256 {}",
        s.friend_transcript.messages.len(),
        s.main_transcript.messages.len(),
        s.compiled_main_prompt.as_ref().map(|p| p.sha256()[..12].to_string()).unwrap_or_default()
    );
}
