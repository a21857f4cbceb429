//! Render every prompt kind for one participant and print its hash.
//!
//! cargo run --example render_prompts -- Jordan

use selfclone::prompt::{opening_message, render_prompt, residual_placeholders, PromptBindings, PromptKind};
use selfclone::ssp::{canonical_ssp_text, fallback_rating};

fn main() {
    let name = std::env::args().nth(1).unwrap_or_else(|| "Jordan".into());
    let bindings = PromptBindings::name(&name)
        .with_chatlog(format!("{name}: I have a deadline I keep avoiding.\nFriend: What feels hardest about it?"))
        .with_ssp_result(canonical_ssp_text(&fallback_rating()));
    for kind in PromptKind::ALL {
        let rendered = render_prompt(kind, &bindings).expect("render");
        assert!(residual_placeholders(&rendered.system_text).is_empty());
        println!("== {kind:?} ({} bytes, sha256 {})", rendered.system_text.len(), &rendered.sha256()[..12]);
        if let Ok(opener) = opening_message(kind, &name) {
            println!("   opener: {opener}");
        }
    }
    let scs = render_prompt(PromptKind::SelfCloneSsp, &bindings).unwrap();
    println!("\n{}", scs.system_text);
}
