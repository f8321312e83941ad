//! Keep blocklisted tokens out of an input by inserting spaces.

use glitchscan::guard::{find_blocked, perturb, GuardError};
use glitchscan::vocab::load_vocabulary;
use glitchscan::Blocklist;

const VOCAB: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/cl100k_base.tiktoken");

fn main() -> anyhow::Result<()> {
    let vocab = load_vocabulary(VOCAB)?;
    let blocked = Blocklist::new([43587], &vocab)?;

    for text in ["atrigesimal", "the atrigesimal of it", "quadragesimal"] {
        let hits = find_blocked(text, &vocab, &blocked)?;
        let out = perturb(text, &vocab, &blocked)?;
        println!("{text:?}: {} hits -> {:?} {:?}", hits.len(), out.text, vocab.encode(&out.text)?);
    }

    // A token that already starts with a space cannot be split this way.
    let leading = Blocklist::new([vocab.encode(" the")?[0]], &vocab)?;
    match perturb("over the top", &vocab, &leading) {
        Err(GuardError::Unresolvable { surviving, text }) => println!("unresolvable {surviving:?} in {text:?}"),
        other => println!("{other:?}"),
    }
    Ok(())
}
