//! Encode text with cl100k_base and show how it splits.
//!
//! ```bash
//! cargo run -p glitchscan --example tokenize -- " atrigesimal"
//! cargo run -p glitchscan --example tokenize -- "text" path/to/cl100k_base.tiktoken
//! ```

use anyhow::Result;
use glitchscan::vocab::load_vocabulary;

const DEFAULT_VOCAB: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/cl100k_base.tiktoken");

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let text = args.next().unwrap_or_else(|| "atrigesimal vs  atrigesimal".to_string());
    let path = args.next().unwrap_or_else(|| DEFAULT_VOCAB.to_string());

    let vocab = load_vocabulary(&path)?;
    println!("{} entries, fingerprint {}", vocab.len(), &vocab.fingerprint()[..16]);

    for piece in vocab.pieces(&text) {
        print!("[{:?}] ", &text[piece]);
    }
    println!();

    for tok in vocab.encode_with_spans(&text)? {
        let entry = vocab.decode_token(tok.id)?;
        println!("{:>6}  {:>3}..{:<3} {:?}", tok.id, tok.span.start, tok.span.end, String::from_utf8_lossy(&entry.bytes));
    }
    Ok(())
}
