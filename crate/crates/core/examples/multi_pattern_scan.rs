//! Aho-Corasick matching over a stream of chunks, with and without word
//! boundaries.
//!
//! ```bash
//! cargo run -p corpusforge --example multi_pattern_scan
//! ```

use corpusforge::automaton::Automaton;

fn main() {
    let patterns = [
        ("he", false),
        ("she", false),
        ("his", false),
        ("hers", false),
        ("cat", true),
        ("猫", false),
    ];
    let ac = Automaton::new(&patterns, true);
    let text = "Ushers said SHE saw his cat and a concatenated 猫.";
    for m in ac.find_all(text) {
        println!("{:>4}..{:<4} {:?}", m.start, m.end, &text[m.start..m.end]);
    }

    let mut stream = ac.stream();
    let mut found = Vec::new();
    for chunk in ["Ushers said S", "HE saw his c", "at and a concat", "enated 猫."] {
        found.extend(stream.feed(chunk));
    }
    found.extend(stream.finish());
    assert_eq!(found, ac.find_all(text));
    println!(
        "streamed over 4 chunks: {} matches, same as the whole-text scan",
        found.len()
    );
}
