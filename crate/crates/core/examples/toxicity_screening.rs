//! Two-stage toxicity filtering: lexicon density, then a trained classifier.
//!
//! ```bash
//! cargo run -p corpusforge --example toxicity_screening
//! ```

use corpusforge::corpus::Document;
use corpusforge::toxicity::{
    filter_toxic, train_classifier, Label, LexiconMatcher, ToxicityConfig, ToxicityScorer, TrainConfig,
};

fn main() {
    let lexicon = LexiconMatcher::bundled();
    println!("bundled lexicon: {} terms", lexicon.len());

    let text = "Someone posted a counterfeit passport offer. 我们讨论乳腺癌筛查。";
    let chunks = [
        "Someone posted a counter",
        "feit passport offer. 我们讨论乳",
        "腺癌筛查。",
    ];
    assert_eq!(lexicon.scan(text), lexicon.scan_chunks(chunks));
    for m in lexicon.scan(text) {
        println!(
            "  match {:?} ({}, weight {}) at byte {}",
            m.pattern, m.category, m.weight, m.offset
        );
    }

    // A toy classifier: insults vs. friendly remarks.
    let toxic = [
        "you are a worthless idiot",
        "shut up you pathetic loser",
        "nobody wants your stupid face here",
    ];
    let clean = [
        "thanks for the helpful answer",
        "what a lovely morning walk",
        "the recipe turned out great",
    ];
    let mut labeled = Vec::new();
    for i in 0..12 {
        labeled.push((format!("{} {}", toxic[i % 3], i), Label::Toxic));
        labeled.push((format!("{} {}", clean[i % 3], i), Label::Clean));
    }
    let model = train_classifier(&labeled, &TrainConfig::default()).unwrap();

    let cfg = ToxicityConfig::default();
    let docs = [
        Document::new(
            "1",
            "social",
            "Hey, buy stolen credit cards here! Buy stolen credit cards!",
        ),
        Document::new("2", "social", "honestly you are a pathetic worthless idiot"),
        Document::new("3", "social", "thanks, the walk this morning was lovely"),
        Document::new("4", "book", "A chapter on breast cancer screening and sexual health."),
    ];
    for d in &docs {
        let v = filter_toxic(d, &lexicon, Some(&model as &dyn ToxicityScorer), &cfg);
        println!(
            "{}: {:?} density {:.2} score {}",
            d.id,
            v.verdict,
            v.density,
            v.score.map_or("-".to_string(), |s| format!("{s:.3}"))
        );
    }
}
