//! The four dedup levels on a small corpus: URL, simhash, paragraph cosine
//! and boilerplate sentences.
//!
//! ```bash
//! cargo run -p corpusforge --example dedup_levels
//! ```

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use corpusforge::corpus::Document;
use corpusforge::dedup::{canonicalize_url, dedup_documents, hamming_distance, simhash, DedupConfig};

fn main() {
    for url in [
        "HTTPS://Example.COM:443/a/?b=2&a=1#top",
        "http://example.com/a/?a=1&b=2",
    ] {
        println!("{url} -> {}", canonicalize_url(url).unwrap());
    }

    let base = "Rivers carry sediment from the mountains to the sea and shape wide fertile plains \
                that farmers have worked for thousands of years along their banks. Seasonal floods \
                renew the soil, while levees, canals and reservoirs tame the water for towns downstream. \
                Deltas grow where the current slows, building marshes that shelter birds, fish and \
                reeds, and ports rise where ships can meet the river barges loaded with grain and timber";
    let edited = base.replace("fertile", "fruitful");
    println!(
        "simhash distance after a one-word edit: {}",
        hamming_distance(simhash(base), simhash(&edited))
    );

    let disclaimer = "Views expressed here belong to the authors alone and not the publisher.";
    let shared = "Glaciers retreat when summer melt exceeds winter snowfall over many consecutive years.";
    let mut docs = vec![
        Document::new("a", "web", base).with_url("https://rivers.example/plains?ref=1&x=2"),
        Document::new("b", "news", base).with_url("https://RIVERS.example:443/plains?x=2&ref=1#c"),
        Document::new("c", "web", edited.clone()),
        Document::new("d", "web", format!("Ice and climate notes for the season.\n\n{shared}")),
        Document::new(
            "e",
            "web",
            format!("{shared}\n\nA different closing paragraph about fjords."),
        ),
    ];
    const VOCAB: [&str; 24] = [
        "harbor", "lantern", "copper", "meadow", "signal", "orchard", "basalt", "voyage", "thistle", "cobalt",
        "granary", "quarry", "saffron", "tundra", "beacon", "marrow", "pylon", "estuary", "juniper", "kestrel",
        "mosaic", "nickel", "obsidian", "prairie",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..12 {
        let body: Vec<&str> = (0..30).map(|_| *VOCAB.choose(&mut rng).unwrap()).collect();
        docs.push(Document::new(
            format!("f{i:02}"),
            "web",
            format!("{}. {disclaimer}", body.join(" ")),
        ));
    }

    let (kept, report) = dedup_documents(&docs, &DedupConfig::default()).unwrap();
    println!("\nkept {} of {} documents", kept.len(), docs.len());
    println!("drop reasons: {:?}", report.stats.drop_reasons);
    println!("boilerplate sentences removed: {}", report.sentences_removed);
    print!("manifest:\n{}", report.manifest_jsonl());
    for d in kept.iter().filter(|d| d.id == "e" || d.id == "f03") {
        println!("{} now reads {:?}", d.id, d.content);
    }
}
