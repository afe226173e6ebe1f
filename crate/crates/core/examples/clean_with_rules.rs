//! Apply the bundled heuristic rules, then a custom rule file, to a few
//! documents.
//!
//! ```bash
//! cargo run -p corpusforge --example clean_with_rules
//! ```

use corpusforge::clean::{apply_rules, bundled_rules, parse_rules, ChapterStats, RuleSet, Verdict};
use corpusforge::corpus::Document;

fn show(rules: &RuleSet, doc: &Document) {
    let out = apply_rules(doc, rules);
    match out.verdict {
        Verdict::Kept => {
            let text = out.doc.as_ref().map(|d| d.content.as_str()).unwrap_or("");
            println!("{}: kept {:?}", doc.id, text);
        }
        Verdict::Dropped => println!("{}: dropped ({})", doc.id, out.drop_reason.unwrap_or_default()),
    }
    for (rule, n) in &out.fired {
        println!("    {rule} x{n}");
    }
}

fn main() {
    let rules = RuleSet::compile(bundled_rules()).expect("bundled rules compile");
    println!("{} bundled rules", rules.len());

    let docs = [
        Document::new("zw", "web", "Hello\u{200B} world!!!!!!!!!!!!!!!! This is a normal sentence about gardens."),
        Document::new(
            "ad",
            "web",
            "Tomatoes need full sun and regular watering.\nClick here to buy now and get free shipping!\nHarvest when the fruit is firm.",
        ),
        Document::new("garbled", "web", "�� ##@@ ~~ ^^ %%%% $$ && ** || ;; :: ?? !! ++ == -- __ ..."),
        Document::new("code", "code", "fn main() { let x = vec![1, 2, 3]; println!(\"{:?}\", x); }"),
    ];
    for d in &docs {
        let s = ChapterStats::of(&d.content);
        println!(
            "-- {} (garbled {:.2}, alpha {:.2})",
            d.id, s.garbled_ratio, s.alpha_fraction
        );
        show(&rules, d);
    }

    let custom = parse_rules(
        r#"[{"id":"no_recipes","level":"line","action":"drop_line",
             "params":{"kind":"pattern","regex":"(?i)^recipe:"}}]"#,
    )
    .expect("valid rule file");
    let custom = RuleSet::compile(custom).expect("custom rule compiles");
    println!("-- custom rule file");
    show(
        &custom,
        &Document::new("r", "web", "Recipe: add salt\nThe soup was served warm."),
    );
}
