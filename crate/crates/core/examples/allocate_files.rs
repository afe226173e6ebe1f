//! Build a global file index, up-weight static sources, down-sample dynamic
//! ones and assign the result to workers.
//!
//! ```bash
//! cargo run -p corpusforge --example allocate_files -- [workers] [seed]
//! ```

use corpusforge::allocator::{assign, build_index_table, reweight, AssignmentManifest};
use corpusforge::corpus::Taxonomy;

fn main() {
    let mut args = std::env::args().skip(1);
    let workers: u32 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);

    let mut files = Vec::new();
    for (source, n) in [("book", 3), ("encyclopedia", 2), ("web", 8), ("social", 4)] {
        for i in 0..n {
            files.push((format!("{source}/shard-{i:03}.jsonl.gz"), source, 1_000_000 + i * 4_096));
        }
    }
    let taxonomy = Taxonomy::default();
    let table = build_index_table(&files, &taxonomy, seed).unwrap();
    let weighted = reweight(&table, 2, 0.5, seed).unwrap();
    println!(
        "{} files -> {} occurrences (static x2, dynamic kept at rate 0.5)",
        table.entries.len(),
        weighted.occurrences.len()
    );
    let assignment = assign(&weighted, workers).unwrap();
    println!("{}", AssignmentManifest::new(&weighted, &assignment).to_json());
}
