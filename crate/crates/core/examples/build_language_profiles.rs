//! Regenerate the bundled trigram profiles from the seed texts.
//!
//! ```bash
//! cargo run -p corpusforge --example build_language_profiles -- [seed_dir] [out_dir] [k]
//! ```

use std::fs;
use std::path::PathBuf;

use corpusforge::normalize::langid::{LanguageProfile, DEFAULT_PROFILE_SIZE};

fn main() -> std::io::Result<()> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    let mut args = std::env::args().skip(1);
    let seeds = args.next().map(PathBuf::from).unwrap_or_else(|| root.join("seeds"));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| root.join("profiles"));
    let k = args.next().and_then(|s| s.parse().ok()).unwrap_or(DEFAULT_PROFILE_SIZE);

    fs::create_dir_all(&out)?;
    let mut entries: Vec<_> = fs::read_dir(&seeds)?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    entries.sort();
    for path in entries {
        let lang = path.file_stem().unwrap().to_string_lossy().to_string();
        let text = fs::read_to_string(&path)?;
        let profile = LanguageProfile::from_text(&lang, &text, k);
        fs::write(out.join(format!("{lang}.json")), profile.to_json())?;
        println!("{lang}: {} trigrams", profile.trigram_ranks.len());
    }
    Ok(())
}
