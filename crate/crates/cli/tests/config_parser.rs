use std::path::Path;

use proptest::prelude::*;
use sd_lab_cli::config::RunConfig;
use sd_lab_cli::parse_config_text;

fn check(text: &str) {
    let Ok(entries) = parse_config_text(text) else {
        return;
    };
    for command in ["ridge-sweep", "gram-table", "probe-sweep"] {
        if let Ok(cfg) = RunConfig::resolve(command, &entries, &[]) {
            let again = parse_config_text(&cfg.to_string()).unwrap();
            assert_eq!(RunConfig::resolve(command, &again, &[]).unwrap().to_string(), cfg.to_string());
        }
    }
}

#[test]
fn corpus_seeds_hold_invariants() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus/config");
    let mut accepted = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        accepted += usize::from(parse_config_text(&text).is_ok());
        check(&text);
    }
    assert!(accepted > 0);
}

proptest! {
    #[test]
    fn printed_config_parses_back(text in "((gamma|seed|lambdas|out|n|q|xi) ?= ?[0-9a-z.,\\- ]{0,10}( #[a-z ]*)?\n){0,4}") {
        check(&text);
    }

    #[test]
    fn arbitrary_text_never_panics(text in "\\PC{0,200}") {
        check(&text);
    }
}
