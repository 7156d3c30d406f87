#![no_main]

use libfuzzer_sys::fuzz_target;
use sd_lab_cli::config::RunConfig;
use sd_lab_cli::parse_config_text;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(entries) = parse_config_text(text) else {
        return;
    };
    for command in ["ridge-sweep", "gram-table", "probe-sweep"] {
        if let Ok(cfg) = RunConfig::resolve(command, &entries, &[]) {
            // The printed form parses back to the same config.
            let again = parse_config_text(&cfg.to_string()).unwrap();
            assert_eq!(RunConfig::resolve(command, &again, &[]).unwrap().to_string(), cfg.to_string());
        }
    }
});
