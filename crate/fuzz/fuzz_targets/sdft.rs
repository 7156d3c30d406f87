#![no_main]

use libfuzzer_sys::fuzz_target;
use sd_lab::probe::io::{parse_sdft, write_sdft};

fuzz_target!(|data: &[u8]| {
    let Ok(m) = parse_sdft(data) else {
        return;
    };
    // Values came from f32, so re-encoding is exact.
    let mut out = Vec::new();
    write_sdft(&mut out, &m).unwrap();
    assert_eq!(out, data);
});
