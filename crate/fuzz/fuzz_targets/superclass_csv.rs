#![no_main]

use libfuzzer_sys::fuzz_target;
use sd_lab::probe::io::read_superclass_csv;

fuzz_target!(|data: &[u8]| {
    let _ = read_superclass_csv(data);
});
