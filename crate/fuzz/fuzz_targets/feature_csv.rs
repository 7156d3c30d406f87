#![no_main]

use libfuzzer_sys::fuzz_target;
use sd_lab::probe::io::{read_feature_csv, write_feature_csv};

fuzz_target!(|data: &[u8]| {
    let Ok((features, labels)) = read_feature_csv(data) else {
        return;
    };
    assert_eq!(features.nrows(), labels.len());
    let mut out = Vec::new();
    write_feature_csv(&mut out, &features, &labels).unwrap();
    let (again, labels_again) = read_feature_csv(out.as_slice()).unwrap();
    assert_eq!(labels, labels_again);
    assert_eq!(features.shape(), again.shape());
});
