#![no_main]

use libfuzzer_sys::fuzz_target;
use splitfss::mnist::{parse_idx_images, parse_idx_labels};

fuzz_target!(|data: &[u8]| {
    if let Ok((count, rows, cols, px)) = parse_idx_images(data) {
        assert_eq!(px.len(), count * rows * cols);
    }
    if let Ok(labels) = parse_idx_labels(data) {
        assert!(labels.iter().all(|&l| l <= 9));
    }
});
