#![no_main]

use libfuzzer_sys::fuzz_target;
use sdnmt::deptree::{mask_to_tsv, read_mask_blocks, read_mask_tsv};

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = read_mask_tsv(data) {
        let back = read_mask_tsv(mask_to_tsv(&m).as_bytes()).expect("round trip");
        assert_eq!(back, m);
    }
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = read_mask_blocks(text);
    }
});
