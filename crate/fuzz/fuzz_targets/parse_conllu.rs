#![no_main]

use libfuzzer_sys::fuzz_target;
use sdnmt::deptree::{parse_conllu, sdc_matrix, write_conllu};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(trees) = parse_conllu(text) {
        for t in &trees {
            let m = sdc_matrix(t);
            assert_eq!(m.len(), t.len());
        }
        let again = parse_conllu(&write_conllu(&trees)).expect("written trees parse");
        assert_eq!(again.len(), trees.len());
    }
});
