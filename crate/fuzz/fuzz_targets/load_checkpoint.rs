#![no_main]

use libfuzzer_sys::fuzz_target;
use sdnmt::model::Checkpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ck) = Checkpoint::from_json(text) {
        let json = ck.to_json().expect("serialize");
        let again = Checkpoint::from_json(&json).expect("reload");
        assert_eq!(again.params.num_values(), ck.params.num_values());
    }
});
