#![no_main]

use libfuzzer_sys::fuzz_target;
use sdnmt::model::data::parse_lines;
use sdnmt::model::{TextCorpus, Vocab};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (left, right) = text.split_at(text.char_indices().nth(text.chars().count() / 2).map_or(0, |(i, _)| i));
    let src = parse_lines(left);
    let tgt = parse_lines(right);
    if let Ok(c) = TextCorpus::from_parts(src, tgt, None, ["src", "tgt", ""]) {
        let v = Vocab::build(c.src.iter(), 64);
        let w = Vocab::build(c.tgt.iter(), 64);
        for ex in c.to_examples(&v, &w, 80) {
            assert!(ex.src.iter().all(|&i| i < v.len()));
            assert!(v.decode(&ex.src).is_ok_and(|d| d.len() <= ex.src.len()));
        }
    }
});
