#![no_main]

use libfuzzer_sys::fuzz_target;
use mcqa_harness::parse::{parse_bool, parse_letter, parse_one_step};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        // Model output is arbitrary; none of the answer parsers may panic,
        // and any matched span must lie inside the text it was found in.
        for num_choices in [0usize, 1, 2, 4, 8] {
            for parsed in [
                parse_letter(text, num_choices),
                parse_one_step(text, num_choices),
            ] {
                if let Some((start, len)) = parsed.matched_span {
                    assert!(start + len <= parsed.raw.len());
                    assert!(parsed.raw.is_char_boundary(start));
                    assert!(parsed.raw.is_char_boundary(start + len));
                }
            }
        }
        let parsed = parse_bool(text);
        if let Some((start, len)) = parsed.matched_span {
            assert!(start + len <= parsed.raw.len());
        }
    }
});
