#![no_main]

use libfuzzer_sys::fuzz_target;
use mcqa_harness::backend::{effective_text, stop_trim};

fuzz_target!(|input: (&str, &str)| {
    let (raw, stop) = input;
    // Trimming yields a prefix of the continuation and never grows it.
    let trimmed = stop_trim(raw, stop);
    assert!(raw.starts_with(&trimmed));
    // The lead-in workaround may skip one stop occurrence but still only
    // ever returns a substring of the continuation.
    let effective = effective_text(raw, stop);
    assert!(effective.len() <= raw.len());
    assert!(raw.contains(&effective));
    if stop.is_empty() {
        assert_eq!(effective, raw);
    }
});
