#![no_main]

use libfuzzer_sys::fuzz_target;
use mcqa_harness::parse::extract_generated_question;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Some(question) = extract_generated_question(text) {
            // A successful extraction is non-empty, trimmed, and never
            // contains the answer cue it was split on.
            assert!(!question.is_empty());
            assert_eq!(question.trim(), question);
            assert!(!question.contains("Answer:"));
        }
    }
});
