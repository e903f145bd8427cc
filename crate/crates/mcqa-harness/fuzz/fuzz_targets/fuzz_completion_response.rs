#![no_main]

use libfuzzer_sys::fuzz_target;
use mcqa_harness::backend::http::parse_completion_text;

fuzz_target!(|data: &[u8]| {
    // Endpoint response bodies are untrusted bytes; extraction must never
    // panic, whatever shape they take.
    let _ = parse_completion_text(data);
});
