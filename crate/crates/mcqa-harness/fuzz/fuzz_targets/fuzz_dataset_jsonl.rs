#![no_main]

use libfuzzer_sys::fuzz_target;
use mcqa_harness::dataset::{read_jsonl, Split};

fuzz_target!(|data: &[u8]| {
    // Dataset files come from outside the tool; malformed ones must come
    // back as errors, never panics. Surviving items keep four choices.
    if let Ok(dataset) = read_jsonl(data, "fuzz", Split::Eval) {
        for item in &dataset.items {
            assert_eq!(item.choices.len(), 4);
            assert!((item.gold.index()) < 4);
        }
    }
});
