#![no_main]

use libfuzzer_sys::fuzz_target;
use mcqa_harness::backend::cache::read_entries;

fuzz_target!(|data: &[u8]| {
    // Cache files survive crashes mid-write, so reading tolerates any
    // content: bad lines are counted as skipped, never fatal.
    let (entries, skipped) = read_entries(data);
    let fragments = data.split(|&b| b == b'\n').count();
    assert!(entries.len() + skipped <= fragments);
});
