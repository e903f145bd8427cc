#![no_main]

use libfuzzer_sys::fuzz_target;
use mcqa_harness::runner::store::read_records;

fuzz_target!(|data: &[u8]| {
    // A records file truncated or edited by hand must produce an error,
    // never a panic.
    let _ = read_records(data);
});
