#![no_main]

use libfuzzer_sys::fuzz_target;
use phfcox::pipeline::read_risks_csv;

fuzz_target!(|data: &[u8]| {
    let _ = read_risks_csv(data);
});
