#![no_main]

use libfuzzer_sys::fuzz_target;
use phfcox::pipeline::ModelFile;

fuzz_target!(|data: &[u8]| {
    let _ = ModelFile::parse(data);
});
