#![no_main]

use libfuzzer_sys::fuzz_target;
use phfcox::cubical::{read_diagrams_csv, write_diagrams_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(subjects) = read_diagrams_csv(data) {
        let mut out = Vec::new();
        write_diagrams_csv(&mut out, &subjects).expect("writing succeeds");
        let again = read_diagrams_csv(&out[..]).expect("written CSV parses");
        assert_eq!(again.len(), subjects.len());
    }
});
