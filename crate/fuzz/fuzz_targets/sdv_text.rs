#![no_main]

use libfuzzer_sys::fuzz_target;
use phfcox::imaging::SignedDistanceVolume;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(sdv) = SignedDistanceVolume::parse_text(text) {
        let again = SignedDistanceVolume::parse_text(&sdv.to_text()).expect("written text parses");
        assert_eq!(again.dims(), sdv.dims());
    }
});
