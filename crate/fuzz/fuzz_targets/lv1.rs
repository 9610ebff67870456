#![no_main]

use libfuzzer_sys::fuzz_target;
use phfcox::imaging::LabelVolume;

// Input layout: little-endian u16 header length, header JSON, payload bytes.
fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let len = u16::from_le_bytes([data[0], data[1]]) as usize;
    let rest = &data[2..];
    if len > rest.len() {
        return;
    }
    let (header, payload) = rest.split_at(len);
    if let Ok(vol) = LabelVolume::from_lv1_bytes(header, payload) {
        assert_eq!(vol.voxels().len(), payload.len());
    }
});
