#![no_main]

use libfuzzer_sys::fuzz_target;
use phfcox::pipeline::ClinicalTable;

fuzz_target!(|data: &[u8]| {
    for require_outcome in [true, false] {
        if let Ok(table) = ClinicalTable::read(data, require_outcome) {
            for row in &table.rows {
                assert_eq!(row.covariates.len(), table.covariates.len());
                let _ = table.record(row);
            }
        }
    }
});
