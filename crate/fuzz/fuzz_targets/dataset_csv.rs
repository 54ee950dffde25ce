#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| mmoe_cli::roundtrip::dataset_csv(data));
