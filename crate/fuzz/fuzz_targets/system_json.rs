#![no_main]
use cantor_core::system::System;
use libfuzzer_sys::fuzz_target;

fn parse(s: &str) -> cantor_core::Result<System> {
    System::from_json(s)
}

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse(s);
    }
});
