#![no_main]
use cantor_cli::parse_config;
use libfuzzer_sys::fuzz_target;

fn parse(s: &str) {
    let _ = parse_config(s);
}

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse(s);
    }
});
