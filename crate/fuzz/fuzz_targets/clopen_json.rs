#![no_main]
use cantor_core::clopen::Clopen;
use cantor_core::system::System;
use libfuzzer_sys::fuzz_target;
use std::sync::{Arc, OnceLock};

fn systems() -> &'static [Arc<System>] {
    static S: OnceLock<Vec<Arc<System>>> = OnceLock::new();
    S.get_or_init(|| {
        [
            r#"{"kind":"odometer","bases":[2]}"#,
            r#"{"kind":"substitution","rules":{"a":"ab","b":"a"}}"#,
            r#"{"kind":"product","factors":[{"kind":"odometer","bases":[2]},{"kind":"cycle","n":3}]}"#,
        ]
        .iter()
        .map(|j| Arc::new(System::from_json(j).unwrap()))
        .collect()
    })
}

fn parse(s: &str) {
    for sys in systems() {
        let _ = Clopen::from_json(sys, s);
    }
}

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse(s);
    }
});
