//! The fuzz corpus seeds are valid inputs for their parsers.

use cantor_core::clopen::Clopen;
use cantor_core::crossed::CrossedElement;
use cantor_core::groupoid::ShapeFunction;
use cantor_core::system::System;
use std::path::PathBuf;
use std::sync::Arc;

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, String)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn sys(name: &str) -> Arc<System> {
    let j = match name {
        "fibonacci" | "letter" => r#"{"kind":"substitution","rules":{"a":"ab","b":"a"}}"#,
        "product" => r#"{"kind":"product","factors":[{"kind":"odometer","bases":[2]},{"kind":"cycle","n":3}]}"#,
        _ => r#"{"kind":"odometer","bases":[2]}"#,
    };
    Arc::new(System::from_json(j).unwrap())
}

#[test]
fn system_seeds_parse() {
    for (name, text) in seeds("system_json") {
        assert!(System::from_json(&text).is_ok(), "{name}");
    }
}

#[test]
fn clopen_seeds_parse() {
    for (name, text) in seeds("clopen_json") {
        assert!(Clopen::from_json(&sys(&name), &text).is_ok(), "{name}");
    }
}

#[test]
fn crossed_seeds_parse() {
    for (name, text) in seeds("crossed_json") {
        assert!(CrossedElement::from_json(&sys(&name), &text).is_ok(), "{name}");
    }
}

#[test]
fn shape_seeds_parse() {
    for (name, text) in seeds("shape_json") {
        let r = ShapeFunction::from_json(&sys(&name), &text);
        assert!(r.is_ok(), "{name}: {:?}", r.err());
    }
}
