//! Runs every checked-in fuzz seed through its target's entry point, so the
//! seeds stay meaningful and the entry points stay panic-free on them.

use std::path::{Path, PathBuf};

use forge_core::dataset::{AnnotatedRecord, SourceSet};
use forge_core::mmd::{decode_vldg, encode_vldg};
use forge_core::promptkit::{
    parse_caption_list, parse_prefixed, parse_template, parse_ve_label, parse_verdict, parse_yes_no, VerdictKind,
};
use forge_core::provider::http::{parse_chat_response, parse_image_response};
use forge_core::provider::replay::Session;
use forge_core::provider::ImageAttachment;

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).expect("seeds are UTF-8")
}

/// (status selector, body) as the response targets split their input.
fn status_and_body(bytes: &[u8]) -> (u16, &str) {
    let (&s, rest) = bytes.split_first().unwrap();
    (200 + u16::from(s % 4) * 100, text(rest))
}

#[test]
fn text_parsers() {
    let mut ok = 0;
    for (_, b) in seeds("verdict") {
        let _ = parse_yes_no(text(&b));
        ok += usize::from(parse_verdict(VerdictKind::AnswerVerify, text(&b)).is_ok());
    }
    for (_, b) in seeds("ve_label") {
        ok += usize::from(parse_ve_label(text(&b)).is_ok());
    }
    for (_, b) in seeds("prefixed") {
        ok += usize::from(parse_prefixed("Paraphrased Question:", text(&b)).is_ok());
    }
    for (_, b) in seeds("caption_list") {
        let (&n, rest) = b.split_first().unwrap();
        ok += usize::from(parse_caption_list(usize::from(n % 8), text(rest)).map(|c| c.len()) == Ok(5));
    }
    assert!(ok >= 8, "{ok}");
}

#[test]
fn file_decoders() {
    let mut decoded = 0;
    for (p, b) in seeds("vldg") {
        match decode_vldg(&b) {
            Ok(set) => {
                assert_eq!(encode_vldg(&set), b, "{}", p.display());
                decoded += 1;
            }
            Err(_) => assert!(p.ends_with("truncated.vldg"), "{}", p.display()),
        }
    }
    assert_eq!(decoded, 3);
    for (p, b) in seeds("source_manifest") {
        SourceSet::parse(&p, text(&b)).unwrap();
    }
    for (p, b) in seeds("annotated_record") {
        serde_json::from_slice::<AnnotatedRecord>(&b).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
    for (_, b) in seeds("session") {
        let s = Session::parse(text(&b)).unwrap();
        assert_eq!(Session::parse(&s.to_json()).unwrap().len(), s.len());
    }
    for (p, b) in seeds("template") {
        parse_template(text(&b)).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
    for (_, b) in seeds("image_attachment") {
        ImageAttachment::from_bytes(b).unwrap();
    }
}

#[test]
fn response_parsers() {
    for (p, b) in seeds("chat_response") {
        let (status, body) = status_and_body(&b);
        let r = parse_chat_response(status, None, body);
        assert_eq!(r.is_ok(), p.ends_with("ok"), "{}", p.display());
    }
    for (p, b) in seeds("image_response") {
        let (status, body) = status_and_body(&b);
        let r = parse_image_response(status, None, body);
        assert_eq!(r.is_ok(), p.ends_with("ok"), "{}", p.display());
    }
}
