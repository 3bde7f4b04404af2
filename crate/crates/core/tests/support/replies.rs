//! Checks the reply fixtures against the public parsers.

#![allow(dead_code)]

use std::path::Path;

use forge_core::annotate::{HYPOTHESIS_PREFIX, QUESTION_PREFIX};
use forge_core::promptkit::{
    parse_caption_list, parse_prefixed, parse_ve_label, parse_verdict, parse_yes_no, VerdictKind,
};
use serde::Deserialize;
use serde_json::{json, Value};

#[derive(Debug, Deserialize)]
pub struct Reply {
    pub origin: String,
    pub step: String,
    pub reply: String,
    /// `null` when the reply must be rejected.
    pub expect: Value,
}

pub fn load(path: &Path) -> Vec<Reply> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn yes_no(v: bool) -> Value {
    json!(if v { "yes" } else { "no" })
}

/// What the parser for `step` makes of `reply`.
pub fn parse(step: &str, reply: &str) -> Result<Value, String> {
    let e = |e: forge_core::promptkit::ParseError| e.to_string();
    match step {
        "ID" | "SI" => match reply.trim() {
            "" => Err("reply is empty".into()),
            t => Ok(json!(t)),
        },
        "IV" => parse_verdict(VerdictKind::ImageVerify, reply).map(|v| yes_no(v.value)).map_err(e),
        "AV" => parse_verdict(VerdictKind::AnswerVerify, reply).map(|v| yes_no(v.value)).map_err(e),
        "LV" => parse_verdict(VerdictKind::LabelVerify, reply).map(|v| yes_no(v.value)).map_err(e),
        "AR" => parse_yes_no(reply).map(|v| json!(v.as_word().to_lowercase())).map_err(e),
        "LR" => parse_ve_label(reply).map(|l| json!(l.as_str())).map_err(e),
        "QP" => parse_prefixed(QUESTION_PREFIX, reply).map(|s| json!(s)).map_err(e),
        "HP" => parse_prefixed(HYPOTHESIS_PREFIX, reply).map(|s| json!(s)).map_err(e),
        "CP" => parse_caption_list(5, reply).map(|c| json!(c)).map_err(e),
        other => Err(format!("unknown step {other}")),
    }
}

pub fn check(r: &Reply) -> Result<(), String> {
    match (parse(&r.step, &r.reply), &r.expect) {
        (Ok(got), want) if &got == want => Ok(()),
        (Err(_), Value::Null) => Ok(()),
        (got, want) => Err(format!("{} {:?}: got {got:?}, want {want}", r.step, r.reply)),
    }
}
