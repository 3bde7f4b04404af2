//! The ten-item toy corpus and the script that answers for it.
//!
//! Shared by `examples/make_toy_fixtures.rs`, which writes the checked-in
//! corpus and replay session, and by the tests that check those files are
//! current. Every branch of the pipeline is exercised somewhere:
//!
//! - toy-01: accepted first time; the VQA hat question is verified false
//!   and re-annotated, the VE kitchen hypothesis goes True -> Neutral
//! - toy-02: first render rejected, second accepted
//! - toy-03: every render rejected, so the item is omitted everywhere
//! - toy-04: empty description twice; one caption reply with four captions
//! - toy-05: cartoon renders rejected nine times, accepted on the tenth
//! - toy-06: first render blocked by the safety system
//! - toy-07: two questions, one kept and one re-annotated
//! - toy-08: one pair whose re-annotation never parses (pair dropped)
//! - toy-09: its only pair never verifies (record omitted)
//! - toy-10: a VE pair re-annotated to the same label

#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use forge_core::annotate::AnnotateConfig;
use forge_core::dataset::read_sources;
use forge_core::promptkit::TemplateSet;
use forge_core::provider::replay::replay_record;
use forge_core::provider::scripted::{synth_png, ChatCall, ImageCall, Script, ScriptedBackend};
use forge_core::provider::{Provider, ProviderError, RetryPolicy};
use forge_core::runs::{annotate_run, stylize_run, RunOptions};
use forge_core::stylize::StylizeConfig;
use forge_core::{Style, Task};

pub const TASKS: [Task; 3] = [Task::Caption, Task::Vqa, Task::Ve];

pub struct Qa {
    pub question: &'static str,
    pub answer: bool,
    pub verify: &'static str,
    pub reannotate: &'static str,
    pub paraphrase: &'static str,
}

pub struct Hyp {
    pub hypothesis: &'static str,
    pub label: &'static str,
    pub verify: &'static str,
    pub reannotate: &'static str,
    pub paraphrase: &'static str,
}

pub struct Item {
    pub id: &'static str,
    pub split: &'static str,
    pub subject: &'static str,
    pub captions: Option<[&'static str; 5]>,
    pub qa: &'static [Qa],
    pub ve: &'static [Hyp],
}

const YES: &str = "Yes, the pair is correct for the generated image.";
const ENTAILED: &str = "Yes, the label is correct for the generated image.";

const CHEF: &str = "Create an image of a man preparing food outside an industrial-style workspace. The man is wearing a flat cap and a dark short-sleeve shirt and is standing at a brown counter, chopping green onions on a cutting board. Surrounding him on the counter are various fresh vegetables, including green onions, leafy greens, a whole avocado, and a bowl of eggs. In the background, an open garage door reveals the interior of the workspace with tools, a workbench, and a bicycle leaning against the outside. The floor is concrete and the walls are decorated with hanging tools and shelves. The overall atmosphere should convey a casual, industrious vibe.";

const CHEF_CARTOON: &str = "Create a cartoon-style image of a man preparing food outside an industrial-style workspace. The man is wearing a flat cap and a dark short-sleeve shirt and is standing at a brown counter, chopping green onions on a cutting board. Surrounding him on the counter are various fresh vegetables, including green onions, leafy greens, a whole avocado, and a bowl of eggs. In the background, an open garage door reveals the interior of the workspace with tools, a workbench, and a bicycle leaning against the outside. The floor is concrete and the walls are decorated with hanging tools and shelves. The overall atmosphere should convey a casual, industrious vibe, with cartoonish exaggerated features and vibrant colors.";

const CHEF_CAPTIONS_CARTOON: &str = "1. A cartoon-styled man slicing vegetables at an outdoor table near a garage.
2. An animated character chopping fresh scallions on a cutting board outside.
3. A cartoon figure preparing a meal by cutting vegetables on a white board in front of a workshop.
4. A man in cartoon form stands at an outdoor table, diligently cutting vegetables.
5. A cartoon man, standing with a knife and spring onions, prepares food outside a garage filled with tools.";

pub const ITEMS: [Item; 10] = [
    Item {
        id: "toy-01",
        split: "train",
        subject: "a man chopping green onions outside a garage",
        captions: Some([
            "a man cutting up vegetables on top of a food cart.",
            "A man cutting up scallions at an outdoor table",
            "A man chopping vegetables on a white board.",
            "A man stands as he cuts up some vegetables.",
            "A man stands with a knife and onions in front of a garage",
        ]),
        qa: &[
            Qa {
                question: "Is the person wearing a hat?",
                answer: true,
                verify: "No, the question and answer pair is not correct. The person in the generated image is not wearing a hat.",
                reannotate: "No, the person in the generated image is not wearing a hat.",
                paraphrase: "Paraphrased Question: Does the person have a hat on?",
            },
            Qa {
                question: "Is the person chopping green onions?",
                answer: true,
                verify: YES,
                reannotate: "",
                paraphrase: "Paraphrased Question: Is the individual slicing green onions?",
            },
        ],
        ve: &[Hyp {
            hypothesis: "The person is preparing ingredients for a meal in an outdoor kitchen setup.",
            label: "entailment",
            verify: "No, the hypothesis \"The person is preparing ingredients for a meal in an outdoor kitchen setup\" is not entailed by the given image.",
            reannotate: "Undetermined. It is unclear in the generated image if the person is preparing ingredients \"in an outdoor kitchen setup.\"",
            paraphrase: "Paraphrased Hypothesis: The individual is getting ingredients ready for cooking in an outdoor kitchen setting.",
        }],
    },
    Item {
        id: "toy-02",
        split: "train",
        subject: "a soccer player kicking a ball on a grass field",
        captions: None,
        qa: &[Qa {
            question: "Is there a ball?",
            answer: true,
            verify: YES,
            reannotate: "",
            paraphrase: "Paraphrased Question: Can a ball be seen?",
        }],
        ve: &[Hyp {
            hypothesis: "Adults are playing frisbee.",
            label: "contradiction",
            verify: ENTAILED,
            reannotate: "",
            paraphrase: "Paraphrased Hypothesis: Grown-ups are tossing a frisbee around.",
        }],
    },
    Item {
        id: "toy-03",
        split: "train",
        subject: "a dog sleeping on a porch",
        captions: None,
        qa: &[Qa {
            question: "Is the dog asleep?",
            answer: true,
            verify: YES,
            reannotate: "",
            paraphrase: "Paraphrased Question: Is the dog sleeping?",
        }],
        ve: &[Hyp {
            hypothesis: "An animal is resting.",
            label: "entailment",
            verify: ENTAILED,
            reannotate: "",
            paraphrase: "Paraphrased Hypothesis: A creature is taking a rest.",
        }],
    },
    Item {
        id: "toy-04",
        split: "train",
        subject: "a red bus on a city street",
        captions: None,
        qa: &[Qa {
            question: "Is the bus red?",
            answer: true,
            verify: YES,
            reannotate: "",
            paraphrase: "Paraphrased Question: Is the color of the bus red?",
        }],
        ve: &[Hyp {
            hypothesis: "A vehicle is on the street.",
            label: "entailment",
            verify: ENTAILED,
            reannotate: "",
            paraphrase: "Paraphrased Hypothesis: There is a vehicle on the road.",
        }],
    },
    Item {
        id: "toy-05",
        split: "train",
        subject: "a bowl of fruit on a wooden table",
        captions: None,
        qa: &[Qa {
            question: "Are there bananas in the bowl?",
            answer: false,
            verify: "No, the generated image shows bananas in the bowl.",
            reannotate: "Yes, there are bananas in the bowl.",
            paraphrase: "Paraphrased Question: Does the bowl contain bananas?",
        }],
        ve: &[Hyp {
            hypothesis: "There is food on the table.",
            label: "entailment",
            verify: ENTAILED,
            reannotate: "",
            paraphrase: "Paraphrased Hypothesis: Some food sits on the table.",
        }],
    },
    Item {
        id: "toy-06",
        split: "train",
        subject: "a lighthouse at sunset",
        captions: None,
        qa: &[Qa {
            question: "Is the sun setting?",
            answer: true,
            verify: YES,
            reannotate: "",
            paraphrase: "Paraphrased Question: Is it sunset?",
        }],
        ve: &[Hyp {
            hypothesis: "The lighthouse is on fire.",
            label: "contradiction",
            verify: ENTAILED,
            reannotate: "",
            paraphrase: "Paraphrased Hypothesis: Flames are engulfing the lighthouse.",
        }],
    },
    Item {
        id: "toy-07",
        split: "train",
        subject: "a baseball batter swinging at a pitch",
        captions: None,
        qa: &[
            Qa {
                question: "Is the player wearing socks?",
                answer: true,
                verify: YES,
                reannotate: "",
                paraphrase: "Paraphrased Question: Does the player have socks on?",
            },
            Qa {
                question: "Did he hit that ball?",
                answer: false,
                verify: "No, the bat is touching the ball in the generated image.",
                reannotate: "Yes, he hit the ball.",
                paraphrase: "Paraphrased Question: Did he make contact with the ball?",
            },
        ],
        ve: &[Hyp {
            hypothesis: "A man is playing a sport.",
            label: "entailment",
            verify: ENTAILED,
            reannotate: "",
            paraphrase: "Paraphrased Hypothesis: Someone is taking part in a sport.",
        }],
    },
    Item {
        id: "toy-08",
        split: "valid",
        subject: "a cat sitting on a windowsill",
        captions: None,
        qa: &[
            Qa {
                question: "Is the cat black?",
                answer: true,
                verify: "No, the cat in the generated image is orange.",
                reannotate: "Maybe.",
                paraphrase: "Paraphrased Question: Is the cat's fur black?",
            },
            Qa {
                question: "Is there a window?",
                answer: true,
                verify: YES,
                reannotate: "",
                paraphrase: "Paraphrased Question: Can a window be seen?",
            },
        ],
        ve: &[Hyp {
            hypothesis: "The cat is outdoors.",
            label: "neutral",
            verify: ENTAILED,
            reannotate: "",
            paraphrase: "Paraphrased Hypothesis: The cat is outside.",
        }],
    },
    Item {
        id: "toy-09",
        split: "test",
        subject: "two horses grazing in a field",
        captions: None,
        qa: &[Qa {
            question: "Are the horses running?",
            answer: false,
            verify: "It depends on the angle.",
            reannotate: "",
            paraphrase: "Paraphrased Question: Are the horses galloping?",
        }],
        ve: &[Hyp {
            hypothesis: "Horses are in a field.",
            label: "entailment",
            verify: ENTAILED,
            reannotate: "",
            paraphrase: "Paraphrased Hypothesis: A field has horses in it.",
        }],
    },
    Item {
        id: "toy-10",
        split: "test",
        subject: "a child flying a kite on a beach",
        captions: None,
        qa: &[Qa {
            question: "Is it daytime?",
            answer: true,
            verify: YES,
            reannotate: "",
            paraphrase: "Paraphrased Question: Is it during the day?",
        }],
        ve: &[
            Hyp {
                hypothesis: "A child is at the beach.",
                label: "entailment",
                verify: ENTAILED,
                reannotate: "",
                paraphrase: "Paraphrased Hypothesis: A kid is on the beach.",
            },
            Hyp {
                hypothesis: "The child is swimming.",
                label: "contradiction",
                verify: "No, the label does not fit the generated image.",
                reannotate: "False. The child is flying a kite.",
                paraphrase: "Paraphrased Hypothesis: The kid is in the water swimming.",
            },
        ],
    },
];

fn item(id: &str) -> &'static Item {
    ITEMS.iter().find(|i| i.id == id).expect("toy item")
}

pub fn captions(it: &Item) -> Vec<String> {
    match it.captions {
        Some(c) => c.iter().map(|s| s.to_string()).collect(),
        None => [
            "A photo of",
            "A picture showing",
            "An image of",
            "A snapshot of",
            "A scene with",
        ]
        .iter()
        .map(|p| format!("{p} {}.", it.subject))
        .collect(),
    }
}

pub fn source_image(id: &str) -> Vec<u8> {
    synth_png(&format!("source/{id}"))
}

/// Source manifest text for one task.
pub fn manifest(task: Task) -> String {
    let mut out = String::new();
    for it in &ITEMS {
        let payload = match task {
            Task::Caption => serde_json::json!({"kind": "cap", "captions": captions(it)}),
            Task::Vqa => serde_json::json!({
                "kind": "vqa",
                "pairs": it.qa.iter().map(|q| serde_json::json!({
                    "question": q.question,
                    "answer": if q.answer { "yes" } else { "no" },
                })).collect::<Vec<_>>(),
            }),
            Task::Ve => serde_json::json!({
                "kind": "ve",
                "pairs": it.ve.iter().map(|h| serde_json::json!({
                    "hypothesis": h.hypothesis,
                    "label": h.label,
                })).collect::<Vec<_>>(),
            }),
        };
        let line = serde_json::json!({
            "id": it.id,
            "image": format!("images/{}.png", it.id),
            "task": task.as_str(),
            "split": it.split,
            "payload": payload,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

pub struct ToyScript;

fn is(c: &ChatCall<'_>, phrase: &str) -> bool {
    c.mentions(phrase)
}

fn qa(question: &str) -> &'static Qa {
    ITEMS
        .iter()
        .flat_map(|i| i.qa.iter())
        .find(|q| q.question == question)
        .expect("known question")
}

fn hyp(hypothesis: &str) -> &'static Hyp {
    ITEMS
        .iter()
        .flat_map(|i| i.ve.iter())
        .find(|h| h.hypothesis == hypothesis)
        .expect("known hypothesis")
}

fn style_word(s: Style) -> &'static str {
    match s {
        Style::CartoonDrawing => "cartoon",
        Style::PencilDrawing => "pencil-sketch",
        Style::OilPainting => "oil-painted",
        Style::RealPhoto => "photographic",
    }
}

impl Script for ToyScript {
    fn chat(&self, c: &ChatCall<'_>) -> Result<String, ProviderError> {
        let id = c.item.as_deref();
        let reply = if is(c, "replicate the given image") {
            let it = item(id.expect("item"));
            match it.id {
                "toy-01" => CHEF.to_string(),
                "toy-04" if c.attempt < 2 => String::new(),
                _ => format!("Create an image of {}.", it.subject),
            }
        } else if is(c, "change the style of the image") {
            let it = item(id.expect("item"));
            let style = c.style.expect("style");
            match (it.id, style) {
                ("toy-01", Style::CartoonDrawing) => CHEF_CARTOON.to_string(),
                _ => format!("Create {} image of {}.", style.with_article(), it.subject),
            }
        } else if is(c, "of the original image") {
            let it = item(id.expect("item"));
            let g = c.generated.expect("generated image");
            let reject = match it.id {
                "toy-02" => g == 0,
                "toy-03" => true,
                "toy-05" => c.style == Some(Style::CartoonDrawing) && g < 9,
                _ => false,
            };
            if reject {
                "No, the generated image does not keep the main objects of the original.".to_string()
            } else {
                "Yes, the generated image captures the essence of the original image.".to_string()
            }
        } else if is(c, "captions of the generated") {
            let it = item(id.expect("item"));
            let style = c.style.expect("style");
            if it.id == "toy-01" && style == Style::CartoonDrawing {
                CHEF_CAPTIONS_CARTOON.to_string()
            } else {
                let n = if it.id == "toy-04" && c.attempt == 0 { 4 } else { 5 };
                (1..=n)
                    .map(|k| format!("{k}. A {} rendering of {}, view {k}.", style_word(style), it.subject))
                    .collect::<Vec<_>>()
                    .join("\n")
            }
        } else if is(c, "question and answer pair") {
            qa(c.field("Question").expect("question")).verify.to_string()
        } else if is(c, "Please answer the question") {
            qa(c.field("Question").expect("question")).reannotate.to_string()
        } else if is(c, "paraphrase the question") {
            qa(c.field("Question").expect("question")).paraphrase.to_string()
        } else if is(c, "hypothesis pair and its label") {
            hyp(c.field("Hypothesis").expect("hypothesis")).verify.to_string()
        } else if is(c, "Does the given hypothesis entail") {
            hyp(c.field("Hypothesis").expect("hypothesis")).reannotate.to_string()
        } else if is(c, "paraphrase the hypothesis") {
            hyp(c.field("Hypothesis").expect("hypothesis")).paraphrase.to_string()
        } else {
            panic!("unscripted call: {}", c.text)
        };
        Ok(reply)
    }

    fn image(&self, c: &ImageCall<'_>) -> Result<(), ProviderError> {
        if c.item.as_deref() == Some("toy-06") && c.attempt == 0 {
            return Err(ProviderError::SafetyRejection(
                "your request was rejected by the safety system".into(),
            ));
        }
        Ok(())
    }
}

/// Writes images and the three source manifests into `dir`.
pub fn write_corpus(dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir.join("images"))?;
    for it in &ITEMS {
        std::fs::write(dir.join(format!("images/{}.png", it.id)), source_image(it.id))?;
    }
    for task in TASKS {
        std::fs::write(dir.join(format!("{}.jsonl", task.as_str())), manifest(task))?;
    }
    Ok(())
}

/// Runs all three tasks against the script, recording every exchange into
/// `session`. `work` receives the run directories.
pub fn record_session(corpus: &Path, session: &Path, work: &Path) -> Result<(), String> {
    let templates = TemplateSet::builtin();
    let scfg = StylizeConfig::default();
    let acfg = AnnotateConfig::default();
    let scripted = ScriptedBackend::new(ToyScript);
    for it in &ITEMS {
        scripted.register_source(it.id, &source_image(it.id));
    }
    let recorder = Arc::new(replay_record(session, scripted).map_err(|e| e.to_string())?);
    let provider = Provider::new(recorder.clone()).with_retry(RetryPolicy::none());
    let opts = RunOptions {
        jobs: 1,
        ..RunOptions::default()
    };
    for task in TASKS {
        let sources = read_sources(&corpus.join(format!("{}.jsonl", task.as_str()))).map_err(|e| e.to_string())?;
        let out = work.join(task.as_str());
        stylize_run(&provider, &templates, &scfg, &sources, &Style::TARGETS, &out, &opts).map_err(|e| e.to_string())?;
        annotate_run(&provider, &templates, &acfg, &sources, &out, &opts).map_err(|e| e.to_string())?;
    }
    recorder.save().map_err(|e| e.to_string())
}
