//! Frozen-output checks. Set `SECTIONSEG_UPDATE_GOLDEN=1` to rewrite the
//! files after an intended change, then review the diff.

mod common;

use std::path::PathBuf;

use sectionseg::corpus::{read_labeled_notes, read_notes, read_span_notes, split_note_level, LabelSet};
use sectionseg::encoders::embedding_request_body;
use sectionseg::llm::{build_prompt, chat_request_body, Family};

use common::fixture;

fn check_golden(name: &str, actual: &str) {
    let path: PathBuf = fixture(name);
    if std::env::var_os("SECTIONSEG_UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{} differs from the rendered output:\n{actual}", path.display());
}

#[test]
fn span_fixture_projects_to_golden_lines() {
    let spans = read_span_notes(fixture("spans.jsonl")).unwrap();
    let golden = read_labeled_notes(fixture("lines.golden.jsonl")).unwrap();
    let labels = LabelSet::onc();
    let projected: Vec<_> = spans.iter().map(|s| s.to_labeled(&labels).unwrap()).collect();
    assert_eq!(projected, golden);
}

#[test]
fn rendered_prompts_match_golden_files() {
    let note = &read_notes(fixture("lines.golden.jsonl")).unwrap()[0];
    for family in Family::ALL {
        let bundle = build_prompt(note, &LabelSet::onc(), family).unwrap();
        check_golden(&format!("prompts/{family}.txt"), &bundle.render_template());
    }
}

#[test]
fn chat_request_bodies_match_golden_files() {
    let note = &read_notes(fixture("lines.golden.jsonl")).unwrap()[0];
    for family in Family::ALL {
        let bundle = build_prompt(note, &LabelSet::onc(), family).unwrap();
        let body = chat_request_body("stub-model", &bundle.messages, 0.0, bundle.max_output_tokens());
        check_golden(&format!("requests/{family}.json"), &body);
    }
}

#[test]
fn embedding_request_body_matches_golden_file() {
    let note = &read_notes(fixture("lines.golden.jsonl")).unwrap()[1];
    check_golden("requests/embeddings.json", &embedding_request_body("embed-model", &note.lines));
}

#[test]
fn note_split_matches_golden_ids() {
    let notes = read_labeled_notes(fixture("lines.golden.jsonl")).unwrap();
    let (train, test) = split_note_level(&notes, 0.6, 42).unwrap();
    let ids = |ns: &[sectionseg::LabeledNote]| ns.iter().map(|n| n.note_id.clone()).collect::<Vec<_>>().join(",");
    check_golden("split.golden.txt", &format!("train: {}\ntest: {}\n", ids(&train), ids(&test)));
}
