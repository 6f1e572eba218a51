//! Seeded synthetic corpora for tests, demos and the offline pipeline.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{LabelSet, LabeledNote, SectionSpan, SpanNote, OUTSIDE};

struct SectionTemplate {
    label: &'static str,
    header: &'static str,
    lines: &'static [&'static str],
}

const SECTIONS: &[SectionTemplate] = &[
    SectionTemplate {
        label: "chief-complaint",
        header: "CHIEF COMPLAINT:",
        lines: &[
            "Scheduled repeat cesarean section.",
            "Regular contractions since this morning.",
            "Leakage of fluid for two hours.",
            "Decreased fetal movement.",
        ],
    },
    SectionTemplate {
        label: "history-of-present-illness",
        header: "HISTORY OF PRESENT ILLNESS:",
        lines: &[
            "Patient is a <AGE> year old G2P1 at 39 weeks by early ultrasound.",
            "She reports contractions every five minutes.",
            "Denies vaginal bleeding, headache or visual changes.",
            "Pregnancy complicated by gestational diabetes on diet control.",
            "Desires trial of labor after cesarean.",
        ],
    },
    SectionTemplate {
        label: "past-medical-history",
        header: "PAST MEDICAL HISTORY:",
        lines: &["Asthma, well controlled.", "Hypothyroidism.", "No significant medical history."],
    },
    SectionTemplate {
        label: "past-surgical-history",
        header: "PAST SURGICAL HISTORY:",
        lines: &["Low transverse cesarean section in <DATE>.", "Appendectomy as a child.", "Wisdom teeth extraction."],
    },
    SectionTemplate {
        label: "obstetrical-history",
        header: "OB HISTORY:",
        lines: &["G1: term vaginal delivery, uncomplicated.", "G2: cesarean for arrest of dilation."],
    },
    SectionTemplate {
        label: "allergies",
        header: "ALLERGIES:",
        lines: &["No known drug allergies.", "Penicillin causes rash."],
    },
    SectionTemplate {
        label: "current-medications",
        header: "MEDICATIONS:",
        lines: &["Prenatal vitamins daily.", "Levothyroxine 50 mcg daily.", "Ferrous sulfate twice daily."],
    },
    SectionTemplate {
        label: "social-history",
        header: "SOCIAL HISTORY:",
        lines: &["Denies tobacco, alcohol or drug use.", "Lives with her partner.", "Works as a teacher."],
    },
    SectionTemplate {
        label: "family-history",
        header: "FAMILY HISTORY:",
        lines: &["Mother with chronic hypertension.", "No family history of bleeding disorders."],
    },
    SectionTemplate {
        label: "physical-examination",
        header: "PHYSICAL EXAMINATION:",
        lines: &[
            "Vitals: BP 118/72, HR 84, afebrile.",
            "Abdomen soft, gravid, nontender.",
            "Cervix 3 cm dilated, 80% effaced.",
            "Fetal heart tracing category I.",
        ],
    },
    SectionTemplate {
        label: "labs",
        header: "LABS:",
        lines: &["Hemoglobin 11.8, platelets 210.", "Blood type O positive.", "GBS negative."],
    },
    SectionTemplate {
        label: "assessment-and-plan",
        header: "ASSESSMENT AND PLAN:",
        lines: &[
            "Admit to labor and delivery.",
            "Continue expectant management.",
            "Proceed with repeat cesarean section.",
            "Epidural on request.",
        ],
    },
];

const PREAMBLES: &[&str] = &[
    "<HOSPITAL> Obstetrics Admission Note",
    "Labor and Delivery H&P",
    "Attending: <NAME>",
];

/// Span-annotated obstetric H&P notes using ONC label slugs. Each note has a
/// one-line preamble outside any section, then 5 to 9 sections in a fixed
/// clinical order, each a header line plus 1 to 3 content lines.
pub fn clinical_span_corpus(n_notes: usize, seed: u64) -> Vec<SpanNote> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_notes)
        .map(|k| {
            let mut text = String::new();
            text.push_str(PREAMBLES.choose(&mut rng).expect("non-empty"));
            text.push('\n');
            let n_sections = rng.random_range(5..=9);
            let mut picked: Vec<usize> = (0..SECTIONS.len()).collect();
            picked.shuffle(&mut rng);
            picked.truncate(n_sections);
            picked.sort_unstable();
            let mut spans = Vec::new();
            for &s in &picked {
                let section = &SECTIONS[s];
                let start = text.chars().count();
                text.push_str(section.header);
                let n_lines = rng.random_range(1..=3.min(section.lines.len()));
                for line in section.lines.choose_multiple(&mut rng, n_lines) {
                    text.push('\n');
                    text.push_str(line);
                }
                spans.push(SectionSpan {
                    start,
                    end: text.chars().count(),
                    label: section.label.to_string(),
                });
                text.push('\n');
            }
            SpanNote {
                note_id: format!("synth-{k:03}"),
                category: Some("h-and-p".to_string()),
                text: text.trim_end().to_string(),
                spans,
            }
        })
        .collect()
}

/// Labels of [`transition_corpus`].
pub fn transition_label_set() -> LabelSet {
    let labels = [OUTSIDE, "alpha", "bravo", "charlie", "delta"];
    LabelSet::new("transition", labels.iter().map(|s| s.to_string()).collect()).expect("valid slugs")
}

const SHARED_WORDS: &[&str] = &["amber", "birch", "cedar", "dune", "ember", "fjord", "grove", "heath"];

/// Notes made of line pairs: `alpha` is always followed by `bravo` and
/// `charlie` by `delta`. `alpha` and `charlie` lines are drawn from the same
/// distribution, so only the next line tells them apart.
pub fn transition_corpus(n_notes: usize, seed: u64) -> Vec<LabeledNote> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let word = |rng: &mut ChaCha8Rng| *SHARED_WORDS.choose(rng).expect("non-empty");
    (0..n_notes)
        .map(|k| {
            let pairs = rng.random_range(3..=7);
            let mut lines = Vec::with_capacity(2 * pairs);
            let mut labels = Vec::with_capacity(2 * pairs);
            for _ in 0..pairs {
                let first = format!("item {} {}", word(&mut rng), word(&mut rng));
                let (head, tail, marker) = if rng.random_bool(0.5) {
                    ("alpha", "bravo", "bravo")
                } else {
                    ("charlie", "delta", "delta")
                };
                lines.push(first);
                labels.push(head.to_string());
                lines.push(format!("{marker} {}", word(&mut rng)));
                labels.push(tail.to_string());
            }
            LabeledNote::new(format!("chain-{k:03}"), lines, labels).expect("aligned")
        })
        .collect()
}
